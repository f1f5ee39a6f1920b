//! Directory bundles: `manifest.json`, one vocabulary table per thread and
//! one raw little-endian f64 file per parameter array.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MetaField, Model, ModelConfig};
use crate::pipeline::{Classifier, Featurizer, LabelSet, MetaInput, ThreadInput};
use crate::tensor::{ParamStore, Tensor};
use crate::text::{TokenMode, Vocab};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
const PARAM_DIR: &str = "params";
const VOCAB_DIR: &str = "vocab";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ThreadEntry {
    mode: TokenMode,
    length: usize,
    vocab_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MetaEntry {
    field: MetaField,
    length: usize,
    vocab_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    labels: LabelSet,
    threads: Vec<ThreadEntry>,
    meta: Vec<MetaEntry>,
    arrays: Vec<ArrayEntry>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn array_file(name: &str) -> String {
    format!("{PARAM_DIR}/{name}.bin")
}

pub fn save(dir: &Path, clf: &Classifier) -> Result<()> {
    fs::create_dir_all(dir.join(PARAM_DIR))?;
    fs::create_dir_all(dir.join(VOCAB_DIR))?;
    let mut threads = Vec::new();
    for (t, input) in clf.featurizer.threads.iter().enumerate() {
        let file = format!("{VOCAB_DIR}/thread{t}.tsv");
        fs::write(dir.join(&file), input.vocab.to_table())?;
        threads.push(ThreadEntry { mode: input.mode, length: input.length, vocab_file: file });
    }
    let mut meta = Vec::new();
    for (m, input) in clf.featurizer.meta.iter().enumerate() {
        let file = format!("{VOCAB_DIR}/meta{m}.tsv");
        fs::write(dir.join(&file), input.vocab.to_table())?;
        meta.push(MetaEntry { field: input.field, length: input.length, vocab_file: file });
    }
    let mut arrays = Vec::new();
    for (_, name, t) in clf.model.params().iter() {
        let file = array_file(name);
        let bytes: Vec<u8> = t.data().iter().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(dir.join(&file), bytes)?;
        arrays.push(ArrayEntry { name: name.to_string(), shape: t.shape().to_vec(), file });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: clf.model.config().clone(),
        labels: clf.labels.clone(),
        threads,
        meta,
        arrays,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn read_array(dir: &Path, entry: &ArrayEntry) -> Result<Tensor> {
    let bytes = fs::read(dir.join(&entry.file)).map_err(|e| bad(format!("{}: {e}", entry.file)))?;
    let n: usize = entry.shape.iter().product();
    if bytes.len() != n * 8 {
        return Err(bad(format!("{} holds {} bytes, shape {:?} needs {}", entry.file, bytes.len(), entry.shape, n * 8)));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Tensor::new(entry.shape.clone(), data)
}

fn read_vocab(dir: &Path, file: &str) -> Result<Vocab> {
    let text = fs::read_to_string(dir.join(file)).map_err(|e| bad(format!("{file}: {e}")))?;
    Vocab::from_table(&text)
}

pub fn load(dir: &Path) -> Result<Classifier> {
    let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| bad(format!("{MANIFEST}: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(format!("{MANIFEST}: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", manifest.format_version)));
    }
    // every array on disk must be listed
    let listed: BTreeSet<&str> = manifest.arrays.iter().map(|a| a.file.as_str()).collect();
    if let Ok(entries) = fs::read_dir(dir.join(PARAM_DIR)) {
        for e in entries {
            let name = format!("{PARAM_DIR}/{}", e?.file_name().to_string_lossy());
            if !listed.contains(name.as_str()) {
                return Err(bad(format!("array {name} is not in the manifest")));
            }
        }
    }
    let mut threads = Vec::new();
    for t in &manifest.threads {
        threads.push(ThreadInput { mode: t.mode, length: t.length, vocab: read_vocab(dir, &t.vocab_file)? });
    }
    let mut meta = Vec::new();
    for m in &manifest.meta {
        meta.push(MetaInput { field: m.field, length: m.length, vocab: read_vocab(dir, &m.vocab_file)? });
    }
    let featurizer = Featurizer { threads, meta };
    let mut params = ParamStore::new();
    for a in &manifest.arrays {
        params.insert(a.name.clone(), read_array(dir, a)?)?;
    }
    let model = Model::from_params(manifest.config, &featurizer.vocab_sizes(), &featurizer.meta_vocab_sizes(), params)?;
    Ok(Classifier { featurizer, labels: manifest.labels, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ItemRecord;
    use crate::model::{Framework, ThreadSpec};
    use crate::par::Exec;
    use crate::trainer::TrainConfig;

    fn trained() -> (Classifier, Vec<ItemRecord>) {
        let items: Vec<ItemRecord> = (0..12)
            .map(|i| ItemRecord::new(format!("i{i}"), format!("word{} thing", i % 3), vec![format!("G{}", i % 3)]))
            .collect();
        let cfg = ModelConfig::new(Framework::Mohe2, vec![ThreadSpec::new(TokenMode::Word, 2, 3, 4)], 0);
        let tc = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::default() };
        (Classifier::fit(cfg, &items, None, &tc).unwrap().0, items)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (clf, items) = trained();
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &clf).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(back.model.params(), clf.model.params());
        assert_eq!(back.featurizer, clf.featurizer);
        let a = clf.distributions(&items, Exec::Sequential).unwrap();
        let b = back.distributions(&items, Exec::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_unlisted_and_misshapen_arrays() {
        let (clf, _) = trained();
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &clf).unwrap();
        fs::write(dir.path().join("params/stray.bin"), [0u8; 8]).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Checkpoint(_))));
        fs::remove_file(dir.path().join("params/stray.bin")).unwrap();

        let file = dir.path().join(array_file("thread0.conv.bias"));
        fs::write(&file, [0u8; 16]).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_missing_array_file() {
        let (clf, _) = trained();
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &clf).unwrap();
        fs::remove_file(dir.path().join(array_file("aggregator.clf.bias"))).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Checkpoint(_))));
    }
}
