//! Items to features, labels to indices, and a fit/predict wrapper.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{path_label, ItemRecord};
use crate::error::{config, input, Result};
use crate::model::{argmax, Features, MetaField, Model, ModelConfig};
use crate::par::{self, Exec};
use crate::text::{encode, prepare_description, tokenize, TokenMode, Vocab};
use crate::trainer::{train, Example, TrainConfig, TrainHistory};

/// Tokens fed to the shared shop/tag metadata thread.
pub fn shop_tag_tokens(item: &ItemRecord) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(shop) = &item.shop_id {
        out.push(format!("shop:{shop}"));
    }
    for tag in item.tag_ids.iter().flatten() {
        out.push(format!("tag:{tag}"));
    }
    out
}

pub fn description_tokens(item: &ItemRecord) -> Vec<String> {
    item.description_tokens.as_deref().map(prepare_description).unwrap_or_default()
}

fn meta_tokens(field: MetaField, item: &ItemRecord) -> Vec<String> {
    match field {
        MetaField::ShopTag => shop_tag_tokens(item),
        MetaField::Description => description_tokens(item),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadInput {
    pub mode: TokenMode,
    pub length: usize,
    pub vocab: Vocab,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaInput {
    pub field: MetaField,
    pub length: usize,
    pub vocab: Vocab,
}

/// Per-thread vocabularies and lengths; turns items into [`Features`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Featurizer {
    pub threads: Vec<ThreadInput>,
    pub meta: Vec<MetaInput>,
}

impl Featurizer {
    /// Builds every vocabulary from `items` (the training split).
    pub fn fit(cfg: &ModelConfig, items: &[ItemRecord]) -> Result<Featurizer> {
        let mut threads = Vec::new();
        for spec in cfg.effective_threads() {
            let corpus = items.iter().map(|it| tokenize(&it.title, spec.mode));
            let vocab = Vocab::build(corpus, cfg.vocab_min_freq, cfg.vocab_max_size)?;
            threads.push(ThreadInput { mode: spec.mode, length: spec.input_length, vocab });
        }
        let mut meta = Vec::new();
        for spec in &cfg.meta_threads {
            let corpus = items.iter().map(|it| meta_tokens(spec.field, it));
            let vocab = Vocab::build(corpus, cfg.vocab_min_freq, cfg.vocab_max_size)?;
            meta.push(MetaInput { field: spec.field, length: spec.input_length, vocab });
        }
        Ok(Featurizer { threads, meta })
    }

    pub fn vocab_sizes(&self) -> Vec<usize> {
        self.threads.iter().map(|t| t.vocab.len()).collect()
    }

    pub fn meta_vocab_sizes(&self) -> Vec<usize> {
        self.meta.iter().map(|m| m.vocab.len()).collect()
    }

    pub fn features(&self, item: &ItemRecord) -> Result<Features> {
        let threads = self
            .threads
            .iter()
            .map(|t| encode(&tokenize(&item.title, t.mode), &t.vocab, t.length).map(|e| e.ids))
            .collect::<Result<_>>()?;
        let meta = self
            .meta
            .iter()
            .map(|m| encode(&meta_tokens(m.field, item), &m.vocab, m.length).map(|e| e.ids))
            .collect::<Result<_>>()?;
        Ok(Features { threads, meta })
    }
}

/// Sorted class names; a class is a genre path truncated to the label level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub level: Option<usize>,
    pub names: Vec<String>,
}

impl LabelSet {
    pub fn fit(items: &[ItemRecord], level: Option<usize>) -> LabelSet {
        let names: BTreeSet<String> = items.iter().map(|it| path_label(&it.genre_path, level)).collect();
        LabelSet { level, names: names.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn label_of(&self, item: &ItemRecord) -> String {
        path_label(&item.genre_path, self.level)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn index_of(&self, item: &ItemRecord) -> Option<usize> {
        self.index(&self.label_of(item))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub class: String,
    pub probability: f64,
}

/// A trained model together with the vocabularies and labels it needs.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub featurizer: Featurizer,
    pub labels: LabelSet,
    pub model: Model,
}

impl Classifier {
    /// Builds vocabularies and labels from `train_items`, then trains.
    /// Held-out items whose class never occurs in training are left out of
    /// the per-epoch F1.
    pub fn fit(
        mut cfg: ModelConfig,
        train_items: &[ItemRecord],
        heldout: Option<&[ItemRecord]>,
        tc: &TrainConfig,
    ) -> Result<(Classifier, TrainHistory)> {
        if train_items.is_empty() {
            return input("no training items");
        }
        let labels = LabelSet::fit(train_items, cfg.label_level);
        if cfg.num_classes == 0 {
            cfg.num_classes = labels.len();
        } else if cfg.num_classes != labels.len() {
            return config(format!(
                "config declares {} classes, training data has {}",
                cfg.num_classes,
                labels.len()
            ));
        }
        cfg.validate()?;
        let featurizer = Featurizer::fit(&cfg, train_items)?;
        let model = Model::new(cfg, &featurizer.vocab_sizes(), &featurizer.meta_vocab_sizes(), tc.seed)?;
        let mut clf = Classifier { featurizer, labels, model };
        let train_set = clf.examples(train_items, tc.exec)?;
        let held = heldout.map(|h| clf.examples(h, tc.exec)).transpose()?;
        let history = train(&mut clf.model, &train_set, held.as_deref(), tc)?;
        Ok((clf, history))
    }

    /// Labelled examples; items with a class unknown to the model are dropped.
    pub fn examples(&self, items: &[ItemRecord], exec: Exec) -> Result<Vec<Example>> {
        let encoded = par::map(exec, items, |_, it| -> Result<Option<Example>> {
            let Some(label) = self.labels.index_of(it) else { return Ok(None) };
            Ok(Some(Example { features: self.featurizer.features(it)?, label }))
        });
        let mut out = Vec::with_capacity(items.len());
        for e in encoded {
            if let Some(e) = e? {
                out.push(e);
            }
        }
        Ok(out)
    }

    pub fn distributions(&self, items: &[ItemRecord], exec: Exec) -> Result<Vec<Vec<f64>>> {
        par::map(exec, items, |_, it| self.model.predict(&self.featurizer.features(it)?)).into_iter().collect()
    }

    pub fn predict(&self, items: &[ItemRecord], exec: Exec) -> Result<Vec<Prediction>> {
        let dists = self.distributions(items, exec)?;
        Ok(items
            .iter()
            .zip(dists)
            .map(|(it, p)| {
                let c = argmax(&p);
                Prediction { id: it.id.clone(), class: self.labels.name(c).to_string(), probability: p[c] }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Framework, MetaThreadSpec, ThreadSpec};

    fn item(id: &str, title: &str, path: &[&str]) -> ItemRecord {
        ItemRecord::new(id, title, path.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn labels_are_sorted_and_truncated() {
        let items = [item("1", "a", &["B", "x"]), item("2", "b", &["A", "y"]), item("3", "c", &["B", "z"])];
        let l = LabelSet::fit(&items, Some(1));
        assert_eq!(l.names, ["A", "B"]);
        assert_eq!(l.index_of(&items[2]), Some(1));
        assert_eq!(LabelSet::fit(&items, None).len(), 3);
    }

    #[test]
    fn vocab_comes_from_training_items_only() {
        let mut cfg = ModelConfig::new(Framework::Ensemble, vec![ThreadSpec::new(TokenMode::Word, 2, 3, 4)], 2);
        cfg.meta_threads = vec![MetaThreadSpec::shop_tag(2)];
        let mut it = item("1", "red shoe", &["A"]);
        it.shop_id = Some("s9".into());
        it.tag_ids = Some(vec!["t1".into()]);
        let f = Featurizer::fit(&cfg, std::slice::from_ref(&it)).unwrap();
        let unseen = item("2", "blue shoe", &["A"]);
        let x = f.features(&unseen).unwrap();
        assert_eq!(x.threads[0], vec![1, f.threads[0].vocab.index_of("shoe"), 0, 0]);
        assert_eq!(x.meta[0], vec![0; 16]);
        assert_eq!(f.features(&it).unwrap().meta[0][..3], [2, 3, 0]);
    }
}
