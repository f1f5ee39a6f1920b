//! Seeded mini-batch training with Adam.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};
use crate::metrics::compute_f1;
use crate::model::{argmax, Features, Model};
use crate::par::{self, mix_seed, Exec};
use crate::tensor::{adam_step, AdamConfig, AdamState, Gradients, Mode, Tape};

/// Items per partial sum. Fixed so the reduction tree is the same whether
/// chunks run in parallel or not.
const REDUCE_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub shuffle: bool,
    /// Evaluate on the held-out split every this many epochs (0 = never).
    pub eval_every: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            seed: 0,
            adam: AdamConfig::default(),
            shuffle: true,
            eval_every: 1,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return config("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return config("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Features,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub micro_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.epochs {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<TrainHistory> {
        let mut epochs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(line)
                .map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
            epochs.push(rec);
        }
        Ok(TrainHistory { epochs })
    }
}

/// Splits `0..n` into consecutive batches. With `shuffle` the order is a
/// Fisher–Yates permutation drawn from `ChaCha8Rng::seed_from_u64(seed)`:
/// for `i` from `n-1` down to 1, swap `i` with `j` uniform in `0..=i`.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, shuffle: bool) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Dropout seed for one item in one epoch.
pub fn item_seed(seed: u64, epoch: usize, item: usize) -> u64 {
    mix_seed(mix_seed(seed, epoch as u64 + 1), item as u64)
}

/// Mean loss and mean gradient over a batch. Per-item passes may run in
/// parallel; partial sums are always formed over the same fixed chunks and
/// combined in batch order.
pub fn batch_gradients(
    model: &Model,
    data: &[Example],
    batch: &[usize],
    seed: u64,
    epoch: usize,
    exec: Exec,
) -> Result<(f64, Gradients)> {
    let chunks: Vec<&[usize]> = batch.chunks(REDUCE_CHUNK).collect();
    let partials = par::map(exec, &chunks, |_, chunk| -> Result<(f64, Gradients)> {
        let mut loss = 0.0;
        let mut grads = Gradients::zeros_like(model.params());
        for &i in chunk.iter() {
            let ex = &data[i];
            let mut tape = Tape::new(model.params());
            let heads = model.forward(&mut tape, &ex.features, Mode::Train, item_seed(seed, epoch, i))?;
            let l = model.loss(&mut tape, &heads, ex.label)?;
            loss += tape.value(l).data()[0];
            grads.accumulate(&tape.backward(l)?);
        }
        Ok((loss, grads))
    });
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(model.params());
    for part in partials {
        let (l, g) = part?;
        loss += l;
        grads.accumulate(&g);
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite batch loss at epoch {epoch}")));
    }
    Ok((loss, grads))
}

/// Predicted classes for a set of examples (infer mode).
pub fn predict_classes(model: &Model, data: &[Example], exec: Exec) -> Result<Vec<usize>> {
    par::map(exec, data, |_, ex| model.predict(&ex.features).map(|p| argmax(&p)))
        .into_iter()
        .collect()
}

/// Trains `model` in place. Batch loss is the mean per-item loss; the
/// optimizer runs once per batch.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    heldout: Option<&[Example]>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() {
        return input("training set is empty");
    }
    let classes = model.config().num_classes;
    if let Some(bad) = train_set.iter().find(|e| e.label >= classes) {
        return input(format!("label {} outside {classes} classes", bad.label));
    }
    let mut state = AdamState::new(model.params());
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let batches = make_batches(train_set.len(), cfg.batch_size, mix_seed(cfg.seed, epoch as u64), cfg.shuffle);
        let mut total = 0.0;
        for batch in &batches {
            let (loss, grads) = batch_gradients(model, train_set, batch, cfg.seed, epoch, cfg.exec)?;
            total += loss * batch.len() as f64;
            adam_step(model.params_mut(), &grads, &mut state, &cfg.adam)?;
        }
        let mut rec = EpochRecord { epoch: epoch + 1, mean_loss: total / train_set.len() as f64, macro_f1: None, micro_f1: None };
        if let Some(eval) = heldout.filter(|h| !h.is_empty()) {
            if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
                let pred = predict_classes(model, eval, cfg.exec)?;
                let gold: Vec<usize> = eval.iter().map(|e| e.label).collect();
                let report = compute_f1(&pred, &gold, classes)?;
                rec.macro_f1 = Some(report.macro_f1);
                rec.micro_f1 = Some(report.micro_f1);
            }
        }
        history.epochs.push(rec);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Framework, ModelConfig, ThreadSpec};
    use crate::text::TokenMode;

    #[test]
    fn batch_shapes() {
        let sizes: Vec<usize> = make_batches(5, 2, 0, false).iter().map(Vec::len).collect();
        assert_eq!(sizes, [2, 2, 1]);
        assert_eq!(make_batches(4, 10, 9, false), vec![vec![0, 1, 2, 3]]);
        assert!(make_batches(0, 3, 0, true).is_empty());
    }

    #[test]
    fn shuffled_batches_are_a_permutation() {
        let mut all: Vec<usize> = make_batches(37, 5, 11, true).concat();
        assert_ne!(all, (0..37).collect::<Vec<_>>());
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    fn tiny() -> (Model, Vec<Example>) {
        let thread = ThreadSpec { mode: TokenMode::Word, kernel_size: 2, filters: 4, input_length: 4, embed_dim: None };
        let cfg = ModelConfig::new(Framework::Mohe2, vec![thread.clone(), thread], 3);
        let model = Model::new(cfg, &[8, 8], &[], 5).unwrap();
        let data: Vec<Example> = (0..12)
            .map(|i| {
                let c = i % 3;
                let seq = vec![2 + 2 * c, 3 + 2 * c, 0, 0];
                Example { features: Features { threads: vec![seq.clone(), seq], meta: vec![] }, label: c }
            })
            .collect();
        (model, data)
    }

    #[test]
    fn rejects_bad_config_and_empty_data() {
        let (mut model, data) = tiny();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(train(&mut model, &data, None, &cfg), Err(Error::Config(_))));
        let cfg = TrainConfig::default();
        assert!(matches!(train(&mut model, &[], None, &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn same_seed_same_parameters_in_both_exec_modes() {
        let (mut a, data) = tiny();
        let (mut b, _) = tiny();
        let cfg = TrainConfig { epochs: 3, batch_size: 5, seed: 3, exec: Exec::Sequential, ..TrainConfig::default() };
        let ha = train(&mut a, &data, Some(&data), &cfg).unwrap();
        let hb = train(&mut b, &data, Some(&data), &TrainConfig { exec: Exec::Parallel, ..cfg }).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params(), b.params());
        assert_eq!(ha.epochs.len(), 3);
    }

    #[test]
    fn one_small_step_lowers_fixed_batch_loss() {
        let (mut model, data) = tiny();
        let batch: Vec<usize> = (0..data.len()).collect();
        // infer-mode loss avoids dropout noise in the comparison
        let loss_of = |m: &Model| -> f64 {
            batch
                .iter()
                .map(|&i| {
                    let mut tape = Tape::new(m.params());
                    let h = m.forward(&mut tape, &data[i].features, Mode::Infer, 0).unwrap();
                    let l = m.loss(&mut tape, &h, data[i].label).unwrap();
                    tape.value(l).data()[0]
                })
                .sum::<f64>()
        };
        let mut zero_drop = model.config().clone();
        zero_drop.dropout = 0.0;
        model = Model::from_params(zero_drop, model.vocab_sizes(), model.meta_vocab_sizes(), model.params().clone()).unwrap();
        let before = loss_of(&model);
        let (_, grads) = batch_gradients(&model, &data, &batch, 0, 0, Exec::Sequential).unwrap();
        let mut state = AdamState::new(model.params());
        let adam = AdamConfig { lr: 1e-4, ..AdamConfig::default() };
        adam_step(model.params_mut(), &grads, &mut state, &adam).unwrap();
        assert!(loss_of(&model) < before);
    }

    #[test]
    fn history_round_trips_through_jsonl() {
        let h = TrainHistory {
            epochs: vec![
                EpochRecord { epoch: 1, mean_loss: 1.5, macro_f1: None, micro_f1: None },
                EpochRecord { epoch: 2, mean_loss: 0.5, macro_f1: Some(0.9), micro_f1: Some(0.95) },
            ],
        };
        let mut buf = Vec::new();
        h.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(TrainHistory::read_jsonl(&text).unwrap(), h);
    }
}
