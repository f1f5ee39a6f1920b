use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::text::{TokenMode, DESCRIPTION_MAX_TOKENS};

/// Which heads exist and how they are trained and combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    /// Independent threads, prediction averages their heads.
    Ensemble,
    /// Soft-gated experts sharing one input.
    Moe,
    /// Thread encoders feed a single fusion classifier.
    Aggregator,
    Mohe1,
    /// MoHE-1 plus a tanh mini-aggregator per thread.
    Mohe2,
}

impl Framework {
    pub const ALL: [Framework; 5] =
        [Framework::Ensemble, Framework::Moe, Framework::Aggregator, Framework::Mohe1, Framework::Mohe2];

    pub fn name(self) -> &'static str {
        match self {
            Framework::Ensemble => "ensemble",
            Framework::Moe => "moe",
            Framework::Aggregator => "aggregator",
            Framework::Mohe1 => "mohe1",
            Framework::Mohe2 => "mohe2",
        }
    }

    pub(crate) fn has_thread_classifiers(self) -> bool {
        self != Framework::Aggregator
    }

    pub(crate) fn has_aggregator(self) -> bool {
        matches!(self, Framework::Aggregator | Framework::Mohe1 | Framework::Mohe2)
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Framework::ALL.into_iter().find(|f| f.name() == key).ok_or_else(|| {
            let names: Vec<_> = Framework::ALL.iter().map(|f| f.name()).collect();
            Error::Usage(format!("unknown framework {s:?}; valid names: {}", names.join(", ")))
        })
    }
}

/// One estimator thread: tokenisation plus CNN encoder shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreadSpec {
    pub mode: TokenMode,
    pub kernel_size: usize,
    pub filters: usize,
    pub input_length: usize,
    /// Defaults to [`embedding_dim_rule`] of the class count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
}

impl ThreadSpec {
    pub fn new(mode: TokenMode, kernel_size: usize, filters: usize, input_length: usize) -> Self {
        ThreadSpec { mode, kernel_size, filters, input_length, embed_dim: None }
    }
}

/// Kernel-size column of the baseline thread table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Catalog {
    /// Japanese marketplace catalog: char kernels 5/15/25.
    Ichiba,
    /// English data-challenge catalog: char kernels 5/10/15.
    Sigir,
}

/// The seven baseline threads (word 3/4/5, char ×3, token bigram 3).
pub fn baseline_threads(catalog: Catalog) -> Vec<ThreadSpec> {
    let char_kernels = match catalog {
        Catalog::Ichiba => [5, 15, 25],
        Catalog::Sigir => [5, 10, 15],
    };
    vec![
        ThreadSpec::new(TokenMode::Word, 3, 100, 60),
        ThreadSpec::new(TokenMode::Word, 4, 100, 60),
        ThreadSpec::new(TokenMode::Word, 5, 100, 60),
        ThreadSpec::new(TokenMode::Char, char_kernels[0], 300, 100),
        ThreadSpec::new(TokenMode::Char, char_kernels[1], 300, 100),
        ThreadSpec::new(TokenMode::Char, char_kernels[2], 300, 100),
        ThreadSpec::new(TokenMode::Bigram, 3, 100, 60),
    ]
}

/// Same seven-thread layout scaled down for short synthetic titles on a
/// laptop: 24 filters, 16 word / 48 char positions, char kernels 5/10/15.
pub fn desk_threads() -> Vec<ThreadSpec> {
    vec![
        ThreadSpec::new(TokenMode::Word, 3, 24, 16),
        ThreadSpec::new(TokenMode::Word, 4, 24, 16),
        ThreadSpec::new(TokenMode::Word, 5, 24, 16),
        ThreadSpec::new(TokenMode::Char, 5, 24, 48),
        ThreadSpec::new(TokenMode::Char, 10, 24, 48),
        ThreadSpec::new(TokenMode::Char, 15, 24, 48),
        ThreadSpec::new(TokenMode::Bigram, 3, 24, 16),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaField {
    /// `shop_id` and `tag_ids` share one thread.
    ShopTag,
    /// Part-of-speech filtered description tokens.
    Description,
}

/// Metadata thread; the kernel width is always one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaThreadSpec {
    pub field: MetaField,
    pub filters: usize,
    pub input_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
}

impl MetaThreadSpec {
    pub fn shop_tag(filters: usize) -> Self {
        MetaThreadSpec { field: MetaField::ShopTag, filters, input_length: 16, embed_dim: None }
    }

    pub fn description(filters: usize) -> Self {
        MetaThreadSpec {
            field: MetaField::Description,
            filters,
            input_length: DESCRIPTION_MAX_TOKENS,
            embed_dim: None,
        }
    }
}

/// Where metadata encodings are injected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MetaMethod {
    /// Appended to the input of every classifier, aggregator included.
    #[default]
    Method1,
    /// Appended to the mini-aggregator inputs only (MoHE-2).
    Method2,
}

impl TryFrom<u8> for MetaMethod {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(MetaMethod::Method1),
            2 => Ok(MetaMethod::Method2),
            _ => Err(format!("meta_method must be 1 or 2, got {v}")),
        }
    }
}

impl From<MetaMethod> for u8 {
    fn from(m: MetaMethod) -> u8 {
        match m {
            MetaMethod::Method1 => 1,
            MetaMethod::Method2 => 2,
        }
    }
}

fn default_dropout() -> f64 {
    0.1
}

fn default_eps() -> f64 {
    1e-5
}

fn default_min_freq() -> usize {
    1
}

fn default_max_vocab() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub framework: Framework,
    pub threads: Vec<ThreadSpec>,
    #[serde(default)]
    pub meta_threads: Vec<MetaThreadSpec>,
    #[serde(default)]
    pub meta_method: MetaMethod,
    /// T+1 loss weights, aggregator last. Equal weights when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Filled in from the training labels when zero.
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    /// Class = genre path truncated to this many levels; full path when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_level: Option<usize>,
    #[serde(default = "default_min_freq")]
    pub vocab_min_freq: usize,
    #[serde(default = "default_max_vocab")]
    pub vocab_max_size: usize,
}

impl ModelConfig {
    pub fn new(framework: Framework, threads: Vec<ThreadSpec>, num_classes: usize) -> Self {
        ModelConfig {
            framework,
            threads,
            meta_threads: Vec::new(),
            meta_method: MetaMethod::Method1,
            gammas: None,
            dropout: default_dropout(),
            num_classes,
            layer_norm_eps: default_eps(),
            label_level: None,
            vocab_min_freq: default_min_freq(),
            vocab_max_size: default_max_vocab(),
        }
    }

    /// Seven baseline threads for the given catalog.
    pub fn baseline(framework: Framework, catalog: Catalog, num_classes: usize) -> Self {
        ModelConfig::new(framework, baseline_threads(catalog), num_classes)
    }

    /// Threads actually instantiated. Experts of a mixture all copy the
    /// first thread's configuration.
    pub fn effective_threads(&self) -> Vec<ThreadSpec> {
        match self.framework {
            Framework::Moe => vec![self.threads[0].clone(); self.threads.len()],
            _ => self.threads.clone(),
        }
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    pub fn embed_dim(&self, spec: &ThreadSpec) -> Result<usize> {
        match spec.embed_dim {
            Some(d) if d >= 1 => Ok(d),
            Some(_) => config("embed_dim must be at least 1"),
            None => embedding_dim_rule(self.num_classes),
        }
    }

    pub fn meta_embed_dim(&self, spec: &MetaThreadSpec) -> Result<usize> {
        match spec.embed_dim {
            Some(d) if d >= 1 => Ok(d),
            Some(_) => config("embed_dim must be at least 1"),
            None => embedding_dim_rule(self.num_classes),
        }
    }

    /// Loss weights per head (threads first, aggregator last) after the
    /// framework's adjustments. `None` for the mixture, which is trained
    /// through its gated output only.
    pub fn effective_gammas(&self) -> Option<Vec<f64>> {
        let t = self.threads.len();
        match self.framework {
            Framework::Moe => None,
            Framework::Ensemble => {
                let mut g = vec![1.0 / t as f64; t];
                g.push(0.0);
                Some(g)
            }
            Framework::Aggregator => {
                let mut g = vec![0.0; t];
                g.push(1.0);
                Some(g)
            }
            Framework::Mohe1 | Framework::Mohe2 => Some(
                self.gammas
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / (t + 1) as f64; t + 1]),
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads.is_empty() {
            return config("at least one estimator thread is required");
        }
        for (i, t) in self.threads.iter().enumerate() {
            if t.kernel_size == 0 || t.filters == 0 || t.input_length == 0 {
                return config(format!("thread {i}: kernel size, filters and input length must be positive"));
            }
        }
        for (i, m) in self.meta_threads.iter().enumerate() {
            if m.filters == 0 || m.input_length == 0 {
                return config(format!("meta thread {i}: filters and input length must be positive"));
            }
        }
        if self.num_classes < 2 {
            return config(format!("need at least two classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return config(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.layer_norm_eps < 0.0 {
            return config("layer_norm_eps must be non-negative");
        }
        if self.meta_method == MetaMethod::Method2 && self.framework != Framework::Mohe2 && !self.meta_threads.is_empty() {
            return config("meta_method 2 feeds mini-aggregators and requires framework mohe2");
        }
        if let Some(g) = &self.gammas {
            if g.len() != self.threads.len() + 1 {
                return config(format!("expected {} gammas, got {}", self.threads.len() + 1, g.len()));
            }
            check_gammas(g)?;
        }
        if self.vocab_min_freq == 0 || self.vocab_max_size < 2 {
            return config("vocab_min_freq must be >= 1 and vocab_max_size >= 2");
        }
        if self.label_level == Some(0) {
            return config("label_level must be at least 1");
        }
        for t in &self.threads {
            self.embed_dim(t)?;
        }
        Ok(())
    }
}

pub(crate) fn check_gammas(g: &[f64]) -> Result<()> {
    if g.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return config("gammas must be finite and non-negative");
    }
    let total: f64 = g.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return config(format!("gammas must sum to 1, got {total}"));
    }
    Ok(())
}

/// Embedding width from the class count: `min(⌈C/2⌉, 100)`.
pub fn embedding_dim_rule(num_classes: usize) -> Result<usize> {
    if num_classes == 0 {
        return config("class count must be at least 1");
    }
    Ok(num_classes.div_ceil(2).min(100))
}
