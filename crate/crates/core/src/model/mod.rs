//! Estimator threads, the aggregator, MoHE-1/2, metadata threads and the
//! ensemble / aggregator-only / mixture-of-experts baselines.

mod config;

pub use config::{
    baseline_threads, desk_threads, embedding_dim_rule, Catalog, Framework, MetaField, MetaMethod, MetaThreadSpec,
    ModelConfig, ThreadSpec,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config as config_err, Error, Result};
use crate::tensor::{Mode, ParamId, ParamStore, Tape, Tensor, Var};

const EMBED_INIT: f64 = 0.05;
const META_STREAM: u64 = 1_000;
const AGGREGATOR_STREAM: u64 = 2_000;
const GATE_STREAM: u64 = 3_000;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    Embedding,
    Glorot { fan_in: usize, fan_out: usize },
    Ones,
    Zeros,
}

#[derive(Clone, Debug)]
struct Slot {
    name: String,
    shape: Vec<usize>,
    init: Init,
    stream: u64,
}

#[derive(Clone, Copy, Debug)]
struct EncoderIds {
    embedding: ParamId,
    kernel: ParamId,
    bias: ParamId,
    gain: ParamId,
    offset: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct ThreadIds {
    encoder: EncoderIds,
    slp: Option<Affine>,
    clf: Option<Affine>,
}

#[derive(Clone, Debug)]
struct Layout {
    threads: Vec<ThreadIds>,
    meta: Vec<EncoderIds>,
    aggregator: Option<Affine>,
    gate: Option<(EncoderIds, Affine)>,
}

/// Encoded inputs for one item: one index sequence per thread and per
/// metadata thread, each already padded to its input length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Features {
    pub threads: Vec<Vec<usize>>,
    pub meta: Vec<Vec<usize>>,
}

/// Tape handles produced by one thread.
#[derive(Clone, Copy, Debug)]
pub struct ThreadOutputs {
    /// `V_t`, the dropped-out embedded sequence.
    pub embedded: Var,
    /// `u_t`, the pooled, normalised, dropped-out encoding.
    pub encoded: Var,
    /// `s_t`, the mini-aggregator output (MoHE-2 only).
    pub mixed: Option<Var>,
    pub logits: Option<Var>,
    pub probs: Option<Var>,
}

/// Every head of one forward pass.
#[derive(Clone, Debug)]
pub struct HeadOutputs {
    pub threads: Vec<ThreadOutputs>,
    pub meta: Vec<Var>,
    pub aggregator_logits: Option<Var>,
    pub aggregator: Option<Var>,
    pub gate: Option<Var>,
    pub mixture: Option<Var>,
}

/// Plain probability vectors read back from a [`HeadOutputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeadValues {
    pub threads: Vec<Vec<f64>>,
    pub aggregator: Option<Vec<f64>>,
    pub gate: Option<Vec<f64>>,
    pub mixture: Option<Vec<f64>>,
}

impl HeadOutputs {
    pub fn values(&self, tape: &Tape<'_>) -> HeadValues {
        let read = |v: Var| tape.value(v).data().to_vec();
        HeadValues {
            threads: self.threads.iter().filter_map(|t| t.probs).map(read).collect(),
            aggregator: self.aggregator.map(read),
            gate: self.gate.map(read),
            mixture: self.mixture.map(read),
        }
    }
}

/// Where a metadata encoding may be appended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectionSite {
    ThreadClassifier,
    Aggregator,
    MiniAggregator,
}

/// Builds a classifier (or mini-aggregator) input from its regular parts
/// and the metadata encodings. Method 1 widens every classifier including
/// the aggregator; method 2 widens only the mini-aggregators.
pub fn inject_metadata(
    tape: &mut Tape<'_>,
    method: MetaMethod,
    site: InjectionSite,
    base: &[Var],
    meta: &[Var],
) -> Result<Var> {
    let include = matches!(
        (method, site),
        (MetaMethod::Method1, InjectionSite::ThreadClassifier)
            | (MetaMethod::Method1, InjectionSite::Aggregator)
            | (MetaMethod::Method2, InjectionSite::MiniAggregator)
    );
    let mut parts = base.to_vec();
    if include {
        parts.extend_from_slice(meta);
    }
    tape.concat(&parts)
}

/// A configured network and its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    vocab_sizes: Vec<usize>,
    meta_vocab_sizes: Vec<usize>,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Fresh parameters. Each thread draws from its own seeded stream, so
    /// a thread's initial weights do not depend on which other heads exist.
    pub fn new(config: ModelConfig, vocab_sizes: &[usize], meta_vocab_sizes: &[usize], seed: u64) -> Result<Model> {
        let slots = blueprint(&config, vocab_sizes, meta_vocab_sizes)?;
        let mut params = ParamStore::new();
        let mut rngs: std::collections::BTreeMap<u64, ChaCha8Rng> = Default::default();
        for s in &slots {
            let rng = rngs.entry(s.stream).or_insert_with(|| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(s.stream);
                r
            });
            let t = match s.init {
                Init::Embedding => Tensor::uniform(s.shape.clone(), EMBED_INIT, rng),
                Init::Glorot { fan_in, fan_out } => Tensor::glorot(s.shape.clone(), fan_in, fan_out, rng),
                Init::Ones => Tensor::filled(s.shape.clone(), 1.0),
                Init::Zeros => Tensor::zeros(s.shape.clone()),
            };
            params.insert(s.name.clone(), t)?;
        }
        Model::from_params(config, vocab_sizes, meta_vocab_sizes, params)
    }

    /// Wraps existing parameters after checking that names, order and
    /// shapes match what the configuration requires.
    pub fn from_params(
        config: ModelConfig,
        vocab_sizes: &[usize],
        meta_vocab_sizes: &[usize],
        params: ParamStore,
    ) -> Result<Model> {
        let slots = blueprint(&config, vocab_sizes, meta_vocab_sizes)?;
        if slots.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                slots.len(),
                params.len()
            )));
        }
        for (slot, (_, name, t)) in slots.iter().zip(params.iter()) {
            if slot.name != name || slot.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    slot.name,
                    slot.shape
                )));
            }
        }
        let layout = layout(&config, &params)?;
        Ok(Model {
            config,
            vocab_sizes: vocab_sizes.to_vec(),
            meta_vocab_sizes: meta_vocab_sizes.to_vec(),
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn vocab_sizes(&self) -> &[usize] {
        &self.vocab_sizes
    }

    pub fn meta_vocab_sizes(&self) -> &[usize] {
        &self.meta_vocab_sizes
    }

    /// Names of every parameter, in storage order.
    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|(_, n, _)| n.to_string()).collect()
    }

    /// Runs every head for one item. `dropout_seed` fixes the masks; each
    /// thread derives its own stream from it.
    pub fn forward<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        x: &Features,
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<HeadOutputs> {
        let cfg = &self.config;
        if x.threads.len() != self.layout.threads.len() || x.meta.len() != self.layout.meta.len() {
            return config_err(format!(
                "features carry {} thread / {} meta inputs, model expects {} / {}",
                x.threads.len(),
                x.meta.len(),
                self.layout.threads.len(),
                self.layout.meta.len()
            ));
        }
        let rate = cfg.dropout;
        let eps = cfg.layer_norm_eps;

        let mut meta = Vec::with_capacity(self.layout.meta.len());
        for (m, ids) in self.layout.meta.iter().enumerate() {
            let mut rng = stream_rng(dropout_seed, META_STREAM + m as u64);
            let (_, u) = encode(tape, ids, &x.meta[m], rate, mode, &mut rng, eps)?;
            meta.push(u);
        }

        let mut threads = Vec::with_capacity(self.layout.threads.len());
        for (t, ids) in self.layout.threads.iter().enumerate() {
            let mut rng = stream_rng(dropout_seed, t as u64);
            let (embedded, encoded) = encode(tape, &ids.encoder, &x.threads[t], rate, mode, &mut rng, eps)?;
            let mixed = match ids.slp {
                Some(slp) => Some(mini_aggregator(tape, cfg.meta_method, encoded, embedded, &meta, slp)?),
                None => None,
            };
            let (logits, probs) = match ids.clf {
                Some(clf) => {
                    let base = mixed.unwrap_or(encoded);
                    let input = inject_metadata(tape, cfg.meta_method, InjectionSite::ThreadClassifier, &[base], &meta)?;
                    let (w, b) = (tape.param(clf.weight), tape.param(clf.bias));
                    let z = tape.dense(input, w, b)?;
                    (Some(z), Some(tape.softmax(z)?))
                }
                None => (None, None),
            };
            threads.push(ThreadOutputs { embedded, encoded, mixed, logits, probs });
        }

        let (aggregator_logits, aggregator) = match self.layout.aggregator {
            Some(agg) => {
                let parts: Vec<Var> = threads.iter().map(|t| t.mixed.unwrap_or(t.encoded)).collect();
                let input = inject_metadata(tape, cfg.meta_method, InjectionSite::Aggregator, &parts, &meta)?;
                let (w, b) = (tape.param(agg.weight), tape.param(agg.bias));
                let z = tape.dense(input, w, b)?;
                (Some(z), Some(tape.softmax(z)?))
            }
            None => (None, None),
        };

        let (gate, mixture) = match &self.layout.gate {
            Some((enc, clf)) => {
                let mut rng = stream_rng(dropout_seed, GATE_STREAM);
                let (_, u) = encode(tape, enc, &x.threads[0], rate, mode, &mut rng, eps)?;
                let (w, b) = (tape.param(clf.weight), tape.param(clf.bias));
                let z = tape.dense(u, w, b)?;
                let gate = tape.softmax(z)?;
                let experts: Vec<Var> = threads.iter().filter_map(|t| t.probs).collect();
                (Some(gate), Some(tape.mixture(gate, &experts)?))
            }
            None => (None, None),
        };

        Ok(HeadOutputs { threads, meta, aggregator_logits, aggregator, gate, mixture })
    }

    /// Per-item training objective for this model's framework.
    pub fn loss(&self, tape: &mut Tape<'_>, heads: &HeadOutputs, target: usize) -> Result<Var> {
        match self.config.effective_gammas() {
            Some(g) => combined_loss(tape, heads, target, &g),
            None => {
                let mixture = heads.mixture.ok_or_else(|| Error::Usage("mixture head missing".into()))?;
                tape.nll(mixture, target)
            }
        }
    }

    /// Infer-mode forward returning plain head distributions.
    pub fn predict_heads(&self, x: &Features) -> Result<HeadValues> {
        let mut tape = Tape::new(&self.params);
        let heads = self.forward(&mut tape, x, Mode::Infer, 0)?;
        Ok(heads.values(&tape))
    }

    pub fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        Ok(predict_distribution(&self.predict_heads(x)?, self.config.framework))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Embedding → dropout → same-padded CNN → global max pool → layer norm →
/// dropout. Returns `(V_t, u_t)`.
fn encode(
    tape: &mut Tape<'_>,
    ids: &EncoderIds,
    indices: &[usize],
    rate: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
    eps: f64,
) -> Result<(Var, Var)> {
    let table = tape.param(ids.embedding);
    let emb = tape.embedding(table, indices)?;
    let v = tape.dropout(emb, rate, mode, rng)?;
    let (k, b) = (tape.param(ids.kernel), tape.param(ids.bias));
    let conv = tape.conv1d_same(v, k, b)?;
    let pooled = tape.global_max_pool(conv)?;
    let (g, o) = (tape.param(ids.gain), tape.param(ids.offset));
    let normed = tape.layer_norm(pooled, g, o, eps)?;
    let u = tape.dropout(normed, rate, mode, rng)?;
    Ok((v, u))
}

/// `s_t = tanh(W_s · [u_t, mean_rows(V_t), meta…] + b_s)`; metadata joins
/// only under method 2.
fn mini_aggregator(
    tape: &mut Tape<'_>,
    method: MetaMethod,
    encoded: Var,
    embedded: Var,
    meta: &[Var],
    slp: Affine,
) -> Result<Var> {
    let mean = tape.mean_rows(embedded)?;
    let input = inject_metadata(tape, method, InjectionSite::MiniAggregator, &[encoded, mean], meta)?;
    let (w, b) = (tape.param(slp.weight), tape.param(slp.bias));
    let z = tape.dense(input, w, b)?;
    tape.tanh(z)
}

/// `γ_{T+1}·CE(y, g_{T+1}) + Σ_t γ_t·CE(y, g_t)`, from logits. Heads with
/// zero weight are left out of the graph.
pub fn combined_loss(tape: &mut Tape<'_>, heads: &HeadOutputs, target: usize, gammas: &[f64]) -> Result<Var> {
    let t = heads.threads.len();
    if gammas.len() != t + 1 {
        return config_err(format!("expected {} gammas, got {}", t + 1, gammas.len()));
    }
    config::check_gammas(gammas)?;
    let mut terms = Vec::new();
    for (i, th) in heads.threads.iter().enumerate() {
        if gammas[i] == 0.0 {
            continue;
        }
        let z = th
            .logits
            .ok_or_else(|| Error::Config(format!("thread {i} has no classifier but gamma {}", gammas[i])))?;
        terms.push((tape.softmax_cross_entropy(z, target)?, gammas[i]));
    }
    if gammas[t] != 0.0 {
        let z = heads
            .aggregator_logits
            .ok_or_else(|| Error::Config("aggregator weight set but the model has no aggregator".into()))?;
        terms.push((tape.softmax_cross_entropy(z, target)?, gammas[t]));
    }
    tape.weighted_sum(&terms)
}

/// Class posterior used for prediction: the mean of all available heads
/// for the ensembles, the aggregator alone for aggregator-only, the gated
/// mixture for experts.
pub fn predict_distribution(heads: &HeadValues, framework: Framework) -> Vec<f64> {
    match framework {
        Framework::Aggregator => heads.aggregator.clone().expect("aggregator head"),
        Framework::Moe => heads.mixture.clone().expect("mixture head"),
        Framework::Ensemble | Framework::Mohe1 | Framework::Mohe2 => {
            let mut all: Vec<&Vec<f64>> = heads.threads.iter().collect();
            if framework != Framework::Ensemble {
                if let Some(a) = &heads.aggregator {
                    all.push(a);
                }
            }
            average(&all)
        }
    }
}

fn average(dists: &[&Vec<f64>]) -> Vec<f64> {
    let n = dists.len() as f64;
    let mut out = vec![0.0; dists[0].len()];
    for d in dists {
        for (o, v) in out.iter_mut().zip(d.iter()) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn encoder_slots(prefix: &str, vocab: usize, dim: usize, width: usize, filters: usize, stream: u64) -> Vec<Slot> {
    let slot = |suffix: &str, shape: Vec<usize>, init| Slot { name: format!("{prefix}.{suffix}"), shape, init, stream };
    vec![
        slot("embedding", vec![vocab, dim], Init::Embedding),
        slot(
            "conv.kernel",
            vec![width, dim, filters],
            Init::Glorot { fan_in: width * dim, fan_out: width * filters },
        ),
        slot("conv.bias", vec![filters], Init::Zeros),
        slot("norm.gain", vec![filters], Init::Ones),
        slot("norm.offset", vec![filters], Init::Zeros),
    ]
}

fn affine_slots(prefix: &str, out: usize, input: usize, stream: u64) -> Vec<Slot> {
    vec![
        Slot {
            name: format!("{prefix}.weight"),
            shape: vec![out, input],
            init: Init::Glorot { fan_in: input, fan_out: out },
            stream,
        },
        Slot { name: format!("{prefix}.bias"), shape: vec![out], init: Init::Zeros, stream },
    ]
}

/// Parameter names, shapes and initialisers in canonical order.
fn blueprint(cfg: &ModelConfig, vocab_sizes: &[usize], meta_vocab_sizes: &[usize]) -> Result<Vec<Slot>> {
    cfg.validate()?;
    let threads = cfg.effective_threads();
    if vocab_sizes.len() != threads.len() {
        return config_err(format!("{} vocabularies for {} threads", vocab_sizes.len(), threads.len()));
    }
    if meta_vocab_sizes.len() != cfg.meta_threads.len() {
        return config_err(format!(
            "{} metadata vocabularies for {} metadata threads",
            meta_vocab_sizes.len(),
            cfg.meta_threads.len()
        ));
    }
    let c = cfg.num_classes;
    let mut slots = Vec::new();
    let mut meta_width = 0;
    for (m, spec) in cfg.meta_threads.iter().enumerate() {
        let d = cfg.meta_embed_dim(spec)?;
        slots.extend(encoder_slots(&format!("meta{m}"), meta_vocab_sizes[m], d, 1, spec.filters, META_STREAM + m as u64));
        meta_width += spec.filters;
    }
    let (clf_meta, slp_meta) = match cfg.meta_method {
        MetaMethod::Method1 => (meta_width, 0),
        MetaMethod::Method2 => (0, meta_width),
    };
    let mut agg_width = 0;
    for (t, spec) in threads.iter().enumerate() {
        let d = cfg.embed_dim(spec)?;
        let p = spec.filters;
        let prefix = format!("thread{t}");
        let stream = t as u64;
        slots.extend(encoder_slots(&prefix, vocab_sizes[t], d, spec.kernel_size, p, stream));
        if cfg.framework == Framework::Mohe2 {
            slots.extend(affine_slots(&format!("{prefix}.slp"), p, p + d + slp_meta, stream));
        }
        if cfg.framework.has_thread_classifiers() {
            slots.extend(affine_slots(&format!("{prefix}.clf"), c, p + clf_meta, stream));
        }
        agg_width += p;
    }
    if cfg.framework.has_aggregator() {
        slots.extend(affine_slots("aggregator.clf", c, agg_width + clf_meta, AGGREGATOR_STREAM));
    }
    if cfg.framework == Framework::Moe {
        let spec = &threads[0];
        let d = cfg.embed_dim(spec)?;
        slots.extend(encoder_slots("gate", vocab_sizes[0], d, spec.kernel_size, spec.filters, GATE_STREAM));
        slots.extend(affine_slots("gate.clf", threads.len(), spec.filters, GATE_STREAM));
    }
    Ok(slots)
}

fn layout(cfg: &ModelConfig, params: &ParamStore) -> Result<Layout> {
    let id = |name: String| {
        params
            .find(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    };
    let encoder = |prefix: &str| -> Result<EncoderIds> {
        Ok(EncoderIds {
            embedding: id(format!("{prefix}.embedding"))?,
            kernel: id(format!("{prefix}.conv.kernel"))?,
            bias: id(format!("{prefix}.conv.bias"))?,
            gain: id(format!("{prefix}.norm.gain"))?,
            offset: id(format!("{prefix}.norm.offset"))?,
        })
    };
    let affine = |prefix: &str| -> Result<Affine> {
        Ok(Affine { weight: id(format!("{prefix}.weight"))?, bias: id(format!("{prefix}.bias"))? })
    };
    let mut threads = Vec::new();
    for t in 0..cfg.threads.len() {
        let prefix = format!("thread{t}");
        threads.push(ThreadIds {
            encoder: encoder(&prefix)?,
            slp: if cfg.framework == Framework::Mohe2 { Some(affine(&format!("{prefix}.slp"))?) } else { None },
            clf: if cfg.framework.has_thread_classifiers() {
                Some(affine(&format!("{prefix}.clf"))?)
            } else {
                None
            },
        });
    }
    let meta = (0..cfg.meta_threads.len()).map(|m| encoder(&format!("meta{m}"))).collect::<Result<_>>()?;
    let aggregator = if cfg.framework.has_aggregator() { Some(affine("aggregator.clf")?) } else { None };
    let gate = if cfg.framework == Framework::Moe { Some((encoder("gate")?, affine("gate.clf")?)) } else { None };
    Ok(Layout { threads, meta, aggregator, gate })
}
