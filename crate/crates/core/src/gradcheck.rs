//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Features, Model, ModelConfig};
use crate::tensor::{Gradients, Mode, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Seeded random points per operator case.
    pub points_per_op: usize,
    /// Seeded random points for the full model.
    pub model_points: usize,
    /// Coordinates probed per parameter array of the full model.
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, tolerance: 1e-4, points_per_op: 8, model_points: 3, coords_per_param: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: String,
    pub point: usize,
    pub coords: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub results: Vec<CaseResult>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn points(&self) -> usize {
        self.results.len()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn worst(&self) -> Option<&CaseResult> {
        self.results.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients
/// from turning rounding noise into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares analytic gradients with central differences at `coords`.
/// `eval` returns the loss and, when asked, its gradients.
fn compare<S>(
    state: &mut S,
    store: fn(&mut S) -> &mut ParamStore,
    coords: &[(ParamId, usize)],
    step: f64,
    eval: &dyn Fn(&S, bool) -> Result<(f64, Option<Gradients>)>,
) -> Result<f64> {
    let (_, grads) = eval(state, true)?;
    let grads = grads.expect("gradients requested");
    let mut worst: f64 = 0.0;
    for &(id, i) in coords {
        let len = store(state).get(id).len();
        let analytic = grads.get(id, len)[i];
        let orig = store(state).get(id).data()[i];
        store(state).get_mut(id).data_mut()[i] = orig + step;
        let (plus, _) = eval(state, false)?;
        store(state).get_mut(id).data_mut()[i] = orig - step;
        let (minus, _) = eval(state, false)?;
        store(state).get_mut(id).data_mut()[i] = orig;
        worst = worst.max(relative_error(analytic, (plus - minus) / (2.0 * step)));
    }
    Ok(worst)
}

fn all_coords(store: &ParamStore) -> Vec<(ParamId, usize)> {
    store.iter().flat_map(|(id, _, t)| (0..t.len()).map(move |i| (id, i))).collect()
}

fn identity(s: &mut ParamStore) -> &mut ParamStore {
    s
}

type Build = fn(&mut Tape<'_>, &[Var], &Fixture) -> Result<Var>;

/// Non-differentiable inputs shared by one case at one point.
struct Fixture {
    indices: Vec<usize>,
    weights: Vec<f64>,
    target: usize,
    seed: u64,
}

struct OpCase {
    name: &'static str,
    shapes: fn(&mut ChaCha8Rng) -> Vec<Vec<usize>>,
    build: Build,
}

fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn proj(tape: &mut Tape<'_>, v: Var, fx: &Fixture) -> Result<Var> {
    let n = tape.value(v).len();
    tape.project(v, &fx.weights[..n])
}

fn op_cases() -> Vec<OpCase> {
    fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
        rng.random_range(lo..=hi)
    }
    vec![
        OpCase {
            name: "embedding",
            shapes: |r| vec![vec![dims(r, 3, 6), dims(r, 2, 4)]],
            build: |t, p, fx| {
                let e = t.embedding(p[0], &fx.indices)?;
                proj(t, e, fx)
            },
        },
        OpCase {
            name: "dropout",
            shapes: |r| vec![vec![dims(r, 4, 10)]],
            build: |t, p, fx| {
                let mut rng = ChaCha8Rng::seed_from_u64(fx.seed);
                let d = t.dropout(p[0], 0.3, Mode::Train, &mut rng)?;
                proj(t, d, fx)
            },
        },
        OpCase {
            name: "conv1d_same",
            shapes: |r| {
                let (l, d, k, f) = (dims(r, 3, 7), dims(r, 1, 3), dims(r, 1, 5), dims(r, 1, 4));
                vec![vec![l, d], vec![k, d, f], vec![f]]
            },
            build: |t, p, fx| {
                let c = t.conv1d_same(p[0], p[1], p[2])?;
                proj(t, c, fx)
            },
        },
        OpCase {
            name: "global_max_pool",
            shapes: |r| vec![vec![dims(r, 2, 6), dims(r, 1, 4)]],
            build: |t, p, fx| {
                let m = t.global_max_pool(p[0])?;
                proj(t, m, fx)
            },
        },
        OpCase {
            name: "layer_norm",
            shapes: |r| {
                let n = dims(r, 2, 8);
                vec![vec![n], vec![n], vec![n]]
            },
            build: |t, p, fx| {
                let y = t.layer_norm(p[0], p[1], p[2], 1e-5)?;
                proj(t, y, fx)
            },
        },
        OpCase {
            name: "dense",
            shapes: |r| {
                let (i, o) = (dims(r, 1, 6), dims(r, 1, 5));
                vec![vec![i], vec![o, i], vec![o]]
            },
            build: |t, p, fx| {
                let y = t.dense(p[0], p[1], p[2])?;
                proj(t, y, fx)
            },
        },
        OpCase {
            name: "concat",
            shapes: |r| vec![vec![dims(r, 1, 4)], vec![dims(r, 1, 4)], vec![dims(r, 1, 4)]],
            build: |t, p, fx| {
                let y = t.concat(p)?;
                proj(t, y, fx)
            },
        },
        OpCase {
            name: "mean_rows",
            shapes: |r| vec![vec![dims(r, 1, 6), dims(r, 1, 4)]],
            build: |t, p, fx| {
                let y = t.mean_rows(p[0])?;
                proj(t, y, fx)
            },
        },
        OpCase {
            name: "tanh",
            shapes: |r| vec![vec![dims(r, 1, 8)]],
            build: |t, p, fx| {
                let y = t.tanh(p[0])?;
                proj(t, y, fx)
            },
        },
        OpCase {
            name: "softmax",
            shapes: |r| vec![vec![dims(r, 2, 8)]],
            build: |t, p, fx| {
                let y = t.softmax(p[0])?;
                proj(t, y, fx)
            },
        },
        OpCase {
            name: "softmax_cross_entropy",
            shapes: |r| vec![vec![dims(r, 2, 8)]],
            build: |t, p, fx| {
                let n = t.value(p[0]).len();
                t.softmax_cross_entropy(p[0], fx.target % n)
            },
        },
        OpCase {
            name: "nll",
            shapes: |r| vec![vec![dims(r, 2, 8)]],
            build: |t, p, fx| {
                let n = t.value(p[0]).len();
                let s = t.softmax(p[0])?;
                t.nll(s, fx.target % n)
            },
        },
        OpCase {
            name: "mixture",
            shapes: |r| {
                let c = dims(r, 2, 5);
                vec![vec![3], vec![c], vec![c], vec![c]]
            },
            build: |t, p, fx| {
                let g = t.softmax(p[0])?;
                let heads = [t.softmax(p[1])?, t.softmax(p[2])?, t.softmax(p[3])?];
                let m = t.mixture(g, &heads)?;
                proj(t, m, fx)
            },
        },
        OpCase {
            name: "weighted_sum",
            shapes: |r| vec![vec![dims(r, 1, 4)], vec![dims(r, 1, 4)]],
            build: |t, p, fx| {
                let a = proj(t, p[0], fx)?;
                let b = t.sum(p[1])?;
                t.weighted_sum(&[(a, 0.3), (b, -1.7)])
            },
        },
        OpCase {
            name: "sum",
            shapes: |r| vec![vec![dims(r, 1, 6), dims(r, 1, 3)]],
            build: |t, p, _| {
                let sq = t.tanh(p[0])?;
                t.sum(sq)
            },
        },
        OpCase {
            name: "project",
            shapes: |r| vec![vec![dims(r, 1, 8)]],
            build: |t, p, fx| {
                let y = t.tanh(p[0])?;
                proj(t, y, fx)
            },
        },
    ]
}

fn run_case(case: &OpCase, point: usize, cfg: &GradCheckConfig) -> Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(point as u64 + 1);
    let mut store = ParamStore::new();
    let shapes = (case.shapes)(&mut rng);
    for (i, s) in shapes.into_iter().enumerate() {
        store.insert(format!("p{i}"), rand_tensor(s, &mut rng))?;
    }
    let rows = store.get(ParamId(0)).shape()[0];
    let fx = Fixture {
        indices: (0..rng.random_range(1..=5)).map(|_| rng.random_range(0..rows)).collect(),
        weights: (0..256).map(|_| rng.random_range(-1.0..1.0)).collect(),
        target: rng.random_range(0..64),
        seed: rng.random(),
    };
    let coords = all_coords(&store);
    let build = case.build;
    let eval = |s: &ParamStore, grad: bool| -> Result<(f64, Option<Gradients>)> {
        let mut tape = Tape::new(s);
        let vars: Vec<Var> = s.ids().map(|id| tape.param(id)).collect();
        let loss = build(&mut tape, &vars, &fx)?;
        let value = tape.value(loss).data()[0];
        Ok((value, if grad { Some(tape.backward(loss)?) } else { None }))
    };
    let worst = compare(&mut store, identity, &coords, cfg.step, &eval)?;
    Ok(CaseResult { case: case.name.to_string(), point, coords: coords.len(), max_rel_error: worst })
}

/// Every operator case at `points_per_op` seeded points.
pub fn op_suite(cfg: &GradCheckConfig) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for case in op_cases() {
        for point in 0..cfg.points_per_op {
            out.push(run_case(&case, point, cfg)?);
        }
    }
    Ok(out)
}

fn random_features(model: &Model, rng: &mut ChaCha8Rng) -> Features {
    let seq = |vocab: usize, len: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let used = rng.random_range(1..=len);
        (0..len).map(|i| if i < used { rng.random_range(1..vocab) } else { 0 }).collect()
    };
    let cfg = model.config();
    let threads =
        cfg.effective_threads().iter().zip(model.vocab_sizes()).map(|(t, &v)| seq(v, t.input_length, rng)).collect();
    let meta = cfg.meta_threads.iter().zip(model.meta_vocab_sizes()).map(|(m, &v)| seq(v, m.input_length, rng)).collect();
    Features { threads, meta }
}

/// Full training loss of a freshly initialised model, parameters jittered
/// away from their initial constants, dropout active with a fixed seed.
/// Probes coordinates with non-zero analytic gradient first.
pub fn model_check(
    model_cfg: &ModelConfig,
    vocab_sizes: &[usize],
    meta_vocab_sizes: &[usize],
    point: usize,
    cfg: &GradCheckConfig,
) -> Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(10_000 + point as u64);
    let mut model = Model::new(model_cfg.clone(), vocab_sizes, meta_vocab_sizes, rng.random())?;
    let ids: Vec<ParamId> = model.params().ids().collect();
    for &id in &ids {
        for x in model.params_mut().get_mut(id).data_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    let x = random_features(&model, &mut rng);
    let target = rng.random_range(0..model_cfg.num_classes);
    let dropout_seed: u64 = rng.random();
    let eval = |m: &Model, grad: bool| -> Result<(f64, Option<Gradients>)> {
        let mut tape = Tape::new(m.params());
        let heads = m.forward(&mut tape, &x, Mode::Train, dropout_seed)?;
        let loss = m.loss(&mut tape, &heads, target)?;
        let value = tape.value(loss).data()[0];
        Ok((value, if grad { Some(tape.backward(loss)?) } else { None }))
    };
    let (_, grads) = eval(&model, true)?;
    let grads = grads.expect("gradients requested");
    let mut coords = Vec::new();
    for &id in &ids {
        let len = model.params().get(id).len();
        let g = grads.get(id, len);
        let mut nonzero: Vec<usize> = (0..len).filter(|&i| g[i] != 0.0).collect();
        for _ in 0..cfg.coords_per_param.min(nonzero.len()) {
            let pick = rng.random_range(0..nonzero.len());
            coords.push((id, nonzero.swap_remove(pick)));
        }
        coords.push((id, rng.random_range(0..len)));
    }
    let worst = compare(&mut model, Model::params_mut, &coords, cfg.step, &eval)?;
    Ok(CaseResult {
        case: format!("model:{}", model_cfg.framework),
        point,
        coords: coords.len(),
        max_rel_error: worst,
    })
}

/// Operator suite plus `model_points` full-model checks.
pub fn run_suite(
    cfg: &GradCheckConfig,
    model_cfg: &ModelConfig,
    vocab_sizes: &[usize],
    meta_vocab_sizes: &[usize],
) -> Result<GradCheckReport> {
    let mut results = op_suite(cfg)?;
    for point in 0..cfg.model_points {
        results.push(model_check(model_cfg, vocab_sizes, meta_vocab_sizes, point, cfg)?);
    }
    Ok(GradCheckReport { results, tolerance: cfg.tolerance })
}
