use rand::Rng;

use super::{non_finite, Gradients, ParamId, ParamStore, Tensor};
use crate::error::{config, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Train mode samples dropout masks; infer mode makes dropout the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Embedding { table: Var, indices: Vec<usize> },
    Dropout { input: Var, mask: Vec<f64> },
    Conv1d { input: Var, kernel: Var, bias: Var, width: usize, offset: usize },
    MaxPool { input: Var, argmax: Vec<usize> },
    LayerNorm { input: Var, gain: Var, offset: Var, xhat: Vec<f64>, inv_std: f64 },
    Dense { input: Var, weight: Var, bias: Var },
    Concat { inputs: Vec<Var> },
    MeanRows { input: Var },
    Tanh { input: Var },
    Softmax { input: Var },
    SoftmaxCrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
    Nll { probs: Var, target: usize },
    Mixture { gate: Var, heads: Vec<Var> },
    WeightedSum { terms: Vec<(Var, f64)> },
    Sum { input: Var },
    Project { input: Var, weights: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Embedding { .. } => "embedding",
            Op::Dropout { .. } => "dropout",
            Op::Conv1d { .. } => "conv1d_same",
            Op::MaxPool { .. } => "global_max_pool",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Dense { .. } => "dense",
            Op::Concat { .. } => "concat",
            Op::MeanRows { .. } => "mean_rows",
            Op::Tanh { .. } => "tanh",
            Op::Softmax { .. } => "softmax",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Nll { .. } => "nll",
            Op::Mixture { .. } => "mixture",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::Sum { .. } => "sum",
            Op::Project { .. } => "project",
        }
    }
}

/// Linear record of executed operations. Parameters are read from the
/// borrowed store without copying; their gradients come back from
/// [`Tape::backward`] as a [`Gradients`] aligned with that store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    ops: Vec<Op>,
    // None for parameter leaves.
    values: Vec<Option<Tensor>>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            ops: Vec::new(),
            values: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.ops[v.0] {
            Op::Param(id) => self.params.get(*id),
            _ => self.values[v.0].as_ref().expect("non-param node carries a value"),
        }
    }

    fn data(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(non_finite(op.name()));
        }
        self.ops.push(op);
        self.values.push(Some(value));
        Ok(Var(self.ops.len() - 1))
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Input, value)
    }

    /// Trainable leaf. Repeated calls for the same id return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.ops.push(Op::Param(id));
        self.values.push(None);
        let v = Var(self.ops.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Row lookup: `indices` select rows of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return config("embedding table must be a matrix");
        }
        let (rows, dim) = (shape[0], shape[1]);
        let src = self.data(table);
        let mut out = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            if i >= rows {
                return config(format!("embedding index {i} outside table of {rows} rows"));
            }
            out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        let value = Tensor::new(vec![indices.len(), dim], out)?;
        self.push(Op::Embedding { table, indices: indices.to_vec() }, value)
    }

    /// Inverted dropout. Identity in infer mode or at rate zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return config(format!("dropout rate {rate} outside [0, 1)"));
        }
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let src = self.value(input);
        let mask: Vec<f64> = (0..src.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push(Op::Dropout { input, mask }, value)
    }

    /// "Same" 1-D convolution of an `[L, D]` sequence with a `[K, D, P]`
    /// kernel bank. Window for output `l` covers `l - (K-1)/2 ..= l + K/2`,
    /// zero padded, so even widths put the extra tap on the right.
    pub fn conv1d_same(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(input), self.shape(kernel), self.shape(bias));
        if xs.len() != 2 || ks.len() != 3 || bs.len() != 1 {
            return config("conv1d_same expects [L,D] input, [K,D,P] kernel, [P] bias");
        }
        let (len, depth) = (xs[0], xs[1]);
        let (width, kdepth, filters) = (ks[0], ks[1], ks[2]);
        if width == 0 {
            return config("kernel width must be at least 1");
        }
        if kdepth != depth {
            return config(format!("input depth {depth} does not match kernel depth {kdepth}"));
        }
        if bs[0] != filters {
            return config(format!("bias length {} does not match {filters} filters", bs[0]));
        }
        let offset = (width - 1) / 2;
        let (x, k, b) = (self.data(input), self.data(kernel), self.data(bias));
        let mut out = vec![0.0; len * filters];
        for l in 0..len {
            let row = &mut out[l * filters..(l + 1) * filters];
            row.copy_from_slice(b);
            for tap in 0..width {
                let pos = l as isize + tap as isize - offset as isize;
                if pos < 0 || pos >= len as isize {
                    continue;
                }
                let xrow = &x[pos as usize * depth..(pos as usize + 1) * depth];
                for (d, &xv) in xrow.iter().enumerate() {
                    let krow = &k[(tap * depth + d) * filters..(tap * depth + d + 1) * filters];
                    for (o, &kv) in row.iter_mut().zip(krow) {
                        *o += kv * xv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![len, filters], out)?;
        self.push(Op::Conv1d { input, kernel, bias, width, offset }, value)
    }

    /// Column-wise max over the sequence axis; ties resolve to the lowest row.
    pub fn global_max_pool(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        if shape.len() != 2 {
            return config("global_max_pool expects an [L,P] sequence");
        }
        let (len, cols) = (shape[0], shape[1]);
        if len == 0 {
            return Err(Error::Input("global_max_pool over an empty sequence".into()));
        }
        let x = self.data(input);
        let mut out = x[..cols].to_vec();
        let mut argmax = vec![0; cols];
        for l in 1..len {
            for p in 0..cols {
                let v = x[l * cols + p];
                if v > out[p] {
                    out[p] = v;
                    argmax[p] = l;
                }
            }
        }
        self.push(Op::MaxPool { input, argmax }, Tensor::vector(out))
    }

    /// Layer normalisation of a vector with population variance.
    pub fn layer_norm(&mut self, input: Var, gain: Var, offset: Var, eps: f64) -> Result<Var> {
        let n = self.value(input).len();
        if self.shape(input).len() != 1 || n == 0 {
            return config("layer_norm expects a non-empty vector");
        }
        if self.value(gain).len() != n || self.value(offset).len() != n {
            return config("layer_norm gain/offset length mismatch");
        }
        let x = self.data(input);
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let (g, o) = (self.data(gain), self.data(offset));
        let out = xhat.iter().zip(g).zip(o).map(|((h, g), o)| g * h + o).collect();
        self.push(Op::LayerNorm { input, gain, offset, xhat, inv_std }, Tensor::vector(out))
    }

    /// `weight · input + bias` with `weight` shaped `[out, in]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let ws = self.shape(weight);
        if ws.len() != 2 {
            return config("dense weight must be a matrix");
        }
        let (rows, cols) = (ws[0], ws[1]);
        if self.shape(input) != [cols] {
            return config(format!(
                "dense input has shape {:?}, weight expects [{cols}]",
                self.shape(input)
            ));
        }
        if self.shape(bias) != [rows] {
            return config(format!("dense bias must have length {rows}"));
        }
        let (x, w, b) = (self.data(input), self.data(weight), self.data(bias));
        let out = (0..rows)
            .map(|r| b[r] + w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        self.push(Op::Dense { input, weight, bias }, Tensor::vector(out))
    }

    /// Concatenates vectors in argument order.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return config("concat of nothing");
        }
        let mut out = Vec::new();
        for &v in inputs {
            if self.shape(v).len() != 1 {
                return config("concat expects vectors");
            }
            out.extend_from_slice(self.data(v));
        }
        if inputs.len() == 1 {
            return Ok(inputs[0]);
        }
        self.push(Op::Concat { inputs: inputs.to_vec() }, Tensor::vector(out))
    }

    /// Mean over the rows of an `[L, D]` matrix.
    pub fn mean_rows(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        if shape.len() != 2 || shape[0] == 0 {
            return config("mean_rows expects a non-empty matrix");
        }
        let (rows, cols) = (shape[0], shape[1]);
        let x = self.data(input);
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for (o, v) in out.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= rows as f64;
        }
        self.push(Op::MeanRows { input }, Tensor::vector(out))
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        let src = self.value(input);
        let data = src.data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push(Op::Tanh { input }, value)
    }

    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        if self.shape(input).len() != 1 {
            return config("softmax expects a vector");
        }
        let p = softmax(self.data(input));
        self.push(Op::Softmax { input }, Tensor::vector(p))
    }

    /// `-ln softmax(logits)[target]` as a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = self.data(logits);
        if z.len() < 2 {
            return config("cross entropy needs at least two classes");
        }
        if target >= z.len() {
            return Err(Error::Input(format!("target {target} outside {} classes", z.len())));
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        let loss = log_norm - z[target];
        let probs = softmax(z);
        self.push(Op::SoftmaxCrossEntropy { logits, target, probs }, scalar(loss))
    }

    /// `-ln probs[target]` for an already normalised distribution.
    pub fn nll(&mut self, probs: Var, target: usize) -> Result<Var> {
        let p = self.data(probs);
        if target >= p.len() {
            return Err(Error::Input(format!("target {target} outside {} classes", p.len())));
        }
        let loss = -p[target].ln();
        self.push(Op::Nll { probs, target }, scalar(loss))
    }

    /// `Σ_t gate[t] · heads[t]`.
    pub fn mixture(&mut self, gate: Var, heads: &[Var]) -> Result<Var> {
        let g = self.data(gate);
        if g.len() != heads.len() || heads.is_empty() {
            return config("mixture gate length must equal the number of heads");
        }
        let c = self.value(heads[0]).len();
        let mut out = vec![0.0; c];
        for (&w, &h) in g.iter().zip(heads) {
            let hv = self.data(h);
            if hv.len() != c {
                return config("mixture heads differ in length");
            }
            for (o, v) in out.iter_mut().zip(hv) {
                *o += w * v;
            }
        }
        self.push(Op::Mixture { gate, heads: heads.to_vec() }, Tensor::vector(out))
    }

    /// `Σ w_i · s_i` over scalar nodes with constant weights.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            if self.value(v).len() != 1 {
                return config("weighted_sum expects scalars");
            }
            total += w * self.data(v)[0];
        }
        self.push(Op::WeightedSum { terms: terms.to_vec() }, scalar(total))
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self.data(input).iter().sum();
        self.push(Op::Sum { input }, scalar(total))
    }

    /// Scalar projection `Σ w_i x_i` with fixed weights.
    pub fn project(&mut self, input: Var, weights: &[f64]) -> Result<Var> {
        let x = self.data(input);
        if x.len() != weights.len() {
            return config("projection weights do not match input size");
        }
        let total = x.iter().zip(weights).map(|(a, b)| a * b).sum();
        self.push(Op::Project { input, weights: weights.to_vec() }, scalar(total))
    }

    /// Reverse sweep from a scalar. Parameters not reachable from `loss`
    /// keep an implicit zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads = Gradients::zeros_like(self.params);
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); self.ops.len()];
        adj[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            if adj[i].is_empty() {
                continue;
            }
            let up = std::mem::take(&mut adj[i]);
            match &self.ops[i] {
                Op::Input => {}
                Op::Param(id) => {
                    let buf = grads.buf_mut(*id, up.len());
                    for (g, u) in buf.iter_mut().zip(&up) {
                        *g += u;
                    }
                }
                Op::Embedding { table, indices } => {
                    let dim = self.shape(*table)[1];
                    let n = self.value(*table).len();
                    let dt = slot(&mut adj, *table, n);
                    for (l, &row) in indices.iter().enumerate() {
                        for d in 0..dim {
                            dt[row * dim + d] += up[l * dim + d];
                        }
                    }
                }
                Op::Dropout { input, mask } => {
                    let dx = slot(&mut adj, *input, mask.len());
                    for ((g, u), m) in dx.iter_mut().zip(&up).zip(mask) {
                        *g += u * m;
                    }
                }
                Op::Conv1d { input, kernel, bias, width, offset } => {
                    let (len, depth) = (self.shape(*input)[0], self.shape(*input)[1]);
                    let filters = self.shape(*bias)[0];
                    let x = self.data(*input);
                    let k = self.data(*kernel);
                    {
                        let db = slot(&mut adj, *bias, filters);
                        for l in 0..len {
                            for p in 0..filters {
                                db[p] += up[l * filters + p];
                            }
                        }
                    }
                    {
                        let dk = slot(&mut adj, *kernel, width * depth * filters);
                        for l in 0..len {
                            let urow = &up[l * filters..(l + 1) * filters];
                            for tap in 0..*width {
                                let pos = l as isize + tap as isize - *offset as isize;
                                if pos < 0 || pos >= len as isize {
                                    continue;
                                }
                                let pos = pos as usize;
                                for d in 0..depth {
                                    let xv = x[pos * depth + d];
                                    let base = (tap * depth + d) * filters;
                                    for (g, u) in dk[base..base + filters].iter_mut().zip(urow) {
                                        *g += xv * u;
                                    }
                                }
                            }
                        }
                    }
                    let dx = slot(&mut adj, *input, len * depth);
                    for l in 0..len {
                        let urow = &up[l * filters..(l + 1) * filters];
                        for tap in 0..*width {
                            let pos = l as isize + tap as isize - *offset as isize;
                            if pos < 0 || pos >= len as isize {
                                continue;
                            }
                            let pos = pos as usize;
                            for d in 0..depth {
                                let base = (tap * depth + d) * filters;
                                let s: f64 = k[base..base + filters].iter().zip(urow).map(|(a, b)| a * b).sum();
                                dx[pos * depth + d] += s;
                            }
                        }
                    }
                }
                Op::MaxPool { input, argmax } => {
                    let cols = argmax.len();
                    let n = self.value(*input).len();
                    let dx = slot(&mut adj, *input, n);
                    for (p, &l) in argmax.iter().enumerate() {
                        dx[l * cols + p] += up[p];
                    }
                }
                Op::LayerNorm { input, gain, offset, xhat, inv_std } => {
                    let n = xhat.len() as f64;
                    let g = self.data(*gain);
                    let dxhat: Vec<f64> = up.iter().zip(g).map(|(u, g)| u * g).collect();
                    let mean_d = dxhat.iter().sum::<f64>() / n;
                    let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                    {
                        let dg = slot(&mut adj, *gain, xhat.len());
                        for ((d, u), h) in dg.iter_mut().zip(&up).zip(xhat) {
                            *d += u * h;
                        }
                    }
                    {
                        let db = slot(&mut adj, *offset, xhat.len());
                        for (d, u) in db.iter_mut().zip(&up) {
                            *d += u;
                        }
                    }
                    let dx = slot(&mut adj, *input, xhat.len());
                    for ((d, dh), h) in dx.iter_mut().zip(&dxhat).zip(xhat) {
                        *d += inv_std * (dh - mean_d - h * mean_dx);
                    }
                }
                Op::Dense { input, weight, bias } => {
                    let (rows, cols) = (self.shape(*weight)[0], self.shape(*weight)[1]);
                    let x = self.data(*input);
                    let w = self.data(*weight);
                    {
                        let dw = slot(&mut adj, *weight, rows * cols);
                        for r in 0..rows {
                            for (g, xv) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                                *g += up[r] * xv;
                            }
                        }
                    }
                    {
                        let db = slot(&mut adj, *bias, rows);
                        for (g, u) in db.iter_mut().zip(&up) {
                            *g += u;
                        }
                    }
                    let dx = slot(&mut adj, *input, cols);
                    for r in 0..rows {
                        for (g, wv) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                            *g += up[r] * wv;
                        }
                    }
                }
                Op::Concat { inputs } => {
                    let mut start = 0;
                    for &v in inputs {
                        let n = self.value(v).len();
                        let dx = slot(&mut adj, v, n);
                        for (g, u) in dx.iter_mut().zip(&up[start..start + n]) {
                            *g += u;
                        }
                        start += n;
                    }
                }
                Op::MeanRows { input } => {
                    let (rows, cols) = (self.shape(*input)[0], self.shape(*input)[1]);
                    let dx = slot(&mut adj, *input, rows * cols);
                    let scale = 1.0 / rows as f64;
                    for r in 0..rows {
                        for (g, u) in dx[r * cols..(r + 1) * cols].iter_mut().zip(&up) {
                            *g += u * scale;
                        }
                    }
                }
                Op::Tanh { input } => {
                    let y = self.values[i].as_ref().unwrap().data();
                    let dx = slot(&mut adj, *input, y.len());
                    for ((g, u), y) in dx.iter_mut().zip(&up).zip(y) {
                        *g += u * (1.0 - y * y);
                    }
                }
                Op::Softmax { input } => {
                    let p = self.values[i].as_ref().unwrap().data();
                    let dot: f64 = up.iter().zip(p).map(|(u, p)| u * p).sum();
                    let dx = slot(&mut adj, *input, p.len());
                    for ((g, u), p) in dx.iter_mut().zip(&up).zip(p) {
                        *g += p * (u - dot);
                    }
                }
                Op::SoftmaxCrossEntropy { logits, target, probs } => {
                    let dx = slot(&mut adj, *logits, probs.len());
                    for (c, (g, p)) in dx.iter_mut().zip(probs).enumerate() {
                        let y = if c == *target { 1.0 } else { 0.0 };
                        *g += up[0] * (p - y);
                    }
                }
                Op::Nll { probs, target } => {
                    let p = self.data(*probs)[*target];
                    let n = self.value(*probs).len();
                    let dx = slot(&mut adj, *probs, n);
                    dx[*target] -= up[0] / p;
                }
                Op::Mixture { gate, heads } => {
                    let g = self.data(*gate).to_vec();
                    let dgate: Vec<f64> = heads
                        .iter()
                        .map(|&h| self.data(h).iter().zip(&up).map(|(a, b)| a * b).sum())
                        .collect();
                    for (&h, &w) in heads.iter().zip(&g) {
                        let dh = slot(&mut adj, h, up.len());
                        for (d, u) in dh.iter_mut().zip(&up) {
                            *d += w * u;
                        }
                    }
                    let dg = slot(&mut adj, *gate, g.len());
                    for (d, v) in dg.iter_mut().zip(dgate) {
                        *d += v;
                    }
                }
                Op::WeightedSum { terms } => {
                    for &(v, w) in terms {
                        slot(&mut adj, v, 1)[0] += w * up[0];
                    }
                }
                Op::Sum { input } => {
                    let n = self.value(*input).len();
                    for g in slot(&mut adj, *input, n).iter_mut() {
                        *g += up[0];
                    }
                }
                Op::Project { input, weights } => {
                    let dx = slot(&mut adj, *input, weights.len());
                    for (g, w) in dx.iter_mut().zip(weights) {
                        *g += up[0] * w;
                    }
                }
            }
        }
        if !grads.is_finite() {
            return Err(non_finite("backward"));
        }
        Ok(grads)
    }
}

fn slot(adj: &mut [Vec<f64>], v: Var, len: usize) -> &mut Vec<f64> {
    let buf = &mut adj[v.0];
    if buf.is_empty() {
        buf.resize(len, 0.0);
    }
    buf
}

fn scalar(x: f64) -> Tensor {
    Tensor::vector(vec![x])
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
