//! Minimal reverse-mode automatic differentiation over dense `f64` matrices,
//! plus parameter storage and an AdamW optimizer.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar (1x1) node walks the tape in reverse and
//! accumulates gradients for every node that contributed to it.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub type Mat = Array2<f64>;

/// Clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Array1<f64>,
    },
    SoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    Dropout(Var, Mat),
    BceMean { p: Var, targets: Vec<f64> },
    CrossEntropyMean {
        logits: Var,
        targets: Vec<usize>,
        probs: Mat,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Mat>>,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one prediction with the probability clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn grad(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Add a 1xn row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise layer normalization with 1xn scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / n;
        let centered = xv - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|c| c * c).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * inv_std.view().insert_axis(Axis(1));
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row /= z;
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let v = self.value(table).select(Axis(0), idx);
        self.push(v, Op::GatherRows(table, idx.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Column means as a 1xn row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("non-empty")
            .insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    /// Inverted dropout; `mask` holds 0 or 1/(1-rate) per entry.
    pub fn dropout_with_mask(&mut self, a: Var, mask: Mat) -> Var {
        let v = self.value(a) * &mask;
        self.push(v, Op::Dropout(a, mask))
    }

    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - rate);
        let shape = self.value(a).raw_dim();
        let mask = Mat::from_shape_fn(shape, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep });
        self.dropout_with_mask(a, mask)
    }

    /// Mean binary cross-entropy of an nx1 probability column against 0/1
    /// targets, with clamped probabilities. Returns a 1x1 node.
    pub fn bce_mean(&mut self, p: Var, targets: &[f64]) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.len(), targets.len());
        let loss = pv.iter().zip(targets).map(|(&p, &y)| bce(p, y)).sum::<f64>() / targets.len() as f64;
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::BceMean {
                p,
                targets: targets.to_vec(),
            },
        )
    }

    /// Mean softmax cross-entropy of row logits against class indices.
    pub fn cross_entropy_mean(&mut self, logits: Var, targets: &[usize]) -> Var {
        let mut probs = self.value(logits).clone();
        let mut loss = 0.0;
        for (mut row, &t) in probs.rows_mut().into_iter().zip(targets) {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row /= z;
            loss -= row[t].max(f64::MIN_POSITIVE).ln();
        }
        loss /= targets.len() as f64;
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::CrossEntropyMean {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagate from a 1x1 node.
    pub fn backward(&mut self, out: Var) {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Mat::ones((1, 1)));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    Self::accumulate(&mut grads, *a, g.dot(&val(*b).t()));
                    Self::accumulate(&mut grads, *b, val(*a).t().dot(&g));
                }
                Op::MatMulT(a, b) => {
                    Self::accumulate(&mut grads, *a, g.dot(val(*b)));
                    Self::accumulate(&mut grads, *b, g.t().dot(val(*a)));
                }
                Op::Add(a, b) => {
                    Self::accumulate(&mut grads, *a, g.clone());
                    Self::accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    Self::accumulate(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    Self::accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    Self::accumulate(&mut grads, *a, &g * val(*b));
                    Self::accumulate(&mut grads, *b, &g * val(*a));
                }
                Op::Scale(a, k) => Self::accumulate(&mut grads, *a, &g * *k),
                Op::AddScalar(a) => Self::accumulate(&mut grads, *a, g.clone()),
                Op::Tanh(a) => {
                    let d = &g * &node.value.mapv(|t| 1.0 - t * t);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = &g * &node.value.mapv(|s| s * (1.0 - s));
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Gelu(a) => {
                    let d = &g * &val(*a).mapv(gelu_grad);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = xhat.ncols() as f64;
                    Self::accumulate(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    Self::accumulate(
                        &mut grads,
                        *gamma,
                        (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)),
                    );
                    let dxhat = &g * val(*gamma);
                    let sum_d = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let sum_dx = (&dxhat * xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let dx = (&dxhat * n - &sum_d - xhat * &sum_dx)
                        * &(inv_std / n).insert_axis(Axis(1));
                    Self::accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let dot = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    Self::accumulate(&mut grads, *a, y * &(&g - &dot));
                }
                Op::GatherRows(table, idx) => {
                    let mut d = Mat::zeros(val(*table).raw_dim());
                    for (r, &t) in idx.iter().enumerate() {
                        let mut dst = d.row_mut(t);
                        dst += &g.row(r);
                    }
                    Self::accumulate(&mut grads, *table, d);
                }
                Op::SliceRows(a, start) => {
                    let mut d = Mat::zeros(val(*a).raw_dim());
                    d.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Mat::zeros(val(*a).raw_dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let r = val(*p).nrows();
                        Self::accumulate(&mut grads, *p, g.slice(s![off..off + r, ..]).to_owned());
                        off += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = val(*p).ncols();
                        Self::accumulate(&mut grads, *p, g.slice(s![.., off..off + c]).to_owned());
                        off += c;
                    }
                }
                Op::MeanRows(a) => {
                    let rows = val(*a).nrows();
                    let d = g
                        .broadcast(val(*a).raw_dim())
                        .expect("1xn broadcasts")
                        .mapv(|x| x / rows as f64);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Dropout(a, mask) => Self::accumulate(&mut grads, *a, &g * mask),
                Op::BceMean { p, targets } => {
                    let pv = val(*p);
                    let n = targets.len() as f64;
                    let upstream = g[[0, 0]];
                    let d = Mat::from_shape_fn(pv.raw_dim(), |(r, c)| {
                        let p = pv[[r, c]];
                        let y = targets[r * pv.ncols() + c];
                        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                            0.0
                        } else {
                            upstream * (-(y / p) + (1.0 - y) / (1.0 - p)) / n
                        }
                    });
                    Self::accumulate(&mut grads, *p, d);
                }
                Op::CrossEntropyMean {
                    logits,
                    targets,
                    probs,
                } => {
                    let n = targets.len() as f64;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        d[[r, t]] -= 1.0;
                    }
                    d *= g[[0, 0]] / n;
                    Self::accumulate(&mut grads, *logits, d);
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
    }
}

/// A named trainable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    /// Whether decoupled weight decay applies (false for biases and norms).
    pub decay: bool,
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat, decay: bool) -> usize {
        self.params.push(Param {
            name: name.into(),
            value,
            decay,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Place every parameter on the tape as a leaf, in order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Gradients for bound leaves (zeros where a parameter did not contribute).
    pub fn grads(&self, tape: &Tape, vars: &[Var]) -> Vec<Mat> {
        self.params
            .iter()
            .zip(vars)
            .map(|(p, v)| tape.grad(*v).cloned().unwrap_or_else(|| Mat::zeros(p.value.raw_dim())))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for p in &self.params {
            bytes.extend(p.name.as_bytes());
            bytes.extend((p.value.nrows() as u64).to_le_bytes());
            bytes.extend((p.value.ncols() as u64).to_le_bytes());
            for x in p.value.iter() {
                bytes.extend(x.to_le_bytes());
            }
        }
        crate::util::sha256_hex(&bytes)
    }
}

/// Normal(0, std) initialization.
pub fn randn<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Mat {
    let normal = Normal::new(0.0, std).expect("positive std");
    Mat::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &ParamSet, cfg: AdamWConfig) -> Self {
        let zeros = || params.iter().map(|p| Mat::zeros(p.value.raw_dim())).collect();
        AdamW {
            cfg,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Mat], lr: f64) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(g, |m, &g| *m = c.beta1 * *m + (1.0 - c.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = c.beta2 * *v + (1.0 - c.beta2) * g * g);
            let decay = if p.decay { c.weight_decay } else { 0.0 };
            ndarray::Zip::from(&mut p.value)
                .and(&*m)
                .and(&*v)
                .for_each(|w, &m, &v| {
                    let update = (m / bc1) / ((v / bc2).sqrt() + c.eps);
                    *w -= lr * (update + decay * *w);
                });
        }
    }
}

/// Linear warmup over `warmup` steps, then linear decay to zero at `total`.
pub fn linear_schedule(step: usize, warmup: usize, total: usize, peak: f64) -> f64 {
    if total == 0 {
        return peak;
    }
    if step < warmup {
        return peak * (step + 1) as f64 / warmup as f64;
    }
    let remaining = total.saturating_sub(step) as f64;
    let span = total.saturating_sub(warmup).max(1) as f64;
    peak * (remaining / span).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences of a scalar function of one leaf matrix.
    fn numeric_grad(f: &dyn Fn(&Mat) -> f64, x: &Mat) -> Mat {
        let h = 1e-6;
        Mat::from_shape_fn(x.raw_dim(), |idx| {
            let mut plus = x.clone();
            plus[idx] += h;
            let mut minus = x.clone();
            minus[idx] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
    }

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() / scale < tol, "{x} vs {y}");
        }
    }

    /// Build a graph exercising every op and return loss.
    fn graph(tape: &mut Tape, x: Var, w: Var, g: Var, b: Var, table: Var) -> Var {
        let h = tape.matmul(x, w); // 3x4
        let h = tape.add_row(h, b);
        let h = tape.layer_norm(h, g, b);
        let h = tape.gelu(h);
        let e = tape.gather_rows(table, &[2, 0, 2]);
        let h = tape.add(h, e);
        let scores = tape.matmul_t(h, h);
        let p = tape.softmax_rows(scores);
        let h2 = tape.matmul(p, h);
        let top = tape.slice_rows(h2, 0, 2);
        let left = tape.slice_cols(h2, 0, 2);
        let right = tape.slice_cols(h2, 2, 2);
        let cat = tape.concat_cols(&[right, left]);
        let cat = tape.concat_rows(&[cat, top]);
        let cat = tape.mul(cat, cat);
        let cat = tape.scale(cat, 0.3);
        let mask = Mat::from_shape_fn((5, 4), |(r, c)| if (r + c) % 3 == 0 { 0.0 } else { 1.25 });
        let cat = tape.dropout_with_mask(cat, mask);
        let t = tape.tanh(cat);
        let m = tape.mean_rows(t); // 1x4
        let col = tape.slice_cols(m, 0, 1);
        let pr = tape.sigmoid(m);
        let pr = tape.slice_cols(pr, 1, 3);
        let pr_col = tape.matmul_t(pr, pr); // 1x1
        let pr_col = tape.sigmoid(pr_col);
        let l1 = tape.bce_mean(pr_col, &[1.0]);
        let logits = tape.concat_cols(&[col, m]);
        let l2 = tape.cross_entropy_mean(logits, &[3]);
        let l = tape.add(l1, l2);
        tape.add_scalar(l, 0.5)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = randn(&mut rng, 3, 4, 1.0);
        let w0 = randn(&mut rng, 4, 4, 0.5);
        let g0 = randn(&mut rng, 1, 4, 1.0);
        let b0 = randn(&mut rng, 1, 4, 0.3);
        let t0 = randn(&mut rng, 3, 4, 0.5);
        let inputs = [x0, w0, g0, b0, t0];
        let eval = |vals: &[Mat]| -> (f64, Vec<Mat>) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|m| tape.leaf(m.clone())).collect();
            let out = graph(&mut tape, vars[0], vars[1], vars[2], vars[3], vars[4]);
            let loss = tape.scalar(out);
            tape.backward(out);
            let grads = vars.iter().map(|v| tape.grad(*v).unwrap().clone()).collect();
            (loss, grads)
        };
        let (_, analytic) = eval(&inputs);
        for k in 0..inputs.len() {
            let f = |m: &Mat| {
                let mut vals = inputs.to_vec();
                vals[k] = m.clone();
                eval(&vals).0
            };
            let numeric = numeric_grad(&f, &inputs[k]);
            assert_close(&analytic[k], &numeric, 1e-5);
        }
    }

    #[test]
    fn bce_matches_scalar_formula() {
        let mut tape = Tape::new();
        let p = tape.leaf(Mat::from_shape_vec((3, 1), vec![0.2, 0.9, 0.5]).unwrap());
        let l = tape.bce_mean(p, &[0.0, 1.0, 1.0]);
        let expected = -((0.8f64).ln() + (0.9f64).ln() + (0.5f64).ln()) / 3.0;
        assert!((tape.scalar(l) - expected).abs() < 1e-12);
    }

    #[test]
    fn schedule_shape() {
        assert!((linear_schedule(0, 10, 100, 1.0) - 0.1).abs() < 1e-12);
        assert!((linear_schedule(9, 10, 100, 1.0) - 1.0).abs() < 1e-12);
        assert!((linear_schedule(55, 10, 100, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(linear_schedule(100, 10, 100, 1.0), 0.0);
    }

    #[test]
    fn adamw_descends_a_quadratic() {
        let mut params = ParamSet::new();
        params.add("w", Mat::from_elem((1, 2), 3.0), false);
        let mut opt = AdamW::new(&params, AdamWConfig::default());
        for _ in 0..500 {
            let g = params.get(0).value.mapv(|w| 2.0 * w);
            opt.step(&mut params, &[g], 0.05);
        }
        assert!(params.get(0).value.iter().all(|w| w.abs() < 1e-2));
    }

    #[test]
    fn fingerprint_tracks_values() {
        let mut params = ParamSet::new();
        params.add("w", Mat::zeros((2, 2)), true);
        let before = params.fingerprint();
        params.get_mut(0).value[[0, 0]] = 1e-300;
        assert_ne!(before, params.fingerprint());
    }
}
