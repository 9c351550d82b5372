//! Small neural-network pieces shared by the dynamic combiners and the probes:
//! parameter traversal, softmax cross-entropy, the sentence-pair feature map,
//! a linear softmax head and the Adam optimizer.

use std::io::BufRead;

use rand::Rng;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::model_io::{write_reals, LineReader};
use crate::rng::symmetric_uniform;

/// Named blocks of trainable reals. Gradients are stored in a value of the same type.
///
/// `visit` also reports the row width of each block so it can be written as a matrix.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64]));

    fn blocks(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, v, _| out.push((name, v.len())));
        out
    }

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, n)| n).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, v, _| out.extend_from_slice(v));
        out
    }

    /// Overwrites every parameter from `flat`, in [`Parameters::flatten`] order.
    fn assign(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut("", &mut |_, v| {
            v.copy_from_slice(&flat[offset..offset + v.len()]);
            offset += v.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn zero(&mut self) {
        self.visit_mut("", &mut |_, v| v.iter_mut().for_each(|x| *x = 0.0));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.zero();
        z
    }
}

/// Writes every block of `model` as `[prefix.name] ROWS COLS` followed by its rows.
pub fn write_parameters<P: Parameters + ?Sized>(out: &mut String, prefix: &str, model: &P) {
    model.visit(prefix, &mut |name, values, cols| {
        let rows = values.len() / cols;
        out.push_str(&format!("[{name}] {rows} {cols}\n"));
        for row in values.chunks(cols) {
            write_reals(out, row);
        }
    });
}

/// Reads the blocks written by [`write_parameters`] into a model of the same shape.
pub fn read_parameters<P: Parameters + ?Sized, R: BufRead>(
    reader: &mut LineReader<R>,
    prefix: &str,
    model: &mut P,
) -> Result<()> {
    let mut shapes = Vec::new();
    model.visit(prefix, &mut |name, values, cols| shapes.push((name, values.len() / cols, cols)));
    let mut flat = Vec::new();
    for (name, rows, cols) in shapes {
        flat.extend(reader.read_block_shaped(&name, rows, cols)?.into_vec());
    }
    let mut offset = 0;
    model.visit_mut(prefix, &mut |_, v| {
        v.copy_from_slice(&flat[offset..offset + v.len()]);
        offset += v.len();
    });
    Ok(())
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))` for a `rows x cols` weight.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| symmetric_uniform(rng, limit))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy `−Σ t_k log p_k` of `softmax(logits)` against target distribution
/// `target`, with its gradient `p − t` with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&l, &t) in logits.iter().zip(target) {
        let log_p = l - max - log_total;
        if t != 0.0 {
            loss -= t * log_p;
        }
        grad.push(log_p.exp() - t);
    }
    (loss, grad)
}

pub fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    v
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `[u; v; |u − v|; u ⊙ v]`.
pub fn pair_features(u: &[f64], v: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), v.len());
    let mut out = Vec::with_capacity(4 * u.len());
    out.extend_from_slice(u);
    out.extend_from_slice(v);
    out.extend(u.iter().zip(v).map(|(a, b)| (a - b).abs()));
    out.extend(u.iter().zip(v).map(|(a, b)| a * b));
    out
}

/// Gradients of [`pair_features`] with respect to `u` and `v`. The kink of
/// `|u − v|` at zero takes subgradient 0.
pub fn pair_features_backward(u: &[f64], v: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = u.len();
    let (g_u, rest) = grad.split_at(d);
    let (g_v, rest) = rest.split_at(d);
    let (g_abs, g_prod) = rest.split_at(d);
    let mut du = g_u.to_vec();
    let mut dv = g_v.to_vec();
    for k in 0..d {
        let diff = u[k] - v[k];
        let s = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        du[k] += s * g_abs[k] + v[k] * g_prod[k];
        dv[k] += -s * g_abs[k] + u[k] * g_prod[k];
    }
    (du, dv)
}

/// Affine map to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    /// `classes x inputs`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, inputs: usize, classes: usize) -> Self {
        LinearHead {
            weight: glorot_uniform(rng, classes, inputs),
            bias: vec![0.0; classes],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.weight.matvec(x);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, x: &[f64], d_logits: &[f64], grad: &mut LinearHead) -> Vec<f64> {
        for (c, &g) in d_logits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (w, &xi) in grad.weight.row_mut(c).iter_mut().zip(x) {
                *w += g * xi;
            }
            grad.bias[c] += g;
        }
        self.weight.tr_matvec(d_logits)
    }
}

impl Parameters for LinearHead {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize)) {
        f(join(prefix, "w"), self.weight.as_slice(), self.weight.cols());
        f(join(prefix, "b"), &self.bias, self.bias.len());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        f(join(prefix, "w"), self.weight.as_mut_slice());
        f(join(prefix, "b"), &mut self.bias);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Adam {
            config,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }

    /// Flattens `model`, applies one step with the gradient held in `grad`, writes it back.
    pub fn update<P: Parameters>(&mut self, model: &mut P, grad: &P) {
        let mut flat = model.flatten();
        self.step(&mut flat, &grad.flatten());
        model.assign(&flat);
    }
}
