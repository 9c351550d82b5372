//! LSTM and bidirectional LSTM with explicit backpropagation through time.
//!
//! Gate rows are stacked in the order input, forget, cell, output:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g) o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
//! ```
//!
//! with zero initial state.

use rand::Rng;

use crate::linalg::Matrix;
use crate::nn::{glorot_uniform, join, Parameters};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `4h x input`.
    pub input_weight: Matrix,
    /// `4h x h`.
    pub recurrent_weight: Matrix,
    /// `4h`.
    pub bias: Vec<f64>,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    /// Per step: activated gates `[i, f, g, o]` (length 4h).
    gates: Vec<Vec<f64>>,
    /// Cell states, `cells[t]` after step t.
    cells: Vec<Vec<f64>>,
    /// Hidden states after each step, `S x h`.
    pub hidden: Matrix,
}

impl Lstm {
    /// Glorot-uniform weights, zero biases except 1.0 on the forget gate.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let input_weight = glorot_uniform(rng, 4 * hidden, input);
        let recurrent_weight = glorot_uniform(rng, 4 * hidden, hidden);
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Lstm {
            input_weight,
            recurrent_weight,
            bias,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            input_weight: Matrix::zeros(4 * hidden, input),
            recurrent_weight: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_weight.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.recurrent_weight.cols()
    }

    /// Runs over the rows of `xs` in order.
    pub fn forward(&self, xs: &Matrix) -> LstmTrace {
        assert_eq!(xs.cols(), self.input_dim(), "LSTM input dimension");
        let h = self.hidden_dim();
        let steps = xs.rows();
        let mut hidden = Matrix::zeros(steps, h);
        let mut gates = Vec::with_capacity(steps);
        let mut cells = Vec::with_capacity(steps);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for t in 0..steps {
            let mut z = self.input_weight.matvec(xs.row(t));
            let rec = self.recurrent_weight.matvec(&h_prev);
            for ((zk, rk), bk) in z.iter_mut().zip(&rec).zip(&self.bias) {
                *zk += rk + bk;
            }
            for k in 0..h {
                z[k] = sigmoid(z[k]);
                z[h + k] = sigmoid(z[h + k]);
                z[2 * h + k] = z[2 * h + k].tanh();
                z[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            let mut c = vec![0.0; h];
            let row = hidden.row_mut(t);
            for k in 0..h {
                c[k] = z[h + k] * c_prev[k] + z[k] * z[2 * h + k];
                row[k] = z[3 * h + k] * c[k].tanh();
            }
            h_prev.copy_from_slice(row);
            c_prev.copy_from_slice(&c);
            gates.push(z);
            cells.push(c);
        }
        LstmTrace {
            gates,
            cells,
            hidden,
        }
    }

    /// Backpropagates `d_hidden` (`S x h`, the loss gradient at each output)
    /// through the recorded pass. Accumulates into `grad`; returns the input gradient.
    pub fn backward(&self, xs: &Matrix, trace: &LstmTrace, d_hidden: &Matrix, grad: &mut Lstm) -> Matrix {
        let h = self.hidden_dim();
        let steps = xs.rows();
        let mut dx = Matrix::zeros(steps, self.input_dim());
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let zeros = vec![0.0; h];
        for t in (0..steps).rev() {
            let g = &trace.gates[t];
            let c = &trace.cells[t];
            let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { trace.hidden.row(t - 1) } else { &zeros[..] };
            let mut dz = vec![0.0; 4 * h];
            for k in 0..h {
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let dh = d_hidden[(t, k)] + dh_next[k];
                let tc = c[k].tanh();
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                dz[k] = dc * gg * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - gg * gg);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                for (w, &x) in grad.input_weight.row_mut(r).iter_mut().zip(xs.row(t)) {
                    *w += dzr * x;
                }
                for (u, &hp) in grad.recurrent_weight.row_mut(r).iter_mut().zip(h_prev) {
                    *u += dzr * hp;
                }
                grad.bias[r] += dzr;
            }
            dx.row_mut(t).copy_from_slice(&self.input_weight.tr_matvec(&dz));
            dh_next = self.recurrent_weight.tr_matvec(&dz);
        }
        dx
    }
}

impl Parameters for Lstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize)) {
        f(join(prefix, "w"), self.input_weight.as_slice(), self.input_weight.cols());
        f(join(prefix, "u"), self.recurrent_weight.as_slice(), self.recurrent_weight.cols());
        f(join(prefix, "b"), &self.bias, self.bias.len());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        f(join(prefix, "w"), self.input_weight.as_mut_slice());
        f(join(prefix, "u"), self.recurrent_weight.as_mut_slice());
        f(join(prefix, "b"), &mut self.bias);
    }
}

fn reversed(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |r, c| m[(m.rows() - 1 - r, c)])
}

/// Forward and backward LSTMs whose states are concatenated per position.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

/// The sentence encoder is a BiLSTM whose per-step states are max-pooled.
pub type BiLstmEncoder = BiLstm;

#[derive(Clone, Debug)]
pub struct BiLstmTrace {
    forward: LstmTrace,
    /// Trace of the backward LSTM over the reversed sequence.
    backward: LstmTrace,
    reversed_input: Matrix,
    /// `S x 2h`: row j is `[h→_j ; h←_j]`.
    pub states: Matrix,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let forward = Lstm::new(rng, input, hidden);
        let backward = Lstm::new(rng, input, hidden);
        BiLstm { forward, backward }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstm {
            forward: Lstm::zeros(input, hidden),
            backward: Lstm::zeros(input, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    /// The same network with the roles of its two directions exchanged.
    pub fn swapped(&self) -> BiLstm {
        BiLstm {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }

    pub fn forward_pass(&self, xs: &Matrix) -> BiLstmTrace {
        let h = self.hidden_dim();
        let fw = self.forward.forward(xs);
        let reversed_input = reversed(xs);
        let bw = self.backward.forward(&reversed_input);
        let steps = xs.rows();
        let mut states = Matrix::zeros(steps, 2 * h);
        for j in 0..steps {
            let row = states.row_mut(j);
            row[..h].copy_from_slice(fw.hidden.row(j));
            row[h..].copy_from_slice(bw.hidden.row(steps - 1 - j));
        }
        BiLstmTrace {
            forward: fw,
            backward: bw,
            reversed_input,
            states,
        }
    }

    /// Per-position concatenated states, `S x 2h`.
    pub fn states(&self, xs: &Matrix) -> Matrix {
        self.forward_pass(xs).states
    }

    pub fn backward_pass(&self, xs: &Matrix, trace: &BiLstmTrace, d_states: &Matrix, grad: &mut BiLstm) -> Matrix {
        let h = self.hidden_dim();
        let steps = xs.rows();
        let d_fw = Matrix::from_fn(steps, h, |j, k| d_states[(j, k)]);
        let d_bw = Matrix::from_fn(steps, h, |t, k| d_states[(steps - 1 - t, h + k)]);
        let mut dx = self.forward.backward(xs, &trace.forward, &d_fw, &mut grad.forward);
        let dx_rev = self
            .backward
            .backward(&trace.reversed_input, &trace.backward, &d_bw, &mut grad.backward);
        for j in 0..steps {
            for (a, b) in dx.row_mut(j).iter_mut().zip(dx_rev.row(steps - 1 - j)) {
                *a += b;
            }
        }
        dx
    }
}

impl Parameters for BiLstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize)) {
        self.forward.visit(&join(prefix, "fw"), f);
        self.backward.visit(&join(prefix, "bw"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        self.forward.visit_mut(&join(prefix, "fw"), f);
        self.backward.visit_mut(&join(prefix, "bw"), f);
    }
}

/// Component-wise max over positions, with the winning row of each component
/// (first occurrence on ties).
pub fn max_pool(states: &Matrix) -> (Vec<f64>, Vec<usize>) {
    let mut best = states.row(0).to_vec();
    let mut arg = vec![0; states.cols()];
    for j in 1..states.rows() {
        for (k, &v) in states.row(j).iter().enumerate() {
            if v > best[k] {
                best[k] = v;
                arg[k] = j;
            }
        }
    }
    (best, arg)
}

/// BiLSTM-Max sentence vector of length `2 · hidden`.
pub fn bilstm_max_encode(encoder: &BiLstmEncoder, sequence: &Matrix) -> Vec<f64> {
    max_pool(&encoder.states(sequence)).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, seeded};

    fn random_seq(steps: usize, dim: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed, 100);
        Matrix::from_fn(steps, dim, |_, _| normal(&mut rng))
    }

    /// Literal per-gate recurrence written independently of `Lstm::forward`.
    fn unrolled(lstm: &Lstm, xs: &Matrix) -> Vec<Vec<f64>> {
        let h = lstm.hidden_dim();
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut out = Vec::new();
        for t in 0..xs.rows() {
            let pre = |gate: usize, k: usize| {
                let r = gate * h + k;
                let mut s = lstm.bias[r];
                for (i, x) in xs.row(t).iter().enumerate() {
                    s += lstm.input_weight[(r, i)] * x;
                }
                for (i, hp) in hs.iter().enumerate() {
                    s += lstm.recurrent_weight[(r, i)] * hp;
                }
                s
            };
            let mut new_h = vec![0.0; h];
            let mut new_c = vec![0.0; h];
            for k in 0..h {
                let i = 1.0 / (1.0 + (-pre(0, k)).exp());
                let f = 1.0 / (1.0 + (-pre(1, k)).exp());
                let g = pre(2, k).tanh();
                let o = 1.0 / (1.0 + (-pre(3, k)).exp());
                new_c[k] = f * cs[k] + i * g;
                new_h[k] = o * new_c[k].tanh();
            }
            hs = new_h;
            cs = new_c;
            out.push(hs.clone());
        }
        out
    }

    #[test]
    fn forward_matches_unrolled_recurrence() {
        let mut rng = seeded(1, 0);
        let lstm = Lstm::new(&mut rng, 3, 4);
        let xs = random_seq(5, 3, 2);
        let trace = lstm.forward(&xs);
        for (t, h) in unrolled(&lstm, &xs).iter().enumerate() {
            for (a, b) in trace.hidden.row(t).iter().zip(h) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bilstm_max_matches_unrolled_oracle() {
        let mut rng = seeded(3, 0);
        let enc = BiLstm::new(&mut rng, 3, 2);
        let xs = random_seq(4, 3, 4);
        let fw = unrolled(&enc.forward, &xs);
        let bw_rev = unrolled(&enc.backward, &reversed(&xs));
        let mut want = vec![f64::NEG_INFINITY; 4];
        for j in 0..4 {
            let state: Vec<f64> = fw[j].iter().chain(&bw_rev[3 - j]).copied().collect();
            for (w, s) in want.iter_mut().zip(state) {
                *w = w.max(s);
            }
        }
        let got = bilstm_max_encode(&enc, &xs);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn singleton_sequence_pools_to_its_state() {
        let mut rng = seeded(5, 0);
        let enc = BiLstm::new(&mut rng, 2, 3);
        let xs = random_seq(1, 2, 6);
        assert_eq!(bilstm_max_encode(&enc, &xs), enc.states(&xs).row(0).to_vec());
    }

    #[test]
    fn pooling_over_more_steps_never_lowers_a_maximum() {
        let mut rng = seeded(7, 0);
        let enc = BiLstm::new(&mut rng, 2, 3);
        let one = random_seq(1, 2, 8);
        let two = Matrix::from_fn(2, 2, |_, c| one[(0, c)]);
        let states = enc.states(&two);
        let pooled = bilstm_max_encode(&enc, &two);
        for k in 0..6 {
            for j in 0..2 {
                assert!(pooled[k] >= states[(j, k)]);
            }
        }
    }

    #[test]
    fn swapping_directions_mirrors_reversed_input() {
        let mut rng = seeded(9, 0);
        let enc = BiLstm::new(&mut rng, 3, 2);
        let xs = random_seq(6, 3, 10);
        let direct = bilstm_max_encode(&enc, &xs);
        let mirrored = bilstm_max_encode(&enc.swapped(), &reversed(&xs));
        let swapped_back: Vec<f64> = mirrored[2..].iter().chain(&mirrored[..2]).copied().collect();
        assert_eq!(direct, swapped_back);
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let enc = BiLstm::zeros(3, 2);
        let states = enc.states(&random_seq(3, 3, 11));
        assert!(states.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = seeded(12, 0);
        let lstm = Lstm::new(&mut rng, 2, 3);
        let xs = random_seq(4, 2, 13);
        let weights = random_seq(4, 3, 14);
        let loss = |l: &Lstm, x: &Matrix| -> f64 {
            let tr = l.forward(x);
            tr.hidden.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum()
        };
        let trace = lstm.forward(&xs);
        let mut grad = Lstm::zeros(2, 3);
        let dx = lstm.backward(&xs, &trace, &weights, &mut grad);

        let flat = lstm.flatten();
        let analytic = grad.flatten();
        let eps = 1e-6;
        for i in 0..flat.len() {
            let mut p = lstm.clone();
            let mut up = flat.clone();
            up[i] += eps;
            p.assign(&up);
            let f_plus = loss(&p, &xs);
            up[i] -= 2.0 * eps;
            p.assign(&up);
            let f_minus = loss(&p, &xs);
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            assert!((numeric - analytic[i]).abs() < 1e-7, "param {i}: {numeric} vs {}", analytic[i]);
        }
        for t in 0..4 {
            for c in 0..2 {
                let mut plus = xs.clone();
                plus[(t, c)] += eps;
                let mut minus = xs.clone();
                minus[(t, c)] -= eps;
                let numeric = (loss(&lstm, &plus) - loss(&lstm, &minus)) / (2.0 * eps);
                assert!((numeric - dx[(t, c)]).abs() < 1e-7);
            }
        }
    }
}
