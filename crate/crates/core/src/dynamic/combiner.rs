use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::nn::{glorot_uniform, join, softmax, Parameters};
use crate::rng::{seeded, stream};

use super::lstm::{max_pool, BiLstm, BiLstmEncoder, BiLstmTrace};
use super::Mode;

/// Learned per-source projections plus softmax attention over sources.
///
/// `attention_bias` is stored with the model but never added to the logits: a
/// scalar shared by every source shifts all logits of a token equally and
/// cancels in the softmax, so its gradient is identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicCombiner {
    pub mode: Mode,
    pub d_prime: usize,
    /// One `d' x d_i` matrix per source.
    pub projections: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    /// Length `d'` for DME, `2m` for CDME.
    pub attention: Vec<f64>,
    pub attention_bias: f64,
    pub attention_lstm: Option<BiLstm>,
    pub seed: u64,
}

impl DynamicCombiner {
    /// Random projections and (for CDME) attention LSTM; attention vector and biases start at zero.
    pub fn new(mode: Mode, source_dims: &[usize], d_prime: usize, m: usize, seed: u64) -> Result<Self> {
        if source_dims.is_empty() || source_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "every source needs a positive dimension, got {source_dims:?}"
            )));
        }
        if d_prime == 0 || (mode == Mode::Cdme && m == 0) {
            return Err(Error::InvalidArgument(
                "projected size and attention hidden size must be positive".into(),
            ));
        }
        let mut rng = seeded(seed, stream::INIT_PROJECTIONS);
        let projections = source_dims
            .iter()
            .map(|&d| glorot_uniform(&mut rng, d_prime, d))
            .collect();
        let (attention_lstm, attention) = match mode {
            Mode::Dme => (None, vec![0.0; d_prime]),
            Mode::Cdme => {
                let mut rng = seeded(seed, stream::INIT_ATTENTION);
                (Some(BiLstm::new(&mut rng, d_prime, m)), vec![0.0; 2 * m])
            }
        };
        Ok(DynamicCombiner {
            mode,
            d_prime,
            projections,
            biases: vec![vec![0.0; d_prime]; source_dims.len()],
            attention,
            attention_bias: 0.0,
            attention_lstm,
            seed,
        })
    }

    pub fn source_count(&self) -> usize {
        self.projections.len()
    }

    pub fn source_dims(&self) -> Vec<usize> {
        self.projections.iter().map(Matrix::cols).collect()
    }

    /// Hidden size of the attention LSTM (0 for DME).
    pub fn attention_hidden(&self) -> usize {
        self.attention_lstm.as_ref().map_or(0, BiLstm::hidden_dim)
    }

    /// Sets the attention vector to random normal values scaled by `scale`.
    pub fn randomize_attention<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: f64) {
        for a in &mut self.attention {
            *a = scale * crate::rng::normal(rng);
        }
    }

    /// `M'_i = W_i P_iᵀ + b_i` for every source, each `S x d'`.
    pub fn project_sources(&self, token_views: &[Matrix]) -> Result<Vec<Matrix>> {
        check_token_views(&self.source_dims(), token_views)?;
        Ok(token_views
            .iter()
            .zip(&self.projections)
            .zip(&self.biases)
            .map(|((x, p), b)| {
                let mut out = x.matmul(&p.transpose());
                for r in 0..out.rows() {
                    for (o, bk) in out.row_mut(r).iter_mut().zip(b) {
                        *o += bk;
                    }
                }
                out
            })
            .collect())
    }

    fn check_projected(&self, projected: &[Matrix]) -> Result<usize> {
        if projected.len() != self.source_count() {
            return Err(Error::DimMismatch(format!(
                "expected {} projected sources, got {}",
                self.source_count(),
                projected.len()
            )));
        }
        let steps = projected[0].rows();
        for (i, p) in projected.iter().enumerate() {
            if p.cols() != self.d_prime || p.rows() != steps {
                return Err(Error::DimMismatch(format!(
                    "source {i}: projected shape {}x{}, expected {steps}x{}",
                    p.rows(),
                    p.cols(),
                    self.d_prime
                )));
            }
        }
        Ok(steps)
    }

    fn require_mode(&self, mode: Mode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::InvalidArgument(format!(
                "combiner is {}, not {}",
                self.mode.label(),
                mode.label()
            )));
        }
        Ok(())
    }

    /// Per-token softmax over sources of `a · M'_{i,j}`, `S x n`.
    pub fn dme_attention_weights(&self, projected: &[Matrix]) -> Result<Matrix> {
        self.require_mode(Mode::Dme)?;
        Ok(self.attend(projected)?.weights)
    }

    /// Per-token softmax over sources of `a · h_{i,j}`, where `h` are the
    /// attention BiLSTM states over each source's projected sequence.
    pub fn cdme_attention_weights(&self, projected: &[Matrix]) -> Result<Matrix> {
        self.require_mode(Mode::Cdme)?;
        Ok(self.attend(projected)?.weights)
    }

    pub fn attention_weights(&self, projected: &[Matrix]) -> Result<Matrix> {
        Ok(self.attend(projected)?.weights)
    }

    fn attend(&self, projected: &[Matrix]) -> Result<Attention> {
        let steps = self.check_projected(projected)?;
        let n = self.source_count();
        let traces: Vec<BiLstmTrace> = match &self.attention_lstm {
            Some(lstm) => projected.iter().map(|p| lstm.forward_pass(p)).collect(),
            None => Vec::new(),
        };
        let mut weights = Matrix::zeros(steps, n);
        for j in 0..steps {
            let logits: Vec<f64> = (0..n)
                .map(|i| match self.mode {
                    Mode::Dme => dot(&self.attention, projected[i].row(j)),
                    Mode::Cdme => dot(&self.attention, traces[i].states.row(j)),
                })
                .collect();
            weights.row_mut(j).copy_from_slice(&softmax(&logits));
        }
        Ok(Attention { traces, weights })
    }

    pub(crate) fn forward(&self, encoder: &BiLstmEncoder, token_views: &[Matrix]) -> Result<SentenceTrace> {
        let projected = self.project_sources(token_views)?;
        let Attention { traces, weights } = self.attend(&projected)?;
        let combined = combine_weighted(&projected, &weights)?;
        if combined.cols() != encoder.input_dim() {
            return Err(Error::DimMismatch(format!(
                "encoder expects inputs of size {}, combiner produces {}",
                encoder.input_dim(),
                combined.cols()
            )));
        }
        let encoded = encoder.forward_pass(&combined);
        let (pooled, winners) = max_pool(&encoded.states);
        Ok(SentenceTrace {
            projected,
            attention_traces: traces,
            weights,
            combined,
            encoded,
            winners,
            pooled,
        })
    }

    /// Accumulates the gradient of a loss with respect to this combiner and
    /// `encoder`, given its gradient `d_pooled` at the sentence vector.
    pub(crate) fn backward(
        &self,
        encoder: &BiLstmEncoder,
        token_views: &[Matrix],
        trace: &SentenceTrace,
        d_pooled: &[f64],
        grad: &mut DynamicCombiner,
        grad_encoder: &mut BiLstmEncoder,
    ) {
        let steps = trace.combined.rows();
        let n = self.source_count();
        let mut d_states = Matrix::zeros(steps, encoder.output_dim());
        for (k, (&j, &g)) in trace.winners.iter().zip(d_pooled).enumerate() {
            d_states[(j, k)] += g;
        }
        let d_combined = encoder.backward_pass(&trace.combined, &trace.encoded, &d_states, grad_encoder);

        let mut d_projected: Vec<Matrix> = (0..n).map(|_| Matrix::zeros(steps, self.d_prime)).collect();
        let mut d_att_states: Vec<Matrix> = match self.mode {
            Mode::Dme => Vec::new(),
            Mode::Cdme => (0..n).map(|_| Matrix::zeros(steps, self.attention.len())).collect(),
        };
        for j in 0..steps {
            let dc = d_combined.row(j);
            let w = trace.weights.row(j);
            let d_w: Vec<f64> = (0..n).map(|i| dot(dc, trace.projected[i].row(j))).collect();
            let mean: f64 = w.iter().zip(&d_w).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for (d, &c) in d_projected[i].row_mut(j).iter_mut().zip(dc) {
                    *d += w[i] * c;
                }
                let d_logit = w[i] * (d_w[i] - mean);
                if d_logit == 0.0 {
                    continue;
                }
                match self.mode {
                    Mode::Dme => {
                        for (ga, &x) in grad.attention.iter_mut().zip(trace.projected[i].row(j)) {
                            *ga += d_logit * x;
                        }
                        for (d, &a) in d_projected[i].row_mut(j).iter_mut().zip(&self.attention) {
                            *d += d_logit * a;
                        }
                    }
                    Mode::Cdme => {
                        let h = trace.attention_traces[i].states.row(j);
                        for (ga, &x) in grad.attention.iter_mut().zip(h) {
                            *ga += d_logit * x;
                        }
                        for (d, &a) in d_att_states[i].row_mut(j).iter_mut().zip(&self.attention) {
                            *d += d_logit * a;
                        }
                    }
                }
            }
        }
        if let (Some(lstm), Some(grad_lstm)) = (&self.attention_lstm, grad.attention_lstm.as_mut()) {
            for i in 0..n {
                let dx = lstm.backward_pass(
                    &trace.projected[i],
                    &trace.attention_traces[i],
                    &d_att_states[i],
                    grad_lstm,
                );
                for (d, g) in d_projected[i].as_mut_slice().iter_mut().zip(dx.as_slice()) {
                    *d += g;
                }
            }
        }
        for i in 0..n {
            let x = &token_views[i];
            for j in 0..steps {
                for (r, &g) in d_projected[i].row(j).iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (p, &xv) in grad.projections[i].row_mut(r).iter_mut().zip(x.row(j)) {
                        *p += g * xv;
                    }
                    grad.biases[i][r] += g;
                }
            }
        }
    }
}

struct Attention {
    traces: Vec<BiLstmTrace>,
    weights: Matrix,
}

pub(crate) struct SentenceTrace {
    projected: Vec<Matrix>,
    attention_traces: Vec<BiLstmTrace>,
    weights: Matrix,
    combined: Matrix,
    encoded: BiLstmTrace,
    winners: Vec<usize>,
    pub pooled: Vec<f64>,
}

impl Parameters for DynamicCombiner {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize)) {
        for (i, (p, b)) in self.projections.iter().zip(&self.biases).enumerate() {
            f(join(prefix, &format!("proj.{i}")), p.as_slice(), p.cols());
            f(join(prefix, &format!("bias.{i}")), b, b.len());
        }
        f(join(prefix, "attention"), &self.attention, self.attention.len());
        f(join(prefix, "attention_bias"), std::slice::from_ref(&self.attention_bias), 1);
        if let Some(lstm) = &self.attention_lstm {
            lstm.visit(&join(prefix, "att_lstm"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        for (i, (p, b)) in self.projections.iter_mut().zip(&mut self.biases).enumerate() {
            f(join(prefix, &format!("proj.{i}")), p.as_mut_slice());
            f(join(prefix, &format!("bias.{i}")), b);
        }
        f(join(prefix, "attention"), &mut self.attention);
        f(join(prefix, "attention_bias"), std::slice::from_mut(&mut self.attention_bias));
        if let Some(lstm) = &mut self.attention_lstm {
            lstm.visit_mut(&join(prefix, "att_lstm"), f);
        }
    }
}

fn check_token_views(dims: &[usize], token_views: &[Matrix]) -> Result<()> {
    if token_views.len() != dims.len() {
        return Err(Error::DimMismatch(format!(
            "expected {} sources, got {}",
            dims.len(),
            token_views.len()
        )));
    }
    let steps = token_views[0].rows();
    for (i, (x, &d)) in token_views.iter().zip(dims).enumerate() {
        if x.cols() != d {
            return Err(Error::DimMismatch(format!(
                "source {i}: token dimension {} but projection expects {d}",
                x.cols()
            )));
        }
        if x.rows() != steps {
            return Err(Error::DimMismatch(format!(
                "source {i}: sequence length {} differs from source 0 length {steps}",
                x.rows()
            )));
        }
    }
    Ok(())
}

/// `out[j] = Σ_i weights(j, i) · projected_i[j]`.
pub fn combine_weighted(projected: &[Matrix], weights: &Matrix) -> Result<Matrix> {
    if projected.is_empty() || weights.cols() != projected.len() {
        return Err(Error::DimMismatch(format!(
            "{} weight columns for {} sources",
            weights.cols(),
            projected.len()
        )));
    }
    let (steps, width) = projected[0].shape();
    if weights.rows() != steps || projected.iter().any(|p| p.shape() != (steps, width)) {
        return Err(Error::DimMismatch(
            "projected sources and weights disagree on shape".into(),
        ));
    }
    let mut out = Matrix::zeros(steps, width);
    for j in 0..steps {
        for (i, p) in projected.iter().enumerate() {
            let w = weights[(j, i)];
            for (o, &v) in out.row_mut(j).iter_mut().zip(p.row(j)) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}

/// Project, attend, combine and encode one sentence given per-source token matrices.
pub fn dynamic_embed_sentence(
    combiner: &DynamicCombiner,
    encoder: &BiLstmEncoder,
    token_views: &[Matrix],
) -> Result<Vec<f64>> {
    Ok(combiner.forward(encoder, token_views)?.pooled)
}
