use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{Label, PairDataset};
use crate::linalg::Matrix;
use crate::model_io::{self, LineReader};
use crate::nn::{
    argmax, join, one_hot, pair_features, pair_features_backward, read_parameters, softmax_cross_entropy,
    write_parameters, Adam, AdamConfig, LinearHead, Parameters,
};
use crate::rng::{permutation, seeded, stream};

use super::combiner::DynamicCombiner;
use super::lstm::{BiLstm, BiLstmEncoder};
use super::{Mode, TrainConfig};
use crate::store::SequenceTable;

/// One labeled sentence pair; each side holds one `S x d_i` token matrix per source.
#[derive(Clone, Debug, PartialEq)]
pub struct PairExample {
    pub left: Vec<Matrix>,
    pub right: Vec<Matrix>,
    pub label: usize,
}

/// Combiner, sentence encoder and softmax head trained together on pair classification.
#[derive(Clone, Debug, PartialEq)]
pub struct PairModel {
    pub combiner: DynamicCombiner,
    pub encoder: BiLstmEncoder,
    pub head: LinearHead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape<'a> {
    pub mode: Mode,
    pub source_dims: &'a [usize],
    pub d_prime: usize,
    /// Attention LSTM hidden size (CDME only).
    pub m: usize,
    pub m_enc: usize,
    pub classes: usize,
}

impl PairModel {
    pub fn new(shape: ModelShape<'_>, seed: u64) -> Result<Self> {
        if shape.m_enc == 0 || shape.classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "encoder size must be positive and at least 2 classes are needed (m_enc={}, classes={})",
                shape.m_enc, shape.classes
            )));
        }
        let combiner = DynamicCombiner::new(shape.mode, shape.source_dims, shape.d_prime, shape.m, seed)?;
        let encoder = BiLstm::new(&mut seeded(seed, stream::INIT_ENCODER), shape.d_prime, shape.m_enc);
        let head = LinearHead::new(&mut seeded(seed, stream::INIT_HEAD), 8 * shape.m_enc, shape.classes);
        Ok(PairModel {
            combiner,
            encoder,
            head,
        })
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn embed(&self, token_views: &[Matrix]) -> Result<Vec<f64>> {
        super::combiner::dynamic_embed_sentence(&self.combiner, &self.encoder, token_views)
    }

    pub fn logits(&self, example: &PairExample) -> Result<Vec<f64>> {
        let u = self.embed(&example.left)?;
        let v = self.embed(&example.right)?;
        Ok(self.head.logits(&pair_features(&u, &v)))
    }

    pub fn predict(&self, example: &PairExample) -> Result<usize> {
        Ok(argmax(&self.logits(example)?))
    }

    /// Fraction of examples classified correctly.
    pub fn accuracy(&self, examples: &[PairExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("accuracy of an empty dataset".into()));
        }
        let mut correct = 0;
        for ex in examples {
            if self.predict(ex)? == ex.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }

    fn check_label(&self, example: &PairExample) -> Result<()> {
        if example.label >= self.classes() {
            return Err(Error::InvalidArgument(format!(
                "label {} outside the {} model classes",
                example.label,
                self.classes()
            )));
        }
        Ok(())
    }

    pub fn example_loss(&self, example: &PairExample) -> Result<f64> {
        self.check_label(example)?;
        let logits = self.logits(example)?;
        Ok(softmax_cross_entropy(&logits, &one_hot(example.label, self.classes())).0)
    }

    /// Mean cross-entropy over `examples`.
    pub fn mean_loss(&self, examples: &[&PairExample]) -> Result<f64> {
        let mut total = 0.0;
        for ex in examples {
            total += self.example_loss(ex)?;
        }
        Ok(total / examples.len() as f64)
    }

    /// Cross-entropy of one example; its gradient is added into `grad`.
    pub fn accumulate_gradient(&self, example: &PairExample, grad: &mut PairModel) -> Result<f64> {
        self.check_label(example)?;
        let left = self.combiner.forward(&self.encoder, &example.left)?;
        let right = self.combiner.forward(&self.encoder, &example.right)?;
        let features = pair_features(&left.pooled, &right.pooled);
        let logits = self.head.logits(&features);
        let (loss, d_logits) = softmax_cross_entropy(&logits, &one_hot(example.label, self.classes()));
        let d_features = self.head.backward(&features, &d_logits, &mut grad.head);
        let (du, dv) = pair_features_backward(&left.pooled, &right.pooled, &d_features);
        self.combiner.backward(
            &self.encoder,
            &example.left,
            &left,
            &du,
            &mut grad.combiner,
            &mut grad.encoder,
        );
        self.combiner.backward(
            &self.encoder,
            &example.right,
            &right,
            &dv,
            &mut grad.combiner,
            &mut grad.encoder,
        );
        Ok(loss)
    }

    /// Mean loss of a batch and its gradient.
    pub fn loss_and_grad(&self, batch: &[&PairExample]) -> Result<(f64, PairModel)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut grad = self.zeros_like();
        let mut total = 0.0;
        for ex in batch {
            total += self.accumulate_gradient(ex, &mut grad)?;
        }
        let scale = 1.0 / batch.len() as f64;
        grad.visit_mut("", &mut |_, v| v.iter_mut().for_each(|g| *g *= scale));
        Ok((total * scale, grad))
    }

    pub fn to_text(&self) -> String {
        let c = &self.combiner;
        let dims: Vec<String> = c.source_dims().iter().map(usize::to_string).collect();
        let mut out = format!(
            "{}\nsources={} dims={} d_prime={} m={} m_enc={} classes={} seed={}\n",
            c.mode.header(),
            c.source_count(),
            dims.join(","),
            c.d_prime,
            c.attention_hidden(),
            self.encoder.hidden_dim(),
            self.classes(),
            c.seed
        );
        write_parameters(&mut out, "", self);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        model_io::write_file(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut LineReader::open(path)?)
    }

    pub fn read<R: BufRead>(reader: &mut LineReader<R>) -> Result<Self> {
        let header = reader.expect_line("model header")?;
        let mode = Mode::from_header(&header)
            .ok_or_else(|| reader.error(format!("not a dynamic combiner file (header '{header}')")))?;
        let params = reader.expect_line("parameter line")?;
        let kv = model_io::key_values(&params);
        let count = |key: &str| -> Result<usize> {
            model_io::lookup(&kv, key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| reader.error(format!("missing or malformed {key}=")))
        };
        let (sources, d_prime, m, m_enc, classes) =
            (count("sources")?, count("d_prime")?, count("m")?, count("m_enc")?, count("classes")?);
        let seed: u64 = model_io::lookup(&kv, "seed")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| reader.error("missing or malformed seed="))?;
        let source_dims: Vec<usize> = model_io::lookup(&kv, "dims")
            .and_then(model_io::parse_list)
            .ok_or_else(|| reader.error("missing or malformed dims="))?;
        if source_dims.len() != sources {
            return Err(reader.error(format!("{sources} sources but {} dims", source_dims.len())));
        }
        let shape = ModelShape {
            mode,
            source_dims: &source_dims,
            d_prime,
            m,
            m_enc,
            classes,
        };
        let mut model = PairModel::new(shape, seed).map_err(|e| reader.error(e.to_string()))?;
        read_parameters(reader, "", &mut model)?;
        reader.expect_end()?;
        Ok(model)
    }
}

impl Parameters for PairModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize)) {
        self.combiner.visit(prefix, f);
        self.encoder.visit(&join(prefix, "enc"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        self.combiner.visit_mut(prefix, f);
        self.encoder.visit_mut(&join(prefix, "enc"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Mini-batch Adam on mean cross-entropy. Returns the mean training loss of
/// each completed epoch. Batch order is reshuffled every epoch from the
/// configured seed. With `patience > 0`, stops once that many consecutive
/// epochs fail to lower the best epoch loss.
pub fn train_dynamic_combiner(
    model: &mut PairModel,
    examples: &[PairExample],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for ex in examples {
        model.check_label(ex)?;
    }
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.betas.0,
        beta2: config.betas.1,
        epsilon: 1e-8,
    };
    let mut adam = Adam::new(adam_config, model.num_params());
    let mut rng = seeded(config.seed, stream::SHUFFLE);
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        let order = permutation(&mut rng, examples.len());
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&PairExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grad) = model.loss_and_grad(&batch)?;
            let finite_grad = grad.flatten().iter().all(|g| g.is_finite());
            if !loss.is_finite() || !finite_grad {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b + 1,
                });
            }
            total += loss * batch.len() as f64;
            adam.update(model, &grad);
        }
        let mean = total / examples.len() as f64;
        log::debug!("epoch {} mean loss {mean:.6}", epoch + 1);
        history.push(mean);
        if mean < best {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                break;
            }
        }
    }
    Ok(history)
}

/// `epoch,mean_loss` CSV of a loss history, epochs counted from 1.
pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, loss) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, model_io::format_real(*loss)));
    }
    out
}

/// Token matrices of every pair in `dataset`, one per source table.
/// Fails listing the unresolved `id (source)` lookups when any are missing.
pub fn pair_examples(tables: &[SequenceTable], dataset: &PairDataset) -> Result<Vec<PairExample>> {
    let mut missing = Vec::new();
    let mut side = |id: &str| -> Vec<Matrix> {
        let mut out = Vec::with_capacity(tables.len());
        for t in tables {
            match t.get(id) {
                Some(m) => out.push(m.clone()),
                None => missing.push(format!("{id} ({})", t.source_name())),
            }
        }
        out
    };
    let mut examples = Vec::with_capacity(dataset.len());
    for p in &dataset.pairs {
        let Label::Class(label) = p.label else {
            return Err(Error::InvalidArgument(format!("dataset {} has scores, not class labels", dataset.name)));
        };
        examples.push(PairExample {
            left: side(&p.id_a),
            right: side(&p.id_b),
            label,
        });
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        let shown = missing.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        let more = if missing.len() > 20 {
            format!(" (and {} more)", missing.len() - 20)
        } else {
            String::new()
        };
        return Err(Error::MissingIds(format!("{} lookups failed: {shown}{more}", missing.len())));
    }
    Ok(examples)
}
