//! Supervised probe: a softmax classifier (optionally with one sigmoid hidden
//! layer) trained on frozen pair features in rounds, with early stopping on a
//! dev metric.

use crate::error::{Error, Result};
use crate::nn::{join, softmax, softmax_cross_entropy, Adam, AdamConfig, LinearHead, Parameters};
use crate::rng::{permutation, seeded, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    /// Hidden units; 0 gives plain multinomial logistic regression.
    pub nhid: usize,
    pub optim: String,
    pub batch_size: usize,
    /// Consecutive non-improving evaluation rounds tolerated before stopping.
    pub tenacity: usize,
    /// Epochs per evaluation round.
    pub epoch_size: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub learning_rate: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            nhid: 0,
            optim: "adam".into(),
            batch_size: 64,
            tenacity: 5,
            epoch_size: 4,
            seed: 1111,
            max_epochs: 200,
            learning_rate: 1e-3,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.optim != "adam" {
            return Err(Error::InvalidArgument(format!(
                "unsupported probe optimizer '{}' (only adam)",
                self.optim
            )));
        }
        if self.batch_size == 0 || self.tenacity == 0 || self.epoch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "probe batch size, tenacity, epoch size and epoch cap must all be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad probe learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    pub hidden: Option<LinearHead>,
    pub output: LinearHead,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ProbeModel {
    pub fn new(inputs: usize, classes: usize, nhid: usize, seed: u64) -> Self {
        let mut rng = seeded(seed, stream::PROBE_INIT);
        if nhid == 0 {
            ProbeModel {
                hidden: None,
                output: LinearHead::new(&mut rng, inputs, classes),
            }
        } else {
            let hidden = LinearHead::new(&mut rng, inputs, nhid);
            ProbeModel {
                hidden: Some(hidden),
                output: LinearHead::new(&mut rng, nhid, classes),
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        match &self.hidden {
            None => self.output.logits(x),
            Some(h) => {
                let a: Vec<f64> = h.logits(x).into_iter().map(sigmoid).collect();
                self.output.logits(&a)
            }
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    fn accumulate(&self, x: &[f64], target: &[f64], grad: &mut ProbeModel) -> f64 {
        match (&self.hidden, grad.hidden.as_mut()) {
            (None, _) => {
                let (loss, d) = softmax_cross_entropy(&self.output.logits(x), target);
                self.output.backward(x, &d, &mut grad.output);
                loss
            }
            (Some(h), Some(gh)) => {
                let a: Vec<f64> = h.logits(x).into_iter().map(sigmoid).collect();
                let (loss, d) = softmax_cross_entropy(&self.output.logits(&a), target);
                let da = self.output.backward(&a, &d, &mut grad.output);
                let dz: Vec<f64> = da.iter().zip(&a).map(|(g, s)| g * s * (1.0 - s)).collect();
                h.backward(x, &dz, gh);
                loss
            }
            (Some(_), None) => unreachable!("gradient shaped like the model"),
        }
    }
}

impl Parameters for ProbeModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize)) {
        if let Some(h) = &self.hidden {
            h.visit(&join(prefix, "hidden"), f);
        }
        self.output.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        if let Some(h) = &mut self.hidden {
            h.visit_mut(&join(prefix, "hidden"), f);
        }
        self.output.visit_mut(&join(prefix, "out"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    /// Parameters of the best dev round.
    pub model: ProbeModel,
    pub rounds: usize,
    /// Non-improving rounds at the end of training.
    pub stale_rounds: usize,
    pub epochs: usize,
    pub best_dev: f64,
}

/// Trains on rows `features` against target distributions `targets`, scoring
/// every `epoch_size` epochs with `dev_score` (higher is better).
pub fn train_probe(
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
    classes: usize,
    config: &ProbeConfig,
    dev_score: impl Fn(&ProbeModel) -> f64,
) -> Result<ProbeOutcome> {
    config.validate()?;
    if features.is_empty() || features.len() != targets.len() {
        return Err(Error::InvalidArgument("probe needs a non-empty training set".into()));
    }
    let mut model = ProbeModel::new(features[0].len(), classes, config.nhid, config.seed);
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_config, model.num_params());
    let mut rng = seeded(config.seed, stream::PROBE_SHUFFLE);
    let mut best = (f64::NEG_INFINITY, model.clone());
    let (mut rounds, mut stale, mut epochs) = (0, 0, 0);
    while epochs < config.max_epochs && stale < config.tenacity {
        for _ in 0..config.epoch_size.min(config.max_epochs - epochs) {
            let order = permutation(&mut rng, features.len());
            for (b, chunk) in order.chunks(config.batch_size).enumerate() {
                let mut grad = model.zeros_like();
                let mut loss = 0.0;
                for &i in chunk {
                    loss += model.accumulate(&features[i], &targets[i], &mut grad);
                }
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: epochs + 1,
                        batch: b + 1,
                    });
                }
                let scale = 1.0 / chunk.len() as f64;
                grad.visit_mut("", &mut |_, v| v.iter_mut().for_each(|g| *g *= scale));
                adam.update(&mut model, &grad);
            }
            epochs += 1;
        }
        rounds += 1;
        let score = dev_score(&model);
        log::debug!("probe round {rounds}: dev {score:.6}");
        if score > best.0 {
            best = (score, model.clone());
            stale = 0;
        } else {
            stale += 1;
        }
    }
    Ok(ProbeOutcome {
        model: best.1,
        rounds,
        stale_rounds: stale,
        epochs,
        best_dev: best.0,
    })
}
