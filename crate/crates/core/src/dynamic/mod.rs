//! Dynamic meta-embeddings: per-source projections mixed by softmax attention
//! (DME), optionally with attention logits read from a small BiLSTM over each
//! source (CDME), then encoded by a BiLSTM with max-pooling.
//!
//! Sentence-level sources enter as length-1 sequences.

mod combiner;
mod gradcheck;
mod lstm;
mod train;

pub use combiner::{combine_weighted, dynamic_embed_sentence, DynamicCombiner};
pub use gradcheck::{gradient_check, relative_error, GradientCheckReport};
pub use lstm::{bilstm_max_encode, max_pool, BiLstm, BiLstmEncoder, BiLstmTrace, Lstm, LstmTrace};
pub use train::{loss_history_csv, pair_examples, train_dynamic_combiner, ModelShape, PairExample, PairModel};

use crate::error::{Error, Result};

pub const DEFAULT_D_PRIME: usize = 64;
pub const DEFAULT_ATTENTION_HIDDEN: usize = 2;
pub const DEFAULT_ENCODER_HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Dme,
    Cdme,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Dme => "dme",
            Mode::Cdme => "cdme",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Mode::Dme => "DME v1",
            Mode::Cdme => "CDME v1",
        }
    }

    pub fn from_header(line: &str) -> Option<Mode> {
        match line.trim() {
            "DME v1" => Some(Mode::Dme),
            "CDME v1" => Some(Mode::Cdme),
            _ => None,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "dme" => Ok(Mode::Dme),
            "cdme" => Ok(Mode::Cdme),
            _ => Err(Error::InvalidArgument(format!("unknown mode '{s}' (expected dme or cdme)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Adam first and second moment decay.
    pub betas: (f64, f64),
    pub seed: u64,
    /// Epochs without a lower training loss before stopping; 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 20,
            betas: (0.9, 0.999),
            seed: 0,
            patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let betas_ok = [self.betas.0, self.betas.1].iter().all(|b| (0.0..1.0).contains(b));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 || !betas_ok {
            return Err(Error::InvalidArgument(format!(
                "invalid training config: lr={} batch={} betas={:?}",
                self.learning_rate, self.batch_size, self.betas
            )));
        }
        Ok(())
    }
}
