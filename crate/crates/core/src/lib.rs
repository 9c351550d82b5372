//! Meta-embeddings built from pre-trained source embedding tables.
//!
//! Sources enter as ID-keyed vector files ([`store`]). They can be combined by
//! the ensemble methods in [`ensemble`] (concatenation, SVD, generalized CCA)
//! or by the learned attention combiners in [`dynamic`] (DME and its
//! contextualized variant CDME). [`eval`] scores the results on sentence-pair
//! similarity and classification tasks.

pub mod digest;
pub mod dynamic;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model_io;
pub mod nn;
pub mod rng;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{EigenResult, Matrix};
pub use store::{AlignedViews, SequenceTable, VectorTable};
