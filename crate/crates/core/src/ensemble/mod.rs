//! Ensemble meta-embeddings: concatenation, SVD over the concatenation, and
//! generalized canonical correlation analysis over the aligned views.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model_io::LineReader;
use crate::store::{AlignedViews, VectorTable};

mod concat;
mod gcca;
mod svd;

pub use concat::{concat_combine, concat_rows};
pub use gcca::{fit_gcca, GccaModel, DEFAULT_TAU};
pub use svd::{default_svd_dim, fit_svd_meta, SvdMetaModel, DEFAULT_SVD_DIM};

/// A fitted linear combiner loaded from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleModel {
    Svd(SvdMetaModel),
    Gcca(GccaModel),
}

impl EnsembleModel {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = LineReader::open(path)?;
        Self::read(&mut reader)
    }

    pub fn read<R: BufRead>(reader: &mut LineReader<R>) -> Result<Self> {
        let header = reader.expect_line("model header")?;
        match header.trim() {
            svd::HEADER => Ok(EnsembleModel::Svd(SvdMetaModel::read_body(reader)?)),
            gcca::HEADER => Ok(EnsembleModel::Gcca(GccaModel::read_body(reader)?)),
            other => Err(reader.error(format!("unrecognized model header '{other}'"))),
        }
    }

    pub fn apply(&self, views: &AlignedViews) -> Result<VectorTable> {
        match self {
            EnsembleModel::Svd(m) => m.apply(views),
            EnsembleModel::Gcca(m) => m.apply(views),
        }
    }

    pub fn input_dims(&self) -> &[usize] {
        match self {
            EnsembleModel::Svd(m) => &m.input_dims,
            EnsembleModel::Gcca(m) => &m.input_dims,
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            EnsembleModel::Svd(m) => m.to_text(),
            EnsembleModel::Gcca(m) => m.to_text(),
        }
    }
}

pub(crate) fn check_view_dims(expected: &[usize], views: &AlignedViews) -> Result<()> {
    if views.view_count() != expected.len() {
        return Err(Error::DimMismatch(format!(
            "model expects {} view(s), got {}",
            expected.len(),
            views.view_count()
        )));
    }
    for (i, ((name, m), &d)) in views.views.iter().zip(expected).enumerate() {
        if m.cols() != d {
            return Err(Error::DimMismatch(format!(
                "view {i} ('{name}') has dimension {}, model expects {d}",
                m.cols()
            )));
        }
    }
    Ok(())
}
