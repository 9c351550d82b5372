use std::io::BufRead;

use crate::error::{Error, Result};
use crate::linalg::{column_means_and_center, l2_normalize_rows, thin_svd, Matrix};
use crate::model_io::{self, write_block, write_vector_block, LineReader};
use crate::store::{AlignedViews, VectorTable};

use super::{check_view_dims, concat::concat_rows};

pub(super) const HEADER: &str = "SVDMETA v1";

/// Output dimensionality used when none is requested, before capping by the data.
pub const DEFAULT_SVD_DIM: usize = 3072;

/// `min(3072, k, n)` for `n` samples of total width `k`.
pub fn default_svd_dim(views: &AlignedViews) -> usize {
    let k: usize = views.dims().iter().sum();
    DEFAULT_SVD_DIM.min(k).min(views.len())
}

/// Projection of centered concatenations onto their leading right-singular directions.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdMetaModel {
    pub input_dims: Vec<usize>,
    pub d: usize,
    /// `k x d`, orthonormal columns.
    pub projection: Matrix,
    pub concat_means: Vec<f64>,
}

pub fn fit_svd_meta(views: &AlignedViews, d: usize) -> Result<SvdMetaModel> {
    let input_dims = views.dims();
    let k: usize = input_dims.iter().sum();
    let n = views.len();
    let upper = n.min(k);
    if d == 0 || d > upper {
        return Err(Error::InvalidArgument(format!(
            "SVD dimension must satisfy 1 <= d <= min(samples, width) = {upper}, got {d}"
        )));
    }
    let (concat_means, centered) = column_means_and_center(&concat_rows(views));
    let svd = thin_svd(&centered)?;
    Ok(SvdMetaModel {
        input_dims,
        d,
        projection: svd.v.leading_columns(d),
        concat_means,
    })
}

impl SvdMetaModel {
    /// Centered, projected rows before normalization.
    pub fn project(&self, views: &AlignedViews) -> Result<Matrix> {
        check_view_dims(&self.input_dims, views)?;
        let mut x = concat_rows(views);
        for r in 0..x.rows() {
            for (v, mu) in x.row_mut(r).iter_mut().zip(&self.concat_means) {
                *v -= mu;
            }
        }
        Ok(x.matmul(&self.projection))
    }

    /// Unit-norm SVD meta-embeddings; similarities between them are plain dot products.
    pub fn apply(&self, views: &AlignedViews) -> Result<VectorTable> {
        let normalized = l2_normalize_rows(&self.project(views)?);
        VectorTable::new("svd", views.ids.clone(), normalized.matrix)
    }

    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.input_dims.iter().map(usize::to_string).collect();
        let mut out = format!("{HEADER}\ndims={} d={}\n", dims.join(","), self.d);
        write_vector_block(&mut out, "means", &self.concat_means);
        write_block(&mut out, "projection", &self.projection);
        out
    }

    pub(super) fn read_body<R: BufRead>(reader: &mut LineReader<R>) -> Result<Self> {
        let params = reader.expect_line("parameter line")?;
        let kv = model_io::key_values(&params);
        let input_dims: Vec<usize> = model_io::lookup(&kv, "dims")
            .and_then(model_io::parse_list)
            .ok_or_else(|| reader.error("missing or malformed dims="))?;
        let d: usize = model_io::lookup(&kv, "d")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| reader.error("missing or malformed d="))?;
        let k: usize = input_dims.iter().sum();
        if input_dims.is_empty() || input_dims.contains(&0) || d == 0 || d > k {
            return Err(reader.error("inconsistent dims/d"));
        }
        let concat_means = reader.read_vector_block("means", k)?;
        let projection = reader.read_block_shaped("projection", k, d)?;
        reader.expect_end()?;
        Ok(SvdMetaModel {
            input_dims,
            d,
            projection,
            concat_means,
        })
    }
}
