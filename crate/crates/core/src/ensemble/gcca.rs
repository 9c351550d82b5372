//! Generalized CCA as a single generalized eigenproblem on block covariances.
//!
//! With `Σ_jk` the population cross-covariance of views `j` and `k`, the
//! stacked projection `θ = [θ_1; ...; θ_J]` solves `C θ = ρ B θ`, where `B` is
//! block-diagonal with the (regularized) within-view covariances and `C` holds
//! the cross-view blocks with a zero diagonal. Each within-view block gets
//! `(τ / d_j) · trace(Σ_jj)` added to its diagonal.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::linalg::{column_means_and_center, gen_eig_residuals, gen_sym_eig, Matrix};
use crate::model_io::{self, format_real, write_block, write_vector_block, LineReader};
use crate::store::{AlignedViews, VectorTable};

use super::check_view_dims;

pub(super) const HEADER: &str = "GCCA v1";

/// Regularization strength used when none is given.
pub const DEFAULT_TAU: f64 = 10.0;

/// Largest accepted normalized residual of a retained eigenpair.
pub const RESIDUAL_LIMIT: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct GccaModel {
    pub input_dims: Vec<usize>,
    pub d: usize,
    pub tau: f64,
    /// Retained generalized eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Normalized residual of each retained pair, measured at fit time.
    pub residuals: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// One `d_j x d` block per view.
    pub projections: Vec<Matrix>,
}

/// `aᵀ b / n` for row-aligned sample matrices.
fn cross_covariance(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows() as f64;
    let mut out = Matrix::zeros(a.cols(), b.cols());
    for (ra, rb) in a.row_iter().zip(b.row_iter()) {
        for (i, &x) in ra.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out.row_mut(i).iter_mut().zip(rb) {
                *o += x * y;
            }
        }
    }
    out.scale(1.0 / n)
}

pub fn fit_gcca(views: &AlignedViews, d: usize, tau: f64) -> Result<GccaModel> {
    let j_count = views.view_count();
    if j_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "GCCA needs at least two views, got {j_count}"
        )));
    }
    let n = views.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "GCCA needs at least two samples, got {n}"
        )));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tau must be a finite non-negative number, got {tau}"
        )));
    }
    let input_dims = views.dims();
    let total: usize = input_dims.iter().sum();
    if d == 0 || d > total {
        return Err(Error::InvalidArgument(format!(
            "GCCA dimension must satisfy 1 <= d <= {total}, got {d}"
        )));
    }

    let mut means = Vec::with_capacity(j_count);
    let mut centered = Vec::with_capacity(j_count);
    for (name, m) in &views.views {
        let (mu, c) = column_means_and_center(m);
        if c.max_abs() == 0.0 {
            return Err(Error::ZeroVariance(format!(
                "view '{name}' is constant across all samples"
            )));
        }
        means.push(mu);
        centered.push(c);
    }

    let offsets: Vec<usize> = input_dims
        .iter()
        .scan(0, |acc, &d| {
            let start = *acc;
            *acc += d;
            Some(start)
        })
        .collect();
    let mut b = Matrix::zeros(total, total);
    let mut c = Matrix::zeros(total, total);
    for j in 0..j_count {
        for k in j..j_count {
            let block = cross_covariance(&centered[j], &centered[k]);
            let (oj, ok) = (offsets[j], offsets[k]);
            if j == k {
                let shrink = tau / input_dims[j] as f64 * block.trace();
                for r in 0..input_dims[j] {
                    for s in 0..input_dims[j] {
                        // mirror the upper triangle so B is exactly symmetric
                        let v = if s >= r { block[(r, s)] } else { block[(s, r)] };
                        b[(oj + r, oj + s)] = v;
                    }
                    b[(oj + r, oj + r)] += shrink;
                }
            } else {
                for r in 0..input_dims[j] {
                    for s in 0..input_dims[k] {
                        c[(oj + r, ok + s)] = block[(r, s)];
                        c[(ok + s, oj + r)] = block[(r, s)];
                    }
                }
            }
        }
    }

    let eig = gen_sym_eig(&c, &b)?;
    let residuals: Vec<f64> = gen_eig_residuals(&c, &b, &eig).into_iter().take(d).collect();
    if let Some((index, &residual)) = residuals
        .iter()
        .enumerate()
        .find(|(_, &r)| r.is_nan() || r > RESIDUAL_LIMIT)
    {
        return Err(Error::EigenResidual {
            index,
            residual,
            limit: RESIDUAL_LIMIT,
        });
    }
    let projections = offsets
        .iter()
        .zip(&input_dims)
        .map(|(&o, &dj)| Matrix::from_fn(dj, d, |r, k| eig.vectors[(o + r, k)]))
        .collect();
    Ok(GccaModel {
        input_dims,
        d,
        tau,
        eigenvalues: eig.values[..d].to_vec(),
        residuals,
        means,
        projections,
    })
}

impl GccaModel {
    pub fn view_count(&self) -> usize {
        self.input_dims.len()
    }

    /// Per-view terms `Θ_jᵀ (x_j − μ_j)` for every sample, one `n x d` matrix per view.
    pub fn view_contributions(&self, views: &AlignedViews) -> Result<Vec<Matrix>> {
        check_view_dims(&self.input_dims, views)?;
        Ok(views
            .matrices()
            .zip(&self.means)
            .zip(&self.projections)
            .map(|((m, mu), theta)| {
                let mut x = m.clone();
                for r in 0..x.rows() {
                    for (v, u) in x.row_mut(r).iter_mut().zip(mu) {
                        *v -= u;
                    }
                }
                x.matmul(theta)
            })
            .collect())
    }

    /// `Σ_j Θ_jᵀ (x_j − μ_j)` for one sample given as one slice per view.
    pub fn transform_one(&self, sample: &[&[f64]]) -> Result<Vec<f64>> {
        if sample.len() != self.view_count() {
            return Err(Error::DimMismatch(format!(
                "model expects {} view(s), got {}",
                self.view_count(),
                sample.len()
            )));
        }
        let mut out = vec![0.0; self.d];
        for (j, ((x, mu), theta)) in sample.iter().zip(&self.means).zip(&self.projections).enumerate() {
            if x.len() != mu.len() {
                return Err(Error::DimMismatch(format!(
                    "view {j} has dimension {}, model expects {}",
                    x.len(),
                    mu.len()
                )));
            }
            let centered: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
            for (o, v) in out.iter_mut().zip(theta.tr_matvec(&centered)) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn apply(&self, views: &AlignedViews) -> Result<VectorTable> {
        let parts = self.view_contributions(views)?;
        let mut sum = parts[0].clone();
        for part in &parts[1..] {
            for (s, p) in sum.as_mut_slice().iter_mut().zip(part.as_slice()) {
                *s += p;
            }
        }
        VectorTable::new("gcca", views.ids.clone(), sum)
    }

    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.input_dims.iter().map(usize::to_string).collect();
        let mut out = format!(
            "{HEADER}\nviews={} dims={} d={} tau={}\n",
            self.view_count(),
            dims.join(","),
            self.d,
            format_real(self.tau)
        );
        write_vector_block(&mut out, "eigenvalues", &self.eigenvalues);
        write_vector_block(&mut out, "residuals", &self.residuals);
        for (j, (mu, theta)) in self.means.iter().zip(&self.projections).enumerate() {
            write_vector_block(&mut out, &format!("mean.{j}"), mu);
            write_block(&mut out, &format!("theta.{j}"), theta);
        }
        out
    }

    pub(super) fn read_body<R: BufRead>(reader: &mut LineReader<R>) -> Result<Self> {
        let params = reader.expect_line("parameter line")?;
        let kv = model_io::key_values(&params);
        let bad = |key: &str| reader.error(format!("missing or malformed {key}="));
        let view_count: usize = model_io::lookup(&kv, "views")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("views"))?;
        let input_dims: Vec<usize> = model_io::lookup(&kv, "dims")
            .and_then(model_io::parse_list)
            .ok_or_else(|| bad("dims"))?;
        let d: usize = model_io::lookup(&kv, "d")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("d"))?;
        let tau: f64 = model_io::lookup(&kv, "tau")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("tau"))?;
        if input_dims.len() != view_count || view_count < 2 || input_dims.contains(&0) || d == 0 {
            return Err(reader.error("inconsistent views/dims/d"));
        }
        let eigenvalues = reader.read_vector_block("eigenvalues", d)?;
        let residuals = reader.read_vector_block("residuals", d)?;
        let mut means = Vec::with_capacity(view_count);
        let mut projections = Vec::with_capacity(view_count);
        for (j, &dj) in input_dims.iter().enumerate() {
            means.push(reader.read_vector_block(&format!("mean.{j}"), dj)?);
            projections.push(reader.read_block_shaped(&format!("theta.{j}"), dj, d)?);
        }
        reader.expect_end()?;
        Ok(GccaModel {
            input_dims,
            d,
            tau,
            eigenvalues,
            residuals,
            means,
            projections,
        })
    }
}
