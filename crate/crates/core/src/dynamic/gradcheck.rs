use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::rng::{permutation, seeded, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    /// Coordinates compared, over all blocks.
    pub checked: usize,
    /// Per block: name, coordinates compared, worst relative error.
    pub blocks: Vec<(String, usize, f64)>,
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Compares `analytic` (a gradient laid out like `model`) with central
/// differences of `loss`. Up to `per_block` coordinates of every block are
/// sampled (all of them when the block is smaller).
pub fn gradient_check<P, F>(
    model: &P,
    analytic: &P,
    loss: F,
    epsilon: f64,
    per_block: usize,
    seed: u64,
) -> Result<GradientCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must lie in [1e-7, 1e-4], got {epsilon}"
        )));
    }
    let flat = model.flatten();
    let grads = analytic.flatten();
    if grads.len() != flat.len() {
        return Err(Error::DimMismatch("gradient and model differ in size".into()));
    }
    let mut rng = seeded(seed, stream::GRADIENT_CHECK);
    let mut probe = model.clone();
    let mut report = GradientCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        blocks: Vec::new(),
    };
    let mut offset = 0;
    for (name, len) in model.blocks() {
        let mut coords: Vec<usize> = permutation(&mut rng, len).into_iter().take(per_block).collect();
        coords.sort_unstable();
        let mut worst = 0.0f64;
        for &c in &coords {
            let idx = offset + c;
            let mut shifted = flat.clone();
            shifted[idx] = flat[idx] + epsilon;
            probe.assign(&shifted);
            let up = loss(&probe);
            shifted[idx] = flat[idx] - epsilon;
            probe.assign(&shifted);
            let down = loss(&probe);
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(grads[idx], numeric));
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report.checked += coords.len();
        report.blocks.push((name, coords.len(), worst));
        offset += len;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug)]
    struct Linear {
        w: Vec<f64>,
    }

    impl Parameters for Linear {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64], usize)) {
            f(format!("{prefix}w"), &self.w, self.w.len());
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
            f(format!("{prefix}w"), &mut self.w);
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let x = [0.5, -1.5, 2.0, 3.25];
        let model = Linear {
            w: vec![0.1, 0.2, -0.3, 0.4],
        };
        let grad = Linear { w: x.to_vec() };
        let loss = |m: &Linear| m.w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let report = gradient_check(&model, &grad, loss, 1e-5, 200, 1).unwrap();
        assert!(report.max_relative_error < 1e-8);
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let model = Linear { w: vec![1.0, 2.0] };
        let grad = Linear { w: vec![2.0, 0.0] };
        let loss = |m: &Linear| m.w.iter().map(|v| v * v).sum::<f64>();
        let report = gradient_check(&model, &grad, loss, 1e-5, 200, 1).unwrap();
        assert!(report.max_relative_error > 0.9);
    }

    #[test]
    fn epsilon_range_is_enforced() {
        let model = Linear { w: vec![1.0] };
        let loss = |_: &Linear| 0.0;
        assert!(gradient_check(&model, &model, loss, 1e-3, 1, 1).is_err());
        assert!(gradient_check(&model, &model, loss, 1e-8, 1, 1).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
    }
}
