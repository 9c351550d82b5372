use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// `a·b / (‖a‖ ‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch(format!(
            "cosine of vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine similarity is undefined for a zero vector".into(),
        ));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Maps a cosine onto `[lo, hi]`; negative cosines go to `lo`.
pub fn scale_similarity(cos: f64, lo: f64, hi: f64) -> f64 {
    lo + cos.max(0.0) * (hi - lo)
}

/// Pearson correlation by the two-pass centered formula.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs two sequences of equal length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("first input (x) is constant".into()));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("second input (y) is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Percentage of positions where `predicted` equals `gold`.
pub fn accuracy<T: PartialEq>(predicted: &[T], gold: &[T]) -> Result<f64> {
    if predicted.len() != gold.len() || gold.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "accuracy needs equal non-empty label lists, got {} and {}",
            predicted.len(),
            gold.len()
        )));
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Single-pass textbook arrangement, used only as an oracle.
    fn pearson_single_pass(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -2.0, 5.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-15);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_similarity(1.0, 0.0, 5.0), 5.0);
        assert_eq!(scale_similarity(-0.2, 0.0, 5.0), 0.0);
        assert_eq!(scale_similarity(0.5, 0.0, 5.0), 2.5);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        match pearson(&[1.0, 2.0], &[3.0, 3.0]) {
            Err(Error::ZeroVariance(msg)) => assert!(msg.contains("second")),
            r => panic!("unexpected {r:?}"),
        }
        match pearson(&[1.0, 1.0], &[3.0, 4.0]) {
            Err(Error::ZeroVariance(msg)) => assert!(msg.contains("first")),
            r => panic!("unexpected {r:?}"),
        }
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        assert_eq!(accuracy(&[1, 2], &[2, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 75.0);
        assert!(accuracy::<u8>(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    fn seq(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, n)
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(a in seq(6), b in seq(6), alpha in 0.01f64..100.0, beta in 0.01f64..100.0) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let scaled_a: Vec<f64> = a.iter().map(|v| alpha * v).collect();
            let scaled_b: Vec<f64> = b.iter().map(|v| beta * v).collect();
            let base = cosine_similarity(&a, &b).unwrap();
            prop_assert!((cosine_similarity(&scaled_a, &scaled_b).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn pearson_matches_single_pass_and_is_symmetric(x in seq(12), y in seq(12)) {
            let p = pearson(&x, &y).unwrap();
            prop_assert!((p - pearson_single_pass(&x, &y)).abs() < 1e-12);
            prop_assert_eq!(p.to_bits(), pearson(&y, &x).unwrap().to_bits());
            prop_assert!((-1.0..=1.0).contains(&p));
        }

        #[test]
        fn pearson_affine_invariance(x in seq(10), c1 in -10.0f64..10.0, c2 in 0.1f64..10.0) {
            let up: Vec<f64> = x.iter().map(|v| c1 + c2 * v).collect();
            let down: Vec<f64> = x.iter().map(|v| c1 - c2 * v).collect();
            prop_assert!((pearson(&x, &up).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((pearson(&x, &down).unwrap() + 1.0).abs() < 1e-12);
        }
    }
}
