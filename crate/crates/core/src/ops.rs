//! Elementwise kernels: flattened softmax, logistic helpers and BCE.

use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Softmax over *every* entry of `logits`, so the output lies on the simplex
/// of all `rows * cols` cells.
pub fn softmax_flat(logits: &Matrix) -> Matrix {
    let probs = softmax(logits.as_slice());
    Matrix::from_vec(logits.rows(), logits.cols(), probs).expect("shape preserved")
}

/// Softmax of a flat slice; empty input yields empty output.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let Some(max) = logits.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Pulls a gradient with respect to softmax probabilities back to the logits:
/// `dz_j = p_j * (dp_j - sum_m p_m dp_m)`.
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    debug_assert_eq!(probs.len(), grad_probs.len());
    let inner: f64 = probs.iter().zip(grad_probs).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(grad_probs)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

/// Sum that depends only on the multiset of `terms`: they are sorted, then
/// added left to right. Swapping two players therefore never changes a
/// coalition total, not even in the last bit.
pub fn order_free_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().fold(0.0, |acc, t| acc + t)
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Per-class binary cross-entropy on logits plus its mean over classes.
///
/// Each term is `softplus(z) - y*z`, evaluated as
/// `max(z, 0) - y*z + ln(1 + e^{-|z|})`, which is nonnegative for `y` in {0,1}.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<(Vec<f64>, f64)> {
    if logits.len() != labels.len() {
        return Err(Error::shape("bce_with_logits", logits.len(), labels.len()));
    }
    check_labels(labels)?;
    let per_class: Vec<f64> = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_term(z, y))
        .collect();
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().sum::<f64>() / per_class.len() as f64
    };
    Ok((per_class, mean))
}

#[inline]
pub(crate) fn bce_term(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + libm::log1p(libm::exp(-z.abs()))
}

/// Derivative of one BCE term with respect to its logit.
#[inline]
pub(crate) fn bce_term_grad(z: f64, y: f64) -> f64 {
    sigmoid(z) - y
}

pub(crate) fn check_labels(labels: &[f64]) -> Result<()> {
    if let Some((k, y)) = labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y != 0.0 && y != 1.0)
    {
        return Err(Error::Input(alloc::format!(
            "label {k} is {y}; labels must be 0 or 1"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn order_free_sum_ignores_order(mut terms in proptest::collection::vec(-1e3f64..1e3, 0..12), rotate in 0usize..12) {
            let mut shuffled = terms.clone();
            if !shuffled.is_empty() {
                let r = rotate % shuffled.len();
                shuffled.rotate_left(r);
                shuffled.reverse();
            }
            prop_assert_eq!(order_free_sum(&mut terms).to_bits(), order_free_sum(&mut shuffled).to_bits());
        }
    }

    #[test]
    fn softmax_symmetric_pair() {
        let m = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_flat(&m).as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_one_to_three_ratio() {
        let m = Matrix::from_vec(1, 2, vec![0.0, libm::log(3.0)]).unwrap();
        let p = softmax_flat(&m);
        assert!((p.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((p.get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_uniform_five_by_eight() {
        let p = softmax_flat(&Matrix::zeros(5, 8));
        assert_eq!(p.shape(), crate::tensor::Shape(5, 8));
        assert!(p.as_slice().iter().all(|&v| v == 0.025));
    }

    #[test]
    fn softmax_empty() {
        assert!(softmax_flat(&Matrix::zeros(0, 3)).is_empty());
    }

    #[test]
    fn bce_reference_points() {
        let (l, _) = bce_with_logits(&[0.0], &[1.0]).unwrap();
        assert!((l[0] - core::f64::consts::LN_2).abs() < 1e-15);

        let (l, _) = bce_with_logits(&[40.0], &[1.0]).unwrap();
        assert!(l[0] < 1e-15 && l[0] >= 0.0);

        // softplus(1) = ln(1 + e)
        let (l, _) = bce_with_logits(&[1.0], &[0.0]).unwrap();
        assert!((l[0] - 1.313_261_687_518_223_2).abs() < 1e-12);
    }

    #[test]
    fn bce_rejects_non_binary_labels() {
        let err = bce_with_logits(&[0.0, 1.0], &[1.0, 0.5]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(bce_with_logits(&[0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let logits = [0.3, -1.2, 0.7, 0.0];
        let upstream = [1.0, -2.0, 0.5, 3.0];
        let f = |z: &[f64]| -> f64 {
            softmax(z).iter().zip(&upstream).map(|(p, g)| p * g).sum()
        };
        let analytic = softmax_backward(&softmax(&logits), &upstream);
        for j in 0..logits.len() {
            let mut plus = logits;
            let mut minus = logits;
            plus[j] += 1e-6;
            minus[j] -= 1e-6;
            let numeric = (f(&plus) - f(&minus)) / 2e-6;
            assert!((numeric - analytic[j]).abs() < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn softmax_lands_on_simplex(
            rows in 1usize..6,
            cols in 1usize..9,
            seed in proptest::collection::vec(-30.0f64..30.0, 48),
        ) {
            let data: Vec<f64> = seed.iter().copied().cycle().take(rows * cols).collect();
            let p = softmax_flat(&Matrix::from_vec(rows, cols, data).unwrap());
            let min = p.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min > 0.0);
            prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(z in proptest::collection::vec(-10.0f64..10.0, 1..12), c in -50.0f64..50.0) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let a = softmax(&z);
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn bce_nonnegative_and_flip_symmetric(z in -60.0f64..60.0, positive in any::<bool>()) {
            let y = if positive { 1.0 } else { 0.0 };
            let (a, _) = bce_with_logits(&[z], &[y]).unwrap();
            let (b, _) = bce_with_logits(&[-z], &[1.0 - y]).unwrap();
            prop_assert!(a[0] >= 0.0);
            prop_assert_eq!(a[0], b[0]);
        }
    }
}
