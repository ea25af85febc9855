//! Softmax and cross-entropy.

use alloc::vec::Vec;

use super::tensor::{Scalar, Tensor4};
use crate::error::{Error, Result};

/// Numerically stable softmax (the maximum is subtracted first).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log p_label` and its gradient `p - onehot(label)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(f64, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    let loss = (lse - logits[label]).as_f64();
    let mut grad = softmax(logits);
    grad[label] -= T::one();
    Ok((loss, grad))
}

/// Summed cross-entropy over a batch of `(N, classes, 1, 1)` logits, with loss
/// and gradient divided by `normalizer`.
pub fn cross_entropy_batch<T: Scalar>(logits: &Tensor4<T>, labels: &[usize], normalizer: f64) -> Result<(f64, Tensor4<T>)> {
    let s = logits.shape();
    if labels.len() != s.n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: s.n,
        });
    }
    let scale = T::from_f64(1.0 / normalizer);
    let mut grad = Tensor4::zeros(s);
    let mut total = 0.0;
    for (n, &label) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.sample(n), label)?;
        total += l;
        for (d, v) in grad.sample_mut(n).iter_mut().zip(g) {
            *d = v * scale;
        }
    }
    Ok((total / normalizer, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_function, Tolerance};
    use crate::nn::tensor::Shape;
    use alloc::vec;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let (l, g) = softmax_cross_entropy(&[0.3f64; 8], 2).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-12);
        assert!((l - 2.0794).abs() < 1e-4);
        assert!((g[2] + 0.875).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let z = [1.0f64, -2.0, 0.5, 3.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let (a, ga) = softmax_cross_entropy(&z, 1).unwrap();
        let (b, gb) = softmax_cross_entropy(&shifted, 1).unwrap();
        assert!((a - b).abs() < 1e-12);
        for (x, y) in ga.iter().zip(&gb) {
            assert!((x - y).abs() < 1e-12);
        }
        let p = softmax(&[1000.0f64, 0.0]);
        assert!(p[0].is_finite() && (p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(softmax_cross_entropy(&[0.0f64; 3], 3), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn gradcheck_logits() {
        let z = vec![0.2, -1.3, 0.7, 2.1, -0.4];
        let (_, g) = softmax_cross_entropy(&z, 3).unwrap();
        let tol = Tolerance { rel: 1e-6, ..Tolerance::default() };
        check_function(&z, &g, tol, |v| softmax_cross_entropy(v, 3).unwrap().0).unwrap();
    }

    #[test]
    fn batch_normalization() {
        let logits = Tensor4::from_vec(Shape::new(2, 3, 1, 1), vec![0.0f64, 0.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        let (l, g) = cross_entropy_batch(&logits, &[0, 2], 2.0).unwrap();
        let (l0, _) = softmax_cross_entropy(logits.sample(0), 0).unwrap();
        let (l1, g1) = softmax_cross_entropy(logits.sample(1), 2).unwrap();
        assert!((l - (l0 + l1) / 2.0).abs() < 1e-12);
        assert!((g.sample(1)[2] - g1[2] / 2.0).abs() < 1e-12);
        assert!(cross_entropy_batch(&logits, &[0], 1.0).is_err());
    }
}
