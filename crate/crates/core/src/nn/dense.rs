//! Fully connected layer. Weights are `(out_features, in_features)`, the input
//! is flattened per sample in C·H·W order and the output is `(N, out, 1, 1)`.

use alloc::format;

use super::tensor::{shape_error, Scalar, Shape, Tensor4};
use crate::error::Result;

fn check(x: Shape, in_features: usize, out_features: usize, weight: usize, bias: usize) -> Result<()> {
    if x.sample_len() != in_features {
        return Err(shape_error("fully_connected", format!("{in_features} input features"), x));
    }
    if weight != in_features * out_features || bias != out_features {
        return Err(shape_error(
            "fully_connected params",
            format!("{out_features}x{in_features} weights, {out_features} biases"),
            format!("{weight} weights, {bias} biases"),
        ));
    }
    Ok(())
}

pub fn fully_connected<T: Scalar>(x: &Tensor4<T>, out_features: usize, weight: &[T], bias: &[T]) -> Result<Tensor4<T>> {
    let s = x.shape();
    let inf = s.sample_len();
    check(s, inf, out_features, weight.len(), bias.len())?;
    let mut out = Tensor4::zeros(Shape::new(s.n, out_features, 1, 1));
    for n in 0..s.n {
        let o = out.sample_mut(n);
        o.copy_from_slice(bias);
        T::gemm(out_features, inf, 1, weight, (inf as isize, 1), x.sample(n), (1, 1), T::one(), o, (1, 1));
    }
    Ok(out)
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub fn fully_connected_backward_into<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    grad_out: &Tensor4<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Result<Tensor4<T>> {
    let s = x.shape();
    let inf = s.sample_len();
    let outf = grad_out.shape().sample_len();
    check(s, inf, outf, weight.len(), gb.len())?;
    if grad_out.shape() != Shape::new(s.n, outf, 1, 1) || gw.len() != weight.len() {
        return Err(shape_error("fully_connected backward", Shape::new(s.n, outf, 1, 1), grad_out.shape()));
    }
    let mut gx = Tensor4::zeros(s);
    for n in 0..s.n {
        let g = grad_out.sample(n);
        for (b, &v) in gb.iter_mut().zip(g) {
            *b += v;
        }
        // dW += g xᵀ
        T::gemm(outf, 1, inf, g, (1, 1), x.sample(n), (1, 1), T::one(), gw, (inf as isize, 1));
        // dx = Wᵀ g
        T::gemm(inf, outf, 1, weight, (1, inf as isize), g, (1, 1), T::zero(), gx.sample_mut(n), (1, 1));
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_function, Tolerance};
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn affine_map() {
        let x = Tensor4::from_vec(Shape::new(2, 3, 1, 1), vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let w = [1.0, 0.0, 0.0, 0.5, 0.5, 0.5];
        let y = fully_connected(&x, 2, &w, &[0.0, 1.0]).unwrap();
        assert_eq!(y.data(), &[1.0, 4.0, -1.0, 1.0]);
        assert!(fully_connected(&x, 3, &w, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn gradcheck_all_inputs() {
        let s = Shape::new(2, 2, 2, 2);
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..24).map(|i| (i as f64 * 0.11).cos()).collect();
        let b = vec![0.1, -0.2, 0.3];
        let p = vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75];
        let xt = Tensor4::from_vec(s, x.clone()).unwrap();
        let pt = Tensor4::from_vec(Shape::new(2, 3, 1, 1), p.clone()).unwrap();
        let mut gw = vec![0.0; 24];
        let mut gb = vec![0.0; 3];
        let gx = fully_connected_backward_into(&xt, &w, &pt, &mut gw, &mut gb).unwrap();
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            let y = fully_connected(&Tensor4::from_vec(s, x.to_vec()).unwrap(), 3, w, b).unwrap();
            y.data().iter().zip(&p).map(|(a, c)| a * c).sum::<f64>()
        };
        let tol = Tolerance::default();
        check_function(&x, gx.data(), tol, |v| loss(v, &w, &b)).unwrap();
        check_function(&w, &gw, tol, |v| loss(&x, v, &b)).unwrap();
        check_function(&b, &gb, tol, |v| loss(&x, &w, v)).unwrap();
    }
}
