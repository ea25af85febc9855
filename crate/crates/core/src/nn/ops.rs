//! Depth concatenation, element-wise addition and global average pooling.

use alloc::vec::Vec;

use super::tensor::{shape_error, Scalar, Shape, Tensor4};
use crate::error::{invalid, Result};

/// Concatenates along the channel axis, preserving input order.
pub fn concat_depth<T: Scalar>(xs: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = xs.first().ok_or_else(|| invalid("concat of zero tensors"))?.shape();
    let mut c = 0;
    for x in xs {
        let s = x.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(shape_error("concat", alloc::format!("N={} H={} W={}", first.n, first.h, first.w), s));
        }
        c += s.c;
    }
    let shape = Shape::new(first.n, c, first.h, first.w);
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..first.n {
        for x in xs {
            data.extend_from_slice(x.sample(n));
        }
    }
    Tensor4::from_vec(shape, data)
}

/// Splits a concatenated gradient back into per-input slices.
pub fn concat_backward<T: Scalar>(grad: &Tensor4<T>, channels: &[usize]) -> Result<Vec<Tensor4<T>>> {
    let s = grad.shape();
    if channels.iter().sum::<usize>() != s.c {
        return Err(shape_error("concat backward", s.c, channels.iter().sum::<usize>()));
    }
    let plane = s.plane();
    let mut outs: Vec<Vec<T>> = channels.iter().map(|&c| Vec::with_capacity(s.n * c * plane)).collect();
    for n in 0..s.n {
        let sample = grad.sample(n);
        let mut off = 0;
        for (o, &c) in outs.iter_mut().zip(channels) {
            o.extend_from_slice(&sample[off * plane..(off + c) * plane]);
            off += c;
        }
    }
    outs.into_iter()
        .zip(channels)
        .map(|(d, &c)| Tensor4::from_vec(Shape::new(s.n, c, s.h, s.w), d))
        .collect()
}

pub fn add_elementwise<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    if a.shape() != b.shape() {
        return Err(shape_error("add", a.shape(), b.shape()));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Average over a `pool` window that must cover the whole plane.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>, pool: (usize, usize)) -> Result<Tensor4<T>> {
    let s = x.shape();
    if (s.h, s.w) != pool {
        return Err(shape_error("global_avg_pool", alloc::format!("{}x{} plane", pool.0, pool.1), s));
    }
    let plane = s.plane();
    let inv = T::one() / T::from_f64(plane as f64);
    let data = x.data().chunks_exact(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
    Tensor4::from_vec(Shape::new(s.n, s.c, 1, 1), data)
}

pub fn global_avg_pool_backward<T: Scalar>(grad: &Tensor4<T>, input: Shape) -> Result<Tensor4<T>> {
    let gs = grad.shape();
    if gs != Shape::new(input.n, input.c, 1, 1) {
        return Err(shape_error("global_avg_pool backward", Shape::new(input.n, input.c, 1, 1), gs));
    }
    let plane = input.plane();
    let inv = T::one() / T::from_f64(plane as f64);
    let mut data = Vec::with_capacity(input.len());
    for &g in grad.data() {
        data.extend(core::iter::repeat_n(g * inv, plane));
    }
    Tensor4::from_vec(input, data)
}
