//! Grouped, strided 2-D convolution with "same" zero padding.
//!
//! Implemented as cross-correlation (no kernel flip). Weights are laid out
//! `(out_channels, in_channels / groups, kh, kw)`. When the total padding is
//! odd the extra row/column goes to the bottom/right, so a stride-2 layer maps
//! `in` to `ceil(in / 2)`.

use alloc::format;
use alloc::vec::Vec;

use super::tensor::{shape_error, Scalar, Shape, Tensor4};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub groups: usize,
}

impl ConvSpec {
    pub const KERNELS: [(usize, usize); 4] = [(3, 3), (1, 3), (3, 1), (1, 1)];

    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: (1, 1),
            groups: 1,
        }
    }

    pub fn stride(mut self, sh: usize, sw: usize) -> Self {
        self.stride = (sh, sw);
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// One kernel per channel.
    pub fn depthwise(channels: usize, kernel: (usize, usize)) -> Self {
        Self::new(channels, channels, kernel).groups(channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(invalid("convolution channels and groups must be positive"));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(invalid(format!(
                "channels {}->{} not divisible by {} groups",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        if !Self::KERNELS.contains(&self.kernel) {
            return Err(invalid(format!("unsupported kernel {:?}", self.kernel)));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(invalid("stride must be positive"));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_per_group() * self.kernel.0 * self.kernel.1
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_per_group(), self.kernel.0, self.kernel.1]
    }

    pub fn fan_in(&self) -> usize {
        self.in_per_group() * self.kernel.0 * self.kernel.1
    }

    fn is_depthwise(&self) -> bool {
        self.in_per_group() == 1 && self.out_per_group() == 1
    }

    /// Output height/width and top/left padding for an input plane.
    pub fn geometry(&self, h: usize, w: usize) -> Geometry {
        let (oh, pt) = same_dim(h, self.kernel.0, self.stride.0);
        let (ow, pl) = same_dim(w, self.kernel.1, self.stride.1);
        Geometry {
            h,
            w,
            oh,
            ow,
            pad_top: pt,
            pad_left: pl,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(shape_error(
                "conv2d",
                format!("{} input channels", self.in_channels),
                input,
            ));
        }
        let g = self.geometry(input.h, input.w);
        Ok(Shape::new(input.n, self.out_channels, g.oh, g.ow))
    }
}

fn same_dim(len: usize, k: usize, s: usize) -> (usize, usize) {
    let out = len.div_ceil(s);
    let total = ((out - 1) * s + k).saturating_sub(len);
    (out, total / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl Geometry {
    #[inline]
    fn src(&self, o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
        let i = (o * stride + k).checked_sub(pad)?;
        (i < len).then_some(i)
    }
}

fn check(spec: &ConvSpec, x: Shape, weight: usize, bias: usize) -> Result<Geometry> {
    spec.output_shape(x)?;
    if weight != spec.weight_len() {
        return Err(shape_error(
            "conv2d weights",
            format!("{:?} = {}", spec.weight_dims(), spec.weight_len()),
            weight,
        ));
    }
    if bias != spec.out_channels {
        return Err(shape_error("conv2d bias", spec.out_channels, bias));
    }
    Ok(spec.geometry(x.h, x.w))
}

/// Fills `col` (`cin_g*kh*kw` rows × `oh*ow` columns) from the channels of
/// `x` (one sample) starting at `c0`.
fn im2col<T: Scalar>(x: &[T], c0: usize, cin: usize, spec: &ConvSpec, g: &Geometry, col: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let p = g.oh * g.ow;
    let plane = g.h * g.w;
    let mut row = 0;
    for ci in 0..cin {
        let xc = &x[(c0 + ci) * plane..(c0 + ci + 1) * plane];
        for ki in 0..kh {
            for kj in 0..kw {
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let d = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    match g.src(oy, ki, sh, g.pad_top, g.h) {
                        None => d.fill(T::zero()),
                        Some(iy) => {
                            let xr = &xc[iy * g.w..(iy + 1) * g.w];
                            for (ox, v) in d.iter_mut().enumerate() {
                                *v = match g.src(ox, kj, sw, g.pad_left, g.w) {
                                    Some(ix) => xr[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatters-adds `col` back into the channels of `gx` starting at `c0`.
fn col2im<T: Scalar>(col: &[T], c0: usize, cin: usize, spec: &ConvSpec, g: &Geometry, gx: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let p = g.oh * g.ow;
    let plane = g.h * g.w;
    let mut row = 0;
    for ci in 0..cin {
        let gc = &mut gx[(c0 + ci) * plane..(c0 + ci + 1) * plane];
        for ki in 0..kh {
            for kj in 0..kw {
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    if let Some(iy) = g.src(oy, ki, sh, g.pad_top, g.h) {
                        let gr = &mut gc[iy * g.w..(iy + 1) * g.w];
                        for (ox, &v) in src[oy * g.ow..(oy + 1) * g.ow].iter().enumerate() {
                            if let Some(ix) = g.src(ox, kj, sw, g.pad_left, g.w) {
                                gr[ix] += v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn is_pointwise(spec: &ConvSpec) -> bool {
    spec.kernel == (1, 1) && spec.stride == (1, 1)
}

/// Forward pass of a grouped convolution.
pub fn conv2d_forward<T: Scalar>(x: &Tensor4<T>, spec: &ConvSpec, weight: &[T], bias: &[T]) -> Result<Tensor4<T>> {
    let xs = x.shape();
    let g = check(spec, xs, weight.len(), bias.len())?;
    let out_shape = Shape::new(xs.n, spec.out_channels, g.oh, g.ow);
    let mut out = Tensor4::zeros(out_shape);
    let p = g.oh * g.ow;
    if spec.is_depthwise() {
        for n in 0..xs.n {
            depthwise_forward(x.sample(n), spec, &g, weight, bias, out.sample_mut(n));
        }
        return Ok(out);
    }
    let cin = spec.in_per_group();
    let cout = spec.out_per_group();
    let kdim = spec.fan_in();
    let mut col = if is_pointwise(spec) { Vec::new() } else { alloc::vec![T::zero(); kdim * p] };
    for n in 0..xs.n {
        let xn = x.sample(n);
        let on = out.sample_mut(n);
        for grp in 0..spec.groups {
            let w = &weight[grp * cout * kdim..(grp + 1) * cout * kdim];
            let o = &mut on[grp * cout * p..(grp + 1) * cout * p];
            for (co, oc) in o.chunks_exact_mut(p).enumerate() {
                oc.fill(bias[grp * cout + co]);
            }
            let b: &[T] = if is_pointwise(spec) {
                &xn[grp * cin * p..(grp + 1) * cin * p]
            } else {
                im2col(xn, grp * cin, cin, spec, &g, &mut col);
                &col
            };
            T::gemm(cout, kdim, p, w, (kdim as isize, 1), b, (p as isize, 1), T::one(), o, (p as isize, 1));
        }
    }
    Ok(out)
}

fn depthwise_forward<T: Scalar>(x: &[T], spec: &ConvSpec, g: &Geometry, weight: &[T], bias: &[T], out: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let plane = g.h * g.w;
    let p = g.oh * g.ow;
    for c in 0..spec.out_channels {
        let xc = &x[c * plane..(c + 1) * plane];
        let wc = &weight[c * kh * kw..(c + 1) * kh * kw];
        let oc = &mut out[c * p..(c + 1) * p];
        oc.fill(bias[c]);
        for ki in 0..kh {
            for kj in 0..kw {
                let wv = wc[ki * kw + kj];
                for oy in 0..g.oh {
                    let Some(iy) = g.src(oy, ki, sh, g.pad_top, g.h) else { continue };
                    let xr = &xc[iy * g.w..(iy + 1) * g.w];
                    let orow = &mut oc[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, o) in orow.iter_mut().enumerate() {
                        if let Some(ix) = g.src(ox, kj, sw, g.pad_left, g.w) {
                            *o += wv * xr[ix];
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of a convolution.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Backward pass: returns input, weight and bias gradients for `grad_out`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    spec: &ConvSpec,
    weight: &[T],
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let mut gw = alloc::vec![T::zero(); weight.len()];
    let mut gb = alloc::vec![T::zero(); spec.out_channels];
    let gx = conv2d_backward_into(x, spec, weight, grad_out, &mut gw, &mut gb, true)?
        .expect("input gradient requested");
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Backward pass accumulating parameter gradients into `gw`/`gb`. The input
/// gradient is computed only if `need_input`.
pub fn conv2d_backward_into<T: Scalar>(
    x: &Tensor4<T>,
    spec: &ConvSpec,
    weight: &[T],
    grad_out: &Tensor4<T>,
    gw: &mut [T],
    gb: &mut [T],
    need_input: bool,
) -> Result<Option<Tensor4<T>>> {
    let xs = x.shape();
    let g = check(spec, xs, weight.len(), spec.out_channels)?;
    let os = Shape::new(xs.n, spec.out_channels, g.oh, g.ow);
    if grad_out.shape() != os {
        return Err(shape_error("conv2d backward", os, grad_out.shape()));
    }
    if gw.len() != weight.len() || gb.len() != spec.out_channels {
        return Err(invalid("conv2d backward: gradient buffer size"));
    }
    let p = g.oh * g.ow;
    let mut gx = need_input.then(|| Tensor4::zeros(xs));
    for n in 0..xs.n {
        for (c, b) in gb.iter_mut().enumerate() {
            *b += grad_out.sample(n)[c * p..(c + 1) * p].iter().copied().sum::<T>();
        }
    }
    if spec.is_depthwise() {
        for n in 0..xs.n {
            let gxn = gx.as_mut().map(|t| t.sample_mut(n));
            depthwise_backward(x.sample(n), spec, &g, weight, grad_out.sample(n), gw, gxn);
        }
        return Ok(gx);
    }
    let cin = spec.in_per_group();
    let cout = spec.out_per_group();
    let kdim = spec.fan_in();
    let pointwise = is_pointwise(spec);
    let mut col = if pointwise { Vec::new() } else { alloc::vec![T::zero(); kdim * p] };
    let mut gcol = alloc::vec![T::zero(); kdim * p];
    for n in 0..xs.n {
        let xn = x.sample(n);
        let gon = grad_out.sample(n);
        for grp in 0..spec.groups {
            let go = &gon[grp * cout * p..(grp + 1) * cout * p];
            let wg = &weight[grp * cout * kdim..(grp + 1) * cout * kdim];
            let b: &[T] = if pointwise {
                &xn[grp * cin * p..(grp + 1) * cin * p]
            } else {
                im2col(xn, grp * cin, cin, spec, &g, &mut col);
                &col
            };
            // dW (cout×K) += dY (cout×P) · colᵀ (P×K)
            let gwg = &mut gw[grp * cout * kdim..(grp + 1) * cout * kdim];
            T::gemm(cout, p, kdim, go, (p as isize, 1), b, (1, p as isize), T::one(), gwg, (kdim as isize, 1));
            if let Some(gx) = gx.as_mut() {
                let gxn = gx.sample_mut(n);
                if pointwise {
                    let dst = &mut gxn[grp * cin * p..(grp + 1) * cin * p];
                    // dX (K×P) = Wᵀ (K×cout) · dY (cout×P)
                    T::gemm(kdim, cout, p, wg, (1, kdim as isize), go, (p as isize, 1), T::one(), dst, (p as isize, 1));
                } else {
                    T::gemm(kdim, cout, p, wg, (1, kdim as isize), go, (p as isize, 1), T::zero(), &mut gcol, (p as isize, 1));
                    col2im(&gcol, grp * cin, cin, spec, &g, gxn);
                }
            }
        }
    }
    Ok(gx)
}

fn depthwise_backward<T: Scalar>(
    x: &[T],
    spec: &ConvSpec,
    g: &Geometry,
    weight: &[T],
    grad_out: &[T],
    gw: &mut [T],
    mut gx: Option<&mut [T]>,
) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let plane = g.h * g.w;
    let p = g.oh * g.ow;
    for c in 0..spec.out_channels {
        let xc = &x[c * plane..(c + 1) * plane];
        let goc = &grad_out[c * p..(c + 1) * p];
        for ki in 0..kh {
            for kj in 0..kw {
                let widx = c * kh * kw + ki * kw + kj;
                let wv = weight[widx];
                let mut acc = T::zero();
                for oy in 0..g.oh {
                    let Some(iy) = g.src(oy, ki, sh, g.pad_top, g.h) else { continue };
                    let grow = &goc[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, &gv) in grow.iter().enumerate() {
                        if let Some(ix) = g.src(ox, kj, sw, g.pad_left, g.w) {
                            acc += gv * xc[iy * g.w + ix];
                            if let Some(gx) = gx.as_deref_mut() {
                                gx[c * plane + iy * g.w + ix] += gv * wv;
                            }
                        }
                    }
                }
                gw[widx] += acc;
            }
        }
    }
}
