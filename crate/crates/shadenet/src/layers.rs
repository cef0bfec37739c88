//! Layer primitives: grouped "same" convolution, leaky ReLU, 2x2 mean
//! pooling and fixed bilinear 2x up-sampling, each with an explicit
//! backward pass.
//!
//! All forward passes are deterministic pure functions; parallelism only
//! splits work across independent output planes, so results are bitwise
//! reproducible.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights and bias of one grouped convolution layer.
///
/// Weight layout is `(out_channels, in_channels_per_group, k, k)` flattened
/// in that order. Output channel `o` belongs to group `o / (out/groups)` and
/// reads only that group's block of input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub out_channels: usize,
    pub in_channels_per_group: usize,
    pub groups: usize,
    pub kernel: usize,
}

impl ConvParams {
    /// Zero-initialized parameters. Errors unless `kernel` is odd and
    /// `out_channels` is divisible by `groups`.
    pub fn zeros(
        out_channels: usize,
        in_channels_per_group: usize,
        groups: usize,
        kernel: usize,
    ) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::invalid(format!("kernel size {kernel} must be odd")));
        }
        if groups == 0 || out_channels % groups != 0 {
            return Err(Error::invalid(format!(
                "out_channels {out_channels} not divisible by groups {groups}"
            )));
        }
        Ok(ConvParams {
            weights: vec![0.0; out_channels * in_channels_per_group * kernel * kernel],
            bias: vec![0.0; out_channels],
            out_channels,
            in_channels_per_group,
            groups,
            kernel,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.groups * self.in_channels_per_group
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Number of scalars (weights + biases).
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub fn weight_index(&self, o: usize, icg: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels_per_group + icg) * self.kernel + ky) * self.kernel + kx
    }
}

/// Gradients for one convolution layer, same layout as [`ConvParams`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvGrads {
    pub fn zeros_like(p: &ConvParams) -> Self {
        ConvGrads {
            weights: vec![0.0; p.weights.len()],
            bias: vec![0.0; p.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f32) {
        self.weights.iter_mut().for_each(|v| *v *= s);
        self.bias.iter_mut().for_each(|v| *v *= s);
    }
}

fn check_conv_input(input: &Tensor, p: &ConvParams) -> Result<()> {
    if input.channels() != p.in_channels() {
        return Err(Error::shape(format!(
            "conv expects {} input channels ({} groups x {}), got {}",
            p.in_channels(),
            p.groups,
            p.in_channels_per_group,
            input.channels()
        )));
    }
    Ok(())
}

/// Grouped 2D convolution with "same" zero padding of `(k-1)/2` on all
/// sides; spatial size is preserved. Accumulation runs in f64 so results
/// track a double-precision reference to well under 1e-6.
pub fn conv2d_forward(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    check_conv_input(input, p)?;
    let (h, w) = (input.height(), input.width());
    let k = p.kernel;
    let pad = (k / 2) as isize;
    let plane = h * w;
    let out_per_group = p.out_per_group();

    let mut out = Tensor::zeros(p.out_channels, h, w);
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(o, out_plane)| {
            let g = o / out_per_group;
            let mut acc = vec![p.bias[o] as f64; plane];
            for icg in 0..p.in_channels_per_group {
                let ic = g * p.in_channels_per_group + icg;
                let in_plane = input.channel(ic);
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let wgt = p.weights[p.weight_index(o, icg, ky, kx)] as f64;
                        shifted_axpy_f64(&mut acc, in_plane, h, w, dy, dx, wgt);
                    }
                }
            }
            for (dst, v) in out_plane.iter_mut().zip(&acc) {
                *dst = *v as f32;
            }
        });
    Ok(out)
}

/// `dst[y][x] += wgt * src[y+dy][x+dx]` over the in-bounds region, with a
/// double-precision destination.
#[inline]
fn shifted_axpy_f64(
    dst: &mut [f64],
    src: &[f32],
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
    wgt: f64,
) {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize).min(h as isize - dy) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize).min(w as isize - dx) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let s0 = (sy * w) as isize + dx;
        let srow = &src[(s0 + x0 as isize) as usize..(s0 + x1 as isize) as usize];
        let drow = &mut dst[y * w + x0..y * w + x1];
        for (d, s) in drow.iter_mut().zip(srow) {
            *d += wgt * (*s as f64);
        }
    }
}

/// `dst[y][x] += wgt * src[y+dy][x+dx]` over the in-bounds region.
#[inline]
fn shifted_axpy(dst: &mut [f32], src: &[f32], h: usize, w: usize, dy: isize, dx: isize, wgt: f32) {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize).min(h as isize - dy) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize).min(w as isize - dx) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let s0 = (sy * w) as isize + dx;
        let srow = &src[(s0 + x0 as isize) as usize..(s0 + x1 as isize) as usize];
        let drow = &mut dst[y * w + x0..y * w + x1];
        for (d, s) in drow.iter_mut().zip(srow) {
            *d += wgt * s;
        }
    }
}

/// `sum over valid (y,x) of a[y][x] * b[y+dy][x+dx]`, accumulated per row in
/// f32 and across rows in f64.
#[inline]
fn shifted_dot(a: &[f32], b: &[f32], h: usize, w: usize, dy: isize, dx: isize) -> f64 {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize).min(h as isize - dy) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize).min(w as isize - dx) as usize;
    if x0 >= x1 {
        return 0.0;
    }
    let mut total = 0.0f64;
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let s0 = (sy * w) as isize + dx;
        let brow = &b[(s0 + x0 as isize) as usize..(s0 + x1 as isize) as usize];
        let arow = &a[y * w + x0..y * w + x1];
        let mut acc = 0.0f32;
        for (x, y_) in arow.iter().zip(brow) {
            acc += x * y_;
        }
        total += acc as f64;
    }
    total
}

/// Exact gradients of [`conv2d_forward`] with respect to the input, the
/// weights and the bias. Gradient flow respects the channel grouping.
pub fn conv2d_backward(
    input: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
) -> Result<(Tensor, ConvGrads)> {
    check_conv_input(input, p)?;
    if grad_out.shape() != (p.out_channels, input.height(), input.width()) {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match conv output ({}, {}, {})",
            grad_out.shape(),
            p.out_channels,
            input.height(),
            input.width()
        )));
    }
    let (h, w) = (input.height(), input.width());
    let k = p.kernel;
    let pad = (k / 2) as isize;
    let plane = h * w;
    let out_per_group = p.out_per_group();

    let mut grads = ConvGrads::zeros_like(p);
    grads.bias = grad_out
        .data()
        .chunks(plane)
        .map(|c| c.iter().map(|&v| v as f64).sum::<f64>() as f32)
        .collect();

    let wstride = p.in_channels_per_group * k * k;
    grads
        .weights
        .par_chunks_mut(wstride)
        .enumerate()
        .for_each(|(o, wslice)| {
            let g = o / out_per_group;
            let go_plane = grad_out.channel(o);
            for icg in 0..p.in_channels_per_group {
                let ic = g * p.in_channels_per_group + icg;
                let in_plane = input.channel(ic);
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        wslice[(icg * k + ky) * k + kx] =
                            shifted_dot(go_plane, in_plane, h, w, dy, dx) as f32;
                    }
                }
            }
        });

    let mut grad_in = Tensor::zeros(input.channels(), h, w);
    grad_in
        .data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ic, gi_plane)| {
            let g = ic / p.in_channels_per_group;
            let icg = ic % p.in_channels_per_group;
            for og in 0..out_per_group {
                let o = g * out_per_group + og;
                let go_plane = grad_out.channel(o);
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let wgt = p.weights[p.weight_index(o, icg, ky, kx)];
                        // Transpose of the forward read: out[y][x] reads
                        // in[y+dy][x+dx], so grad_in gathers with -dy, -dx.
                        shifted_axpy(gi_plane, go_plane, h, w, -dy, -dx, wgt);
                    }
                }
            }
        });

    Ok((grad_in, grads))
}

/// Elementwise `y = x` for `x >= 0`, `y = slope * x` otherwise.
pub fn leaky_relu(x: &Tensor, slope: f32) -> Tensor {
    assert!(slope >= 0.0, "leaky slope must be non-negative");
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// Backward of [`leaky_relu`]; multiplies by 1 or `slope` according to the
/// sign of the forward *input*.
pub fn leaky_relu_backward(forward_input: &Tensor, grad_out: &Tensor, slope: f32) -> Result<Tensor> {
    if forward_input.shape() != grad_out.shape() {
        return Err(Error::shape("leaky_relu_backward shape mismatch"));
    }
    let data = forward_input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= 0.0 { g } else { slope * g })
        .collect();
    Tensor::from_vec(
        grad_out.channels(),
        grad_out.height(),
        grad_out.width(),
        data,
    )
}

/// 2x2 mean pooling; requires even height and width.
pub fn mean_pool_2x2(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!(
            "mean pooling requires even dimensions, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        for y in 0..oh {
            let top = x.row(ch, 2 * y);
            let bot = x.row(ch, 2 * y + 1);
            let orow = &mut out.channel_mut(ch)[y * ow..(y + 1) * ow];
            for (xo, o) in orow.iter_mut().enumerate() {
                *o = 0.25 * (top[2 * xo] + top[2 * xo + 1] + bot[2 * xo] + bot[2 * xo + 1]);
            }
        }
    }
    Ok(out)
}

/// Backward of [`mean_pool_2x2`]: distributes a quarter of each output
/// gradient to the four block members.
pub fn mean_pool_2x2_backward(grad_out: &Tensor) -> Tensor {
    let (c, oh, ow) = grad_out.shape();
    let (h, w) = (oh * 2, ow * 2);
    let mut grad_in = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let g = 0.25 * grad_out.get(ch, y, x);
                grad_in.set(ch, 2 * y, 2 * x, g);
                grad_in.set(ch, 2 * y, 2 * x + 1, g);
                grad_in.set(ch, 2 * y + 1, 2 * x, g);
                grad_in.set(ch, 2 * y + 1, 2 * x + 1, g);
            }
        }
    }
    grad_in
}

/// Source taps for one output coordinate of the 2x up-sampler: output pixel
/// centers sit at source coordinate `(i + 0.5)/2 - 0.5`, clamped at edges.
#[inline]
fn up_taps(i: usize, n: usize) -> (usize, usize, f32) {
    let s = 0.5 * i as f64 - 0.25;
    let f = s.floor();
    let t = (s - f) as f32;
    let lo = f as isize;
    let i0 = lo.clamp(0, n as isize - 1) as usize;
    let i1 = (lo + 1).clamp(0, n as isize - 1) as usize;
    (i0, i1, t)
}

/// Fixed (weight-free) bilinear 2x up-sampling with half-pixel centers and
/// edge clamping; constant images map to constant images.
pub fn bilinear_up_2x(x: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let cols: Vec<(usize, usize, f32)> = (0..ow).map(|i| up_taps(i, w)).collect();
    let mut out = Tensor::zeros(c, oh, ow);
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(ch, out_plane)| {
            let plane = x.channel(ch);
            for y in 0..oh {
                let (y0, y1, ty) = up_taps(y, h);
                let top = &plane[y0 * w..y0 * w + w];
                let bot = &plane[y1 * w..y1 * w + w];
                let orow = &mut out_plane[y * ow..(y + 1) * ow];
                for (xo, o) in orow.iter_mut().enumerate() {
                    let (x0, x1, tx) = cols[xo];
                    let a = top[x0] * (1.0 - tx) + top[x1] * tx;
                    let b = bot[x0] * (1.0 - tx) + bot[x1] * tx;
                    *o = a * (1.0 - ty) + b * ty;
                }
            }
        });
    out
}

/// Backward of [`bilinear_up_2x`]: the exact transpose of the fixed linear
/// map. `grad_out` must have even dimensions (it is an up-sampler output).
pub fn bilinear_up_2x_backward(grad_out: &Tensor) -> Tensor {
    let (c, oh, ow) = grad_out.shape();
    let (h, w) = (oh / 2, ow / 2);
    let cols: Vec<(usize, usize, f32)> = (0..ow).map(|i| up_taps(i, w)).collect();
    let mut grad_in = Tensor::zeros(c, h, w);
    grad_in
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(ch, gi_plane)| {
            let go_plane = grad_out.channel(ch);
            for y in 0..oh {
                let (y0, y1, ty) = up_taps(y, h);
                for xo in 0..ow {
                    let (x0, x1, tx) = cols[xo];
                    let g = go_plane[y * ow + xo];
                    gi_plane[y0 * w + x0] += g * (1.0 - ty) * (1.0 - tx);
                    gi_plane[y0 * w + x1] += g * (1.0 - ty) * tx;
                    gi_plane[y1 * w + x0] += g * ty * (1.0 - tx);
                    gi_plane[y1 * w + x1] += g * ty * tx;
                }
            }
        });
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_conv(channels: usize, k: usize) -> ConvParams {
        let mut p = ConvParams::zeros(channels, channels, 1, k).unwrap();
        // One group only makes sense for channels == 1 here.
        assert_eq!(channels, 1);
        let center = p.weight_index(0, 0, k / 2, k / 2);
        p.weights[center] = 1.0;
        p
    }

    fn ramp(c: usize, h: usize, w: usize) -> Tensor {
        let data = (0..c * h * w).map(|i| 0.1 * i as f32 - 1.0).collect();
        Tensor::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let x = ramp(1, 4, 5);
        let y = conv2d_forward(&x, &identity_conv(1, 3)).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_input_yields_bias_planes() {
        let x = Tensor::zeros(2, 3, 3);
        let mut p = ConvParams::zeros(2, 2, 1, 3).unwrap();
        p.bias = vec![0.5, -1.5];
        let y = conv2d_forward(&x, &p).unwrap();
        assert!(y.channel(0).iter().all(|&v| v == 0.5));
        assert!(y.channel(1).iter().all(|&v| v == -1.5));
    }

    #[test]
    fn conv_rejects_channel_group_mismatch() {
        let x = Tensor::zeros(3, 4, 4);
        let p = ConvParams::zeros(4, 2, 2, 3).unwrap(); // expects 4 input channels
        assert!(conv2d_forward(&x, &p).is_err());
    }

    #[test]
    fn conv_params_validate_kernel_and_groups() {
        assert!(ConvParams::zeros(4, 2, 2, 2).is_err()); // even kernel
        assert!(ConvParams::zeros(3, 2, 2, 3).is_err()); // 3 % 2 != 0
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let x = ramp(2, 4, 4);
        let p = ConvParams::zeros(2, 1, 2, 3).unwrap();
        let go = Tensor::zeros(2, 4, 4);
        let (gi, g) = conv2d_backward(&x, &p, &go).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_backward_passes_grad_through() {
        let x = ramp(1, 3, 3);
        let p = identity_conv(1, 3);
        let go = ramp(1, 3, 3).map(|v| v * 2.0 + 0.3);
        let (gi, _) = conv2d_backward(&x, &p, &go).unwrap();
        for (a, b) in gi.data().iter().zip(go.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn grad_bias_sums_grad_out() {
        let x = ramp(1, 2, 2);
        let p = ConvParams::zeros(1, 1, 1, 1).unwrap();
        let go = Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, g) = conv2d_backward(&x, &p, &go).unwrap();
        assert_eq!(g.bias, vec![10.0]);
    }

    #[test]
    fn leaky_relu_matches_definition() {
        let x = Tensor::from_vec(1, 1, 2, vec![2.0, -1.0]).unwrap();
        let y = leaky_relu(&x, 0.01);
        assert_eq!(y.data(), &[2.0, -0.01]);
        // slope 0 reduces to plain ReLU
        let r = leaky_relu(&x, 0.0);
        assert_eq!(r.data(), &[2.0, 0.0]);
    }

    #[test]
    fn leaky_relu_backward_uses_input_sign() {
        let x = Tensor::from_vec(1, 1, 3, vec![2.0, -1.0, 0.0]).unwrap();
        let go = Tensor::filled(1, 1, 3, 1.0);
        let gi = leaky_relu_backward(&x, &go, 0.01).unwrap();
        assert_eq!(gi.data(), &[1.0, 0.01, 1.0]);
    }

    #[test]
    fn mean_pool_averages_blocks() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = mean_pool_2x2(&x).unwrap();
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn mean_pool_keeps_constants() {
        let x = Tensor::filled(3, 4, 6, 0.75);
        let y = mean_pool_2x2(&x).unwrap();
        assert_eq!(y.shape(), (3, 2, 3));
        assert!(y.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn mean_pool_rejects_odd_dims() {
        assert!(mean_pool_2x2(&Tensor::zeros(1, 3, 4)).is_err());
        assert!(mean_pool_2x2(&Tensor::zeros(1, 4, 5)).is_err());
    }

    #[test]
    fn mean_pool_conserves_sum_scaled() {
        let x = ramp(2, 4, 6);
        let y = mean_pool_2x2(&x).unwrap();
        assert!((4.0 * y.sum() - x.sum()).abs() < 1e-4);
    }

    #[test]
    fn mean_pool_backward_distributes_quarter() {
        let go = Tensor::from_vec(1, 1, 1, vec![2.0]).unwrap();
        let gi = mean_pool_2x2_backward(&go);
        assert_eq!(gi.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn bilinear_up_keeps_constants() {
        let x = Tensor::filled(2, 3, 4, 0.5);
        let y = bilinear_up_2x(&x);
        assert_eq!(y.shape(), (2, 6, 8));
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn bilinear_up_on_step_row() {
        let x = Tensor::from_vec(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let y = bilinear_up_2x(&x);
        // Half-pixel centers with edge clamp.
        assert_eq!(y.row(0, 0), &[0.0, 0.25, 0.75, 1.0]);
        assert_eq!(y.row(0, 1), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn bilinear_backward_preserves_ones_sum() {
        let x_shape = (2usize, 3usize, 5usize);
        let go = Tensor::filled(x_shape.0, 2 * x_shape.1, 2 * x_shape.2, 1.0);
        let gi = bilinear_up_2x_backward(&go);
        assert_eq!(gi.shape(), x_shape);
        assert!((gi.sum() - go.sum()).abs() < 1e-3);
    }
}
