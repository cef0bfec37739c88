//! Double-precision reference implementations used as independent oracles:
//! plain nested-loop convolution, the other layer maps, the tile SSIM
//! formula, and a central-difference gradient checker. These deliberately
//! avoid the crate's optimized code paths.

#![allow(dead_code)]

use shadenet::tensor::Tensor;

/// Dense f64 tensor mirror for oracle arithmetic.
#[derive(Debug, Clone)]
pub struct T64 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl T64 {
    pub fn zeros(c: usize, h: usize, w: usize) -> T64 {
        T64 { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_tensor(t: &Tensor) -> T64 {
        T64 {
            c: t.channels(),
            h: t.height(),
            w: t.width(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            self.c,
            self.h,
            self.w,
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .unwrap()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.h + y) * self.w + x] = v;
    }
}

/// Six nested loops, zero padding of (k-1)/2, channel groups.
pub fn conv2d_ref(
    input: &T64,
    weights: &[f64],
    bias: &[f64],
    out_channels: usize,
    in_per_group: usize,
    groups: usize,
    k: usize,
) -> T64 {
    assert_eq!(input.c, in_per_group * groups);
    let pad = (k / 2) as isize;
    let out_per_group = out_channels / groups;
    let mut out = T64::zeros(out_channels, input.h, input.w);
    for o in 0..out_channels {
        let g = o / out_per_group;
        for y in 0..input.h {
            for x in 0..input.w {
                let mut acc = bias[o];
                for icg in 0..in_per_group {
                    let ic = g * in_per_group + icg;
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + ky as isize - pad;
                            let sx = x as isize + kx as isize - pad;
                            if sy < 0 || sx < 0 || sy >= input.h as isize || sx >= input.w as isize
                            {
                                continue;
                            }
                            let wi = ((o * in_per_group + icg) * k + ky) * k + kx;
                            acc += weights[wi] * input.get(ic, sy as usize, sx as usize);
                        }
                    }
                }
                out.set(o, y, x, acc);
            }
        }
    }
    out
}

pub fn leaky_ref(x: &T64, slope: f64) -> T64 {
    T64 {
        c: x.c,
        h: x.h,
        w: x.w,
        data: x.data.iter().map(|&v| if v >= 0.0 { v } else { slope * v }).collect(),
    }
}

pub fn pool_ref(x: &T64) -> T64 {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = T64::zeros(x.c, oh, ow);
    for c in 0..x.c {
        for y in 0..oh {
            for xx in 0..ow {
                let s = x.get(c, 2 * y, 2 * xx)
                    + x.get(c, 2 * y, 2 * xx + 1)
                    + x.get(c, 2 * y + 1, 2 * xx)
                    + x.get(c, 2 * y + 1, 2 * xx + 1);
                out.set(c, y, xx, 0.25 * s);
            }
        }
    }
    out
}

fn up_taps(i: usize, n: usize) -> (usize, usize, f64) {
    let s = 0.5 * i as f64 - 0.25;
    let f = s.floor();
    let t = s - f;
    let lo = f as isize;
    let i0 = lo.clamp(0, n as isize - 1) as usize;
    let i1 = (lo + 1).clamp(0, n as isize - 1) as usize;
    (i0, i1, t)
}

pub fn up2x_ref(x: &T64) -> T64 {
    let (oh, ow) = (2 * x.h, 2 * x.w);
    let mut out = T64::zeros(x.c, oh, ow);
    for c in 0..x.c {
        for y in 0..oh {
            let (y0, y1, ty) = up_taps(y, x.h);
            for xx in 0..ow {
                let (x0, x1, tx) = up_taps(xx, x.w);
                let a = x.get(c, y0, x0) * (1.0 - tx) + x.get(c, y0, x1) * tx;
                let b = x.get(c, y1, x0) * (1.0 - tx) + x.get(c, y1, x1) * tx;
                out.set(c, y, xx, a * (1.0 - ty) + b * ty);
            }
        }
    }
    out
}

pub fn concat_ref(a: &T64, b: &T64) -> T64 {
    assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    T64 { c: a.c + b.c, h: a.h, w: a.w, data }
}

pub fn l2_ref(p: &T64, t: &T64) -> f64 {
    let n = p.data.len() as f64;
    p.data
        .iter()
        .zip(&t.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

pub fn l1_ref(p: &T64, t: &T64) -> f64 {
    let n = p.data.len() as f64;
    p.data.iter().zip(&t.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
}

/// Straight-from-formula tile SSIM over non-overlapping 8x8 tiles.
pub fn ssim_tiles_ref(a: &T64, b: &T64) -> Vec<f64> {
    const TILE: usize = 8;
    let (c1, c2) = (0.01f64 * 0.01, 0.03f64 * 0.03);
    let mut out = Vec::new();
    for c in 0..a.c {
        for ty in 0..a.h / TILE {
            for tx in 0..a.w / TILE {
                let n = (TILE * TILE) as f64;
                let mut va = Vec::with_capacity(TILE * TILE);
                let mut vb = Vec::with_capacity(TILE * TILE);
                for y in ty * TILE..(ty + 1) * TILE {
                    for x in tx * TILE..(tx + 1) * TILE {
                        va.push(a.get(c, y, x));
                        vb.push(b.get(c, y, x));
                    }
                }
                let mu_a = va.iter().sum::<f64>() / n;
                let mu_b = vb.iter().sum::<f64>() / n;
                let var_a = va.iter().map(|v| (v - mu_a) * (v - mu_a)).sum::<f64>() / n;
                let var_b = vb.iter().map(|v| (v - mu_b) * (v - mu_b)).sum::<f64>() / n;
                let cov = va
                    .iter()
                    .zip(&vb)
                    .map(|(x, y)| (x - mu_a) * (y - mu_b))
                    .sum::<f64>()
                    / n;
                let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                out.push(s);
            }
        }
    }
    out
}

pub fn dssim_ref(a: &T64, b: &T64) -> f64 {
    let tiles = ssim_tiles_ref(a, b);
    let mean = tiles.iter().sum::<f64>() / tiles.len() as f64;
    (1.0 - mean) / 2.0
}

/// Central finite difference of `f` at `x[i]` with step `h`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Mixed relative/absolute gradient comparison.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()) + abs_floor
}
