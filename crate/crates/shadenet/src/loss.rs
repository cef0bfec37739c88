//! Training losses: tiled SSIM / DSSIM plus the plain L1 and L2 losses and
//! the 50/50 combinations, all with exact gradients.
//!
//! SSIM is evaluated per channel over non-overlapping 8x8 tiles with the
//! usual stabilizers `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` at dynamic range
//! `L = 1` (targets are expected in `[0, 1]`). The scalar loss maps the
//! mean tile SSIM through `(1 - SSIM) / 2`, giving a dissimilarity in
//! `[0, 1]`. L1/L2 are means per element so magnitudes are
//! resolution-independent; L2 is the squared L2 norm divided by the element
//! count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tile edge length for SSIM.
pub const SSIM_TILE: usize = 8;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Loss selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Ssim,
    L1,
    L2,
    SsimL1,
    SsimL2,
}

fn default_mix() -> f32 {
    0.5
}

/// A loss variant plus the blend weight used by the combined variants:
/// `mix_weight * DSSIM + (1 - mix_weight) * other`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossKind {
    pub variant: LossVariant,
    #[serde(default = "default_mix")]
    pub mix_weight: f32,
}

impl LossKind {
    pub fn ssim() -> Self {
        LossKind { variant: LossVariant::Ssim, mix_weight: default_mix() }
    }

    pub fn l1() -> Self {
        LossKind { variant: LossVariant::L1, mix_weight: default_mix() }
    }

    pub fn l2() -> Self {
        LossKind { variant: LossVariant::L2, mix_weight: default_mix() }
    }

    pub fn ssim_l1(mix_weight: f32) -> Self {
        LossKind { variant: LossVariant::SsimL1, mix_weight }
    }

    pub fn ssim_l2(mix_weight: f32) -> Self {
        LossKind { variant: LossVariant::SsimL2, mix_weight }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            LossVariant::Ssim => "ssim",
            LossVariant::L1 => "l1",
            LossVariant::L2 => "l2",
            LossVariant::SsimL1 => "ssim_l1",
            LossVariant::SsimL2 => "ssim_l2",
        }
    }
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "loss inputs must share a shape, got {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_tiling(a: &Tensor) -> Result<(usize, usize)> {
    if a.height() % SSIM_TILE != 0 || a.width() % SSIM_TILE != 0 {
        return Err(Error::invalid(format!(
            "SSIM needs dimensions divisible by {}, got {}x{}",
            SSIM_TILE,
            a.height(),
            a.width()
        )));
    }
    Ok((a.height() / SSIM_TILE, a.width() / SSIM_TILE))
}

#[derive(Debug, Clone, Copy)]
struct TileMoments {
    mu_a: f64,
    mu_b: f64,
    var_a: f64,
    var_b: f64,
    cov: f64,
}

fn tile_moments(a: &Tensor, b: &Tensor, c: usize, ty: usize, tx: usize) -> TileMoments {
    let n = (SSIM_TILE * SSIM_TILE) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for y in ty * SSIM_TILE..(ty + 1) * SSIM_TILE {
        let ra = &a.row(c, y)[tx * SSIM_TILE..(tx + 1) * SSIM_TILE];
        let rb = &b.row(c, y)[tx * SSIM_TILE..(tx + 1) * SSIM_TILE];
        for (&va, &vb) in ra.iter().zip(rb) {
            let (va, vb) = (va as f64, vb as f64);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    let mu_a = sa / n;
    let mu_b = sb / n;
    TileMoments {
        mu_a,
        mu_b,
        var_a: saa / n - mu_a * mu_a,
        var_b: sbb / n - mu_b * mu_b,
        cov: sab / n - mu_a * mu_b,
    }
}

fn tile_ssim(m: &TileMoments) -> f64 {
    let a1 = 2.0 * m.mu_a * m.mu_b + C1;
    let a2 = 2.0 * m.cov + C2;
    let b1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + C1;
    let b2 = m.var_a + m.var_b + C2;
    (a1 * a2) / (b1 * b2)
}

/// Per-tile, per-channel SSIM values as a `(channels, H/8, W/8)` tensor.
pub fn ssim_map(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_pair(a, b)?;
    let (th, tw) = check_tiling(a)?;
    let mut out = Tensor::zeros(a.channels(), th, tw);
    for c in 0..a.channels() {
        for ty in 0..th {
            for tx in 0..tw {
                let m = tile_moments(a, b, c, ty, tx);
                out.set(c, ty, tx, tile_ssim(&m) as f32);
            }
        }
    }
    Ok(out)
}

/// The luminance and structure factors of the tile SSIM:
/// `l = (2 mu_a mu_b + C1) / (mu_a^2 + mu_b^2 + C1)` and
/// `cs = (2 cov + C2) / (var_a + var_b + C2)`; their product is the SSIM.
pub fn ssim_terms(a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    check_pair(a, b)?;
    let (th, tw) = check_tiling(a)?;
    let mut lum = Tensor::zeros(a.channels(), th, tw);
    let mut structure = Tensor::zeros(a.channels(), th, tw);
    for c in 0..a.channels() {
        for ty in 0..th {
            for tx in 0..tw {
                let m = tile_moments(a, b, c, ty, tx);
                let l = (2.0 * m.mu_a * m.mu_b + C1) / (m.mu_a * m.mu_a + m.mu_b * m.mu_b + C1);
                let cs = (2.0 * m.cov + C2) / (m.var_a + m.var_b + C2);
                lum.set(c, ty, tx, l as f32);
                structure.set(c, ty, tx, cs as f32);
            }
        }
    }
    Ok((lum, structure))
}

/// Maps one SSIM value to its dissimilarity `(1 - s) / 2`.
pub fn dssim_of_ssim(s: f64) -> f64 {
    (1.0 - s) / 2.0
}

/// Mean structural dissimilarity over all tiles and channels; in `[0, 1]`.
pub fn dssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let map = ssim_map(a, b)?;
    let mean = map.data().iter().map(|&v| v as f64).sum::<f64>() / map.len() as f64;
    Ok(dssim_of_ssim(mean))
}

fn l2_value(p: &Tensor, t: &Tensor) -> f64 {
    let n = p.len() as f64;
    p.data()
        .iter()
        .zip(t.data())
        .map(|(&a, &b)| {
            let d = (a - b) as f64;
            d * d
        })
        .sum::<f64>()
        / n
}

fn l1_value(p: &Tensor, t: &Tensor) -> f64 {
    let n = p.len() as f64;
    p.data()
        .iter()
        .zip(t.data())
        .map(|(&a, &b)| ((a - b) as f64).abs())
        .sum::<f64>()
        / n
}

/// Scalar loss value.
pub fn loss_value(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair(prediction, target)?;
    let mix = kind.mix_weight as f64;
    Ok(match kind.variant {
        LossVariant::Ssim => dssim(prediction, target)?,
        LossVariant::L1 => l1_value(prediction, target),
        LossVariant::L2 => l2_value(prediction, target),
        LossVariant::SsimL1 => {
            mix * dssim(prediction, target)? + (1.0 - mix) * l1_value(prediction, target)
        }
        LossVariant::SsimL2 => {
            mix * dssim(prediction, target)? + (1.0 - mix) * l2_value(prediction, target)
        }
    })
}

fn dssim_grad(p: &Tensor, t: &Tensor) -> Result<Tensor> {
    let (th, tw) = check_tiling(p)?;
    let tiles = (p.channels() * th * tw) as f64;
    let n = (SSIM_TILE * SSIM_TILE) as f64;
    let mut grad = Tensor::zeros(p.channels(), p.height(), p.width());
    for c in 0..p.channels() {
        for ty in 0..th {
            for tx in 0..tw {
                let m = tile_moments(p, t, c, ty, tx);
                let a1 = 2.0 * m.mu_a * m.mu_b + C1;
                let a2 = 2.0 * m.cov + C2;
                let b1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + C1;
                let b2 = m.var_a + m.var_b + C2;
                let ssim = (a1 * a2) / (b1 * b2);
                // d(mean SSIM)/dp_i, then through (1 - s)/2 and the tile mean.
                let scale = -1.0 / (2.0 * tiles) * 2.0 / (n * b1 * b2);
                for y in ty * SSIM_TILE..(ty + 1) * SSIM_TILE {
                    for x in tx * SSIM_TILE..(tx + 1) * SSIM_TILE {
                        let pv = p.get(c, y, x) as f64;
                        let tv = t.get(c, y, x) as f64;
                        let d_ssim = m.mu_b * a2 + (tv - m.mu_b) * a1
                            - ssim * (m.mu_a * b2 + (pv - m.mu_a) * b1);
                        grad.set(c, y, x, (scale * d_ssim) as f32);
                    }
                }
            }
        }
    }
    Ok(grad)
}

fn l2_grad(p: &Tensor, t: &Tensor) -> Tensor {
    let n = p.len() as f32;
    let mut grad = Tensor::zeros(p.channels(), p.height(), p.width());
    for (g, (&a, &b)) in grad
        .data_mut()
        .iter_mut()
        .zip(p.data().iter().zip(t.data()))
    {
        *g = 2.0 * (a - b) / n;
    }
    grad
}

fn l1_grad(p: &Tensor, t: &Tensor) -> Tensor {
    let n = p.len() as f32;
    let mut grad = Tensor::zeros(p.channels(), p.height(), p.width());
    for (g, (&a, &b)) in grad
        .data_mut()
        .iter_mut()
        .zip(p.data().iter().zip(t.data()))
    {
        *g = (a - b).signum() * ((a != b) as i32 as f32) / n;
    }
    grad
}

fn blend(mut a: Tensor, b: &Tensor, wa: f32, wb: f32) -> Tensor {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x = *x * wa + *y * wb;
    }
    a
}

/// Loss value and its exact gradient with respect to the prediction.
pub fn loss_backward(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let value = loss_value(kind, prediction, target)?;
    let mix = kind.mix_weight;
    let grad = match kind.variant {
        LossVariant::Ssim => dssim_grad(prediction, target)?,
        LossVariant::L1 => l1_grad(prediction, target),
        LossVariant::L2 => l2_grad(prediction, target),
        LossVariant::SsimL1 => blend(
            dssim_grad(prediction, target)?,
            &l1_grad(prediction, target),
            mix,
            1.0 - mix,
        ),
        LossVariant::SsimL2 => blend(
            dssim_grad(prediction, target)?,
            &l2_grad(prediction, target),
            mix,
            1.0 - mix,
        ),
    };
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_img(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn identical_images_have_unit_ssim_everywhere() {
        let a = random_img(2, 16, 16, 1);
        let map = ssim_map(&a, &a).unwrap();
        assert_eq!(map.shape(), (2, 2, 2));
        assert!(map.data().iter().all(|&v| v == 1.0));
        assert_eq!(dssim(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_zero_pair_is_stabilized_to_one() {
        let a = Tensor::zeros(1, 8, 8);
        let map = ssim_map(&a, &a).unwrap();
        assert_eq!(map.data(), &[1.0]);
    }

    #[test]
    fn dssim_map_endpoints() {
        assert_eq!(dssim_of_ssim(1.0), 0.0);
        assert_eq!(dssim_of_ssim(-1.0), 1.0);
    }

    #[test]
    fn ramp_with_offset_matches_formula_oracle() {
        // Straight-from-formula scalar evaluation of one 8x8 tile.
        let mut data = Vec::with_capacity(64);
        for i in 0..64 {
            data.push(i as f32 / 63.0);
        }
        let a = Tensor::from_vec(1, 8, 8, data.clone()).unwrap();
        let b = a.map(|v| v + 0.5);

        let n = 64.0f64;
        let mu_a: f64 = data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mu_b: f64 = b.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var_a: f64 = data
            .iter()
            .map(|&v| (v as f64 - mu_a).powi(2))
            .sum::<f64>()
            / n;
        let var_b: f64 = b
            .data()
            .iter()
            .map(|&v| (v as f64 - mu_b).powi(2))
            .sum::<f64>()
            / n;
        let cov: f64 = data
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x as f64 - mu_a) * (y as f64 - mu_b))
            .sum::<f64>()
            / n;
        let expected = ((2.0 * mu_a * mu_b + 1e-4) * (2.0 * cov + 9e-4))
            / ((mu_a * mu_a + mu_b * mu_b + 1e-4) * (var_a + var_b + 9e-4));

        let got = ssim_map(&a, &b).unwrap().data()[0] as f64;
        assert!((got - expected).abs() <= 1e-6, "{got} vs {expected}");
    }

    #[test]
    fn dssim_is_symmetric_and_in_range() {
        for seed in 0..8 {
            let a = random_img(1, 16, 16, seed);
            let b = random_img(1, 16, 16, seed + 100);
            let ab = dssim(&a, &b).unwrap();
            let ba = dssim(&b, &a).unwrap();
            assert!((ab - ba).abs() <= 1e-7);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn tile_constant_offset_moves_luminance_not_structure() {
        let a = random_img(1, 8, 8, 4);
        let b = a.map(|v| v + 0.25);
        let (lum, structure) = ssim_terms(&a, &b).unwrap();
        assert!(lum.data()[0] < 0.999);
        assert!((structure.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shape_and_tiling_errors() {
        let a = Tensor::zeros(1, 8, 8);
        assert!(ssim_map(&a, &Tensor::zeros(1, 16, 8)).is_err());
        let odd = Tensor::zeros(1, 12, 8);
        assert!(ssim_map(&odd, &odd).is_err());
    }

    #[test]
    fn l2_gradient_vanishes_at_minimum() {
        let a = random_img(1, 8, 8, 9);
        let (v, g) = loss_backward(LossKind::l2(), &a, &a).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn l1_gradient_is_scaled_sign() {
        let p = Tensor::from_vec(1, 1, 4, vec![1.0, -1.0, 0.5, 0.5]).unwrap();
        let t = Tensor::from_vec(1, 1, 4, vec![0.0, 0.0, 0.5, 1.0]).unwrap();
        let (_, g) = loss_backward(LossKind::l1(), &p, &t).unwrap();
        assert_eq!(g.data(), &[0.25, -0.25, 0.0, -0.25]);
    }

    #[test]
    fn l2_is_normalized_squared_norm() {
        let p = Tensor::from_vec(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let t = Tensor::zeros(1, 1, 2);
        let v = loss_value(LossKind::l2(), &p, &t).unwrap();
        assert!((v - (1.0 + 9.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn combined_loss_blends_values() {
        let p = random_img(1, 8, 8, 2);
        let t = random_img(1, 8, 8, 3);
        let s = loss_value(LossKind::ssim(), &p, &t).unwrap();
        let l2 = loss_value(LossKind::l2(), &p, &t).unwrap();
        let mixed = loss_value(LossKind::ssim_l2(0.25), &p, &t).unwrap();
        assert!((mixed - (0.25 * s + 0.75 * l2)).abs() < 1e-9);
    }

    #[test]
    fn anticorrelated_images_have_large_dssim() {
        let a = random_img(1, 8, 8, 5);
        let b = a.map(|v| 1.0 - v);
        let d = dssim(&a, &b).unwrap();
        assert!(d > 0.5 && d <= 1.0, "dssim = {d}");
    }
}
