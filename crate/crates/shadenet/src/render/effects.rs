//! Monte-Carlo ground truth for ambient occlusion and depth-of-field.
//!
//! Every pixel draws from its own RNG stream derived from `(seed, pixel
//! index)`, so images are reproducible and pixel-parallel. Sample counts
//! that are perfect squares are stratified.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::gbuffer::direct_radiance;
use super::math::{orthonormal_basis, Vec3};
use super::primitives::Ray;
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Hemisphere measure for the occlusion estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HemisphereWeighting {
    /// Cosine-weighted directions; the estimate is the visible fraction
    /// under the cosine measure (matches use as an ambient multiplier).
    #[default]
    Cosine,
    /// Uniform directions; the estimate is the plain visible fraction.
    Uniform,
}

/// Occlusion ground-truth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoSpec {
    /// World-space occlusion range; occluders beyond it are ignored.
    pub radius: f64,
    /// Hemisphere samples per pixel.
    pub spp: usize,
    #[serde(default)]
    pub weighting: HemisphereWeighting,
}

/// Depth-of-field ground-truth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofSpec {
    pub aperture_radius: f64,
    pub focal_distance: f64,
    /// Lens samples per pixel.
    pub spp: usize,
}

/// Which effect a record's target was rendered with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum EffectSpec {
    Ao(AoSpec),
    Dof(DofSpec),
}

impl EffectSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EffectSpec::Ao(a) => {
                if a.radius <= 0.0 {
                    return Err(Error::invalid("AO radius must be positive"));
                }
                if a.spp == 0 {
                    return Err(Error::invalid("spp must be >= 1"));
                }
            }
            EffectSpec::Dof(d) => {
                if d.aperture_radius < 0.0 || d.focal_distance <= 0.0 {
                    return Err(Error::invalid("bad lens parameters"));
                }
                if d.spp == 0 {
                    return Err(Error::invalid("spp must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Number of channels in this effect's target image.
    pub fn target_channels(&self) -> usize {
        match self {
            EffectSpec::Ao(_) => 1,
            EffectSpec::Dof(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EffectSpec::Ao(_) => "ao",
            EffectSpec::Dof(_) => "dof",
        }
    }
}

fn pixel_rng(seed: u64, pixel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel);
    rng
}

/// (u, v) pairs covering [0,1)^2; stratified when `n` is a perfect square.
fn sample_square(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side == n {
        let inv = 1.0 / side as f64;
        let mut out = Vec::with_capacity(n);
        for sy in 0..side {
            for sx in 0..side {
                out.push((
                    (sx as f64 + rng.gen::<f64>()) * inv,
                    (sy as f64 + rng.gen::<f64>()) * inv,
                ));
            }
        }
        out
    } else {
        (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect()
    }
}

fn hemisphere_dir(normal: Vec3, u: f64, v: f64, weighting: HemisphereWeighting) -> Vec3 {
    let (t1, t2) = orthonormal_basis(normal);
    match weighting {
        HemisphereWeighting::Cosine => {
            let r = u.sqrt();
            let phi = std::f64::consts::TAU * v;
            let x = r * phi.cos();
            let y = r * phi.sin();
            let z = (1.0 - u).max(0.0).sqrt();
            t1 * x + t2 * y + normal * z
        }
        HemisphereWeighting::Uniform => {
            let z = u;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = std::f64::consts::TAU * v;
            t1 * (r * phi.cos()) + t2 * (r * phi.sin()) + normal * z
        }
    }
}

/// Occlusion estimate at one surface point: the fraction of sampled
/// hemisphere directions with no hit closer than `spec.radius`.
pub fn ambient_occlusion_at(
    scene: &Scene,
    point: Vec3,
    normal: Vec3,
    spec: &AoSpec,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let eps = scene.surface_epsilon();
    let origin = point + normal * eps;
    let samples = sample_square(rng, spec.spp);
    let mut visible = 0usize;
    for (u, v) in samples {
        let dir = hemisphere_dir(normal, u, v, spec.weighting);
        let ray = Ray { origin, dir };
        if !scene.occluded(&ray, 0.0, spec.radius) {
            visible += 1;
        }
    }
    visible as f64 / spec.spp as f64
}

/// Per-pixel occlusion image for a view; uncovered pixels are 1.
pub fn ao_ground_truth(scene: &Scene, camera: &Camera, spec: &AoSpec, seed: u64) -> Tensor {
    let (w, h) = (camera.width, camera.height);
    let values: Vec<f32> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let ray = camera.primary_ray(x, y);
            match scene.intersect(&ray, 1e-9, f64::INFINITY) {
                Some((_, hit)) => {
                    let mut rng = pixel_rng(seed, i as u64);
                    ambient_occlusion_at(scene, hit.point, hit.normal, spec, &mut rng) as f32
                }
                None => 1.0,
            }
        })
        .collect();
    Tensor::from_vec(1, h, w, values).expect("finite occlusion values")
}

/// Mean direct-lit radiance over lens samples; rays through each lens
/// point converge at the focal plane. The camera must carry a lens.
pub fn dof_ground_truth(scene: &Scene, camera: &Camera, spp: usize, seed: u64) -> Result<Tensor> {
    let lens = camera
        .lens
        .ok_or_else(|| Error::invalid("depth-of-field needs a camera lens"))?;
    if spp == 0 {
        return Err(Error::invalid("spp must be >= 1"));
    }
    let (w, h) = (camera.width, camera.height);
    let pixels: Vec<[f64; 3]> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let mut rng = pixel_rng(seed, i as u64);
            let mut acc = [0.0f64; 3];
            for (u, v) in sample_square(&mut rng, spp) {
                let r = lens.aperture_radius * u.sqrt();
                let phi = std::f64::consts::TAU * v;
                let ray = camera
                    .lens_ray(x, y, r * phi.cos(), r * phi.sin())
                    .expect("lens checked above");
                if let Some((idx, hit)) = scene.intersect(&ray, 1e-9, f64::INFINITY) {
                    let rgb = direct_radiance(
                        scene,
                        hit.point,
                        hit.normal,
                        scene.objects()[idx].albedo,
                    );
                    for c in 0..3 {
                        acc[c] += rgb[c] as f64;
                    }
                }
            }
            [acc[0] / spp as f64, acc[1] / spp as f64, acc[2] / spp as f64]
        })
        .collect();

    let plane = h * w;
    let mut out = Tensor::zeros(3, h, w);
    for (i, px) in pixels.iter().enumerate() {
        for c in 0..3 {
            out.data_mut()[c * plane + i] = px[c] as f32;
        }
    }
    Ok(out)
}
