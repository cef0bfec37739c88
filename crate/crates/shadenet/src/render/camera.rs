//! Perspective camera with a fixed 50 degree vertical field of view, an
//! optional thin lens, and seeded view sampling.
//!
//! Camera space is right-handed with `x` along `right`, `y` along `up` and
//! `z` along the viewing direction, so depth is the `z` component of a
//! camera-space position. Pixel rays pass through pixel centers; row 0 is
//! the image top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::math::{vec3, Vec3};
use super::primitives::Ray;
use super::scene::Scene;
use crate::error::{Error, Result};

/// Vertical field of view, fixed for every camera.
pub const FOV_DEGREES: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lens {
    pub aperture_radius: f64,
    pub focal_distance: f64,
}

#[derive(Debug, Clone)]
pub struct Camera {
    pub position: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    pub width: usize,
    pub height: usize,
    pub lens: Option<Lens>,
}

impl Camera {
    /// Camera at `position` looking toward `target`, world-up preferred.
    pub fn look_at(
        position: Vec3,
        target: Vec3,
        width: usize,
        height: usize,
        lens: Option<Lens>,
    ) -> Result<Camera> {
        let to = target - position;
        if to.length() < 1e-9 {
            return Err(Error::invalid("camera target coincides with position"));
        }
        let forward = to.normalized();
        let up_hint = if forward.y.abs() > 0.999 {
            vec3(0.0, 0.0, 1.0)
        } else {
            vec3(0.0, 1.0, 0.0)
        };
        let right = up_hint.cross(forward).normalized();
        let up = forward.cross(right);
        Ok(Camera { position, right, up, forward, width, height, lens })
    }

    fn tan_half_fov(&self) -> f64 {
        (FOV_DEGREES.to_radians() * 0.5).tan()
    }

    /// Ray through the center of pixel `(x, y)`.
    pub fn primary_ray(&self, x: usize, y: usize) -> Ray {
        let aspect = self.width as f64 / self.height as f64;
        let th = self.tan_half_fov();
        let ndc_x = ((x as f64 + 0.5) / self.width as f64) * 2.0 - 1.0;
        let ndc_y = 1.0 - ((y as f64 + 0.5) / self.height as f64) * 2.0;
        let dir = (self.forward + self.right * (ndc_x * th * aspect) + self.up * (ndc_y * th))
            .normalized();
        Ray { origin: self.position, dir }
    }

    /// Thin-lens ray for pixel `(x, y)` from the lens point offset
    /// `(lens_u, lens_v)` in camera units; rays converge at the focal plane.
    /// With a zero offset this is exactly the pinhole ray.
    pub fn lens_ray(&self, x: usize, y: usize, lens_u: f64, lens_v: f64) -> Result<Ray> {
        let lens = self
            .lens
            .ok_or_else(|| Error::invalid("camera has no lens configured"))?;
        let pinhole = self.primary_ray(x, y);
        if lens_u == 0.0 && lens_v == 0.0 {
            return Ok(pinhole);
        }
        let t_focal = lens.focal_distance / pinhole.dir.dot(self.forward);
        let focus = pinhole.at(t_focal);
        let origin = self.position + self.right * lens_u + self.up * lens_v;
        Ok(Ray { origin, dir: (focus - origin).normalized() })
    }

    /// World point to camera space `(right, up, forward)` coordinates.
    pub fn to_camera_point(&self, p: Vec3) -> Vec3 {
        let rel = p - self.position;
        vec3(rel.dot(self.right), rel.dot(self.up), rel.dot(self.forward))
    }

    /// World direction rotated into camera space.
    pub fn to_camera_dir(&self, v: Vec3) -> Vec3 {
        vec3(v.dot(self.right), v.dot(self.up), v.dot(self.forward))
    }
}

/// Samples `n` views: positions uniform in the scene box inflated by 10%,
/// each looking at a uniform point inside the scene box. Cameras whose
/// central forward ray misses everything within one box diagonal are
/// rejected and resampled. Also returns the rejection count.
pub fn sample_views_counted(
    scene: &Scene,
    n: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<(Vec<Camera>, usize)> {
    if n == 0 {
        return Err(Error::invalid("view count must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outer = scene.bounds().inflated(1.1);
    let inner = scene.bounds();
    let diag = inner.diagonal();
    let mut cameras = Vec::with_capacity(n);
    let mut rejected = 0usize;
    let budget = 200 * n;
    let mut attempts = 0usize;
    while cameras.len() < n {
        attempts += 1;
        if attempts > budget {
            return Err(Error::Generation(format!(
                "view sampling exhausted {budget} attempts"
            )));
        }
        let position = vec3(
            rng.gen_range(outer.min.x..=outer.max.x),
            rng.gen_range(outer.min.y..=outer.max.y),
            rng.gen_range(outer.min.z..=outer.max.z),
        );
        let target = vec3(
            rng.gen_range(inner.min.x..=inner.max.x),
            rng.gen_range(inner.min.y..=inner.max.y),
            rng.gen_range(inner.min.z..=inner.max.z),
        );
        let Ok(cam) = Camera::look_at(position, target, width, height, None) else {
            rejected += 1;
            continue;
        };
        let central = Ray { origin: cam.position, dir: cam.forward };
        if scene.intersect(&central, 1e-9, diag).is_none() {
            rejected += 1;
            continue;
        }
        cameras.push(cam);
    }
    Ok((cameras, rejected))
}

pub fn sample_views(
    scene: &Scene,
    n: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<Vec<Camera>> {
    sample_views_counted(scene, n, width, height, seed).map(|(c, _)| c)
}
