//! Scenes: primitive lists with albedos, one directional light, and the
//! seeded procedural generator that stands in for a modeled corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::math::{vec3, Vec3};
use super::primitives::{Hit, Ray, Shape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn union(self, other: Aabb) -> Aabb {
        Aabb {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn diagonal(self) -> f64 {
        (self.max - self.min).length()
    }

    pub fn center(self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Scales the box extents about its center by `factor`.
    pub fn inflated(self, factor: f64) -> Aabb {
        let c = self.center();
        let half = (self.max - self.min) * (0.5 * factor);
        Aabb { min: c - half, max: c + half }
    }

    pub fn contains(self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn is_finite(self) -> bool {
        [self.min, self.max]
            .iter()
            .all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SceneObject {
    pub shape: Shape,
    pub albedo: [f32; 3],
}

/// One directional light; `direction` is the unit direction the light
/// travels (pointing away from the source).
#[derive(Debug, Clone, Copy)]
pub struct DirectionalLight {
    pub direction: Vec3,
    pub radiance: [f32; 3],
}

#[derive(Debug, Clone)]
pub struct Scene {
    objects: Vec<SceneObject>,
    light: DirectionalLight,
    bounds: Aabb,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>, light: DirectionalLight) -> Result<Scene> {
        if objects.is_empty() {
            return Err(Error::invalid("scene needs at least one primitive"));
        }
        let mut bounds = {
            let (lo, hi) = objects[0].shape.bounds();
            Aabb { min: lo, max: hi }
        };
        for o in &objects[1..] {
            let (lo, hi) = o.shape.bounds();
            bounds = bounds.union(Aabb { min: lo, max: hi });
        }
        Ok(Scene {
            objects,
            light: DirectionalLight {
                direction: light.direction.normalized(),
                radiance: light.radiance,
            },
            bounds,
        })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn light(&self) -> &DirectionalLight {
        &self.light
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Self-intersection offset used by shadow and occlusion rays.
    pub fn surface_epsilon(&self) -> f64 {
        1e-4 * self.bounds.diagonal()
    }

    /// Nearest hit and the index of the object hit.
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(usize, Hit)> {
        let mut best: Option<(usize, Hit)> = None;
        let mut closest = t_max;
        for (i, o) in self.objects.iter().enumerate() {
            if let Some(h) = o.shape.intersect(ray, t_min, closest) {
                closest = h.t;
                best = Some((i, h));
            }
        }
        best
    }

    /// Any-hit query for shadow and occlusion rays.
    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        self.objects
            .iter()
            .any(|o| o.shape.intersect(ray, t_min, t_max).is_some())
    }

    /// The scene with all geometry uniformly scaled about the origin.
    pub fn scaled(&self, s: f64) -> Scene {
        let objects = self
            .objects
            .iter()
            .map(|o| SceneObject { shape: o.shape.scaled(s), albedo: o.albedo })
            .collect();
        Scene::new(objects, self.light).expect("scaled scene stays valid")
    }
}

/// Seeded recipe for [`make_scene`].
#[derive(Debug, Clone, Copy)]
pub struct SceneRecipe {
    pub seed: u64,
    /// Primitives placed in addition to the ground plane.
    pub extra_primitives: usize,
}

fn pastel(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [
        rng.gen_range(0.35..0.9),
        rng.gen_range(0.35..0.9),
        rng.gen_range(0.35..0.9),
    ]
}

/// Builds a deterministic scene: a ground plane plus `extra_primitives`
/// objects inside a unit-scale working box. The first extra object is
/// always a box resting on the plane so there is at least one concave
/// crease for occlusion to act on.
pub fn make_scene(recipe: &SceneRecipe) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut objects = Vec::new();

    objects.push(SceneObject {
        shape: Shape::Quad {
            origin: vec3(-1.6, 0.0, -1.6),
            edge_u: vec3(3.2, 0.0, 0.0),
            edge_v: vec3(0.0, 0.0, 3.2),
        },
        albedo: pastel(&mut rng),
    });

    for i in 0..recipe.extra_primitives {
        let albedo = pastel(&mut rng);
        let shape = if i == 0 {
            // Guaranteed concave arrangement: a box on the plane.
            let hx = rng.gen_range(0.1..0.35);
            let hz = rng.gen_range(0.1..0.35);
            let h = rng.gen_range(0.15..0.5);
            let cx = rng.gen_range(-0.8..0.8);
            let cz = rng.gen_range(-0.8..0.8);
            Shape::Aabb {
                min: vec3(cx - hx, 0.0, cz - hz),
                max: vec3(cx + hx, h, cz + hz),
            }
        } else {
            match rng.gen_range(0..10) {
                0..=4 => {
                    let r = rng.gen_range(0.08..0.28);
                    let cx = rng.gen_range(-0.9..0.9);
                    let cz = rng.gen_range(-0.9..0.9);
                    let cy = r + rng.gen_range(0.0..0.3);
                    Shape::Sphere { center: vec3(cx, cy, cz), radius: r }
                }
                5..=7 => {
                    let hx = rng.gen_range(0.07..0.3);
                    let hz = rng.gen_range(0.07..0.3);
                    let h = rng.gen_range(0.1..0.45);
                    let cx = rng.gen_range(-0.9..0.9);
                    let cz = rng.gen_range(-0.9..0.9);
                    let y0 = rng.gen_range(0.0..0.15);
                    Shape::Aabb {
                        min: vec3(cx - hx, y0, cz - hz),
                        max: vec3(cx + hx, y0 + h, cz + hz),
                    }
                }
                _ => {
                    // A standing wall panel.
                    let wl = rng.gen_range(0.3..0.9);
                    let wh = rng.gen_range(0.25..0.6);
                    let cx = rng.gen_range(-0.9..0.9);
                    let cz = rng.gen_range(-0.9..0.9);
                    let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let dir = vec3(ang.cos(), 0.0, ang.sin());
                    Shape::Quad {
                        origin: vec3(cx, 0.0, cz),
                        edge_u: dir * wl,
                        edge_v: vec3(0.0, wh, 0.0),
                    }
                }
            }
        };
        objects.push(SceneObject { shape, albedo });
    }

    let azimuth: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let elevation: f64 = rng.gen_range(0.6..1.3);
    let direction = vec3(
        azimuth.cos() * elevation.cos(),
        -elevation.sin(),
        azimuth.sin() * elevation.cos(),
    );
    let light = DirectionalLight {
        direction,
        radiance: [
            rng.gen_range(0.8..1.2),
            rng.gen_range(0.8..1.2),
            rng.gen_range(0.8..1.2),
        ],
    };

    Scene::new(objects, light).expect("recipe produces at least the plane")
}
