//! G-buffer generation: one primary ray through each pixel center, nearest
//! hit attributes, and Lambertian direct light with a shadow ray.

use rayon::prelude::*;

use super::camera::Camera;
use super::math::Vec3;
use super::primitives::Ray;
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::unet::{Attribute, NetMode};

/// Named per-pixel attribute planes for one view. Pixels with coverage 0
/// (primary ray missed) have all attributes zeroed.
#[derive(Debug, Clone)]
pub struct GBuffer {
    /// Camera-space hit positions (3 channels).
    pub positions_camera: Tensor,
    /// Camera-space unit normals (3).
    pub normals_camera: Tensor,
    /// World-space unit normals (3).
    pub normals_world: Tensor,
    /// Depth: the z component of the camera-space position (1).
    pub depth: Tensor,
    /// Signed distance to the focal plane, `depth - focal_distance` (1);
    /// the focal distance is 0 for lensless cameras.
    pub focal_distance: Tensor,
    /// Diffuse albedo of the hit surface (3).
    pub albedo: Tensor,
    /// Direct light: albedo x radiance x cos(theta) behind a shadow ray (3).
    pub direct_light: Tensor,
    /// 1 where the primary ray hit, 0 elsewhere (1).
    pub coverage: Tensor,
}

/// Rec. 709 luminance, used to reduce color planes for mono networks.
pub fn luminance(rgb: &Tensor) -> Result<Tensor> {
    if rgb.channels() != 3 {
        return Err(Error::shape("luminance expects 3 channels"));
    }
    let plane = rgb.height() * rgb.width();
    let mut out = Tensor::zeros(1, rgb.height(), rgb.width());
    for i in 0..plane {
        let v = 0.2126 * rgb.data()[i]
            + 0.7152 * rgb.data()[plane + i]
            + 0.0722 * rgb.data()[2 * plane + i];
        out.data_mut()[i] = v;
    }
    Ok(out)
}

impl GBuffer {
    pub fn width(&self) -> usize {
        self.coverage.width()
    }

    pub fn height(&self) -> usize {
        self.coverage.height()
    }

    /// The tensor for one named attribute. Color-dependent attributes are
    /// reduced to their luminance in mono mode.
    pub fn attribute(&self, attr: Attribute, mode: NetMode) -> Result<Tensor> {
        let t = match attr {
            Attribute::NormalsCamera => self.normals_camera.clone(),
            Attribute::PositionsCamera => self.positions_camera.clone(),
            Attribute::NormalsWorld => self.normals_world.clone(),
            Attribute::Depth => self.depth.clone(),
            Attribute::FocalDistance => self.focal_distance.clone(),
            Attribute::Albedo => match mode {
                NetMode::Mono => luminance(&self.albedo)?,
                NetMode::Rgb => self.albedo.clone(),
            },
            Attribute::DirectLight => match mode {
                NetMode::Mono => luminance(&self.direct_light)?,
                NetMode::Rgb => self.direct_light.clone(),
            },
        };
        Ok(t)
    }

    /// All channel groups with their storage names, in a fixed order.
    pub fn channel_groups(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("positions_camera", &self.positions_camera),
            ("normals_camera", &self.normals_camera),
            ("normals_world", &self.normals_world),
            ("depth", &self.depth),
            ("focal_distance", &self.focal_distance),
            ("albedo", &self.albedo),
            ("direct_light", &self.direct_light),
            ("coverage", &self.coverage),
        ]
    }
}

/// Lambertian direct light at a surface point, with one shadow ray.
pub fn direct_radiance(scene: &Scene, point: Vec3, normal: Vec3, albedo: [f32; 3]) -> [f32; 3] {
    let light = scene.light();
    let to_light = -light.direction;
    let cos = normal.dot(to_light);
    if cos <= 0.0 {
        return [0.0; 3];
    }
    let shadow = Ray { origin: point + normal * scene.surface_epsilon(), dir: to_light };
    if scene.occluded(&shadow, 0.0, f64::INFINITY) {
        return [0.0; 3];
    }
    let c = cos as f32;
    [
        albedo[0] * light.radiance[0] * c,
        albedo[1] * light.radiance[1] * c,
        albedo[2] * light.radiance[2] * c,
    ]
}

/// Casts one center ray per pixel and fills every attribute plane.
pub fn raycast_gbuffer(scene: &Scene, camera: &Camera) -> GBuffer {
    let (w, h) = (camera.width, camera.height);
    let focal = camera.lens.map(|l| l.focal_distance).unwrap_or(0.0);

    // Row-major per-pixel results, then scattered into planes.
    struct PixelOut {
        p_cam: Vec3,
        n_cam: Vec3,
        n_world: Vec3,
        albedo: [f32; 3],
        direct: [f32; 3],
        covered: bool,
    }

    let pixels: Vec<PixelOut> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let ray = camera.primary_ray(x, y);
            match scene.intersect(&ray, 1e-9, f64::INFINITY) {
                Some((idx, hit)) => {
                    let albedo = scene.objects()[idx].albedo;
                    PixelOut {
                        p_cam: camera.to_camera_point(hit.point),
                        n_cam: camera.to_camera_dir(hit.normal),
                        n_world: hit.normal,
                        albedo,
                        direct: direct_radiance(scene, hit.point, hit.normal, albedo),
                        covered: true,
                    }
                }
                None => PixelOut {
                    p_cam: Vec3::ZERO,
                    n_cam: Vec3::ZERO,
                    n_world: Vec3::ZERO,
                    albedo: [0.0; 3],
                    direct: [0.0; 3],
                    covered: false,
                },
            }
        })
        .collect();

    let mut positions_camera = Tensor::zeros(3, h, w);
    let mut normals_camera = Tensor::zeros(3, h, w);
    let mut normals_world = Tensor::zeros(3, h, w);
    let mut depth = Tensor::zeros(1, h, w);
    let mut focal_distance = Tensor::zeros(1, h, w);
    let mut albedo = Tensor::zeros(3, h, w);
    let mut direct_light = Tensor::zeros(3, h, w);
    let mut coverage = Tensor::zeros(1, h, w);

    let plane = h * w;
    for (i, px) in pixels.iter().enumerate() {
        if !px.covered {
            continue;
        }
        for (t, v) in [
            (&mut positions_camera, px.p_cam),
            (&mut normals_camera, px.n_cam),
            (&mut normals_world, px.n_world),
        ] {
            t.data_mut()[i] = v.x as f32;
            t.data_mut()[plane + i] = v.y as f32;
            t.data_mut()[2 * plane + i] = v.z as f32;
        }
        for c in 0..3 {
            albedo.data_mut()[c * plane + i] = px.albedo[c];
            direct_light.data_mut()[c * plane + i] = px.direct[c];
        }
        let d = px.p_cam.z as f32;
        depth.data_mut()[i] = d;
        focal_distance.data_mut()[i] = d - focal as f32;
        coverage.data_mut()[i] = 1.0;
    }

    GBuffer {
        positions_camera,
        normals_camera,
        normals_world,
        depth,
        focal_distance,
        albedo,
        direct_light,
        coverage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::camera::Lens;
    use crate::render::math::vec3;
    use crate::render::primitives::Shape;
    use crate::render::scene::{DirectionalLight, SceneObject};

    fn wall_scene(distance: f64) -> Scene {
        // A big quad facing the camera at z = distance.
        let objects = vec![SceneObject {
            shape: Shape::Quad {
                origin: vec3(-50.0, -50.0, distance),
                edge_u: vec3(100.0, 0.0, 0.0),
                edge_v: vec3(0.0, 100.0, 0.0),
            },
            albedo: [0.5, 0.6, 0.7],
        }];
        let light = DirectionalLight {
            direction: vec3(0.0, 0.0, 1.0),
            radiance: [1.0; 3],
        };
        Scene::new(objects, light).unwrap()
    }

    #[test]
    fn head_on_plane_fills_constant_depth_and_normal() {
        let d = 3.0;
        let scene = wall_scene(d);
        let cam = Camera::look_at(Vec3::ZERO, vec3(0.0, 0.0, 1.0), 16, 16, None).unwrap();
        let g = raycast_gbuffer(&scene, &cam);
        assert!(g.coverage.data().iter().all(|&v| v == 1.0));
        for &v in g.depth.data() {
            assert!((v - d as f32).abs() < 1e-5, "depth {v}");
        }
        // The wall faces the camera: camera-space normal is (0, 0, -1).
        let plane = 16 * 16;
        for i in 0..plane {
            assert!(g.normals_camera.data()[i].abs() < 1e-6);
            assert!(g.normals_camera.data()[plane + i].abs() < 1e-6);
            assert!((g.normals_camera.data()[2 * plane + i] + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn depth_equals_position_z() {
        let scene = crate::render::scene::make_scene(&crate::render::scene::SceneRecipe {
            seed: 2,
            extra_primitives: 4,
        });
        let cams = crate::render::camera::sample_views(&scene, 1, 24, 24, 8).unwrap();
        let g = raycast_gbuffer(&scene, &cams[0]);
        let plane = 24 * 24;
        for i in 0..plane {
            assert_eq!(g.depth.data()[i], g.positions_camera.data()[2 * plane + i]);
        }
    }

    #[test]
    fn camera_normals_are_rotated_world_normals() {
        let scene = crate::render::scene::make_scene(&crate::render::scene::SceneRecipe {
            seed: 12,
            extra_primitives: 3,
        });
        let cams = crate::render::camera::sample_views(&scene, 1, 16, 16, 4).unwrap();
        let cam = &cams[0];
        let g = raycast_gbuffer(&scene, cam);
        let plane = 16 * 16;
        for i in 0..plane {
            if g.coverage.data()[i] == 0.0 {
                continue;
            }
            let nw = vec3(
                g.normals_world.data()[i] as f64,
                g.normals_world.data()[plane + i] as f64,
                g.normals_world.data()[2 * plane + i] as f64,
            );
            let rotated = cam.to_camera_dir(nw);
            let ns = vec3(
                g.normals_camera.data()[i] as f64,
                g.normals_camera.data()[plane + i] as f64,
                g.normals_camera.data()[2 * plane + i] as f64,
            );
            assert!((rotated - ns).length() < 1e-5);
            assert!((ns.length() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_view_has_zero_coverage() {
        let scene = wall_scene(3.0);
        // Aim away from the wall.
        let cam = Camera::look_at(Vec3::ZERO, vec3(0.0, 0.0, -1.0), 8, 8, None).unwrap();
        let g = raycast_gbuffer(&scene, &cam);
        assert!(g.coverage.data().iter().all(|&v| v == 0.0));
        assert!(g.direct_light.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn focal_distance_is_depth_minus_focal() {
        let scene = wall_scene(4.0);
        let lens = Lens { aperture_radius: 0.05, focal_distance: 2.5 };
        let cam = Camera::look_at(Vec3::ZERO, vec3(0.0, 0.0, 1.0), 8, 8, Some(lens)).unwrap();
        let g = raycast_gbuffer(&scene, &cam);
        for i in 0..64 {
            let expect = g.depth.data()[i] - 2.5;
            assert!((g.focal_distance.data()[i] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_on_axis_center_pixel_position() {
        // Sphere centered on the optical axis: the central ray hits at
        // x = y = 0, z = d - r.
        let objects = vec![SceneObject {
            shape: Shape::Sphere { center: vec3(0.0, 0.0, 5.0), radius: 1.0 },
            albedo: [1.0; 3],
        }];
        let light = DirectionalLight { direction: vec3(0.0, -1.0, 0.0), radiance: [1.0; 3] };
        let scene = Scene::new(objects, light).unwrap();
        // Odd resolution puts a pixel center exactly on the axis.
        let cam = Camera::look_at(Vec3::ZERO, vec3(0.0, 0.0, 1.0), 9, 9, None).unwrap();
        let g = raycast_gbuffer(&scene, &cam);
        let plane = 81;
        let center = 4 * 9 + 4;
        assert!(g.positions_camera.data()[center].abs() < 1e-6);
        assert!(g.positions_camera.data()[plane + center].abs() < 1e-6);
        assert!((g.positions_camera.data()[2 * plane + center] - 4.0).abs() < 1e-5);
    }
}
