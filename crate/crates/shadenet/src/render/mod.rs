//! Procedural scenes, view sampling, G-buffer ray casting and Monte-Carlo
//! ground truth for occlusion and depth-of-field.

pub mod camera;
pub mod effects;
pub mod gbuffer;
pub mod math;
pub mod primitives;
pub mod scene;

pub use camera::{sample_views, sample_views_counted, Camera, Lens, FOV_DEGREES};
pub use effects::{
    ambient_occlusion_at, ao_ground_truth, dof_ground_truth, AoSpec, DofSpec, EffectSpec,
    HemisphereWeighting,
};
pub use gbuffer::{direct_radiance, luminance, raycast_gbuffer, GBuffer};
pub use math::{vec3, Vec3};
pub use primitives::{Hit, Ray, Shape};
pub use scene::{make_scene, Aabb, DirectionalLight, Scene, SceneObject, SceneRecipe};
