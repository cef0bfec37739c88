//! End-to-end record generation: procedural scenes, sampled views,
//! G-buffers and ground-truth targets, assembled into a split dataset.

use crate::error::{Error, Result};
use crate::render::{
    ao_ground_truth, dof_ground_truth, make_scene, raycast_gbuffer, sample_views, EffectSpec,
    Lens, SceneRecipe,
};

use super::manifest::Dataset;
use super::records::{RecordMeta, SampleRecord};

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub scenes: usize,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub effect: EffectSpec,
    /// Primitives per scene in addition to the ground plane.
    pub extra_primitives: usize,
    /// How many trailing scene ids become held-out test scenes.
    pub test_scenes: usize,
    pub seed: u64,
}

pub(crate) fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

const SALT_SCENE: u64 = 0x5343454e; // "SCEN"
const SALT_VIEWS: u64 = 0x56494557; // "VIEW"
const SALT_TARGET: u64 = 0x54415247; // "TARG"
const SALT_SPLIT: u64 = 0x53504c54; // "SPLT"

/// Renders `scenes x views` base records (augmentation tag `r0`) and
/// assigns splits; byte-deterministic in the options.
pub fn generate(opts: &GenerateOptions) -> Result<Dataset> {
    if opts.scenes == 0 || opts.views == 0 {
        return Err(Error::invalid("need at least one scene and one view"));
    }
    if opts.test_scenes >= opts.scenes {
        return Err(Error::invalid(
            "test_scenes must leave at least one train/validation scene",
        ));
    }
    opts.effect.validate()?;
    let lens = match opts.effect {
        EffectSpec::Ao(_) => None,
        EffectSpec::Dof(d) => Some(Lens {
            aperture_radius: d.aperture_radius,
            focal_distance: d.focal_distance,
        }),
    };

    let mut records = Vec::with_capacity(opts.scenes * opts.views);
    for s in 0..opts.scenes as u64 {
        let scene = make_scene(&SceneRecipe {
            seed: mix(opts.seed, SALT_SCENE ^ s),
            extra_primitives: opts.extra_primitives,
        });
        let mut cameras = sample_views(
            &scene,
            opts.views,
            opts.width,
            opts.height,
            mix(opts.seed, SALT_VIEWS ^ s),
        )?;
        for (v, cam) in cameras.iter_mut().enumerate() {
            cam.lens = lens;
            let gbuffer = raycast_gbuffer(&scene, cam);
            let target_seed = mix(opts.seed, SALT_TARGET ^ (s << 20 | v as u64));
            let target = match &opts.effect {
                EffectSpec::Ao(spec) => ao_ground_truth(&scene, cam, spec, target_seed),
                EffectSpec::Dof(spec) => dof_ground_truth(&scene, cam, spec.spp, target_seed)?,
            };
            records.push(SampleRecord {
                meta: RecordMeta {
                    id: format!("s{s:03}_v{v:03}_r0"),
                    scene_id: s,
                    view_id: v as u64,
                    effect: opts.effect,
                    augmentation: "r0".into(),
                },
                gbuffer,
                target,
            });
        }
    }

    let test_ids: Vec<u64> =
        ((opts.scenes - opts.test_scenes) as u64..opts.scenes as u64).collect();
    Dataset::new(records, &test_ids, mix(opts.seed, SALT_SPLIT))
}
