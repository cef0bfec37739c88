//! The eight square symmetries applied to records, with attribute-aware
//! value transforms.
//!
//! Scalar channel groups (depth, focal distance, albedo, light, coverage,
//! target) and world-space normals move pixels only. Camera-space positions
//! and normals additionally have their (x, y) components multiplied by the
//! matching 2D rotation/mirror matrix; z stays untouched. All value
//! transforms are signed channel permutations, so augmentation is exactly
//! invertible.

use crate::error::{Error, Result};
use crate::render::GBuffer;
use crate::tensor::{FlipAxis, Tensor};

use super::records::SampleRecord;

/// One element of the dihedral group of the square: a counter-clockwise
/// rotation by `quarter_turns` followed (optionally) by a horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DihedralElement {
    pub quarter_turns: u8,
    pub flipped: bool,
}

impl DihedralElement {
    pub const IDENTITY: DihedralElement = DihedralElement { quarter_turns: 0, flipped: false };

    /// All 8 elements: 4 rotations, each with and without the flip.
    pub fn all() -> [DihedralElement; 8] {
        let mut out = [DihedralElement::IDENTITY; 8];
        for k in 0..4u8 {
            out[k as usize * 2] = DihedralElement { quarter_turns: k, flipped: false };
            out[k as usize * 2 + 1] = DihedralElement { quarter_turns: k, flipped: true };
        }
        out
    }

    pub fn tag(&self) -> String {
        if self.flipped {
            format!("r{}f", self.quarter_turns)
        } else {
            format!("r{}", self.quarter_turns)
        }
    }

    pub fn from_tag(tag: &str) -> Result<DihedralElement> {
        let (body, flipped) = match tag.strip_suffix('f') {
            Some(b) => (b, true),
            None => (tag, false),
        };
        let turns: u8 = body
            .strip_prefix('r')
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid(format!("bad augmentation tag `{tag}`")))?;
        if turns > 3 {
            return Err(Error::invalid(format!("bad augmentation tag `{tag}`")));
        }
        Ok(DihedralElement { quarter_turns: turns, flipped })
    }

    /// Reflections are involutions; a pure rotation inverts to 4 - k turns.
    pub fn inverse(&self) -> DihedralElement {
        if self.flipped {
            *self
        } else {
            DihedralElement { quarter_turns: (4 - self.quarter_turns) % 4, flipped: false }
        }
    }

    /// Pixel relocation shared by every channel group.
    pub fn apply_spatial(&self, t: &Tensor) -> Tensor {
        let rotated = t.rot90(self.quarter_turns as i32);
        if self.flipped {
            rotated.flip(FlipAxis::Horizontal)
        } else {
            rotated
        }
    }

    /// The 2D value matrix for camera-space (x, y) components: the flip
    /// mirror times the rotation, entries in {-1, 0, 1}.
    pub fn xy_matrix(&self) -> [[i32; 2]; 2] {
        // Rotation by 90 deg CCW: (x, y) -> (-y, x).
        let mut m = [[1, 0], [0, 1]];
        for _ in 0..self.quarter_turns {
            m = [[-m[1][0], -m[1][1]], [m[0][0], m[0][1]]];
        }
        if self.flipped {
            m[0][0] = -m[0][0];
            m[0][1] = -m[0][1];
        }
        m
    }

    /// Spatial transform plus the signed (x, y) channel permutation for a
    /// 3-channel vector group; the z channel moves pixels only.
    pub fn apply_xy_vectors(&self, t: &Tensor) -> Result<Tensor> {
        if t.channels() != 3 {
            return Err(Error::shape("vector transform expects 3 channels"));
        }
        let moved = self.apply_spatial(t);
        let m = self.xy_matrix();
        let plane = moved.height() * moved.width();
        let mut out = moved.clone();
        let src = moved.data();
        let dst = out.data_mut();
        for i in 0..plane {
            let (x, y) = (src[i], src[plane + i]);
            dst[i] = m[0][0] as f32 * x + m[0][1] as f32 * y;
            dst[plane + i] = m[1][0] as f32 * x + m[1][1] as f32 * y;
        }
        Ok(out)
    }
}

/// Applies one symmetry to a whole record. Requires square images.
pub fn apply_augmentation(record: &SampleRecord, element: DihedralElement) -> Result<SampleRecord> {
    let g = &record.gbuffer;
    if g.width() != g.height() {
        return Err(Error::invalid(format!(
            "augmentation needs square images, got {}x{}",
            g.height(),
            g.width()
        )));
    }
    let gbuffer = GBuffer {
        positions_camera: element.apply_xy_vectors(&g.positions_camera)?,
        normals_camera: element.apply_xy_vectors(&g.normals_camera)?,
        normals_world: element.apply_spatial(&g.normals_world),
        depth: element.apply_spatial(&g.depth),
        focal_distance: element.apply_spatial(&g.focal_distance),
        albedo: element.apply_spatial(&g.albedo),
        direct_light: element.apply_spatial(&g.direct_light),
        coverage: element.apply_spatial(&g.coverage),
    };
    let mut meta = record.meta.clone();
    meta.augmentation = element.tag();
    meta.id = format!("s{:03}_v{:03}_{}", meta.scene_id, meta.view_id, element.tag());
    Ok(SampleRecord { meta, gbuffer, target: element.apply_spatial(&record.target) })
}

/// The 8 dihedral variants of a record (identity included).
pub fn augment(record: &SampleRecord) -> Result<Vec<SampleRecord>> {
    DihedralElement::all()
        .iter()
        .map(|e| apply_augmentation(record, *e))
        .collect()
}

/// Augments every record of a dataset; each variant inherits the split of
/// its base record so views never leak across splits.
pub fn augment_dataset(dataset: &crate::dataset::Dataset) -> Result<crate::dataset::Dataset> {
    let mut records = Vec::with_capacity(dataset.len() * 8);
    let mut splits = Vec::with_capacity(dataset.len() * 8);
    for i in 0..dataset.len() {
        let split = dataset.split_of(i);
        for variant in augment(dataset.record(i))? {
            records.push(variant);
            splits.push(split);
        }
    }
    crate::dataset::Dataset::from_parts(records, splits)
}
