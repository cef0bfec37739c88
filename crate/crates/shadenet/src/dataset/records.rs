//! On-disk sample records: one PFM per channel group plus metadata.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pfm::{read_pfm, write_pfm};
use crate::error::{Error, Result};
use crate::render::{EffectSpec, GBuffer};
use crate::tensor::Tensor;
use crate::unet::{Attribute, NetMode};

/// Channel-group file stems inside a record directory.
pub const GBUFFER_FILES: [&str; 8] = [
    "positions_camera",
    "normals_camera",
    "normals_world",
    "depth",
    "focal_distance",
    "albedo",
    "direct_light",
    "coverage",
];
pub const TARGET_FILE: &str = "target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub id: String,
    pub scene_id: u64,
    pub view_id: u64,
    #[serde(flatten)]
    pub effect: EffectSpec,
    /// Dihedral element tag, e.g. `r0` or `r2f`.
    pub augmentation: String,
}

/// One training pair: the G-buffer channel groups, the target image, and
/// identifying metadata.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub meta: RecordMeta,
    pub gbuffer: GBuffer,
    pub target: Tensor,
}

impl SampleRecord {
    pub fn resolution(&self) -> (usize, usize) {
        (self.gbuffer.height(), self.gbuffer.width())
    }

    /// Concatenates the named attribute groups, in order, into one network
    /// input tensor.
    pub fn input_tensor(&self, attributes: &[Attribute], mode: NetMode) -> Result<Tensor> {
        let mut iter = attributes.iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("attribute list is empty"))?;
        let mut out = self.gbuffer.attribute(*first, mode)?;
        for attr in iter {
            out = out.concat_channels(&self.gbuffer.attribute(*attr, mode)?)?;
        }
        Ok(out)
    }

    /// The target in the network's output arity: mono networks train on a
    /// single channel, so 3-channel targets reduce to luminance.
    pub fn target_for(&self, mode: NetMode) -> Result<Tensor> {
        match mode {
            NetMode::Mono if self.target.channels() == 3 => {
                crate::render::luminance(&self.target)
            }
            _ => Ok(self.target.clone()),
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Writes every channel group of a record into `dir` and returns
/// `(file name, sha256)` pairs.
pub fn save_record(dir: &Path, record: &SampleRecord) -> Result<Vec<(String, String)>> {
    std::fs::create_dir_all(dir)?;
    let groups = record.gbuffer.channel_groups();
    let mut sums = Vec::with_capacity(groups.len() + 1);
    for (name, tensor) in groups
        .iter()
        .map(|(n, t)| (*n, *t))
        .chain([(TARGET_FILE, &record.target)])
    {
        let file = format!("{name}.pfm");
        let path = dir.join(&file);
        write_pfm(&path, tensor)?;
        sums.push((file.clone(), sha256_hex(&std::fs::read(&path)?)));
    }
    Ok(sums)
}

fn load_channel(
    dir: &Path,
    name: &str,
    checksums: &BTreeMap<String, String>,
) -> Result<Tensor> {
    let file = format!("{name}.pfm");
    let path = dir.join(&file);
    if !path.exists() {
        return Err(Error::MissingChannel(name.to_string()));
    }
    if let Some(expected) = checksums.get(&file) {
        let actual = sha256_hex(&std::fs::read(&path)?);
        if &actual != expected {
            return Err(Error::ChecksumMismatch(path));
        }
    }
    read_pfm(&path)
}

/// Loads just the channel groups from a record directory, without metadata
/// or checksum verification. Used by standalone inference on a G-buffer
/// directory.
pub fn load_gbuffer(dir: &Path) -> Result<GBuffer> {
    let none = BTreeMap::new();
    Ok(GBuffer {
        positions_camera: load_channel(dir, "positions_camera", &none)?,
        normals_camera: load_channel(dir, "normals_camera", &none)?,
        normals_world: load_channel(dir, "normals_world", &none)?,
        depth: load_channel(dir, "depth", &none)?,
        focal_distance: load_channel(dir, "focal_distance", &none)?,
        albedo: load_channel(dir, "albedo", &none)?,
        direct_light: load_channel(dir, "direct_light", &none)?,
        coverage: load_channel(dir, "coverage", &none)?,
    })
}

/// Loads a record saved by [`save_record`]. Checksums, when present for a
/// file, are verified before parsing.
pub fn load_record(
    dir: &Path,
    meta: RecordMeta,
    checksums: &BTreeMap<String, String>,
) -> Result<SampleRecord> {
    let gbuffer = GBuffer {
        positions_camera: load_channel(dir, "positions_camera", checksums)?,
        normals_camera: load_channel(dir, "normals_camera", checksums)?,
        normals_world: load_channel(dir, "normals_world", checksums)?,
        depth: load_channel(dir, "depth", checksums)?,
        focal_distance: load_channel(dir, "focal_distance", checksums)?,
        albedo: load_channel(dir, "albedo", checksums)?,
        direct_light: load_channel(dir, "direct_light", checksums)?,
        coverage: load_channel(dir, "coverage", checksums)?,
    };
    let target = load_channel(dir, TARGET_FILE, checksums)?;
    Ok(SampleRecord { meta, gbuffer, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{AoSpec, HemisphereWeighting};

    fn small_record() -> SampleRecord {
        let n = 4;
        let t = |c: usize, v: f32| Tensor::filled(c, n, n, v);
        SampleRecord {
            meta: RecordMeta {
                id: "s000_v001_r0".into(),
                scene_id: 0,
                view_id: 1,
                effect: EffectSpec::Ao(AoSpec {
                    radius: 0.25,
                    spp: 8,
                    weighting: HemisphereWeighting::Cosine,
                }),
                augmentation: "r0".into(),
            },
            gbuffer: GBuffer {
                positions_camera: t(3, 1.0),
                normals_camera: t(3, 0.5),
                normals_world: t(3, -0.5),
                depth: t(1, 1.0),
                focal_distance: t(1, 0.0),
                albedo: t(3, 0.7),
                direct_light: t(3, 0.2),
                coverage: t(1, 1.0),
            },
            target: t(1, 0.9),
        }
    }

    #[test]
    fn save_load_roundtrip_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_record();
        let sums = save_record(dir.path(), &rec).unwrap();
        assert_eq!(sums.len(), 9);
        let map: BTreeMap<String, String> = sums.into_iter().collect();
        let back = load_record(dir.path(), rec.meta.clone(), &map).unwrap();
        assert_eq!(back.target, rec.target);
        assert_eq!(back.gbuffer.albedo, rec.gbuffer.albedo);
    }

    #[test]
    fn missing_channel_names_the_channel() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_record();
        let map: BTreeMap<String, String> =
            save_record(dir.path(), &rec).unwrap().into_iter().collect();
        std::fs::remove_file(dir.path().join("albedo.pfm")).unwrap();
        match load_record(dir.path(), rec.meta.clone(), &map) {
            Err(Error::MissingChannel(name)) => assert_eq!(name, "albedo"),
            other => panic!("expected missing channel, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_channel_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_record();
        let map: BTreeMap<String, String> =
            save_record(dir.path(), &rec).unwrap().into_iter().collect();
        let victim = dir.path().join("depth.pfm");
        let mut bytes = std::fs::read(&victim).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&victim, bytes).unwrap();
        assert!(matches!(
            load_record(dir.path(), rec.meta.clone(), &map),
            Err(Error::ChecksumMismatch(_))
        ));
    }

    #[test]
    fn input_tensor_concatenates_in_order() {
        let rec = small_record();
        let input = rec
            .input_tensor(
                &[Attribute::NormalsCamera, Attribute::PositionsCamera],
                NetMode::Mono,
            )
            .unwrap();
        assert_eq!(input.shape(), (6, 4, 4));
        assert!(input.channel(0).iter().all(|&v| v == 0.5));
        assert!(input.channel(3).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mono_target_reduces_rgb_to_luminance() {
        let mut rec = small_record();
        rec.target = Tensor::filled(3, 4, 4, 0.5);
        let t = rec.target_for(NetMode::Mono).unwrap();
        assert_eq!(t.channels(), 1);
        assert!((t.data()[0] - 0.5).abs() < 1e-6);
    }
}
