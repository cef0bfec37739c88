//! Dataset manifest: the on-disk index of records, split assignments and
//! file checksums, plus the scene-disjoint split rule.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::records::{load_record, save_record, RecordMeta, SampleRecord};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Result<Split> {
        match name {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(flatten)]
    pub meta: RecordMeta,
    /// Record directory relative to the manifest.
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub records: Vec<ManifestRecord>,
    /// Split name to record ids.
    pub splits: BTreeMap<String, Vec<String>>,
    /// Relative file path to sha256.
    pub checksums: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn save(&self, root: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(root.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    pub fn load(root: &Path) -> Result<DatasetManifest> {
        let path = root.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path)?;
        let m: DatasetManifest = serde_json::from_slice(&bytes)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format {
                path,
                reason: format!("manifest version {} unsupported", m.version),
            });
        }
        Ok(m)
    }

    /// Record id to split, erroring unless the splits form a partition.
    pub fn split_map(&self) -> Result<BTreeMap<String, Split>> {
        let mut map = BTreeMap::new();
        for (name, ids) in &self.splits {
            let split = Split::from_name(name)?;
            for id in ids {
                if map.insert(id.clone(), split).is_some() {
                    return Err(Error::invalid(format!("record `{id}` in two splits")));
                }
            }
        }
        for r in &self.records {
            if !map.contains_key(&r.meta.id) {
                return Err(Error::invalid(format!(
                    "record `{}` missing from splits",
                    r.meta.id
                )));
            }
        }
        Ok(map)
    }
}

/// Assigns splits: every record of a test scene goes to test; the remaining
/// records are grouped by (scene, view) — augmented variants of one view
/// stay together — and the groups are split 9:1 into train and validation
/// with a seeded shuffle.
pub fn assign_splits(
    metas: &[RecordMeta],
    test_scene_ids: &[u64],
    seed: u64,
) -> Result<Vec<Split>> {
    let mut test_set = BTreeSet::new();
    for id in test_scene_ids {
        if !test_set.insert(*id) {
            return Err(Error::invalid(format!("duplicate test scene id {id}")));
        }
    }

    let mut groups: Vec<(u64, u64)> = metas
        .iter()
        .filter(|m| !test_set.contains(&m.scene_id))
        .map(|m| (m.scene_id, m.view_id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if groups.is_empty() {
        return Err(Error::invalid(
            "empty train split: every scene is a test scene",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let g = groups.len();
    let val_count = if g == 1 {
        0
    } else {
        (((g as f64) / 10.0).round() as usize).clamp(1, g - 1)
    };
    let val_groups: BTreeSet<(u64, u64)> = groups[..val_count].iter().copied().collect();

    Ok(metas
        .iter()
        .map(|m| {
            if test_set.contains(&m.scene_id) {
                Split::Test
            } else if val_groups.contains(&(m.scene_id, m.view_id)) {
                Split::Validation
            } else {
                Split::Train
            }
        })
        .collect())
}

/// In-memory dataset: records plus their split assignment.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<SampleRecord>,
    splits: Vec<Split>,
}

impl Dataset {
    /// Wraps records and assigns splits with [`assign_splits`].
    pub fn new(records: Vec<SampleRecord>, test_scene_ids: &[u64], seed: u64) -> Result<Dataset> {
        let metas: Vec<RecordMeta> = records.iter().map(|r| r.meta.clone()).collect();
        let splits = assign_splits(&metas, test_scene_ids, seed)?;
        Ok(Dataset { records, splits })
    }

    pub fn from_parts(records: Vec<SampleRecord>, splits: Vec<Split>) -> Result<Dataset> {
        if records.len() != splits.len() {
            return Err(Error::invalid("records and splits lengths differ"));
        }
        Ok(Dataset { records, splits })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SampleRecord {
        &self.records[i]
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Writes `records/<id>/*.pfm` plus the manifest under `root`.
    pub fn save(&self, root: &Path) -> Result<DatasetManifest> {
        std::fs::create_dir_all(root)?;
        let mut manifest = DatasetManifest {
            version: MANIFEST_VERSION,
            records: Vec::new(),
            splits: BTreeMap::new(),
            checksums: BTreeMap::new(),
        };
        for (record, split) in self.records.iter().zip(&self.splits) {
            let dir_rel = format!("records/{}", record.meta.id);
            let dir = root.join(&dir_rel);
            for (file, sum) in save_record(&dir, record)? {
                manifest.checksums.insert(format!("{dir_rel}/{file}"), sum);
            }
            manifest.records.push(ManifestRecord {
                meta: record.meta.clone(),
                dir: dir_rel,
            });
            manifest
                .splits
                .entry(split.name().to_string())
                .or_default()
                .push(record.meta.id.clone());
        }
        manifest.save(root)?;
        Ok(manifest)
    }

    /// Loads a dataset written by [`Dataset::save`], verifying checksums.
    pub fn load(root: &Path) -> Result<Dataset> {
        let manifest = DatasetManifest::load(root)?;
        let split_map = manifest.split_map()?;
        let mut records = Vec::with_capacity(manifest.records.len());
        let mut splits = Vec::with_capacity(manifest.records.len());
        for mr in &manifest.records {
            let prefix = format!("{}/", mr.dir);
            let sums: BTreeMap<String, String> = manifest
                .checksums
                .iter()
                .filter_map(|(k, v)| {
                    k.strip_prefix(&prefix).map(|f| (f.to_string(), v.clone()))
                })
                .collect();
            let record = load_record(&root.join(&mr.dir), mr.meta.clone(), &sums)?;
            splits.push(split_map[&mr.meta.id]);
            records.push(record);
        }
        Dataset::from_parts(records, splits)
    }
}
