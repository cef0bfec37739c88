//! Training data handling: record storage (one PFM per channel group plus
//! a JSON manifest), attribute-aware dihedral augmentation, and
//! scene-disjoint split assignment.

mod augment;
mod generate;
mod manifest;
pub mod pfm;
mod records;

pub use augment::{apply_augmentation, augment, augment_dataset, DihedralElement};
pub use generate::{generate, GenerateOptions};
pub use manifest::{
    assign_splits, Dataset, DatasetManifest, ManifestRecord, Split, MANIFEST_FILE,
    MANIFEST_VERSION,
};
pub use records::{
    load_gbuffer, load_record, save_record, RecordMeta, SampleRecord, GBUFFER_FILES, TARGET_FILE,
};
