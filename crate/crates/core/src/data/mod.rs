//! Dataset synthesis, file IO, task splitting, and imbalance sampling.

mod dataset;
mod imbalance;
mod io;
mod split;
mod synth;

pub use dataset::Dataset;
pub use imbalance::{imbalance_sample, ImbalanceSpec};
pub use io::{
    load_csv, load_idx, load_manifest, read_idx_images, read_idx_labels, write_csv,
    DatasetManifest, ManifestEntry, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use split::{split_domains, split_tasks, DEFAULT_SPLIT_SEED};
pub use synth::{make_synthetic_cil, make_synthetic_dil};
