//! Exponential class-imbalance sampler: class i keeps M * alpha^(i/N)
//! samples (rounded half-up, floored at one), i being the 1-based class
//! order and N the total class count.

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceSpec {
    /// Decay factor in (0, 1]; 1 keeps every class at `base_count`.
    pub alpha: f64,
    /// M, the balanced per-class count.
    pub base_count: usize,
}

impl ImbalanceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Closed-form kept count for 1-based class index i of n_classes.
    pub fn count_for(&self, i: usize, n_classes: usize) -> usize {
        let x = self.base_count as f64 * self.alpha.powf(i as f64 / n_classes as f64);
        (x.round() as usize).max(1)
    }
}

/// Subsample each class to its formula count by a seeded draw without
/// replacement. Classes are walked in class-id order; classes absent
/// from this dataset (e.g. a single task's split of a larger label
/// space) are skipped.
pub fn imbalance_sample(ds: &Dataset, spec: &ImbalanceSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = SeededRng::new(seed);
    let by_class = ds.indices_by_class();
    let mut keep = Vec::new();
    for (class, rows) in by_class.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let want = spec.count_for(class + 1, ds.num_classes);
        if rows.len() < want {
            return Err(CoreError::InvalidArgument(format!(
                "class {class} has {} samples but the imbalance formula needs {want}",
                rows.len()
            )));
        }
        for local in rng.sample_indices(rows.len(), want) {
            keep.push(rows[local]);
        }
    }
    if keep.is_empty() {
        return Err(CoreError::EmptyInput("imbalance_sample: empty dataset"));
    }
    Ok(ds.select(&keep))
}
