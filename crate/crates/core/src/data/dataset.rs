//! Labeled sample collections.

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;

/// One row per sample; labels are class ids in [0, num_classes).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub domains: Option<Vec<usize>>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(
        inputs: Matrix,
        labels: Vec<usize>,
        domains: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Dataset> {
        let ds = Dataset {
            inputs,
            labels,
            domains,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.rows() != self.labels.len() {
            return Err(CoreError::InvalidArgument(format!(
                "dataset has {} rows but {} labels",
                self.inputs.rows(),
                self.labels.len()
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(CoreError::InvalidArgument(format!(
                "label {bad} outside 0..{}",
                self.num_classes
            )));
        }
        if let Some(doms) = &self.domains {
            if doms.len() != self.labels.len() {
                return Err(CoreError::InvalidArgument(
                    "domain list length differs from labels".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// New dataset holding the selected rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Matrix::zeros(indices.len(), self.inputs.cols());
        let mut labels = Vec::with_capacity(indices.len());
        let mut domains = self.domains.as_ref().map(|_| Vec::with_capacity(indices.len()));
        for (row, &i) in indices.iter().enumerate() {
            inputs.row_mut(row).copy_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
            if let (Some(out), Some(src)) = (domains.as_mut(), self.domains.as_ref()) {
                out.push(src[i]);
            }
        }
        Dataset {
            inputs,
            labels,
            domains,
            num_classes: self.num_classes,
        }
    }

    /// Row indices per class id, ascending.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// Distinct class ids present, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter()
            .enumerate()
            .filter_map(|(c, &s)| s.then_some(c))
            .collect()
    }
}
