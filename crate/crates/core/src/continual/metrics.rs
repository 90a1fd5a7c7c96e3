//! Last/Avg accuracy bookkeeping.
//!
//! Last_t is Top-1 accuracy (percent) over the union of test splits of
//! tasks 1..t; Avg_t is the running mean (1/t) * sum of Last_i. Correct
//! counts stay integers until the final division.

use crate::error::{CoreError, Result};

/// Accuracy percent from integer counts.
pub fn accuracy_percent(correct: usize, total: usize) -> f64 {
    100.0 * correct as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    last: Vec<f64>,
    avg: Vec<f64>,
}

impl MetricsTable {
    pub fn new() -> MetricsTable {
        MetricsTable::default()
    }

    /// Append a stage's Last accuracy and extend the Avg series.
    pub fn push_last(&mut self, last: f64) -> Result<()> {
        if !(0.0..=100.0).contains(&last) {
            return Err(CoreError::InvalidArgument(format!(
                "Last accuracy {last} outside [0, 100]"
            )));
        }
        self.last.push(last);
        let sum: f64 = self.last.iter().sum();
        self.avg.push(sum / self.last.len() as f64);
        Ok(())
    }

    pub fn last(&self) -> &[f64] {
        &self.last
    }

    pub fn avg(&self) -> &[f64] {
        &self.avg
    }

    pub fn stages(&self) -> usize {
        self.last.len()
    }

    pub fn final_last(&self) -> Option<f64> {
        self.last.last().copied()
    }

    pub fn final_avg(&self) -> Option<f64> {
        self.avg.last().copied()
    }

    /// Recompute every Avg_t from the Last series; exact equality.
    pub fn identity_holds(&self) -> bool {
        self.last.iter().enumerate().all(|(i, _)| {
            let t = i + 1;
            let sum: f64 = self.last[..t].iter().sum();
            sum / t as f64 == self.avg[i]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_is_running_mean() {
        let mut m = MetricsTable::new();
        m.push_last(80.0).unwrap();
        m.push_last(60.0).unwrap();
        assert_eq!(m.avg(), &[80.0, 70.0]);
        assert!(m.identity_holds());
    }

    #[test]
    fn rejects_out_of_range() {
        let mut m = MetricsTable::new();
        assert!(m.push_last(101.0).is_err());
        assert!(m.push_last(-0.5).is_err());
    }

    #[test]
    fn exact_identity_on_awkward_values() {
        let mut m = MetricsTable::new();
        for &v in &[33.333333333333336, 66.66666666666667, 14.285714285714286] {
            m.push_last(v).unwrap();
        }
        assert!(m.identity_holds());
    }

    #[test]
    fn accuracy_percent_integer_counts() {
        assert_eq!(accuracy_percent(1, 1), 100.0);
        assert_eq!(accuracy_percent(0, 1), 0.0);
        assert_eq!(accuracy_percent(1, 3), 100.0 / 3.0);
    }
}
