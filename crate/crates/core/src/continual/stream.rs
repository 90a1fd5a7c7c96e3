//! Task streams for the three incremental-learning scenarios.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CoreError, Result};

/// Scenario: task-, domain-, or class-incremental.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Til,
    Dil,
    Cil,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Til => "til",
            Scenario::Dil => "dil",
            Scenario::Cil => "cil",
        })
    }
}

/// One task: its class set, optional domain id, and train/test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_id: usize,
    /// Sorted, deduplicated class ids.
    pub classes: Vec<usize>,
    pub domain_id: Option<usize>,
    pub train: Dataset,
    pub test: Dataset,
}

/// Ordered tasks under one scenario tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub scenario: Scenario,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(CoreError::EmptyInput("task stream has no tasks"));
        }
        for task in &self.tasks {
            if task.classes.is_empty() {
                return Err(CoreError::InvalidArgument(format!(
                    "task {} has an empty class set",
                    task.task_id
                )));
            }
            if task.classes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CoreError::InvalidArgument(format!(
                    "task {} class set is not sorted/deduplicated",
                    task.task_id
                )));
            }
            for split in [&task.train, &task.test] {
                if let Some(bad) = split.labels.iter().find(|l| !task.classes.contains(l)) {
                    return Err(CoreError::InvalidArgument(format!(
                        "task {} split contains foreign class {bad}",
                        task.task_id
                    )));
                }
            }
        }
        match self.scenario {
            Scenario::Cil | Scenario::Til => {
                // pairwise-disjoint class sets; in CIL the seen label space
                // therefore grows monotonically stage by stage
                let mut seen = std::collections::BTreeSet::new();
                for task in &self.tasks {
                    for &c in &task.classes {
                        if !seen.insert(c) {
                            return Err(CoreError::InvalidArgument(format!(
                                "class {c} appears in more than one task"
                            )));
                        }
                    }
                }
            }
            Scenario::Dil => {
                let first = &self.tasks[0].classes;
                let mut domains = std::collections::BTreeSet::new();
                for task in &self.tasks {
                    if &task.classes != first {
                        return Err(CoreError::InvalidArgument(format!(
                            "task {} class set differs from the shared label space",
                            task.task_id
                        )));
                    }
                    let dom = task.domain_id.ok_or_else(|| {
                        CoreError::InvalidArgument(format!(
                            "task {} lacks a domain id in a domain-incremental stream",
                            task.task_id
                        ))
                    })?;
                    if !domains.insert(dom) {
                        return Err(CoreError::InvalidArgument(format!(
                            "domain {dom} appears in more than one task"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Classes seen up to and including stage t (1-based).
    pub fn seen_classes(&self, stage: usize) -> Vec<usize> {
        let mut classes: Vec<usize> = self
            .tasks
            .iter()
            .take(stage)
            .flat_map(|t| t.classes.iter().copied())
            .collect();
        classes.sort_unstable();
        classes.dedup();
        classes
    }
}

/// SGD hyperparameters; the learning-rate schedule is cosine decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub lambda_orth: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> TrainHyper {
        TrainHyper {
            lr: 0.05,
            weight_decay: 0.0005,
            batch: 48,
            epochs: 20,
            momentum: 0.9,
            lambda_orth: 1.0,
            seed: 1993,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(CoreError::InvalidArgument("lr must be > 0".into()));
        }
        if self.batch < 1 || self.epochs < 1 {
            return Err(CoreError::InvalidArgument(
                "batch and epochs must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::InvalidArgument(
                "momentum must be in [0, 1)".into(),
            ));
        }
        if !(self.lambda_orth >= 0.0) {
            return Err(CoreError::InvalidArgument(
                "lambda_orth must be >= 0".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(CoreError::InvalidArgument(
                "weight_decay must be >= 0".into(),
            ));
        }
        Ok(())
    }
}
