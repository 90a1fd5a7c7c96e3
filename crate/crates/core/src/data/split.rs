//! Class-order shuffling, task partitioning, and stratified splits.

use crate::continual::{Scenario, Task, TaskStream};
use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::SeededRng;

/// Seed used for class-order shuffling unless a run overrides it.
pub const DEFAULT_SPLIT_SEED: u64 = 1993;

/// Stratified 80/20 row split; every class lands within one sample of
/// the ratio. Single-sample classes go entirely to train.
fn stratified_split(
    rows_per_class: &[Vec<usize>],
    rng: &mut SeededRng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rows in rows_per_class {
        if rows.is_empty() {
            continue;
        }
        let mut shuffled = rows.clone();
        rng.shuffle(&mut shuffled);
        let n = shuffled.len();
        let train_n = if n < 2 {
            n
        } else {
            ((n as f64 * 0.8).round() as usize).clamp(1, n - 1)
        };
        train.extend_from_slice(&shuffled[..train_n]);
        test.extend_from_slice(&shuffled[train_n..]);
    }
    // deterministic row order independent of class iteration details
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Shuffle the class order with `seed`, partition into consecutive
/// groups of `inc` classes (a smaller final task takes any remainder),
/// and build stratified 80/20 train/test splits per task.
pub fn split_tasks(
    ds: &Dataset,
    inc: usize,
    seed: u64,
    scenario: Scenario,
) -> Result<TaskStream> {
    ds.validate()?;
    if scenario == Scenario::Dil {
        return Err(CoreError::InvalidArgument(
            "split_tasks builds class-partitioned streams; use split_domains for dil".into(),
        ));
    }
    let classes = ds.present_classes();
    if inc < 1 {
        return Err(CoreError::InvalidArgument("inc must be >= 1".into()));
    }
    if inc > classes.len() {
        return Err(CoreError::InvalidArgument(format!(
            "inc {inc} exceeds the {} available classes",
            classes.len()
        )));
    }

    let mut order = classes;
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut order);

    let by_class = ds.indices_by_class();
    let mut tasks = Vec::new();
    for (task_id, group) in order.chunks(inc).enumerate() {
        let mut task_classes: Vec<usize> = group.to_vec();
        task_classes.sort_unstable();
        let rows_per_class: Vec<Vec<usize>> = task_classes
            .iter()
            .map(|&c| by_class[c].clone())
            .collect();
        let (train_rows, test_rows) = stratified_split(&rows_per_class, &mut rng);
        tasks.push(Task {
            task_id,
            classes: task_classes,
            domain_id: None,
            train: ds.select(&train_rows),
            test: ds.select(&test_rows),
        });
    }
    let stream = TaskStream { scenario, tasks };
    stream.validate()?;
    Ok(stream)
}

/// One task per domain id (ascending), all sharing the dataset's class
/// set; stratified 80/20 within each domain.
pub fn split_domains(ds: &Dataset, seed: u64) -> Result<TaskStream> {
    ds.validate()?;
    let domains = ds
        .domains
        .as_ref()
        .ok_or_else(|| CoreError::InvalidArgument("dataset has no domain ids".into()))?;
    let mut domain_ids: Vec<usize> = domains.clone();
    domain_ids.sort_unstable();
    domain_ids.dedup();

    let classes = ds.present_classes();
    let mut rng = SeededRng::new(seed);
    let mut tasks = Vec::new();
    for (task_id, &dom) in domain_ids.iter().enumerate() {
        let rows_per_class: Vec<Vec<usize>> = classes
            .iter()
            .map(|&c| {
                (0..ds.len())
                    .filter(|&i| ds.labels[i] == c && domains[i] == dom)
                    .collect()
            })
            .collect();
        let (train_rows, test_rows) = stratified_split(&rows_per_class, &mut rng);
        tasks.push(Task {
            task_id,
            classes: classes.clone(),
            domain_id: Some(dom),
            train: ds.select(&train_rows),
            test: ds.select(&test_rows),
        });
    }
    let stream = TaskStream {
        scenario: Scenario::Dil,
        tasks,
    };
    stream.validate()?;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic_cil, make_synthetic_dil};

    #[test]
    fn inc10_partitions_100_classes_into_10_tasks() {
        let (_, down) = make_synthetic_cil(100, 4, 5, 0.0, 1).unwrap();
        let stream = split_tasks(&down, 10, DEFAULT_SPLIT_SEED, Scenario::Cil).unwrap();
        assert_eq!(stream.tasks.len(), 10);
        for task in &stream.tasks {
            assert_eq!(task.classes.len(), 10);
        }
        // union of class sets is the full set, pairwise disjoint
        let mut all: Vec<usize> = stream
            .tasks
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn remainder_goes_to_final_task() {
        let (_, down) = make_synthetic_cil(7, 4, 5, 0.0, 2).unwrap();
        let stream = split_tasks(&down, 3, 9, Scenario::Cil).unwrap();
        assert_eq!(stream.tasks.len(), 3);
        assert_eq!(stream.tasks[2].classes.len(), 1);
    }

    #[test]
    fn same_seed_same_stream() {
        let (_, down) = make_synthetic_cil(12, 6, 10, 0.3, 3).unwrap();
        let a = split_tasks(&down, 4, 1993, Scenario::Cil).unwrap();
        let b = split_tasks(&down, 4, 1993, Scenario::Cil).unwrap();
        assert_eq!(a, b);
        let c = split_tasks(&down, 4, 1991, Scenario::Cil).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stratified_ratio_within_one_sample() {
        let (_, down) = make_synthetic_cil(6, 4, 20, 0.0, 4).unwrap();
        let stream = split_tasks(&down, 2, 5, Scenario::Cil).unwrap();
        for task in &stream.tasks {
            for &c in &task.classes {
                let tr = task.train.labels.iter().filter(|&&l| l == c).count();
                let te = task.test.labels.iter().filter(|&&l| l == c).count();
                assert_eq!(tr + te, 20);
                assert!((tr as f64 - 16.0).abs() <= 1.0, "train {tr}");
            }
        }
    }

    #[test]
    fn bad_inc_rejected() {
        let (_, down) = make_synthetic_cil(4, 4, 5, 0.0, 5).unwrap();
        assert!(split_tasks(&down, 0, 1, Scenario::Cil).is_err());
        assert!(split_tasks(&down, 9, 1, Scenario::Cil).is_err());
    }

    #[test]
    fn domain_split_builds_valid_dil_stream() {
        let ds = make_synthetic_dil(3, 4, 10, 6, 8).unwrap();
        let stream = split_domains(&ds, 17).unwrap();
        assert_eq!(stream.tasks.len(), 3);
        for task in &stream.tasks {
            assert_eq!(task.classes, vec![0, 1, 2, 3]);
            assert!(task.domain_id.is_some());
            assert!(!task.train.is_empty());
            assert!(!task.test.is_empty());
        }
    }
}
