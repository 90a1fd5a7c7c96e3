//! Seeded k-means: k-means++ initialization followed by Lloyd iterations.

use crate::error::{CoreError, Result};
use crate::linalg::{sq_dist, SeededRng, Vector};

/// Index and squared distance of the closest center.
pub fn nearest_center(point: &[f64], centers: &[Vector]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c.as_slice());
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Sum of squared distances from each point to its nearest center.
pub fn kmeans_objective(points: &[Vector], centers: &[Vector]) -> f64 {
    points
        .iter()
        .map(|p| nearest_center(p.as_slice(), centers).1)
        .sum()
}

fn plus_plus_init(points: &[Vector], k: usize, rng: &mut SeededRng) -> Vec<Vector> {
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.below(n)].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_slice(), centers[0].as_slice()))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all remaining points coincide with a center
            rng.below(n)
        };
        centers.push(points[next].clone());
        let last = centers.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p.as_slice(), last.as_slice());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic for fixed
/// inputs and seed; empty clusters keep their previous center.
pub fn kmeans(points: &[Vector], k: usize, seed: u64, max_iters: usize) -> Result<Vec<Vector>> {
    if points.is_empty() {
        return Err(CoreError::EmptyInput("kmeans: no points"));
    }
    if k == 0 {
        return Err(CoreError::InvalidArgument("kmeans: k must be >= 1".into()));
    }
    if k > points.len() {
        return Err(CoreError::InvalidArgument(format!(
            "kmeans: k = {k} exceeds {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(CoreError::InvalidArgument(
            "kmeans: points have differing dimensions".into(),
        ));
    }

    let mut rng = SeededRng::new(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];

    for _ in 0..max_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest_center(p.as_slice(), &centers);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.as_slice()) {
                *s += x;
            }
        }
        for (c, (sum, &count)) in sums.iter().zip(&counts).enumerate() {
            if count == 0 {
                continue;
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
            centers[c] = Vector::from_slice(&mean);
        }
    }
    Ok(centers)
}

/// Default Lloyd iteration cap.
pub const KMEANS_MAX_ITERS: usize = 100;
