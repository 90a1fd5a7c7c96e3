//! Synthetic Gaussian-cluster streams with a controllable domain gap.

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::{matvec, Matrix, SeededRng, Vector};
use crate::reft::random_orthonormal;

/// Spread of the seeded class means; sample noise is unit std, so at
/// MEAN_STD = 3 clusters sit far apart relative to their width.
const MEAN_STD: f64 = 3.0;
const NOISE_STD: f64 = 1.0;
/// Per-dimension shift applied by each DIL domain transform.
const DOMAIN_SHIFT_STD: f64 = 8.0;

fn sample_classes(
    rng: &mut SeededRng,
    means: &[Vector],
    per_class: usize,
    dim: usize,
) -> (Matrix, Vec<usize>) {
    let n = means.len() * per_class;
    let mut inputs = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for (o, m) in inputs.row_mut(row).iter_mut().zip(mean.as_slice()) {
                *o = m + NOISE_STD * rng.normal();
            }
            labels.push(class);
            row += 1;
        }
    }
    (inputs, labels)
}

/// Pretraining base set plus a disjoint-class downstream set whose
/// inputs pass through one fixed seeded affine transform. Strength 0
/// leaves the downstream family identical to the base generator.
pub fn make_synthetic_cil(
    n_classes: usize,
    dim: usize,
    per_class: usize,
    gap_strength: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_classes < 2 {
        return Err(CoreError::InvalidArgument(
            "make_synthetic_cil: need at least 2 classes".into(),
        ));
    }
    if per_class < 2 {
        return Err(CoreError::InvalidArgument(
            "make_synthetic_cil: need at least 2 samples per class".into(),
        ));
    }
    if dim == 0 {
        return Err(CoreError::InvalidArgument(
            "make_synthetic_cil: dim must be > 0".into(),
        ));
    }
    let root = SeededRng::new(seed);
    let mut mean_rng = root.derive(1);
    let base_means: Vec<Vector> = (0..n_classes)
        .map(|_| Vector::gaussian(&mut mean_rng, dim, MEAN_STD))
        .collect();
    let down_means: Vec<Vector> = (0..n_classes)
        .map(|_| Vector::gaussian(&mut mean_rng, dim, MEAN_STD))
        .collect();

    let mut base_rng = root.derive(2);
    let (base_in, base_labels) = sample_classes(&mut base_rng, &base_means, per_class, dim);

    let mut down_rng = root.derive(3);
    let (mut down_in, down_labels) = sample_classes(&mut down_rng, &down_means, per_class, dim);

    // fixed affine gap: x -> (I + g*G/sqrt(dim)) x + g*c
    let mut gap_rng = root.derive(4);
    let g_mat = Matrix::gaussian(&mut gap_rng, dim, dim, 1.0 / (dim as f64).sqrt());
    let shift = Vector::gaussian(&mut gap_rng, dim, 1.0);
    if gap_strength != 0.0 {
        for i in 0..down_in.rows() {
            let x = down_in.row(i).to_vec();
            let gx = matvec(&g_mat, &x)?;
            for ((o, gxj), c) in down_in
                .row_mut(i)
                .iter_mut()
                .zip(&gx)
                .zip(shift.as_slice())
            {
                *o += gap_strength * (gxj + c);
            }
        }
    }

    Ok((
        Dataset::new(base_in, base_labels, None, n_classes)?,
        Dataset::new(down_in, down_labels, None, n_classes)?,
    ))
}

/// One shared class structure observed under per-domain rotations and
/// shifts; domain ids are recorded per sample.
pub fn make_synthetic_dil(
    n_domains: usize,
    n_classes: usize,
    per_class: usize,
    dim: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_domains < 2 {
        return Err(CoreError::InvalidArgument(
            "make_synthetic_dil: need at least 2 domains".into(),
        ));
    }
    if n_classes < 2 || per_class < 2 || dim == 0 {
        return Err(CoreError::InvalidArgument(
            "make_synthetic_dil: degenerate class/sample/dim counts".into(),
        ));
    }
    let root = SeededRng::new(seed);
    let mut mean_rng = root.derive(1);
    let means: Vec<Vector> = (0..n_classes)
        .map(|_| Vector::gaussian(&mut mean_rng, dim, MEAN_STD))
        .collect();

    let n = n_domains * n_classes * per_class;
    let mut inputs = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let mut domains = Vec::with_capacity(n);
    let mut row = 0;
    for dom in 0..n_domains {
        // rotation (orthogonal, so always invertible) plus a large shift
        let mut dom_rng = root.derive(100 + dom as u64);
        let rot = random_orthonormal(&mut dom_rng, dim, dim);
        let shift = Vector::gaussian(&mut dom_rng, dim, DOMAIN_SHIFT_STD);
        let mut sample_rng = root.derive(200 + dom as u64);
        for (class, mean) in means.iter().enumerate() {
            for _ in 0..per_class {
                let x: Vec<f64> = mean
                    .as_slice()
                    .iter()
                    .map(|m| m + NOISE_STD * sample_rng.normal())
                    .collect();
                let rx = matvec(&rot, &x)?;
                for ((o, r), s) in inputs
                    .row_mut(row)
                    .iter_mut()
                    .zip(&rx)
                    .zip(shift.as_slice())
                {
                    *o = r + s;
                }
                labels.push(class);
                domains.push(dom);
                row += 1;
            }
        }
    }
    Dataset::new(inputs, labels, Some(domains), n_classes)
}
