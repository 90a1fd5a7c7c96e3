//! Representation editing in a low-rank subspace.
//!
//! The edit family: given a projection R (rank x dim), a learned map W
//! (rank x dim) and offset b (rank),
//!
//! - interchange intervention: dii(h_b, h_s, R) = h_b + R^T(R h_s - R h_b)
//! - learned edit:          loreft(h, p)      = h + R^T(W h + b - R h)
//!
//! The edit displacement always lies in the row space of R, and its
//! 2-norm is bounded by sigma_max(R^T) * |W h + b - R h|. With
//! row-orthonormal R that factor is 1, so the bound is tight; training
//! keeps R near the orthonormal manifold through a soft penalty
//! |R R^T - I|_F^2.

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{CoreError, Result};
use crate::linalg::{
    dot, frobenius, matmul_nt, matvec, matvec_t, sigma_max, Matrix, SeededRng, Vector,
    SIGMA_MAX_ITERS, SIGMA_MAX_TOL,
};

/// Which token positions receive the edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Positions {
    #[default]
    All,
    Cls,
}

/// Per-layer edit parameters: the triple (R, W, b) plus placement.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionParams {
    pub r: Matrix,
    pub w: Matrix,
    pub b: Vector,
    pub layer: usize,
    pub rank: usize,
    pub dim: usize,
}

impl InterventionParams {
    pub fn new(r: Matrix, w: Matrix, b: Vector, layer: usize) -> Result<InterventionParams> {
        let (rank, dim) = (r.rows(), r.cols());
        if rank == 0 || rank > dim {
            return Err(CoreError::InvalidArgument(format!(
                "intervention rank {rank} must be in 1..={dim}"
            )));
        }
        if w.rows() != rank || w.cols() != dim || b.len() != rank {
            return Err(CoreError::ShapeMismatch {
                op: "intervention params",
                left_rows: rank,
                left_cols: dim,
                right_rows: w.rows(),
                right_cols: w.cols(),
            });
        }
        Ok(InterventionParams {
            r,
            w,
            b,
            layer,
            rank,
            dim,
        })
    }
}

/// Placement and size of the edits for a whole encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionConfig {
    pub layers: Vec<usize>,
    pub rank: usize,
    #[serde(default)]
    pub positions: Positions,
    pub lambda_orth: f64,
    pub init_seed: u64,
}

impl InterventionConfig {
    pub fn validate(&self, encoder_depth: usize, dim: usize) -> Result<()> {
        if self.rank == 0 || self.rank > dim {
            return Err(CoreError::InvalidArgument(format!(
                "intervention rank {} must be in 1..={dim}",
                self.rank
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &l in &self.layers {
            if l >= encoder_depth {
                return Err(CoreError::InvalidArgument(format!(
                    "intervention layer {l} out of range (encoder depth {encoder_depth})"
                )));
            }
            if !seen.insert(l) {
                return Err(CoreError::InvalidArgument(format!(
                    "duplicate intervention layer {l}"
                )));
            }
        }
        if !(self.lambda_orth >= 0.0) {
            return Err(CoreError::InvalidArgument(
                "lambda_orth must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Distributed interchange intervention: h_b + R^T(R h_s - R h_b).
pub fn dii(h_b: &Vector, h_s: &Vector, r: &Matrix) -> Result<Vector> {
    if h_b.len() != r.cols() || h_s.len() != r.cols() {
        return Err(CoreError::ShapeMismatch {
            op: "dii",
            left_rows: h_b.len(),
            left_cols: h_s.len(),
            right_rows: r.rows(),
            right_cols: r.cols(),
        });
    }
    let rb = matvec(r, h_b.as_slice())?;
    let rs = matvec(r, h_s.as_slice())?;
    let u: Vec<f64> = rs.iter().zip(&rb).map(|(s, b)| s - b).collect();
    let lift = matvec_t(r, &u)?;
    Vector::from_vec(
        h_b.as_slice()
            .iter()
            .zip(&lift)
            .map(|(h, l)| h + l)
            .collect(),
    )
}

/// Learned low-rank edit: h + R^T(W h + b - R h).
pub fn loreft(h: &Vector, p: &InterventionParams) -> Result<Vector> {
    if h.len() != p.dim {
        return Err(CoreError::ShapeMismatch {
            op: "loreft",
            left_rows: h.len(),
            left_cols: 1,
            right_rows: p.rank,
            right_cols: p.dim,
        });
    }
    let u = edit_coords(h.as_slice(), p);
    let lift = matvec_t(&p.r, &u)?;
    Vector::from_vec(
        h.as_slice()
            .iter()
            .zip(&lift)
            .map(|(hj, l)| hj + l)
            .collect(),
    )
}

/// The rank-space coordinates of the edit: u = W h + b - R h.
pub(crate) fn edit_coords(h: &[f64], p: &InterventionParams) -> Vec<f64> {
    let wh = matvec(&p.w, h).expect("shape checked by caller");
    let rh = matvec(&p.r, h).expect("shape checked by caller");
    wh.iter()
        .zip(&rh)
        .zip(p.b.as_slice())
        .map(|((w, r), b)| w + b - r)
        .collect()
}

/// Squared Frobenius distance of R R^T from the rank-sized identity.
pub fn orth_penalty(r: &Matrix) -> f64 {
    let mut gram = matmul_nt(r, r).expect("same matrix");
    for i in 0..gram.rows() {
        let v = gram.get(i, i) - 1.0;
        gram.set(i, i, v);
    }
    let f = frobenius(&gram);
    f * f
}

/// Outcome of one delta-bound evaluation.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    pub delta_norm: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Checks |R^T(W e + b - R e)| <= sigma_max(R^T) * |W e + b - R e|.
pub fn delta_bound_check(p: &InterventionParams, e: &Vector) -> Result<BoundCheck> {
    if e.len() != p.dim {
        return Err(CoreError::ShapeMismatch {
            op: "delta_bound_check",
            left_rows: e.len(),
            left_cols: 1,
            right_rows: p.rank,
            right_cols: p.dim,
        });
    }
    let u = edit_coords(e.as_slice(), p);
    let delta = matvec_t(&p.r, &u)?;
    let delta_norm = dot(&delta, &delta).sqrt();
    let sigma = sigma_max(&p.r.transpose(), SIGMA_MAX_ITERS, SIGMA_MAX_TOL)?;
    let bound = sigma * dot(&u, &u).sqrt();
    Ok(BoundCheck {
        delta_norm,
        bound,
        holds: delta_norm <= bound + 1e-9,
    })
}

/// Alignment objective: |e_s - loreft(e_b)|^2 + |R R^T - I|_F^2.
pub fn alignment_loss(e_s: &Vector, e_b: &Vector, p: &InterventionParams) -> Result<f64> {
    let edited = loreft(e_b, p)?;
    if e_s.len() != edited.len() {
        return Err(CoreError::ShapeMismatch {
            op: "alignment_loss",
            left_rows: e_s.len(),
            left_cols: 1,
            right_rows: edited.len(),
            right_cols: 1,
        });
    }
    let diff = e_s.sub(&edited);
    Ok(diff.dot(&diff) + orth_penalty(&p.r))
}

/// Trainable parameter count: |layers| * (2 * rank * dim + rank).
pub fn param_count(cfg: &InterventionConfig, dim: usize) -> usize {
    cfg.layers.len() * (2 * cfg.rank * dim + cfg.rank)
}

/// Orthonormal-row matrix from a seeded Gaussian draw (modified
/// Gram-Schmidt). rank must not exceed dim.
pub fn random_orthonormal(rng: &mut SeededRng, rank: usize, dim: usize) -> Matrix {
    assert!(rank <= dim, "rank {rank} > dim {dim}");
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while rows.len() < rank {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for q in &rows {
            let c = dot(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
        let n = dot(&v, &v).sqrt();
        if n < 1e-9 {
            continue; // degenerate draw, retry deterministically
        }
        for vi in &mut v {
            *vi /= n;
        }
        rows.push(v);
    }
    Matrix::from_rows(&rows).expect("orthonormal rows are finite")
}

/// Fresh edits: R with orthonormal rows, W = R, b = 0, so the initial
/// model is an exact identity.
pub fn init_interventions(cfg: &InterventionConfig, dim: usize) -> Result<Vec<InterventionParams>> {
    if cfg.rank > dim {
        return Err(CoreError::InvalidArgument(format!(
            "intervention rank {} exceeds dim {dim}",
            cfg.rank
        )));
    }
    let mut rng = SeededRng::new(cfg.init_seed);
    cfg.layers
        .iter()
        .map(|&layer| {
            let r = random_orthonormal(&mut rng, cfg.rank, dim);
            let w = r.clone();
            let b = Vector::zeros(cfg.rank);
            InterventionParams::new(r, w, b, layer)
        })
        .collect()
}

/// A trained edit stack: per-layer parameters plus token placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Interventions {
    pub params: Vec<InterventionParams>,
    pub positions: Positions,
}

impl Interventions {
    pub fn new(params: Vec<InterventionParams>, positions: Positions) -> Interventions {
        Interventions { params, positions }
    }

    pub fn get(&self, layer: usize) -> Option<&InterventionParams> {
        self.params.iter().find(|p| p.layer == layer)
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| 2 * p.rank * p.dim + p.rank)
            .sum()
    }
}

const INTERVENTION_MAGIC: &[u8; 8] = b"COREINT1";

#[derive(Serialize, Deserialize)]
struct InterventionHeader {
    layers: Vec<usize>,
    rank: usize,
    dim: usize,
    positions: Positions,
}

/// Serialize edits: header JSON, then per layer R, W (row-major), b.
pub fn save_interventions(iv: &Interventions) -> Result<Vec<u8>> {
    let header = InterventionHeader {
        layers: iv.params.iter().map(|p| p.layer).collect(),
        rank: iv.params.first().map_or(0, |p| p.rank),
        dim: iv.params.first().map_or(0, |p| p.dim),
        positions: iv.positions,
    };
    let mut flat = Vec::new();
    for p in &iv.params {
        flat.extend_from_slice(p.r.data());
        flat.extend_from_slice(p.w.data());
        flat.extend_from_slice(p.b.as_slice());
    }
    Ok(container::write(
        INTERVENTION_MAGIC,
        &serde_json::to_string(&header)?,
        &flat,
    ))
}

pub fn load_interventions(bytes: &[u8]) -> Result<Interventions> {
    let (json, flat) = container::read(bytes, INTERVENTION_MAGIC)?;
    let header: InterventionHeader = serde_json::from_str(&json)?;
    let per_layer = 2 * header.rank * header.dim + header.rank;
    if flat.len() != per_layer * header.layers.len() {
        return Err(CoreError::Checkpoint(format!(
            "COREINT1: expected {} params, found {}",
            per_layer * header.layers.len(),
            flat.len()
        )));
    }
    let mut out = Vec::with_capacity(header.layers.len());
    let mut pos = 0;
    let mut take = |n: usize| {
        let s = flat[pos..pos + n].to_vec();
        pos += n;
        s
    };
    for &layer in &header.layers {
        let r = Matrix::from_vec(header.rank, header.dim, take(header.rank * header.dim))?;
        let w = Matrix::from_vec(header.rank, header.dim, take(header.rank * header.dim))?;
        let b = Vector::from_vec(take(header.rank))?;
        out.push(InterventionParams::new(r, w, b, layer)?);
    }
    Ok(Interventions::new(out, header.positions))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct elementwise evaluation of h_b + R^T(R h_s - R h_b).
    fn dii_oracle(h_b: &[f64], h_s: &[f64], r: &Matrix) -> Vec<f64> {
        let (rank, dim) = (r.rows(), r.cols());
        let mut out = h_b.to_vec();
        for a in 0..rank {
            let mut rs = 0.0;
            let mut rb = 0.0;
            for j in 0..dim {
                rs += r.get(a, j) * h_s[j];
                rb += r.get(a, j) * h_b[j];
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += r.get(a, j) * (rs - rb);
            }
        }
        out
    }

    fn params_from(r: Matrix, w: Matrix, b: Vec<f64>, layer: usize) -> InterventionParams {
        InterventionParams::new(r, w, Vector::from_vec(b).unwrap(), layer).unwrap()
    }

    #[test]
    fn dii_same_source_is_identity() {
        let mut rng = SeededRng::new(1);
        for _ in 0..50 {
            let r = Matrix::gaussian(&mut rng, 3, 8, 1.0);
            let h = Vector::gaussian(&mut rng, 8, 1.0);
            let out = dii(&h, &h, &r).unwrap();
            for (a, b) in out.as_slice().iter().zip(h.as_slice()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn dii_full_rank_orthogonal_swaps_to_source() {
        let mut rng = SeededRng::new(2);
        let r = random_orthonormal(&mut rng, 6, 6);
        let h_b = Vector::gaussian(&mut rng, 6, 1.0);
        let h_s = Vector::gaussian(&mut rng, 6, 1.0);
        let out = dii(&h_b, &h_s, &r).unwrap();
        for (a, b) in out.as_slice().iter().zip(h_s.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dii_hand_case() {
        let r = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let h_b = Vector::from_slice(&[1.0, 2.0]);
        let h_s = Vector::from_slice(&[3.0, 4.0]);
        let out = dii(&h_b, &h_s, &r).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 2.0]);
        assert_eq!(out.as_slice(), dii_oracle(h_b.as_slice(), h_s.as_slice(), &r));
    }

    #[test]
    fn loreft_identity_when_w_equals_r() {
        let mut rng = SeededRng::new(3);
        for _ in 0..50 {
            let r = Matrix::gaussian(&mut rng, 4, 10, 1.0);
            let p = params_from(r.clone(), r, vec![0.0; 4], 0);
            let h = Vector::gaussian(&mut rng, 10, 1.0);
            let out = loreft(&h, &p).unwrap();
            for (a, b) in out.as_slice().iter().zip(h.as_slice()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn loreft_generalizes_dii() {
        // W = 0, b = R h_s turns the learned edit into the interchange one
        let mut rng = SeededRng::new(4);
        for _ in 0..50 {
            let r = Matrix::gaussian(&mut rng, 3, 7, 1.0);
            let h = Vector::gaussian(&mut rng, 7, 1.0);
            let h_s = Vector::gaussian(&mut rng, 7, 1.0);
            let b = matvec(&r, h_s.as_slice()).unwrap();
            let p = params_from(r.clone(), Matrix::zeros(3, 7), b, 0);
            let via_loreft = loreft(&h, &p).unwrap();
            let via_dii = dii(&h, &h_s, &r).unwrap();
            for (a, b) in via_loreft.as_slice().iter().zip(via_dii.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loreft_hand_case() {
        let p = params_from(
            Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap(),
            vec![1.0],
            0,
        );
        let out = loreft(&Vector::from_slice(&[2.0, 3.0]), &p).unwrap();
        assert_eq!(out.as_slice(), &[4.0, 3.0]);
    }

    #[test]
    fn orth_penalty_cases() {
        let mut rng = SeededRng::new(5);
        let q = random_orthonormal(&mut rng, 4, 9);
        assert!(orth_penalty(&q) < 1e-12);

        let r = Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        assert!((orth_penalty(&r) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn orth_penalty_scaling_matches_direct_evaluation() {
        let mut rng = SeededRng::new(6);
        let r = Matrix::gaussian(&mut rng, 3, 5, 1.0);
        for &c in &[0.5, 1.0, 2.0, 3.0] {
            let mut scaled = r.clone();
            scaled.scale(c);
            // direct elementwise |c^2 R R^T - I|_F^2
            let gram = matmul_nt(&r, &r).unwrap();
            let mut direct = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let e = c * c * gram.get(i, j) - if i == j { 1.0 } else { 0.0 };
                    direct += e * e;
                }
            }
            assert!((orth_penalty(&scaled) - direct).abs() < 1e-9 * direct.max(1.0));
        }
    }

    #[test]
    fn bound_zero_input() {
        let mut rng = SeededRng::new(7);
        let r = Matrix::gaussian(&mut rng, 2, 5, 1.0);
        let w = Matrix::gaussian(&mut rng, 2, 5, 1.0);
        let p = params_from(r, w, vec![0.0; 2], 0);
        let chk = delta_bound_check(&p, &Vector::zeros(5)).unwrap();
        assert_eq!(chk.delta_norm, 0.0);
        assert_eq!(chk.bound, 0.0);
        assert!(chk.holds);
    }

    #[test]
    fn bound_tight_for_orthonormal_rows() {
        let mut rng = SeededRng::new(8);
        for _ in 0..50 {
            let r = random_orthonormal(&mut rng, 4, 16);
            let w = Matrix::gaussian(&mut rng, 4, 16, 1.0);
            let b = (0..4).map(|_| rng.normal()).collect();
            let p = params_from(r, w, b, 0);
            let e = Vector::gaussian(&mut rng, 16, 1.0);
            let chk = delta_bound_check(&p, &e).unwrap();
            assert!(chk.holds);
            // sigma_max = 1, so the bound equals |W e + b - R e| and is met exactly
            assert!(
                (chk.delta_norm - chk.bound).abs() < 1e-9,
                "gap {}",
                chk.delta_norm - chk.bound
            );
        }
    }

    #[test]
    fn bound_holds_on_random_draws() {
        let mut rng = SeededRng::new(9);
        for _ in 0..200 {
            let r = Matrix::gaussian(&mut rng, 4, 32, 1.0);
            let w = Matrix::gaussian(&mut rng, 4, 32, 1.0);
            let b = (0..4).map(|_| rng.normal()).collect();
            let p = params_from(r, w, b, 0);
            let e = Vector::gaussian(&mut rng, 32, 1.0);
            assert!(delta_bound_check(&p, &e).unwrap().holds);
        }
    }

    #[test]
    fn alignment_loss_vanishes_when_constructed_to() {
        let mut rng = SeededRng::new(10);
        let r = random_orthonormal(&mut rng, 3, 8);
        let e_b = Vector::gaussian(&mut rng, 8, 1.0);
        // pick the target inside the editable affine family: W = 0, b = z + R e_b
        let z: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let lift = matvec_t(&r, &z).unwrap();
        let e_s = Vector::from_vec(
            e_b.as_slice()
                .iter()
                .zip(&lift)
                .map(|(x, l)| x + l)
                .collect(),
        )
        .unwrap();
        let rb = matvec(&r, e_b.as_slice()).unwrap();
        let b: Vec<f64> = z.iter().zip(&rb).map(|(zi, ri)| zi + ri).collect();
        let p = params_from(r, Matrix::zeros(3, 8), b, 0);
        assert!(alignment_loss(&e_s, &e_b, &p).unwrap() < 1e-18);
    }

    #[test]
    fn alignment_loss_identity_case() {
        let mut rng = SeededRng::new(11);
        let r = random_orthonormal(&mut rng, 3, 8);
        let p = params_from(r.clone(), r, vec![0.0; 3], 0);
        let e = Vector::gaussian(&mut rng, 8, 1.0);
        assert!(alignment_loss(&e, &e, &p).unwrap() < 1e-24);
    }

    #[test]
    fn alignment_loss_matches_termwise_oracle() {
        let mut rng = SeededRng::new(12);
        let r = Matrix::gaussian(&mut rng, 3, 8, 1.0);
        let w = Matrix::gaussian(&mut rng, 3, 8, 1.0);
        let b = (0..3).map(|_| rng.normal()).collect();
        let p = params_from(r.clone(), w, b, 0);
        let e_b = Vector::gaussian(&mut rng, 8, 1.0);
        let e_s = Vector::gaussian(&mut rng, 8, 1.0);
        let edited = loreft(&e_b, &p).unwrap();
        let term1: f64 = e_s
            .as_slice()
            .iter()
            .zip(edited.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let term2 = orth_penalty(&r);
        let got = alignment_loss(&e_s, &e_b, &p).unwrap();
        assert!((got - (term1 + term2)).abs() < 1e-12);
    }

    #[test]
    fn param_count_cases() {
        let mut cfg = InterventionConfig {
            layers: (0..12).collect(),
            rank: 0,
            positions: Positions::All,
            lambda_orth: 1.0,
            init_seed: 0,
        };
        assert_eq!(param_count(&cfg, 768), 0);
        cfg.rank = 8;
        assert_eq!(param_count(&cfg, 768), 147_552);
        cfg.layers = vec![0];
        assert_eq!(param_count(&cfg, 64), 1_032);
    }

    #[test]
    fn init_is_orthonormal_identity_and_deterministic() {
        let cfg = InterventionConfig {
            layers: vec![0, 2, 3],
            rank: 4,
            positions: Positions::All,
            lambda_orth: 1.0,
            init_seed: 1993,
        };
        let a = init_interventions(&cfg, 16).unwrap();
        let b = init_interventions(&cfg, 16).unwrap();
        assert_eq!(a, b);
        let mut rng = SeededRng::new(55);
        for p in &a {
            assert!(orth_penalty(&p.r) < 1e-12);
            assert_eq!(p.w, p.r);
            let h = Vector::gaussian(&mut rng, 16, 1.0);
            let out = loreft(&h, p).unwrap();
            for (x, y) in out.as_slice().iter().zip(h.as_slice()) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn rank_above_dim_rejected() {
        let cfg = InterventionConfig {
            layers: vec![0],
            rank: 20,
            positions: Positions::All,
            lambda_orth: 1.0,
            init_seed: 0,
        };
        assert!(init_interventions(&cfg, 16).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let cfg = InterventionConfig {
            layers: vec![1, 3],
            rank: 3,
            positions: Positions::Cls,
            lambda_orth: 1.0,
            init_seed: 8,
        };
        let mut params = init_interventions(&cfg, 12).unwrap();
        // nudge so the payload is not the identity-init special case
        params[0].w.data_mut()[5] = 0.25;
        let iv = Interventions::new(params, cfg.positions);
        let bytes = save_interventions(&iv).unwrap();
        let back = load_interventions(&bytes).unwrap();
        assert_eq!(iv, back);
        assert!(load_interventions(&bytes[..10]).is_err());
    }

    #[test]
    fn edit_stays_in_row_space() {
        let mut rng = SeededRng::new(13);
        for _ in 0..50 {
            let r = Matrix::gaussian(&mut rng, 3, 9, 1.0);
            let w = Matrix::gaussian(&mut rng, 3, 9, 1.0);
            let b = (0..3).map(|_| rng.normal()).collect();
            let p = params_from(r.clone(), w, b, 0);
            let h = Vector::gaussian(&mut rng, 9, 1.0);
            let delta = loreft(&h, &p).unwrap().sub(&h);
            // residual after projecting onto an orthonormal basis of rowspace(R)
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for i in 0..3 {
                let mut v = p.r.row(i).to_vec();
                for q in &basis {
                    let c = dot(&v, q);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= c * qi;
                    }
                }
                let n = dot(&v, &v).sqrt();
                if n > 1e-12 {
                    for vi in &mut v {
                        *vi /= n;
                    }
                    basis.push(v);
                }
            }
            let mut residual = delta.as_slice().to_vec();
            for q in &basis {
                let c = dot(&residual, q);
                for (ri, qi) in residual.iter_mut().zip(q) {
                    *ri -= c * qi;
                }
            }
            assert!(dot(&residual, &residual).sqrt() < 1e-9);
        }
    }
}
