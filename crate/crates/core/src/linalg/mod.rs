//! Deterministic dense linear algebra, clustering, and RNG primitives.

mod kmeans;
mod matrix;
mod rng;

pub use kmeans::{kmeans, kmeans_objective, nearest_center, KMEANS_MAX_ITERS};
pub use matrix::{
    dot, frobenius, matmul, matmul_nt, matmul_tn, matvec, matvec_t, sigma_max, sq_dist, Matrix,
    Vector, SIGMA_MAX_ITERS, SIGMA_MAX_TOL,
};
pub use rng::SeededRng;
