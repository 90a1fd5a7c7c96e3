//! Dense row-major matrices and vectors, double precision throughout.
//!
//! Shapes are checked at the public surface and every exported operation
//! keeps entries finite; debug builds re-verify finiteness on results.

use crate::error::{CoreError, Result};
use crate::linalg::SeededRng;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wrap a row-major buffer; rejects length mismatch and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(CoreError::InvalidArgument(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(CoreError::NonFinite("matrix construction"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(CoreError::InvalidArgument(
                "rows have differing lengths".into(),
            ));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        debug_assert!(data.iter().all(|x| x.is_finite()));
        Matrix { rows, cols, data }
    }

    /// Entries drawn i.i.d. from N(0, std^2).
    pub fn gaussian(rng: &mut SeededRng, rows: usize, cols: usize, std: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.normal() * std).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// self += c * other (shapes must match).
    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Vector {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Vector> {
        if !data.iter().all(|x| x.is_finite()) {
            return Err(CoreError::NonFinite("vector construction"));
        }
        Ok(Vector { data })
    }

    pub fn from_slice(xs: &[f64]) -> Vector {
        debug_assert!(xs.iter().all(|x| x.is_finite()));
        Vector { data: xs.to_vec() }
    }

    pub fn gaussian(rng: &mut SeededRng, len: usize, std: f64) -> Vector {
        Vector {
            data: (0..len).map(|_| rng.normal() * std).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit-length copy; a zero vector is returned unchanged.
    pub fn normalized(&self) -> Vector {
        let n = self.norm2();
        if n == 0.0 {
            return self.clone();
        }
        Vector {
            data: self.data.iter().map(|x| x / n).collect(),
        }
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len());
        Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> CoreError {
    CoreError::ShapeMismatch {
        op,
        left_rows: a.rows,
        left_cols: a.cols,
        right_rows: b.rows,
        right_cols: b.cols,
    }
}

/// C = A * B.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(shape_err("matmul", a, b));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    // i-k-j order: stream rows of B against the output row
    for (a_row, out_row) in a.data.chunks_exact(a.cols).zip(out.data.chunks_exact_mut(b.cols)) {
        for (aik, b_row) in a_row.iter().zip(b.data.chunks_exact(b.cols)) {
            if *aik == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    debug_assert!(out.is_finite());
    Ok(out)
}

/// C = A * B^T.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(shape_err("matmul_nt", a, b));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for (a_row, out_row) in a.data.chunks_exact(a.cols).zip(out.data.chunks_exact_mut(b.rows)) {
        for (o, b_row) in out_row.iter_mut().zip(b.data.chunks_exact(b.cols)) {
            *o = dot(a_row, b_row);
        }
    }
    debug_assert!(out.is_finite());
    Ok(out)
}

/// C = A^T * B.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(shape_err("matmul_tn", a, b));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for (a_row, b_row) in a.data.chunks_exact(a.cols).zip(b.data.chunks_exact(b.cols)) {
        for (aki, out_row) in a_row.iter().zip(out.data.chunks_exact_mut(b.cols)) {
            if *aki == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    debug_assert!(out.is_finite());
    Ok(out)
}

/// y = A * x.
pub fn matvec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.cols != x.len() {
        return Err(CoreError::ShapeMismatch {
            op: "matvec",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: x.len(),
            right_cols: 1,
        });
    }
    Ok(a.data.chunks_exact(a.cols).map(|row| dot(row, x)).collect())
}

/// y = A^T * x.
pub fn matvec_t(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.rows != x.len() {
        return Err(CoreError::ShapeMismatch {
            op: "matvec_t",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: x.len(),
            right_cols: 1,
        });
    }
    let mut out = vec![0.0; a.cols];
    for (row, xi) in a.data.chunks_exact(a.cols).zip(x) {
        if *xi == 0.0 {
            continue;
        }
        for (o, aij) in out.iter_mut().zip(row) {
            *o += xi * aij;
        }
    }
    Ok(out)
}

/// Frobenius norm, sqrt of the sum of squared entries.
pub fn frobenius(a: &Matrix) -> f64 {
    a.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on the smaller Gram matrix.
///
/// Converges to relative tolerance `tol` or stops after `max_iters`
/// sweeps. A zero matrix yields 0.0.
pub fn sigma_max(a: &Matrix, max_iters: usize, tol: f64) -> Result<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Err(CoreError::EmptyInput("sigma_max"));
    }
    if max_iters == 0 {
        return Err(CoreError::InvalidArgument("sigma_max: max_iters == 0".into()));
    }
    if !(tol > 0.0) {
        return Err(CoreError::InvalidArgument("sigma_max: tol must be > 0".into()));
    }
    // Gram matrix on the smaller side: eigenvalues are squared singular values.
    let gram = if a.rows <= a.cols {
        matmul_nt(a, a)? // A A^T, rows x rows
    } else {
        matmul_tn(a, a)? // A^T A, cols x cols
    };
    let n = gram.rows();
    let mut rng = SeededRng::new(0x51_6d_a8_01);
    let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let vnorm = dot(&v, &v).sqrt();
    for x in &mut v {
        *x /= vnorm;
    }
    let mut lambda_prev = 0.0;
    for _ in 0..max_iters {
        let w = matvec(&gram, &v)?;
        let lambda = dot(&w, &w).sqrt();
        if lambda == 0.0 {
            return Ok(0.0);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / lambda;
        }
        if (lambda - lambda_prev).abs() <= tol * lambda.max(1e-300) {
            return Ok(lambda.sqrt());
        }
        lambda_prev = lambda;
    }
    Ok(lambda_prev.sqrt())
}

/// Default power-iteration budget for [`sigma_max`].
pub const SIGMA_MAX_ITERS: usize = 50;
/// Default relative tolerance for [`sigma_max`].
pub const SIGMA_MAX_TOL: f64 = 1e-10;

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force triple-loop product, the oracle for matmul.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// Jacobi eigenvalue sweep on the symmetric Gram matrix; the largest
    /// eigenvalue's square root is the SVD oracle for sigma_max.
    fn svd_sigma_max_oracle(a: &Matrix) -> f64 {
        let g = if a.rows() <= a.cols() {
            matmul_nt(a, a).unwrap()
        } else {
            matmul_tn(a, a).unwrap()
        };
        let n = g.rows();
        let mut m: Vec<Vec<f64>> = (0..n).map(|i| g.row(i).to_vec()).collect();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[p][q] * m[p][q];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if m[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mpk = m[p][k];
                        let mqk = m[q][k];
                        m[p][k] = c * mpk - s * mqk;
                        m[q][k] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let mkp = m[k][p];
                        let mkq = m[k][q];
                        m[k][p] = c * mkp - s * mkq;
                        m[k][q] = s * mkp + c * mkq;
                    }
                }
            }
        }
        (0..n).map(|i| m[i][i]).fold(0.0f64, f64::max).max(0.0).sqrt()
    }

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let c = matmul(&Matrix::identity(2), &a).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn matmul_hand_case() {
        // [[1,2],[3,4]] x [[0,1],[1,0]] = [[2,1],[4,3]], checked against the oracle
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        let expect = Matrix::from_rows(&[vec![2.0, 1.0], vec![4.0, 3.0]]).unwrap();
        assert_eq!(c, expect);
        assert_eq!(c, matmul_oracle(&a, &b));
    }

    #[test]
    fn matmul_annihilator() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let z = Matrix::zeros(2, 3);
        let c = matmul(&a, &z).unwrap();
        assert!(c.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matmul_matches_oracle_random() {
        let mut rng = SeededRng::new(5);
        for _ in 0..20 {
            let (m, k, n) = (
                1 + rng.below(6),
                1 + rng.below(6),
                1 + rng.below(6),
            );
            let a = Matrix::gaussian(&mut rng, m, k, 1.0);
            let b = Matrix::gaussian(&mut rng, k, n, 1.0);
            let c = matmul(&a, &b).unwrap();
            assert!(c.max_abs_diff(&matmul_oracle(&a, &b)) < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "{msg}");
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = SeededRng::new(9);
        let a = Matrix::gaussian(&mut rng, 4, 6, 1.0);
        let b = Matrix::gaussian(&mut rng, 5, 6, 1.0);
        let via_nt = matmul_nt(&a, &b).unwrap();
        let via_plain = matmul(&a, &b.transpose()).unwrap();
        assert!(via_nt.max_abs_diff(&via_plain) < 1e-12);

        let c = Matrix::gaussian(&mut rng, 6, 3, 1.0);
        let d = Matrix::gaussian(&mut rng, 6, 4, 1.0);
        let via_tn = matmul_tn(&c, &d).unwrap();
        let via_plain = matmul(&c.transpose(), &d).unwrap();
        assert!(via_tn.max_abs_diff(&via_plain) < 1e-12);
    }

    #[test]
    fn matmul_associative() {
        let mut rng = SeededRng::new(17);
        for _ in 0..10 {
            let a = Matrix::gaussian(&mut rng, 5, 4, 1.0);
            let b = Matrix::gaussian(&mut rng, 4, 6, 1.0);
            let c = Matrix::gaussian(&mut rng, 6, 3, 1.0);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = frobenius(&left).max(1.0);
            assert!(left.max_abs_diff(&right) / scale < 1e-9);
        }
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius(&Matrix::zeros(3, 4)), 0.0);
        assert!((frobenius(&Matrix::identity(3)) - 3.0f64.sqrt()).abs() < 1e-15);
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert!((frobenius(&m) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn sigma_max_diagonal() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = sigma_max(&m, SIGMA_MAX_ITERS, SIGMA_MAX_TOL).unwrap();
        assert!((s - 3.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn sigma_max_orthonormal_rows_is_one() {
        // rows (1,0,0)/1 and (0,3/5,4/5): orthonormal
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]]).unwrap();
        let s = sigma_max(&m, SIGMA_MAX_ITERS, SIGMA_MAX_TOL).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn sigma_max_zero_matrix() {
        let s = sigma_max(&Matrix::zeros(3, 2), SIGMA_MAX_ITERS, SIGMA_MAX_TOL).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn sigma_max_matches_jacobi_oracle() {
        let mut rng = SeededRng::new(23);
        for _ in 0..20 {
            let a = Matrix::gaussian(&mut rng, 5, 3, 1.0);
            let got = sigma_max(&a, 500, 1e-14).unwrap();
            let want = svd_sigma_max_oracle(&a);
            assert!((got - want).abs() < 1e-8, "got {got}, want {want}");
        }
    }

    #[test]
    fn sigma_max_transpose_symmetry() {
        let mut rng = SeededRng::new(29);
        for _ in 0..10 {
            let a = Matrix::gaussian(&mut rng, 4, 7, 1.0);
            let s1 = sigma_max(&a, 500, 1e-12).unwrap();
            let s2 = sigma_max(&a.transpose(), 500, 1e-12).unwrap();
            assert!((s1 - s2).abs() < 1e-8);
        }
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Vector::from_vec(vec![f64::INFINITY]).is_err());
    }
}
