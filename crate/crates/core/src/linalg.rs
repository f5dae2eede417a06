//! Dense symmetric linear algebra on top of `faer`.

use faer::{Mat, Side};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

/// Short hex fingerprint of a matrix, used in error messages and CSV headers.
pub fn fingerprint(m: &Mat<f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            h.update(m[(i, j)].to_le_bytes());
        }
    }
    hex_prefix(&h.finalize(), 12)
}

/// Short hex fingerprint of an index set.
pub fn index_fingerprint(idx: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in idx {
        h.update((i as u64).to_le_bytes());
    }
    hex_prefix(&h.finalize(), 12)
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<String>()[..n].to_string()
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors as
/// the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl SymmetricEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V f(Lambda) V^T`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Mat<f64> {
        let n = self.dim();
        let fv: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let scaled = Mat::from_fn(n, n, |i, k| self.vectors[(i, k)] * fv[k]);
        let mut out = &scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }
}

pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetric_eigen(m: &Mat<f64>) -> Result<SymmetricEigen> {
    let n = m.nrows();
    if n == 0 {
        return Ok(SymmetricEigen { values: Vec::new(), vectors: Mat::zeros(0, 0) });
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| {
        LabError::Numeric(format!(
            "eigensolver failed ({e:?}) on {n}x{n} matrix {}",
            fingerprint(m)
        ))
    })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&k| s[k]).collect();
    let vectors = Mat::from_fn(n, n, |i, k| u[(i, order[k])]);
    Ok(SymmetricEigen { values, vectors })
}

pub fn symmetric_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut v = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| {
        LabError::Numeric(format!(
            "eigensolver failed ({e:?}) on {n}x{n} matrix {}",
            fingerprint(m)
        ))
    })?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Principal submatrix on `keep` (in the given order).
pub fn principal_submatrix(m: &Mat<f64>, keep: &[usize]) -> Mat<f64> {
    Mat::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])])
}

pub fn one_norm(m: &Mat<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn trace(m: &Mat<f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `exp(-t A)` by scaling and squaring of a truncated Taylor series.
///
/// Deliberately independent of any eigendecomposition; used to cross-check
/// spectral traces.
pub fn expm_neg(a: &Mat<f64>, t: f64) -> Mat<f64> {
    let n = a.nrows();
    let norm = t * one_norm(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = -t / 2f64.powi(squarings as i32);
    let x = Mat::from_fn(n, n, |i, j| scale * a[(i, j)]);
    let mut result = Mat::<f64>::identity(n, n);
    let mut term = Mat::<f64>::identity(n, n);
    for k in 1..=20 {
        let next = &term * &x;
        term = Mat::from_fn(n, n, |i, j| next[(i, j)] / k as f64);
        result = &result + &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    #[test]
    fn two_by_two_spectrum() {
        let h = mat(&[&[2.0, -1.0], &[-1.0, 2.0]]);
        let e = symmetric_eigen(&h).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        let back = e.apply_fn(|x| x);
        for i in 0..2 {
            for j in 0..2 {
                assert!((back[(i, j)] - h[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn expm_matches_closed_form() {
        let h = mat(&[&[2.0, -1.0], &[-1.0, 2.0]]);
        let e = expm_neg(&h, 1.0);
        let tr = trace(&e);
        let want = (-1f64).exp() + (-3f64).exp();
        assert!((tr - want).abs() < 1e-13, "{tr} vs {want}");
        // large norm exercises the squaring phase
        let e = expm_neg(&h, 40.0);
        assert!((trace(&e) - (-40f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn empty_matrix() {
        let z = Mat::<f64>::zeros(0, 0);
        assert!(symmetric_eigen(&z).unwrap().values.is_empty());
        assert!(symmetric_eigenvalues(&z).unwrap().is_empty());
    }

    #[test]
    fn fingerprints_differ() {
        let a = mat(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = mat(&[&[1.0, 0.0], &[0.0, 2.0]]);
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 12);
    }
}
