//! Small dense helpers over row-major `Vec<f64>` square matrices, backed by nalgebra.

use alloc::vec::Vec;

use nalgebra::DMatrix;

pub(crate) fn to_matrix(n: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, data)
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of an `n × n` matrix, ascending.
pub fn symmetric_eigenvalues(n: usize, data: &[f64]) -> Vec<f64> {
    let m = symmetrize(&to_matrix(n, data));
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Clips the eigenvalues of the symmetric part at zero and rebuilds the matrix.
/// Returns the matrix and how many eigenvalues were clipped.
pub fn clip_psd(n: usize, data: &[f64]) -> (Vec<f64>, usize) {
    let (m, clipped) = spectral_map(n, data, |l| l.max(0.0));
    (m, clipped)
}

/// Principal square root of the PSD-clipped symmetric part.
pub fn psd_sqrt(n: usize, data: &[f64]) -> Vec<f64> {
    spectral_map(n, data, |l| libm::sqrt(l.max(0.0))).0
}

fn spectral_map(n: usize, data: &[f64], f: impl Fn(f64) -> f64) -> (Vec<f64>, usize) {
    let m = symmetrize(&to_matrix(n, data));
    let eig = m.symmetric_eigen();
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let mapped = eig.eigenvalues.map(&f);
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&mapped) * q.transpose();
    (from_matrix(&out), clipped)
}

/// Lower Cholesky factor, `None` when the matrix is not positive definite.
pub fn cholesky(n: usize, data: &[f64]) -> Option<Vec<f64>> {
    to_matrix(n, data).cholesky().map(|c| from_matrix(&c.l()))
}

pub fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    from_matrix(&(to_matrix(n, a) * to_matrix(n, b)))
}

pub fn trace(n: usize, a: &[f64]) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

pub fn frobenius(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|v| v * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let r = psd_sqrt(2, &a);
        let back = matmul(2, &r, &r);
        for (x, y) in back.iter().zip(&a) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_counts_negative_modes() {
        let (m, k) = clip_psd(2, &[1.0, 0.0, 0.0, -2.0]);
        assert_eq!(k, 1);
        assert!((m[3]).abs() < 1e-15);
        assert_eq!(symmetric_eigenvalues(2, &[2.0, 0.0, 0.0, -1.0]), alloc::vec![-1.0, 2.0]);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(2, &[1.0, 2.0, 2.0, 1.0]).is_none());
        let l = cholesky(2, &[4.0, 0.0, 0.0, 0.25]).unwrap();
        assert_eq!(l, alloc::vec![2.0, 0.0, 0.0, 0.5]);
    }
}
