//! Dense complex linear algebra shared by every other module.
//!
//! Bipartite operators live on `H_in ⊗ H_out` with the input factor first, so
//! row/column index `i * d + k` pairs input basis state `i` with output basis
//! state `k`. `vec` stacks columns, which is exactly nalgebra's storage order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Smallest eigenvalue accepted as positive definite by [`psd_sqrt_inv`].
pub const TOL_PD: f64 = 1e-12;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| c64(v, 0.0)),
    ))
}

/// Column-stacking vectorisation.
pub fn vec(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`].
pub fn vec_inv(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::dimension(format!(
            "vector of length {} cannot be reshaped to {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn check_bipartite(c: &CMatrix, d: usize) -> Result<()> {
    if d == 0 || c.nrows() != d * d || c.ncols() != d * d {
        return Err(Error::dimension(format!(
            "expected a {0}x{0} operator for d = {d}, got {1}x{2}",
            d * d,
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// Trace over the output (second) factor of a `d² × d²` operator.
pub fn partial_trace_out(c: &CMatrix, d: usize) -> Result<CMatrix> {
    check_bipartite(c, d)?;
    Ok(CMatrix::from_fn(d, d, |i, j| {
        (0..d).map(|k| c[(i * d + k, j * d + k)]).sum()
    }))
}

/// Trace over the input (first) factor of a `d² × d²` operator.
pub fn partial_trace_in(c: &CMatrix, d: usize) -> Result<CMatrix> {
    check_bipartite(c, d)?;
    Ok(CMatrix::from_fn(d, d, |k, l| {
        (0..d).map(|i| c[(i * d + k, i * d + l)]).sum()
    }))
}

/// `(X + X†) / 2`.
pub fn hermitize(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()).scale(0.5)
}

/// `max |X − X†|` over entries.
pub fn hermiticity_defect(x: &CMatrix) -> f64 {
    if !x.is_square() {
        return f64::INFINITY;
    }
    let n = x.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `Re Tr(A† B)`, the real Frobenius inner product.
pub fn frobenius_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.norm()
}

/// Spectral decomposition `X = V diag(λ) V†` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
}

impl EigenDecomposition {
    /// `V f(D) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        &scaled * self.eigenvectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Hermitian eigendecomposition. The input is symmetrised first.
pub fn eigh(x: &CMatrix) -> Result<EigenDecomposition> {
    if !x.is_square() || x.nrows() == 0 {
        return Err(Error::dimension(format!(
            "eigh needs a non-empty square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let eig = SymmetricEigen::new(hermitize(x));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues =
        DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let eigenvectors = CMatrix::from_fn(x.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest eigenvalue of the Hermitian part of `x`.
pub fn min_eigenvalue(x: &CMatrix) -> Result<f64> {
    Ok(eigh(x)?.min())
}

/// Sum of singular values.
pub fn trace_norm(x: &CMatrix) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.clone().svd(false, false).singular_values.sum()
}

/// `X^{1/2}` for Hermitian positive semidefinite `X`; tiny negative
/// eigenvalues from rounding are treated as zero.
pub fn psd_sqrt(x: &CMatrix) -> Result<CMatrix> {
    Ok(eigh(x)?.map(|l| l.max(0.0).sqrt()))
}

/// `(X^{1/2})^{-1}` for Hermitian positive definite `X`.
pub fn psd_sqrt_inv(x: &CMatrix) -> Result<CMatrix> {
    let eig = eigh(x)?;
    if eig.min() <= TOL_PD {
        return Err(Error::SingularMatrix {
            min_eigenvalue: eig.min(),
        });
    }
    Ok(eig.map(|l| 1.0 / l.sqrt()))
}
