//! Choi-matrix channels, tomography setups and the multinomial likelihood.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Dyn, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, c64, CMatrix, CVector};

/// Tolerance on the minimum eigenvalue for a Choi matrix to count as CP.
pub const EPS_CP: f64 = 1e-8;
/// Tolerance on `‖Tr_out C − I‖_F` for a Choi matrix to count as TP.
pub const EPS_TP: f64 = 1e-6;
/// Default floor applied to model probabilities inside cost and gradient.
pub const DEFAULT_EPS_COND: f64 = 1e-16;

const HERMITIAN_TOL: f64 = 1e-10;

/// Choi matrix `C = Σ_ij |i⟩⟨j| ⊗ ℰ(|i⟩⟨j|)` of a map on `d`-dimensional states.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    d: usize,
    matrix: CMatrix,
}

impl ChoiMatrix {
    /// Wraps a `d² × d²` matrix, rejecting anything further than `1e-10` from
    /// Hermitian. The stored matrix is exactly Hermitian.
    pub fn new(d: usize, matrix: CMatrix) -> Result<Self> {
        if d == 0 || matrix.nrows() != d * d || matrix.ncols() != d * d {
            return Err(Error::dimension(format!(
                "Choi matrix for d = {d} must be {0}x{0}, got {1}x{2}",
                d * d,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = tensor::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::domain(format!(
                "Choi matrix is not Hermitian (max |C - C†| = {defect:e})"
            )));
        }
        Ok(Self::from_hermitian(d, matrix))
    }

    /// Symmetrises without checking; for internal use on matrices that are
    /// Hermitian up to rounding.
    pub(crate) fn from_hermitian(d: usize, matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), d * d);
        Self {
            d,
            matrix: tensor::hermitize(&matrix),
        }
    }

    /// Infers `d` from the matrix size.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let n = matrix.nrows();
        let d = (n as f64).sqrt().round() as usize;
        Self::new(d, matrix)
    }

    /// `I/d`, the completely depolarising channel.
    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            d,
            matrix: tensor::identity(d * d).unscale(d as f64),
        }
    }

    pub fn identity_channel(d: usize) -> Self {
        Self::from_kraus(&[tensor::identity(d)]).expect("identity Kraus operator is square")
    }

    /// `C = Σ_k vec(K_k) vec(K_k)†`, equivalent to the defining sum over
    /// `|i⟩⟨j| ⊗ Σ_k K_k|i⟩⟨j|K_k†` under column stacking.
    pub fn from_kraus(kraus: &[CMatrix]) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::dimension("empty Kraus list"))?;
        let d = first.nrows();
        if d == 0 {
            return Err(Error::dimension("zero-dimensional Kraus operator"));
        }
        let mut c = CMatrix::zeros(d * d, d * d);
        for k in kraus {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::dimension(format!(
                    "Kraus operators must all be {d}x{d}, got {}x{}",
                    k.nrows(),
                    k.ncols()
                )));
            }
            let v = tensor::vec(k);
            c.ger(
                Complex64::new(1.0, 0.0),
                &v,
                &v.conjugate(),
                Complex64::new(1.0, 0.0),
            );
        }
        Ok(Self { d, matrix: c })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn partial_trace_out(&self) -> CMatrix {
        tensor::partial_trace_out(&self.matrix, self.d).expect("shape checked at construction")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        tensor::min_eigenvalue(&self.matrix).expect("shape checked at construction")
    }

    /// `‖Tr_out C − I‖_F`.
    pub fn tp_residual(&self) -> f64 {
        (self.partial_trace_out() - tensor::identity(self.d)).norm()
    }

    /// Within `eps_cp` of CP and `eps_tp` of TP.
    pub fn is_cptp_within(&self, eps_cp: f64, eps_tp: f64) -> bool {
        self.min_eigenvalue() >= -eps_cp && self.tp_residual() <= eps_tp
    }

    pub fn is_cptp(&self) -> bool {
        self.is_cptp_within(EPS_CP, EPS_TP)
    }

    /// `Tr[C²] / d²`, equal to one for unitary channels.
    pub fn purity(&self) -> f64 {
        let n = self.matrix.norm();
        n * n / (self.d * self.d) as f64
    }
}

/// `ℰ(ρ) = Tr_in[(ρᵀ ⊗ I) C]`.
pub fn apply_channel(choi: &ChoiMatrix, rho: &CMatrix) -> Result<CMatrix> {
    let d = choi.d;
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::dimension(format!(
            "state must be {d}x{d}, got {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let c = &choi.matrix;
    let mut out = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let w = rho[(i, j)];
            if w == c64(0.0, 0.0) {
                continue;
            }
            out += c.view((i * d, j * d), (d, d)) * w;
        }
    }
    Ok(out)
}

/// Preparation states `ρ_i` and POVM elements `E_j` of a tomography experiment.
#[derive(Debug, Clone)]
pub struct TomographySetup {
    d: usize,
    preparations: Vec<CMatrix>,
    povm: Vec<CMatrix>,
    design: OnceLock<DesignMatrix>,
}

const SETUP_TOL: f64 = 1e-10;

impl TomographySetup {
    /// Validates that every `ρ_i` is a density matrix and the `E_j` form a
    /// POVM, all within `1e-10`.
    pub fn new(d: usize, preparations: Vec<CMatrix>, povm: Vec<CMatrix>) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        if preparations.is_empty() || povm.is_empty() {
            return Err(Error::domain(
                "setup needs at least one preparation and one POVM element",
            ));
        }
        for (what, list) in [("preparation", &preparations), ("POVM element", &povm)] {
            for (k, m) in list.iter().enumerate() {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::dimension(format!(
                        "{what} {k} must be {d}x{d}, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                if tensor::hermiticity_defect(m) > SETUP_TOL {
                    return Err(Error::domain(format!("{what} {k} is not Hermitian")));
                }
                let min = tensor::min_eigenvalue(m)?;
                if min < -SETUP_TOL {
                    return Err(Error::domain(format!(
                        "{what} {k} is not positive semidefinite (min eigenvalue {min:e})"
                    )));
                }
            }
        }
        for (k, rho) in preparations.iter().enumerate() {
            let tr = rho.trace();
            if (tr - c64(1.0, 0.0)).norm() > SETUP_TOL {
                return Err(Error::domain(format!("preparation {k} has trace {tr}")));
            }
        }
        let total: CMatrix = povm.iter().fold(CMatrix::zeros(d, d), |acc, e| acc + e);
        let defect = (total - tensor::identity(d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > SETUP_TOL {
            return Err(Error::domain(format!(
                "POVM elements do not sum to the identity (max deviation {defect:e})"
            )));
        }
        Ok(Self {
            d,
            preparations,
            povm,
            design: OnceLock::new(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn preparations(&self) -> &[CMatrix] {
        &self.preparations
    }

    pub fn povm(&self) -> &[CMatrix] {
        &self.povm
    }

    pub fn n_prep(&self) -> usize {
        self.preparations.len()
    }

    pub fn n_povm(&self) -> usize {
        self.povm.len()
    }

    /// Design matrix, built on first use.
    pub fn design(&self) -> &DesignMatrix {
        self.design.get_or_init(|| build_design(self))
    }

    fn check_choi(&self, choi: &ChoiMatrix) -> Result<()> {
        if choi.d != self.d {
            return Err(Error::dimension(format!(
                "Choi matrix has d = {} but the setup has d = {}",
                choi.d, self.d
            )));
        }
        Ok(())
    }
}

/// Linear map `vec(C) ↦ p` with rows ordered `(i, j)`, preparation-major.
///
/// Row `(i, j)` is `vec(ρ_iᵀ ⊗ E_j)†`, so `A vec(C) = Tr[(ρ_iᵀ ⊗ E_j) C]`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    d: usize,
    matrix: CMatrix,
    svd: OnceLock<SVD<Complex64, Dyn, Dyn>>,
}

/// Builds the design matrix row by row.
pub fn build_design(setup: &TomographySetup) -> DesignMatrix {
    let d = setup.d;
    let rows = setup.n_prep() * setup.n_povm();
    let cols = d.pow(4);
    let mut matrix = CMatrix::zeros(rows, cols);
    for (i, rho) in setup.preparations.iter().enumerate() {
        let rho_t = rho.transpose();
        for (j, e) in setup.povm.iter().enumerate() {
            let op = tensor::kron(&rho_t, e);
            let r = i * setup.n_povm() + j;
            for (k, z) in op.iter().enumerate() {
                matrix[(r, k)] = z.conj();
            }
        }
    }
    DesignMatrix {
        d,
        matrix,
        svd: OnceLock::new(),
    }
}

impl DesignMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `A vec(C)` as complex numbers.
    pub fn apply(&self, c: &CMatrix) -> CVector {
        &self.matrix * tensor::vec(c)
    }

    /// `vec⁻¹(A† w)` for real weights `w`.
    pub fn adjoint_apply(&self, weights: &[f64]) -> CMatrix {
        let w = CVector::from_iterator(weights.len(), weights.iter().map(|&x| c64(x, 0.0)));
        let v = self.matrix.ad_mul(&w);
        let n = self.d * self.d;
        CMatrix::from_column_slice(n, n, v.as_slice())
    }

    fn svd(&self) -> &SVD<Complex64, Dyn, Dyn> {
        self.svd
            .get_or_init(|| SVD::new(self.matrix.clone(), true, true))
    }

    fn rank_tolerance(&self) -> f64 {
        let sv = &self.svd().singular_values;
        let max = sv.iter().copied().fold(0.0, f64::max);
        max * self.matrix.nrows().max(self.matrix.ncols()) as f64 * f64::EPSILON
    }

    pub fn singular_values(&self) -> DVector<f64> {
        let mut sv: Vec<f64> = self.svd().singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        DVector::from_vec(sv)
    }

    /// Numerical rank of `A`.
    pub fn rank(&self) -> usize {
        let tol = self.rank_tolerance();
        self.svd()
            .singular_values
            .iter()
            .filter(|&&s| s > tol)
            .count()
    }

    /// Largest over smallest non-negligible singular value.
    pub fn condition_number(&self) -> f64 {
        let tol = self.rank_tolerance();
        let kept: Vec<f64> = self
            .svd()
            .singular_values
            .iter()
            .copied()
            .filter(|&s| s > tol)
            .collect();
        let max = kept.iter().copied().fold(0.0, f64::max);
        let min = kept.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Minimum-norm least-squares solution of `A x = b` through the SVD of `A`.
    pub fn solve_least_squares(&self, b: &[f64]) -> Result<CVector> {
        if b.len() != self.matrix.nrows() {
            return Err(Error::dimension(format!(
                "right-hand side has length {}, design matrix has {} rows",
                b.len(),
                self.matrix.nrows()
            )));
        }
        let rhs = CVector::from_iterator(b.len(), b.iter().map(|&x| c64(x, 0.0)));
        self.svd()
            .solve(&rhs, self.rank_tolerance())
            .map_err(|e| Error::dimension(e.to_string()))
    }
}

/// Normalised frequencies `n_ij`, with `Σ_j n_ij = 1` for each preparation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsTable {
    freqs: DMatrix<f64>,
    raw_totals: Option<Vec<u64>>,
}

impl CountsTable {
    /// Normalises each row of non-negative weights to unit sum.
    pub fn from_frequencies(weights: DMatrix<f64>) -> Result<Self> {
        let mut freqs = weights;
        for (i, mut row) in freqs.row_iter_mut().enumerate() {
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::domain(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.sum();
            if s <= 0.0 {
                return Err(Error::domain(format!("row {i} has zero total")));
            }
            row /= s;
        }
        Ok(Self {
            freqs,
            raw_totals: None,
        })
    }

    /// Normalises raw outcome counts, remembering the per-preparation totals.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let n_prep = counts.len();
        let n_povm = counts.first().map_or(0, Vec::len);
        if n_prep == 0 || n_povm == 0 || counts.iter().any(|r| r.len() != n_povm) {
            return Err(Error::dimension(
                "counts must form a non-empty rectangular table",
            ));
        }
        let weights = DMatrix::from_fn(n_prep, n_povm, |i, j| counts[i][j] as f64);
        let mut table = Self::from_frequencies(weights)?;
        table.raw_totals = Some(counts.iter().map(|r| r.iter().sum()).collect());
        Ok(table)
    }

    pub fn n_prep(&self) -> usize {
        self.freqs.nrows()
    }

    pub fn n_povm(&self) -> usize {
        self.freqs.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.freqs[(i, j)]
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.freqs
    }

    pub fn raw_totals(&self) -> Option<&[u64]> {
        self.raw_totals.as_deref()
    }

    /// Frequencies flattened in design-matrix row order.
    pub fn flat(&self) -> Vec<f64> {
        let (np, nm) = self.freqs.shape();
        let mut out = Vec::with_capacity(np * nm);
        for i in 0..np {
            for j in 0..nm {
                out.push(self.freqs[(i, j)]);
            }
        }
        out
    }

    pub(crate) fn check_setup(&self, setup: &TomographySetup) -> Result<()> {
        if self.n_prep() != setup.n_prep() || self.n_povm() != setup.n_povm() {
            return Err(Error::dimension(format!(
                "counts are {}x{} but the setup has {} preparations and {} POVM elements",
                self.n_prep(),
                self.n_povm(),
                setup.n_prep(),
                setup.n_povm()
            )));
        }
        Ok(())
    }
}

/// `p_ij = Tr[(ρ_iᵀ ⊗ E_j) C]` in design-matrix row order.
pub fn forward_probs(choi: &ChoiMatrix, setup: &TomographySetup) -> Result<Vec<f64>> {
    setup.check_choi(choi)?;
    Ok(probs_of(choi.matrix(), setup))
}

fn probs_of(c: &CMatrix, setup: &TomographySetup) -> Vec<f64> {
    setup.design().apply(c).iter().map(|z| z.re).collect()
}

/// Elementwise `max(p, eps)`; the flag reports whether any entry was raised.
pub fn condition_probs(p: &[f64], eps_cond: f64) -> (Vec<f64>, bool) {
    let mut heralded = false;
    let out = p
        .iter()
        .map(|&x| {
            if x < eps_cond || x.is_nan() {
                heralded = true;
                eps_cond
            } else {
                x
            }
        })
        .collect();
    (out, heralded)
}

/// Multinomial negative log-likelihood and its gradient for fixed data.
///
/// Probabilities are floored at `eps_cond` before use; every evaluation says
/// whether the floor was hit.
#[derive(Debug, Clone, Copy)]
pub struct Likelihood<'a> {
    setup: &'a TomographySetup,
    data: &'a [f64],
    eps_cond: f64,
}

/// A cost value together with the conditioning herald of its evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub value: f64,
    pub heralded: bool,
}

impl<'a> Likelihood<'a> {
    pub fn new(setup: &'a TomographySetup, counts: &'a CountsTableView, eps_cond: f64) -> Self {
        Self {
            setup,
            data: &counts.flat,
            eps_cond,
        }
    }

    pub fn setup(&self) -> &TomographySetup {
        self.setup
    }

    pub fn eps_cond(&self) -> f64 {
        self.eps_cond
    }

    pub fn cost(&self, c: &CMatrix) -> Cost {
        let (p, heralded) = condition_probs(&probs_of(c, self.setup), self.eps_cond);
        let value = -self
            .data
            .iter()
            .zip(&p)
            .filter(|(&n, _)| n != 0.0)
            .map(|(&n, &p)| n * p.ln())
            .sum::<f64>();
        Cost { value, heralded }
    }

    fn weights(&self, c: &CMatrix) -> (Vec<f64>, bool) {
        let (p, heralded) = condition_probs(&probs_of(c, self.setup), self.eps_cond);
        let eta = self.data.iter().zip(&p).map(|(&n, &p)| -n / p).collect();
        (eta, heralded)
    }

    /// `−A†η` with `η_ij = n_ij / p_ij`.
    pub fn gradient(&self, c: &CMatrix) -> (CMatrix, bool) {
        let (neg_eta, heralded) = self.weights(c);
        (
            tensor::hermitize(&self.setup.design().adjoint_apply(&neg_eta)),
            heralded,
        )
    }

    /// The same gradient as an explicit sum `−Σ_ij η_ij (ρ_iᵀ ⊗ E_j)`.
    pub fn gradient_elementwise(&self, c: &CMatrix) -> (CMatrix, bool) {
        let (neg_eta, heralded) = self.weights(c);
        let n = self.setup.d * self.setup.d;
        let n_povm = self.setup.n_povm();
        let mut g = CMatrix::zeros(n, n);
        for (i, rho) in self.setup.preparations.iter().enumerate() {
            let rho_t = rho.transpose();
            for (j, e) in self.setup.povm.iter().enumerate() {
                let w = neg_eta[i * n_povm + j];
                if w != 0.0 {
                    g += tensor::kron(&rho_t, e) * c64(w, 0.0);
                }
            }
        }
        (g, heralded)
    }
}

/// Counts flattened once so repeated likelihood evaluations avoid copying.
#[derive(Debug, Clone)]
pub struct CountsTableView {
    flat: Vec<f64>,
}

impl CountsTableView {
    pub fn new(counts: &CountsTable, setup: &TomographySetup) -> Result<Self> {
        counts.check_setup(setup)?;
        Ok(Self {
            flat: counts.flat(),
        })
    }
}

/// `f(C) = −Σ_ij n_ij ln p_ij` with the default conditioning floor.
pub fn neg_log_likelihood(
    choi: &ChoiMatrix,
    setup: &TomographySetup,
    counts: &CountsTable,
) -> Result<f64> {
    setup.check_choi(choi)?;
    let view = CountsTableView::new(counts, setup)?;
    Ok(Likelihood::new(setup, &view, DEFAULT_EPS_COND)
        .cost(choi.matrix())
        .value)
}

/// `∇f(C)` with the default conditioning floor.
pub fn gradient(
    choi: &ChoiMatrix,
    setup: &TomographySetup,
    counts: &CountsTable,
) -> Result<CMatrix> {
    setup.check_choi(choi)?;
    let view = CountsTableView::new(counts, setup)?;
    Ok(Likelihood::new(setup, &view, DEFAULT_EPS_COND)
        .gradient(choi.matrix())
        .0)
}
