//! Frobenius-orthogonal projections of Choi matrices onto the CP cone, the
//! trace-preserving affine set and its relaxations, and onto their
//! intersection.
//!
//! The single-set projections are closed forms. The composite CPTP projection
//! is Dykstra's alternating projection scheme with the Birgin–Raydan stopping
//! quantity; plain averaged projections are kept for comparison.

use num_complex::Complex64;

use crate::channel::ChoiMatrix;
use crate::error::{Error, IterationFailure, Result};
use crate::tensor::{self, CMatrix, CVector};

/// Closest positive semidefinite matrix: negative eigenvalues are clipped.
pub fn project_cp(c: &ChoiMatrix) -> ChoiMatrix {
    ChoiMatrix::from_hermitian(c.d(), project_psd(c.matrix()))
}

/// Closest positive semidefinite matrix to the Hermitian part of `m`.
pub fn project_psd(m: &CMatrix) -> CMatrix {
    tensor::eigh(m)
        .expect("Choi matrices are square")
        .map(|l| l.max(0.0))
}

/// `C − (1/d)(Tr_out C − target) ⊗ I`.
fn shift_partial_trace(c: &CMatrix, d: usize, target: &CMatrix) -> CMatrix {
    let y = tensor::partial_trace_out(c, d).expect("Choi matrices are d² x d²");
    let correction = tensor::kron(&(y - target), &tensor::identity(d));
    c - correction.unscale(d as f64)
}

/// Closest matrix with `Tr_out C = I`.
pub fn project_tp(c: &ChoiMatrix) -> ChoiMatrix {
    let d = c.d();
    ChoiMatrix::from_hermitian(d, shift_partial_trace(c.matrix(), d, &tensor::identity(d)))
}

/// Closest matrix with `Tr_out C = p·I` (uniform success probability `p`).
pub fn project_us_p(c: &ChoiMatrix, p_success: f64) -> Result<ChoiMatrix> {
    if !(p_success > 0.0 && p_success <= 1.0) {
        return Err(Error::domain(format!(
            "success probability must lie in (0, 1], got {p_success}"
        )));
    }
    let d = c.d();
    let target = tensor::identity(d).scale(p_success);
    Ok(ChoiMatrix::from_hermitian(
        d,
        shift_partial_trace(c.matrix(), d, &target),
    ))
}

/// Closest matrix with `Tr_out C ⪯ I` (trace non-increasing): the partial
/// trace's eigenvalues above one are lowered to one.
pub fn project_tni(c: &ChoiMatrix) -> ChoiMatrix {
    let d = c.d();
    let y = c.partial_trace_out();
    let clipped = tensor::eigh(&y).expect("square").map(|l| l.min(1.0));
    let shift = tensor::kron(&(clipped - y), &tensor::identity(d)).unscale(d as f64);
    ChoiMatrix::from_hermitian(d, c.matrix() + shift)
}

/// Sparse form of `M = Σ_k I ⊗ ⟨k| ⊗ I ⊗ ⟨k|`, the linear map with
/// `M vec(C) = vec(Tr_out C)` under column stacking.
#[derive(Debug, Clone)]
pub struct MOperator {
    d: usize,
    /// For each output entry of `vec(Tr_out C)`, the `d` entries of `vec(C)`
    /// that sum into it.
    support: Vec<Vec<usize>>,
}

impl MOperator {
    pub fn new(d: usize) -> Self {
        let n = d * d;
        let mut support = vec![Vec::with_capacity(d); n];
        for j in 0..d {
            for i in 0..d {
                let row = i + j * d;
                for k in 0..d {
                    support[row].push((i * d + k) + (j * d + k) * n);
                }
            }
        }
        Self { d, support }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `M v`, a vector of length `d²`.
    pub fn apply(&self, v: &CVector) -> CVector {
        CVector::from_iterator(
            self.support.len(),
            self.support
                .iter()
                .map(|cols| cols.iter().map(|&c| v[c]).sum()),
        )
    }

    /// `M† w`, a vector of length `d⁴`.
    pub fn adjoint_apply(&self, w: &CVector) -> CVector {
        let mut out = CVector::zeros(self.d.pow(4));
        for (row, cols) in self.support.iter().enumerate() {
            for &c in cols {
                out[c] += w[row];
            }
        }
        out
    }

    /// Dense `d² × d⁴` matrix.
    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.d * self.d, self.d.pow(4));
        for (row, cols) in self.support.iter().enumerate() {
            for &c in cols {
                m[(row, c)] = Complex64::new(1.0, 0.0);
            }
        }
        m
    }

    /// TP projection in its vectorised form
    /// `vec⁻¹[vec C − (1/d) M†M vec C + (1/d) M† vec I]`.
    pub fn project_tp(&self, c: &ChoiMatrix) -> ChoiMatrix {
        let d = self.d;
        let v = tensor::vec(c.matrix());
        let mtm = self.adjoint_apply(&self.apply(&v));
        let offset = self.adjoint_apply(&tensor::vec(&tensor::identity(d)));
        let out = v - (mtm - offset).unscale(d as f64);
        let n = d * d;
        ChoiMatrix::from_hermitian(d, CMatrix::from_column_slice(n, n, out.as_slice()))
    }
}

/// Partial-trace constraint paired with the CP cone in the composite
/// projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceConstraint {
    /// `Tr_out C = I`.
    Preserving,
    /// `Tr_out C = p·I`.
    UniformSuccess(f64),
    /// `Tr_out C ⪯ I`.
    NonIncreasing,
}

impl TraceConstraint {
    fn validate(self) -> Result<()> {
        match self {
            TraceConstraint::UniformSuccess(p) if !(p > 0.0 && p <= 1.0) => Err(Error::domain(
                format!("success probability must lie in (0, 1], got {p}"),
            )),
            _ => Ok(()),
        }
    }

    fn project(self, c: &CMatrix, d: usize) -> CMatrix {
        match self {
            TraceConstraint::Preserving => shift_partial_trace(c, d, &tensor::identity(d)),
            TraceConstraint::UniformSuccess(p) => {
                shift_partial_trace(c, d, &tensor::identity(d).scale(p))
            }
            TraceConstraint::NonIncreasing => {
                let wrapped = ChoiMatrix::from_hermitian(d, c.clone());
                project_tni(&wrapped).into_matrix()
            }
        }
    }

    /// Distance-like violation of the constraint by `c`.
    pub fn residual(self, c: &CMatrix, d: usize) -> f64 {
        let y = tensor::partial_trace_out(c, d).expect("Choi matrices are d² x d²");
        match self {
            TraceConstraint::Preserving => (y - tensor::identity(d)).norm(),
            TraceConstraint::UniformSuccess(p) => (y - tensor::identity(d).scale(p)).norm(),
            TraceConstraint::NonIncreasing => {
                (tensor::eigh(&y).expect("square").max() - 1.0).max(0.0)
            }
        }
    }
}

/// Stopping rule for the composite projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Threshold on the Birgin–Raydan quantity (Dykstra) or on the step
    /// length `‖H_{l+1} − H_l‖_F` (averaged projections).
    pub tol: f64,
    /// The returned CP iterate must also violate the trace constraint by at
    /// most this much.
    pub feasibility_tol: f64,
    pub max_iterations: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            feasibility_tol: 1e-10,
            max_iterations: 20_000,
        }
    }
}

impl ProjectionConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.feasibility_tol > 0.0) {
            return Err(Error::domain("projection tolerances must be positive"));
        }
        Ok(())
    }
}

/// Iterates of Dykstra's scheme: `y` is the last trace-constraint projection,
/// `x` the last CP projection, `p` and `q` their correction terms.
#[derive(Debug, Clone)]
pub struct DykstraState {
    pub x: CMatrix,
    pub y: CMatrix,
    pub p: CMatrix,
    pub q: CMatrix,
    pub iteration: usize,
}

impl DykstraState {
    pub fn new(c: &CMatrix) -> Self {
        let zero = CMatrix::zeros(c.nrows(), c.ncols());
        Self {
            x: c.clone(),
            y: zero.clone(),
            p: zero.clone(),
            q: zero,
            iteration: 0,
        }
    }
}

/// Result of a composite projection with its iteration count and final
/// stopping quantity.
#[derive(Debug, Clone)]
pub struct Projection {
    pub choi: ChoiMatrix,
    pub iterations: usize,
    pub criterion: f64,
}

fn inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sq(m: &CMatrix) -> f64 {
    m.norm_squared()
}

/// Dykstra's alternating projections onto `CP ∩ constraint`, trace
/// constraint first and CP last, returning the CP iterate.
pub fn dykstra(
    c: &ChoiMatrix,
    constraint: TraceConstraint,
    config: &ProjectionConfig,
) -> Result<Projection> {
    config.validate()?;
    constraint.validate()?;
    let d = c.d();
    let mut s = DykstraState::new(c.matrix());
    let mut criterion = f64::INFINITY;
    while s.iteration < config.max_iterations {
        let y = constraint.project(&(&s.x + &s.p), d);
        let p = &s.x + &s.p - &y;
        let x = project_psd(&(&y + &s.q));
        let q = &y + &s.q - &x;

        // The y-term needs the previous y, so nothing is tested on the first pass.
        if s.iteration >= 1 {
            criterion = norm_sq(&(&p - &s.p))
                + norm_sq(&(&q - &s.q))
                + 2.0 * inner(&s.p, &(&x - &s.x)).norm()
                + 2.0 * inner(&s.q, &(&y - &s.y)).norm();
        }
        s = DykstraState {
            x,
            y,
            p,
            q,
            iteration: s.iteration + 1,
        };
        if criterion <= config.tol && constraint.residual(&s.x, d) <= config.feasibility_tol {
            return Ok(Projection {
                choi: ChoiMatrix::from_hermitian(d, s.x),
                iterations: s.iteration,
                criterion,
            });
        }
    }
    Err(Error::Convergence(Box::new(IterationFailure {
        iterations: s.iteration,
        residual: criterion,
        last_iterate: tensor::hermitize(&s.x),
        report: None,
    })))
}

/// Closest CPTP matrix to `c`.
pub fn project_cptp_dykstra(c: &ChoiMatrix, config: &ProjectionConfig) -> Result<ChoiMatrix> {
    Ok(dykstra(c, TraceConstraint::Preserving, config)?.choi)
}

/// Closest CP, trace non-increasing matrix to `c`.
pub fn project_cptni_dykstra(c: &ChoiMatrix, config: &ProjectionConfig) -> Result<ChoiMatrix> {
    Ok(dykstra(c, TraceConstraint::NonIncreasing, config)?.choi)
}

/// Averaged projections `H ← (TP(H) + CP(H)) / 2`. Converges to some point of
/// CPTP, generally not the closest one.
pub fn project_cptp_averaged(c: &ChoiMatrix, config: &ProjectionConfig) -> Result<Projection> {
    config.validate()?;
    let d = c.d();
    let mut h = c.matrix().clone();
    let mut step = f64::INFINITY;
    for l in 0..config.max_iterations {
        let tp = TraceConstraint::Preserving.project(&h, d);
        let cp = project_psd(&h);
        let next = (tp + cp).scale(0.5);
        step = (&next - &h).norm();
        h = next;
        if step <= config.tol {
            let feasible = TraceConstraint::Preserving.residual(&h, d) <= config.feasibility_tol
                && tensor::min_eigenvalue(&h)? >= -config.feasibility_tol;
            if feasible {
                return Ok(Projection {
                    choi: ChoiMatrix::from_hermitian(d, h),
                    iterations: l + 1,
                    criterion: step,
                });
            }
        }
    }
    Err(Error::Convergence(Box::new(IterationFailure {
        iterations: config.max_iterations,
        residual: step,
        last_iterate: h,
        report: None,
    })))
}
