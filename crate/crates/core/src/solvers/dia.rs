use super::{Method, SolverReport, SolverStatus};
use crate::channel::{
    ChoiMatrix, CountsTable, CountsTableView, Likelihood, TomographySetup, DEFAULT_EPS_COND,
};
use crate::error::{Error, Result};
use crate::tensor::{self, c64, CMatrix};

/// Stopping rule of the diluted iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiaConfig {
    pub f_tol: f64,
    pub max_outer_iterations: usize,
    /// Smallest dilution tried before the step is declared stalled.
    pub min_epsilon: f64,
    pub eps_cond: f64,
}

impl Default for DiaConfig {
    fn default() -> Self {
        Self {
            f_tol: 1e-10,
            max_outer_iterations: 20_000,
            min_epsilon: 1e-12,
            eps_cond: DEFAULT_EPS_COND,
        }
    }
}

const MAX_HALVINGS: usize = 40;

impl DiaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.f_tol > 0.0) || !(self.min_epsilon > 0.0) || !(self.eps_cond > 0.0) {
            return Err(Error::domain(
                "f_tol, min_epsilon and eps_cond must be positive",
            ));
        }
        Ok(())
    }
}

/// `(Λ⁻¹ R) C (R Λ⁻¹)` with `R = ε(−∇f) + (1 − ε)I` and
/// `Λ = (Tr_out[R C R])^{1/2} ⊗ I`. PSD by congruence and TP by construction.
fn diluted_step(c: &CMatrix, neg_grad: &CMatrix, eps: f64, d: usize) -> Result<CMatrix> {
    let n = d * d;
    let r = neg_grad * c64(eps, 0.0) + CMatrix::identity(n, n) * c64(1.0 - eps, 0.0);
    let rcr = &r * c * &r;
    let w = tensor::partial_trace_out(&rcr, d)?;
    let lambda_inv = tensor::kron(&tensor::psd_sqrt_inv(&w)?, &tensor::identity(d));
    Ok(tensor::hermitize(&(&lambda_inv * rcr * &lambda_inv)))
}

/// Diluted iterative algorithm. The dilution `ε` restarts at one every outer
/// iteration and is halved until the cost does not increase.
pub fn solve_dia(
    setup: &TomographySetup,
    counts: &CountsTable,
    config: &DiaConfig,
) -> Result<(ChoiMatrix, SolverReport)> {
    config.validate()?;
    let view = CountsTableView::new(counts, setup)?;
    let lik = Likelihood::new(setup, &view, config.eps_cond);
    let d = setup.d();
    let (mut report, started) = SolverReport::start(Method::Dia);

    let mut c = ChoiMatrix::maximally_mixed(d);
    let f0 = lik.cost(c.matrix());
    let mut f = f0.value;
    report.conditioning_heralded |= f0.heralded;
    report.costs.push(f);

    while report.iterations < config.max_outer_iterations {
        let (grad, heralded) = lik.gradient(c.matrix());
        report.conditioning_heralded |= heralded;
        let neg_grad = -grad;

        let mut eps = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = diluted_step(c.matrix(), &neg_grad, eps, d)?;
            let cost = lik.cost(&trial);
            report.conditioning_heralded |= cost.heralded;
            if cost.value <= f {
                accepted = Some((trial, cost.value));
                break;
            }
            eps *= 0.5;
            if eps < config.min_epsilon {
                break;
            }
        }
        let Some((next, f_next)) = accepted else {
            report.finish(SolverStatus::Stalled, started);
            return Err(report.into_error(SolverStatus::Stalled, &c, eps));
        };

        let decrease = f - f_next;
        c = ChoiMatrix::from_hermitian(d, next);
        f = f_next;
        report.iterations += 1;
        report.costs.push(f);
        report.steps.push(eps);
        if decrease <= config.f_tol {
            report.finish(SolverStatus::Converged, started);
            return Ok((c, report));
        }
    }
    report.finish(SolverStatus::IterationCap, started);
    let last = report
        .costs
        .windows(2)
        .last()
        .map_or(f64::NAN, |w| w[0] - w[1]);
    Err(report.into_error(SolverStatus::IterationCap, &c, last))
}
