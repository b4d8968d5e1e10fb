use super::{Method, SolverReport, SolverStatus};
use crate::channel::{
    ChoiMatrix, CountsTable, CountsTableView, Likelihood, TomographySetup, DEFAULT_EPS_COND,
};
use crate::error::{Error, Result};
use crate::projections::{dykstra, ProjectionConfig, TraceConstraint};
use crate::tensor::{self, c64};

/// Metaparameters of projected gradient descent with backtracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdbConfig {
    /// Inverse step scale; `None` means `3 / (2d²)`.
    pub mu: Option<f64>,
    /// Armijo sufficient-decrease constant.
    pub gamma: f64,
    /// Stop after the first accepted step that lowers the cost by at most this.
    pub f_tol: f64,
    pub eps_cond: f64,
    /// Inner CPTP projection.
    pub projection: ProjectionConfig,
    pub max_outer_iterations: usize,
    pub min_alpha: f64,
}

impl Default for PgdbConfig {
    fn default() -> Self {
        Self {
            mu: None,
            gamma: 0.3,
            f_tol: 1e-10,
            eps_cond: DEFAULT_EPS_COND,
            projection: ProjectionConfig::default(),
            max_outer_iterations: 5000,
            min_alpha: 1e-12,
        }
    }
}

impl PgdbConfig {
    pub fn mu_for(&self, d: usize) -> f64 {
        self.mu.unwrap_or(1.5 / (d * d) as f64)
    }

    fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::domain("mu must be positive"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::domain("gamma must lie in (0, 1)"));
        }
        if !(self.f_tol > 0.0) || !(self.eps_cond > 0.0) || !(self.min_alpha > 0.0) {
            return Err(Error::domain(
                "f_tol, eps_cond and min_alpha must be positive",
            ));
        }
        Ok(())
    }
}

/// Projected gradient descent: `D = CPTP(C − ∇f/μ) − C`, then an Armijo
/// search over `α ∈ {1, 1/2, 1/4, …}` along `D`, starting from `I/d`.
pub fn solve_pgdb(
    setup: &TomographySetup,
    counts: &CountsTable,
    config: &PgdbConfig,
) -> Result<(ChoiMatrix, SolverReport)> {
    config.validate()?;
    let view = CountsTableView::new(counts, setup)?;
    let lik = Likelihood::new(setup, &view, config.eps_cond);
    let d = setup.d();
    let inv_mu = 1.0 / config.mu_for(d);
    let (mut report, started) = SolverReport::start(Method::Pgdb);

    let mut c = ChoiMatrix::maximally_mixed(d);
    let f0 = lik.cost(c.matrix());
    let mut f = f0.value;
    report.conditioning_heralded |= f0.heralded;
    report.costs.push(f);

    while report.iterations < config.max_outer_iterations {
        let (grad, heralded) = lik.gradient(c.matrix());
        report.conditioning_heralded |= heralded;

        let target = ChoiMatrix::from_hermitian(d, c.matrix() - &grad * c64(inv_mu, 0.0));
        let projected = dykstra(&target, TraceConstraint::Preserving, &config.projection)?;
        report.inner_iterations.push(projected.iterations);
        let direction = projected.choi.matrix() - c.matrix();
        let slope = tensor::frobenius_inner(&direction, &grad);

        let mut alpha = 1.0;
        let (next, f_next) = loop {
            let trial = c.matrix() + &direction * c64(alpha, 0.0);
            let cost = lik.cost(&trial);
            report.conditioning_heralded |= cost.heralded;
            if cost.value <= f + config.gamma * alpha * slope {
                break (trial, cost.value);
            }
            alpha *= 0.5;
            if alpha < config.min_alpha {
                report.finish(SolverStatus::Stalled, started);
                return Err(report.into_error(SolverStatus::Stalled, &c, slope));
            }
        };

        let decrease = f - f_next;
        c = ChoiMatrix::from_hermitian(d, next);
        f = f_next;
        report.iterations += 1;
        report.costs.push(f);
        report.steps.push(alpha);
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
