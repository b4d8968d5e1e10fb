use super::{Method, SolverReport, SolverStatus};
use crate::channel::{
    ChoiMatrix, CountsTable, CountsTableView, Likelihood, TomographySetup, DEFAULT_EPS_COND,
};
use crate::error::Result;
use crate::projections::{dykstra, ProjectionConfig, TraceConstraint};
use crate::tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifpConfig {
    pub projection: ProjectionConfig,
    /// Only used to report the final cost.
    pub eps_cond: f64,
}

impl Default for LifpConfig {
    fn default() -> Self {
        Self {
            projection: ProjectionConfig::default(),
            eps_cond: DEFAULT_EPS_COND,
        }
    }
}

/// Minimum-norm least-squares solution of `A vec(C) = n`, Hermitised. The
/// result is generally neither CP nor TP.
pub fn solve_linear_inversion(setup: &TomographySetup, counts: &CountsTable) -> Result<ChoiMatrix> {
    counts.check_setup(setup)?;
    let d = setup.d();
    let x = setup.design().solve_least_squares(&counts.flat())?;
    let c = tensor::vec_inv(&x, d * d, d * d)?;
    Ok(ChoiMatrix::from_hermitian(d, c))
}

/// Linear inversion followed by one CPTP projection.
pub fn solve_lifp(
    setup: &TomographySetup,
    counts: &CountsTable,
    config: &LifpConfig,
) -> Result<(ChoiMatrix, SolverReport)> {
    let (mut report, started) = SolverReport::start(Method::Lifp);
    let raw = solve_linear_inversion(setup, counts)?;
    report.pre_projection_min_eigenvalue = Some(raw.min_eigenvalue());
    report.pre_projection_tp_distance = Some(raw.tp_residual());

    let projected = dykstra(&raw, TraceConstraint::Preserving, &config.projection)?;
    report.inner_iterations.push(projected.iterations);

    let view = CountsTableView::new(counts, setup)?;
    let cost = Likelihood::new(setup, &view, config.eps_cond).cost(projected.choi.matrix());
    report.costs.push(cost.value);
    report.conditioning_heralded = cost.heralded;
    report.finish(SolverStatus::Direct, started);
    Ok((projected.choi, report))
}
