//! Process estimators. Each returns a CPTP estimate with a [`SolverReport`].

mod dia;
mod linear;
mod pgdb;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use dia::{solve_dia, DiaConfig};
pub use linear::{solve_lifp, solve_linear_inversion, LifpConfig};
pub use pgdb::{solve_pgdb, PgdbConfig};

use crate::channel::{ChoiMatrix, CountsTable, TomographySetup};
use crate::error::{Error, IterationFailure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pgdb,
    Dia,
    Lifp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Pgdb, Method::Dia, Method::Lifp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pgdb => "pgdb",
            Method::Dia => "dia",
            Method::Lifp => "lifp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pgdb" => Ok(Method::Pgdb),
            "dia" => Ok(Method::Dia),
            "lifp" => Ok(Method::Lifp),
            other => Err(Error::domain(format!(
                "unknown method {other:?} (expected pgdb, dia or lifp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// The last accepted step decreased the cost by at most `f_tol`.
    Converged,
    IterationCap,
    Stalled,
    /// Non-iterative estimator (LIFP).
    Direct,
}

/// Per-run trace of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: Method,
    pub status: SolverStatus,
    /// Accepted outer iterations.
    pub iterations: usize,
    /// Cost of the initial estimate followed by the cost after every
    /// accepted step.
    pub costs: Vec<f64>,
    pub final_cost: f64,
    /// Armijo step `α` (pgdB) or dilution `ε` (DIA) of every accepted step.
    pub steps: Vec<f64>,
    /// Dykstra iterations spent by each projection.
    pub inner_iterations: Vec<usize>,
    /// Set when any evaluated probability had to be raised to `eps_cond`.
    pub conditioning_heralded: bool,
    pub wall_time_seconds: f64,
    /// Minimum eigenvalue of the unconstrained estimate (LIFP only).
    pub pre_projection_min_eigenvalue: Option<f64>,
    /// `‖Tr_out C − I‖_F` of the unconstrained estimate (LIFP only).
    pub pre_projection_tp_distance: Option<f64>,
}

impl SolverReport {
    fn start(method: Method) -> (Self, Instant) {
        let report = Self {
            method,
            status: SolverStatus::Converged,
            iterations: 0,
            costs: Vec::new(),
            final_cost: f64::NAN,
            steps: Vec::new(),
            inner_iterations: Vec::new(),
            conditioning_heralded: false,
            wall_time_seconds: 0.0,
            pre_projection_min_eigenvalue: None,
            pre_projection_tp_distance: None,
        };
        (report, Instant::now())
    }

    fn finish(&mut self, status: SolverStatus, started: Instant) {
        self.status = status;
        self.final_cost = self.costs.last().copied().unwrap_or(f64::NAN);
        self.wall_time_seconds = started.elapsed().as_secs_f64();
    }

    /// Whether every cost in the trace is at most its predecessor.
    pub fn is_monotone(&self) -> bool {
        self.costs.windows(2).all(|w| w[1] <= w[0])
    }

    fn into_error(self, status: SolverStatus, last: &ChoiMatrix, residual: f64) -> Error {
        let failure = Box::new(IterationFailure {
            iterations: self.iterations,
            residual,
            last_iterate: last.matrix().clone(),
            report: Some(self),
        });
        match status {
            SolverStatus::Stalled => Error::StalledStep(failure),
            _ => Error::Convergence(failure),
        }
    }
}

/// Configuration for every method, so callers can pick one at run time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverOptions {
    pub pgdb: PgdbConfig,
    pub dia: DiaConfig,
    pub lifp: LifpConfig,
}

pub fn reconstruct(
    method: Method,
    setup: &TomographySetup,
    counts: &CountsTable,
    options: &SolverOptions,
) -> Result<(ChoiMatrix, SolverReport)> {
    match method {
        Method::Pgdb => solve_pgdb(setup, counts, &options.pgdb),
        Method::Dia => solve_dia(setup, counts, &options.dia),
        Method::Lifp => solve_lifp(setup, counts, &options.lifp),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("cvx".parse::<Method>().is_err());
    }
}
