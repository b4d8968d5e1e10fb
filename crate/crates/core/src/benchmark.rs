//! Seeded sweeps over dimension, sample size and method.
//!
//! Every trial draws a fresh quasi-pure map and a fresh counts table from a
//! seed derived from `(seed, d, N, trial)`, then runs all requested methods on
//! the same data. Results therefore do not depend on scheduling.

use std::io::{self, Write};

use crate::channel::ChoiMatrix;
use crate::ensembles::{
    j_distance, minimal_setup, random_quasi_pure, simulate_counts, EnsembleSpec, SampleSize,
    SimulationSpec,
};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::solvers::{reconstruct, Method, SolverOptions, SolverReport};
use crate::TomographySetup;

pub const CSV_VERSION: &str = "cptp-benchmark v1";
pub const CSV_HEADER: &str =
    "d,N,method,trial,trial_seed,j_distance,final_cost,iterations,wall_time_s,heralded,status";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub d_list: Vec<usize>,
    pub n_list: Vec<SampleSize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    /// Wall times vary between runs, so they are only written on request.
    pub record_timing: bool,
    pub options: SolverOptions,
}

impl BenchmarkConfig {
    pub fn new(
        d_list: Vec<usize>,
        n_list: Vec<SampleSize>,
        methods: Vec<Method>,
        trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            d_list,
            n_list,
            methods,
            trials,
            seed,
            record_timing: false,
            options: SolverOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d_list.is_empty() || self.n_list.is_empty() || self.methods.is_empty() {
            return Err(Error::domain("benchmark lists must be non-empty"));
        }
        if let Some(d) = self.d_list.iter().find(|&&d| d < 2) {
            return Err(Error::domain(format!("dimension {d} is below 2")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub d: usize,
    pub samples: SampleSize,
    pub method: Method,
    pub trial: usize,
    pub trial_seed: u64,
    pub j_distance: Option<f64>,
    pub final_cost: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time_seconds: Option<f64>,
    pub heralded: bool,
    pub status: String,
}

impl BenchmarkRow {
    pub fn succeeded(&self) -> bool {
        self.status == "converged" || self.status == "direct"
    }

    fn csv_line(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map_or_else(|| "NA".to_owned(), |x| x.to_string())
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.d,
            self.samples,
            self.method,
            self.trial,
            self.trial_seed,
            opt(self.j_distance),
            opt(self.final_cost),
            opt(self.iterations),
            opt(self.wall_time_seconds),
            self.heralded,
            self.status
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial, mixed from the sweep seed and the trial coordinates.
pub fn trial_seed(seed: u64, d: usize, samples: SampleSize, trial: usize) -> u64 {
    let n = match samples {
        SampleSize::Finite(n) => n,
        SampleSize::Infinite => u64::MAX,
    };
    [d as u64, n, trial as u64]
        .iter()
        .fold(splitmix64(seed), |acc, &x| splitmix64(acc ^ x))
}

fn status_name(report: &SolverReport) -> &'static str {
    use crate::solvers::SolverStatus::*;
    match report.status {
        Converged => "converged",
        IterationCap => "iteration_cap",
        Stalled => "stalled",
        Direct => "direct",
    }
}

fn run_trial(
    config: &BenchmarkConfig,
    setup: &TomographySetup,
    samples: SampleSize,
    trial: usize,
) -> Vec<BenchmarkRow> {
    let d = setup.d();
    let seed = trial_seed(config.seed, d, samples, trial);
    let row = |method, status: String| BenchmarkRow {
        d,
        samples,
        method,
        trial,
        trial_seed: seed,
        j_distance: None,
        final_cost: None,
        iterations: None,
        wall_time_seconds: None,
        heralded: false,
        status,
    };

    let data = random_quasi_pure(&EnsembleSpec::quasi_pure(d, seed)).and_then(|truth| {
        let sim = SimulationSpec {
            samples,
            seed: splitmix64(seed),
        };
        simulate_counts(&truth, setup, &sim).map(|counts| (truth, counts))
    });
    let (truth, counts) = match data {
        Ok(x) => x,
        Err(e) => {
            return config
                .methods
                .iter()
                .map(|&m| row(m, error_status(&e)))
                .collect()
        }
    };

    config
        .methods
        .iter()
        .map(|&method| {
            let (estimate, report) = match reconstruct(method, setup, &counts, &config.options) {
                Ok((est, report)) => (est, report),
                Err(e) => match e
                    .failure()
                    .and_then(|f| f.report.clone().map(|r| (f.last_iterate.clone(), r)))
                {
                    Some((last, report)) => (ChoiMatrix::from_hermitian(d, last), report),
                    None => return row(method, error_status(&e)),
                },
            };
            BenchmarkRow {
                j_distance: j_distance(&estimate, &truth).ok(),
                final_cost: Some(report.final_cost),
                iterations: Some(report.iterations),
                wall_time_seconds: config.record_timing.then_some(report.wall_time_seconds),
                heralded: report.conditioning_heralded,
                ..row(method, status_name(&report).to_owned())
            }
        })
        .collect()
}

fn error_status(e: &Error) -> String {
    let msg: String = e
        .to_string()
        .chars()
        .map(|c| if c == ',' || c == '\n' { ';' } else { c })
        .collect();
    format!("error: {msg}")
}

/// Runs the sweep. Rows are ordered by `d`, then `N`, then trial, then method.
pub fn run_benchmark(config: &BenchmarkConfig, exec: Execution) -> Result<Vec<BenchmarkRow>> {
    config.validate()?;
    let setups = config
        .d_list
        .iter()
        .map(|&d| minimal_setup(d))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (k, _) in config.d_list.iter().enumerate() {
        for &samples in &config.n_list {
            for trial in 0..config.trials {
                jobs.push((k, samples, trial));
            }
        }
    }
    let rows = map_indexed(jobs.len(), exec, |i| {
        let (k, samples, trial) = jobs[i];
        run_trial(config, &setups[k], samples, trial)
    });
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_csv<W: Write>(rows: &[BenchmarkRow], mut out: W) -> io::Result<()> {
    writeln!(out, "# {CSV_VERSION}")?;
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}
