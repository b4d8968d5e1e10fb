//! `cptp`: generate channels, simulate tomography data, reconstruct, project
//! and benchmark.
//!
//! Exit codes: 0 success, 1 data or domain error, 2 usage error, 3 the solver
//! hit its iteration cap or stalled (the best iterate is still written).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod files;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cptp::benchmark::{run_benchmark, write_csv, BenchmarkConfig};
use cptp::ensembles::{
    minimal_setup, random_cptp, random_quasi_pure, simulate_counts, EnsembleSpec, SampleSize,
    SimulationSpec,
};
use cptp::parallel::Execution;
use cptp::projections::{
    dykstra, project_cp, project_tni, project_tp, project_us_p, ProjectionConfig, TraceConstraint,
};
use cptp::solvers::{reconstruct, Method, SolverOptions, SolverReport};
use cptp::{ChoiMatrix, Error, TomographySetup};

use files::{ChoiFile, CountsFile};

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "cptp",
    version,
    about = "CPTP projection and maximum-likelihood process tomography"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Full,
    Quasipure,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pgdb,
    Dia,
    Lifp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pgdb => Method::Pgdb,
            MethodArg::Dia => Method::Dia,
            MethodArg::Lifp => Method::Lifp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SetArg {
    Cptp,
    Cptni,
    Cp,
    Tp,
    Tni,
    #[value(name = "us_p")]
    UsP,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random CPTP map and write its Choi file.
    GenMap {
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        d: u64,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Kraus rank of a full-rank draw (default d²).
        #[arg(long)]
        kraus_rank: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate counts for the minimal setup (or a setup file).
    Simulate {
        #[arg(long)]
        map: PathBuf,
        /// Shots per preparation, or `inf` for exact probabilities.
        #[arg(long = "N", value_parser = parse_samples)]
        samples: SampleSize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        setup: Option<PathBuf>,
        /// Also write the setup that was used.
        #[arg(long)]
        setup_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a CPTP map from a counts file.
    Reconstruct {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
        /// Report path (default `<out>.report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        setup: Option<PathBuf>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        ftol: Option<f64>,
        #[arg(long)]
        dykstra_tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Project a Choi matrix onto a constraint set.
    Project {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        set: SetArg,
        #[arg(long)]
        p_success: Option<f64>,
        /// Stopping threshold of the composite projections.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded sweep over dimensions, sample sizes and methods, written as CSV.
    Benchmark {
        #[arg(long, value_delimiter = ',', required = true)]
        d_list: Vec<usize>,
        #[arg(long = "N-list", value_delimiter = ',', required = true, value_parser = parse_samples)]
        n_list: Vec<SampleSize>,
        #[arg(
            long,
            value_delimiter = ',',
            value_enum,
            default_value = "pgdb,dia,lifp"
        )]
        methods: Vec<MethodArg>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record wall times (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_samples(s: &str) -> Result<SampleSize, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenMap {
            d,
            kind,
            kraus_rank,
            seed,
            out,
        } => gen_map(d as usize, kind, kraus_rank, seed, &out),
        Command::Simulate {
            map,
            samples,
            seed,
            setup,
            setup_out,
            out,
        } => simulate(
            &map,
            samples,
            seed,
            setup.as_deref(),
            setup_out.as_deref(),
            &out,
        ),
        Command::Reconstruct {
            counts,
            method,
            out,
            report,
            setup,
            mu,
            gamma,
            ftol,
            dykstra_tol,
            max_iters,
        } => {
            let report = report.unwrap_or_else(|| {
                let mut name = out.clone().into_os_string();
                name.push(".report.json");
                PathBuf::from(name)
            });
            let tuning = Tuning {
                mu,
                gamma,
                ftol,
                dykstra_tol,
                max_iters,
            };
            run_reconstruct(
                &counts,
                method.into(),
                &out,
                &report,
                setup.as_deref(),
                &tuning,
            )
        }
        Command::Project {
            input,
            set,
            p_success,
            tol,
            out,
        } => project(&input, set, p_success, tol, &out),
        Command::Benchmark {
            d_list,
            n_list,
            methods,
            trials,
            seed,
            timing,
            out,
        } => benchmark(d_list, n_list, methods, trials, seed, timing, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn gen_map(
    d: usize,
    kind: Kind,
    kraus_rank: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<(), Failure> {
    let (choi, kind_name, rank) = match kind {
        Kind::Full => {
            let m = kraus_rank.unwrap_or(d * d);
            (
                random_cptp(&EnsembleSpec::full_rank(d, m, seed))?,
                "full_rank",
                m,
            )
        }
        Kind::Quasipure => {
            if kraus_rank.is_some() {
                return Err(Failure::usage("--kraus-rank only applies to --kind full"));
            }
            (
                random_quasi_pure(&EnsembleSpec::quasi_pure(d, seed))?,
                "quasi_pure",
                d * d,
            )
        }
    };
    let purity = choi.purity();
    let min_eig = choi.min_eigenvalue();
    let metadata = BTreeMap::from([
        ("kind".to_owned(), kind_name.to_owned()),
        ("kraus_rank".to_owned(), rank.to_string()),
        ("purity".to_owned(), format!("{purity:.16e}")),
        ("seed".to_owned(), seed.to_string()),
    ]);
    files::write_choi(out, &choi, &metadata)?;
    println!("purity {purity:.12}");
    println!("min_eigenvalue {min_eig:.6e}");
    Ok(())
}

fn load_setup(path: Option<&Path>, d: usize) -> Result<TomographySetup, Failure> {
    let setup = match path {
        Some(p) => files::load_setup(p)?,
        None => minimal_setup(d)?,
    };
    if setup.d() != d {
        return Err(Failure::data(format!(
            "setup has d = {} but the data has d = {d}",
            setup.d()
        )));
    }
    Ok(setup)
}

fn simulate(
    map: &Path,
    samples: SampleSize,
    seed: u64,
    setup: Option<&Path>,
    setup_out: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let choi = ChoiFile::load(map, 1e-8)?.to_choi()?;
    let setup = load_setup(setup, choi.d())?;
    if let Some(path) = setup_out {
        files::write(path, &files::setup_to_string(&setup))?;
    }
    let table = simulate_counts(&choi, &setup, &SimulationSpec { samples, seed })?;
    let file = CountsFile::from_table(choi.d(), samples, seed, table);
    files::write(out, &file.to_text())
}

struct Tuning {
    mu: Option<f64>,
    gamma: Option<f64>,
    ftol: Option<f64>,
    dykstra_tol: Option<f64>,
    max_iters: Option<usize>,
}

impl Tuning {
    fn options(&self, method: Method) -> Result<SolverOptions, Failure> {
        let mut o = SolverOptions::default();
        let unused = |flag: &str| Failure::usage(format!("{flag} does not apply to {method}"));
        match method {
            Method::Pgdb => {
                o.pgdb.mu = self.mu.or(o.pgdb.mu);
                o.pgdb.gamma = self.gamma.unwrap_or(o.pgdb.gamma);
                o.pgdb.f_tol = self.ftol.unwrap_or(o.pgdb.f_tol);
                o.pgdb.projection.tol = self.dykstra_tol.unwrap_or(o.pgdb.projection.tol);
                o.pgdb.max_outer_iterations = self.max_iters.unwrap_or(o.pgdb.max_outer_iterations);
            }
            Method::Dia => {
                if self.mu.is_some() || self.gamma.is_some() || self.dykstra_tol.is_some() {
                    return Err(unused("--mu, --gamma and --dykstra-tol"));
                }
                o.dia.f_tol = self.ftol.unwrap_or(o.dia.f_tol);
                o.dia.max_outer_iterations = self.max_iters.unwrap_or(o.dia.max_outer_iterations);
            }
            Method::Lifp => {
                if self.mu.is_some() || self.gamma.is_some() || self.ftol.is_some() {
                    return Err(unused("--mu, --gamma and --ftol"));
                }
                o.lifp.projection.tol = self.dykstra_tol.unwrap_or(o.lifp.projection.tol);
                o.lifp.projection.max_iterations =
                    self.max_iters.unwrap_or(o.lifp.projection.max_iterations);
            }
        }
        Ok(o)
    }
}

fn estimate_metadata(method: Method, report: &SolverReport) -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "final_cost".to_owned(),
            format!("{:.16e}", report.final_cost),
        ),
        ("iterations".to_owned(), report.iterations.to_string()),
        ("method".to_owned(), method.to_string()),
        (
            "status".to_owned(),
            serde_json::to_value(report.status)
                .unwrap()
                .as_str()
                .unwrap_or("")
                .to_owned(),
        ),
    ])
}

fn write_report(path: &Path, report: &SolverReport) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Failure::data(e.to_string()))?;
    files::write(path, &(text + "\n"))
}

fn run_reconstruct(
    counts: &Path,
    method: Method,
    out: &Path,
    report_path: &Path,
    setup: Option<&Path>,
    tuning: &Tuning,
) -> Result<(), Failure> {
    let options = tuning.options(method)?;
    let counts = CountsFile::load(counts)?;
    let setup = load_setup(setup, counts.d)?;
    match reconstruct(method, &setup, &counts.table, &options) {
        Ok((estimate, report)) => {
            files::write_choi(out, &estimate, &estimate_metadata(method, &report))?;
            write_report(report_path, &report)?;
            println!(
                "{method}: {} iterations, final cost {:.12e}, heralded {}",
                report.iterations, report.final_cost, report.conditioning_heralded
            );
            Ok(())
        }
        Err(Error::Convergence(failure)) | Err(Error::StalledStep(failure)) => {
            let Some(report) = failure.report else {
                return Err(Failure::data(format!(
                    "inner projection did not converge after {} iterations",
                    failure.iterations
                )));
            };
            let best = ChoiMatrix::new(counts.d, failure.last_iterate)?;
            files::write_choi(out, &best, &estimate_metadata(method, &report))?;
            write_report(report_path, &report)?;
            Err(Failure {
                code: 3,
                message: format!(
                    "{method} stopped without converging after {} iterations; best iterate written",
                    report.iterations
                ),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn project(
    input: &Path,
    set: SetArg,
    p_success: Option<f64>,
    tol: f64,
    out: &Path,
) -> Result<(), Failure> {
    let file = ChoiFile::load(input, 1e-6)?;
    let c = file.to_choi()?;
    if p_success.is_some() && !matches!(set, SetArg::UsP) {
        return Err(Failure::usage("--p-success only applies to --set us_p"));
    }
    let config = ProjectionConfig::with_tol(tol);
    let (projected, name) = match set {
        SetArg::Cptp => (
            dykstra(&c, TraceConstraint::Preserving, &config)?.choi,
            "cptp",
        ),
        SetArg::Cptni => (
            dykstra(&c, TraceConstraint::NonIncreasing, &config)?.choi,
            "cptni",
        ),
        SetArg::Cp => (project_cp(&c), "cp"),
        SetArg::Tp => (project_tp(&c), "tp"),
        SetArg::Tni => (project_tni(&c), "tni"),
        SetArg::UsP => {
            let p = p_success.ok_or_else(|| Failure::usage("--set us_p requires --p-success"))?;
            (project_us_p(&c, p)?, "us_p")
        }
    };
    let moved = (projected.matrix() - c.matrix()).norm();
    let mut metadata = file.metadata.clone();
    metadata.insert("projection".to_owned(), name.to_owned());
    files::write_choi(out, &projected, &metadata)?;
    println!("distance_moved {moved:.6e}");
    Ok(())
}

fn benchmark(
    d_list: Vec<usize>,
    n_list: Vec<SampleSize>,
    methods: Vec<MethodArg>,
    trials: usize,
    seed: u64,
    timing: bool,
    out: &Path,
) -> Result<(), Failure> {
    if d_list.iter().any(|&d| d < 2) {
        return Err(Failure::usage(
            "every dimension in --d-list must be at least 2",
        ));
    }
    if trials == 0 {
        return Err(Failure::usage("--trials must be positive"));
    }
    let mut methods: Vec<Method> = methods.into_iter().map(Method::from).collect();
    methods.dedup();
    let mut config = BenchmarkConfig::new(d_list, n_list, methods, trials, seed);
    config.record_timing = timing;
    let rows = run_benchmark(&config, Execution::from_env())?;
    let mut text = Vec::new();
    write_csv(&rows, &mut text).map_err(|e| Failure::data(e.to_string()))?;
    files::write(out, &String::from_utf8(text).expect("CSV is ASCII"))?;
    let ok = rows.iter().filter(|r| r.succeeded()).count();
    println!("{ok}/{} runs converged", rows.len());
    if ok == 0 {
        return Err(Failure::data("no benchmark run succeeded"));
    }
    Ok(())
}
