//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (uncaptured) before asserting.

use std::io::Write;
use std::time::Instant;

use cptp::benchmark::{run_benchmark, write_csv, BenchmarkConfig};
use cptp::channel::{forward_probs, CountsTableView, Likelihood, DEFAULT_EPS_COND};
use cptp::ensembles::{
    j_distance, minimal_setup, quasi_pure_weights, random_cptp, random_cptp_with,
    random_quasi_pure, rng_from_seed, simulate_counts, EnsembleSpec, SampleSize, SimulationSpec,
};
use cptp::parallel::Execution;
use cptp::projections::{
    dykstra, project_tni, project_tp, project_us_p, MOperator, ProjectionConfig, TraceConstraint,
};
use cptp::solvers::{
    solve_dia, solve_lifp, solve_linear_inversion, solve_pgdb, DiaConfig, LifpConfig, Method,
    PgdbConfig,
};
use cptp::tensor::{self, c64, diag, frobenius_inner, CMatrix, CVector};
use cptp::ChoiMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(id: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2}: {verdict}  {detail}");
}

fn gaussian_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        c64(
            StandardNormal.sample(&mut *rng),
            StandardNormal.sample(&mut *rng),
        )
    });
    tensor::hermitize(&g)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn tight_projection() -> ProjectionConfig {
    ProjectionConfig {
        tol: 1e-14,
        feasibility_tol: 1e-12,
        max_iterations: 100_000,
    }
}

#[test]
fn criterion_01_cptp_projection() {
    let started = Instant::now();
    let mut rng = rng_from_seed(101);
    let config = tight_projection();
    let (mut worst_eig, mut worst_tp, mut worst_vi) = (f64::INFINITY, 0.0f64, f64::NEG_INFINITY);
    for d in [2usize, 4] {
        let refs: Vec<ChoiMatrix> = (0..1000)
            .map(|k| random_cptp_with(&mut rng, d, 1 + k % (d * d)))
            .collect();
        for _ in 0..100 {
            let c = ChoiMatrix::from_matrix(gaussian_hermitian(&mut rng, d * d)).unwrap();
            let x = dykstra(&c, TraceConstraint::Preserving, &config)
                .unwrap()
                .choi;
            worst_eig = worst_eig.min(x.min_eigenvalue());
            worst_tp = worst_tp.max(x.tp_residual());
            let r = c.matrix() - x.matrix();
            for b in &refs {
                worst_vi = worst_vi.max(frobenius_inner(&r, &(b.matrix() - x.matrix())));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst_eig >= -1e-8 && worst_tp <= 1e-6 && worst_vi <= 1e-6 && secs < 60.0;
    report(
        1,
        pass,
        format!("min eig {worst_eig:.2e}, TP residual {worst_tp:.2e}, max VI {worst_vi:.2e}, {secs:.1} s"),
    );
    assert!(pass);
}

/// Equality-constrained least squares `min ‖X − C‖ s.t. Tr_out X = T` through
/// its dense KKT system.
fn kkt_oracle(c: &CMatrix, target: &CMatrix, d: usize) -> CMatrix {
    let m = MOperator::new(d).to_dense();
    let (n4, n2) = (d.pow(4), d * d);
    let mut kkt = CMatrix::zeros(n4 + n2, n4 + n2);
    kkt.view_mut((0, 0), (n4, n4)).fill_with_identity();
    kkt.view_mut((0, n4), (n4, n2)).copy_from(&m.adjoint());
    kkt.view_mut((n4, 0), (n2, n4)).copy_from(&m);
    let mut rhs = CVector::zeros(n4 + n2);
    rhs.rows_mut(0, n4).copy_from(&tensor::vec(c));
    rhs.rows_mut(n4, n2).copy_from(&tensor::vec(target));
    let sol = kkt.lu().solve(&rhs).unwrap();
    tensor::vec_inv(&sol.rows(0, n4).into_owned(), n2, n2).unwrap()
}

/// `min ‖X − C‖ s.t. Tr_out X ≼ I` by projected dual ascent on the
/// multiplier `Λ ≽ 0` of the stationarity condition `X = C − Λ ⊗ I`.
fn tni_dual_oracle(c: &CMatrix, d: usize) -> CMatrix {
    let id = tensor::identity(d);
    let mut lambda = CMatrix::zeros(d, d);
    let step = 0.5 / d as f64;
    for _ in 0..20_000 {
        let x = c - tensor::kron(&lambda, &id);
        let slack = tensor::partial_trace_out(&x, d).unwrap() - &id;
        lambda = cptp::projections::project_psd(&(&lambda + slack * c64(step, 0.0)));
    }
    c - tensor::kron(&lambda, &id)
}

#[test]
fn criterion_02_closed_form_projections() {
    let c = ChoiMatrix::from_matrix(diag(&[0.1, 0.1, 0.1, 1.7])).unwrap();
    let id = tensor::identity(2);
    let half = &id * c64(0.5, 0.0);

    let tp = project_tp(&c);
    let tp_expected = diag(&[0.5, 0.5, -0.3, 1.3]);
    let tp_err = max_abs_diff(tp.matrix(), &tp_expected);
    let tp_oracle = max_abs_diff(tp.matrix(), &kkt_oracle(c.matrix(), &id, 2));

    let tni = project_tni(&c);
    let tni_expected = diag(&[0.1, 0.1, -0.3, 1.3]);
    let tni_err = max_abs_diff(tni.matrix(), &tni_expected);
    let tni_oracle = max_abs_diff(tni.matrix(), &tni_dual_oracle(c.matrix(), 2));

    let us = project_us_p(&c, 0.5).unwrap();
    let us_expected = diag(&[0.35, 0.35, -0.55, 1.05]);
    let us_err = max_abs_diff(us.matrix(), &us_expected);
    let us_oracle_matrix = kkt_oracle(c.matrix(), &half, 2);
    let us_oracle = max_abs_diff(us.matrix(), &us_oracle_matrix);

    let pass = [tp_err, tp_oracle, tni_err, tni_oracle, us_err, us_oracle]
        .iter()
        .all(|&e| e <= 1e-12);
    report(
        2,
        pass,
        format!(
            "TP {tp_err:.1e} (oracle {tp_oracle:.1e}), TNI {tni_err:.1e} (oracle {tni_oracle:.1e}), \
             US_0.5 vs stated diag(0.35,0.35,-0.55,1.05) {us_err:.1e} (oracle {us_oracle:.1e}; oracle diagonal {:?})",
            (0..4).map(|k| us_oracle_matrix[(k, k)].re).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_gradient() {
    let mut rng = rng_from_seed(303);
    let (mut worst_fd, mut worst_route) = (0.0f64, 0.0f64);
    for d in [2usize, 3] {
        let setup = minimal_setup(d).unwrap();
        let truth = random_cptp(&EnsembleSpec::full_rank(d, d * d, 7)).unwrap();
        let counts = simulate_counts(
            &truth,
            &setup,
            &SimulationSpec {
                samples: SampleSize::Finite(10_000),
                seed: 8,
            },
        )
        .unwrap();
        let view = CountsTableView::new(&counts, &setup).unwrap();
        let lik = Likelihood::new(&setup, &view, DEFAULT_EPS_COND);
        let at = random_cptp_with(&mut rng, d, d * d);
        let (g, _) = lik.gradient(at.matrix());
        let (g_sum, _) = lik.gradient_elementwise(at.matrix());
        worst_route = worst_route.max(max_abs_diff(&g, &g_sum));
        let h = 1e-6;
        for _ in 0..10 {
            let dir = gaussian_hermitian(&mut rng, d * d);
            let dir = &dir * c64(1.0 / dir.norm(), 0.0);
            let fp = lik.cost(&(at.matrix() + &dir * c64(h, 0.0))).value;
            let fm = lik.cost(&(at.matrix() - &dir * c64(h, 0.0))).value;
            let fd = (fp - fm) / (2.0 * h);
            let analytic = frobenius_inner(&g, &dir);
            worst_fd = worst_fd.max((fd - analytic).abs() / analytic.abs().max(1e-300));
        }
    }
    let pass = worst_fd <= 1e-5 && worst_route <= 1e-12;
    report(
        3,
        pass,
        format!("max rel FD error {worst_fd:.2e}, route disagreement {worst_route:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_noiseless_recovery() {
    let started = Instant::now();
    // Noiseless data make the optimum flat; a tighter decrease threshold than
    // the default is needed to reach the accuracy targets.
    let pgdb = PgdbConfig {
        f_tol: 1e-13,
        ..PgdbConfig::default()
    };
    let dia = DiaConfig {
        f_tol: 1e-12,
        max_outer_iterations: 100_000,
        ..DiaConfig::default()
    };
    let lifp = LifpConfig::default();
    let (mut j_pgdb, mut j_dia, mut j_lifp) = (0.0f64, 0.0f64, 0.0f64);
    for (d, trials) in [(2usize, 20u64), (3, 5)] {
        let setup = minimal_setup(d).unwrap();
        for t in 0..trials {
            let truth = random_quasi_pure(&EnsembleSpec::quasi_pure(d, 400 + t)).unwrap();
            let counts = simulate_counts(
                &truth,
                &setup,
                &SimulationSpec {
                    samples: SampleSize::Infinite,
                    seed: 0,
                },
            )
            .unwrap();
            let j = |c: &ChoiMatrix| j_distance(c, &truth).unwrap();
            j_pgdb = j_pgdb
                .max(solve_pgdb(&setup, &counts, &pgdb).map_or(f64::INFINITY, |(c, _)| j(&c)));
            j_dia =
                j_dia.max(solve_dia(&setup, &counts, &dia).map_or(f64::INFINITY, |(c, _)| j(&c)));
            j_lifp = j_lifp
                .max(solve_lifp(&setup, &counts, &lifp).map_or(f64::INFINITY, |(c, _)| j(&c)));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = j_pgdb <= 1e-4 && j_lifp <= 1e-6 && j_dia <= 1e-3 && secs < 300.0;
    report(
        4,
        pass,
        format!("max J: pgdB {j_pgdb:.2e}, LIFP {j_lifp:.2e}, DIA {j_dia:.2e}, {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_statistical_trend() {
    let setup = minimal_setup(2).unwrap();
    let config = PgdbConfig::default();
    let ns = [1_000u64, 100_000, 10_000_000];
    let medians: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let js = (0..10u64)
                .map(|t| {
                    let truth = random_quasi_pure(&EnsembleSpec::quasi_pure(2, 500 + t)).unwrap();
                    let sim = SimulationSpec {
                        samples: SampleSize::Finite(n),
                        seed: 600 + t,
                    };
                    let counts = simulate_counts(&truth, &setup, &sim).unwrap();
                    let (est, _) = solve_pgdb(&setup, &counts, &config).unwrap();
                    j_distance(&est, &truth).unwrap()
                })
                .collect();
            median(js)
        })
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let reference = medians[1];
    let within = ns.iter().zip(&medians).all(|(&n, &m)| {
        let line = reference * (1e5 / n as f64).sqrt();
        m <= 10.0 * line && m >= line / 10.0
    });
    let pass = decreasing && within;
    report(
        5,
        pass,
        format!(
            "median J at N = 1e3, 1e5, 1e7: {}",
            medians
                .iter()
                .map(|m| format!("{m:.2e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_linear_inversion_unphysical() {
    let setup = minimal_setup(4).unwrap();
    let negative = (0..100u64)
        .filter(|&t| {
            let truth = random_cptp(&EnsembleSpec::full_rank(4, 16, 700 + t)).unwrap();
            let sim = SimulationSpec {
                samples: SampleSize::Finite(10_000),
                seed: 800 + t,
            };
            let counts = simulate_counts(&truth, &setup, &sim).unwrap();
            solve_linear_inversion(&setup, &counts)
                .unwrap()
                .min_eigenvalue()
                < 0.0
        })
        .count();
    let pass = negative >= 90;
    report(
        6,
        pass,
        format!("{negative}/100 linear-inversion estimates have a negative eigenvalue"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_solver_agreement() {
    let setup = minimal_setup(2).unwrap();
    let (mut worst_rel, mut monotone) = (0.0f64, true);
    for t in 0..10u64 {
        let truth = random_quasi_pure(&EnsembleSpec::quasi_pure(2, 900 + t)).unwrap();
        let sim = SimulationSpec {
            samples: SampleSize::Finite(100_000),
            seed: 950 + t,
        };
        let counts = simulate_counts(&truth, &setup, &sim).unwrap();
        let (_, a) = solve_pgdb(&setup, &counts, &PgdbConfig::default()).unwrap();
        let (_, b) = solve_dia(&setup, &counts, &DiaConfig::default()).unwrap();
        worst_rel = worst_rel.max((a.final_cost - b.final_cost).abs() / a.final_cost.abs());
        monotone &= a.is_monotone() && b.is_monotone();
    }
    let pass = worst_rel <= 1e-6 && monotone;
    report(
        7,
        pass,
        format!("max relative cost gap {worst_rel:.2e}, monotone traces {monotone}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_ensembles() {
    let mut all_cptp = true;
    let mut min_purity = f64::INFINITY;
    let mut weight_err = 0.0f64;
    for d in [2usize, 3] {
        for s in 0..100u64 {
            let full = random_cptp(&EnsembleSpec::full_rank(d, d * d, s)).unwrap();
            let quasi = random_quasi_pure(&EnsembleSpec::quasi_pure(d, s)).unwrap();
            all_cptp &= full.is_cptp() && quasi.is_cptp();
            min_purity = min_purity.min(quasi.purity());
        }
        let w = quasi_pure_weights(d * d, 0.9).unwrap();
        weight_err = weight_err.max((w.iter().map(|p| p * p).sum::<f64>() - 0.9).abs());
    }
    let pass = all_cptp && min_purity >= 0.9 - 1e-9 && weight_err <= 1e-10;
    report(
        8,
        pass,
        format!("all CPTP {all_cptp}, min purity {min_purity:.6}, |ΣP²−0.9| {weight_err:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_setup() {
    let mut pass = true;
    let mut conds = Vec::new();
    for d in 2..=5usize {
        let setup = minimal_setup(d).unwrap();
        let id = tensor::identity(d);
        let sum = setup
            .povm()
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, e| acc + e);
        let psd = setup
            .povm()
            .iter()
            .all(|e| tensor::min_eigenvalue(e).unwrap() >= -1e-12);
        pass &= setup.n_prep() == d * d
            && setup.n_povm() == 2 * d * d
            && psd
            && max_abs_diff(&sum, &id) <= 1e-12
            && setup.design().rank() == d.pow(4);
        conds.push(setup.design().condition_number());
    }
    pass &= conds.windows(2).all(|w| w[1] >= w[0]);
    report(9, pass, format!("condition numbers d = 2..5: {conds:.3?}"));
    assert!(pass);
}

#[test]
fn criterion_10_heralded_conditioning() {
    let setup = minimal_setup(2).unwrap();
    let mut rng = rng_from_seed(1010);
    let (mut aborted, mut missed, mut heralded) = (0, 0, 0);
    for t in 0..50u64 {
        let truth = random_cptp_with(&mut rng, 2, 1);
        let sim = SimulationSpec {
            samples: SampleSize::Finite(10_000),
            seed: 1100 + t,
        };
        let counts = simulate_counts(&truth, &setup, &sim).unwrap();
        match solve_pgdb(&setup, &counts, &PgdbConfig::default()) {
            Ok((est, rep)) => {
                let tiny = forward_probs(&est, &setup)
                    .unwrap()
                    .iter()
                    .any(|&p| p < 1e-16);
                missed += usize::from(tiny && !rep.conditioning_heralded);
                heralded += usize::from(rep.conditioning_heralded);
            }
            Err(_) => aborted += 1,
        }
    }
    let pass = aborted == 0 && missed == 0;
    report(
        10,
        pass,
        format!(
            "{aborted} aborted, {missed} unheralded tiny probabilities, {heralded}/50 heralded"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_benchmark_determinism() {
    let config = BenchmarkConfig::new(
        vec![2],
        vec![SampleSize::Finite(1000), SampleSize::Infinite],
        Method::ALL.to_vec(),
        3,
        2024,
    );
    let csv = |exec| {
        let rows = run_benchmark(&config, exec).unwrap();
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        out
    };
    let first = csv(Execution::default());
    let second = csv(Execution::default());
    let sequential = csv(Execution::Sequential);
    let pass = first == second && first == sequential;
    report(
        11,
        pass,
        format!(
            "{} bytes, identical across runs and schedules: {pass}",
            first.len()
        ),
    );
    assert!(pass);
}
