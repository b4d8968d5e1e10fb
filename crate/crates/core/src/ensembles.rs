//! Random CPTP maps, the minimal tomography setup, multinomial data and
//! figures of merit.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{forward_probs, ChoiMatrix, CountsTable, TomographySetup};
use crate::error::{Error, Result};
use crate::tensor::{self, c64, CMatrix, CVector};

/// The PRNG behind every seeded routine in the crate.
pub type SeededRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Default `Σ P_i²` of the quasi-pure ensemble.
pub const DEFAULT_PURITY_SUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// One Gaussian draw normalised to TP, Kraus rank `kraus_rank`.
    FullRank,
    /// Geometric mixture of `d²` random unitary-like (rank-one) channels.
    QuasiPure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub d: usize,
    pub kraus_rank: usize,
    pub kind: EnsembleKind,
    pub target_purity_sum: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn full_rank(d: usize, kraus_rank: usize, seed: u64) -> Self {
        Self {
            d,
            kraus_rank,
            kind: EnsembleKind::FullRank,
            target_purity_sum: DEFAULT_PURITY_SUM,
            seed,
        }
    }

    pub fn quasi_pure(d: usize, seed: u64) -> Self {
        Self {
            d,
            kraus_rank: 1,
            kind: EnsembleKind::QuasiPure,
            target_purity_sum: DEFAULT_PURITY_SUM,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::domain("dimension must be positive"));
        }
        if self.kraus_rank < 1 {
            return Err(Error::domain("Kraus rank must be at least 1"));
        }
        Ok(())
    }
}

/// Draws a map of the kind requested by `spec`.
pub fn sample(spec: &EnsembleSpec) -> Result<ChoiMatrix> {
    match spec.kind {
        EnsembleKind::FullRank => random_cptp(spec),
        EnsembleKind::QuasiPure => random_quasi_pure(spec),
    }
}

fn complex_normal(rng: &mut impl Rng) -> num_complex::Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Normalises `X X†` for a `d² × M` Gaussian `X` so the result is TP:
/// `B = (W^{-1/2} ⊗ I) X X† (W^{-1/2} ⊗ I)` with `W = Tr_out[X X†]`.
pub fn random_cptp_with(rng: &mut impl Rng, d: usize, kraus_rank: usize) -> ChoiMatrix {
    let n = d * d;
    loop {
        let x = CMatrix::from_fn(n, kraus_rank, |_, _| complex_normal(rng));
        let xx = &x * x.adjoint();
        let w = tensor::partial_trace_out(&xx, d).expect("d² x d²");
        // W is singular only on a measure-zero set; redraw if it happens.
        let Ok(s) = tensor::psd_sqrt_inv(&w) else {
            continue;
        };
        let k = tensor::kron(&s, &tensor::identity(d));
        return ChoiMatrix::from_hermitian(d, &k * xx * &k);
    }
}

/// Random CPTP map of Kraus rank at most `spec.kraus_rank`.
pub fn random_cptp(spec: &EnsembleSpec) -> Result<ChoiMatrix> {
    spec.validate()?;
    if spec.kind != EnsembleKind::FullRank {
        return Err(Error::domain("random_cptp needs a full-rank ensemble spec"));
    }
    let mut rng = rng_from_seed(spec.seed);
    Ok(random_cptp_with(&mut rng, spec.d, spec.kraus_rank))
}

/// Normalised geometric weights `P_i ∝ r^i`, `i < n`, with `Σ P_i² = target`.
pub fn quasi_pure_weights(n: usize, target: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("need at least one weight"));
    }
    let floor = 1.0 / n as f64;
    if !(target <= 1.0) || (n > 1 && !(target > floor)) || (n == 1 && target != 1.0) {
        return Err(Error::domain(format!(
            "Σ P² = {target} is unattainable with {n} weights (range ({floor}, 1])"
        )));
    }
    let weights = |r: f64| -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|i| r.powi(i as i32)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / s).collect()
    };
    let sum_sq = |r: f64| weights(r).iter().map(|p| p * p).sum::<f64>();
    if target == 1.0 {
        return Ok(weights(0.0));
    }
    // Σ P² falls monotonically from 1 at r = 0 to 1/n at r = 1.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_sq(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(weights(0.5 * (lo + hi)))
}

/// Convex combination of `d²` rank-one TP Choi matrices with geometric weights.
pub fn random_quasi_pure(spec: &EnsembleSpec) -> Result<ChoiMatrix> {
    spec.validate()?;
    if spec.kind != EnsembleKind::QuasiPure {
        return Err(Error::domain(
            "random_quasi_pure needs a quasi-pure ensemble spec",
        ));
    }
    let d = spec.d;
    let weights = quasi_pure_weights(d * d, spec.target_purity_sum)?;
    let mut rng = rng_from_seed(spec.seed);
    let mut c = CMatrix::zeros(d * d, d * d);
    for w in weights {
        let b = random_cptp_with(&mut rng, d, 1);
        c += b.matrix() * c64(w, 0.0);
    }
    Ok(ChoiMatrix::from_hermitian(d, c))
}

/// Preparations `|j⟩`, `(|j⟩+|k⟩)/√2`, `(|j⟩+i|k⟩)/√2` (`j < k`) and the
/// `2d²` POVM elements `ρ_i/d²`, `(I − ρ_i)/d²`.
pub fn minimal_setup(d: usize) -> Result<TomographySetup> {
    if d < 2 {
        return Err(Error::domain(format!(
            "minimal setup needs d >= 2, got {d}"
        )));
    }
    let basis = |j: usize| {
        let mut v = CVector::zeros(d);
        v[j] = c64(1.0, 0.0);
        v
    };
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut kets: Vec<CVector> = (0..d).map(basis).collect();
    for j in 0..d {
        for k in j + 1..d {
            kets.push((basis(j) + basis(k)) * c64(h, 0.0));
        }
    }
    for j in 0..d {
        for k in j + 1..d {
            kets.push((basis(j) + basis(k) * c64(0.0, 1.0)) * c64(h, 0.0));
        }
    }
    let preparations: Vec<CMatrix> = kets.iter().map(|v| v * v.adjoint()).collect();
    let scale = (d * d) as f64;
    let id = tensor::identity(d);
    let povm = preparations
        .iter()
        .map(|rho| rho.unscale(scale))
        .chain(preparations.iter().map(|rho| (&id - rho).unscale(scale)))
        .collect();
    TomographySetup::new(d, preparations, povm)
}

/// Number of shots per preparation, or the noiseless limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleSize {
    Finite(u64),
    Infinite,
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Finite(n) => write!(f, "{n}"),
            SampleSize::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for SampleSize {
    type Err = Error;

    /// Accepts integers, `inf`, and powers of ten written as `1e5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(SampleSize::Infinite);
        }
        let n = match s.parse::<u64>() {
            Ok(n) => n,
            Err(_) => {
                let x: f64 = s
                    .parse()
                    .map_err(|_| Error::domain(format!("invalid sample size {s:?}")))?;
                if !(x.is_finite() && x >= 1.0 && x.fract() == 0.0 && x <= u64::MAX as f64) {
                    return Err(Error::domain(format!("invalid sample size {s:?}")));
                }
                x as u64
            }
        };
        if n == 0 {
            return Err(Error::domain("sample size must be at least 1"));
        }
        Ok(SampleSize::Finite(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub samples: SampleSize,
    pub seed: u64,
}

/// Probabilities below this are set to zero before sampling.
const NEGATIVE_CLIP: f64 = 1e-12;

/// Draws one multinomial sample of size `n` by sequential binomials.
fn multinomial(rng: &mut impl Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (j, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == probs.len() {
            out[j] = remaining;
            break;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = Binomial::new(remaining, q)
            .expect("probability in [0, 1]")
            .sample(rng);
        out[j] = k;
        remaining -= k;
        mass -= p;
    }
    out
}

/// Simulated normalised frequencies for `truth` measured with `setup`.
pub fn simulate_counts(
    truth: &ChoiMatrix,
    setup: &TomographySetup,
    sim: &SimulationSpec,
) -> Result<CountsTable> {
    if !truth.is_cptp() {
        return Err(Error::domain("input map is not CPTP within tolerance"));
    }
    let p = forward_probs(truth, setup)?;
    let (np, nm) = (setup.n_prep(), setup.n_povm());
    let mut rows: Vec<Vec<f64>> = p
        .chunks(nm)
        .map(|row| {
            let clipped: Vec<f64> = row
                .iter()
                .map(|&x| if x < NEGATIVE_CLIP { 0.0 } else { x })
                .collect();
            let s: f64 = clipped.iter().sum();
            clipped.into_iter().map(|x| x / s).collect()
        })
        .collect();
    match sim.samples {
        SampleSize::Infinite => {
            let flat: Vec<f64> = rows.concat();
            CountsTable::from_frequencies(DMatrix::from_row_slice(np, nm, &flat))
        }
        SampleSize::Finite(n) => {
            let mut rng = rng_from_seed(sim.seed);
            let counts: Vec<Vec<u64>> = rows
                .iter_mut()
                .map(|row| multinomial(&mut rng, n, row))
                .collect();
            CountsTable::from_counts(&counts)
        }
    }
}

/// `‖C_a − C_b‖_tr / 2d`.
pub fn j_distance(a: &ChoiMatrix, b: &ChoiMatrix) -> Result<f64> {
    if a.d() != b.d() {
        return Err(Error::dimension(format!(
            "cannot compare maps with d = {} and d = {}",
            a.d(),
            b.d()
        )));
    }
    Ok(tensor::trace_norm(&(a.matrix() - b.matrix())) / (2 * a.d()) as f64)
}

/// Ratio of the extreme non-zero singular values of the design matrix.
pub fn design_condition_number(setup: &TomographySetup) -> f64 {
    setup.design().condition_number()
}
