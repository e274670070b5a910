//! Monte Carlo sampling of `Σ = Y + A` and gaps to the deterministic
//! equivalent.
//!
//! Trial `k` draws from a ChaCha8 stream seeded with `seed ^ splitmix64(k)`,
//! so results do not depend on how trials are scheduled across threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::capacity;
use crate::error::{Error, Result};
use crate::io::format_complex;
use crate::model::{block_example_model, BlockVariant, ModelSpec, ScalarField};
use crate::numerics::{self, CMatrix, HermitianMatrix};
use crate::solver::{self, SolverConfig};
use crate::spectral::{self, DensityEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    Gaussian,
    Rademacher,
    /// Real and imaginary parts independent `N(0, 1/2)`.
    CircularGaussian,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Rademacher => "rademacher",
            Distribution::CircularGaussian => "circular_gaussian",
        }
    }

    pub fn field(self) -> ScalarField {
        match self {
            Distribution::Gaussian | Distribution::Rademacher => ScalarField::Real,
            Distribution::CircularGaussian => ScalarField::Complex,
        }
    }

    /// Gaussian law matching the field.
    pub fn default_for(field: ScalarField) -> Self {
        match field {
            ScalarField::Real => Distribution::Gaussian,
            ScalarField::Complex => Distribution::CircularGaussian,
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> Complex64 {
        match self {
            Distribution::Gaussian => Complex64::new(rng.sample(StandardNormal), 0.0),
            Distribution::Rademacher => {
                Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)
            }
            Distribution::CircularGaussian => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            }
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(Distribution::Gaussian),
            "rademacher" => Ok(Distribution::Rademacher),
            "circular_gaussian" => Ok(Distribution::CircularGaussian),
            other => Err(format!("unknown distribution '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleConfig {
    pub distribution: Distribution,
    pub seed: u64,
    pub trials: usize,
}

impl SampleConfig {
    pub fn validate(&self, field: ScalarField) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Precondition("trials must be positive".into()));
        }
        if self.distribution.field() != field {
            return Err(Error::Precondition(format!(
                "distribution {} does not match the {} field",
                self.distribution,
                field.name()
            )));
        }
        Ok(())
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ splitmix64(trial_index))
}

/// One draw of `Σ = Y + A` with `Y_ij = σ_ij X_ij / √n`. Entries are drawn
/// in column-major order.
pub fn sample_matrix(
    model: &ModelSpec,
    trial_index: u64,
    config: &SampleConfig,
) -> Result<CMatrix> {
    config.validate(model.field())?;
    let mut rng = trial_rng(config.seed, trial_index);
    let sigma = model.profile().sigma();
    let scale = 1.0 / (model.cols() as f64).sqrt();
    let a = model.a();
    let mut out = a.clone();
    for j in 0..model.cols() {
        for i in 0..model.rows() {
            let x = config.distribution.draw(&mut rng);
            out[(i, j)] += x * (sigma[(i, j)] * scale);
        }
    }
    Ok(out)
}

/// Eigenvalues of `ΣΣ^*`, ascending and clipped at zero.
pub fn empirical_esd(sigma: &CMatrix) -> Result<Vec<f64>> {
    let mut values = if numerics::is_real(sigma) {
        let r: DMatrix<f64> = sigma.map(|x| x.re);
        numerics::symmetric_eigenvalues(&r * r.transpose())?
    } else {
        numerics::hermitian_eigenvalues(&HermitianMatrix::gram(sigma))?
    };
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(values)
}

/// `(1/N) Σ_k 1/(λ_k − z)`.
pub fn stieltjes_of_esd(eigenvalues: &[f64], z: Complex64) -> Complex64 {
    eigenvalues
        .iter()
        .map(|&l| (Complex64::new(l, 0.0) - z).inv())
        .sum::<Complex64>()
        / eigenvalues.len() as f64
}

/// `(1/N) Tr(ΣΣ^* − zI)⁻¹`.
pub fn empirical_stieltjes(sigma: &CMatrix, z: Complex64) -> Result<Complex64> {
    solver::check_spectral_point(z)?;
    Ok(stieltjes_of_esd(&empirical_esd(sigma)?, z))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    pub quantity: String,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub mean: Complex64,
    pub stderr: f64,
    pub deterministic: Complex64,
    pub gap: f64,
    pub flag: Option<String>,
}

impl MonteCarloReport {
    fn new(
        quantity: &str,
        n: usize,
        config: &SampleConfig,
        samples: &[Complex64],
        deterministic: Complex64,
    ) -> Self {
        let (mean, stderr) = mean_stderr(samples);
        let flag = (samples.len() == 1)
            .then(|| "single trial: stderr undefined, reported as 0".to_string());
        Self {
            quantity: quantity.to_string(),
            n,
            trials: samples.len(),
            seed: config.seed,
            mean,
            stderr,
            deterministic,
            gap: (mean - deterministic).norm(),
            flag,
        }
    }
}

/// Mean and `s/√T` with the unbiased sample deviation `s`; zero for one trial.
pub fn mean_stderr(samples: &[Complex64]) -> (Complex64, f64) {
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<Complex64>() / t;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

pub fn reports_csv(reports: &[MonteCarloReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "quantity",
        "n",
        "trials",
        "seed",
        "mean",
        "stderr",
        "deterministic",
        "gap",
    ])?;
    for r in reports {
        w.write_record([
            r.quantity.clone(),
            r.n.to_string(),
            r.trials.to_string(),
            r.seed.to_string(),
            format_complex(r.mean),
            r.stderr.to_string(),
            format_complex(r.deterministic),
            r.gap.to_string(),
        ])?;
    }
    spectral::csv_string(w)
}

/// Runs `f` on every trial index in parallel; results come back in index
/// order.
pub fn run_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..trials as u64).into_par_iter().map(&f).collect()
}

fn esd_trials(model: &ModelSpec, config: &SampleConfig) -> Result<Vec<Vec<f64>>> {
    config.validate(model.field())?;
    run_trials(config.trials, |k| {
        empirical_esd(&sample_matrix(model, k, config)?)
    })
}

/// Trial-mean empirical Stieltjes value against `(1/N) Tr T_n(z)` for each
/// member of a model family.
pub fn mc_stieltjes_gap<F>(
    family: F,
    n_list: &[usize],
    z: Complex64,
    sample: &SampleConfig,
    config: &SolverConfig,
) -> Result<Vec<MonteCarloReport>>
where
    F: Fn(usize) -> Result<ModelSpec>,
{
    solver::check_spectral_point(z)?;
    n_list
        .iter()
        .map(|&n| {
            let model = family(n)?;
            let (m, _) = spectral::equivalent_stieltjes(&model, z, config)?;
            let samples: Vec<Complex64> = esd_trials(&model, sample)?
                .iter()
                .map(|e| stieltjes_of_esd(e, z))
                .collect();
            Ok(MonteCarloReport::new("stieltjes", n, sample, &samples, m))
        })
        .collect()
}

/// Trial-mean of `(1/N) log det(I + ΣΣ^*/σ²)` against the closed-form
/// approximant.
pub fn mc_capacity_gap(
    model: &ModelSpec,
    sigma2: f64,
    sample: &SampleConfig,
    config: &SolverConfig,
) -> Result<MonteCarloReport> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Precondition(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    sample.validate(model.field())?;
    let deterministic = capacity::capacity_closed_form(model, &[sigma2], config)?[0].value;
    let rows = model.rows();
    let samples = run_trials(sample.trials, |k| {
        let s = sample_matrix(model, k, sample)?;
        let mut h = &s * s.adjoint() / Complex64::new(sigma2, 0.0);
        for i in 0..rows {
            h[(i, i)] += 1.0;
        }
        let ld = numerics::log_det_hpd(&HermitianMatrix::new(h)?)?;
        Ok(Complex64::new(ld / rows as f64, 0.0))
    })?;
    Ok(MonteCarloReport::new(
        "capacity",
        model.cols(),
        sample,
        &samples,
        Complex64::new(deterministic, 0.0),
    ))
}

/// Test function sampled on the density grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub values: Vec<f64>,
}

impl TestFunction {
    pub fn from_fn(name: &str, grid: &[f64], f: impl Fn(f64) -> f64) -> Self {
        Self {
            name: name.to_string(),
            values: grid.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Linear interpolation on the grid, constant beyond its ends.
fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let k = grid.partition_point(|&g| g <= x);
    if k == 0 {
        return values[0];
    }
    if k == grid.len() {
        return values[grid.len() - 1];
    }
    let (x0, x1) = (grid[k - 1], grid[k]);
    let t = (x - x0) / (x1 - x0);
    values[k - 1] * (1.0 - t) + values[k] * t
}

/// `(1/N) Σ_k f(λ_k) − ∫ f ρ̂` per test function. The integral is the
/// trapezoid rule over the grid against the η-smoothed density, so it
/// carries an `O(η)` bias; the flag records `η` and the density mass the
/// grid captures.
pub fn weak_convergence_gap(
    model: &ModelSpec,
    functions: &[TestFunction],
    grid: &[f64],
    eta: Option<f64>,
    sample: &SampleConfig,
    config: &SolverConfig,
) -> Result<Vec<MonteCarloReport>> {
    let top = 4.0 * (model.sigma_max().powi(2) + model.a_max().powi(2));
    match (grid.first(), grid.last()) {
        (Some(&lo), Some(&hi)) if lo <= 0.0 && hi >= top => {}
        _ => {
            return Err(Error::Precondition(format!(
                "density grid must cover [0, {top}]"
            )));
        }
    }
    if let Some(f) = functions.iter().find(|f| f.values.len() != grid.len()) {
        return Err(Error::DimensionMismatch(format!(
            "test function '{}' has {} samples for a grid of {}",
            f.name,
            f.values.len(),
            grid.len()
        )));
    }
    let density: DensityEstimate = spectral::density_estimate(model, grid, eta, config, None)?;
    let esds = esd_trials(model, sample)?;
    let note = format!(
        "eta = {}; grid density mass = {}",
        density.eta,
        density.grid_mass()
    );
    Ok(functions
        .iter()
        .map(|f| {
            let integral: f64 = density
                .points
                .windows(2)
                .zip(f.values.windows(2))
                .map(|(p, v)| 0.5 * (p[1].0 - p[0].0) * (p[0].1 * v[0] + p[1].1 * v[1]))
                .sum();
            let samples: Vec<Complex64> = esds
                .iter()
                .map(|e| {
                    Complex64::new(
                        e.iter()
                            .map(|&l| interpolate(grid, &f.values, l))
                            .sum::<f64>()
                            / e.len() as f64,
                        0.0,
                    )
                })
                .collect();
            let mut report = MonteCarloReport::new(
                &format!("weak:{}", f.name),
                model.cols(),
                sample,
                &samples,
                Complex64::new(integral, 0.0),
            );
            report.flag = Some(match report.flag.take() {
                Some(single) => format!("{single}; {note}"),
                None => note.clone(),
            });
            report
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    /// Fraction of pooled eigenvalues in `[left, right)`.
    pub fraction: f64,
}

/// Normalized histogram of pooled eigenvalues over `[0, top]`; values past
/// `top` land in the last bin.
pub fn histogram(values: &[f64], top: f64, bins: usize) -> Vec<HistogramBin> {
    let width = top / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = ((v / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| HistogramBin {
            left: k as f64 * width,
            right: (k + 1) as f64 * width,
            fraction: c as f64 / values.len().max(1) as f64,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockVariantDemo {
    pub variant: BlockVariant,
    /// Stieltjes value at `z = −1` against its deterministic equivalent.
    pub stieltjes: MonteCarloReport,
    /// Per trial, eigenvalues within `1e−10` of one.
    pub unit_eigenvalues: Vec<usize>,
    /// Per trial, eigenvalues below `1e−10`.
    pub zero_eigenvalues: Vec<usize>,
    pub histogram: Vec<HistogramBin>,
    pub density: DensityEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockDemoReport {
    pub n: usize,
    pub upsilon: BlockVariantDemo,
    pub upsilon_tilde: BlockVariantDemo,
    /// `|m_Υ(−1) − m_Υ̃(−1)|` of the deterministic equivalents.
    pub difference: f64,
}

const BLOCK_BINS: usize = 48;
const BLOCK_GRID: usize = 49;
const UNIT_TOLERANCE: f64 = 1e-10;

fn block_variant(
    n: usize,
    variant: BlockVariant,
    sample: &SampleConfig,
    config: &SolverConfig,
) -> Result<BlockVariantDemo> {
    let model = block_example_model(n, variant)?;
    let z = Complex64::new(-1.0, 0.0);
    let (m, _) = spectral::equivalent_stieltjes(&model, z, config)?;
    let esds = esd_trials(&model, sample)?;
    let samples: Vec<Complex64> = esds.iter().map(|e| stieltjes_of_esd(e, z)).collect();
    let count = |pred: &dyn Fn(f64) -> bool| -> Vec<usize> {
        esds.iter()
            .map(|e| e.iter().filter(|&&l| pred(l)).count())
            .collect()
    };
    let top = 4.0 * (model.sigma_max().powi(2) + model.a_max().powi(2));
    let pooled: Vec<f64> = esds.iter().flatten().copied().collect();
    let grid: Vec<f64> = (0..BLOCK_GRID)
        .map(|k| top * k as f64 / (BLOCK_GRID - 1) as f64)
        .collect();
    Ok(BlockVariantDemo {
        variant,
        stieltjes: MonteCarloReport::new(
            &format!("stieltjes:{}", variant.name()),
            n,
            sample,
            &samples,
            m,
        ),
        unit_eigenvalues: count(&|l| (l - 1.0).abs() <= UNIT_TOLERANCE),
        zero_eigenvalues: count(&|l| l <= UNIT_TOLERANCE),
        histogram: histogram(&pooled, top, BLOCK_BINS),
        density: spectral::density_estimate(&model, &grid, None, config, None)?,
    })
}

/// Both block variants: empirical spectra, deterministic densities and the
/// gap between their Stieltjes values at `z = −1`.
pub fn block_demo(
    n: usize,
    sample: &SampleConfig,
    config: &SolverConfig,
) -> Result<BlockDemoReport> {
    let upsilon = block_variant(n, BlockVariant::Upsilon, sample, config)?;
    let upsilon_tilde = block_variant(n, BlockVariant::UpsilonTilde, sample, config)?;
    let difference =
        (upsilon.stieltjes.deterministic - upsilon_tilde.stieltjes.deterministic).norm();
    Ok(BlockDemoReport {
        n,
        upsilon,
        upsilon_tilde,
        difference,
    })
}
