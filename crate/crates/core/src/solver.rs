//! Fixed-point solver for the deterministic equivalent `(ψ, ψ̃, T, T̃)`.
//!
//! At a spectral point `z ∉ ℝ⁺` the unknowns satisfy
//!
//! ```text
//! ψ_i  = -1 / (z (1 + (1/n) Σ_j σ_ij² T̃_jj))
//! ψ̃_j = -1 / (z (1 + (1/n) Σ_i σ_ij² T_ii))
//! T    = (Ψ⁻¹ − z A Ψ̃ A^*)⁻¹,   T̃ = (Ψ̃⁻¹ − z A^* Ψ A)⁻¹
//! ```
//!
//! The iteration starts from `ψ = ψ̃ = −1/z` and substitutes repeatedly.
//! Only the diagonals of `T` and `T̃` enter the update, so a sweep costs one
//! dense inversion of the smaller side at most; the other diagonal follows
//! from `T̃ = Ψ̃ + z Ψ̃ A^* T A Ψ̃`. When `A` has a single nonzero per column
//! (or row) the corresponding matrix is diagonal and no inversion is needed.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::{self, CMatrix, HermitianMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Points with `|Im z|` and `Re z` below this are treated as lying on ℝ⁺.
pub const REAL_AXIS_TOLERANCE: f64 = 1e-14;
/// Fallback damping used when the configured iteration does not settle.
pub const FALLBACK_DAMPING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Imaginary height at which continuation starts. `None` selects
    /// `16 (σ_max² + a_max² + 1)` for the model at hand.
    pub continuation_start_height: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
            damping: 0.0,
            continuation_start_height: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Precondition(format!(
                "solver tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Precondition(
                "solver max_iter must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Precondition(format!(
                "solver damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        if let Some(h) = self.continuation_start_height {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Precondition(format!(
                    "continuation start height must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }

    pub fn start_height(&self, model: &ModelSpec) -> f64 {
        self.continuation_start_height
            .unwrap_or(16.0 * model.scale())
    }
}

/// Converged iterate with the diagonals of `T` and `T̃` only.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub z: Complex64,
    pub psi: Vec<Complex64>,
    pub psi_tilde: Vec<Complex64>,
    pub diag_t: Vec<Complex64>,
    pub diag_t_tilde: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

impl FixedPoint {
    /// `(1/N) Tr T(z)`.
    pub fn m(&self) -> Complex64 {
        mean(&self.diag_t)
    }

    /// `(1/n) Tr T̃(z)`.
    pub fn m_tilde(&self) -> Complex64 {
        mean(&self.diag_t_tilde)
    }
}

/// Converged solution with the full matrices `T` and `T̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentSolution {
    pub z: Complex64,
    pub psi: Vec<Complex64>,
    pub psi_tilde: Vec<Complex64>,
    pub t: CMatrix,
    pub t_tilde: CMatrix,
    pub iterations: usize,
    pub residual: f64,
}

impl EquivalentSolution {
    pub fn m(&self) -> Complex64 {
        self.t.trace() / self.t.nrows() as f64
    }

    pub fn m_tilde(&self) -> Complex64 {
        self.t_tilde.trace() / self.t_tilde.nrows() as f64
    }

    pub fn from_fixed_point(model: &ModelSpec, fp: FixedPoint) -> Result<Self> {
        let (t, t_tilde) = assemble_equivalents(model, fp.z, &fp.psi, &fp.psi_tilde)?;
        Ok(Self {
            z: fp.z,
            psi: fp.psi,
            psi_tilde: fp.psi_tilde,
            t,
            t_tilde,
            iterations: fp.iterations,
            residual: fp.residual,
        })
    }
}

fn mean(v: &[Complex64]) -> Complex64 {
    v.iter().sum::<Complex64>() / v.len() as f64
}

pub fn check_spectral_point(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidSpectralPoint(z));
    }
    if z.im.abs() < REAL_AXIS_TOLERANCE && z.re > -REAL_AXIS_TOLERANCE {
        return Err(Error::InvalidSpectralPoint(z));
    }
    Ok(())
}

fn diag_matrix(d: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
}

/// `A diag(w) B` for `A` (r×k), `B` (k×c).
fn weighted_product(a: &CMatrix, w: &[Complex64], b: &CMatrix) -> CMatrix {
    let mut scaled = a.clone();
    for (k, wk) in w.iter().enumerate() {
        for x in scaled.column_mut(k).iter_mut() {
            *x *= wk;
        }
    }
    scaled * b
}

/// `T(z)` and `T̃(z)` for the given `ψ`, `ψ̃`, by linear solves against the
/// assembled system matrices.
pub fn assemble_equivalents(
    model: &ModelSpec,
    z: Complex64,
    psi: &[Complex64],
    psi_tilde: &[Complex64],
) -> Result<(CMatrix, CMatrix)> {
    check_spectral_point(z)?;
    check_lengths(model, psi, psi_tilde)?;
    if psi.iter().chain(psi_tilde).any(|p| p.norm() == 0.0) {
        return Err(Error::SingularSystem(z));
    }
    let a = model.a();
    let a_adj = model.a_adjoint();
    let inv_psi: Vec<Complex64> = psi.iter().map(|p| p.inv()).collect();
    let inv_psi_tilde: Vec<Complex64> = psi_tilde.iter().map(|p| p.inv()).collect();

    let system = diag_matrix(&inv_psi) - weighted_product(a, psi_tilde, &a_adj) * z;
    let system_tilde = diag_matrix(&inv_psi_tilde) - weighted_product(&a_adj, psi, a) * z;
    let map = |e: Error| match e {
        Error::SingularMatrix { .. } => Error::SingularSystem(z),
        other => other,
    };
    let t = numerics::inverse(&system).map_err(map)?;
    let t_tilde = numerics::inverse(&system_tilde).map_err(map)?;
    Ok((t, t_tilde))
}

fn check_lengths(model: &ModelSpec, psi: &[Complex64], psi_tilde: &[Complex64]) -> Result<()> {
    if psi.len() != model.rows() || psi_tilde.len() != model.cols() {
        return Err(Error::DimensionMismatch(format!(
            "iterate has {}+{} entries, model is {}x{}",
            psi.len(),
            psi_tilde.len(),
            model.rows(),
            model.cols()
        )));
    }
    Ok(())
}

fn checked_inv(x: Complex64, z: Complex64) -> Result<Complex64> {
    if x.norm() == 0.0 || !(x.re.is_finite() && x.im.is_finite()) {
        Err(Error::SingularSystem(z))
    } else {
        Ok(x.inv())
    }
}

/// `diag T` and `diag T̃` exploiting the structure of `A`.
pub(crate) fn diagonals(
    model: &ModelSpec,
    z: Complex64,
    psi: &[Complex64],
    psi_tilde: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let s = model.centering().structure();
    if s.is_zero {
        return Ok((psi.to_vec(), psi_tilde.to_vec()));
    }
    let a = model.a();
    let (rows, cols) = a.shape();
    // |A_ij|², column-major like A.
    let abs2 = a.map(|x| x.norm_sqr());

    let direct_t = |psi_tilde: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut acc = vec![ZERO; rows];
        for j in 0..cols {
            for i in 0..rows {
                acc[i] += psi_tilde[j] * abs2[(i, j)];
            }
        }
        (0..rows)
            .map(|i| checked_inv(psi[i].inv() - z * acc[i], z))
            .collect()
    };
    let direct_t_tilde = |psi: &[Complex64]| -> Result<Vec<Complex64>> {
        (0..cols)
            .map(|j| {
                let acc: Complex64 = (0..rows).map(|i| psi[i] * abs2[(i, j)]).sum();
                checked_inv(psi_tilde[j].inv() - z * acc, z)
            })
            .collect()
    };
    // T̃_jj = ψ̃_j + z ψ̃_j² Σ_i |A_ij|² T_ii when T is diagonal.
    let tilde_from_diag_t = |dt: &[Complex64]| -> Vec<Complex64> {
        (0..cols)
            .map(|j| {
                let acc: Complex64 = (0..rows).map(|i| dt[i] * abs2[(i, j)]).sum();
                psi_tilde[j] + z * psi_tilde[j] * psi_tilde[j] * acc
            })
            .collect()
    };
    let t_from_diag_tilde = |dtt: &[Complex64]| -> Vec<Complex64> {
        let mut acc = vec![ZERO; rows];
        for j in 0..cols {
            for i in 0..rows {
                acc[i] += dtt[j] * abs2[(i, j)];
            }
        }
        (0..rows)
            .map(|i| psi[i] + z * psi[i] * psi[i] * acc[i])
            .collect()
    };

    match (s.columns_single, s.rows_single) {
        (true, true) => Ok((direct_t(psi_tilde)?, direct_t_tilde(psi)?)),
        (true, false) => {
            let dt = direct_t(psi_tilde)?;
            let dtt = tilde_from_diag_t(&dt);
            Ok((dt, dtt))
        }
        (false, true) => {
            let dtt = direct_t_tilde(psi)?;
            let dt = t_from_diag_tilde(&dtt);
            Ok((dt, dtt))
        }
        (false, false) => dense_diagonals(model, z, psi, psi_tilde),
    }
}

fn dense_diagonals(
    model: &ModelSpec,
    z: Complex64,
    psi: &[Complex64],
    psi_tilde: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let a = model.a();
    let a_adj = model.a_adjoint();
    let map = |e: Error| match e {
        Error::SingularMatrix { .. } => Error::SingularSystem(z),
        other => other,
    };
    // Invert on the smaller side, then T̃ = Ψ̃ + z Ψ̃ A^* T A Ψ̃ (or the mirror).
    if model.rows() <= model.cols() {
        let inv_psi: Vec<Complex64> = psi
            .iter()
            .map(|p| checked_inv(*p, z))
            .collect::<Result<_>>()?;
        let system = diag_matrix(&inv_psi) - weighted_product(a, psi_tilde, &a_adj) * z;
        let t = numerics::inverse(&system).map_err(map)?;
        let ta = &t * a;
        let dtt = (0..model.cols())
            .map(|j| {
                let q: Complex64 = a_adj
                    .row(j)
                    .iter()
                    .zip(ta.column(j).iter())
                    .map(|(x, y)| x * y)
                    .sum();
                psi_tilde[j] + z * psi_tilde[j] * psi_tilde[j] * q
            })
            .collect();
        Ok((t.diagonal().iter().copied().collect(), dtt))
    } else {
        let inv_psi_tilde: Vec<Complex64> = psi_tilde
            .iter()
            .map(|p| checked_inv(*p, z))
            .collect::<Result<_>>()?;
        let system = diag_matrix(&inv_psi_tilde) - weighted_product(&a_adj, psi, a) * z;
        let tt = numerics::inverse(&system).map_err(map)?;
        let tta = &tt * &a_adj;
        let dt = (0..model.rows())
            .map(|i| {
                let q: Complex64 = a
                    .row(i)
                    .iter()
                    .zip(tta.column(i).iter())
                    .map(|(x, y)| x * y)
                    .sum();
                psi[i] + z * psi[i] * psi[i] * q
            })
            .collect();
        Ok((dt, tt.diagonal().iter().copied().collect()))
    }
}

/// `Tr(T A Ψ̃ A^*)` at a converged point, computed without subtracting
/// nearly equal diagonals.
pub(crate) fn coupling_trace(model: &ModelSpec, fp: &FixedPoint) -> Result<Complex64> {
    let s = model.centering().structure();
    if s.is_zero {
        return Ok(ZERO);
    }
    let a = model.a();
    let z = fp.z;
    let (rows, cols) = a.shape();
    let weighted = |outer: &[Complex64], inner: &[Complex64], by_column: bool| -> Complex64 {
        let mut acc = ZERO;
        for j in 0..cols {
            for i in 0..rows {
                let w = a[(i, j)].norm_sqr();
                if w != 0.0 {
                    acc += if by_column {
                        outer[j] * inner[i]
                    } else {
                        outer[i] * inner[j]
                    } * w;
                }
            }
        }
        acc
    };
    if s.columns_single {
        // A^* T A is diagonal with entries Σ_i |A_ij|² T_ii.
        return Ok(weighted(&fp.psi_tilde, &fp.diag_t, true));
    }
    if s.rows_single {
        // Tr(T A Ψ̃ A^*) = Tr(Ψ A T̃ A^*).
        return Ok(weighted(&fp.psi, &fp.diag_t_tilde, false));
    }
    let a_adj = model.a_adjoint();
    let map = |e: Error| match e {
        Error::SingularMatrix { .. } => Error::SingularSystem(z),
        other => other,
    };
    if rows <= cols {
        let inv_psi: Vec<Complex64> = fp
            .psi
            .iter()
            .map(|p| checked_inv(*p, z))
            .collect::<Result<_>>()?;
        let t = numerics::inverse(
            &(diag_matrix(&inv_psi) - weighted_product(a, &fp.psi_tilde, &a_adj) * z),
        )
        .map_err(map)?;
        let ta = &t * a;
        Ok((0..cols)
            .map(|j| {
                fp.psi_tilde[j]
                    * a_adj
                        .row(j)
                        .iter()
                        .zip(ta.column(j).iter())
                        .map(|(x, y)| x * y)
                        .sum::<Complex64>()
            })
            .sum())
    } else {
        let inv_psi_tilde: Vec<Complex64> = fp
            .psi_tilde
            .iter()
            .map(|p| checked_inv(*p, z))
            .collect::<Result<_>>()?;
        let tt = numerics::inverse(
            &(diag_matrix(&inv_psi_tilde) - weighted_product(&a_adj, &fp.psi, a) * z),
        )
        .map_err(map)?;
        let tta = &tt * &a_adj;
        Ok((0..rows)
            .map(|i| {
                fp.psi[i]
                    * a.row(i)
                        .iter()
                        .zip(tta.column(i).iter())
                        .map(|(x, y)| x * y)
                        .sum::<Complex64>()
            })
            .sum())
    }
}

/// One application of the update map at `(ψ, ψ̃)` given the diagonals.
fn update_map(
    model: &ModelSpec,
    z: Complex64,
    diag_t: &[Complex64],
    diag_t_tilde: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let v = model.profile().variances();
    let (rows, cols) = v.shape();
    let n = cols as f64;
    let mut row_acc = vec![ZERO; rows];
    let mut psi_tilde = Vec::with_capacity(cols);
    for (j, &dtt) in diag_t_tilde.iter().enumerate().take(cols) {
        let col = v.column(j);
        let mut col_acc = ZERO;
        for i in 0..rows {
            let s2 = col[i];
            row_acc[i] += dtt * s2;
            col_acc += diag_t[i] * s2;
        }
        psi_tilde.push(-(z * (ONE + col_acc / n)).inv());
    }
    let psi = row_acc
        .iter()
        .map(|acc| -(z * (ONE + acc / n)).inv())
        .collect();
    (psi, psi_tilde)
}

fn sup_norm(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

fn all_finite(v: &[Complex64]) -> bool {
    v.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Relative defect of the fixed-point equations at `(ψ, ψ̃)`, i.e.
/// `max |ψ − F(ψ)| / (1 + |ψ|)` over all `N + n` components.
fn defect(
    psi: &[Complex64],
    psi_tilde: &[Complex64],
    mapped: &(Vec<Complex64>, Vec<Complex64>),
) -> f64 {
    psi.iter()
        .zip(&mapped.0)
        .chain(psi_tilde.iter().zip(&mapped.1))
        .map(|(p, f)| (p - f).norm() / (1.0 + p.norm()))
        .fold(0.0, f64::max)
}

/// Residual of the fixed-point equations at an arbitrary iterate.
pub fn fixed_point_residual(
    model: &ModelSpec,
    z: Complex64,
    psi: &[Complex64],
    psi_tilde: &[Complex64],
) -> Result<f64> {
    check_lengths(model, psi, psi_tilde)?;
    let (dt, dtt) = diagonals(model, z, psi, psi_tilde)?;
    Ok(defect(psi, psi_tilde, &update_map(model, z, &dt, &dtt)))
}

#[derive(Debug)]
enum StageFailure {
    /// Ran out of budget or stalled; `change` is the last relative step.
    Stalled {
        iterations: usize,
        change: f64,
    },
    Fatal(Error),
}

impl From<Error> for StageFailure {
    fn from(e: Error) -> Self {
        StageFailure::Fatal(e)
    }
}

/// Plain damped iteration from `init`. Gives up early when the observed
/// contraction rate cannot reach `tol` within `max_iter`.
fn iterate(
    model: &ModelSpec,
    z: Complex64,
    init: (&[Complex64], &[Complex64]),
    tol: f64,
    max_iter: usize,
    damping: f64,
) -> std::result::Result<FixedPoint, StageFailure> {
    const WINDOW: usize = 50;
    let mut psi = init.0.to_vec();
    let mut psi_tilde = init.1.to_vec();
    let mut history: Vec<f64> = Vec::new();
    let mut change = f64::INFINITY;
    for k in 1..=max_iter {
        let (dt, dtt) =
            diagonals(model, z, &psi, &psi_tilde).map_err(|_| StageFailure::Stalled {
                iterations: k,
                change,
            })?;
        let (mut new_psi, mut new_psi_tilde) = update_map(model, z, &dt, &dtt);
        if damping > 0.0 {
            for (new, old) in new_psi
                .iter_mut()
                .zip(&psi)
                .chain(new_psi_tilde.iter_mut().zip(&psi_tilde))
            {
                *new = *new * (1.0 - damping) + old * damping;
            }
        }
        if !(all_finite(&new_psi) && all_finite(&new_psi_tilde)) {
            return Err(StageFailure::Stalled {
                iterations: k,
                change,
            });
        }
        let diff = psi
            .iter()
            .zip(&new_psi)
            .chain(psi_tilde.iter().zip(&new_psi_tilde))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale = sup_norm(&new_psi).max(sup_norm(&new_psi_tilde));
        change = if scale > 0.0 { diff / scale } else { diff };
        psi = new_psi;
        psi_tilde = new_psi_tilde;

        if change < tol {
            let (dt, dtt) = diagonals(model, z, &psi, &psi_tilde)?;
            let residual = defect(&psi, &psi_tilde, &update_map(model, z, &dt, &dtt));
            return Ok(FixedPoint {
                z,
                psi,
                psi_tilde,
                diag_t: dt,
                diag_t_tilde: dtt,
                iterations: k,
                residual,
            });
        }

        history.push(change);
        if k % WINDOW == 0 && k >= 2 * WINDOW {
            let before = history[k - 1 - WINDOW];
            let rate = (change / before).powf(1.0 / WINDOW as f64);
            let hopeless = if rate >= 1.0 || !rate.is_finite() {
                true
            } else {
                let needed = (tol / change).ln() / rate.ln();
                k as f64 + needed > max_iter as f64
            };
            if hopeless {
                return Err(StageFailure::Stalled {
                    iterations: k,
                    change,
                });
            }
        }
    }
    Err(StageFailure::Stalled {
        iterations: max_iter,
        change,
    })
}

fn initial_iterate(model: &ModelSpec, z: Complex64) -> (Vec<Complex64>, Vec<Complex64>) {
    let start = -z.inv();
    (vec![start; model.rows()], vec![start; model.cols()])
}

/// Configured damping, then the fallback damping, from the same start.
fn damping_ladder(
    model: &ModelSpec,
    z: Complex64,
    init: (&[Complex64], &[Complex64]),
    config: &SolverConfig,
    first_damping: f64,
) -> std::result::Result<(FixedPoint, f64), StageFailure> {
    let mut last = match iterate(model, z, init, config.tol, config.max_iter, first_damping) {
        Ok(fp) => return Ok((fp, first_damping)),
        Err(StageFailure::Fatal(e)) => return Err(StageFailure::Fatal(e)),
        Err(stalled) => stalled,
    };
    if first_damping != FALLBACK_DAMPING {
        match iterate(
            model,
            z,
            init,
            config.tol,
            config.max_iter,
            FALLBACK_DAMPING,
        ) {
            Ok(fp) => return Ok((fp, FALLBACK_DAMPING)),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn stage_error(z: Complex64, failure: StageFailure) -> Error {
    match failure {
        StageFailure::Fatal(e) => e,
        StageFailure::Stalled { iterations, change } => Error::MaxIterExceeded {
            z,
            iterations,
            change,
        },
    }
}

/// Imaginary heights visited when descending towards `target`.
fn descent_heights(model: &ModelSpec, target: Complex64, config: &SolverConfig) -> Vec<f64> {
    let floor = if target.re < 0.0 {
        target.im.abs().max(0.5 * target.re.abs())
    } else {
        target.im.abs()
    };
    let mut h = config.start_height(model).max(2.0 * floor);
    let mut heights = Vec::new();
    while h > 2.0 * floor && heights.len() < 64 {
        heights.push(h);
        h *= 0.5;
    }
    heights
}

/// Solve at `target` by starting high above it and halving the imaginary
/// part, warm-starting each step from the previous one.
fn continuation(model: &ModelSpec, target: Complex64, config: &SolverConfig) -> Result<FixedPoint> {
    let sign = if target.im < 0.0 { -1.0 } else { 1.0 };
    let mut state = None::<(Vec<Complex64>, Vec<Complex64>)>;
    let mut damping = config.damping;
    let points = descent_heights(model, target, config)
        .into_iter()
        .map(|h| Complex64::new(target.re, sign * h))
        .chain(std::iter::once(target));
    for z in points {
        let init = state.clone().unwrap_or_else(|| initial_iterate(model, z));
        let (fp, used) = damping_ladder(model, z, (&init.0, &init.1), config, damping)
            .map_err(|f| stage_error(z, f))?;
        damping = used;
        if z == target {
            return Ok(fp);
        }
        state = Some((fp.psi, fp.psi_tilde));
    }
    unreachable!("descent always ends at the target")
}

/// Full fallback chain from a given start: configured damping, damping 0.5,
/// then continuation from far above the real axis.
fn solve_light_from(
    model: &ModelSpec,
    z: Complex64,
    init: (&[Complex64], &[Complex64]),
    config: &SolverConfig,
) -> Result<FixedPoint> {
    config.validate()?;
    check_spectral_point(z)?;
    check_lengths(model, init.0, init.1)?;
    match damping_ladder(model, z, init, config, config.damping) {
        Ok((fp, _)) => Ok(fp),
        Err(StageFailure::Fatal(e))
            if !e.is_convergence() && !matches!(e, Error::SingularSystem(_)) =>
        {
            Err(e)
        }
        Err(first) => continuation(model, z, config).map_err(|e| match e {
            e if e.is_convergence() || matches!(e, Error::SingularSystem(_)) => {
                stage_error(z, first)
            }
            other => other,
        }),
    }
}

/// Solve returning diagonals only.
pub fn solve_light(model: &ModelSpec, z: Complex64, config: &SolverConfig) -> Result<FixedPoint> {
    check_spectral_point(z)?;
    let init = initial_iterate(model, z);
    solve_light_from(model, z, (&init.0, &init.1), config)
}

/// Solve at `z` warm-started from a nearby solution when one is given,
/// falling back to the cold chain.
pub fn solve_near(
    model: &ModelSpec,
    z: Complex64,
    prev: Option<&FixedPoint>,
    config: &SolverConfig,
) -> Result<FixedPoint> {
    config.validate()?;
    check_spectral_point(z)?;
    if let Some(p) = prev {
        match damping_ladder(model, z, (&p.psi, &p.psi_tilde), config, config.damping) {
            Ok((fp, _)) => return Ok(fp),
            Err(StageFailure::Fatal(e))
                if !e.is_convergence() && !matches!(e, Error::SingularSystem(_)) =>
            {
                return Err(e)
            }
            Err(_) => {}
        }
    }
    solve_light(model, z, config)
}

pub fn solve(model: &ModelSpec, z: Complex64, config: &SolverConfig) -> Result<EquivalentSolution> {
    EquivalentSolution::from_fixed_point(model, solve_light(model, z, config)?)
}

/// Solve from a caller-supplied starting iterate.
pub fn solve_with_initial(
    model: &ModelSpec,
    z: Complex64,
    psi0: &[Complex64],
    psi_tilde0: &[Complex64],
    config: &SolverConfig,
) -> Result<EquivalentSolution> {
    let fp = solve_light_from(model, z, (psi0, psi_tilde0), config)?;
    EquivalentSolution::from_fixed_point(model, fp)
}

/// Whether a lone target sits close enough to the spectrum to warrant
/// starting with continuation.
fn near_spectrum(model: &ModelSpec, z: Complex64) -> bool {
    z.re > 0.0 && z.im.abs() < 0.1 * model.scale()
}

/// Solves the targets in order, warm-starting each from its predecessor.
pub fn solve_path_light(
    model: &ModelSpec,
    targets: &[Complex64],
    config: &SolverConfig,
) -> Result<Vec<FixedPoint>> {
    config.validate()?;
    for &z in targets {
        check_spectral_point(z)?;
    }
    let mut out: Vec<FixedPoint> = Vec::with_capacity(targets.len());
    let mut damping = config.damping;
    for &z in targets {
        let fp = match out.last() {
            None if targets.len() == 1 && near_spectrum(model, z) => {
                continuation(model, z, config)?
            }
            None => solve_light(model, z, config)?,
            Some(prev) => {
                let init = (prev.psi.as_slice(), prev.psi_tilde.as_slice());
                match damping_ladder(model, z, init, config, damping) {
                    Ok((fp, used)) => {
                        damping = used;
                        fp
                    }
                    Err(StageFailure::Fatal(e)) if !e.is_convergence() => return Err(e),
                    Err(_) => solve_light(model, z, config)?,
                }
            }
        };
        out.push(fp);
    }
    Ok(out)
}

pub fn solve_path(
    model: &ModelSpec,
    targets: &[Complex64],
    config: &SolverConfig,
) -> Result<Vec<EquivalentSolution>> {
    solve_path_light(model, targets, config)?
        .into_iter()
        .map(|fp| EquivalentSolution::from_fixed_point(model, fp))
        .collect()
}

/// Result of the two-equation reduction for separable profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableSolution {
    pub delta: Complex64,
    pub delta_tilde: Complex64,
    pub solution: EquivalentSolution,
}

/// Diagonals of `T`, `T̃` and, with centering, the full matrices.
type SeparableMatrices = (Vec<Complex64>, Vec<Complex64>, Option<(CMatrix, CMatrix)>);

/// `T` and `T̃` of the separable reduction at given `(δ, δ̃)`.
fn separable_matrices(
    model: &ModelSpec,
    z: Complex64,
    d: &[f64],
    d_tilde: &[f64],
    delta: Complex64,
    delta_tilde: Complex64,
) -> Result<SeparableMatrices> {
    // (I + δ̃ D) and (I + δ D̃)
    let row_factor: Vec<Complex64> = d.iter().map(|&di| ONE + delta_tilde * di).collect();
    let col_factor: Vec<Complex64> = d_tilde.iter().map(|&dj| ONE + delta * dj).collect();
    if model.centering().structure().is_zero {
        let dt = row_factor
            .iter()
            .map(|f| checked_inv(-z * f, z))
            .collect::<Result<Vec<_>>>()?;
        let dtt = col_factor
            .iter()
            .map(|f| checked_inv(-z * f, z))
            .collect::<Result<Vec<_>>>()?;
        return Ok((dt, dtt, None));
    }
    let a = model.a();
    let a_adj = model.a_adjoint();
    let inv_col: Vec<Complex64> = col_factor
        .iter()
        .map(|f| checked_inv(*f, z))
        .collect::<Result<_>>()?;
    let inv_row: Vec<Complex64> = row_factor
        .iter()
        .map(|f| checked_inv(*f, z))
        .collect::<Result<_>>()?;
    let neg_z_row: Vec<Complex64> = row_factor.iter().map(|f| -z * f).collect();
    let neg_z_col: Vec<Complex64> = col_factor.iter().map(|f| -z * f).collect();
    // −z(I + δ̃D) + A (I + δD̃)⁻¹ A^*
    let system = diag_matrix(&neg_z_row) + weighted_product(a, &inv_col, &a_adj);
    // −z(I + δD̃) + A^* (I + δ̃D)⁻¹ A
    let system_tilde = diag_matrix(&neg_z_col) + weighted_product(&a_adj, &inv_row, a);
    let map = |e: Error| match e {
        Error::SingularMatrix { .. } => Error::SingularSystem(z),
        other => other,
    };
    let t = numerics::inverse(&system).map_err(map)?;
    let t_tilde = numerics::inverse(&system_tilde).map_err(map)?;
    let dt = t.diagonal().iter().copied().collect();
    let dtt = t_tilde.diagonal().iter().copied().collect();
    Ok((dt, dtt, Some((t, t_tilde))))
}

fn separable_iterate(
    model: &ModelSpec,
    z: Complex64,
    d: &[f64],
    d_tilde: &[f64],
    config: &SolverConfig,
    damping: f64,
) -> Result<Option<(Complex64, Complex64, usize)>> {
    let n = model.cols() as f64;
    let start = -z.inv();
    let mut delta = start * d.iter().sum::<f64>() / n;
    let mut delta_tilde = start * d_tilde.iter().sum::<f64>() / n;
    for k in 1..=config.max_iter {
        let (dt, dtt, _) = separable_matrices(model, z, d, d_tilde, delta, delta_tilde)?;
        let mut new_delta: Complex64 =
            dt.iter().zip(d).map(|(t, &di)| t * di).sum::<Complex64>() / n;
        let mut new_delta_tilde: Complex64 = dtt
            .iter()
            .zip(d_tilde)
            .map(|(t, &dj)| t * dj)
            .sum::<Complex64>()
            / n;
        if damping > 0.0 {
            new_delta = new_delta * (1.0 - damping) + delta * damping;
            new_delta_tilde = new_delta_tilde * (1.0 - damping) + delta_tilde * damping;
        }
        if !all_finite(&[new_delta, new_delta_tilde]) {
            return Ok(None);
        }
        let diff = (new_delta - delta)
            .norm()
            .max((new_delta_tilde - delta_tilde).norm());
        let scale = new_delta.norm().max(new_delta_tilde.norm());
        delta = new_delta;
        delta_tilde = new_delta_tilde;
        if scale == 0.0 || diff / scale < config.tol {
            return Ok(Some((delta, delta_tilde, k)));
        }
    }
    Ok(None)
}

/// Solves the two scalar equations for `(δ, δ̃)` and expands them into the
/// full solution with `Ψ = −(1/z)(I + δ̃D)⁻¹`, `Ψ̃ = −(1/z)(I + δD̃)⁻¹`.
pub fn solve_separable(
    model: &ModelSpec,
    z: Complex64,
    config: &SolverConfig,
) -> Result<SeparableSolution> {
    config.validate()?;
    check_spectral_point(z)?;
    let factors = model.profile().separable().ok_or(Error::NotSeparable)?;
    let (d, d_tilde) = (&factors.d, &factors.d_tilde);
    let mut found = separable_iterate(model, z, d, d_tilde, config, config.damping)?;
    if found.is_none() && config.damping != FALLBACK_DAMPING {
        found = separable_iterate(model, z, d, d_tilde, config, FALLBACK_DAMPING)?;
    }
    let (delta, delta_tilde, iterations) = found.ok_or(Error::MaxIterExceeded {
        z,
        iterations: config.max_iter,
        change: f64::NAN,
    })?;
    let psi: Vec<Complex64> = d
        .iter()
        .map(|&di| -(z * (ONE + delta_tilde * di)).inv())
        .collect();
    let psi_tilde: Vec<Complex64> = d_tilde
        .iter()
        .map(|&dj| -(z * (ONE + delta * dj)).inv())
        .collect();
    let (t, t_tilde) = match separable_matrices(model, z, d, d_tilde, delta, delta_tilde)? {
        (_, _, Some(full)) => full,
        (dt, dtt, None) => (diag_matrix(&dt), diag_matrix(&dtt)),
    };
    let residual = fixed_point_residual(model, z, &psi, &psi_tilde)?;
    Ok(SeparableSolution {
        delta,
        delta_tilde,
        solution: EquivalentSolution {
            z,
            psi,
            psi_tilde,
            t,
            t_tilde,
            iterations,
            residual,
        },
    })
}

/// Contraction factor of the update map on the sup-metric,
/// `E(z) = |z|² d_n σ_max² / (Im z)⁴ · {|z| (1 + d_n σ_max² / Im z)² + a_max²}`.
/// The iteration provably contracts wherever `E(z) < 1`.
pub fn contraction_bound(model: &ModelSpec, z: Complex64) -> Result<f64> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidSpectralPoint(z));
    }
    let dn = model.aspect();
    let s2 = model.sigma_max().powi(2);
    let a2 = model.a_max().powi(2);
    let modz = z.norm();
    let y = z.im;
    Ok(modz * modz * dn * s2 / y.powi(4) * (modz * (1.0 + dn * s2 / y).powi(2) + a2))
}

/// `‖T A Ψ̃ − Ψ A T̃‖_F`, zero at an exact solution.
pub fn push_through_defect(model: &ModelSpec, sol: &EquivalentSolution) -> f64 {
    let a = model.a();
    let lhs = &sol.t * a * diag_matrix(&sol.psi_tilde);
    let rhs = diag_matrix(&sol.psi) * a * &sol.t_tilde;
    numerics::frobenius(&(lhs - rhs))
}

/// Violations of the analytic properties every solution must satisfy.
/// Empty when all checks pass.
pub fn invariant_violations(sol: &EquivalentSolution) -> Result<Vec<String>> {
    const PSI_TOL: f64 = 1e-12;
    const MATRIX_TOL: f64 = 1e-10;
    let z = sol.z;
    let mut out = Vec::new();
    let psis = sol
        .psi
        .iter()
        .map(|p| ("psi", p))
        .chain(sol.psi_tilde.iter().map(|p| ("psi_tilde", p)));
    if z.im > 0.0 {
        let bound = 1.0 / z.im;
        for (k, (name, p)) in psis.enumerate() {
            if p.im < -PSI_TOL {
                out.push(format!("Im {name}[{k}] = {:e}", p.im));
            }
            if (z * p).im < -PSI_TOL {
                out.push(format!("Im(z {name}[{k}]) = {:e}", (z * p).im));
            }
            if p.norm() > bound + PSI_TOL {
                out.push(format!("|{name}[{k}]| = {} > 1/Im z = {bound}", p.norm()));
            }
        }
        for (name, m) in [("T", &sol.t), ("T_tilde", &sol.t_tilde)] {
            let norm = numerics::spectral_norm(m)?;
            if norm > bound * (1.0 + MATRIX_TOL) {
                out.push(format!("||{name}||_sp = {norm} > {bound}"));
            }
            for (label, mat) in [("Im", m.clone()), ("Im z", m * z)] {
                let im = HermitianMatrix::new((&mat - mat.adjoint()) * Complex64::new(0.0, -0.5))?;
                let lowest = numerics::hermitian_eigenvalues(&im)?
                    .first()
                    .copied()
                    .unwrap_or(0.0);
                if lowest < -MATRIX_TOL {
                    out.push(format!("{label} {name} has eigenvalue {lowest:e}"));
                }
            }
        }
    } else if z.im == 0.0 && z.re < 0.0 {
        let bound = 1.0 / z.norm();
        for (k, (name, p)) in psis.enumerate() {
            if !(p.re > 0.0) || p.im.abs() > PSI_TOL * p.re.max(1.0) {
                out.push(format!("{name}[{k}] = {p} is not positive"));
            }
        }
        for (name, m) in [("T", &sol.t), ("T_tilde", &sol.t_tilde)] {
            let norm = numerics::spectral_norm(m)?;
            if norm > bound + MATRIX_TOL {
                out.push(format!("||{name}||_sp = {norm} > 1/|z| = {bound}"));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, dx_model, separable_model, BlockVariant, ScalarField};
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Positive root of ψ² + ψ − 1 = 0.
    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn random_model(rows: usize, cols: usize, seed: u64) -> ModelSpec {
        let mut r = lcg(seed);
        let profile = DMatrix::from_fn(rows, cols, |_, _| 0.2 + 1.3 * r());
        let a = CMatrix::from_fn(rows, cols, |_, _| {
            c((r() - 0.5) / (cols as f64).sqrt(), 0.0)
        });
        build_model(profile, a, ScalarField::Real).unwrap()
    }

    fn mp(n: usize) -> ModelSpec {
        build_model(
            DMatrix::from_element(n, n, 1.0),
            CMatrix::zeros(n, n),
            ScalarField::Real,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_solution_is_resolvent() {
        let mut r = lcg(3);
        let a = CMatrix::from_fn(3, 5, |_, _| c(r() - 0.5, 0.0));
        let m = build_model(DMatrix::zeros(3, 5), a.clone(), ScalarField::Real).unwrap();
        let z = c(-1.0, 0.0);
        let sol = solve(&m, z, &SolverConfig::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.psi.iter().all(|p| (p - c(1.0, 0.0)).norm() < 1e-15));
        let expected =
            numerics::inverse(&(&a * a.transpose() - CMatrix::identity(3, 3) * z)).unwrap();
        assert!(numerics::frobenius(&(sol.t - expected)) < 1e-13);
    }

    #[test]
    fn scalar_noiseless_example() {
        let mut a = CMatrix::zeros(1, 1);
        a[(0, 0)] = c(2.0, 0.0);
        let m = build_model(DMatrix::zeros(1, 1), a, ScalarField::Real).unwrap();
        let (t, _) =
            assemble_equivalents(&m, c(-1.0, 0.0), &[c(1.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        assert!((t[(0, 0)] - c(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn constant_profile_matches_quadratic_root() {
        let m = mp(8);
        let sol = solve(&m, c(-1.0, 0.0), &SolverConfig::default()).unwrap();
        for p in sol.psi.iter().chain(&sol.psi_tilde) {
            assert!((p - c(golden(), 0.0)).norm() < 1e-11);
        }
        assert!(sol.residual <= 10.0 * 1e-12);
    }

    #[test]
    fn positive_real_axis_is_rejected() {
        let m = mp(2);
        assert!(matches!(
            solve(&m, c(0.5, 0.0), &SolverConfig::default()),
            Err(Error::InvalidSpectralPoint(_))
        ));
        assert!(matches!(
            solve(&m, c(0.0, 0.0), &SolverConfig::default()),
            Err(Error::InvalidSpectralPoint(_))
        ));
        assert!(
            assemble_equivalents(&m, c(1.0, 0.0), &[c(1.0, 0.0); 2], &[c(1.0, 0.0); 2]).is_err()
        );
    }

    #[test]
    fn bad_config_is_rejected() {
        let m = mp(2);
        for cfg in [
            SolverConfig {
                tol: 0.0,
                ..Default::default()
            },
            SolverConfig {
                damping: 1.0,
                ..Default::default()
            },
            SolverConfig {
                max_iter: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                solve(&m, c(-1.0, 0.0), &cfg),
                Err(Error::Precondition(_))
            ));
        }
    }

    #[test]
    fn structured_diagonals_match_dense_inverse() {
        let z = c(0.7, 0.4);
        // Columns single, rows single, one of each, and dense.
        let mut shapes: Vec<CMatrix> = Vec::new();
        let mut a = CMatrix::zeros(4, 6);
        a[(0, 1)] = c(0.8, 0.0);
        a[(2, 4)] = c(-0.3, 0.0);
        shapes.push(a.clone());
        a[(0, 3)] = c(0.5, 0.0);
        shapes.push(a.clone());
        shapes.push(a.transpose().resize(4, 6, c(0.0, 0.0)));
        let mut r = lcg(17);
        shapes.push(CMatrix::from_fn(4, 6, |_, _| c(r() - 0.5, 0.0)));
        shapes.push(CMatrix::from_fn(6, 4, |_, _| c(r() - 0.5, 0.0)));
        for a in shapes {
            let (rows, cols) = a.shape();
            let m = build_model(
                DMatrix::from_fn(rows, cols, |i, j| 0.5 + 0.1 * (i + j) as f64),
                a,
                ScalarField::Real,
            )
            .unwrap();
            let psi: Vec<Complex64> = (0..rows).map(|i| c(0.3 + 0.01 * i as f64, 0.2)).collect();
            let psi_t: Vec<Complex64> = (0..cols).map(|j| c(0.4, 0.1 + 0.02 * j as f64)).collect();
            let (dt, dtt) = diagonals(&m, z, &psi, &psi_t).unwrap();
            let (t, tt) = assemble_equivalents(&m, z, &psi, &psi_t).unwrap();
            for i in 0..rows {
                assert!((dt[i] - t[(i, i)]).norm() < 1e-12);
            }
            for j in 0..cols {
                assert!((dtt[j] - tt[(j, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_path_reproduces_real_model() {
        let m = random_model(5, 7, 9);
        let z = c(-0.3, 0.8);
        let real = solve(&m, z, &SolverConfig::default()).unwrap();
        let cplx = solve(&m.as_complex(), z, &SolverConfig::default()).unwrap();
        for (a, b) in real
            .psi
            .iter()
            .zip(&cplx.psi)
            .chain(real.psi_tilde.iter().zip(&cplx.psi_tilde))
        {
            assert!((a - b).norm() <= 1e-14);
        }
    }

    #[test]
    fn push_through_identity_holds() {
        let m = random_model(6, 9, 4);
        for z in [c(-1.0, 0.0), c(1.0, 1.0), c(3.0, 0.2)] {
            let sol = solve(&m, z, &SolverConfig::default()).unwrap();
            assert!(push_through_defect(&m, &sol) < 1e-10);
        }
    }

    #[test]
    fn residual_postcondition() {
        let m = random_model(7, 5, 12);
        let cfg = SolverConfig::default();
        for z in [c(-2.0, 0.0), c(0.5, 0.5), c(2.0, 0.05), c(-1.0, -1.0)] {
            let sol = solve(&m, z, &cfg).unwrap();
            assert!(sol.residual <= 10.0 * cfg.tol, "z = {z}: {}", sol.residual);
            let r = fixed_point_residual(&m, z, &sol.psi, &sol.psi_tilde).unwrap();
            assert!(r <= 10.0 * cfg.tol);
        }
    }

    #[test]
    fn perturbed_starts_agree() {
        let m = random_model(6, 8, 21);
        let cfg = SolverConfig::default();
        let z = c(1.0, 0.3);
        let base = solve(&m, z, &cfg).unwrap();
        for scale in [1.0 - 1e-3, 1.0 + 1e-3] {
            let p0 = vec![-z.inv() * scale; 6];
            let q0 = vec![-z.inv() * scale; 8];
            let other = solve_with_initial(&m, z, &p0, &q0, &cfg).unwrap();
            let gap = base
                .psi
                .iter()
                .zip(&other.psi)
                .chain(base.psi_tilde.iter().zip(&other.psi_tilde))
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(gap <= 100.0 * cfg.tol);
        }
    }

    #[test]
    fn herglotz_invariants_on_random_points() {
        let m = random_model(5, 8, 33);
        let mut r = lcg(5);
        for _ in 0..30 {
            let z = c(-3.0 + 9.0 * r(), 0.05 + 3.0 * r());
            let sol = solve(&m, z, &SolverConfig::default()).unwrap();
            let v = invariant_violations(&sol).unwrap();
            assert!(v.is_empty(), "z = {z}: {v:?}");
        }
        let sol = solve(&m, c(-0.7, 0.0), &SolverConfig::default()).unwrap();
        assert!(invariant_violations(&sol).unwrap().is_empty());
    }

    #[test]
    fn path_single_target_matches_solve() {
        let m = random_model(4, 6, 8);
        let cfg = SolverConfig::default();
        let z = c(-1.0, 0.0);
        let direct = solve(&m, z, &cfg).unwrap();
        let path = solve_path(&m, &[z], &cfg).unwrap();
        assert_eq!(path.len(), 1);
        assert!((path[0].m() - direct.m()).norm() < 1e-11);
        assert!(solve_path(&m, &[], &cfg).unwrap().is_empty());
    }

    #[test]
    fn path_descent_matches_direct_solve() {
        let m = mp(16);
        let z = c(2.0, 1e-6);
        let path = solve_path(&m, &[z], &SolverConfig::default()).unwrap();
        let tight = SolverConfig {
            tol: 1e-14,
            max_iter: 200_000,
            ..Default::default()
        };
        let direct = solve(&m, z, &tight).unwrap();
        assert!((path[0].m() - direct.m()).norm() < 1e-8);
    }

    #[test]
    fn path_rejects_bad_targets() {
        let m = mp(2);
        assert!(solve_path(&m, &[c(-1.0, 0.0), c(1.0, 0.0)], &SolverConfig::default()).is_err());
    }

    #[test]
    fn warm_started_path_matches_cold_solves() {
        let m = random_model(5, 5, 41);
        let cfg = SolverConfig::default();
        let targets: Vec<Complex64> = (0..12).map(|k| c(0.25 * k as f64, 0.05)).collect();
        let path = solve_path_light(&m, &targets, &cfg).unwrap();
        for (z, fp) in targets.iter().zip(&path) {
            let cold = solve_light(&m, *z, &cfg).unwrap();
            assert!((fp.m() - cold.m()).norm() < 1e-10, "z = {z}");
        }
    }

    #[test]
    fn separable_unit_profile() {
        let m = separable_model(
            &[1.0; 6],
            &[1.0; 6],
            CMatrix::zeros(6, 6),
            ScalarField::Real,
        )
        .unwrap();
        let s = solve_separable(&m, c(-1.0, 0.0), &SolverConfig::default()).unwrap();
        assert!((s.delta - c(golden(), 0.0)).norm() < 1e-11);
        assert!((s.delta_tilde - c(golden(), 0.0)).norm() < 1e-11);
    }

    #[test]
    fn separable_matches_full_solver() {
        let m = separable_model(
            &[1.0, 4.0],
            &[1.0; 4],
            CMatrix::zeros(2, 4),
            ScalarField::Real,
        )
        .unwrap();
        let z = c(0.0, 1.0);
        let cfg = SolverConfig::default();
        let sep = solve_separable(&m, z, &cfg).unwrap().solution;
        let full = solve(&m, z, &cfg).unwrap();
        for (a, b) in sep
            .psi
            .iter()
            .zip(&full.psi)
            .chain(sep.psi_tilde.iter().zip(&full.psi_tilde))
        {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn separable_with_centering_matches_full_solver() {
        let mut r = lcg(77);
        let d: Vec<f64> = (0..5).map(|_| 0.2 + r()).collect();
        let dt: Vec<f64> = (0..7).map(|_| 0.2 + r()).collect();
        let a = CMatrix::from_fn(5, 7, |_, _| c(r() - 0.5, 0.0));
        let m = separable_model(&d, &dt, a, ScalarField::Real).unwrap();
        let cfg = SolverConfig::default();
        for z in [c(-1.0, 0.0), c(1.5, 0.5)] {
            let sep = solve_separable(&m, z, &cfg).unwrap().solution;
            let full = solve(&m, z, &cfg).unwrap();
            let gap = sep
                .psi
                .iter()
                .zip(&full.psi)
                .chain(sep.psi_tilde.iter().zip(&full.psi_tilde))
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(gap < 1e-9, "z = {z}: {gap:e}");
            assert!(numerics::frobenius(&(sep.t - full.t)) < 1e-9);
        }
    }

    #[test]
    fn separable_positive_at_negative_real_point() {
        let m = dx_model(&[0.5, 1.0, 2.0], 5).unwrap();
        let s = solve_separable(&m, c(-0.3, 0.0), &SolverConfig::default()).unwrap();
        assert!(s.delta.re > 0.0 && s.delta_tilde.re > 0.0);
        assert!(s.delta.im.abs() < 1e-15);
    }

    #[test]
    fn non_separable_is_rejected() {
        assert!(matches!(
            solve_separable(
                &random_model(2, 3, 1),
                c(-1.0, 0.0),
                &SolverConfig::default()
            ),
            Err(Error::NotSeparable)
        ));
    }

    #[test]
    fn contraction_bound_examples() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = c(1.0, 0.0);
        let m = build_model(DMatrix::from_element(2, 2, 1.0), a, ScalarField::Real).unwrap();
        assert_eq!(m.aspect(), 1.0);
        let e = contraction_bound(&m, c(0.0, 10.0)).unwrap();
        assert!((e - 0.131).abs() < 1e-12);

        let zero = build_model(
            DMatrix::zeros(2, 2),
            CMatrix::zeros(2, 2),
            ScalarField::Real,
        )
        .unwrap();
        assert_eq!(contraction_bound(&zero, c(3.0, 0.1)).unwrap(), 0.0);

        let values: Vec<f64> = (1..40)
            .map(|k| contraction_bound(&m, c(0.0, 0.25 * k as f64)).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
        assert!(contraction_bound(&m, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn converges_where_contraction_is_proven() {
        let m = random_model(4, 4, 2);
        let z = c(0.0, 200.0);
        assert!(contraction_bound(&m, z).unwrap() < 1.0);
        let sol = solve(
            &m,
            z,
            &SolverConfig {
                damping: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sol.iterations < 50);
    }

    #[test]
    fn block_model_solves_with_structured_path() {
        let m = crate::model::block_example_model(8, BlockVariant::Upsilon).unwrap();
        let sol = solve(&m, c(-1.0, 0.0), &SolverConfig::default()).unwrap();
        assert!(invariant_violations(&sol).unwrap().is_empty());
    }
}
