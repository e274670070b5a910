//! Stieltjes transform of the deterministic equivalent, density recovery by
//! the inversion formula, and consistency checks.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ModelOrigin, ModelSpec};
use crate::quadrature;
use crate::solver::{self, EquivalentSolution, FixedPoint, SolverConfig};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `((1/N) Tr T(z), (1/n) Tr T̃(z))`.
pub fn equivalent_stieltjes(
    model: &ModelSpec,
    z: Complex64,
    config: &SolverConfig,
) -> Result<(Complex64, Complex64)> {
    let fp = solver::solve_light(model, z, config)?;
    Ok((fp.m(), fp.m_tilde()))
}

/// `−z (1 + z m(z))`, evaluated without the cancellation of the naive form.
///
/// With `K = diag((1/n) Σ_j σ_ij² T̃_jj) + A Ψ̃ A^*` one has `z T = −(I + K)⁻¹`,
/// so `1 + z m = −(z/N) Tr(T K)`.
pub(crate) fn moment_transform(model: &ModelSpec, fp: &FixedPoint) -> Result<Complex64> {
    let z = fp.z;
    let v = model.profile().variances();
    let n = model.cols() as f64;
    let mut acc = solver::coupling_trace(model, fp)?;
    for i in 0..model.rows() {
        let d: Complex64 = (0..model.cols())
            .map(|j| fp.diag_t_tilde[j] * v[(i, j)])
            .sum::<Complex64>()
            / n;
        acc += fp.diag_t[i] * d;
    }
    Ok(z * z * acc / model.rows() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalMass {
    pub a: f64,
    pub b: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub eta: f64,
    /// `(λ, ρ̂(λ))` pairs.
    pub points: Vec<(f64, f64)>,
    pub masses: Option<Vec<IntervalMass>>,
}

impl DensityEstimate {
    /// Trapezoid integral of `ρ̂` over the grid.
    pub fn grid_mass(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
            .sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .from_writer(Vec::new());
        w.write_record(["lambda", "density"])?;
        for (l, d) in &self.points {
            w.write_record([l.to_string(), d.to_string()])?;
        }
        if let Some(masses) = &self.masses {
            w.write_record(["interval", "a", "b", "mass"])?;
            for m in masses {
                w.write_record([
                    "interval".to_string(),
                    m.a.to_string(),
                    m.b.to_string(),
                    m.mass.to_string(),
                ])?;
            }
        }
        csv_string(w)
    }
}

pub(crate) fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `max(1e−3 (σ_max² + a_max² + 1), 2 h)` with `h` the widest grid step.
pub fn default_eta(model: &ModelSpec, grid: &[f64]) -> f64 {
    let spacing = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    (1e-3 * model.scale()).max(2.0 * spacing)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Precondition("density grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Precondition(
            "density grid must hold finite values >= 0".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "density grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// `ρ̂(λ) = (1/π) Im m(λ + iη)` along the grid, plus interval masses of `ρ̂`
/// when requested. `eta = None` selects [`default_eta`].
pub fn density_estimate(
    model: &ModelSpec,
    grid: &[f64],
    eta: Option<f64>,
    config: &SolverConfig,
    intervals: Option<&[(f64, f64)]>,
) -> Result<DensityEstimate> {
    check_grid(grid)?;
    let eta = eta.unwrap_or_else(|| default_eta(model, grid));
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Precondition(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let targets: Vec<Complex64> = grid.iter().map(|&l| Complex64::new(l, eta)).collect();
    let path = solver::solve_path_light(model, &targets, config)?;
    let points = grid
        .iter()
        .zip(&path)
        .map(|(&l, fp)| (l, fp.m().im / PI))
        .collect();
    let masses = intervals
        .map(|ivs| {
            ivs.iter()
                .map(|&(a, b)| interval_mass(model, a, b, eta, config))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    Ok(DensityEstimate {
        eta,
        points,
        masses,
    })
}

/// `∫_a^b (1/π) Im m(λ + iη) dλ` by adaptive Gauss–Kronrod.
pub fn interval_mass(
    model: &ModelSpec,
    a: f64,
    b: f64,
    eta: f64,
    config: &SolverConfig,
) -> Result<IntervalMass> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Precondition(format!(
            "interval [{a}, {b}] is empty or not finite"
        )));
    }
    let mut prev: Option<FixedPoint> = None;
    let mass = quadrature::integrate(
        |l| {
            let fp = solver::solve_near(model, Complex64::new(l, eta), prev.as_ref(), config)?;
            let value = fp.m().im / PI;
            prev = Some(fp);
            Ok(value)
        },
        a,
        b,
        1e-9,
        1e-8,
        4000,
    )?;
    Ok(IntervalMass { a, b, mass })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentReport {
    pub analytic: f64,
    pub numeric: f64,
    pub y_used: f64,
    pub relative_gap: f64,
}

/// Compares the analytic first moment with `Re[−iy (iy m(iy) + 1)]`.
pub fn moment_consistency(
    model: &ModelSpec,
    y: f64,
    config: &SolverConfig,
) -> Result<MomentReport> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Precondition(format!("y must be positive, got {y}")));
    }
    let fp = solver::solve_light(model, Complex64::new(0.0, y), config)?;
    let numeric = moment_transform(model, &fp)?.re;
    let analytic = model.first_moment();
    let relative_gap = if analytic == 0.0 {
        numeric.abs()
    } else {
        (numeric - analytic).abs() / analytic.abs()
    };
    Ok(MomentReport {
        analytic,
        numeric,
        y_used: y,
        relative_gap,
    })
}

/// Root of `c z f² − (1 − c − z) f + 1 = 0` on the Stieltjes branch.
pub fn mp_reference_stieltjes(c: f64, z: Complex64) -> Result<Complex64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Precondition(format!(
            "ratio must be positive, got {c}"
        )));
    }
    solver::check_spectral_point(z)?;
    if z.im < 0.0 {
        return Ok(mp_reference_stieltjes(c, z.conj())?.conj());
    }
    let a = z * c;
    let b = -(ONE * (1.0 - c) - z);
    let root = (b * b - a * 4.0).sqrt();
    let s = if (b.conj() * root).re >= 0.0 {
        1.0
    } else {
        -1.0
    };
    let q = -(b + root * s) / 2.0;
    let candidates = [q / a, q.inv()];
    let score = |f: &Complex64| -> f64 {
        if z.im == 0.0 {
            f.re
        } else {
            f.im.min((z * f).im + f.im.abs())
        }
    };
    let best = if score(&candidates[0]) >= score(&candidates[1]) {
        candidates[0]
    } else {
        candidates[1]
    };
    Ok(if z.im == 0.0 {
        Complex64::new(best.re, 0.0)
    } else {
        best
    })
}

/// Residual of `(1/n) Σ ψ̃ = c_n (1/N) Σ ψ + (1 − c_n)(−1/z)`, and for
/// models built by [`crate::model::dx_model`] also of the scalar equation
/// satisfied by `f_n = (1/N) Tr T`. The larger of the two is returned.
pub fn companion_identity_residual(solution: &EquivalentSolution, model: &ModelSpec) -> f64 {
    let c = model.ratio();
    let z = solution.z;
    let lhs = mean(&solution.psi_tilde);
    let rhs = mean(&solution.psi) * c + (1.0 - c) * (-z.inv());
    let companion = (lhs - rhs).norm();
    companion.max(dx_equation_defect(solution, model).unwrap_or(0.0))
}

/// `|f_n − (1/N) Σ_i 1/(λ_i² (1 − c_n − c_n z f_n) − z)|` for ΔX models.
pub fn dx_equation_defect(solution: &EquivalentSolution, model: &ModelSpec) -> Option<f64> {
    let ModelOrigin::DeltaX { lambdas } = model.origin() else {
        return None;
    };
    let c = model.ratio();
    let z = solution.z;
    let f = solution.m();
    let inner = ONE * (1.0 - c) - z * f * c;
    let rhs = lambdas
        .iter()
        .map(|l| (inner * (l * l) - z).inv())
        .sum::<Complex64>()
        / lambdas.len() as f64;
    Some((f - rhs).norm())
}

fn mean(v: &[Complex64]) -> Complex64 {
    v.iter().sum::<Complex64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, dx_model, ScalarField};
    use crate::numerics::CMatrix;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mp(rows: usize, cols: usize) -> ModelSpec {
        build_model(
            DMatrix::from_element(rows, cols, 1.0),
            CMatrix::zeros(rows, cols),
            ScalarField::Real,
        )
        .unwrap()
    }

    fn zero() -> ModelSpec {
        build_model(
            DMatrix::zeros(2, 2),
            CMatrix::zeros(2, 2),
            ScalarField::Real,
        )
        .unwrap()
    }

    fn scalar_two() -> ModelSpec {
        let mut a = CMatrix::zeros(1, 1);
        a[(0, 0)] = c(2.0, 0.0);
        build_model(DMatrix::zeros(1, 1), a, ScalarField::Real).unwrap()
    }

    /// Marčenko–Pastur density for ratio 1.
    fn mp_density(l: f64) -> f64 {
        ((4.0 - l) / l).sqrt() / (2.0 * PI)
    }

    #[test]
    fn stieltjes_examples() {
        let cfg = SolverConfig::default();
        let (m, _) = equivalent_stieltjes(&zero(), c(0.0, 1.0), &cfg).unwrap();
        assert!((m - c(0.0, 1.0)).norm() < 1e-15);
        let (m, _) = equivalent_stieltjes(&mp(64, 64), c(-1.0, 0.0), &cfg).unwrap();
        assert!((m.re - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-10);
        let (m, _) = equivalent_stieltjes(&scalar_two(), c(-1.0, 0.0), &cfg).unwrap();
        assert!((m - c(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mp_reference_branches() {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        assert!((mp_reference_stieltjes(1.0, c(-1.0, 0.0)).unwrap() - c(g, 0.0)).norm() < 1e-15);
        let f = mp_reference_stieltjes(1.0, c(0.0, 1.0)).unwrap();
        assert!(f.im > 0.0);
        let z = c(0.0, 1.0);
        assert!((z * f * f + z * f + 1.0).norm() < 1e-14);
        let f = mp_reference_stieltjes(1e-9, c(-1.0, 0.0)).unwrap();
        assert!((f.re - 0.5).abs() < 1e-8);
        assert!(mp_reference_stieltjes(1.0, c(2.0, 0.0)).is_err());
        assert!(mp_reference_stieltjes(0.0, c(-1.0, 0.0)).is_err());
        let f = mp_reference_stieltjes(0.5, c(1.0, -0.3)).unwrap();
        assert!(f.im < 0.0);
    }

    #[test]
    fn mp_reference_matches_solver_off_square() {
        let cfg = SolverConfig::default();
        let m = mp(30, 60);
        for z in [c(-1.0, 0.0), c(1.0, 0.5), c(0.3, 2.0), c(4.0, 0.1)] {
            let (f, _) = equivalent_stieltjes(&m, z, &cfg).unwrap();
            assert!(
                (f - mp_reference_stieltjes(0.5, z).unwrap()).norm() < 1e-10,
                "z = {z}"
            );
        }
    }

    #[test]
    fn density_examples() {
        let cfg = SolverConfig::default();
        let d = density_estimate(&zero(), &[1.0], Some(1e-2), &cfg, None).unwrap();
        let expected = 1e-2 / (1.0 + 1e-4) / PI;
        assert!((d.points[0].1 - expected).abs() < 1e-12);
        assert!((expected - 0.0031831).abs() < 1e-6);

        let d = density_estimate(&mp(64, 64), &[1.0], Some(1e-3), &cfg, None).unwrap();
        assert!(
            (d.points[0].1 - mp_density(1.0)).abs() < 0.01,
            "{}",
            d.points[0].1
        );
        assert!((mp_density(1.0) - 0.2757).abs() < 1e-4);

        let d =
            density_estimate(&scalar_two(), &[4.0], Some(1e-4), &cfg, Some(&[(3.9, 4.1)])).unwrap();
        let mass = d.masses.unwrap()[0].mass;
        assert!((mass - 1.0).abs() < 5e-3, "{mass}");
    }

    #[test]
    fn default_eta_rule() {
        let m = mp(4, 4);
        assert_eq!(m.scale(), 2.0);
        assert!((default_eta(&m, &[0.0]) - 2e-3).abs() < 1e-18);
        let grid: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        assert!((default_eta(&m, &grid) - 0.2).abs() < 1e-12);
        let d = density_estimate(&m, &grid, None, &SolverConfig::default(), None).unwrap();
        assert_eq!(d.eta, default_eta(&m, &grid));
    }

    #[test]
    fn bad_grids_are_rejected() {
        let cfg = SolverConfig::default();
        let m = zero();
        assert!(density_estimate(&m, &[], None, &cfg, None).is_err());
        assert!(density_estimate(&m, &[1.0, 0.5], None, &cfg, None).is_err());
        assert!(density_estimate(&m, &[-1.0], None, &cfg, None).is_err());
        assert!(density_estimate(&m, &[1.0], Some(0.0), &cfg, None).is_err());
        assert!(density_estimate(&m, &[1.0], Some(1.0), &cfg, Some(&[(2.0, 1.0)])).is_err());
    }

    #[test]
    fn density_mass_over_support() {
        // Ratio 1/2 keeps the spectrum away from zero.
        let m = mp(40, 80);
        let cfg = SolverConfig::default();
        let top = 4.0 * (m.sigma_max().powi(2) + m.a_max().powi(2));
        let grid: Vec<f64> = (0..=400).map(|k| top * k as f64 / 400.0).collect();
        let eta = 1e-3 * m.scale();
        let d = density_estimate(&m, &grid, Some(eta), &cfg, Some(&[(0.0, top)])).unwrap();
        let mass = d.masses.as_ref().unwrap()[0].mass;
        assert!((mass - 1.0).abs() < 5e-3, "{mass}");
        assert!(d.points.iter().all(|p| p.1 >= -1e-12));
    }

    #[test]
    fn density_csv_layout() {
        let d = DensityEstimate {
            eta: 0.1,
            points: vec![(0.0, 0.5), (1.0, 0.25)],
            masses: Some(vec![IntervalMass {
                a: 0.0,
                b: 1.0,
                mass: 0.4,
            }]),
        };
        let text = d.to_csv().unwrap();
        assert_eq!(
            text,
            "lambda,density\n0,0.5\n1,0.25\ninterval,a,b,mass\ninterval,0,1,0.4\n"
        );
        assert!((d.grid_mass() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        let cfg = SolverConfig::default();
        let r = moment_consistency(&mp(2, 4), 1e6, &cfg).unwrap();
        assert_eq!(r.analytic, 1.0);
        assert!((r.numeric - 1.0).abs() < 1e-4);
        let r = moment_consistency(&zero(), 1e6, &cfg).unwrap();
        assert_eq!(r.analytic, 0.0);
        assert!(r.numeric.abs() < 1e-10);
        let r = moment_consistency(&scalar_two(), 1e6, &cfg).unwrap();
        assert_eq!(r.analytic, 4.0);
        assert!(r.relative_gap < 1e-4);
        assert!(moment_consistency(&zero(), 0.0, &cfg).is_err());
    }

    #[test]
    fn moment_transform_matches_naive_form() {
        let mut a = CMatrix::zeros(3, 5);
        a[(0, 1)] = c(0.7, 0.0);
        a[(2, 1)] = c(-0.2, 0.0);
        a[(1, 4)] = c(0.4, 0.0);
        let m = build_model(
            DMatrix::from_fn(3, 5, |i, j| 0.3 + 0.2 * ((i * j) % 3) as f64),
            a,
            ScalarField::Real,
        )
        .unwrap();
        let z = c(-0.8, 0.3);
        let fp = solver::solve_light(&m, z, &SolverConfig::default()).unwrap();
        let naive = -z * (z * fp.m() + 1.0);
        assert!((moment_transform(&m, &fp).unwrap() - naive).norm() < 1e-12);
    }

    #[test]
    fn moment_transform_dense_centering() {
        for (rows, cols) in [(3, 5), (5, 3)] {
            let a = CMatrix::from_fn(rows, cols, |i, j| {
                c(0.1 * (i as f64 - j as f64), 0.05 * (i + j) as f64)
            });
            let m = build_model(
                DMatrix::from_element(rows, cols, 0.8),
                a,
                ScalarField::Complex,
            )
            .unwrap();
            let z = c(0.4, 0.9);
            let fp = solver::solve_light(&m, z, &SolverConfig::default()).unwrap();
            let naive = -z * (z * fp.m() + 1.0);
            assert!((moment_transform(&m, &fp).unwrap() - naive).norm() < 1e-12);
        }
    }

    #[test]
    fn total_mass_limit() {
        let m = mp(6, 9);
        let x = 1e8 * m.scale();
        let (f, _) = equivalent_stieltjes(&m, c(-x, 0.0), &SolverConfig::default()).unwrap();
        assert!((x * f.re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_axis_is_positive_and_decreasing() {
        let m = dx_model(&[0.5, 1.0, 1.5, 2.0], 6).unwrap();
        let cfg = SolverConfig::default();
        let values: Vec<f64> = (1..30)
            .map(|k| {
                equivalent_stieltjes(&m, c(-0.2 * k as f64, 0.0), &cfg)
                    .unwrap()
                    .0
            })
            .map(|f| {
                assert_eq!(f.im, 0.0);
                f.re
            })
            .collect();
        assert!(values.iter().all(|v| *v > 0.0));
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn companion_identity_examples() {
        let cfg = SolverConfig::default();
        let sol = solver::solve(&zero(), c(0.3, 0.7), &cfg).unwrap();
        assert_eq!(companion_identity_residual(&sol, &zero()), 0.0);

        let dx = dx_model(&[1.0, 2.0], 4).unwrap();
        let sol = solver::solve(&dx, c(-1.0, 0.0), &cfg).unwrap();
        assert!(companion_identity_residual(&sol, &dx) < 1e-10);
        assert!(dx_equation_defect(&sol, &dx).unwrap() < 1e-10);

        let mut a = CMatrix::zeros(3, 4);
        a[(0, 0)] = c(1.0, 0.0);
        let other = build_model(
            DMatrix::from_fn(3, 4, |i, j| 0.5 + (i + 2 * j) as f64 * 0.1),
            a,
            ScalarField::Real,
        )
        .unwrap();
        let sol = solver::solve(&other, c(-1.0, 0.0), &cfg).unwrap();
        assert!(companion_identity_residual(&sol, &other).is_finite());
        assert!(dx_equation_defect(&sol, &other).is_none());
    }
}
