//! Deterministic approximant of the mutual information
//! `(1/N) E log det(I + ΣΣ^*/σ²)`, in nats.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::{self, CMatrix, HermitianMatrix};
use crate::quadrature;
use crate::solver::{self, FixedPoint, SolverConfig};
use crate::spectral;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapacityMethod {
    ClosedForm,
    Quadrature,
}

impl CapacityMethod {
    pub fn name(self) -> &'static str {
        match self {
            CapacityMethod::ClosedForm => "closed_form",
            CapacityMethod::Quadrature => "quadrature",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapacityReport {
    pub sigma2: f64,
    pub value: f64,
    /// `(1/N) log det[Ψ⁻¹/σ² + A Ψ̃ A^*]`
    pub term_logdet_main: Option<f64>,
    /// `(1/N) log det[Ψ̃⁻¹/σ²]`
    pub term_logdet_tilde: Option<f64>,
    /// `−σ²/(nN) Σ σ_ij² T_ii T̃_jj`
    pub term_correction: Option<f64>,
    pub method: CapacityMethod,
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "noise variance must be positive, got {sigma2}"
        )))
    }
}

/// Real positive parts of `ψ` at a point of the negative axis.
fn positive_parts(v: &[Complex64]) -> Result<Vec<f64>> {
    v.iter()
        .map(|p| {
            if p.re > 0.0 && p.re.is_finite() && p.im.abs() <= 1e-12 * p.re {
                Ok(p.re)
            } else {
                Err(Error::NotPositiveDefinite)
            }
        })
        .collect()
}

fn closed_form_at(model: &ModelSpec, sigma2: f64, fp: &FixedPoint) -> Result<CapacityReport> {
    let rows = model.rows() as f64;
    let cols = model.cols() as f64;
    let psi = positive_parts(&fp.psi)?;
    let psi_tilde = positive_parts(&fp.psi_tilde)?;

    let mut main = CMatrix::zeros(model.rows(), model.rows());
    if !model.centering().structure().is_zero {
        let a = model.a();
        let mut scaled = a.clone();
        for (j, w) in psi_tilde.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*w);
        }
        main = scaled * model.a_adjoint();
    }
    for (i, p) in psi.iter().enumerate() {
        main[(i, i)] += Complex64::new(1.0 / (sigma2 * p), 0.0);
    }
    let term1 = numerics::log_det_hpd(&HermitianMatrix::new(main)?)? / rows;
    let term2 = psi_tilde
        .iter()
        .map(|p| (1.0 / (sigma2 * p)).ln())
        .sum::<f64>()
        / rows;

    let v = model.profile().variances();
    let mut acc = 0.0;
    for j in 0..model.cols() {
        let tt = fp.diag_t_tilde[j].re;
        for i in 0..model.rows() {
            acc += v[(i, j)] * fp.diag_t[i].re * tt;
        }
    }
    let term3 = -sigma2 * acc / (rows * cols);
    Ok(CapacityReport {
        sigma2,
        value: term1 + term2 + term3,
        term_logdet_main: Some(term1),
        term_logdet_tilde: Some(term2),
        term_correction: Some(term3),
        method: CapacityMethod::ClosedForm,
    })
}

/// Closed-form approximant at each `σ²`, solving at `z = −σ²`.
pub fn capacity_closed_form(
    model: &ModelSpec,
    sigma2_list: &[f64],
    config: &SolverConfig,
) -> Result<Vec<CapacityReport>> {
    for &s in sigma2_list {
        check_sigma2(s)?;
    }
    let targets: Vec<Complex64> = sigma2_list
        .iter()
        .map(|&s| Complex64::new(-s, 0.0))
        .collect();
    let path = solver::solve_path_light(model, &targets, config)?;
    sigma2_list
        .iter()
        .zip(&path)
        .map(|(&s, fp)| closed_form_at(model, s, fp))
        .collect()
}

/// `(1/γ)(1 − (1/γ) m(−1/γ))`, with the first moment at `γ = 0`.
fn integrand(
    model: &ModelSpec,
    gamma: f64,
    prev: &mut Option<FixedPoint>,
    config: &SolverConfig,
) -> Result<f64> {
    if gamma == 0.0 {
        return Ok(model.first_moment());
    }
    let z = Complex64::new(-1.0 / gamma, 0.0);
    let fp = solver::solve_near(model, z, prev.as_ref(), config)?;
    let value = spectral::moment_transform(model, &fp)?.re;
    *prev = Some(fp);
    Ok(value)
}

/// Integral form `∫₀^{1/σ²} (1/γ)(1 − (1/γ) m(−1/γ)) dγ` by adaptive
/// Gauss–Kronrod.
pub fn capacity_quadrature(
    model: &ModelSpec,
    sigma2: f64,
    quad_tol: f64,
    config: &SolverConfig,
) -> Result<CapacityReport> {
    check_sigma2(sigma2)?;
    if !(quad_tol > 0.0 && quad_tol.is_finite()) {
        return Err(Error::Precondition(format!(
            "quadrature tolerance must be positive, got {quad_tol}"
        )));
    }
    let mut prev = None;
    let tol = 0.1 * quad_tol;
    let value = quadrature::integrate(
        |g| integrand(model, g, &mut prev, config),
        0.0,
        1.0 / sigma2,
        tol,
        tol,
        2000,
    )?;
    Ok(CapacityReport {
        sigma2,
        value,
        term_logdet_main: None,
        term_logdet_tilde: None,
        term_correction: None,
        method: CapacityMethod::Quadrature,
    })
}

/// `(1/N) Σ_k log(1 + s_k²/σ²)` over the singular values of `A`.
pub fn noiseless_capacity(a: &CMatrix, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    let gram = HermitianMatrix::gram(a);
    let eig = numerics::hermitian_eigenvalues(&gram)?;
    Ok(eig
        .iter()
        .map(|l| (1.0 + l.max(0.0) / sigma2).ln())
        .sum::<f64>()
        / a.nrows() as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn capacity_csv(reports: &[CapacityReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sigma2", "value", "term1", "term2", "term3", "method"])?;
    for r in reports {
        w.write_record([
            r.sigma2.to_string(),
            r.value.to_string(),
            fmt_opt(r.term_logdet_main),
            fmt_opt(r.term_logdet_tilde),
            fmt_opt(r.term_correction),
            r.method.name().to_string(),
        ])?;
    }
    spectral::csv_string(w)
}
