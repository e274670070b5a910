//! Dense complex linear-algebra kernels.
//!
//! Everything here works on `DMatrix<Complex64>`. Real models carry zero
//! imaginary parts, so the conjugate transpose coincides with the plain
//! transpose and a single code path serves both scalar fields.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative pivot size below which a matrix is treated as singular.
pub const PIVOT_THRESHOLD: f64 = 1e-14;
/// Relative asymmetry tolerated by [`HermitianMatrix::new`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

const EIGEN_MAX_SWEEPS: usize = 10_000;
const POWER_MAX_ITER: usize = 100_000;

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.norm()))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

pub fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|x| x.im == 0.0)
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// A square matrix equal to its conjugate transpose.
///
/// Construction checks the symmetry defect against [`HERMITIAN_TOLERANCE`]
/// relative to the largest entry and then stores the exactly symmetrized
/// matrix `(M + M^*)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !is_finite(&m) {
            return Err(Error::InvalidEntry("non-finite matrix entry".into()));
        }
        let scale = max_abs(&m);
        let adj = m.adjoint();
        let defect = max_abs(&(&m - &adj));
        if defect > HERMITIAN_TOLERANCE * scale {
            return Err(Error::NotHermitian(defect / scale.max(f64::MIN_POSITIVE)));
        }
        let mut sym = (&m + &adj).scale(0.5);
        for i in 0..sym.nrows() {
            sym[(i, i)].im = 0.0;
        }
        Ok(Self(sym))
    }

    /// `M M^*`, Hermitian by construction.
    pub fn gram(m: &CMatrix) -> Self {
        Self::new(m * m.adjoint()).expect("M M^* is Hermitian")
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.order()).map(|i| self.0[(i, i)].re).sum()
    }
}

/// Solves `M X = B` by partially pivoted LU.
pub fn linear_solve(m: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "linear_solve needs a square system matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if b.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} rows, system has order {}",
            b.nrows(),
            m.nrows()
        )));
    }
    let scale = max_abs(m);
    let threshold = PIVOT_THRESHOLD * scale;
    let lu = m.clone().lu();
    let u = lu.u();
    let smallest = (0..u.nrows())
        .map(|i| u[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if scale == 0.0 || smallest < threshold {
        return Err(Error::SingularMatrix {
            pivot: if smallest.is_finite() { smallest } else { 0.0 },
            threshold,
        });
    }
    lu.solve(b).ok_or(Error::SingularMatrix {
        pivot: smallest,
        threshold,
    })
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    linear_solve(m, &CMatrix::identity(m.nrows(), m.nrows()))
}

/// Natural-log determinant of a Hermitian positive definite matrix via
/// Cholesky.
pub fn log_det_hpd(h: &HermitianMatrix) -> Result<f64> {
    let chol = h
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        // A negative pivot comes back as an almost purely imaginary root.
        let d = l[(i, i)].re;
        if !(d > 0.0) || !d.is_finite() || l[(i, i)].im.abs() > 1e-8 * d {
            return Err(Error::NotPositiveDefinite);
        }
        acc += d.ln();
    }
    Ok(2.0 * acc)
}

/// Eigenvalues in ascending order. Real inputs take the real symmetric
/// route, which is several times faster.
pub fn hermitian_eigenvalues(h: &HermitianMatrix) -> Result<Vec<f64>> {
    let m = h.as_matrix();
    if is_real(m) {
        return symmetric_eigenvalues(m.map(|x| x.re));
    }
    let mut values: Vec<f64> = {
        SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS)
            .ok_or_else(|| Error::ConvergenceFailure("Hermitian eigensolver".into()))?
            .eigenvalues
            .iter()
            .copied()
            .collect()
    };
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(values)
}

/// Eigenvalues of a real symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = SymmetricEigen::try_new(m, f64::EPSILON, EIGEN_MAX_SWEEPS)
        .ok_or_else(|| Error::ConvergenceFailure("symmetric eigensolver".into()))?
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(values)
}

/// Eigenvalues (ascending) with the matching unit eigenvectors as columns.
pub fn hermitian_eigenpairs(h: &HermitianMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let eig = SymmetricEigen::try_new(h.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_SWEEPS)
        .ok_or_else(|| Error::ConvergenceFailure("Hermitian eigensolver".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(h.order(), order.len(), |i, c| {
        eig.eigenvectors[(i, order[c])]
    });
    Ok((values, vectors))
}

/// Largest singular value by power iteration on `M^* M`.
///
/// The Rayleigh quotient increases monotonically towards `σ_max²`, so the
/// estimate never overshoots.
pub fn spectral_norm_estimate(m: &CMatrix, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let cols = m.ncols();
    if cols == 0 || m.nrows() == 0 || max_abs(m) == 0.0 {
        return Ok(0.0);
    }
    // Deterministic, non-degenerate start vector.
    let mut state = 0x9E37_79B9_7F4A_7C15_u64;
    let mut v = CVector::from_fn(cols, |_, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        Complex64::new(0.5 + (state >> 11) as f64 / (1u64 << 53) as f64, 0.0)
    });
    v /= Complex64::new(v.norm(), 0.0);
    let mut prev = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let mv = m * &v;
        let rayleigh = mv.norm_squared();
        let w = m.adjoint() * mv;
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(rayleigh.sqrt());
        }
        v = w / Complex64::new(wn, 0.0);
        if (rayleigh - prev).abs() <= tol * rayleigh {
            return Ok(rayleigh.sqrt());
        }
        prev = rayleigh;
    }
    Err(Error::ConvergenceFailure(format!(
        "power iteration did not reach relative tolerance {tol:e}"
    )))
}

/// Exact spectral norm through the eigenvalues of `M^* M`.
pub fn spectral_norm(m: &CMatrix) -> Result<f64> {
    let gram = HermitianMatrix::new(m.adjoint() * m)?;
    let values = hermitian_eigenvalues(&gram)?;
    Ok(values.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}
