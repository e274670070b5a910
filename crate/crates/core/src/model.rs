//! Information-plus-noise models `Σ = Y + A` with `Y_ij = σ_ij X_ij / √n`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::CMatrix;

/// Scalar field of the noise and centering entries. Selects the adjoint:
/// transpose for real models, conjugate transpose for complex ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScalarField {
    Real,
    Complex,
}

impl ScalarField {
    pub fn adjoint(self, m: &CMatrix) -> CMatrix {
        match self {
            ScalarField::Real => m.transpose(),
            ScalarField::Complex => m.adjoint(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarField::Real => "real",
            ScalarField::Complex => "complex",
        }
    }
}

/// Declared factorization `σ_ij² = d_i · d̃_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableFactors {
    pub d: Vec<f64>,
    pub d_tilde: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    sigma: DMatrix<f64>,
    sigma_sq: DMatrix<f64>,
    sigma_max: f64,
    separable: Option<SeparableFactors>,
}

impl VarianceProfile {
    /// Standard deviations `σ_ij`.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Variances `σ_ij²`. For separable profiles these are the exact
    /// products `d_i d̃_j`.
    pub fn variances(&self) -> &DMatrix<f64> {
        &self.sigma_sq
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn separable(&self) -> Option<&SeparableFactors> {
        self.separable.as_ref()
    }
}

/// How the centering matrix couples rows and columns. When every column of
/// `A` has at most one nonzero entry, `A Ψ̃ A^*` is diagonal (and likewise
/// for rows and `A^* Ψ A`), which lets the solver skip dense inversions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CenteringStructure {
    pub is_zero: bool,
    pub columns_single: bool,
    pub rows_single: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenteringMatrix {
    a: CMatrix,
    a_max: f64,
    structure: CenteringStructure,
}

impl CenteringMatrix {
    fn new(a: CMatrix) -> Self {
        let col_norm = (0..a.ncols())
            .map(|k| a.column(k).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let row_norm = (0..a.nrows())
            .map(|l| a.row(l).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let nonzero = |x: &Complex64| x.re != 0.0 || x.im != 0.0;
        let columns_single =
            (0..a.ncols()).all(|k| a.column(k).iter().filter(|x| nonzero(x)).count() <= 1);
        let rows_single =
            (0..a.nrows()).all(|l| a.row(l).iter().filter(|x| nonzero(x)).count() <= 1);
        let is_zero = !a.iter().any(nonzero);
        Self {
            a,
            a_max: col_norm.max(row_norm),
            structure: CenteringStructure {
                is_zero,
                columns_single,
                rows_single,
            },
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.a
    }

    /// Largest Euclidean norm over the rows and columns of `A`.
    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn structure(&self) -> CenteringStructure {
        self.structure
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockVariant {
    /// Identity block in the top-left corner, on top of the noise block.
    Upsilon,
    /// Identity block in the bottom-right corner, disjoint from the noise.
    UpsilonTilde,
}

impl BlockVariant {
    pub fn name(self) -> &'static str {
        match self {
            BlockVariant::Upsilon => "upsilon",
            BlockVariant::UpsilonTilde => "upsilon_tilde",
        }
    }
}

/// Which constructor produced a model. Some diagnostics only apply to
/// specific families.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelOrigin {
    Explicit,
    Separable,
    GaussianField,
    BlockExample { n: usize, variant: BlockVariant },
    DeltaX { lambdas: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    rows: usize,
    cols: usize,
    profile: VarianceProfile,
    centering: CenteringMatrix,
    field: ScalarField,
    origin: ModelOrigin,
}

impl ModelSpec {
    /// `N`, the number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `n`, the number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `c = N/n`.
    pub fn ratio(&self) -> f64 {
        self.rows as f64 / self.cols as f64
    }

    /// `d_n = max(N/n, n/N) ≥ 1`.
    pub fn aspect(&self) -> f64 {
        let c = self.ratio();
        c.max(1.0 / c)
    }

    pub fn profile(&self) -> &VarianceProfile {
        &self.profile
    }

    pub fn centering(&self) -> &CenteringMatrix {
        &self.centering
    }

    pub fn a(&self) -> &CMatrix {
        &self.centering.a
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn origin(&self) -> &ModelOrigin {
        &self.origin
    }

    pub fn sigma_max(&self) -> f64 {
        self.profile.sigma_max
    }

    pub fn a_max(&self) -> f64 {
        self.centering.a_max
    }

    /// `σ_max² + a_max² + 1`, the natural spectral scale of the model.
    pub fn scale(&self) -> f64 {
        self.sigma_max().powi(2) + self.a_max().powi(2) + 1.0
    }

    /// Adjoint of `A` for the model's field.
    pub fn a_adjoint(&self) -> CMatrix {
        self.field.adjoint(&self.centering.a)
    }

    /// `(1/(Nn)) Σ σ_ij² + (1/N) Tr A A^*`, the first moment of the
    /// deterministic spectral measure.
    pub fn first_moment(&self) -> f64 {
        let n_rows = self.rows as f64;
        let var: f64 = self.profile.sigma_sq.iter().sum();
        let tr_aa: f64 = self.centering.a.iter().map(|x| x.norm_sqr()).sum();
        var / (n_rows * self.cols as f64) + tr_aa / n_rows
    }

    /// Re-runs validation on this model's own fields.
    pub fn revalidate(&self) -> Result<ModelSpec> {
        let mut rebuilt = assemble(
            self.profile.sigma.clone(),
            self.centering.a.clone(),
            self.field,
            self.profile.separable.clone(),
        )?;
        rebuilt.origin = self.origin.clone();
        Ok(rebuilt)
    }

    /// The same model relabelled as complex; the numbers are unchanged.
    pub fn as_complex(&self) -> ModelSpec {
        let mut m = self.clone();
        m.field = ScalarField::Complex;
        m
    }
}

fn check_finite_nonnegative(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    for (k, v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidEntry(format!("{what}[{k}] is not finite")));
        }
        if v < 0.0 {
            return Err(Error::InvalidEntry(format!(
                "{what}[{k}] = {v} is negative"
            )));
        }
    }
    Ok(())
}

fn assemble(
    sigma: DMatrix<f64>,
    a: CMatrix,
    field: ScalarField,
    separable: Option<SeparableFactors>,
) -> Result<ModelSpec> {
    let (rows, cols) = sigma.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch(
            "model dimensions must be positive".into(),
        ));
    }
    if a.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "profile is {rows}x{cols} but centering matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite_nonnegative(sigma.iter().copied(), "sigma")?;
    for x in a.iter() {
        if !(x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::InvalidEntry(
                "centering matrix has a non-finite entry".into(),
            ));
        }
        if field == ScalarField::Real && x.im != 0.0 {
            return Err(Error::InvalidEntry(
                "real model has a centering entry with nonzero imaginary part".into(),
            ));
        }
    }
    let sigma_sq = match &separable {
        Some(f) => {
            if f.d.len() != rows || f.d_tilde.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "separable factors have lengths {}/{}, model is {rows}x{cols}",
                    f.d.len(),
                    f.d_tilde.len()
                )));
            }
            check_finite_nonnegative(f.d.iter().copied(), "d")?;
            check_finite_nonnegative(f.d_tilde.iter().copied(), "d_tilde")?;
            DMatrix::from_fn(rows, cols, |i, j| f.d[i] * f.d_tilde[j])
        }
        None => sigma.map(|s| s * s),
    };
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    Ok(ModelSpec {
        rows,
        cols,
        profile: VarianceProfile {
            sigma,
            sigma_sq,
            sigma_max,
            separable,
        },
        centering: CenteringMatrix::new(a),
        field,
        origin: ModelOrigin::Explicit,
    })
}

/// Validates a profile and centering matrix of equal shape.
pub fn build_model(profile: DMatrix<f64>, a: CMatrix, field: ScalarField) -> Result<ModelSpec> {
    assemble(profile, a, field, None)
}

/// Model with `σ_ij = √(d_i d̃_j)`; the factors are kept so the solver can
/// use the two-equation reduction.
pub fn separable_model(
    d: &[f64],
    d_tilde: &[f64],
    a: CMatrix,
    field: ScalarField,
) -> Result<ModelSpec> {
    check_finite_nonnegative(d.iter().copied(), "d")?;
    check_finite_nonnegative(d_tilde.iter().copied(), "d_tilde")?;
    let sigma = DMatrix::from_fn(d.len(), d_tilde.len(), |i, j| (d[i] * d_tilde[j]).sqrt());
    let mut m = assemble(
        sigma,
        a,
        field,
        Some(SeparableFactors {
            d: d.to_vec(),
            d_tilde: d_tilde.to_vec(),
        }),
    )?;
    m.origin = ModelOrigin::Separable;
    Ok(m)
}

/// Unitary `p × p` Fourier matrix, `F_{jk} = exp(2πi jk/p)/√p`.
pub fn fourier_matrix(p: usize) -> CMatrix {
    let norm = 1.0 / (p as f64).sqrt();
    CMatrix::from_fn(p, p, |j, k| {
        // Reduce jk mod p before scaling so large orders keep full accuracy.
        let phase = 2.0 * PI * ((j * k) % p) as f64 / p as f64;
        Complex64::from_polar(norm, phase)
    })
}

/// Symbol `Φ(t1, t2) = Σ h(ℓ1, ℓ2) exp(2πi(ℓ1 t1 − ℓ2 t2))` of a finite
/// two-dimensional filter.
pub fn field_symbol(taps: &BTreeMap<(i64, i64), Complex64>, t1: f64, t2: f64) -> Complex64 {
    taps.iter()
        .map(|(&(l1, l2), &h)| {
            h * Complex64::from_polar(1.0, 2.0 * PI * (l1 as f64 * t1 - l2 as f64 * t2))
        })
        .sum()
}

/// Equivalent model for a Gaussian stationary field filtered by `taps`,
/// centered by `F_N B F_n^*`.
pub fn gaussian_field_model(
    taps: &BTreeMap<(i64, i64), Complex64>,
    b: &CMatrix,
    rows: usize,
    cols: usize,
) -> Result<ModelSpec> {
    if b.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{}, expected {rows}x{cols}",
            b.nrows(),
            b.ncols()
        )));
    }
    if taps
        .values()
        .any(|h| !(h.re.is_finite() && h.im.is_finite()))
    {
        return Err(Error::InvalidEntry("filter tap is not finite".into()));
    }
    let sigma = DMatrix::from_fn(rows, cols, |i, j| {
        field_symbol(
            taps,
            (i + 1) as f64 / rows as f64,
            (j + 1) as f64 / cols as f64,
        )
        .norm()
    });
    let a = fourier_matrix(rows) * b * fourier_matrix(cols).adjoint();
    let mut m = assemble(sigma, a, ScalarField::Complex, None)?;
    m.origin = ModelOrigin::GaussianField;
    Ok(m)
}

/// The `2n × 2n` alternating example: noise on the top-left `n × n` block
/// and an identity block either on top of it or in the opposite corner.
///
/// The noise block is stored with `σ = √2` so that the global `1/√(2n)`
/// scaling yields entries `X_ij / √n`.
pub fn block_example_model(n: usize, variant: BlockVariant) -> Result<ModelSpec> {
    if n == 0 {
        return Err(Error::Precondition("block size must be at least 1".into()));
    }
    let size = 2 * n;
    let sigma = DMatrix::from_fn(
        size,
        size,
        |i, j| if i < n && j < n { 2f64.sqrt() } else { 0.0 },
    );
    let offset = match variant {
        BlockVariant::Upsilon => 0,
        BlockVariant::UpsilonTilde => n,
    };
    let a = CMatrix::from_fn(size, size, |i, j| {
        if i == j && i >= offset && i < offset + n {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let mut m = assemble(sigma, a, ScalarField::Real, None)?;
    m.origin = ModelOrigin::BlockExample { n, variant };
    Ok(m)
}

/// `Y = Δ X / √n` with `Δ = diag(λ)`: constant rows `|λ_i|`, no centering.
/// Declared separable with `d_i = λ_i²` and `d̃_j = 1`.
pub fn dx_model(lambdas: &[f64], cols: usize) -> Result<ModelSpec> {
    if let Some(k) = lambdas.iter().position(|l| !l.is_finite()) {
        return Err(Error::InvalidEntry(format!("lambda[{k}] is not finite")));
    }
    let rows = lambdas.len();
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch(
            "model dimensions must be positive".into(),
        ));
    }
    let sigma = DMatrix::from_fn(rows, cols, |i, _| lambdas[i].abs());
    let factors = SeparableFactors {
        d: lambdas.iter().map(|l| l * l).collect(),
        d_tilde: vec![1.0; cols],
    };
    let mut m = assemble(
        sigma,
        CMatrix::zeros(rows, cols),
        ScalarField::Real,
        Some(factors),
    )?;
    m.origin = ModelOrigin::DeltaX {
        lambdas: lambdas.to_vec(),
    };
    Ok(m)
}
