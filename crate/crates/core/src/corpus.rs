//! Fixed set of small models covering every structural case: zero,
//! constant profile, noiseless, dense centering, separable, ΔX, both block
//! variants, a Gaussian field and a smooth non-separable profile.
//!
//! Random entries come from a fixed ChaCha8 stream, so the corpus is the
//! same on every run.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{
    block_example_model, build_model, dx_model, gaussian_field_model, separable_model,
    BlockVariant, ModelSpec, ScalarField,
};
use crate::numerics::CMatrix;

const CORPUS_SEED: u64 = 0x5EED_C0DE;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Dense real matrix with entries uniform in `[−1, 1] / √cols`.
pub fn bounded_centering(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    let s = 1.0 / (cols as f64).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| Complex64::new(uniform(rng, -s, s), 0.0))
}

/// Profile entries uniform in `[0.2, 1.5]`.
pub fn bounded_profile(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| uniform(rng, 0.2, 1.5))
}

/// Constant unit profile without centering.
pub fn mp_model(rows: usize, cols: usize) -> Result<ModelSpec> {
    build_model(
        DMatrix::from_element(rows, cols, 1.0),
        CMatrix::zeros(rows, cols),
        ScalarField::Real,
    )
}

/// `σ_ij = 1 + ½ sin(2πi/N) sin(2πj/n)` with `N = n/2` and
/// `A = [I_N  I_N] / √2`, whose rows have unit norm.
pub fn smooth_model(n: usize) -> Result<ModelSpec> {
    let rows = n / 2;
    let profile = DMatrix::from_fn(rows, n, |i, j| {
        1.0 + 0.5
            * (2.0 * PI * (i + 1) as f64 / rows as f64).sin()
            * (2.0 * PI * (j + 1) as f64 / n as f64).sin()
    });
    let a = CMatrix::from_fn(rows, n, |i, j| {
        Complex64::new(
            if j % rows == i {
                std::f64::consts::FRAC_1_SQRT_2
            } else {
                0.0
            },
            0.0,
        )
    });
    build_model(profile, a, ScalarField::Real)
}

pub fn corpus() -> Result<Vec<(&'static str, ModelSpec)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let mut out = Vec::new();

    out.push((
        "zero",
        build_model(
            DMatrix::zeros(4, 6),
            CMatrix::zeros(4, 6),
            ScalarField::Real,
        )?,
    ));
    out.push(("mp", mp_model(64, 64)?));

    let a = bounded_centering(&mut rng, 16, 24);
    out.push((
        "noiseless",
        build_model(DMatrix::zeros(16, 24), a, ScalarField::Real)?,
    ));

    let profile = bounded_profile(&mut rng, 32, 64);
    let a = bounded_centering(&mut rng, 32, 64);
    out.push(("bounded", build_model(profile, a, ScalarField::Real)?));

    let d: Vec<f64> = (0..40).map(|_| uniform(&mut rng, 0.2, 1.5)).collect();
    let d_tilde: Vec<f64> = (0..60).map(|_| uniform(&mut rng, 0.2, 1.5)).collect();
    let a = bounded_centering(&mut rng, 40, 60);
    out.push((
        "separable",
        separable_model(&d, &d_tilde, a, ScalarField::Real)?,
    ));

    let lambdas: Vec<f64> = (0..64).map(|_| uniform(&mut rng, 0.5, 2.0)).collect();
    out.push(("dx", dx_model(&lambdas, 128)?));

    out.push((
        "block_upsilon",
        block_example_model(16, BlockVariant::Upsilon)?,
    ));
    out.push((
        "block_upsilon_tilde",
        block_example_model(16, BlockVariant::UpsilonTilde)?,
    ));

    let mut taps = BTreeMap::new();
    taps.insert((0, 0), Complex64::new(0.8, 0.0));
    taps.insert((1, 0), Complex64::new(0.3, 0.1));
    taps.insert((0, -1), Complex64::new(0.0, -0.2));
    let b = CMatrix::from_fn(16, 24, |i, j| {
        if i == j {
            Complex64::new(uniform(&mut rng, -0.5, 0.5), uniform(&mut rng, -0.5, 0.5))
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    out.push(("gaussian_field", gaussian_field_model(&taps, &b, 16, 24)?));

    out.push(("smooth", smooth_model(100)?));
    Ok(out)
}
