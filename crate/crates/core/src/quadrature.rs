//! Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = half * XGK[k];
        let sum = f(center - dx)? + f(center + dx)?;
        kron += WGK[k] * sum;
        if k % 2 == 1 {
            gauss += WG[k / 2] * sum;
        }
    }
    Ok(Segment {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    })
}

/// Integrates `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol |I|)`. Fails with [`Error::QuadratureFailure`] when
/// `max_segments` bisections do not reach the tolerance.
pub fn integrate<F>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Precondition(
            "integration limits must be finite".into(),
        ));
    }
    let mut segments = vec![kronrod(&mut f, a, b)?];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let target = abs_tol.max(rel_tol * value.abs());
        if !value.is_finite() {
            return Err(Error::QuadratureFailure {
                estimate: value,
                tolerance: target,
            });
        }
        if error <= target {
            return Ok(value);
        }
        if segments.len() >= max_segments {
            return Err(Error::QuadratureFailure {
                estimate: error,
                tolerance: target,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::QuadratureFailure {
                estimate: error,
                tolerance: target,
            });
        }
        segments.push(kronrod(&mut f, s.a, mid)?);
        segments.push(kronrod(&mut f, mid, s.b)?);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| Ok(x.powi(9) - 3.0 * x * x), -1.0, 2.0, 1e-14, 1e-14, 1).unwrap();
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn lorentzian_peak() {
        let eta = 1e-4;
        let v = integrate(
            |x| Ok(eta / std::f64::consts::PI / ((x - 0.3).powi(2) + eta * eta)),
            -1.0,
            1.0,
            1e-12,
            1e-10,
            2000,
        )
        .unwrap();
        let exact =
            (((1.0 - 0.3) / eta).atan() + ((1.0 + 0.3) / eta).atan()) / std::f64::consts::PI;
        assert!((v - exact).abs() < 1e-9);
    }

    #[test]
    fn reports_failure() {
        let r = integrate(
            |x| Ok(1.0 / x.abs().sqrt().max(1e-300)),
            -1.0,
            1.0,
            1e-14,
            1e-14,
            4,
        );
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn propagates_errors() {
        let r = integrate(
            |_| Err(Error::Precondition("x".into())),
            0.0,
            1.0,
            1e-10,
            1e-10,
            10,
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
