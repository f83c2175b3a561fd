//! Complex scalar primitives: the Gamma function, its reciprocal and
//! complex powers of positive reals.

use alloc::format;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Complex scalar used throughout the crate.
pub type CScalar = Complex64;

/// Distance to a non-positive integer below which `z` is treated as a pole.
pub const POLE_TOLERANCE: f64 = 1e-14;

// Lanczos approximation, g = 7, nine terms (Godfrey's coefficients).
const LANCZOS_G: f64 = 7.0;
const LANCZOS_P: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_741_78;

/// Rejects NaN or infinite components.
pub fn checked(z: CScalar) -> Result<CScalar> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::Domain(format!("non-finite complex value {z}")))
    }
}

/// Returns the non-positive integer `z` sits on, if any.
fn pole_of(z: CScalar) -> Option<f64> {
    let k = z.re.round();
    if k <= 0.0 && (z.re - k).abs() < POLE_TOLERANCE && z.im.abs() < POLE_TOLERANCE {
        Some(k)
    } else {
        None
    }
}

/// Principal-branch log Gamma for `Re z >= 1/2`.
fn ln_gamma_right(z: CScalar) -> CScalar {
    let z = z - 1.0;
    let mut series = CScalar::new(LANCZOS_P[0], 0.0);
    for (i, &p) in LANCZOS_P.iter().enumerate().skip(1) {
        series += p / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (z + 0.5) * t.ln() - t + series.ln() + HALF_LN_TWO_PI
}

/// Complex Gamma function.
///
/// Uses the Lanczos approximation on `Re z >= 1/2` and the reflection
/// formula `Γ(z)Γ(1-z) = π / sin(πz)` elsewhere. Non-positive integers
/// (within [`POLE_TOLERANCE`]) are rejected.
pub fn complex_gamma(z: CScalar) -> Result<CScalar> {
    checked(z)?;
    if pole_of(z).is_some() {
        return Err(Error::Pole { re: z.re, im: z.im });
    }
    if z.re >= 0.5 {
        Ok(ln_gamma_right(z).exp())
    } else {
        let s = (z * PI).sin();
        Ok(PI / (s * ln_gamma_right(1.0 - z).exp()))
    }
}

/// Reciprocal Gamma function `1/Γ(z)`, an entire function: zero at the poles.
pub fn rgamma(z: CScalar) -> CScalar {
    if pole_of(z).is_some() {
        return CScalar::new(0.0, 0.0);
    }
    if z.re >= 0.5 {
        (-ln_gamma_right(z)).exp()
    } else {
        (z * PI).sin() * ln_gamma_right(1.0 - z).exp() / PI
    }
}

/// Real Gamma function, convenience wrapper over [`complex_gamma`].
pub fn gamma(x: f64) -> Result<f64> {
    complex_gamma(CScalar::new(x, 0.0)).map(|z| z.re)
}

/// `base^exponent = exp(exponent · ln base)` for a positive real base.
pub fn complex_pow(base: f64, exponent: CScalar) -> Result<CScalar> {
    if !(base > 0.0) || !base.is_finite() {
        return Err(Error::Domain(format!(
            "complex_pow needs a positive base, got {base}"
        )));
    }
    checked(exponent)?;
    Ok(pow_unchecked(base, exponent))
}

/// [`complex_pow`] without argument validation, for inner loops.
#[inline]
pub(crate) fn pow_unchecked(base: f64, exponent: CScalar) -> CScalar {
    if exponent.im == 0.0 {
        return CScalar::new(base.powf(exponent.re), 0.0);
    }
    (exponent * base.ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> CScalar {
        CScalar::new(re, im)
    }

    fn rel(a: CScalar, b: CScalar) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn gamma_of_one_and_half() {
        assert!(rel(complex_gamma(c(1.0, 0.0)).unwrap(), c(1.0, 0.0)) < 1e-14);
        let sqrt_pi = PI.sqrt();
        assert!(rel(complex_gamma(c(0.5, 0.0)).unwrap(), c(sqrt_pi, 0.0)) < 1e-13);
    }

    #[test]
    fn gamma_one_plus_i() {
        // mpmath, 30 digits
        let expected = c(0.498_015_668_118_356_04, -0.154_949_828_301_810_69);
        assert!(rel(complex_gamma(c(1.0, 1.0)).unwrap(), expected) < 1e-12);
    }

    #[test]
    fn poles_are_rejected() {
        for k in 0..6 {
            let err = complex_gamma(c(-(k as f64), 0.0)).unwrap_err();
            assert!(matches!(err, Error::Pole { .. }));
        }
        // near but not on a pole
        assert!(complex_gamma(c(-2.0 + 1e-9, 0.0)).is_ok());
        assert_eq!(rgamma(c(-3.0, 0.0)), c(0.0, 0.0));
    }

    #[test]
    fn negative_half_integers() {
        let sqrt_pi = PI.sqrt();
        assert!(rel(complex_gamma(c(-0.5, 0.0)).unwrap(), c(-2.0 * sqrt_pi, 0.0)) < 1e-13);
        assert!(
            rel(
                complex_gamma(c(-1.5, 0.0)).unwrap(),
                c(4.0 * sqrt_pi / 3.0, 0.0)
            ) < 1e-13
        );
    }

    #[test]
    fn rgamma_matches_inverse() {
        for z in [c(0.3, 2.0), c(-1.7, 0.4), c(4.5, -3.0), c(0.5, 30.0)] {
            let g = complex_gamma(z).unwrap();
            assert!(rel(rgamma(z) * g, c(1.0, 0.0)) < 1e-12, "{z}");
        }
    }

    #[test]
    fn pow_examples() {
        assert_eq!(complex_pow(1.0, c(3.0, -2.0)).unwrap(), c(1.0, 0.0));
        let e = core::f64::consts::E;
        let euler = complex_pow(e, c(0.0, 1.0)).unwrap();
        assert!((euler - c(1f64.cos(), 1f64.sin())).norm() < 1e-15);
        // direct exp/ln oracle (mpmath)
        let v = complex_pow(0.5, c(0.0, 3.0)).unwrap();
        assert!((v - c(-0.486_994_417_965_781_4, -0.873_405_081_774_871_4)).norm() < 1e-14);
    }

    #[test]
    fn pow_domain() {
        assert!(matches!(
            complex_pow(0.0, c(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            complex_pow(-2.0, c(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(complex_pow(2.0, c(f64::NAN, 0.0)).is_err());
    }
}
