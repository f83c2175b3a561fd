//! Analytic kernels `A(x) = Σ a_n x^n`, their Gamma-weighted series
//! `A_Γ(x) = Σ a_n Γ(βn + σ) x^n` and the reciprocal kernel `Ā` defined by
//! `A_Γ · Ā_Γ = 1` as formal power series.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{checked, complex_gamma, rgamma, CScalar};
#[allow(unused_imports)]
use num_traits::Float;

/// Default truncation length of built-in kernels.
pub const DEFAULT_TERMS: usize = 64;

/// Tolerance below which a leading coefficient is treated as zero.
pub const SINGULAR_TOLERANCE: f64 = 1e-14;

const SUP_ANGLES: usize = 720;
const SUP_REAL_POINTS: usize = 721;

/// Truncated power series kernel together with the order `alpha` and the
/// (possibly complex) exponent `beta` it is used with.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticKernel {
    coeffs: Vec<CScalar>,
    radius: f64,
    alpha: f64,
    beta: CScalar,
    label: String,
}

/// Kernel value with an estimate of the truncation error at that modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: CScalar,
    pub truncation_estimate: f64,
}

/// Sup of `|A|` over the two candidate discs.
///
/// `m` uses radius `(b-a)^alpha` (the displayed form of the boundedness
/// lemma); `m_beta` uses `(b-a)^{Re beta}`, the modulus the operator actually
/// feeds to `A`. `m` is infinite when its radius leaves the disc of
/// convergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupBound {
    pub m: f64,
    pub m_beta: f64,
    pub radius_alpha: f64,
    pub radius_beta: f64,
}

impl AnalyticKernel {
    pub fn new(coeffs: Vec<CScalar>, radius: f64, alpha: f64, beta: CScalar) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "kernel needs at least one coefficient".into(),
            ));
        }
        for &c in &coeffs {
            checked(c)?;
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel radius must be positive, got {radius}"
            )));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite and non-negative, got {alpha}"
            )));
        }
        checked(beta)?;
        if beta.re < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Re(beta) must be non-negative, got {}",
                beta.re
            )));
        }
        Ok(Self {
            coeffs,
            radius,
            alpha,
            beta,
            label: String::from("custom"),
        })
    }

    /// Single-term kernel `A ≡ c`.
    pub fn constant(c: CScalar, alpha: f64, beta: CScalar) -> Result<Self> {
        Ok(Self::new(alloc::vec![c], f64::INFINITY, alpha, beta)?.with_label("constant"))
    }

    /// `A ≡ 1/Γ(α)`: the operator reduces to the Riemann–Liouville integral.
    pub fn rl_constant(alpha: f64, beta: CScalar) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rl_constant needs alpha > 0, got {alpha}"
            )));
        }
        let a0 = rgamma(CScalar::new(alpha, 0.0));
        Ok(Self::new(alloc::vec![a0], f64::INFINITY, alpha, beta)?.with_label("rl_constant"))
    }

    /// `A(x) = exp(x - shift) = Σ e^{-shift} x^n / n!`, truncated to `terms`.
    pub fn exp_shift(shift: f64, alpha: f64, beta: CScalar, terms: usize) -> Result<Self> {
        if terms == 0 {
            return Err(Error::InvalidParameter(
                "exp_shift needs at least one term".into(),
            ));
        }
        let mut coeffs = Vec::with_capacity(terms);
        let mut a = (-shift).exp();
        for n in 0..terms {
            if n > 0 {
                a /= n as f64;
            }
            coeffs.push(CScalar::new(a, 0.0));
        }
        Ok(Self::new(coeffs, f64::INFINITY, alpha, beta)?.with_label("exp_shift"))
    }

    /// The worked-example kernel: `exp(x - √2)` with `α = 1/2`, `β = 3i`.
    pub fn paper_example() -> Self {
        Self::exp_shift(
            core::f64::consts::SQRT_2,
            0.5,
            CScalar::new(0.0, 3.0),
            DEFAULT_TERMS,
        )
        .expect("built-in kernel parameters are valid")
        .with_label("exp_shift")
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = String::from(label);
        self
    }

    /// Same coefficients with a different order.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut k = Self::new(self.coeffs.clone(), self.radius, alpha, self.beta)?;
        k.label = self.label.clone();
        Ok(k)
    }

    /// Keeps the first `terms` coefficients.
    pub fn truncated(&self, terms: usize) -> Result<Self> {
        let terms = terms.clamp(1, self.coeffs.len());
        let mut k = Self::new(
            self.coeffs[..terms].to_vec(),
            self.radius,
            self.alpha,
            self.beta,
        )?;
        k.label = self.label.clone();
        Ok(k)
    }

    pub fn coeffs(&self) -> &[CScalar] {
        &self.coeffs
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> CScalar {
        self.beta
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Horner evaluation without the radius check.
    #[inline]
    pub fn horner(&self, x: CScalar) -> CScalar {
        self.coeffs
            .iter()
            .rev()
            .fold(CScalar::new(0.0, 0.0), |acc, &a| acc * x + a)
    }

    /// Evaluates the truncated series at `x`, `|x| < R`.
    pub fn eval(&self, x: CScalar) -> Result<KernelValue> {
        checked(x)?;
        let modulus = x.norm();
        if modulus >= self.radius {
            return Err(Error::Radius {
                modulus,
                radius: self.radius,
            });
        }
        Ok(KernelValue {
            value: self.horner(x),
            truncation_estimate: self.truncation_estimate(modulus),
        })
    }

    /// Tail estimate `|a_K| r^K / (1 - |a_K|^{1/K} r)` for the last index `K`.
    pub fn truncation_estimate(&self, r: f64) -> f64 {
        let k = self.coeffs.len() - 1;
        let last = self.coeffs[k].norm();
        if k == 0 || last == 0.0 {
            return 0.0;
        }
        let q = last.powf(1.0 / k as f64) * r;
        if q >= 1.0 {
            return f64::INFINITY;
        }
        last * r.powi(k as i32) / (1.0 - q)
    }

    /// Enforces `R > (b-a)^{Re β}` for an interval of the given length.
    pub fn check_interval(&self, interval_length: f64) -> Result<()> {
        let modulus = interval_length.powf(self.beta.re);
        if modulus >= self.radius {
            return Err(Error::Radius {
                modulus,
                radius: self.radius,
            });
        }
        Ok(())
    }

    /// `c_n = a_n Γ(βn + shift)`.
    pub fn gamma_weighted(&self, shift: f64) -> Result<GammaWeightedSeries> {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(n, &a)| {
                if a == CScalar::new(0.0, 0.0) {
                    return Ok(a);
                }
                Ok(a * complex_gamma(self.beta * n as f64 + shift)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GammaWeightedSeries {
            shift,
            beta: self.beta,
            coeffs,
        })
    }

    /// Gamma-weighted reciprocal `Ā_Γ` (shift `1 - α`), solving
    /// `Σ_{m+n=k} a_n Γ(βn+α) ā_m Γ(βm+1-α) = δ_{k0}`.
    pub fn reciprocal_series(&self) -> Result<GammaWeightedSeries> {
        let weighted = self.gamma_weighted(self.alpha)?;
        let coeffs = series_reciprocal(&weighted.coeffs)?;
        Ok(GammaWeightedSeries {
            shift: 1.0 - self.alpha,
            beta: self.beta,
            coeffs,
        })
    }

    /// The reciprocal kernel `Ā` of order `1 - α`.
    ///
    /// At `α = 1` the zero-order terms of `Ā_Γ` act as multiples of the
    /// identity and have no power-series coefficient (`1/Γ(0) = 0`); the
    /// operator builders therefore work from [`Self::reciprocal_series`].
    pub fn reciprocal(&self) -> Result<AnalyticKernel> {
        let series = self.reciprocal_series()?;
        let (coeffs, _) = series.kernel_coefficients();
        let radius = estimate_radius(&coeffs);
        let mut k = AnalyticKernel::new(coeffs, radius, series.shift.max(0.0), self.beta)?;
        k.label = format!("reciprocal({})", self.label);
        Ok(k)
    }

    /// Root-test estimate of the convergence radius of `Ā`.
    pub fn reciprocal_radius_estimate(&self) -> Result<f64> {
        let (coeffs, _) = self.reciprocal_series()?.kernel_coefficients();
        Ok(estimate_radius(&coeffs))
    }

    /// Sup of `|A|` over both candidate discs for an interval length.
    pub fn sup_bound(&self, interval_length: f64) -> Result<SupBound> {
        let radius_beta = interval_length.powf(self.beta.re);
        if radius_beta >= self.radius {
            return Err(Error::Radius {
                modulus: radius_beta,
                radius: self.radius,
            });
        }
        let radius_alpha = interval_length.powf(self.alpha);
        let m_beta = self.sampled_sup(radius_beta);
        let m = if radius_alpha < self.radius {
            self.sampled_sup(radius_alpha)
        } else {
            f64::INFINITY
        };
        Ok(SupBound {
            m,
            m_beta,
            radius_alpha,
            radius_beta,
        })
    }

    fn sampled_sup(&self, r: f64) -> f64 {
        let mut best = 0.0f64;
        for j in 0..SUP_REAL_POINTS {
            let x = -r + 2.0 * r * j as f64 / (SUP_REAL_POINTS - 1) as f64;
            best = best.max(self.horner(CScalar::new(x, 0.0)).norm());
        }
        if self.beta.im != 0.0 {
            for j in 0..SUP_ANGLES {
                let theta = 2.0 * PI * j as f64 / SUP_ANGLES as f64;
                best = best.max(self.horner(CScalar::from_polar(r, theta)).norm());
            }
        }
        best
    }
}

/// `Σ c_n RL I^{shift + nβ}` in coefficient form.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaWeightedSeries {
    pub shift: f64,
    pub beta: CScalar,
    pub coeffs: Vec<CScalar>,
}

impl GammaWeightedSeries {
    /// Cauchy product, truncated to the shorter length.
    pub fn convolve(&self, other: &GammaWeightedSeries) -> Vec<CScalar> {
        let len = self.coeffs.len().min(other.coeffs.len());
        (0..len)
            .map(|k| (0..=k).map(|n| self.coeffs[n] * other.coeffs[k - n]).sum())
            .collect()
    }

    /// Splits back into kernel coefficients `a_n = c_n / Γ(shift + nβ)` and
    /// the total weight of zero-order terms (`shift + nβ = 0`), which act as
    /// the identity.
    pub fn kernel_coefficients(&self) -> (Vec<CScalar>, CScalar) {
        let mut identity = CScalar::new(0.0, 0.0);
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(n, &c)| {
                let order = self.beta * n as f64 + self.shift;
                if order.norm() < crate::special::POLE_TOLERANCE {
                    identity += c;
                    CScalar::new(0.0, 0.0)
                } else {
                    c * rgamma(order)
                }
            })
            .collect();
        (coeffs, identity)
    }
}

/// Formal power-series reciprocal: `d_0 = 1/c_0`, `d_k = -Σ_{n=1}^k c_n d_{k-n} / c_0`.
pub fn series_reciprocal(c: &[CScalar]) -> Result<Vec<CScalar>> {
    let lead = c.first().copied().unwrap_or_default();
    if lead.norm() < SINGULAR_TOLERANCE {
        return Err(Error::SingularSeries(lead.norm()));
    }
    let mut d: Vec<CScalar> = Vec::with_capacity(c.len());
    d.push(1.0 / lead);
    for k in 1..c.len() {
        let s: CScalar = (1..=k).map(|n| c[n] * d[k - n]).sum();
        d.push(-s / lead);
    }
    Ok(d)
}

/// Root-test estimate over the upper half of the coefficients.
fn estimate_radius(coeffs: &[CScalar]) -> f64 {
    let k = coeffs.len();
    if k < 2 {
        return f64::INFINITY;
    }
    let limsup = (k / 2..k)
        .filter(|&n| n > 0)
        .map(|n| coeffs[n].norm().powf(1.0 / n as f64))
        .fold(0.0, f64::max);
    if limsup <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / limsup
    }
}

/// One row of the semigroup coefficient table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemigroupRow {
    pub k: usize,
    /// Residual with `Γ(α₂ + mβ)` in the second factor.
    pub residual: f64,
    /// Residual with `Γ(α₂ + nβ)` as the condition is displayed.
    pub residual_literal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupReport {
    pub rows: Vec<SemigroupRow>,
    pub max_residual: f64,
    pub max_residual_literal: f64,
}

/// Evaluates the coefficient condition
/// `Σ_{m+n=k} a_n(α₁) a_m(α₂) Γ(α₁+nβ) Γ(α₂+mβ) = a_k(α₁+α₂) Γ(α₁+α₂+kβ)`
/// for `k = 0..=kmax`. Coefficients past a kernel's truncation count as zero.
pub fn check_semigroup(
    k1: &AnalyticKernel,
    k2: &AnalyticKernel,
    k12: &AnalyticKernel,
    kmax: usize,
) -> Result<SemigroupReport> {
    if k1.beta != k2.beta || k1.beta != k12.beta {
        return Err(Error::MismatchedBeta);
    }
    let beta = k1.beta;
    let (a1, a2) = (k1.alpha, k2.alpha);
    let coeff = |k: &AnalyticKernel, n: usize| k.coeffs.get(n).copied().unwrap_or_default();
    let g = |z: CScalar| complex_gamma(z);
    let mut rows = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let mut lhs = CScalar::new(0.0, 0.0);
        let mut lhs_literal = CScalar::new(0.0, 0.0);
        for n in 0..=k {
            let m = k - n;
            let prod = coeff(k1, n) * coeff(k2, m);
            if prod == CScalar::new(0.0, 0.0) {
                continue;
            }
            let g1 = g(beta * n as f64 + a1)?;
            lhs += prod * g1 * g(beta * m as f64 + a2)?;
            lhs_literal += prod * g1 * g(beta * n as f64 + a2)?;
        }
        let ak = coeff(k12, k);
        let rhs = if ak == CScalar::new(0.0, 0.0) {
            ak
        } else {
            ak * g(beta * k as f64 + a1 + a2)?
        };
        rows.push(SemigroupRow {
            k,
            residual: (lhs - rhs).norm(),
            residual_literal: (lhs_literal - rhs).norm(),
        });
    }
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let max_residual_literal = rows.iter().map(|r| r.residual_literal).fold(0.0, f64::max);
    Ok(SemigroupReport {
        rows,
        max_residual,
        max_residual_literal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::SQRT_2;

    fn c(re: f64, im: f64) -> CScalar {
        CScalar::new(re, im)
    }

    #[test]
    fn eval_examples() {
        let k = AnalyticKernel::constant(c(2.5, -1.0), 0.5, c(1.0, 0.0)).unwrap();
        assert_eq!(k.eval(c(0.3, 0.7)).unwrap().value, c(2.5, -1.0));

        let paper = AnalyticKernel::paper_example();
        let at0 = paper.eval(c(0.0, 0.0)).unwrap().value;
        assert!((at0 - c(0.243_116_734_434_214_2, 0.0)).norm() < 1e-15);
        let at_sqrt2 = paper.eval(c(SQRT_2, 0.0)).unwrap().value;
        assert!((at_sqrt2 - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eval_outside_radius() {
        let k = AnalyticKernel::new(alloc::vec![c(1.0, 0.0); 8], 1.0, 0.5, c(1.0, 0.0)).unwrap();
        assert!(matches!(k.eval(c(0.0, 1.0)), Err(Error::Radius { .. })));
        assert!(k.eval(c(0.5, 0.0)).is_ok());
        assert!(matches!(k.check_interval(1.5), Err(Error::Radius { .. })));
        assert!(k.check_interval(0.9).is_ok());
    }

    #[test]
    fn gamma_weighted_examples() {
        let alpha = 0.37;
        let unit = AnalyticKernel::rl_constant(alpha, c(1.0, 0.0)).unwrap();
        let w = unit.gamma_weighted(alpha).unwrap();
        assert!((w.coeffs[0] - c(1.0, 0.0)).norm() < 1e-14);

        let paper = AnalyticKernel::paper_example();
        let w = paper.gamma_weighted(0.5).unwrap();
        // Γ(1/2)/e^{√2}, mpmath
        assert!((w.coeffs[0] - c(0.430_913_192_167_496_65, 0.0)).norm() < 1e-14);

        let flat = AnalyticKernel::exp_shift(0.0, 0.5, c(0.0, 0.0), 5).unwrap();
        let w = flat.gamma_weighted(1.0).unwrap();
        for (cn, an) in w.coeffs.iter().zip(flat.coeffs()) {
            assert!((cn - an).norm() < 1e-15);
        }
    }

    #[test]
    fn reciprocal_examples() {
        let alpha = 0.3;
        let rl = AnalyticKernel::rl_constant(alpha, c(1.0, 0.0)).unwrap();
        let rec = rl.reciprocal().unwrap();
        let expected = rgamma(c(1.0 - alpha, 0.0));
        assert!((rec.coeffs()[0] - expected).norm() < 1e-14);
        assert!(rec.coeffs()[1..].iter().all(|z| z.norm() == 0.0));

        let paper = AnalyticKernel::paper_example();
        let rec = paper.reciprocal().unwrap();
        // e^{√2}/π, mpmath
        assert!((rec.coeffs()[0] - c(1.309_288_259_915_827_5, 0.0)).norm() < 1e-13);

        let series = paper.reciprocal_series().unwrap();
        let unit = paper.gamma_weighted(0.5).unwrap().convolve(&series);
        assert!((unit[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(unit[1].norm() < 1e-15);
        assert!(unit[2..].iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn paper_reciprocal_radius() {
        // nearest zero of A_Γ has modulus 66.970 (mpmath), so R̄ = 66.970 e^{-3π/2}
        let r = AnalyticKernel::paper_example()
            .reciprocal_radius_estimate()
            .unwrap();
        assert!((r - 0.6016).abs() < 0.01, "{r}");
    }

    #[test]
    fn reciprocal_of_singular_series() {
        let zero = AnalyticKernel::constant(c(0.0, 0.0), 0.5, c(1.0, 0.0)).unwrap();
        assert!(matches!(zero.reciprocal(), Err(Error::SingularSeries(_))));
    }

    #[test]
    fn reciprocal_at_alpha_one_keeps_identity_part() {
        let k = AnalyticKernel::rl_constant(1.0, c(1.0, 0.0)).unwrap();
        let series = k.reciprocal_series().unwrap();
        let (coeffs, identity) = series.kernel_coefficients();
        assert!((identity - c(1.0, 0.0)).norm() < 1e-15);
        assert!(coeffs.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn semigroup_rl_family() {
        let beta = c(0.7, 0.0);
        let (a1, a2) = (0.3, 0.45);
        let k1 = AnalyticKernel::rl_constant(a1, beta).unwrap();
        let k2 = AnalyticKernel::rl_constant(a2, beta).unwrap();
        let k12 = AnalyticKernel::rl_constant(a1 + a2, beta).unwrap();
        let report = check_semigroup(&k1, &k2, &k12, 10).unwrap();
        assert_eq!(report.rows.len(), 11);
        assert!(report.max_residual < 1e-10);
        assert!(report.max_residual_literal < 1e-10);

        let only0 = check_semigroup(&k1, &k2, &k12, 0).unwrap();
        assert_eq!(only0.rows.len(), 1);
    }

    #[test]
    fn semigroup_paper_kernel_reports_nonzero() {
        let p = AnalyticKernel::paper_example();
        let report = check_semigroup(&p, &p, &p, 6).unwrap();
        assert!(report.max_residual > 1e-6);
    }

    #[test]
    fn semigroup_beta_mismatch() {
        let k1 = AnalyticKernel::rl_constant(0.5, c(1.0, 0.0)).unwrap();
        let k2 = AnalyticKernel::rl_constant(0.5, c(0.5, 0.0)).unwrap();
        assert_eq!(
            check_semigroup(&k1, &k2, &k1, 3),
            Err(Error::MismatchedBeta)
        );
    }

    #[test]
    fn sup_bound_examples() {
        let paper = AnalyticKernel::paper_example();
        let s = paper.sup_bound(2.0).unwrap();
        assert!((s.m - 1.0).abs() < 1e-14);
        assert!((s.radius_alpha - SQRT_2).abs() < 1e-15);
        // the operator samples A on the unit circle when beta = 3i
        assert!((s.m_beta - (1.0 - SQRT_2).exp()).abs() < 1e-14);

        let k = AnalyticKernel::constant(c(-3.0, 4.0), 0.5, c(1.0, 0.0)).unwrap();
        assert!((k.sup_bound(2.0).unwrap().m - 5.0).abs() < 1e-15);
        let z = AnalyticKernel::constant(c(0.0, 0.0), 0.5, c(1.0, 0.0)).unwrap();
        assert_eq!(z.sup_bound(2.0).unwrap().m, 0.0);
    }

    #[test]
    fn truncation_estimate_bounds_shorter_truncation() {
        let geometric: Vec<CScalar> = (0..40).map(|n| c(0.6f64.powi(n), 0.0)).collect();
        let kernels = [
            AnalyticKernel::paper_example(),
            AnalyticKernel::new(geometric, 1.0 / 0.6, 0.5, c(1.0, 0.0)).unwrap(),
        ];
        for k in &kernels {
            let short = k.truncated(k.terms() - 5).unwrap();
            for r in [0.2, 0.7, 1.0, 1.4] {
                for j in 0..16 {
                    let x = CScalar::from_polar(r, 2.0 * PI * j as f64 / 16.0);
                    let diff = (k.horner(x) - short.horner(x)).norm();
                    let est = short.truncation_estimate(r);
                    assert!(
                        diff <= est + 1e-15 * (1.0 + k.horner(x).norm()),
                        "{} r={r}",
                        k.label()
                    );
                }
            }
        }
    }
}
