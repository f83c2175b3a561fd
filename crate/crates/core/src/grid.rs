//! Uniform meshes, sampled functions and product-trapezoid weights for
//! weakly singular convolution densities.
//!
//! A density is `ρ(τ) = τ^{p-1} Σ_m b_m (τ^β)^m` with `Re p > 0`. Because the
//! mesh is uniform, the weights depend only on the offset `m = i - j`, so the
//! cell moments are computed once per offset and scattered into rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::AnalyticKernel;
use crate::linalg::DenseMatrix;
use crate::special::{checked, pow_unchecked, CScalar};
#[allow(unused_imports)]
use num_traits::Float;

/// Largest phase change (radians) allowed on one Gauss–Legendre piece.
const MAX_PHASE_PER_PIECE: f64 = 1.5;
/// Geometric ratio of the singular-cell grading for non-oscillatory densities.
const GRADING_RATIO: f64 = 0.5;
/// The grading stops once pieces are this small relative to the cell.
const GRADING_FLOOR: f64 = 1e-17;

// Positive nodes and weights of the 16-point Gauss–Legendre rule on [-1, 1].
const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
];

/// Gauss–Legendre approximation of `∫_lo^hi f`.
pub fn gauss_legendre<F: FnMut(f64) -> CScalar>(lo: f64, hi: f64, mut f: F) -> CScalar {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = CScalar::new(0.0, 0.0);
    for &(x, w) in &GL16 {
        acc += (f(mid - half * x) + f(mid + half * x)) * w;
    }
    acc * half
}

/// Uniform mesh `t_i = a + i h` on `[a, b]` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
}

impl TimeGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] must satisfy a < b"
            )));
        }
        if n < 2 {
            return Err(Error::GridTooCoarse { need: 2, got: n });
        }
        Ok(Self {
            a,
            b,
            n,
            h: (b - a) / (n - 1) as f64,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.b
        } else {
            self.a + i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weights for outer integrals.
    pub fn trapezoid(&self) -> Vec<f64> {
        let mut w = vec![self.h; self.n];
        w[0] *= 0.5;
        w[self.n - 1] *= 0.5;
        w
    }

    pub fn integrate(&self, values: &[CScalar]) -> CScalar {
        self.trapezoid()
            .iter()
            .zip(values)
            .map(|(w, v)| v * w)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Complex samples of a function on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    values: Vec<CScalar>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<CScalar>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if let Some(index) = values.iter().position(|z| checked(*z).is_err()) {
            return Err(Error::SingularSample { index });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: FnMut(f64) -> CScalar>(grid: TimeGrid, mut f: F) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(&mut f).collect())
    }

    pub fn from_real<F: FnMut(f64) -> f64>(grid: TimeGrid, mut f: F) -> Result<Self> {
        Self::from_fn(grid, |t| CScalar::new(f(t), 0.0))
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![CScalar::new(0.0, 0.0); grid.n()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn values(&self) -> &[CScalar] {
        &self.values
    }
    pub fn into_values(self) -> Vec<CScalar> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Second-order differences: central inside, one-sided at both ends.
    pub fn derivative(&self) -> Result<GridFunction> {
        let n = self.grid.n();
        if n < 3 {
            return Err(Error::GridTooCoarse { need: 3, got: n });
        }
        let v = &self.values;
        let two_h = 2.0 * self.grid.h();
        let mut d = Vec::with_capacity(n);
        d.push((v[0] * -3.0 + v[1] * 4.0 - v[2]) / two_h);
        for i in 1..n - 1 {
            d.push((v[i + 1] - v[i - 1]) / two_h);
        }
        d.push((v[n - 1] * 3.0 - v[n - 2] * 4.0 + v[n - 3]) / two_h);
        Ok(GridFunction {
            grid: self.grid,
            values: d,
        })
    }

    /// Samples reflected through the midpoint: `t -> a + b - t`.
    pub fn reflected(&self) -> GridFunction {
        let mut values = self.values.clone();
        values.reverse();
        GridFunction {
            grid: self.grid,
            values,
        }
    }
}

/// Convolution density `τ^{p-1} Σ_m b_m (τ^β)^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDensity {
    p: CScalar,
    beta: CScalar,
    coeffs: Vec<CScalar>,
    omega: f64,
}

impl SeriesDensity {
    /// `interval_length` bounds `τ` and sets the significant-term count used
    /// for the oscillation estimate.
    pub fn new(
        p: CScalar,
        beta: CScalar,
        coeffs: Vec<CScalar>,
        interval_length: f64,
    ) -> Result<Self> {
        if !(p.re > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density exponent needs Re p > 0, got {p}"
            )));
        }
        let r = interval_length.powf(beta.re);
        let mags: Vec<f64> = coeffs
            .iter()
            .enumerate()
            .map(|(m, b)| b.norm() * r.powi(m as i32))
            .collect();
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        let omega = mags
            .iter()
            .enumerate()
            .filter(|(_, &mag)| mag > 1e-17 * peak)
            .map(|(m, _)| (p.im + m as f64 * beta.im).abs())
            .fold(p.im.abs(), f64::max);
        Ok(Self {
            p,
            beta,
            coeffs,
            omega,
        })
    }

    /// `τ^{α-1} A(τ^β)` for a kernel of order `α > 0`.
    pub fn kernel(k: &AnalyticKernel, interval_length: f64) -> Result<Self> {
        k.check_interval(interval_length)?;
        Self::new(
            CScalar::new(k.alpha(), 0.0),
            k.beta(),
            k.coeffs().to_vec(),
            interval_length,
        )
    }

    /// `scale · τ^{p-1}`.
    pub fn power(p: CScalar, scale: CScalar) -> Result<Self> {
        Self::new(p, CScalar::new(0.0, 0.0), vec![scale], 1.0)
    }

    /// `F(τ) = ∫_0^τ ρ`, again a series density with exponent `p + 1`.
    pub fn antiderivative(&self, interval_length: f64) -> Result<Self> {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, b)| b / (self.p + self.beta * m as f64))
            .collect();
        Self::new(self.p + 1.0, self.beta, coeffs, interval_length)
    }

    /// `κ` in `ρ(τ) = τ^{κ-1} φ(τ)`.
    pub fn exponent(&self) -> f64 {
        self.p.re
    }

    /// Upper bound on `|d arg φ / d ln τ|`.
    pub fn log_frequency(&self) -> f64 {
        self.omega
    }

    /// The bounded factor `φ(τ) = τ^{i Im p} Σ b_m (τ^β)^m`.
    #[inline]
    pub fn smooth(&self, tau: f64) -> CScalar {
        let z = pow_unchecked(tau, self.beta);
        let series = self
            .coeffs
            .iter()
            .rev()
            .fold(CScalar::new(0.0, 0.0), |acc, &b| acc * z + b);
        if self.p.im == 0.0 {
            series
        } else {
            series * pow_unchecked(tau, CScalar::new(0.0, self.p.im))
        }
    }

    #[inline]
    pub fn eval(&self, tau: f64) -> CScalar {
        self.smooth(tau) * tau.powf(self.p.re - 1.0)
    }

    /// `∫_lo^hi ρ(τ) g(τ) dτ` on a cell away from the origin.
    fn regular<G: Fn(f64) -> f64>(&self, lo: f64, hi: f64, g: G) -> CScalar {
        let phase = self.omega * (hi / lo).ln();
        let pieces = ((phase / MAX_PHASE_PER_PIECE).ceil() as usize).max(1);
        let width = (hi - lo) / pieces as f64;
        (0..pieces)
            .map(|k| {
                let a = lo + k as f64 * width;
                let b = if k + 1 == pieces { hi } else { a + width };
                gauss_legendre(a, b, |tau| self.eval(tau) * g(tau))
            })
            .sum()
    }

    /// `∫_0^h ρ(τ) g(τ) dτ`. With `κ < 1` the substitution `σ = τ^κ` absorbs
    /// `τ^{κ-1}`; both variants grade geometrically toward the origin.
    fn singular<G: Fn(f64) -> f64>(&self, h: f64, g: G) -> CScalar {
        let kappa = self.p.re;
        let substitute = kappa < 1.0;
        // phase is ω ln τ, i.e. (ω/κ) ln σ after substitution
        let rate = if substitute {
            self.omega / kappa
        } else {
            self.omega
        };
        let ratio = if rate > 0.0 {
            GRADING_RATIO.max((-MAX_PHASE_PER_PIECE / rate).exp())
        } else {
            GRADING_RATIO
        };
        let top = if substitute { h.powf(kappa) } else { h };
        let floor = top * GRADING_FLOOR;
        let mut acc = CScalar::new(0.0, 0.0);
        let mut hi = top;
        while hi > floor {
            let lo = hi * ratio;
            acc += if substitute {
                gauss_legendre(lo, hi, |s| {
                    let tau = s.powf(1.0 / kappa);
                    self.smooth(tau) * g(tau)
                }) / kappa
            } else {
                gauss_legendre(lo, hi, |tau| self.eval(tau) * g(tau))
            };
            hi = lo;
        }
        acc
    }

    /// Near and far moments per offset:
    /// `P_m = ∫_{mh}^{(m+1)h} ρ(τ)((m+1)h - τ)/h dτ`, `Q_m = ∫ ρ(τ)(τ - mh)/h dτ`.
    pub fn cell_moments(&self, h: f64, cells: usize) -> (Vec<CScalar>, Vec<CScalar>) {
        let mut near = Vec::with_capacity(cells);
        let mut far = Vec::with_capacity(cells);
        for m in 0..cells {
            let lo = m as f64 * h;
            let hi = (m + 1) as f64 * h;
            let (pm, qm) = if m == 0 {
                (
                    self.singular(h, |tau| (hi - tau) / h),
                    self.singular(h, |tau| tau / h),
                )
            } else {
                (
                    self.regular(lo, hi, |tau| (hi - tau) / h),
                    self.regular(lo, hi, |tau| (tau - lo) / h),
                )
            };
            near.push(pm);
            far.push(qm);
        }
        (near, far)
    }

    /// Product-trapezoid matrix of `x ↦ ∫ ρ(|t - s|) x(s) ds` over `[a, t]`
    /// (left) or `[t, b]` (right).
    pub fn matrix(&self, grid: &TimeGrid, side: Side) -> DenseMatrix {
        let n = grid.n();
        let (near, far) = self.cell_moments(grid.h(), n - 1);
        let mut w = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let row = w.row_mut(i);
            match side {
                Side::Left => {
                    for m in 0..i {
                        row[i - m] += near[m];
                        row[i - m - 1] += far[m];
                    }
                }
                Side::Right => {
                    for m in 0..n - 1 - i {
                        row[i + m] += near[m];
                        row[i + m + 1] += far[m];
                    }
                }
            }
        }
        w
    }

    /// One row of [`Self::matrix`].
    pub fn row(&self, grid: &TimeGrid, side: Side, row: usize) -> Vec<CScalar> {
        let n = grid.n();
        let (near, far) = self.cell_moments(grid.h(), n - 1);
        let mut w = vec![CScalar::new(0.0, 0.0); n];
        match side {
            Side::Left => {
                for m in 0..row {
                    w[row - m] += near[m];
                    w[row - m - 1] += far[m];
                }
            }
            Side::Right => {
                for m in 0..n - 1 - row {
                    w[row + m] += near[m];
                    w[row + m + 1] += far[m];
                }
            }
        }
        w
    }
}

fn checked_row(grid: &TimeGrid, row: usize) -> Result<()> {
    if row >= grid.n() {
        return Err(Error::ShapeMismatch(format!(
            "row {row} outside a grid of {} nodes",
            grid.n()
        )));
    }
    Ok(())
}

/// Weights `w_j` with `Σ_j w_j x(t_j) ≈ ∫_a^{t_row} (t_row-s)^{α-1} A((t_row-s)^β) x(s) ds`.
pub fn product_weights_left(
    grid: &TimeGrid,
    k: &AnalyticKernel,
    row: usize,
) -> Result<Vec<CScalar>> {
    checked_row(grid, row)?;
    Ok(SeriesDensity::kernel(k, grid.len())?.row(grid, Side::Left, row))
}

/// Mirror of [`product_weights_left`] over `[t_row, b]`.
pub fn product_weights_right(
    grid: &TimeGrid,
    k: &AnalyticKernel,
    row: usize,
) -> Result<Vec<CScalar>> {
    checked_row(grid, row)?;
    Ok(SeriesDensity::kernel(k, grid.len())?.row(grid, Side::Right, row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::rgamma;

    fn c(re: f64, im: f64) -> CScalar {
        CScalar::new(re, im)
    }

    fn sum(w: &[CScalar]) -> CScalar {
        w.iter().sum()
    }

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(0.0, 2.0, 513).unwrap();
        assert_eq!(g.node(256), 1.0);
        assert_eq!(g.node(512), 2.0);
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
        assert!(matches!(
            TimeGrid::new(0.0, 1.0, 1),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn grid_function_validation() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let err = GridFunction::new(
            g,
            vec![c(0.0, 0.0), c(f64::NAN, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        );
        assert_eq!(err, Err(Error::SingularSample { index: 1 }));
        assert!(matches!(
            GridFunction::new(g, vec![c(0.0, 0.0)]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn derivative_examples() {
        let g = TimeGrid::new(0.0, 1.0, 101).unwrap();
        let d = GridFunction::from_real(g, |t| t * t)
            .unwrap()
            .derivative()
            .unwrap();
        for (t, v) in g.nodes().iter().zip(d.values()) {
            assert!((v - c(2.0 * t, 0.0)).norm() < 1e-10);
        }
        let d = GridFunction::from_real(g, |_| 4.2)
            .unwrap()
            .derivative()
            .unwrap();
        assert!(d.sup_norm() < 1e-12);
        let g = TimeGrid::new(0.0, 1.0, 1001).unwrap();
        let d = GridFunction::from_real(g, f64::sin)
            .unwrap()
            .derivative()
            .unwrap();
        for (t, v) in g.nodes().iter().zip(d.values()) {
            assert!((v.re - t.cos()).abs() < 1e-5);
        }
        let tiny = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(matches!(
            GridFunction::zeros(tiny).derivative(),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn left_weights_of_unit_density() {
        let g = TimeGrid::new(0.0, 1.0, 33).unwrap();
        let k = AnalyticKernel::rl_constant(1.0, c(1.0, 0.0)).unwrap();
        for row in [1, 7, 32] {
            let w = product_weights_left(&g, &k, row).unwrap();
            assert!((sum(&w) - c(g.node(row), 0.0)).norm() < 1e-12);
        }
        let w = product_weights_right(&g, &k, 0).unwrap();
        assert!((sum(&w) - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rl_half_of_constant() {
        let g = TimeGrid::new(0.0, 1.0, 65).unwrap();
        let k = AnalyticKernel::rl_constant(0.5, c(1.0, 0.0)).unwrap();
        // 1/Γ(3/2), mpmath
        let expected = c(core::f64::consts::FRAC_2_SQRT_PI, 0.0);
        let w = product_weights_left(&g, &k, 64).unwrap();
        assert!((sum(&w) - expected).norm() < 1e-12);
        let w = product_weights_right(&g, &k, 0).unwrap();
        assert!((sum(&w) - expected).norm() < 1e-12);
    }

    #[test]
    fn first_row_against_refined_oracle() {
        let g = TimeGrid::new(0.0, 2.0, 17).unwrap();
        let k = AnalyticKernel::paper_example();
        let w = product_weights_left(&g, &k, 1).unwrap();
        // the same cell integral by a plain graded rule at ten times the depth
        let h = g.h();
        let density = SeriesDensity::kernel(&k, 2.0).unwrap();
        let mut oracle = c(0.0, 0.0);
        let mut hi = h;
        while hi > 1e-40 {
            let lo = hi * 0.95;
            let sub = 8;
            for j in 0..sub {
                let a = lo + (hi - lo) * j as f64 / sub as f64;
                let b = lo + (hi - lo) * (j + 1) as f64 / sub as f64;
                oracle += gauss_legendre(a, b, |tau| density.eval(tau));
            }
            hi = lo;
        }
        assert!(
            (sum(&w) - oracle).norm() < 1e-8,
            "{} vs {}",
            sum(&w),
            oracle
        );
    }

    #[test]
    fn paper_kernel_integral_of_one() {
        // mpmath, series of RL integrals of 1
        let g = TimeGrid::new(0.0, 2.0, 257).unwrap();
        let k = AnalyticKernel::paper_example();
        let expected = [
            (64, c(0.301_928_579_155_878_1, 0.024_649_017_498_331_16)),
            (128, c(0.501_341_122_021_957_3, -0.104_455_911_075_246_56)),
            (256, c(0.751_478_827_415_163_4, 0.077_774_612_267_651_89)),
        ];
        for (row, value) in expected {
            let w = product_weights_left(&g, &k, row).unwrap();
            assert!((sum(&w) - value).norm() < 1e-10, "row {row}: {}", sum(&w));
        }
    }

    #[test]
    fn right_is_reflection_of_left() {
        let g = TimeGrid::new(0.0, 2.0, 41).unwrap();
        let k = AnalyticKernel::paper_example();
        let x = GridFunction::from_real(g, |t| (1.3 * t).sin() + t * t).unwrap();
        let xr = x.reflected();
        for row in 0..41 {
            let wl = product_weights_left(&g, &k, 40 - row).unwrap();
            let wr = product_weights_right(&g, &k, row).unwrap();
            let l: CScalar = wl.iter().zip(xr.values()).map(|(w, v)| w * v).sum();
            let r: CScalar = wr.iter().zip(x.values()).map(|(w, v)| w * v).sum();
            assert!((l - r).norm() < 1e-13);
        }
    }

    #[test]
    fn nonnegative_rows_for_real_kernels() {
        let g = TimeGrid::new(0.0, 1.0, 65).unwrap();
        for alpha in [0.2, 0.5, 1.0] {
            let k = AnalyticKernel::exp_shift(0.3, alpha, c(0.8, 0.0), 32).unwrap();
            let m = SeriesDensity::kernel(&k, 1.0)
                .unwrap()
                .matrix(&g, Side::Left);
            for i in 0..65 {
                assert!(m.row(i).iter().all(|w| w.re >= 0.0 && w.im == 0.0));
            }
        }
    }

    #[test]
    fn power_density_matches_rl_monomial() {
        // I^{p} 1 (t) = t^p / Γ(p+1) for complex p
        let g = TimeGrid::new(0.0, 1.0, 33).unwrap();
        let p = c(0.7, 1.5);
        let d = SeriesDensity::power(p, rgamma(p)).unwrap();
        let w = d.row(&g, Side::Left, 32);
        let expected = rgamma(p + 1.0);
        assert!((sum(&w) - expected).norm() < 1e-12);
    }

    #[test]
    fn oscillatory_singular_moments() {
        let h = 2.0 / 256.0;
        for w in [3.0, 45.0, 120.0] {
            let p = CScalar::new(0.5, w);
            let (near, far) = SeriesDensity::power(p, CScalar::new(1.0, 0.0))
                .unwrap()
                .cell_moments(h, 1);
            let hp = (p * h.ln()).exp();
            let q0 = hp / (p + 1.0);
            assert!((far[0] - q0).norm() < 1e-15, "{w}");
            assert!((near[0] - (hp / p - q0)).norm() < 1e-15, "{w}");
        }
    }

    #[test]
    fn quadrature_order_on_smooth_integrand() {
        let k = AnalyticKernel::rl_constant(0.5, c(1.0, 0.0)).unwrap();
        // I^{1/2} t^2 (1) = Γ(3)/Γ(3.5)
        let exact = 2.0 * rgamma(c(3.5, 0.0)).re;
        let err = |n: usize| {
            let g = TimeGrid::new(0.0, 1.0, n).unwrap();
            let x = GridFunction::from_real(g, |t| t * t).unwrap();
            let w = product_weights_left(&g, &k, n - 1).unwrap();
            let v: CScalar = w.iter().zip(x.values()).map(|(w, v)| w * v).sum();
            (v.re - exact).abs()
        };
        let order = (err(65) / err(129)).log2();
        assert!(order >= 1.8, "observed order {order}");
    }
}
