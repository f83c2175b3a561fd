//! Dense discretizations of the kernel integrals, the Caputo and
//! Riemann–Liouville derivatives built from the reciprocal kernel, and their
//! convex combinations.
//!
//! Derivatives use a summation-by-parts difference matrix `D`: central in the
//! interior, first-order one-sided at the two end rows, so that the trapezoid
//! rule satisfies `wᵀ D F = F(b) - F(a)` exactly. End rows of derivative
//! matrices are correspondingly less accurate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SeriesDensity, Side, TimeGrid};
use crate::kernel::{AnalyticKernel, GammaWeightedSeries};
use crate::linalg::DenseMatrix;
use crate::special::{complex_gamma, rgamma, CScalar};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    IntL,
    IntR,
    RLDerL,
    RLDerR,
    CapL,
    CapR,
    CombinedInt,
    CombinedCap,
    CombinedRL,
}

impl OperatorKind {
    pub fn side(self) -> Option<Side> {
        match self {
            OperatorKind::IntL | OperatorKind::RLDerL | OperatorKind::CapL => Some(Side::Left),
            OperatorKind::IntR | OperatorKind::RLDerR | OperatorKind::CapR => Some(Side::Right),
            _ => None,
        }
    }

    fn combined(left: Self, right: Self) -> Option<Self> {
        match (left, right) {
            (OperatorKind::IntL, OperatorKind::IntR) => Some(OperatorKind::CombinedInt),
            (OperatorKind::CapL, OperatorKind::CapR) => Some(OperatorKind::CombinedCap),
            (OperatorKind::RLDerL, OperatorKind::RLDerR) => Some(OperatorKind::CombinedRL),
            _ => None,
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OperatorKind::IntL => "int-left",
            OperatorKind::IntR => "int-right",
            OperatorKind::RLDerL => "rl-left",
            OperatorKind::RLDerR => "rl-right",
            OperatorKind::CapL => "caputo-left",
            OperatorKind::CapR => "caputo-right",
            OperatorKind::CombinedInt => "combined-int",
            OperatorKind::CombinedCap => "combined-caputo",
            OperatorKind::CombinedRL => "combined-rl",
        };
        f.write_str(s)
    }
}

/// An operator on a fixed grid, stored as a dense `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FracOperatorMatrix {
    pub kind: OperatorKind,
    pub matrix: DenseMatrix,
    pub grid: TimeGrid,
    pub kernel: String,
    pub gamma: f64,
    /// For Caputo kinds, `J` with `matrix = J · D` up to the row-sum
    /// correction; [`Self::apply`] then evaluates `J (D x)`.
    pub pre_difference: Option<DenseMatrix>,
}

impl FracOperatorMatrix {
    pub fn apply(&self, gf: &GridFunction) -> Result<GridFunction> {
        if gf.grid() != &self.grid {
            return Err(Error::ShapeMismatch(String::from(
                "function and operator live on different grids",
            )));
        }
        let values = match &self.pre_difference {
            Some(j) => j.matvec(&difference(&self.grid, gf.values())),
            None => self.matrix.matvec(gf.values()),
        };
        GridFunction::new(self.grid, values)
    }
}

/// Order-`shift` integral with Gamma-weighted coefficients
/// `Σ c_n RL I^{shift + nβ}`, split into its convolution density and the
/// multiple of the identity carried by zero-order terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesIntegral {
    pub density: DenseMatrix,
    pub identity: CScalar,
    /// `None` when the density vanishes.
    pub series: Option<SeriesDensity>,
}

impl SeriesIntegral {
    pub fn new(grid: &TimeGrid, series: &GammaWeightedSeries, side: Side) -> Result<Self> {
        let n = grid.n();
        let (coeffs, identity) = series.kernel_coefficients();
        let len = grid.len();
        let density = if series.shift > 0.0 {
            Some(SeriesDensity::new(
                CScalar::new(series.shift, 0.0),
                series.beta,
                coeffs,
                len,
            )?)
        } else if series.shift == 0.0 {
            let rest = &coeffs[1..];
            if rest.iter().all(|z| z.norm() == 0.0) {
                None
            } else if series.beta.re > 0.0 {
                Some(SeriesDensity::new(
                    series.beta,
                    series.beta,
                    rest.to_vec(),
                    len,
                )?)
            } else {
                return Err(Error::InvalidParameter(String::from(
                    "zero-order series with Re(beta) = 0 has a non-integrable density",
                )));
            }
        } else {
            return Err(Error::InvalidParameter(format!(
                "negative integral order {}",
                series.shift
            )));
        };
        let matrix = density
            .as_ref()
            .map_or_else(|| DenseMatrix::zeros(n, n), |d| d.matrix(grid, side));
        Ok(Self {
            density: matrix,
            identity,
            series: density,
        })
    }

    pub fn full(&self) -> DenseMatrix {
        let mut m = self.density.clone();
        for i in 0..m.rows() {
            m[(i, i)] += self.identity;
        }
        m
    }
}

/// Summation-by-parts first-difference operator.
fn diff_row(n: usize, h: f64, k: usize) -> [(usize, f64); 2] {
    if k == 0 {
        [(0, -1.0 / h), (1, 1.0 / h)]
    } else if k == n - 1 {
        [(n - 2, -1.0 / h), (n - 1, 1.0 / h)]
    } else {
        [(k - 1, -0.5 / h), (k + 1, 0.5 / h)]
    }
}

/// The difference matrix itself.
pub fn difference_matrix(grid: &TimeGrid) -> DenseMatrix {
    let (n, h) = (grid.n(), grid.h());
    let mut d = DenseMatrix::zeros(n, n);
    for k in 0..n {
        for (j, v) in diff_row(n, h, k) {
            d[(k, j)] += CScalar::new(v, 0.0);
        }
    }
    d
}

/// `D x`.
pub fn difference(grid: &TimeGrid, x: &[CScalar]) -> Vec<CScalar> {
    let (n, h) = (grid.n(), grid.h());
    (0..n)
        .map(|k| {
            let [(j0, v0), (j1, v1)] = diff_row(n, h, k);
            x[j0] * v0 + x[j1] * v1
        })
        .collect()
}

/// `M · D` in `O(n²)`.
fn times_diff(m: &DenseMatrix, grid: &TimeGrid) -> DenseMatrix {
    let (n, h) = (grid.n(), grid.h());
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let src = m.row(i);
        let dst = out.row_mut(i);
        for (k, &mik) in src.iter().enumerate() {
            for (j, v) in diff_row(n, h, k) {
                dst[j] += mik * v;
            }
        }
    }
    out
}

/// `D · M` in `O(n²)`.
fn diff_times(m: &DenseMatrix, grid: &TimeGrid) -> DenseMatrix {
    let (n, h) = (grid.n(), grid.h());
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let [(j0, v0), (j1, v1)] = diff_row(n, h, i);
        let row: Vec<CScalar> = m
            .row(j0)
            .iter()
            .zip(m.row(j1))
            .map(|(a, b)| a * v0 + b * v1)
            .collect();
        out.set_row(i, &row);
    }
    out
}

fn sign(side: Side) -> f64 {
    match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    }
}

fn kind_for(side: Side, left: OperatorKind, right: OperatorKind) -> OperatorKind {
    match side {
        Side::Left => left,
        Side::Right => right,
    }
}

/// `^A I^{α,β}` on the left (`a+`) or right (`b-`) side.
pub fn build_integral(
    grid: &TimeGrid,
    k: &AnalyticKernel,
    side: Side,
) -> Result<FracOperatorMatrix> {
    if !(k.alpha() > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "integral needs alpha > 0, got {}",
            k.alpha()
        )));
    }
    let density = SeriesDensity::kernel(k, grid.len())?;
    Ok(FracOperatorMatrix {
        kind: kind_for(side, OperatorKind::IntL, OperatorKind::IntR),
        matrix: density.matrix(grid, side),
        grid: *grid,
        kernel: String::from(k.label()),
        gamma: if side == Side::Left { 1.0 } else { 0.0 },
        pre_difference: None,
    })
}

/// `^Ā I^{1-α,β}` with its identity part (non-zero only at `α = 1`).
///
/// The truncated reciprocal series is used as is. When its estimated radius
/// does not exceed `(b-a)^{Re β}` the full series would diverge on the
/// interval; this is logged and the truncation defines the operator.
pub fn reciprocal_integral(
    grid: &TimeGrid,
    k: &AnalyticKernel,
    side: Side,
) -> Result<SeriesIntegral> {
    k.check_interval(grid.len())?;
    let needed = grid.len().powf(k.beta().re);
    let radius = k.reciprocal_radius_estimate()?;
    if radius <= needed {
        log::warn!(
            "reciprocal of kernel '{}' has estimated radius {radius:.4} <= {needed:.4}; using its {}-term truncation",
            k.label(),
            k.terms()
        );
    }
    SeriesIntegral::new(grid, &k.reciprocal_series()?, side)
}

/// Caputo derivative `±^Ā I^{1-α} ∘ D`; rows are corrected to sum to zero.
pub fn build_caputo(grid: &TimeGrid, k: &AnalyticKernel, side: Side) -> Result<FracOperatorMatrix> {
    let j = reciprocal_integral(grid, k, side)?
        .full()
        .scaled(CScalar::new(sign(side), 0.0));
    let mut matrix = times_diff(&j, grid);
    for i in 0..grid.n() {
        let s: CScalar = matrix.row(i).iter().sum();
        matrix[(i, i)] -= s;
    }
    Ok(FracOperatorMatrix {
        kind: kind_for(side, OperatorKind::CapL, OperatorKind::CapR),
        matrix,
        grid: *grid,
        kernel: String::from(k.label()),
        gamma: if side == Side::Left { 1.0 } else { 0.0 },
        pre_difference: Some(j),
    })
}

/// Caputo derivative in L1 form: `x` is taken piecewise linear, so each cell
/// contributes its slope times the cell integral of the reciprocal density,
/// and the identity part is a one-sided difference toward the integration
/// start. Lower (left) or upper (right) triangular, which keeps state
/// equations free of the odd-even mode of central differences. First order
/// in the identity part, order `2 - α` otherwise.
pub fn build_caputo_l1(
    grid: &TimeGrid,
    k: &AnalyticKernel,
    side: Side,
) -> Result<FracOperatorMatrix> {
    let recip = reciprocal_integral(grid, k, side)?;
    let (n, h) = (grid.n(), grid.h());
    let cells: Vec<CScalar> = match &recip.series {
        Some(d) => {
            let (near, far) = d.cell_moments(h, n - 1);
            near.iter().zip(&far).map(|(p, q)| (p + q) / h).collect()
        }
        None => vec![CScalar::new(0.0, 0.0); n - 1],
    };
    let id = recip.identity / h;
    let mut matrix = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let row = matrix.row_mut(i);
        match side {
            Side::Left if i > 0 => {
                for (m, c) in cells.iter().take(i).enumerate() {
                    row[i - m] += c;
                    row[i - m - 1] -= c;
                }
                row[i] += id;
                row[i - 1] -= id;
            }
            Side::Right if i < n - 1 => {
                for (m, c) in cells.iter().take(n - 1 - i).enumerate() {
                    row[i + m + 1] -= c;
                    row[i + m] += c;
                }
                row[i + 1] -= id;
                row[i] += id;
            }
            _ => {}
        }
        let s: CScalar = row.iter().sum();
        row[i] -= s;
    }
    Ok(FracOperatorMatrix {
        kind: kind_for(side, OperatorKind::CapL, OperatorKind::CapR),
        matrix,
        grid: *grid,
        kernel: String::from(k.label()),
        gamma: if side == Side::Left { 1.0 } else { 0.0 },
        pre_difference: None,
    })
}

/// Riemann–Liouville derivative `±D ∘ ^Ā I^{1-α}`.
pub fn build_rl_derivative(
    grid: &TimeGrid,
    k: &AnalyticKernel,
    side: Side,
) -> Result<FracOperatorMatrix> {
    let j = reciprocal_integral(grid, k, side)?.full();
    let matrix = diff_times(&j, grid).scaled(CScalar::new(sign(side), 0.0));
    Ok(FracOperatorMatrix {
        kind: kind_for(side, OperatorKind::RLDerL, OperatorKind::RLDerR),
        matrix,
        grid: *grid,
        kernel: String::from(k.label()),
        gamma: if side == Side::Left { 1.0 } else { 0.0 },
        pre_difference: None,
    })
}

/// `γ·L + (1-γ)·R`.
pub fn combine(
    left: &FracOperatorMatrix,
    right: &FracOperatorMatrix,
    gamma: f64,
) -> Result<FracOperatorMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    if left.grid != right.grid || left.kernel != right.kernel {
        return Err(Error::ShapeMismatch(String::from(
            "operators differ in grid or kernel",
        )));
    }
    let kind = OperatorKind::combined(left.kind, right.kind).ok_or_else(|| {
        Error::ShapeMismatch(format!("cannot combine {} with {}", left.kind, right.kind))
    })?;
    Ok(FracOperatorMatrix {
        kind,
        matrix: left.matrix.lincomb(gamma, &right.matrix, 1.0 - gamma),
        grid: left.grid,
        kernel: left.kernel.clone(),
        gamma,
        pre_difference: match (&left.pre_difference, &right.pre_difference) {
            (Some(l), Some(r)) => Some(l.lincomb(gamma, r, 1.0 - gamma)),
            _ => None,
        },
    })
}

/// Builds one of the nine named operators; `gamma` only affects combinations.
pub fn build(
    grid: &TimeGrid,
    k: &AnalyticKernel,
    kind: OperatorKind,
    gamma: f64,
) -> Result<FracOperatorMatrix> {
    use OperatorKind::*;
    match kind {
        IntL => build_integral(grid, k, Side::Left),
        IntR => build_integral(grid, k, Side::Right),
        CapL => build_caputo(grid, k, Side::Left),
        CapR => build_caputo(grid, k, Side::Right),
        RLDerL => build_rl_derivative(grid, k, Side::Left),
        RLDerR => build_rl_derivative(grid, k, Side::Right),
        CombinedInt => combine(
            &build(grid, k, IntL, gamma)?,
            &build(grid, k, IntR, gamma)?,
            gamma,
        ),
        CombinedCap => combine(
            &build(grid, k, CapL, gamma)?,
            &build(grid, k, CapR, gamma)?,
            gamma,
        ),
        CombinedRL => combine(
            &build(grid, k, RLDerL, gamma)?,
            &build(grid, k, RLDerR, gamma)?,
            gamma,
        ),
    }
}

/// `Σ_{n<terms} a_n Γ(α+nβ) · RL I^{α+nβ} x`, each term by its own product
/// quadrature with the complex-order density `τ^{α+nβ-1}/Γ(α+nβ)`.
pub fn apply_series_form(
    k: &AnalyticKernel,
    grid: &TimeGrid,
    gf: &GridFunction,
    side: Side,
    terms: usize,
) -> Result<GridFunction> {
    if terms > k.terms() {
        return Err(Error::InvalidParameter(format!(
            "{terms} terms requested from a kernel of {}",
            k.terms()
        )));
    }
    if gf.grid() != grid {
        return Err(Error::ShapeMismatch(String::from(
            "function and grid differ",
        )));
    }
    k.check_interval(grid.len())?;
    let n = grid.n();
    let x = gf.values();
    let mut out = vec![CScalar::new(0.0, 0.0); n];
    for (idx, &a) in k.coeffs()[..terms].iter().enumerate() {
        if a == CScalar::new(0.0, 0.0) {
            continue;
        }
        let order = k.beta() * idx as f64 + k.alpha();
        let weight = a * complex_gamma(order)?;
        let density = SeriesDensity::power(order, weight * rgamma(order))?;
        let (near, far) = density.cell_moments(grid.h(), n - 1);
        for (i, o) in out.iter_mut().enumerate() {
            match side {
                Side::Left => {
                    for m in 0..i {
                        *o += near[m] * x[i - m] + far[m] * x[i - m - 1];
                    }
                }
                Side::Right => {
                    for m in 0..n - 1 - i {
                        *o += near[m] * x[i + m] + far[m] * x[i + m + 1];
                    }
                }
            }
        }
    }
    GridFunction::new(*grid, out)
}

/// Sampled `L¹` operator norms of the left integral against the candidate
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub max_ratio: f64,
    /// `(b-a)^α M`, the bound as stated by the boundedness lemma.
    pub bound: f64,
    /// `(b-a)^α M_β` with `M_β` the sup over the disc of radius `(b-a)^{Re β}`.
    pub bound_beta: f64,
    /// `(b-a)^α M_β / α`, which `∫_0^{b-a} τ^{α-1}|A(τ^β)| dτ` never exceeds.
    pub bound_corrected: f64,
    pub trials: usize,
    pub skipped: usize,
    pub real_beta: bool,
    /// `Some(max_ratio ≤ bound (1 + 1e-6))` for real β, `None` otherwise.
    pub passed: Option<bool>,
}

fn l1(grid: &TimeGrid, v: &[CScalar]) -> f64 {
    grid.trapezoid()
        .iter()
        .zip(v)
        .map(|(w, z)| w * z.norm())
        .sum()
}

/// Random non-negative samples: uniform noise, decaying bumps anchored at
/// `a`, and squared polynomials, in rotation.
pub fn random_nonnegative<R: Rng + ?Sized>(
    grid: &TimeGrid,
    trial: usize,
    rng: &mut R,
) -> Vec<CScalar> {
    let (a, len) = (grid.a(), grid.len());
    let nodes = grid.nodes();
    let values: Vec<f64> = match trial % 3 {
        0 => nodes.iter().map(|_| rng.random::<f64>()).collect(),
        1 => {
            let rate = 1.0 + 199.0 * rng.random::<f64>();
            nodes
                .iter()
                .map(|t| (-rate * (t - a) / len).exp())
                .collect()
        }
        _ => {
            let c: [f64; 3] = [
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            ];
            nodes
                .iter()
                .map(|t| {
                    let s = (t - a) / len;
                    let p = c[0] + c[1] * s + c[2] * s * s;
                    p * p
                })
                .collect()
        }
    };
    values.into_iter().map(|v| CScalar::new(v, 0.0)).collect()
}

pub fn verify_norm_bound<R: Rng + ?Sized>(
    k: &AnalyticKernel,
    grid: &TimeGrid,
    trials: usize,
    rng: &mut R,
) -> Result<NormReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter(String::from(
            "norm check needs at least one trial",
        )));
    }
    let op = build_integral(grid, k, Side::Left)?;
    let sup = k.sup_bound(grid.len())?;
    let scale = grid.len().powf(k.alpha());
    let mut max_ratio = 0.0f64;
    let mut skipped = 0;
    for trial in 0..trials {
        let f = random_nonnegative(grid, trial, rng);
        let denom = l1(grid, &f);
        if denom == 0.0 {
            skipped += 1;
            continue;
        }
        max_ratio = max_ratio.max(l1(grid, &op.matrix.matvec(&f)) / denom);
    }
    let real_beta = k.beta().im == 0.0;
    let bound = scale * sup.m;
    Ok(NormReport {
        max_ratio,
        bound,
        bound_beta: scale * sup.m_beta,
        bound_corrected: scale * sup.m_beta / k.alpha(),
        trials,
        skipped,
        real_beta,
        passed: real_beta.then_some(max_ratio <= bound * (1.0 + 1e-6)),
    })
}

/// `IntL(α₁)·IntL(α₂)` against `IntL(α₁+α₂)`: largest entry difference and
/// largest difference after applying both to `x ≡ 1`.
pub fn composition_error(
    grid: &TimeGrid,
    k1: &AnalyticKernel,
    k2: &AnalyticKernel,
    k12: &AnalyticKernel,
) -> Result<(f64, f64)> {
    let product = build_integral(grid, k1, Side::Left)?
        .matrix
        .matmul(&build_integral(grid, k2, Side::Left)?.matrix);
    let direct = build_integral(grid, k12, Side::Left)?.matrix;
    let ones = vec![CScalar::new(1.0, 0.0); grid.n()];
    let applied = product
        .matvec(&ones)
        .iter()
        .zip(direct.matvec(&ones))
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok((product.max_abs_diff(&direct), applied))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> CScalar {
        CScalar::new(re, im)
    }

    fn real(b: f64) -> CScalar {
        c(b, 0.0)
    }

    fn unit_grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    fn interior_sup(a: &GridFunction, f: impl Fn(f64) -> f64) -> f64 {
        let g = a.grid();
        (1..g.n() - 1)
            .map(|i| (a.values()[i] - real(f(g.node(i)))).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn running_integral() {
        let g = unit_grid(101);
        let k = AnalyticKernel::rl_constant(1.0, real(1.0)).unwrap();
        let op = build_integral(&g, &k, Side::Left).unwrap();
        assert!(op.matrix.row(0).iter().all(|z| z.norm() == 0.0));
        let y = op
            .apply(&GridFunction::from_real(g, |t| t).unwrap())
            .unwrap();
        for (t, v) in g.nodes().iter().zip(y.values()) {
            assert!((v.re - t * t / 2.0).abs() < 1e-10);
        }
        let r = build_integral(&g, &k, Side::Right).unwrap();
        assert!(r.matrix.row(100).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rl_half_of_monomial() {
        let g = unit_grid(257);
        let k = AnalyticKernel::rl_constant(0.5, real(1.0)).unwrap();
        let y = build_integral(&g, &k, Side::Left)
            .unwrap()
            .apply(&GridFunction::from_real(g, |t| t).unwrap())
            .unwrap();
        let coef = 4.0 / (3.0 * PI.sqrt());
        for (t, v) in g.nodes().iter().zip(y.values()) {
            assert!((v.re - coef * t.powf(1.5)).abs() < 1e-5);
        }
    }

    #[test]
    fn paper_kernel_integral_matches_series_form() {
        let g = TimeGrid::new(0.0, 2.0, 129).unwrap();
        let k = AnalyticKernel::paper_example();
        let one = GridFunction::from_real(g, |_| 1.0).unwrap();
        let direct = build_integral(&g, &k, Side::Left)
            .unwrap()
            .apply(&one)
            .unwrap();
        let series = apply_series_form(&k, &g, &one, Side::Left, 64).unwrap();
        let diff = direct
            .values()
            .iter()
            .zip(series.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
        let short = apply_series_form(&k, &g, &one, Side::Left, 32).unwrap();
        let diff = short
            .values()
            .iter()
            .zip(series.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn series_form_edge_cases() {
        let g = unit_grid(33);
        let x = GridFunction::from_real(g, |t| 1.0 + t).unwrap();
        let k = AnalyticKernel::rl_constant(0.4, real(0.7)).unwrap();
        let a = apply_series_form(&k, &g, &x, Side::Right, 1).unwrap();
        let b = build_integral(&g, &k, Side::Right)
            .unwrap()
            .apply(&x)
            .unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!((u - v).norm() < 1e-12);
        }
        let zero = AnalyticKernel::constant(real(0.0), 0.4, real(0.7)).unwrap();
        assert_eq!(
            apply_series_form(&zero, &g, &x, Side::Left, 0)
                .unwrap()
                .sup_norm(),
            0.0
        );
        assert!(apply_series_form(&zero, &g, &x, Side::Left, 2).is_err());
    }

    #[test]
    fn caputo_annihilates_constants() {
        let g = unit_grid(129);
        for k in [
            AnalyticKernel::rl_constant(0.5, real(1.0)).unwrap(),
            AnalyticKernel::exp_shift(0.2, 0.3, real(0.5), 32).unwrap(),
        ] {
            for side in [Side::Left, Side::Right] {
                let op = build_caputo(&g, &k, side).unwrap();
                let y = op
                    .apply(&GridFunction::from_real(g, |_| 3.7).unwrap())
                    .unwrap();
                assert!(y.sup_norm() < 1e-12);
            }
        }
        let k = AnalyticKernel::exp_shift(0.5, 0.5, c(0.5, 1.0), 32).unwrap();
        let op = build_caputo(&g, &k, Side::Left).unwrap();
        for i in 0..129 {
            let s: CScalar = op.matrix.row(i).iter().sum();
            assert!(s.norm() < 1e-12, "row {i}: {s}");
        }
        // the paper kernel's truncated reciprocal has entries near 1e13
        let p = AnalyticKernel::paper_example();
        let g2 = TimeGrid::new(0.0, 2.0, 129).unwrap();
        let op = build_caputo(&g2, &p, Side::Right).unwrap();
        let y = op
            .apply(&GridFunction::from_real(g2, |_| -2.5).unwrap())
            .unwrap();
        assert_eq!(y.sup_norm(), 0.0);
    }

    #[test]
    fn caputo_of_monomial() {
        let g = unit_grid(513);
        let k = AnalyticKernel::rl_constant(0.5, real(1.0)).unwrap();
        let y = build_caputo(&g, &k, Side::Left)
            .unwrap()
            .apply(&GridFunction::from_real(g, |t| t).unwrap())
            .unwrap();
        let coef = rgamma(real(1.5)).re;
        assert!(interior_sup(&y, |t| coef * t.sqrt()) < 1e-6);
    }

    #[test]
    fn right_caputo_mirrors_left() {
        let g = unit_grid(129);
        let k = AnalyticKernel::exp_shift(0.1, 0.6, real(0.9), 24).unwrap();
        let left = build_caputo(&g, &k, Side::Left)
            .unwrap()
            .apply(&GridFunction::from_real(g, |t| t).unwrap())
            .unwrap();
        let right = build_caputo(&g, &k, Side::Right)
            .unwrap()
            .apply(&GridFunction::from_real(g, |t| 1.0 - t).unwrap())
            .unwrap();
        let mirrored = right.reflected();
        for (u, v) in left.values().iter().zip(mirrored.values()) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn rl_derivative_examples() {
        let g = unit_grid(1025);
        let k = AnalyticKernel::rl_constant(0.5, real(1.0)).unwrap();
        let rl = build_rl_derivative(&g, &k, Side::Left).unwrap();
        let cap = build_caputo(&g, &k, Side::Left).unwrap();
        let gap = |f: fn(f64) -> f64, from: usize| {
            let x = GridFunction::from_real(g, f).unwrap();
            let (a, b) = (rl.apply(&x).unwrap(), cap.apply(&x).unwrap());
            (from..1024)
                .map(|i| (a.values()[i] - b.values()[i]).norm())
                .fold(0.0, f64::max)
        };
        assert!(gap(|t| t * t * t, 1) < 1e-8);
        // x'(a) != 0 makes both derivatives blow up like t^{-1/2} at a
        assert!(gap(|t| t * t + 0.5 * t, 256) < 1e-6);

        let one = rl
            .apply(&GridFunction::from_real(g, |_| 1.0).unwrap())
            .unwrap();
        let coef = 1.0 / PI.sqrt();
        for i in [16, 256, 512, 1000] {
            let t = g.node(i);
            assert!(
                (one.values()[i].re - coef / t.sqrt()).abs() < 1e-3 * coef / t.sqrt(),
                "t = {t}"
            );
        }
        assert_eq!(rl.apply(&GridFunction::zeros(g)).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn order_one_derivatives_are_differences() {
        let g = unit_grid(65);
        let k = AnalyticKernel::rl_constant(1.0, real(1.0)).unwrap();
        let d = difference_matrix(&g);
        let cap = build_caputo(&g, &k, Side::Left).unwrap();
        let rl = build_rl_derivative(&g, &k, Side::Right).unwrap();
        assert!(cap.matrix.max_abs_diff(&d) < 1e-9);
        assert!(rl.matrix.max_abs_diff(&d.scaled(real(-1.0))) < 1e-9);
    }

    #[test]
    fn summation_by_parts() {
        let g = TimeGrid::new(0.5, 2.0, 40).unwrap();
        let f = GridFunction::from_real(g, |t| t.exp() * t.sin()).unwrap();
        let df = difference_matrix(&g).matvec(f.values());
        let total = g.integrate(&df);
        assert!((total - (f.values()[39] - f.values()[0])).norm() < 1e-12);
    }

    #[test]
    fn combine_examples() {
        let g = unit_grid(65);
        let k = AnalyticKernel::exp_shift(0.0, 0.5, real(1.0), 32).unwrap();
        let l = build_caputo(&g, &k, Side::Left).unwrap();
        let r = build_caputo(&g, &k, Side::Right).unwrap();
        assert_eq!(combine(&l, &r, 1.0).unwrap().matrix, l.matrix);
        assert_eq!(combine(&l, &r, 0.0).unwrap().matrix, r.matrix);
        assert!(combine(&l, &r, 1.5).is_err());
        let int = build_integral(&g, &k, Side::Left).unwrap();
        assert!(matches!(
            combine(&int, &r, 0.5),
            Err(Error::ShapeMismatch(_))
        ));

        let half = combine(&l, &r, 0.5).unwrap();
        let x = GridFunction::from_real(g, |t| (t - 0.5) * (t - 0.5)).unwrap();
        let y = half.apply(&x).unwrap();
        let ly = l.apply(&x).unwrap();
        let ry = r.apply(&x).unwrap();
        for i in 0..65 {
            let avg = (ly.values()[i] + ry.values()[i]) * 0.5;
            assert!((y.values()[i] - avg).norm() < 1e-10);
        }
        for gamma in [0.25, 0.8] {
            let m = combine(&l, &r, gamma).unwrap().matrix;
            let affine = combine(&l, &r, 1.0).unwrap().matrix.lincomb(
                gamma,
                &combine(&l, &r, 0.0).unwrap().matrix,
                1.0 - gamma,
            );
            assert_eq!(m, affine);
        }
    }

    #[test]
    fn composition_of_rl_integrals() {
        let g = unit_grid(129);
        let beta = real(1.0);
        let (k1, k2) = (
            AnalyticKernel::rl_constant(0.3, beta).unwrap(),
            AnalyticKernel::rl_constant(0.5, beta).unwrap(),
        );
        let k12 = AnalyticKernel::rl_constant(0.8, beta).unwrap();
        let (entries, applied) = composition_error(&g, &k1, &k2, &k12).unwrap();
        assert!(entries < 5e-3 && applied < 5e-3, "{entries} {applied}");
    }

    #[test]
    fn norm_bound_for_order_one() {
        let g = unit_grid(129);
        let k = AnalyticKernel::constant(real(2.0), 1.0, real(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let report = verify_norm_bound(&k, &g, 30, &mut rng).unwrap();
        assert_eq!(report.bound, 2.0);
        assert_eq!(report.passed, Some(true));
        assert!(report.max_ratio > 1.9);
    }
}
