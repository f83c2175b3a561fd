//! Numerical checks of the structural identities: duality between left and
//! right integrals, integration by parts (one-sided and combined), and the
//! Gronwall-type bound for the combined integral.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SeriesDensity, Side, TimeGrid};
use crate::kernel::AnalyticKernel;
use crate::linalg::{DenseMatrix, Lu};
use crate::operators::{
    self, build_integral, reciprocal_integral, FracOperatorMatrix, SeriesIntegral,
};
use crate::special::CScalar;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub name: String,
    pub lhs: CScalar,
    pub rhs: CScalar,
    pub abs_residual: f64,
    pub rel_residual: f64,
    pub n: usize,
    pub notes: Vec<String>,
}

impl IdentityReport {
    pub fn new(name: &str, lhs: CScalar, rhs: CScalar, n: usize) -> Self {
        let abs_residual = (lhs - rhs).norm();
        let rel_residual = abs_residual / lhs.norm().max(rhs.norm()).max(1e-300);
        Self {
            name: String::from(name),
            lhs,
            rhs,
            abs_residual,
            rel_residual,
            n,
            notes: Vec::new(),
        }
    }

    /// Measures the residual against `√ε · scale` when both sides are
    /// smaller than that, i.e. when they cancel to rounding level.
    fn floored(mut self, scale: f64) -> Self {
        let floor = f64::EPSILON.sqrt() * scale;
        if self.lhs.norm().max(self.rhs.norm()) < floor {
            self.rel_residual = self.abs_residual / floor;
            self.notes.push(format!(
                "sides cancel; residual relative to sqrt(eps) x {scale:.3e}"
            ));
        }
        self
    }
}

fn same_grid(grid: &TimeGrid, fs: &[&GridFunction]) -> Result<()> {
    if fs.iter().any(|f| f.grid() != grid) {
        return Err(Error::ShapeMismatch(String::from(
            "functions must live on the check's grid",
        )));
    }
    Ok(())
}

fn dot(grid: &TimeGrid, x: &[CScalar], y: &[CScalar]) -> CScalar {
    grid.trapezoid()
        .iter()
        .zip(x.iter().zip(y))
        .map(|(w, (a, b))| a * b * w)
        .sum()
}

fn order_note(k: &AnalyticKernel, notes: &mut Vec<String>) {
    let s = k.beta() + k.alpha();
    if s.norm() < 1.0 {
        log::warn!(
            "|alpha + beta| = {} < 1; the identity is only asserted for |alpha + beta| >= 1",
            s.norm()
        );
        notes.push(format!("|alpha + beta| = {:.4} < 1", s.norm()));
    }
}

/// How [`corrected_moment`] integrates `∫ u(t) F(|t - e|) dt`, where
/// `F = ∫_0^τ ρ` and `e` is the endpoint an inner integral starts from.
enum EndpointRule {
    /// Product quadrature of `u` against `F` itself.
    Antiderivative(Vec<CScalar>),
    /// `∫ U(t) ρ(|t - e|) dt` with `U` the trapezoid integral of `u` from the
    /// opposite end. Better when `ρ` has huge oscillating coefficients, but
    /// with the integral operator itself on both sides it makes duality
    /// exact on every grid, so only integration by parts uses it.
    Mirrored(Vec<CScalar>),
}

struct Primitive {
    rule: EndpointRule,
    identity: CScalar,
}

impl Primitive {
    fn antiderivative(grid: &TimeGrid, density: &SeriesDensity, side: Side) -> Result<Self> {
        let f = density.antiderivative(grid.len())?;
        let row = match side {
            Side::Left => f.row(grid, Side::Right, 0),
            Side::Right => f.row(grid, Side::Left, grid.n() - 1),
        };
        Ok(Self {
            rule: EndpointRule::Antiderivative(row),
            identity: CScalar::new(0.0, 0.0),
        })
    }

    /// `mirror` is the opposite-side density matrix of the same series.
    fn mirrored(grid: &TimeGrid, mirror: &DenseMatrix, identity: CScalar, side: Side) -> Self {
        let e = match side {
            Side::Left => 0,
            Side::Right => grid.n() - 1,
        };
        Self {
            rule: EndpointRule::Mirrored(mirror.row(e).to_vec()),
            identity,
        }
    }

    fn integrate(&self, grid: &TimeGrid, u: &[CScalar], side: Side) -> CScalar {
        let weighted = |row: &[CScalar], f: &[CScalar]| -> CScalar {
            row.iter().zip(f).map(|(a, b)| a * b).sum()
        };
        let constant = match &self.rule {
            EndpointRule::Antiderivative(row) => weighted(row, u),
            EndpointRule::Mirrored(row) => {
                let n = grid.n();
                let half = grid.h() / 2.0;
                let mut cumulative = alloc::vec![CScalar::new(0.0, 0.0); n];
                match side {
                    Side::Left => {
                        for i in (0..n - 1).rev() {
                            cumulative[i] = cumulative[i + 1] + (u[i] + u[i + 1]) * half;
                        }
                    }
                    Side::Right => {
                        for i in 1..n {
                            cumulative[i] = cumulative[i - 1] + (u[i] + u[i - 1]) * half;
                        }
                    }
                }
                weighted(row, &cumulative)
            }
        };
        constant + self.identity * grid.integrate(u)
    }
}

/// `∫ u · J v` for a one-sided integral `J = full` whose inner integral
/// starts at `e` (`a` for left, `b` for right). With `c = v(e)`, only
/// `u · J(v - c)` goes through the trapezoid sum and the constant part
/// `c ∫ u · J 1` follows `p`. For complex `β`, `J 1` behaves like
/// `|t - e|^{α + iβ m}` and the plain sum converges at order `1 + α` only.
fn corrected_moment(
    grid: &TimeGrid,
    u: &[CScalar],
    v: &[CScalar],
    side: Side,
    full: &DenseMatrix,
    p: &Primitive,
) -> CScalar {
    let e = match side {
        Side::Left => 0,
        Side::Right => grid.n() - 1,
    };
    let c = v[e];
    let shifted: Vec<CScalar> = v.iter().map(|z| z - c).collect();
    dot(grid, u, &full.matvec(&shifted)) + c * p.integrate(grid, u, side)
}

/// `∫ x · I_{a+} y` against `∫ y · I_{b-} x`. Outer integrals are
/// trapezoid sums except for the endpoint part of each inner integral, see
/// [`corrected_moment`]; the plain trapezoid residual is kept in the notes.
pub fn check_duality(
    k: &AnalyticKernel,
    grid: &TimeGrid,
    x: &GridFunction,
    y: &GridFunction,
) -> Result<IdentityReport> {
    same_grid(grid, &[x, y])?;
    let left = build_integral(grid, k, Side::Left)?;
    let right = build_integral(grid, k, Side::Right)?;
    let density = SeriesDensity::kernel(k, grid.len())?;
    let pl = Primitive::antiderivative(grid, &density, Side::Left)?;
    let pr = Primitive::antiderivative(grid, &density, Side::Right)?;
    let (x, y) = (x.values(), y.values());
    let lhs = corrected_moment(grid, x, y, Side::Left, &left.matrix, &pl);
    let rhs = corrected_moment(grid, y, x, Side::Right, &right.matrix, &pr);
    let mut report = IdentityReport::new("duality", lhs, rhs, grid.n());
    let plain = IdentityReport::new(
        "",
        dot(grid, x, &left.matrix.matvec(y)),
        dot(grid, y, &right.matrix.matvec(x)),
        0,
    );
    report.notes.push(format!(
        "plain trapezoid rel residual {:.3e}",
        plain.rel_residual
    ));
    order_note(k, &mut report.notes);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartsVariant {
    Left,
    Right,
    Combined(f64),
}

/// Operators shared by the integration-by-parts checks; outer integrals go
/// through [`corrected_moment`].
pub struct PartsOperators {
    grid: TimeGrid,
    diff: DenseMatrix,
    left: SeriesIntegral,
    right: SeriesIntegral,
    left_full: DenseMatrix,
    right_full: DenseMatrix,
    left_primitive: Primitive,
    right_primitive: Primitive,
}

impl PartsOperators {
    pub fn new(k: &AnalyticKernel, grid: &TimeGrid) -> Result<Self> {
        let left = reciprocal_integral(grid, k, Side::Left)?;
        let right = reciprocal_integral(grid, k, Side::Right)?;
        Ok(Self {
            grid: *grid,
            diff: operators::difference_matrix(grid),
            left_primitive: Primitive::mirrored(grid, &right.density, left.identity, Side::Left),
            right_primitive: Primitive::mirrored(grid, &left.density, right.identity, Side::Right),
            left_full: left.full(),
            right_full: right.full(),
            left,
            right,
        })
    }

    fn integral(&self, side: Side) -> (&SeriesIntegral, &DenseMatrix) {
        match side {
            Side::Left => (&self.left, &self.left_full),
            Side::Right => (&self.right, &self.right_full),
        }
    }

    /// `(Ī_side x)` at node `i`, identity part included.
    fn at(&self, side: Side, i: usize, x: &[CScalar]) -> CScalar {
        self.integral(side)
            .1
            .row(i)
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Density part of `(Ī_side x)` at node `i`.
    fn density_at(&self, side: Side, i: usize, x: &[CScalar]) -> CScalar {
        self.integral(side)
            .0
            .density
            .row(i)
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `∫ u · Ī_side v`.
    fn moment(&self, u: &[CScalar], side: Side, v: &[CScalar]) -> CScalar {
        match side {
            Side::Left => corrected_moment(
                &self.grid,
                u,
                v,
                side,
                &self.left_full,
                &self.left_primitive,
            ),
            Side::Right => corrected_moment(
                &self.grid,
                u,
                v,
                side,
                &self.right_full,
                &self.right_primitive,
            ),
        }
    }

    /// Second-order one-sided ends: the first-order SBP end rows leave an
    /// `O(h)` error in the first cell that `Ā`'s coefficients amplify.
    fn derivative(&self, x: &[CScalar]) -> Vec<CScalar> {
        let n = x.len();
        let two_h = 2.0 * self.grid.h();
        let mut d = self.diff.matvec(x);
        d[0] = (x[0] * -3.0 + x[1] * 4.0 - x[2]) / two_h;
        d[n - 1] = (x[n - 1] * 3.0 - x[n - 2] * 4.0 + x[n - 3]) / two_h;
        d
    }

    /// `(lhs, rhs)` of `∫ x·D^C_{a+} y = [y Ī_{b-} x]_a^b + ∫ y·D^{RL}_{b-} x`.
    ///
    /// `D^{RL}_{b-} x = -Ī_{b-}(x') + x(b) ρ̄(b-t)` and `∫ y ρ̄(b-t) dt` is the
    /// density part of `Ī_{a+} y` at `b`.
    fn left_form(&self, x: &[CScalar], y: &[CScalar]) -> (CScalar, CScalar) {
        let n = self.grid.n();
        let lhs = self.moment(x, Side::Left, &self.derivative(y));
        let boundary =
            y[n - 1] * self.at(Side::Right, n - 1, x) - y[0] * self.at(Side::Right, 0, x);
        let rl = -self.moment(y, Side::Right, &self.derivative(x))
            + x[n - 1] * self.density_at(Side::Left, n - 1, y);
        (lhs, boundary + rl)
    }

    /// `(lhs, rhs)` of `∫ x·D^C_{b-} y = -[y Ī_{a+} x]_a^b + ∫ y·D^{RL}_{a+} x`.
    fn right_form(&self, x: &[CScalar], y: &[CScalar]) -> (CScalar, CScalar) {
        let n = self.grid.n();
        let lhs = -self.moment(x, Side::Right, &self.derivative(y));
        let boundary =
            -(y[n - 1] * self.at(Side::Left, n - 1, x) - y[0] * self.at(Side::Left, 0, x));
        let rl = self.moment(y, Side::Left, &self.derivative(x))
            + x[0] * self.density_at(Side::Right, 0, y);
        (lhs, boundary + rl)
    }

    pub fn check(
        &self,
        x: &GridFunction,
        y: &GridFunction,
        variant: PartsVariant,
    ) -> Result<IdentityReport> {
        same_grid(&self.grid, &[x, y])?;
        let (x, y) = (x.values(), y.values());
        let (name, (lhs, rhs), scale) = match variant {
            PartsVariant::Left => (String::from("parts-left"), self.left_form(x, y), 0.0),
            PartsVariant::Right => (String::from("parts-right"), self.right_form(x, y), 0.0),
            PartsVariant::Combined(gamma) => {
                if !(0.0..=1.0).contains(&gamma) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma must lie in [0, 1], got {gamma}"
                    )));
                }
                let (ll, lr) = self.left_form(x, y);
                let (rl, rr) = self.right_form(x, y);
                let sides = (
                    ll * gamma + rl * (1.0 - gamma),
                    lr * gamma + rr * (1.0 - gamma),
                );
                let scale =
                    gamma * ll.norm().max(lr.norm()) + (1.0 - gamma) * rl.norm().max(rr.norm());
                (format!("parts-combined({gamma})"), sides, scale)
            }
        };
        Ok(IdentityReport::new(&name, lhs, rhs, self.grid.n()).floored(scale))
    }
}

/// Integration by parts for the left, right or combined Caputo operator.
pub fn check_parts(
    k: &AnalyticKernel,
    grid: &TimeGrid,
    x: &GridFunction,
    y: &GridFunction,
    variant: PartsVariant,
) -> Result<IdentityReport> {
    let mut report = PartsOperators::new(k, grid)?.check(x, y, variant)?;
    order_note(k, &mut report.notes);
    Ok(report)
}

/// `γ ^A I_{a+} + (1-γ) ^A I_{b-}`.
pub fn combined_integral(
    k: &AnalyticKernel,
    grid: &TimeGrid,
    gamma: f64,
) -> Result<FracOperatorMatrix> {
    operators::combine(
        &build_integral(grid, k, Side::Left)?,
        &build_integral(grid, k, Side::Right)?,
        gamma,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallBound {
    pub bound: GridFunction,
    /// Number of series terms `k ≥ 1` that were added.
    pub terms: usize,
    /// `(b-a)^{1-α}/M`, the operative premise threshold.
    pub threshold: f64,
    /// `1/((b-a)^α M)`, the reciprocal of the norm-lemma constant.
    pub threshold_norm_form: f64,
    pub max_g: f64,
}

const MAX_GRONWALL_TERMS: usize = 10_000;

fn real_nonnegative(name: &str, f: &GridFunction) -> Result<()> {
    let scale = f.sup_norm().max(1.0);
    if let Some(i) = f
        .values()
        .iter()
        .position(|z| z.re < -1e-14 * scale || z.im.abs() > 1e-14 * scale)
    {
        return Err(Error::InvalidParameter(format!(
            "{name} must be real and non-negative (node {i})"
        )));
    }
    Ok(())
}

/// `B = f + Σ_{k≥1} g^k (I^{α,β,γ})^k f`, stopped once a term's sup norm is
/// below `tol`.
pub fn gronwall_bound(
    f: &GridFunction,
    g: &GridFunction,
    k: &AnalyticKernel,
    grid: &TimeGrid,
    gamma: f64,
    tol: f64,
) -> Result<GronwallBound> {
    same_grid(grid, &[f, g])?;
    real_nonnegative("f", f)?;
    real_nonnegative("g", g)?;
    let gv = g.real_parts();
    let scale = gv.iter().cloned().fold(1.0, f64::max);
    if let Some(i) = gv.windows(2).position(|w| w[1] < w[0] - 1e-14 * scale) {
        return Err(Error::NonMonotoneG { index: i + 1 });
    }
    let m = k.sup_bound(grid.len())?.m;
    let threshold = grid.len().powf(1.0 - k.alpha()) / m;
    let threshold_norm_form = 1.0 / (grid.len().powf(k.alpha()) * m);
    let max_g = gv.iter().cloned().fold(0.0, f64::max);
    if max_g >= threshold {
        return Err(Error::PremiseViolation { max_g, threshold });
    }
    let op = combined_integral(k, grid, gamma)?;
    let mut bound = f.values().to_vec();
    let mut iterate = f.values().to_vec();
    let mut power: Vec<f64> = alloc::vec![1.0; grid.n()];
    let mut terms = 0;
    loop {
        if terms >= MAX_GRONWALL_TERMS {
            return Err(Error::NoConvergence {
                iterations: terms,
                last_change: f64::NAN,
            });
        }
        iterate = op.matrix.matvec(&iterate);
        for (p, gi) in power.iter_mut().zip(&gv) {
            *p *= gi;
        }
        let mut sup = 0.0f64;
        for ((b, v), p) in bound.iter_mut().zip(&iterate).zip(&power) {
            let term = v * p;
            sup = sup.max(term.norm());
            *b += term;
        }
        terms += 1;
        if !(sup < 1e150) {
            // the premise does not bound the combined operator for gamma < 1
            return Err(Error::NoConvergence {
                iterations: terms,
                last_change: sup,
            });
        }
        if sup < tol || max_g == 0.0 {
            break;
        }
    }
    Ok(GronwallBound {
        bound: GridFunction::new(*grid, bound)?,
        terms,
        threshold,
        threshold_norm_form,
        max_g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub bound: GronwallBound,
    /// `max_i (u_i - Re B_i)`; the conclusion holds when this is `≤ tol`.
    pub max_excess: f64,
    pub worst_index: usize,
    pub holds: bool,
}

/// Checks the hypothesis `u ≤ f + g·I^{α,β,γ} u` and then the conclusion
/// `u ≤ B` at every node.
pub fn verify_gronwall(
    u: &GridFunction,
    f: &GridFunction,
    g: &GridFunction,
    k: &AnalyticKernel,
    grid: &TimeGrid,
    gamma: f64,
    tol: f64,
) -> Result<GronwallReport> {
    same_grid(grid, &[u, f, g])?;
    let op = combined_integral(k, grid, gamma)?;
    let iu = op.matrix.matvec(u.values());
    for (i, w) in iu.iter().enumerate() {
        let rhs = f.values()[i].re + g.values()[i].re * w.re;
        let excess = u.values()[i].re - rhs;
        if excess > 1e-10 * (1.0 + rhs.abs()) {
            return Err(Error::HypothesisViolation { index: i, excess });
        }
    }
    let bound = gronwall_bound(f, g, k, grid, gamma, 1e-10)?;
    let (worst_index, max_excess) = u
        .values()
        .iter()
        .zip(bound.bound.values())
        .map(|(a, b)| a.re - b.re)
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, e)| if e > acc.1 { (i, e) } else { acc },
        );
    let scale = bound.bound.sup_norm().max(1.0);
    Ok(GronwallReport {
        holds: max_excess <= tol * scale,
        bound,
        max_excess,
        worst_index,
    })
}

/// One randomized feasible instance of the Gronwall hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallTrial {
    pub gamma: f64,
    pub u: GridFunction,
    pub f: GridFunction,
    pub g: GridFunction,
}

/// Draws `γ ∈ [0, 1]` (unless fixed), a non-negative `f`, an affine non-decreasing `g`
/// below 90% of the premise threshold and a slack `0 ≤ s ≤ f`, then sets
/// `u = (I - g·I_γ)^{-1}(f - s)` so the hypothesis holds with equality up
/// to the slack.
pub fn random_gronwall_trial<R: Rng + ?Sized>(
    k: &AnalyticKernel,
    grid: &TimeGrid,
    gamma: Option<f64>,
    rng: &mut R,
) -> Result<GronwallTrial> {
    let drawn = rng.random::<f64>();
    let gamma = gamma.unwrap_or(drawn);
    let m = k.sup_bound(grid.len())?.m;
    let threshold = grid.len().powf(1.0 - k.alpha()) / m;
    let (a, len) = (grid.a(), grid.len());
    let top = 0.9 * threshold * rng.random::<f64>();
    let slope_share = rng.random::<f64>();
    let g = GridFunction::from_real(*grid, |t| {
        top * ((1.0 - slope_share) + slope_share * (t - a) / len)
    })?;
    let (c0, c1, c2) = (
        rng.random::<f64>(),
        rng.random::<f64>(),
        rng.random::<f64>(),
    );
    let f = GridFunction::from_real(*grid, |t| {
        let s = (t - a) / len;
        c0 + c1 * s + c2 * (6.0 * s).sin().abs()
    })?;
    let slack = rng.random::<f64>();
    let rhs: Vec<CScalar> = f.values().iter().map(|v| v * (1.0 - slack)).collect();
    let op = combined_integral(k, grid, gamma)?;
    let n = grid.n();
    let mut system = DenseMatrix::identity(n);
    for i in 0..n {
        let gi = g.values()[i];
        for (s, w) in system.row_mut(i).iter_mut().zip(op.matrix.row(i)) {
            *s -= gi * w;
        }
    }
    let u = Lu::factor(&system)?.solve(&rhs);
    Ok(GronwallTrial {
        gamma,
        u: GridFunction::new(*grid, u)?,
        f,
        g,
    })
}
