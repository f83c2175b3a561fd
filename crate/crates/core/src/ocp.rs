//! Optimal control with combined Caputo dynamics.
//!
//! Maximize `J = ∫_a^b L(t, x, u) dt` subject to `^A_C D^{α,β,γ} x = f(t, x, u)`,
//! `x(a) = x_a` and `u(t) ∈ [u_min(t), u_max(t)]`. The Hamiltonian is
//! `H = L + λ f`; a Pontryagin extremal satisfies
//!
//! * optimality: `u` maximizes `H(t, x, ·, λ)` over the box,
//! * adjoint: `^A_RL D^{α,β,1-γ} λ = ∂H/∂x`,
//! * transversality: `(1-γ) ^Ā I^{1-α}_{a+} λ(b) + γ ^Ā I^{1-α}_{b-} λ(b) = 0`.
//!
//! States, adjoints and operator outputs are complex (complex `β`); the
//! expressions and the control are real and see `Re x`. Nodes where an
//! expression cannot be evaluated are excluded from residuals and reported.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::{Env, EvalError, Expr, Var};
use crate::grid::{GridFunction, Side, TimeGrid};
use crate::kernel::AnalyticKernel;
use crate::linalg::{DenseMatrix, Lu};
use crate::operators::{self, FracOperatorMatrix, OperatorKind, SeriesIntegral};
use crate::special::CScalar;
#[allow(unused_imports)]
use num_traits::Float;

const ZERO: CScalar = CScalar::new(0.0, 0.0);
const ONE: CScalar = CScalar::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
struct Partials {
    l_x: Expr,
    l_u: Expr,
    f_x: Expr,
    f_u: Expr,
    l_xx: Expr,
    l_xu: Expr,
    l_uu: Expr,
    f_xx: Expr,
    f_xu: Expr,
    f_uu: Expr,
}

impl Partials {
    fn new(l: &Expr, f: &Expr) -> Self {
        let (l_x, l_u, f_x, f_u) = (
            l.diff(Var::X),
            l.diff(Var::U),
            f.diff(Var::X),
            f.diff(Var::U),
        );
        Self {
            l_xx: l_x.diff(Var::X),
            l_xu: l_x.diff(Var::U),
            l_uu: l_u.diff(Var::U),
            f_xx: f_x.diff(Var::X),
            f_xu: f_x.diff(Var::U),
            f_uu: f_u.diff(Var::U),
            l_x,
            l_u,
            f_x,
            f_u,
        }
    }
}

/// Expression values at one `(t, x, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointData {
    pub l: f64,
    pub f: f64,
    pub l_x: f64,
    pub l_u: f64,
    pub f_x: f64,
    pub f_u: f64,
}

/// `K` against the premise `K < (b-a)^{1-α}/M` of the continuity lemma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzPremise {
    pub k: f64,
    pub estimated: bool,
    pub threshold: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcProblem {
    a: f64,
    b: f64,
    kernel: AnalyticKernel,
    gamma: f64,
    lagrangian: Expr,
    dynamics: Expr,
    x_a: f64,
    u_min: Option<Expr>,
    u_max: Option<Expr>,
    lipschitz: Option<f64>,
    partials: Partials,
}

impl OcProblem {
    pub fn new(
        a: f64,
        b: f64,
        kernel: AnalyticKernel,
        gamma: f64,
        lagrangian: Expr,
        dynamics: Expr,
        x_a: f64,
    ) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] is empty"
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in [0, 1], got {gamma}"
            )));
        }
        let alpha = kernel.alpha();
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "dynamics need alpha in (0, 1], got {alpha}"
            )));
        }
        let order = (kernel.beta() + alpha).norm();
        if order < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "|alpha + beta| = {order} is below 1"
            )));
        }
        kernel.check_interval(b - a)?;
        if !x_a.is_finite() {
            return Err(Error::InvalidParameter(String::from("x_a must be finite")));
        }
        let partials = Partials::new(&lagrangian, &dynamics);
        Ok(Self {
            a,
            b,
            kernel,
            gamma,
            lagrangian,
            dynamics,
            x_a,
            u_min: None,
            u_max: None,
            lipschitz: None,
            partials,
        })
    }

    /// Pointwise control bounds, expressions in `t` only; `None` is unbounded.
    pub fn with_bounds(mut self, u_min: Option<Expr>, u_max: Option<Expr>) -> Result<Self> {
        for e in u_min.iter().chain(u_max.iter()) {
            if e.depends_on(Var::X) || e.depends_on(Var::U) {
                return Err(Error::InvalidParameter(format!(
                    "control bound '{e}' may only depend on t"
                )));
            }
        }
        self.u_min = u_min;
        self.u_max = u_max;
        Ok(self)
    }

    pub fn with_lipschitz(mut self, k: f64) -> Self {
        self.lipschitz = Some(k);
        self
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }
    pub fn kernel(&self) -> &AnalyticKernel {
        &self.kernel
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }
    pub fn dynamics(&self) -> &Expr {
        &self.dynamics
    }
    pub fn x_a(&self) -> f64 {
        self.x_a
    }
    pub fn is_unbounded(&self) -> bool {
        self.u_min.is_none() && self.u_max.is_none()
    }

    pub fn grid(&self, n: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.a, self.b, n)
    }

    pub fn point(&self, t: f64, x: f64, u: f64) -> Result<PointData, EvalError> {
        let env = Env::new(t, x, u);
        let p = &self.partials;
        Ok(PointData {
            l: self.lagrangian.eval(&env)?,
            f: self.dynamics.eval(&env)?,
            l_x: p.l_x.eval(&env)?,
            l_u: p.l_u.eval(&env)?,
            f_x: p.f_x.eval(&env)?,
            f_u: p.f_u.eval(&env)?,
        })
    }

    /// `∂²H/∂u² = L_uu + Re λ f_uu`.
    fn h_uu(&self, t: f64, x: f64, u: f64, lambda: f64) -> Result<f64, EvalError> {
        let env = Env::new(t, x, u);
        Ok(self.partials.l_uu.eval(&env)? + lambda * self.partials.f_uu.eval(&env)?)
    }

    fn bounds_at(&self, t: f64) -> Result<(f64, f64)> {
        let env = Env::new(t, 0.0, 0.0);
        let lo = match &self.u_min {
            Some(e) => e.eval(&env)?,
            None => f64::NEG_INFINITY,
        };
        let hi = match &self.u_max {
            Some(e) => e.eval(&env)?,
            None => f64::INFINITY,
        };
        if lo > hi {
            return Err(Error::InvalidParameter(format!(
                "empty control box [{lo}, {hi}] at t = {t}"
            )));
        }
        Ok((lo, hi))
    }

    fn bounds(&self, grid: &TimeGrid) -> Result<Vec<(f64, f64)>> {
        grid.nodes()
            .into_iter()
            .map(|t| self.bounds_at(t))
            .collect()
    }

    /// Declared `K`, or `sup max(|f_x|, |f_u|)` sampled on the grid's nodes
    /// for `x, u` in `[-envelope, envelope]`.
    pub fn lipschitz_premise(&self, grid: &TimeGrid, envelope: f64) -> Result<LipschitzPremise> {
        let sup = self.kernel.sup_bound(self.b - self.a)?;
        let threshold = (self.b - self.a).powf(1.0 - self.kernel.alpha()) / sup.m;
        let (k, estimated) = match self.lipschitz {
            Some(k) => (k, false),
            None => {
                let mut k = 0.0f64;
                let levels: Vec<f64> = (0..9).map(|i| envelope * (i as f64 / 4.0 - 1.0)).collect();
                for t in grid.nodes() {
                    for &x in &levels {
                        for &u in &levels {
                            let env = Env::new(t, x, u);
                            if let (Ok(fx), Ok(fu)) =
                                (self.partials.f_x.eval(&env), self.partials.f_u.eval(&env))
                            {
                                k = k.max(fx.abs()).max(fu.abs());
                            }
                        }
                    }
                }
                (k, true)
            }
        };
        Ok(LipschitzPremise {
            k,
            estimated,
            threshold,
            satisfied: k < threshold,
        })
    }

    /// Operators on `grid` shared by the residual evaluation and the solver.
    pub fn discretize(&self, grid: &TimeGrid) -> Result<Discretization> {
        if (grid.a() - self.a).abs() > 1e-12 || (grid.b() - self.b).abs() > 1e-12 {
            return Err(Error::ShapeMismatch(format!(
                "grid [{}, {}] does not cover the problem interval [{}, {}]",
                grid.a(),
                grid.b(),
                self.a,
                self.b
            )));
        }
        if grid.n() < 5 {
            return Err(Error::InvalidParameter(format!(
                "control problems need at least 5 nodes, got {}",
                grid.n()
            )));
        }
        let k = &self.kernel;
        let cap = operators::combine(
            &operators::build_caputo_l1(grid, k, Side::Left)?,
            &operators::build_caputo_l1(grid, k, Side::Right)?,
            self.gamma,
        )?;
        let row = if self.gamma > 0.0 { 0 } else { grid.n() - 1 };
        let mut active = cap.matrix.clone();
        active.set_row(row, &vec![ZERO; grid.n()]);
        let rl = FracOperatorMatrix {
            kind: OperatorKind::CombinedRL,
            matrix: active.transpose(),
            grid: *grid,
            kernel: cap.kernel.clone(),
            gamma: 1.0 - self.gamma,
            pre_difference: None,
        };
        let left = operators::reciprocal_integral(grid, k, Side::Left)?;
        let right = operators::reciprocal_integral(grid, k, Side::Right)?;
        Ok(Discretization {
            grid: *grid,
            gamma: self.gamma,
            cap,
            rl,
            left,
            right,
        })
    }
}

/// `H = L + λ f` at one point.
pub fn hamiltonian(p: &OcProblem, t: f64, x: f64, u: f64, lambda: CScalar) -> Result<CScalar> {
    let env = Env::new(t, x, u);
    Ok(lambda * p.dynamics.eval(&env)? + p.lagrangian.eval(&env)?)
}

/// Operators of one control problem on one grid.
///
/// The state operator is the L1 form of the combined Caputo derivative. Its
/// row `r` (the node whose integral is empty) is replaced by `x(a) = x_a`.
/// The adjoint operator is the transpose of the remaining rows: by the
/// integration-by-parts formula this is the combined Riemann–Liouville
/// derivative of order `1-γ` in its Caputo representation, with the
/// `λ(b) ρ̄(b-t)` term as a cell average. With the quadrature
/// `J ≈ h Σ_{i≠r} L_i` it is the exact discrete adjoint, so `h ∂H/∂u` is the
/// gradient of the discrete objective. Its last row, times `h`, is the
/// discrete transversality condition.
pub struct Discretization {
    grid: TimeGrid,
    gamma: f64,
    /// `^A_C D^{α,β,γ}`.
    pub cap: FracOperatorMatrix,
    /// `^A_RL D^{α,β,1-γ}`.
    pub rl: FracOperatorMatrix,
    pub left: SeriesIntegral,
    pub right: SeriesIntegral,
}

impl Discretization {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Row replaced by `x(a) = x_a`: the one whose integral is empty, `a` for
    /// `γ > 0` and `b` for the pure right-sided operator.
    pub fn state_row(&self) -> usize {
        if self.gamma > 0.0 {
            0
        } else {
            self.grid.n() - 1
        }
    }

    /// Quadrature weights of the discrete objective: `h`, and 0 at the state row.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.grid.h(); self.grid.n()];
        w[self.state_row()] = 0.0;
        w
    }

    /// `λ` at the state row has no equation of its own; it is extrapolated
    /// linearly from its two neighbours. The row it replaces belongs to the
    /// fixed `x(a)`.
    fn extrapolation_row(&self) -> Vec<CScalar> {
        let n = self.grid.n();
        let r = self.state_row();
        let (i1, i2) = if r == 0 { (1, 2) } else { (n - 2, n - 3) };
        let mut row = vec![ZERO; n];
        row[r] = ONE;
        row[i1] = CScalar::new(-2.0, 0.0);
        row[i2] = ONE;
        row
    }

    fn full_row(int: &SeriesIntegral, i: usize) -> Vec<CScalar> {
        let mut row = int.density.row(i).to_vec();
        row[i] += int.identity;
        row
    }

    /// Literal transversality row: the right integral at `b` is empty, so
    /// only its identity part survives.
    fn transversality_row(&self) -> Vec<CScalar> {
        let n = self.grid.n();
        let mut row: Vec<CScalar> = Self::full_row(&self.left, n - 1)
            .into_iter()
            .map(|v| v * (1.0 - self.gamma))
            .collect();
        row[n - 1] += self.right.identity * self.gamma;
        row
    }

    /// Alternative reading with the right integral evaluated at `a`.
    fn transversality_row_alt(&self) -> Vec<CScalar> {
        let n = self.grid.n();
        let left = Self::full_row(&self.left, n - 1);
        let right = Self::full_row(&self.right, 0);
        left.iter()
            .zip(&right)
            .map(|(l, r)| l * (1.0 - self.gamma) + r * self.gamma)
            .collect()
    }
}

fn dot(a: &[CScalar], b: &[CScalar]) -> CScalar {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_diff(a: &[CScalar], b: &[CScalar]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `(x, u, λ)` on a shared grid. `missing` lists nodes whose values were
/// unavailable (e.g. a pole of the control); they hold placeholder values.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: GridFunction,
    pub u: GridFunction,
    pub lambda: GridFunction,
    pub missing: Vec<usize>,
}

impl Candidate {
    pub fn new(x: GridFunction, u: GridFunction, lambda: GridFunction) -> Result<Self> {
        Self::with_missing(x, u, lambda, Vec::new())
    }

    pub fn with_missing(
        x: GridFunction,
        u: GridFunction,
        lambda: GridFunction,
        mut missing: Vec<usize>,
    ) -> Result<Self> {
        if x.grid() != u.grid() || x.grid() != lambda.grid() {
            return Err(Error::ShapeMismatch(String::from(
                "candidate components live on different grids",
            )));
        }
        missing.sort_unstable();
        missing.dedup();
        if let Some(&i) = missing.iter().find(|&&i| i >= x.len()) {
            return Err(Error::ShapeMismatch(format!(
                "missing node {i} is outside the grid"
            )));
        }
        Ok(Self {
            x,
            u,
            lambda,
            missing,
        })
    }

    /// Samples `x`, `u`, `λ` from expressions in `t`; nodes where any of them
    /// fails to evaluate are recorded as missing and set to 0.
    pub fn from_exprs(grid: TimeGrid, x: &Expr, u: &Expr, lambda: &Expr) -> Result<Self> {
        let mut missing = Vec::new();
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for (i, t) in grid.nodes().into_iter().enumerate() {
            let env = Env::new(t, 0.0, 0.0);
            let vals: Result<Vec<f64>, EvalError> =
                [x, u, lambda].iter().map(|e| e.eval(&env)).collect();
            match vals {
                Ok(v) => {
                    for (c, v) in cols.iter_mut().zip(v) {
                        c.push(CScalar::new(v, 0.0));
                    }
                }
                Err(_) => {
                    missing.push(i);
                    for c in cols.iter_mut() {
                        c.push(ZERO);
                    }
                }
            }
        }
        let [xs, us, ls] = cols;
        Self::with_missing(
            GridFunction::new(grid, xs)?,
            GridFunction::new(grid, us)?,
            GridFunction::new(grid, ls)?,
            missing,
        )
    }

    pub fn grid(&self) -> &TimeGrid {
        self.x.grid()
    }

    /// The control with missing nodes filled by linear interpolation.
    pub fn filled_control(&self) -> Vec<f64> {
        let mut u = self.u.real_parts();
        fill_missing(&mut u, &self.missing);
        u
    }
}

/// Linear interpolation over `holes` from the nearest valid neighbours.
fn fill_missing(values: &mut [f64], holes: &[usize]) {
    if holes.is_empty() {
        return;
    }
    let hole: BTreeSet<usize> = holes.iter().copied().collect();
    let n = values.len();
    for &i in holes {
        let prev = (0..i).rev().find(|j| !hole.contains(j));
        let next = (i + 1..n).find(|j| !hole.contains(j));
        values[i] = match (prev, next) {
            (Some(p), Some(q)) => {
                values[p] + (values[q] - values[p]) * (i - p) as f64 / (q - p) as f64
            }
            (Some(p), None) => values[p],
            (None, Some(q)) => values[q],
            (None, None) => 0.0,
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalReport {
    pub r_state: f64,
    pub r_adjoint: f64,
    pub r_optimality: f64,
    /// Discrete transversality: `h` times the boundary row of the adjoint
    /// system, the condition the solver enforces.
    pub r_transversality: f64,
    /// Literal condition with the right integral at `b` (empty).
    pub r_transversality_literal: f64,
    /// Literal condition with the right integral evaluated at `a`.
    pub r_transversality_alt: f64,
    /// Trapezoid rule, excluded nodes interpolated.
    pub objective: f64,
    pub excluded_nodes: Vec<usize>,
    /// `sup |Im x|`.
    pub state_imag: f64,
    pub initial_error: f64,
}

/// Per-node expression data with failed nodes excluded.
struct NodeData {
    data: Vec<Option<PointData>>,
    excluded: Vec<usize>,
}

impl NodeData {
    fn collect(
        p: &OcProblem,
        grid: &TimeGrid,
        x: &[CScalar],
        u: &[f64],
        missing: &[usize],
    ) -> Self {
        let skip: BTreeSet<usize> = missing.iter().copied().collect();
        let data: Vec<Option<PointData>> = grid
            .nodes()
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                if skip.contains(&i) {
                    None
                } else {
                    p.point(t, x[i].re, u[i]).ok()
                }
            })
            .collect();
        let excluded = data
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_none())
            .map(|(i, _)| i)
            .collect();
        Self { data, excluded }
    }
}

/// `f(t, Re x, u) + i f_x Im x`: the first-order complexification used for
/// complex states (exact for `f` affine in `x`).
fn complexified(value: f64, slope: f64, x: CScalar) -> CScalar {
    CScalar::new(value, slope * x.im)
}

fn objective_from(grid: &TimeGrid, data: &NodeData) -> f64 {
    let mut l: Vec<f64> = data.data.iter().map(|d| d.map_or(0.0, |d| d.l)).collect();
    fill_missing(&mut l, &data.excluded);
    grid.trapezoid().iter().zip(&l).map(|(w, v)| w * v).sum()
}

/// The objective the solver maximizes: `Σ w_i L_i` over available nodes.
fn discrete_objective(weights: &[f64], data: &NodeData) -> f64 {
    weights
        .iter()
        .zip(&data.data)
        .map(|(w, d)| d.map_or(0.0, |d| w * d.l))
        .sum()
}

pub fn evaluate_extremal(p: &OcProblem, c: &Candidate) -> Result<ExtremalReport> {
    let grid = *c.grid();
    let disc = p.discretize(&grid)?;
    evaluate_with(p, &disc, c)
}

/// [`evaluate_extremal`] with prebuilt operators.
pub fn evaluate_with(
    p: &OcProblem,
    disc: &Discretization,
    c: &Candidate,
) -> Result<ExtremalReport> {
    let grid = *c.grid();
    if grid != disc.grid {
        return Err(Error::ShapeMismatch(String::from(
            "candidate and operators use different grids",
        )));
    }
    let n = grid.n();
    let x = c.x.values();
    let lambda = c.lambda.values();
    let u = c.u.real_parts();
    let initial_error = (x[0] - p.x_a).norm();
    if initial_error > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "candidate violates x(a) = {} by {initial_error:e}",
            p.x_a
        )));
    }
    let nodes = NodeData::collect(p, &grid, x, &u, &c.missing);
    let cx = disc.cap.apply(&c.x)?;
    let rl = disc.rl.apply(&c.lambda)?;
    let (mut r_state, mut r_adjoint, mut r_optimality) = (0.0f64, 0.0f64, 0.0f64);
    let times = grid.nodes();
    for (i, d) in nodes.data.iter().enumerate() {
        let Some(d) = d else { continue };
        if i > 0 && i < n - 1 {
            let f = complexified(d.f, d.f_x, x[i]);
            r_state = r_state.max((cx.values()[i] - f).norm());
            let h_x = lambda[i] * d.f_x + d.l_x;
            r_adjoint = r_adjoint.max((rl.values()[i] - h_x).norm());
        }
        let (lo, hi) = p.bounds_at(times[i])?;
        let h_u = (lambda[i] * d.f_u + d.l_u).re;
        r_optimality = r_optimality.max((u[i] - (u[i] + h_u).clamp(lo, hi)).abs());
    }
    let last = n - 1;
    let boundary = if disc.state_row() == last {
        Some(rl.values()[last])
    } else {
        nodes.data[last].map(|d| rl.values()[last] - (lambda[last] * d.f_x + d.l_x))
    };
    Ok(ExtremalReport {
        r_state,
        r_adjoint,
        r_optimality,
        r_transversality: boundary.map_or(f64::NAN, |v| v.norm() * grid.h()),
        r_transversality_literal: dot(&disc.transversality_row(), lambda).norm(),
        r_transversality_alt: dot(&disc.transversality_row_alt(), lambda).norm(),
        objective: objective_from(&grid, &nodes),
        excluded_nodes: nodes.excluded,
        state_imag: x.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
        initial_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbsOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Step shrink factor of the backtracking line search.
    pub damping: f64,
}

impl Default for FbsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            damping: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbsStatus {
    /// The monotone line-search phase reached `tol`.
    Converged,
    /// The line search stopped making progress and fixed-point sweeps
    /// (full step, no line search) reached `tol`.
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbsSolution {
    pub candidate: Candidate,
    /// Total sweeps, both phases.
    pub iterations: usize,
    /// Sweeps taken without line search.
    pub fixed_point_iterations: usize,
    pub status: FbsStatus,
    /// Discrete objective `h Σ_{i≠r} L_i` after every accepted line-search
    /// iteration, starting with the initial control.
    pub objective: Vec<f64>,
    /// Discrete objective of the returned control.
    pub final_objective: f64,
    pub last_change: f64,
    /// Nodes where the control is held fixed because `L`, `f` or their
    /// partials cannot be evaluated.
    pub excluded_nodes: Vec<usize>,
    pub state_imag: f64,
}

/// LU factors reused while the diagonal shift `diag(f_x)` is unchanged.
struct ShiftedSolver<'a> {
    base: &'a DenseMatrix,
    row: usize,
    closure: Vec<CScalar>,
    cached: Option<(Vec<f64>, Lu)>,
}

impl<'a> ShiftedSolver<'a> {
    fn new(base: &'a DenseMatrix, row: usize, closure: Vec<CScalar>) -> Self {
        Self {
            base,
            row,
            closure,
            cached: None,
        }
    }

    /// Solves `(base - diag(shift)) v = rhs` with row `row` replaced by the
    /// closure row.
    fn solve(&mut self, shift: &[f64], rhs: &[CScalar]) -> Result<Vec<CScalar>> {
        let fresh = !matches!(&self.cached, Some((s, _)) if s.as_slice() == shift);
        if fresh {
            let mut m = self.base.clone();
            for (i, s) in shift.iter().enumerate() {
                m[(i, i)] -= *s;
            }
            m.set_row(self.row, &self.closure);
            self.cached = Some((shift.to_vec(), Lu::factor(&m)?));
        }
        let (_, lu) = self.cached.as_ref().expect("factor cached above");
        Ok(lu.solve(rhs))
    }
}

struct StateSolver<'a> {
    p: &'a OcProblem,
    grid: TimeGrid,
    row: usize,
    linear: ShiftedSolver<'a>,
    affine: bool,
}

const NEWTON_MAX: usize = 50;

impl<'a> StateSolver<'a> {
    fn new(p: &'a OcProblem, disc: &'a Discretization) -> Self {
        let n = disc.grid.n();
        let row = disc.state_row();
        let mut e = vec![ZERO; n];
        e[0] = ONE;
        Self {
            p,
            grid: disc.grid,
            row,
            linear: ShiftedSolver::new(&disc.cap.matrix, row, e),
            affine: !p.partials.f_x.depends_on(Var::X),
        }
    }

    fn eval_f(&self, x: &[CScalar], u: &[f64]) -> Result<(Vec<CScalar>, Vec<f64>)> {
        let mut f = Vec::with_capacity(x.len());
        let mut fx = Vec::with_capacity(x.len());
        for (i, t) in self.grid.nodes().into_iter().enumerate() {
            let env = Env::new(t, x[i].re, u[i]);
            let slope = self.p.partials.f_x.eval(&env)?;
            f.push(complexified(self.p.dynamics.eval(&env)?, slope, x[i]));
            fx.push(slope);
        }
        Ok((f, fx))
    }

    /// Newton on `M_C x - f(x) = 0` with the initial-condition row; a single
    /// linear solve when `f` is affine in `x`.
    fn solve(&mut self, u: &[f64], guess: Option<&[CScalar]>) -> Result<Vec<CScalar>> {
        let n = self.grid.n();
        let mut x = guess.map_or_else(
            || vec![CScalar::new(self.p.x_a, 0.0); n],
            <[CScalar]>::to_vec,
        );
        for it in 0..NEWTON_MAX {
            let (f, fx) = self.eval_f(&x, u)?;
            let rhs: Vec<CScalar> = if self.affine {
                // (M - diag f_x) x = f - f_x x
                let mut r: Vec<CScalar> = f
                    .iter()
                    .zip(&fx)
                    .zip(&x)
                    .map(|((f, s), x)| f - x * *s)
                    .collect();
                r[self.row] = CScalar::new(self.p.x_a, 0.0);
                r
            } else {
                let mx = self.linear.base.matvec(&x);
                let mut r: Vec<CScalar> = mx.iter().zip(&f).map(|(m, f)| f - m).collect();
                r[self.row] = CScalar::new(self.p.x_a, 0.0) - x[0];
                r
            };
            let step = self.linear.solve(&fx, &rhs)?;
            if self.affine {
                return Ok(step);
            }
            let size = step.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for (xi, s) in x.iter_mut().zip(&step) {
                *xi += s;
            }
            let scale = 1.0 + x.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if size <= 1e-13 * scale {
                return Ok(x);
            }
            if !size.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it + 1,
                    last_change: size,
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: NEWTON_MAX,
            last_change: f64::NAN,
        })
    }
}

struct AdjointSolver<'a> {
    p: &'a OcProblem,
    grid: TimeGrid,
    /// Node without a state equation.
    free: usize,
    linear: ShiftedSolver<'a>,
}

impl<'a> AdjointSolver<'a> {
    fn new(p: &'a OcProblem, disc: &'a Discretization) -> Self {
        let free = disc.state_row();
        // row 0 is stationarity in the fixed x(a)
        Self {
            p,
            grid: disc.grid,
            free,
            linear: ShiftedSolver::new(&disc.rl.matrix, 0, disc.extrapolation_row()),
        }
    }

    /// `(M_RL - diag f_x) λ = L_x` on every node with a state equation;
    /// `L_x` is dropped where `L` is unavailable.
    fn solve(&mut self, x: &[CScalar], u: &[f64], nodes: &NodeData) -> Result<Vec<CScalar>> {
        let mut fx = Vec::with_capacity(x.len());
        let mut rhs = Vec::with_capacity(x.len());
        for (i, t) in self.grid.nodes().into_iter().enumerate() {
            if i == self.free {
                fx.push(0.0);
                rhs.push(ZERO);
                continue;
            }
            fx.push(self.p.partials.f_x.eval(&Env::new(t, x[i].re, u[i]))?);
            rhs.push(CScalar::new(nodes.data[i].map_or(0.0, |d| d.l_x), 0.0));
        }
        rhs[0] = ZERO;
        self.linear.solve(&fx, &rhs)
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: i32 = 40;

struct Sweep {
    u: Vec<f64>,
    x: Vec<CScalar>,
    lambda: Vec<CScalar>,
    nodes: NodeData,
    j: f64,
}

/// Forward–backward sweep with a projected-gradient control update.
///
/// Each iteration solves the state equation for the current control, the
/// adjoint system (see [`Discretization`]), and moves the control along
/// `Re ∂H/∂u`, projected onto the box. The step starts at the
/// Barzilai–Borwein estimate from the previous iterate (`σ₀ = 1/max|∂²H/∂u²|`
/// on the first one) and is multiplied by `opts.damping` until the discrete
/// objective shows an Armijo increase. Since `h ∂H/∂u` is its exact
/// gradient, this only fails at rounding level; the sweep then continues
/// with full steps. Stops when the sup change of `(x, u, λ)` is below
/// `opts.tol`.
pub fn solve_fbs(p: &OcProblem, init_u: &GridFunction, opts: FbsOptions) -> Result<FbsSolution> {
    let grid = *init_u.grid();
    let disc = p.discretize(&grid)?;
    solve_fbs_with(p, &disc, init_u, opts)
}

pub fn solve_fbs_with(
    p: &OcProblem,
    disc: &Discretization,
    init_u: &GridFunction,
    opts: FbsOptions,
) -> Result<FbsSolution> {
    let grid = *init_u.grid();
    if grid != disc.grid {
        return Err(Error::ShapeMismatch(String::from(
            "initial control and operators use different grids",
        )));
    }
    if !(opts.damping > 0.0 && opts.damping < 1.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(String::from(
            "damping must lie in (0, 1) and tol be positive",
        )));
    }
    let premise = p.lipschitz_premise(&grid, 1.0)?;
    if !premise.satisfied {
        log::info!(
            "Lipschitz constant {} is not below (b-a)^(1-alpha)/M = {}",
            premise.k,
            premise.threshold
        );
    }
    let n = grid.n();
    let times = grid.nodes();
    let bounds = p.bounds(&grid)?;
    let mut state = StateSolver::new(p, disc);
    let mut adjoint = AdjointSolver::new(p, disc);
    let weights = disc.weights();

    let u: Vec<f64> = init_u
        .real_parts()
        .iter()
        .zip(&bounds)
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let x = state.solve(&u, None)?;
    let nodes = NodeData::collect(p, &grid, &x, &u, &[]);
    let lambda = adjoint.solve(&x, &u, &nodes)?;
    let j = discrete_objective(&weights, &nodes);
    let mut cur = Sweep {
        u,
        x,
        lambda,
        nodes,
        j,
    };
    let mut history = vec![j];
    let mut last_change = f64::INFINITY;
    let mut status = None;
    let mut iterations = 0;
    let mut fixed_point_iterations = 0;
    let mut monotone = true;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut direction = vec![0.0; n];
        let mut curvature = 0.0f64;
        for i in 0..n {
            let Some(d) = cur.nodes.data[i] else { continue };
            direction[i] = (cur.lambda[i] * d.f_u + d.l_u).re;
            if let Ok(c) = p.h_uu(times[i], cur.x[i].re, cur.u[i], cur.lambda[i].re) {
                curvature = curvature.max(c.abs());
            }
        }
        let sigma0 = if curvature > 0.0 {
            1.0 / curvature
        } else {
            1.0
        };
        // Barzilai-Borwein guess from the last accepted step
        let sigma_start = match &previous {
            Some((u0, d0)) => {
                let (mut ss, mut sy) = (0.0, 0.0);
                for i in 0..n {
                    let s = cur.u[i] - u0[i];
                    ss += weights[i] * s * s;
                    sy += weights[i] * s * (direction[i] - d0[i]);
                }
                if sy < 0.0 {
                    (-ss / sy).clamp(sigma0 * 1e-3, sigma0 * 1e3)
                } else {
                    sigma0
                }
            }
            None => sigma0,
        };
        previous = Some((cur.u.clone(), direction.clone()));
        let step = |sigma: f64| -> Vec<f64> {
            cur.u
                .iter()
                .zip(&direction)
                .zip(&bounds)
                .map(|((v, d), (lo, hi))| (v + sigma * d).clamp(*lo, *hi))
                .collect()
        };
        let mut next = None;
        if monotone {
            let mut sigma = sigma_start;
            for _ in 0..MAX_HALVINGS {
                let trial = step(sigma);
                let xt = state.solve(&trial, Some(cur.x.as_slice()))?;
                let nt = NodeData::collect(p, &grid, &xt, &trial, &[]);
                let jt = discrete_objective(&weights, &nt);
                let ascent: f64 = (0..n)
                    .map(|i| weights[i] * direction[i] * (trial[i] - cur.u[i]))
                    .sum();
                if jt >= cur.j + ARMIJO * ascent && jt >= cur.j - 1e-15 * (1.0 + cur.j.abs()) {
                    next = Some((trial, xt, nt, jt));
                    break;
                }
                sigma *= opts.damping;
            }
            if next.is_none() {
                log::debug!(
                    "line search stalled after {iterations} iterations; continuing with full steps"
                );
                monotone = false;
            }
        }
        let (trial, xt, nt, jt) = match next {
            Some(v) => v,
            None => {
                fixed_point_iterations += 1;
                let trial = step(sigma0);
                let xt = state.solve(&trial, Some(cur.x.as_slice()))?;
                let nt = NodeData::collect(p, &grid, &xt, &trial, &[]);
                let jt = discrete_objective(&weights, &nt);
                (trial, xt, nt, jt)
            }
        };
        let lt = adjoint.solve(&xt, &trial, &nt)?;
        let du = cur
            .u
            .iter()
            .zip(&trial)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        last_change = du
            .max(sup_diff(&cur.x, &xt))
            .max(sup_diff(&cur.lambda, &lt));
        cur = Sweep {
            u: trial,
            x: xt,
            lambda: lt,
            nodes: nt,
            j: jt,
        };
        if monotone {
            history.push(jt);
        }
        log::debug!("fbs iteration {iterations}: J = {jt:.12e}, change = {last_change:.3e}");
        if last_change < opts.tol {
            status = Some(if monotone {
                FbsStatus::Converged
            } else {
                FbsStatus::FixedPoint
            });
            break;
        }
    }
    let Some(status) = status else {
        return Err(Error::NoConvergence {
            iterations,
            last_change,
        });
    };
    let state_imag = cur.x.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let u = cur.u.iter().map(|v| CScalar::new(*v, 0.0)).collect();
    let candidate = Candidate::new(
        GridFunction::new(grid, cur.x)?,
        GridFunction::new(grid, u)?,
        GridFunction::new(grid, cur.lambda)?,
    )?;
    Ok(FbsSolution {
        candidate,
        iterations,
        fixed_point_iterations,
        status,
        objective: history,
        final_objective: cur.j,
        last_change,
        excluded_nodes: cur.nodes.excluded,
        state_imag,
    })
}

/// Solves the state equation alone for a given control.
pub fn solve_state(p: &OcProblem, disc: &Discretization, u: &[f64]) -> Result<GridFunction> {
    if u.len() != disc.grid.n() {
        return Err(Error::ShapeMismatch(format!(
            "control has {} samples for {} nodes",
            u.len(),
            disc.grid.n()
        )));
    }
    let x = StateSolver::new(p, disc).solve(u, None)?;
    GridFunction::new(disc.grid, x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcavityWitness {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyReport {
    pub lambda_nonnegative: bool,
    pub min_lambda: f64,
    /// Node of the most negative `Re λ`.
    pub lambda_witness: Option<usize>,
    pub max_eig_l: f64,
    pub max_eig_f: f64,
    pub l_concave: bool,
    pub f_concave: bool,
    pub witness_l: Option<ConcavityWitness>,
    pub witness_f: Option<ConcavityWitness>,
    pub samples: usize,
    pub skipped: usize,
    pub passed: bool,
}

fn max_eigenvalue(xx: f64, xu: f64, uu: f64) -> f64 {
    let mean = 0.5 * (xx + uu);
    let half = 0.5 * (xx - uu);
    mean + (half * half + xu * xu).sqrt()
}

const SUFFICIENCY_TOL: f64 = 1e-10;

/// Mangasarian-type check: `Re λ ≥ -1e-12` at every available node and the
/// `(x, u)` Hessians of `L` and `f` negative semidefinite at `samples` random
/// points of the candidate's envelope (ranges widened by 10%).
pub fn check_sufficiency<R: Rng + ?Sized>(
    p: &OcProblem,
    c: &Candidate,
    samples: usize,
    rng: &mut R,
) -> Result<SufficiencyReport> {
    if !p.is_unbounded() {
        return Err(Error::InvalidParameter(String::from(
            "the sufficiency theorem assumes unconstrained controls",
        )));
    }
    let skip: BTreeSet<usize> = c.missing.iter().copied().collect();
    let mut min_lambda = f64::INFINITY;
    let mut lambda_witness = None;
    for (i, l) in c.lambda.values().iter().enumerate() {
        if !skip.contains(&i) && l.re < min_lambda {
            min_lambda = l.re;
            lambda_witness = Some(i);
        }
    }
    let lambda_nonnegative = min_lambda >= -1e-12;
    let range = |v: &[CScalar]| -> (f64, f64) {
        let vals = v
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, z)| z.re);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| {
            (a.min(z), b.max(z))
        });
        let pad = 0.1 * (hi - lo) + 1e-3;
        (lo - pad, hi + pad)
    };
    let (xl, xh) = range(c.x.values());
    let (ul, uh) = range(c.u.values());
    let grid = c.grid();
    let pd = &p.partials;
    let (mut max_eig_l, mut max_eig_f) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut witness_l, mut witness_f) = (None, None);
    let mut skipped = 0;
    for _ in 0..samples {
        let t = grid.a() + rng.random::<f64>() * grid.len();
        let x = xl + rng.random::<f64>() * (xh - xl);
        let u = ul + rng.random::<f64>() * (uh - ul);
        let env = Env::new(t, x, u);
        let hess = |xx: &Expr, xu: &Expr, uu: &Expr| -> Result<f64, EvalError> {
            Ok(max_eigenvalue(
                xx.eval(&env)?,
                xu.eval(&env)?,
                uu.eval(&env)?,
            ))
        };
        match (
            hess(&pd.l_xx, &pd.l_xu, &pd.l_uu),
            hess(&pd.f_xx, &pd.f_xu, &pd.f_uu),
        ) {
            (Ok(el), Ok(ef)) => {
                if el > max_eig_l {
                    max_eig_l = el;
                    witness_l = Some(ConcavityWitness {
                        t,
                        x,
                        u,
                        eigenvalue: el,
                    });
                }
                if ef > max_eig_f {
                    max_eig_f = ef;
                    witness_f = Some(ConcavityWitness {
                        t,
                        x,
                        u,
                        eigenvalue: ef,
                    });
                }
            }
            _ => skipped += 1,
        }
    }
    let l_concave = max_eig_l <= SUFFICIENCY_TOL;
    let f_concave = max_eig_f <= SUFFICIENCY_TOL;
    Ok(SufficiencyReport {
        lambda_nonnegative,
        min_lambda,
        lambda_witness,
        max_eig_l,
        max_eig_f,
        l_concave,
        f_concave,
        witness_l,
        witness_f,
        samples,
        skipped,
        passed: lambda_nonnegative && l_concave && f_concave,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityRow {
    pub eps: f64,
    /// `‖x^ε - x‖_∞`.
    pub distance: f64,
    /// `‖(x^ε - x)/ε - η‖_∞`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    /// Least-squares slope of `ln distance` against `ln ε`; `None` when every
    /// distance vanishes.
    pub slope: Option<f64>,
    pub eta_sup: f64,
    /// `‖x(u) - c.x‖_∞` for the candidate's own state.
    pub baseline_mismatch: f64,
}

/// Perturbs the candidate's control by `ε h` and compares the resulting
/// states with the first-order variation `η`, which solves
/// `^A_C D^{α,β,γ} η = f_x η + f_u h`, `η(a) = 0`.
pub fn continuity_experiment(
    p: &OcProblem,
    c: &Candidate,
    h: &GridFunction,
    eps_list: &[f64],
) -> Result<ContinuityTable> {
    let grid = *c.grid();
    if h.grid() != &grid {
        return Err(Error::ShapeMismatch(String::from(
            "perturbation and candidate use different grids",
        )));
    }
    if eps_list.is_empty()
        || eps_list.iter().any(|e| !(*e > 0.0))
        || eps_list.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidParameter(String::from(
            "eps list must be positive and strictly decreasing",
        )));
    }
    let disc = p.discretize(&grid)?;
    let u = c.filled_control();
    let dir = h.real_parts();
    let mut state = StateSolver::new(p, &disc);
    let x = state.solve(&u, None)?;
    let baseline_mismatch = sup_diff(&x, c.x.values());

    // variation equation: (M - diag f_x) η = f_u h, η(a) = 0
    let times = grid.nodes();
    let mut fx = Vec::with_capacity(grid.n());
    let mut rhs = Vec::with_capacity(grid.n());
    for (i, t) in times.iter().enumerate() {
        let env = Env::new(*t, x[i].re, u[i]);
        fx.push(p.partials.f_x.eval(&env)?);
        rhs.push(CScalar::new(p.partials.f_u.eval(&env)? * dir[i], 0.0));
    }
    let row = disc.state_row();
    rhs[row] = ZERO;
    let mut e = vec![ZERO; grid.n()];
    e[0] = ONE;
    let eta = ShiftedSolver::new(&disc.cap.matrix, row, e).solve(&fx, &rhs)?;

    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let perturbed: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
        let xe = state.solve(&perturbed, Some(&x))?;
        let distance = sup_diff(&xe, &x);
        let deviation = xe
            .iter()
            .zip(&x)
            .zip(&eta)
            .map(|((a, b), e)| ((a - b) / eps - e).norm())
            .fold(0.0, f64::max);
        rows.push(ContinuityRow {
            eps,
            distance,
            deviation,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.distance > 0.0)
        .map(|r| (r.eps.ln(), r.distance.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / m, sy / m);
        let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
            (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
        });
        Some(num / den)
    } else {
        None
    };
    Ok(ContinuityTable {
        rows,
        slope,
        eta_sup: eta.iter().map(|z| z.norm()).fold(0.0, f64::max),
        baseline_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn pex(gamma: f64) -> OcProblem {
        OcProblem::new(
            0.0,
            2.0,
            AnalyticKernel::paper_example(),
            gamma,
            e("-(x - t^3)^2 - (u - t*(t-2)/ln(t))^2"),
            e("x/2 + u/2"),
            0.0,
        )
        .unwrap()
    }

    fn classical(l: &str, f: &str, x_a: f64) -> OcProblem {
        let k = AnalyticKernel::rl_constant(1.0, CScalar::new(1.0, 0.0)).unwrap();
        OcProblem::new(0.0, 1.0, k, 1.0, e(l), e(f), x_a).unwrap()
    }

    /// `x' = a x + u`, maximize `-∫ (x² + u²)/2`: `λ = -P x`, `u = λ` with
    /// `P' = P² - 2aP - 1`, `P(1) = 0`.
    struct Riccati {
        a: f64,
    }

    impl Riccati {
        fn p(&self, t: f64) -> f64 {
            let w = (self.a * self.a + 1.0).sqrt();
            let (r1, r2) = (self.a + w, self.a - w);
            let q = r1 / r2 * (2.0 * w * (t - 1.0)).exp();
            (r1 - q * r2) / (1.0 - q)
        }

        /// `x(t) = exp(∫_0^t (a - P))`, Simpson on a fine mesh.
        fn x(&self, t: f64) -> f64 {
            let m = 2000;
            let h = t / m as f64;
            let g = |s: f64| self.a - self.p(s);
            let mut acc = g(0.0) + g(t);
            for i in 1..m {
                acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            (acc * h / 3.0).exp()
        }
    }

    fn lq() -> (OcProblem, Riccati) {
        (
            classical("-(x^2 + u^2)/2", "0.5*x + u", 1.0),
            Riccati { a: 0.5 },
        )
    }

    #[test]
    fn hamiltonian_examples() {
        let p = classical("0", "1", 0.0);
        assert_eq!(
            hamiltonian(&p, 0.3, 1.0, 2.0, CScalar::new(2.5, -1.0)).unwrap(),
            CScalar::new(2.5, -1.0)
        );
        let p = pex(0.5);
        for t in [0.25, 0.5, 1.5, 1.9] {
            let u = t * (t - 2.0) / t.ln();
            let h = hamiltonian(&p, t, t * t * t, u, ZERO).unwrap();
            assert!(h.norm() < 1e-12, "{t}: {h}");
        }
        assert!(matches!(
            hamiltonian(&p, 1.0, 1.0, 0.0, ZERO),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn problem_validation() {
        let k = AnalyticKernel::rl_constant(0.5, CScalar::new(0.2, 0.0)).unwrap();
        assert!(OcProblem::new(0.0, 1.0, k, 0.5, e("0"), e("u"), 0.0).is_err());
        let k = AnalyticKernel::rl_constant(0.5, CScalar::new(1.0, 0.0)).unwrap();
        assert!(OcProblem::new(0.0, 1.0, k.clone(), 1.5, e("0"), e("u"), 0.0).is_err());
        let p = OcProblem::new(0.0, 1.0, k, 0.5, e("0"), e("u"), 0.0).unwrap();
        assert!(p.clone().with_bounds(Some(e("x")), None).is_err());
        let premise = pex(0.5)
            .lipschitz_premise(&TimeGrid::new(0.0, 2.0, 33).unwrap(), 1.0)
            .unwrap();
        assert_eq!(premise.k, 0.5);
        assert!((premise.threshold - core::f64::consts::SQRT_2).abs() < 1e-14);
        assert!(premise.satisfied);
    }

    #[test]
    fn paper_candidate_is_extremal() {
        let p = pex(0.5);
        let grid = p.grid(513).unwrap();
        let c = Candidate::from_exprs(grid, &e("t^3"), &e("t*(t-2)/ln(t)"), &e("0")).unwrap();
        assert_eq!(c.missing, vec![0, 256]);
        let r = evaluate_extremal(&p, &c).unwrap();
        assert!(
            r.r_adjoint <= 1e-10 && r.r_optimality <= 1e-10 && r.r_transversality <= 1e-10,
            "{r:?}"
        );
        assert!(r.r_transversality_literal <= 1e-10 && r.r_transversality_alt <= 1e-10);
        assert_eq!(r.excluded_nodes, vec![0, 256]);
        assert!(r.r_state.is_finite());
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn trivial_extremal_has_zero_residuals() {
        let p = classical("-(t - 0.5)^2", "0", 0.0);
        let grid = p.grid(65).unwrap();
        let c = Candidate::from_exprs(grid, &e("0"), &e("t"), &e("0")).unwrap();
        let r = evaluate_extremal(&p, &c).unwrap();
        assert_eq!(
            (r.r_state, r.r_adjoint, r.r_optimality, r.r_transversality),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn riccati_solution_is_nearly_extremal() {
        let (p, ric) = lq();
        let grid = p.grid(1025).unwrap();
        let x = GridFunction::from_real(grid, |t| ric.x(t)).unwrap();
        let lam = GridFunction::from_real(grid, |t| -ric.p(t) * ric.x(t)).unwrap();
        let c = Candidate::new(x, lam.clone(), lam).unwrap();
        let r = evaluate_extremal(&p, &c).unwrap();
        assert!(
            r.r_state < 1e-3 && r.r_adjoint < 1e-2 && r.r_optimality < 1e-12,
            "{r:?}"
        );
        // exact λ(b) = 0; the discrete condition carries h H_x(b)
        assert!(
            r.r_transversality_literal < 1e-12 && r.r_transversality < 2.0 * grid.h(),
            "{r:?}"
        );
    }

    #[test]
    fn separable_problem_tracks_target() {
        let p = classical("-(u - sin(3*t))^2", "u", 0.0);
        let grid = p.grid(65).unwrap();
        let s = solve_fbs(&p, &GridFunction::zeros(grid), FbsOptions::default()).unwrap();
        assert!(matches!(
            s.status,
            FbsStatus::Converged | FbsStatus::FixedPoint
        ));
        for (t, u) in grid.nodes().iter().zip(s.candidate.u.values()) {
            assert!((u.re - (3.0 * t).sin()).abs() < 1e-8);
        }
        assert!(s.candidate.lambda.sup_norm() < 1e-12);
    }

    #[test]
    fn lq_matches_riccati() {
        let (p, ric) = lq();
        let grid = p.grid(513).unwrap();
        let s = solve_fbs(&p, &GridFunction::zeros(grid), FbsOptions::default()).unwrap();
        assert!(matches!(
            s.status,
            FbsStatus::Converged | FbsStatus::FixedPoint
        ));
        assert!(s.iterations <= 200, "{}", s.iterations);
        let mut err = 0.0f64;
        for (i, t) in grid.nodes().into_iter().enumerate() {
            let x = ric.x(t);
            let u = -ric.p(t) * x;
            err = err
                .max((s.candidate.x.values()[i].re - x).abs())
                .max((s.candidate.u.values()[i].re - u).abs());
        }
        assert!(err < 1e-2, "{err}");
        assert!(s
            .objective
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs())));
        let r = evaluate_extremal(&p, &s.candidate).unwrap();
        assert!(
            r.r_adjoint < 1e-7 && r.r_optimality < 1e-7 && r.r_transversality < 1e-7,
            "{r:?}"
        );
    }

    #[test]
    fn scaling_lagrangian_keeps_controls() {
        let (p, _) = lq();
        let scaled = classical("-3*(x^2 + u^2)/2", "0.5*x + u", 1.0);
        let grid = p.grid(129).unwrap();
        let a = solve_fbs(&p, &GridFunction::zeros(grid), FbsOptions::default()).unwrap();
        let b = solve_fbs(&scaled, &GridFunction::zeros(grid), FbsOptions::default()).unwrap();
        let du = sup_diff(a.candidate.u.values(), b.candidate.u.values());
        assert!(du < 1e-7, "{du}");
    }

    #[test]
    fn box_constraints_are_respected() {
        let (p, _) = lq();
        let p = p.with_bounds(Some(e("-0.2")), None).unwrap();
        let grid = p.grid(129).unwrap();
        let s = solve_fbs(&p, &GridFunction::zeros(grid), FbsOptions::default()).unwrap();
        assert!(s.candidate.u.values().iter().all(|u| u.re >= -0.2));
        assert!(s.candidate.u.values().iter().any(|u| u.re == -0.2));
        let r = evaluate_extremal(&p, &s.candidate).unwrap();
        assert!(r.r_optimality < 1e-7, "{r:?}");
    }

    #[test]
    fn nonlinear_dynamics_newton() {
        let p = classical("-(x - 1)^2 - u^2", "-x^3 + u", 0.5);
        let grid = p.grid(129).unwrap();
        let s = solve_fbs(&p, &GridFunction::zeros(grid), FbsOptions::default()).unwrap();
        assert!(matches!(
            s.status,
            FbsStatus::Converged | FbsStatus::FixedPoint
        ));
        let r = evaluate_extremal(&p, &s.candidate).unwrap();
        assert!(r.r_state < 1e-6 && r.r_adjoint < 1e-6, "{r:?}");
    }

    #[test]
    fn sufficiency_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = pex(0.5);
        let grid = p.grid(129).unwrap();
        let c = Candidate::from_exprs(grid, &e("t^3"), &e("t*(t-2)/ln(t)"), &e("0")).unwrap();
        let r = check_sufficiency(&p, &c, 200, &mut rng).unwrap();
        assert!(
            r.passed && (r.max_eig_l + 2.0).abs() < 1e-12 && r.max_eig_f == 0.0,
            "{r:?}"
        );

        let convex = classical("x^2", "u", 0.0);
        let g = convex.grid(33).unwrap();
        let c = Candidate::from_exprs(g, &e("0"), &e("0"), &e("0")).unwrap();
        let r = check_sufficiency(&convex, &c, 50, &mut rng).unwrap();
        assert!(!r.passed && r.witness_l.unwrap().eigenvalue == 2.0);

        let concave = classical("-u^2", "-(x^2 + u^2)", 0.0);
        let c = Candidate::from_exprs(g, &e("0"), &e("0"), &e("1")).unwrap();
        assert!(
            check_sufficiency(&concave, &c, 50, &mut rng)
                .unwrap()
                .passed
        );
        let c = Candidate::from_exprs(g, &e("0"), &e("0"), &e("-1")).unwrap();
        let r = check_sufficiency(&concave, &c, 50, &mut rng).unwrap();
        assert!(!r.lambda_nonnegative && !r.passed);
    }

    #[test]
    fn continuity_examples() {
        let (p, _) = lq();
        let grid = p.grid(129).unwrap();
        let c = Candidate::from_exprs(grid, &e("exp(0.5*t)"), &e("0"), &e("0")).unwrap();
        let t = continuity_experiment(&p, &c, &GridFunction::zeros(grid), &[1e-1, 1e-2]).unwrap();
        assert!(t.rows.iter().all(|r| r.distance == 0.0) && t.slope.is_none());

        let h = GridFunction::from_real(grid, f64::sin).unwrap();
        let t = continuity_experiment(&p, &c, &h, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        assert!(t.rows.iter().all(|r| r.deviation < 1e-8), "{t:?}");
        assert!((t.slope.unwrap() - 1.0).abs() < 0.05);

        let p = pex(0.5);
        let grid = p.grid(129).unwrap();
        let c = Candidate::from_exprs(grid, &e("t^3"), &e("t*(t-2)/ln(t)"), &e("0")).unwrap();
        let h = GridFunction::from_real(grid, f64::sin).unwrap();
        let t = continuity_experiment(&p, &c, &h, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        let slope = t.slope.unwrap();
        assert!((0.95..=1.05).contains(&slope), "{slope}");
    }

    #[test]
    fn fill_missing_interpolates() {
        let mut v = [0.0, 9.0, 2.0, 9.0, 9.0, 5.0];
        fill_missing(&mut v, &[1, 3, 4]);
        assert_eq!(v, [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }
}
