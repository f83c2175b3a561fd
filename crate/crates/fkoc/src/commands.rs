//! One function per subcommand. Each returns whether its checks passed.

use std::path::{Path, PathBuf};

use fkoc_core::identities::{self, PartsOperators, PartsVariant};
use fkoc_core::kernel::check_semigroup;
use fkoc_core::ocp::{self, Candidate, ExtremalReport};
use fkoc_core::operators::{self, composition_error, verify_norm_bound};
use fkoc_core::{AnalyticKernel, Error as CoreError, GridFunction, OperatorKind, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{parse_time_expr, RunConfig, MIN_SOLVE_NODES};
use crate::error::{CliError, CliResult};
use crate::io;
use crate::report::{checks_table, sci, write_checks_csv, Check, Table};

/// Everything a subcommand needs: the parsed config plus flag overrides.
pub struct Context {
    pub cfg: RunConfig,
    pub n: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub dump_operator: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Self {
        let o = cfg.outputs.clone();
        Self {
            n: cfg.n,
            seed: cfg.seed,
            out: o.out.map(PathBuf::from),
            report: o.report.map(PathBuf::from),
            json: o.json.map(PathBuf::from),
            dump_operator: None,
            candidate: None,
            cfg,
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn grid(&self) -> CliResult<TimeGrid> {
        self.cfg.grid(self.n)
    }

    fn solve_grid(&self) -> CliResult<TimeGrid> {
        if self.n < MIN_SOLVE_NODES {
            return Err(CliError::config(format!(
                "solves need at least {MIN_SOLVE_NODES} nodes, got {}",
                self.n
            )));
        }
        self.grid()
    }

    fn emit_json(&self, value: &Value) -> CliResult<()> {
        if let Some(p) = &self.json {
            io::write_text(p, &pretty(value))?;
        }
        Ok(())
    }

    /// Prints a table unless standard output carries CSV data.
    fn show(&self, table: &Table) {
        if self.out.is_some() {
            print!("{}", table.markdown());
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn sample(grid: TimeGrid, key: &str, src: &str) -> CliResult<GridFunction> {
    let e = parse_time_expr(key, src)?;
    let mut fault = None;
    let gf = GridFunction::from_real(grid, |t| {
        match e.eval(&fkoc_core::expr::Env::new(t, 0.0, 0.0)) {
            Ok(v) => v,
            Err(err) => {
                fault.get_or_insert(err);
                f64::NAN
            }
        }
    });
    if let Some(err) = fault {
        return Err(CoreError::from(err).into());
    }
    Ok(gf?)
}

pub fn kernel_info(ctx: &Context) -> CliResult<bool> {
    let k = ctx.cfg.kernel()?;
    let len = ctx.cfg.interval[1] - ctx.cfg.interval[0];
    let sup = k.sup_bound(len)?;
    let reciprocal = k.reciprocal_radius_estimate().unwrap_or(f64::NAN);
    let trunc = k.truncation_estimate(sup.radius_beta);
    let threshold = len.powf(1.0 - k.alpha()) / sup.m;
    let order = (k.beta() + k.alpha()).norm();
    let mut t = Table::new("Kernel", &["property", "value"]);
    t.kv("label", k.label());
    t.kv("alpha", k.alpha());
    t.kv("beta", format!("{} + {}i", k.beta().re, k.beta().im));
    t.kv("terms", k.terms());
    t.kv("radius", k.radius());
    t.kv("|alpha + beta|", sci(order));
    t.kv("M on |x| <= (b-a)^alpha", sci(sup.m));
    t.kv("M on |x| <= (b-a)^Re(beta)", sci(sup.m_beta));
    t.kv("norm bound (b-a)^alpha M", sci(len.powf(k.alpha()) * sup.m));
    t.kv("Gronwall threshold (b-a)^(1-alpha)/M", sci(threshold));
    t.kv(
        "Gronwall threshold 1/((b-a)^alpha M)",
        sci(1.0 / (len.powf(k.alpha()) * sup.m)),
    );
    t.kv("truncation estimate", sci(trunc));
    t.kv("reciprocal radius estimate", sci(reciprocal));
    let diverges = reciprocal <= sup.radius_beta;
    if diverges {
        t.kv(
            "warning",
            "reciprocal kernel series diverges on the interval; derivatives use its truncation",
        );
    }
    let mut c = Table::new("Coefficients", &["n", "re", "im"]);
    for (i, a) in k.coeffs().iter().take(8).enumerate() {
        c.push(vec![i.to_string(), sci(a.re), sci(a.im)]);
    }
    print!("{}\n{}", t.markdown(), c.markdown());
    ctx.emit_json(&json!({
        "label": k.label(),
        "alpha": k.alpha(),
        "beta": [k.beta().re, k.beta().im],
        "terms": k.terms(),
        "radius": k.radius(),
        "order_modulus": order,
        "m": sup.m,
        "m_beta": sup.m_beta,
        "norm_bound": len.powf(k.alpha()) * sup.m,
        "gronwall_threshold": threshold,
        "gronwall_threshold_norm_form": 1.0 / (len.powf(k.alpha()) * sup.m),
        "truncation_estimate": trunc,
        "reciprocal_radius": reciprocal,
        "reciprocal_diverges": diverges,
    }))?;
    Ok(true)
}

pub fn parse_op(name: &str) -> CliResult<OperatorKind> {
    use OperatorKind::*;
    [
        IntL,
        IntR,
        CapL,
        CapR,
        RLDerL,
        RLDerR,
        CombinedCap,
        CombinedInt,
        CombinedRL,
    ]
    .into_iter()
    .find(|k| k.to_string() == name)
    .ok_or_else(|| CliError::config(format!("unknown operator {name:?}")))
}

pub fn apply(ctx: &Context, op: &str, input: &Path) -> CliResult<bool> {
    let kind = parse_op(op)?;
    let gf = io::read_grid_function(input)?;
    let k = ctx.cfg.kernel()?;
    let m = operators::build(gf.grid(), &k, kind, ctx.cfg.gamma)?;
    let out = m.apply(&gf)?;
    io::write_grid_function(ctx.out.as_deref(), &out)?;
    if let Some(p) = &ctx.dump_operator {
        io::write_matrix(p, &m.matrix)?;
    }
    let mut t = Table::new("Apply", &["property", "value"]);
    t.kv("operator", kind);
    t.kv("kernel", k.label());
    t.kv("n", gf.len());
    t.kv("sup |output|", sci(out.sup_norm()));
    ctx.show(&t);
    ctx.emit_json(&json!({
        "operator": kind.to_string(),
        "kernel": k.label(),
        "gamma": ctx.cfg.gamma,
        "n": gf.len(),
        "t": gf.grid().nodes(),
        "re": out.values().iter().map(|z| z.re).collect::<Vec<_>>(),
        "im": out.values().iter().map(|z| z.im).collect::<Vec<_>>(),
    }))?;
    Ok(true)
}

pub const SUITES: [&str; 5] = ["duality", "parts", "semigroup", "norm", "gronwall"];

/// Random cubic in the normalized time `s = (t - a)/(b - a)`.
fn random_cubic<R: Rng>(grid: TimeGrid, rng: &mut R) -> CliResult<GridFunction> {
    let c: [f64; 4] = core::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let (a, len) = (grid.a(), grid.len());
    Ok(GridFunction::from_real(grid, |t| {
        let s = (t - a) / len;
        c[0] + s * (c[1] + s * (c[2] + s * c[3]))
    })?)
}

fn random_pairs(ctx: &Context, grid: TimeGrid) -> CliResult<Vec<(GridFunction, GridFunction)>> {
    let mut rng = ctx.rng();
    (0..ctx.cfg.verify.pairs)
        .map(|_| Ok((random_cubic(grid, &mut rng)?, random_cubic(grid, &mut rng)?)))
        .collect()
}

fn suite_duality(ctx: &Context, k: &AnalyticKernel) -> CliResult<Vec<Check>> {
    let grid = ctx.grid()?;
    let mut worst = 0.0f64;
    for (x, y) in random_pairs(ctx, grid)? {
        worst = worst.max(identities::check_duality(k, &grid, &x, &y)?.rel_residual);
    }
    let note = format!(
        "{} random cubic pairs, n = {}",
        ctx.cfg.verify.pairs,
        grid.n()
    );
    Ok(vec![Check::below(
        "duality",
        "max relative residual",
        worst,
        ctx.cfg.tolerances.duality,
    )
    .with_note(note)])
}

fn suite_parts(ctx: &Context, k: &AnalyticKernel) -> CliResult<Vec<Check>> {
    let grid = ctx.grid()?;
    let ops = PartsOperators::new(k, &grid)?;
    let pairs = random_pairs(ctx, grid)?;
    let variants = [
        ("left", PartsVariant::Left),
        ("right", PartsVariant::Right),
        ("combined gamma=0", PartsVariant::Combined(0.0)),
    ]
    .into_iter()
    .chain([
        ("combined gamma=0.5", PartsVariant::Combined(0.5)),
        ("combined gamma=1", PartsVariant::Combined(1.0)),
    ]);
    let mut out = Vec::new();
    for (name, v) in variants {
        let mut worst = 0.0f64;
        for (x, y) in &pairs {
            worst = worst.max(ops.check(x, y, v)?.rel_residual);
        }
        out.push(Check::below("parts", name, worst, ctx.cfg.tolerances.parts));
    }
    Ok(out)
}

fn suite_semigroup(ctx: &Context) -> CliResult<Vec<Check>> {
    let s = &ctx.cfg.verify.semigroup;
    let beta = ctx.cfg.beta();
    let k1 = AnalyticKernel::rl_constant(s.alpha1, beta)?;
    let k2 = AnalyticKernel::rl_constant(s.alpha2, beta)?;
    let k12 = AnalyticKernel::rl_constant(s.alpha1 + s.alpha2, beta)?;
    let r = check_semigroup(&k1, &k2, &k12, s.kmax)?;
    let grid = ctx.grid()?;
    let (entries, applied) = composition_error(&grid, &k1, &k2, &k12)?;
    let family = format!("RL-constant family, alpha = {} + {}", s.alpha1, s.alpha2);
    let tol = &ctx.cfg.tolerances;
    Ok(vec![
        Check::below(
            "semigroup",
            "coefficient condition",
            r.max_residual,
            tol.semigroup,
        )
        .with_note(family),
        Check::info(
            "semigroup",
            "coefficient condition (displayed index)",
            r.max_residual_literal,
            "",
        ),
        Check::below(
            "semigroup",
            "composition, matrix entries",
            entries,
            tol.composition,
        ),
        Check::below(
            "semigroup",
            "composition, applied to 1",
            applied,
            tol.composition,
        ),
    ])
}

fn suite_norm(ctx: &Context, k: &AnalyticKernel) -> CliResult<Vec<Check>> {
    let grid = ctx.grid()?;
    let r = verify_norm_bound(k, &grid, ctx.cfg.verify.norm_trials, &mut ctx.rng())?;
    let ratio = r.max_ratio / r.bound;
    let note = format!("max ratio {}, bound {}", sci(r.max_ratio), sci(r.bound));
    let check = match r.passed {
        Some(_) => Check::below(
            "norm",
            "max ratio / bound",
            ratio,
            1.0 + ctx.cfg.tolerances.norm,
        )
        .with_note(note),
        None => Check::info(
            "norm",
            "max ratio / bound",
            ratio,
            format!("{note}; complex beta, no claim"),
        ),
    };
    Ok(vec![
        check,
        Check::info(
            "norm",
            "max ratio / corrected bound",
            r.max_ratio / r.bound_corrected,
            "",
        ),
    ])
}

fn gronwall_g(ctx: &Context, k: &AnalyticKernel, grid: TimeGrid) -> CliResult<GridFunction> {
    match &ctx.cfg.gronwall.g {
        Some(src) => sample(grid, "gronwall.g", src),
        None => {
            let m = k.sup_bound(grid.len())?.m;
            let half = 0.5 * grid.len().powf(1.0 - k.alpha()) / m;
            Ok(GridFunction::from_real(grid, |_| half)?)
        }
    }
}

fn suite_gronwall(ctx: &Context, k: &AnalyticKernel) -> CliResult<Vec<Check>> {
    let grid = ctx.grid()?;
    let gamma = ctx.cfg.gamma;
    let tol = ctx.cfg.tolerances.gronwall;
    let f = sample(grid, "gronwall.f", &ctx.cfg.gronwall.f)?;
    let g = gronwall_g(ctx, k, grid)?;
    let mut out = Vec::new();
    match identities::gronwall_bound(&f, &g, k, &grid, gamma, 1e-10) {
        Ok(b) => {
            out.push(Check::flag(
                "gronwall",
                "premise",
                true,
                format!("max g {} < {}", sci(b.max_g), sci(b.threshold)),
            ));
            out.push(Check::info("gronwall", "series terms", b.terms as f64, ""));
        }
        Err(CoreError::PremiseViolation { max_g, threshold }) => {
            let note = format!(
                "PremiseViolation: max g {} >= {}",
                sci(max_g),
                sci(threshold)
            );
            out.push(Check::flag("gronwall", "premise", false, note));
        }
        Err(e) => return Err(e.into()),
    }
    if let Some(src) = &ctx.cfg.gronwall.u {
        let u = sample(grid, "gronwall.u", src)?;
        out.push(
            match identities::verify_gronwall(&u, &f, &g, k, &grid, gamma, tol) {
                Ok(r) => Check::flag(
                    "gronwall",
                    "u <= bound (config u)",
                    r.holds,
                    format!("max excess {}", sci(r.max_excess)),
                ),
                Err(
                    e
                    @ (CoreError::HypothesisViolation { .. } | CoreError::PremiseViolation { .. }),
                ) => Check::flag("gronwall", "u <= bound (config u)", false, e.to_string()),
                Err(e) => return Err(e.into()),
            },
        );
    }
    let mut rng = ctx.rng();
    let (mut held, mut vacuous, mut failed) = (0, 0, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..ctx.cfg.verify.gronwall_trials {
        let trial = identities::random_gronwall_trial(k, &grid, Some(gamma), &mut rng)?;
        match identities::verify_gronwall(&trial.u, &trial.f, &trial.g, k, &grid, trial.gamma, tol)
        {
            Ok(r) => {
                worst = worst.max(r.max_excess);
                if r.holds {
                    held += 1;
                } else {
                    failed += 1;
                }
            }
            // the series diverges, so the bound is +inf
            Err(CoreError::NoConvergence { .. }) => vacuous += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if ctx.cfg.verify.gronwall_trials > 0 {
        let note = format!(
            "{held} held, {vacuous} divergent bound, {failed} failed; worst excess {}",
            sci(worst)
        );
        out.push(Check::flag(
            "gronwall",
            "random feasible trials",
            failed == 0,
            note,
        ));
    }
    Ok(out)
}

pub fn verify(ctx: &Context, suite: &str) -> CliResult<bool> {
    let suites: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        s => {
            return Err(CliError::config(format!(
                "unknown suite {s:?}; expected one of {SUITES:?} or all"
            )))
        }
    };
    let k = ctx.cfg.kernel()?;
    let mut checks = Vec::new();
    for s in suites {
        log::info!("running suite {s}");
        checks.extend(match s {
            "duality" => suite_duality(ctx, &k)?,
            "parts" => suite_parts(ctx, &k)?,
            "semigroup" => suite_semigroup(ctx)?,
            "norm" => suite_norm(ctx, &k)?,
            _ => suite_gronwall(ctx, &k)?,
        });
    }
    let passed = checks.iter().all(|c| c.passed != Some(false));
    let md = checks_table(&format!("Verification ({}, {suite})", k.label()), &checks).markdown();
    print!("{md}");
    if let Some(p) = &ctx.report {
        io::write_text(p, &md)?;
    }
    if let Some(p) = &ctx.out {
        write_checks_csv(p, &checks)?;
    }
    ctx.emit_json(
        &json!({ "kernel": k.label(), "suite": suite, "passed": passed, "checks": checks }),
    )?;
    Ok(passed)
}

fn extremal_json(r: &ExtremalReport, iterations: Option<usize>) -> Value {
    json!({
        "r_state": r.r_state,
        "r_adjoint": r.r_adjoint,
        "r_optimality": r.r_optimality,
        "r_transversality": r.r_transversality,
        "r_transversality_literal": r.r_transversality_literal,
        "r_transversality_alt": r.r_transversality_alt,
        "J": r.objective,
        "excluded_nodes": r.excluded_nodes,
        "iterations": iterations,
        "state_imag": r.state_imag,
        "initial_error": r.initial_error,
    })
}

fn extremal_table(title: &str, r: &ExtremalReport) -> Table {
    let mut t = Table::new(title, &["quantity", "value"]);
    t.kv("r_state", sci(r.r_state));
    t.kv("r_adjoint", sci(r.r_adjoint));
    t.kv("r_optimality", sci(r.r_optimality));
    t.kv("r_transversality (enforced)", sci(r.r_transversality));
    t.kv(
        "r_transversality (right integral at b)",
        sci(r.r_transversality_literal),
    );
    t.kv(
        "r_transversality (right integral at a)",
        sci(r.r_transversality_alt),
    );
    t.kv("J", format!("{:.10}", r.objective));
    t.kv("excluded nodes", format!("{:?}", r.excluded_nodes));
    t.kv("sup |Im x|", sci(r.state_imag));
    t
}

pub fn solve(ctx: &Context) -> CliResult<bool> {
    let p = ctx.cfg.problem()?;
    let grid = ctx.solve_grid()?;
    let init = sample(grid, "solver.initial_u", &ctx.cfg.solver.initial_u)?;
    let disc = p.discretize(&grid)?;
    let s = ocp::solve_fbs_with(&p, &disc, &init, ctx.cfg.fbs_options())?;
    let r = ocp::evaluate_with(&p, &disc, &s.candidate)?;
    io::write_solution(ctx.out.as_deref(), &s.candidate)?;
    let mut t = extremal_table("Solve", &r);
    t.kv("status", format!("{:?}", s.status));
    t.kv("iterations", s.iterations);
    t.kv("fixed-point iterations", s.fixed_point_iterations);
    t.kv("discrete objective", format!("{:.12}", s.final_objective));
    t.kv("last change", sci(s.last_change));
    ctx.show(&t);
    let mut v = extremal_json(&r, Some(s.iterations));
    v["status"] = json!(format!("{:?}", s.status));
    v["fixed_point_iterations"] = json!(s.fixed_point_iterations);
    v["discrete_objective"] = json!(s.final_objective);
    v["objective_history"] = json!(s.objective);
    v["last_change"] = json!(s.last_change);
    if let Some(path) = &ctx.report {
        io::write_text(path, &pretty(&v))?;
    }
    ctx.emit_json(&v)?;
    Ok(true)
}

fn candidate(ctx: &Context) -> CliResult<Candidate> {
    match &ctx.candidate {
        Some(path) => {
            let c = io::read_candidate(path)?;
            let (a, b) = (ctx.cfg.interval[0], ctx.cfg.interval[1]);
            let g = c.grid();
            if (g.a() - a).abs() > 1e-12 * (b - a) || (g.b() - b).abs() > 1e-12 * (b - a) {
                return Err(CliError::config(format!(
                    "candidate grid [{}, {}] does not span the interval [{a}, {b}]",
                    g.a(),
                    g.b()
                )));
            }
            Ok(c)
        }
        None => {
            let (x, u, l) = ctx.cfg.candidate_exprs()?;
            Ok(Candidate::from_exprs(ctx.solve_grid()?, &x, &u, &l)?)
        }
    }
}

pub fn check_extremal(ctx: &Context) -> CliResult<bool> {
    let p = ctx.cfg.problem()?;
    let c = candidate(ctx)?;
    if c.grid().n() < MIN_SOLVE_NODES {
        return Err(CliError::config(format!(
            "candidate needs at least {MIN_SOLVE_NODES} nodes"
        )));
    }
    let r = ocp::evaluate_extremal(&p, &c)?;
    let tol = ctx.cfg.tolerances.extremal;
    let passed = r.r_adjoint <= tol && r.r_optimality <= tol && r.r_transversality <= tol;
    let mut t = extremal_table("Extremal check", &r);
    t.kv("tolerance", sci(tol));
    let mut v = extremal_json(&r, None);
    if p.is_unbounded() {
        let s = ocp::check_sufficiency(&p, &c, 200, &mut ctx.rng())?;
        t.kv(
            "L concave (max eigenvalue)",
            format!("{} ({})", s.l_concave, sci(s.max_eig_l)),
        );
        t.kv(
            "f concave (max eigenvalue)",
            format!("{} ({})", s.f_concave, sci(s.max_eig_f)),
        );
        t.kv(
            "lambda >= 0 (min)",
            format!("{} ({})", s.lambda_nonnegative, sci(s.min_lambda)),
        );
        t.kv(
            "sufficiency",
            if s.passed { "holds" } else { "not established" },
        );
        v["sufficiency"] = json!({
            "passed": s.passed,
            "l_concave": s.l_concave,
            "f_concave": s.f_concave,
            "lambda_nonnegative": s.lambda_nonnegative,
            "max_eig_l": s.max_eig_l,
            "max_eig_f": s.max_eig_f,
            "min_lambda": s.min_lambda,
        });
    }
    t.kv("status", if passed { "pass" } else { "FAIL" });
    v["passed"] = json!(passed);
    print!("{}", t.markdown());
    if let Some(path) = &ctx.report {
        io::write_text(path, &pretty(&v))?;
    }
    ctx.emit_json(&v)?;
    Ok(passed)
}

pub fn gronwall(ctx: &Context) -> CliResult<bool> {
    let k = ctx.cfg.kernel()?;
    let grid = ctx.grid()?;
    let f = sample(grid, "gronwall.f", &ctx.cfg.gronwall.f)?;
    let g = gronwall_g(ctx, &k, grid)?;
    let b = identities::gronwall_bound(&f, &g, &k, &grid, ctx.cfg.gamma, 1e-10)?;
    let mut t = Table::new("Gronwall bound", &["quantity", "value"]);
    t.kv("gamma", ctx.cfg.gamma);
    t.kv("max g", sci(b.max_g));
    t.kv("threshold (b-a)^(1-alpha)/M", sci(b.threshold));
    t.kv("threshold 1/((b-a)^alpha M)", sci(b.threshold_norm_form));
    t.kv("series terms", b.terms);
    t.kv("sup bound", sci(b.bound.sup_norm()));
    let mut v = json!({
        "gamma": ctx.cfg.gamma,
        "max_g": b.max_g,
        "threshold": b.threshold,
        "threshold_norm_form": b.threshold_norm_form,
        "terms": b.terms,
    });
    let mut passed = true;
    if let Some(src) = &ctx.cfg.gronwall.u {
        let u = sample(grid, "gronwall.u", src)?;
        let r = identities::verify_gronwall(
            &u,
            &f,
            &g,
            &k,
            &grid,
            ctx.cfg.gamma,
            ctx.cfg.tolerances.gronwall,
        )?;
        passed = r.holds;
        t.kv(
            "u <= bound",
            format!(
                "{} (max excess {} at node {})",
                r.holds,
                sci(r.max_excess),
                r.worst_index
            ),
        );
        v["holds"] = json!(r.holds);
        v["max_excess"] = json!(r.max_excess);
    }
    let rows = grid
        .nodes()
        .into_iter()
        .zip(b.bound.values())
        .map(|(t, z)| vec![io::num(t), io::num(z.re)]);
    io::write_csv(ctx.out.as_deref(), &["t", "bound"], rows)?;
    ctx.show(&t);
    ctx.emit_json(&v)?;
    Ok(passed)
}

pub fn continuity(ctx: &Context) -> CliResult<bool> {
    let p = ctx.cfg.problem()?;
    let c = candidate(ctx)?;
    let h = sample(*c.grid(), "continuity.h", &ctx.cfg.continuity.h)?;
    let table = ocp::continuity_experiment(&p, &c, &h, &ctx.cfg.continuity.eps)?;
    let mut t = Table::new(
        "Continuity",
        &["eps", "|x_eps - x|", "|(x_eps - x)/eps - eta|"],
    );
    for r in &table.rows {
        t.push(vec![sci(r.eps), sci(r.distance), sci(r.deviation)]);
    }
    let slope = table.slope.unwrap_or(f64::NAN);
    t.push(vec!["slope".into(), format!("{slope:.6}"), String::new()]);
    let rows = table
        .rows
        .iter()
        .map(|r| vec![io::num(r.eps), io::num(r.distance), io::num(r.deviation)]);
    io::write_csv(ctx.out.as_deref(), &["eps", "distance", "deviation"], rows)?;
    ctx.show(&t);
    ctx.emit_json(&json!({
        "eps": table.rows.iter().map(|r| r.eps).collect::<Vec<_>>(),
        "distance": table.rows.iter().map(|r| r.distance).collect::<Vec<_>>(),
        "deviation": table.rows.iter().map(|r| r.deviation).collect::<Vec<_>>(),
        "slope": table.slope,
        "eta_sup": table.eta_sup,
        "baseline_mismatch": table.baseline_mismatch,
    }))?;
    Ok(true)
}
