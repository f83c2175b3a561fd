//! JSON run configuration.

use std::path::Path;

use fkoc_core::expr::{Expr, Var};
use fkoc_core::ocp::{FbsOptions, OcProblem};
use fkoc_core::{AnalyticKernel, CScalar, TimeGrid};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;
/// Smallest grid accepted by `solve` and `check-extremal`.
pub const MIN_SOLVE_NODES: usize = 33;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum KernelSpec {
    Coeffs {
        coeffs: Vec<[f64; 2]>,
        #[serde(default)]
        radius: Option<f64>,
    },
    Builtin {
        builtin: String,
        #[serde(default)]
        shift: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub duality: f64,
    pub parts: f64,
    pub semigroup: f64,
    pub composition: f64,
    pub norm: f64,
    pub gronwall: f64,
    pub extremal: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            duality: 1e-4,
            parts: 1e-3,
            semigroup: 1e-10,
            composition: 5e-3,
            norm: 1e-6,
            gronwall: 1e-10,
            extremal: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub damping: f64,
    pub initial_u: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = FbsOptions::default();
        Self {
            max_iter: d.max_iter,
            tol: d.tol,
            damping: d.damping,
            initial_u: String::from("0"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemigroupConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub kmax: usize,
}

impl Default for SemigroupConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.3,
            alpha2: 0.5,
            kmax: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random polynomial pairs for duality and integration by parts.
    pub pairs: usize,
    pub norm_trials: usize,
    pub gronwall_trials: usize,
    pub semigroup: SemigroupConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            pairs: 20,
            norm_trials: 100,
            gronwall_trials: 50,
            semigroup: SemigroupConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GronwallConfig {
    pub f: String,
    /// Defaults to half the premise threshold.
    pub g: Option<String>,
    pub u: Option<String>,
}

impl Default for GronwallConfig {
    fn default() -> Self {
        Self {
            f: String::from("1"),
            g: None,
            u: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuityConfig {
    pub h: String,
    pub eps: Vec<f64>,
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        Self {
            h: String::from("sin(t)"),
            eps: vec![1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub out: Option<String>,
    pub report: Option<String>,
    pub json: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
    #[serde(default = "default_n")]
    pub n: usize,
    pub kernel: KernelSpec,
    pub alpha: f64,
    #[serde(default = "real_one")]
    pub beta: [f64; 2],
    #[serde(default = "one")]
    pub gamma: f64,
    /// Truncation length for built-in series kernels.
    #[serde(default)]
    pub terms: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,

    #[serde(rename = "L", default)]
    pub lagrangian: Option<String>,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub x_a: f64,
    #[serde(default)]
    pub u_min: Option<String>,
    #[serde(default)]
    pub u_max: Option<String>,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub candidate_x: Option<String>,
    #[serde(default)]
    pub candidate_u: Option<String>,
    #[serde(default)]
    pub candidate_lambda: Option<String>,

    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub gronwall: GronwallConfig,
    #[serde(default)]
    pub continuity: ContinuityConfig,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_n() -> usize {
    513
}
fn real_one() -> [f64; 2] {
    [1.0, 0.0]
}
fn one() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

pub fn parse_expr(key: &str, src: &str) -> CliResult<Expr> {
    Expr::parse(src).map_err(|e| CliError::config(format!("{key}: {e}")))
}

/// An expression of `t` alone.
pub fn parse_time_expr(key: &str, src: &str) -> CliResult<Expr> {
    Expr::parse_with(src, &[Var::T]).map_err(|e| CliError::config(format!("{key}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        let [a, b] = cfg.interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CliError::config(format!(
                "interval must satisfy a < b, got [{a}, {b}]"
            )));
        }
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return Err(CliError::config(format!(
                "gamma must lie in [0, 1], got {}",
                cfg.gamma
            )));
        }
        Ok(cfg)
    }

    pub fn beta(&self) -> CScalar {
        CScalar::new(self.beta[0], self.beta[1])
    }

    pub fn kernel(&self) -> CliResult<AnalyticKernel> {
        let beta = self.beta();
        let k = match &self.kernel {
            KernelSpec::Coeffs { coeffs, radius } => {
                let c = coeffs
                    .iter()
                    .map(|[re, im]| CScalar::new(*re, *im))
                    .collect();
                AnalyticKernel::new(c, radius.unwrap_or(f64::INFINITY), self.alpha, beta)?
            }
            KernelSpec::Builtin { builtin, shift } => match builtin.as_str() {
                "rl_constant" => AnalyticKernel::rl_constant(self.alpha, beta)?,
                "exp_shift" => {
                    let shift = shift
                        .ok_or_else(|| CliError::config("exp_shift kernel needs \"shift\""))?;
                    AnalyticKernel::exp_shift(shift, self.alpha, beta, self.terms.unwrap_or(64))?
                }
                other => {
                    return Err(CliError::config(format!(
                        "unknown builtin kernel {other:?}"
                    )))
                }
            },
        };
        Ok(k)
    }

    pub fn grid(&self, n: usize) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.interval[0], self.interval[1], n)?)
    }

    pub fn problem(&self) -> CliResult<OcProblem> {
        let l = self
            .lagrangian
            .as_deref()
            .ok_or_else(|| CliError::config("missing \"L\""))?;
        let f = self
            .f
            .as_deref()
            .ok_or_else(|| CliError::config("missing \"f\""))?;
        let p = OcProblem::new(
            self.interval[0],
            self.interval[1],
            self.kernel()?,
            self.gamma,
            parse_expr("L", l)?,
            parse_expr("f", f)?,
            self.x_a,
        )?;
        let lo = self
            .u_min
            .as_deref()
            .map(|s| parse_expr("u_min", s))
            .transpose()?;
        let hi = self
            .u_max
            .as_deref()
            .map(|s| parse_expr("u_max", s))
            .transpose()?;
        let mut p = p.with_bounds(lo, hi)?;
        if let Some(k) = self.lipschitz {
            p = p.with_lipschitz(k);
        }
        Ok(p)
    }

    pub fn fbs_options(&self) -> FbsOptions {
        FbsOptions {
            max_iter: self.solver.max_iter,
            tol: self.solver.tol,
            damping: self.solver.damping,
        }
    }

    pub fn candidate_exprs(&self) -> CliResult<(Expr, Expr, Expr)> {
        let get = |key: &str, v: &Option<String>| -> CliResult<Expr> {
            let s = v.as_deref().ok_or_else(|| {
                CliError::config(format!("missing \"{key}\" (or pass --candidate)"))
            })?;
            parse_time_expr(key, s)
        };
        Ok((
            get("candidate_x", &self.candidate_x)?,
            get("candidate_u", &self.candidate_u)?,
            get("candidate_lambda", &self.candidate_lambda)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_specs() {
        let c = RunConfig::from_json(r#"{"kernel": {"builtin": "rl_constant"}, "alpha": 0.5}"#)
            .unwrap();
        assert_eq!(c.kernel().unwrap().label(), "rl_constant");
        assert_eq!((c.n, c.seed, c.interval), (513, 42, [0.0, 1.0]));

        let c = RunConfig::from_json(
            r#"{"kernel": {"builtin": "exp_shift", "shift": 1.41421356}, "alpha": 0.5, "beta": [0, 3], "terms": 20}"#,
        )
        .unwrap();
        let k = c.kernel().unwrap();
        assert_eq!((k.terms(), k.beta()), (20, CScalar::new(0.0, 3.0)));

        let c = RunConfig::from_json(
            r#"{"kernel": {"coeffs": [[1, 0], [0.5, 0]], "radius": 4}, "alpha": 1}"#,
        )
        .unwrap();
        assert_eq!(c.kernel().unwrap().radius(), 4.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(
            RunConfig::from_json(r#"{"kernel": {"builtin": "nope"}, "alpha": 0.5}"#)
                .unwrap()
                .kernel()
                .is_err()
        );
        assert!(RunConfig::from_json(
            r#"{"kernel": {"builtin": "rl_constant"}, "alpha": 0.5, "typo": 1}"#
        )
        .is_err());
        assert!(RunConfig::from_json(
            r#"{"kernel": {"builtin": "rl_constant"}, "alpha": 0.5, "gamma": 2}"#
        )
        .is_err());
        let c = RunConfig::from_json(
            r#"{"kernel": {"builtin": "rl_constant"}, "alpha": 0.5, "L": "-u^2"}"#,
        )
        .unwrap();
        assert!(matches!(c.problem(), Err(CliError::Config(_))));
    }
}
