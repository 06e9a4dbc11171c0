//! Experiment configuration, read from JSON or TOML.

use gradtrack_core::graph::erdos_renyi;
use gradtrack_core::robust::NoiseSpec;
use gradtrack_core::trigger::TriggerLaw;
use gradtrack_core::{dataset, DgtForm, Graph64, GraphJson, Method, Problem64};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{BenchError, Result};

pub const SEED_ENV: &str = "GRADTRACK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub problem: ProblemSpec,
    pub graph: GraphSpec,
    pub variant: VariantSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub init: InitSpec,
    /// Also compute and write the certificate.
    #[serde(default)]
    pub certify: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Regularized logistic regression on two Gaussian clouds.
    Logistic {
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default = "default_m")]
        m_i: usize,
        #[serde(default = "default_c", rename = "C", alias = "c")]
        reg: f64,
    },
    Quadratic {
        #[serde(default = "default_quad_d")]
        d: usize,
    },
    /// Logistic regression on a dataset CSV.
    Dataset {
        path: PathBuf,
        #[serde(default = "default_c", rename = "C", alias = "c")]
        reg: f64,
    },
}

fn default_d() -> usize {
    3
}
fn default_m() -> usize {
    10
}
fn default_c() -> f64 {
    0.1
}
fn default_quad_d() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    ErdosRenyi {
        n: usize,
        #[serde(default = "default_p")]
        p: f64,
        /// Defaults to the experiment seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Ring {
        n: usize,
    },
    Path {
        n: usize,
    },
    Complete {
        n: usize,
    },
    File {
        path: PathBuf,
    },
}

fn default_p() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantSpec {
    Dgt {
        #[serde(default = "default_gamma")]
        gamma: f64,
        iterations: usize,
        #[serde(default = "default_form")]
        form: DgtForm,
    },
    Cgt,
    Sync {
        delta: f64,
    },
    Async {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_nu")]
        nu: f64,
        #[serde(default)]
        xi0: Xi0,
        #[serde(default)]
        law: TriggerLaw,
    },
}

fn default_gamma() -> f64 {
    0.1
}
fn default_form() -> DgtForm {
    DgtForm::Causal
}
fn default_lambda() -> f64 {
    0.1
}
fn default_nu() -> f64 {
    5.0
}

impl VariantSpec {
    pub fn name(&self) -> &'static str {
        match self {
            VariantSpec::Dgt { .. } => "dgt",
            VariantSpec::Cgt => "cgt",
            VariantSpec::Sync { .. } => "sync",
            VariantSpec::Async { .. } => "async",
        }
    }
}

/// `ξ(0)`: one value for every agent, or one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Xi0 {
    All(f64),
    PerAgent(Vec<f64>),
}

impl Default for Xi0 {
    fn default() -> Self {
        Xi0::All(1.0)
    }
}

impl Xi0 {
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Xi0::All(v) => Ok(vec![*v; n]),
            Xi0::PerAgent(v) if v.len() == n => Ok(v.clone()),
            Xi0::PerAgent(v) => Err(BenchError::Config(format!("xi0 has {} entries for {n} agents", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// Step size, which is also the trigger check interval.
    #[serde(default = "default_h", alias = "check_interval")]
    pub h: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_every")]
    pub sample_every: usize,
}

fn default_h() -> f64 {
    1e-3
}
fn default_t_end() -> f64 {
    40.0
}
fn default_every() -> usize {
    1
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self { h: default_h(), t_end: default_t_end(), method: Method::Rk4, sample_every: 1 }
    }
}

/// `x_i(0)` uniform in `[−scale, scale]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    5.0
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { scale: default_scale() }
    }
}

impl ExperimentConfig {
    /// Parses by extension: `.toml`, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        let mut cfg = if is_toml { Self::from_toml(&text)? } else { Self::from_json(&text)? };
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ProblemSpec::Dataset { path, .. } = &mut self.problem {
            fix(path);
        }
        if let GraphSpec::File { path } = &mut self.graph {
            fix(path);
        }
    }

    /// Applies `GRADTRACK_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| BenchError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        let it = &self.integrator;
        if !(it.h > 0.0 && it.h.is_finite()) {
            return bad(format!("integrator.h must be positive, got {}", it.h));
        }
        if !(it.t_end >= 0.0 && it.t_end.is_finite()) {
            return bad(format!("integrator.t_end must be non-negative, got {}", it.t_end));
        }
        if it.sample_every == 0 {
            return bad("integrator.sample_every must be at least 1".into());
        }
        if !(self.init.scale >= 0.0 && self.init.scale.is_finite()) {
            return bad("init.scale must be non-negative".into());
        }
        match &self.problem {
            ProblemSpec::Logistic { d, m_i, reg } => {
                if *d < 2 || *m_i == 0 || !(*reg > 0.0) {
                    return bad("logistic problem needs d ≥ 2, m_i ≥ 1 and C > 0".into());
                }
            }
            ProblemSpec::Quadratic { d } if *d == 0 => return bad("quadratic problem needs d ≥ 1".into()),
            ProblemSpec::Dataset { reg, .. } if !(*reg > 0.0) => return bad("dataset problem needs C > 0".into()),
            _ => {}
        }
        match &self.graph {
            GraphSpec::ErdosRenyi { n, p, .. } if *n < 2 || !(*p > 0.0 && *p <= 1.0) => {
                return bad(format!("erdos_renyi needs n ≥ 2 and p in (0, 1], got n = {n}, p = {p}"));
            }
            GraphSpec::Ring { n } | GraphSpec::Path { n } | GraphSpec::Complete { n } if *n < 2 => {
                return bad("graph needs at least 2 agents".into());
            }
            _ => {}
        }
        match &self.variant {
            VariantSpec::Dgt { gamma, .. } if !(*gamma > 0.0) => return bad("gamma must be positive".into()),
            VariantSpec::Sync { delta } if !(*delta > 0.0 && delta.is_finite()) => {
                return bad("delta must be positive".into());
            }
            VariantSpec::Async { lambda, nu, xi0, law } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return bad("lambda must be positive".into());
                }
                if *law == TriggerLaw::WithAuxiliary {
                    if !(*nu > 0.0 && nu.is_finite()) {
                        return bad("nu must be positive".into());
                    }
                    let all_zero = match xi0 {
                        Xi0::All(v) => *v == 0.0,
                        Xi0::PerAgent(v) => v.iter().all(|x| *x == 0.0),
                    };
                    if all_zero {
                        return bad("xi0 must not be identically zero".into());
                    }
                }
            }
            _ => {}
        }
        if let Some(noise) = &self.noise {
            noise.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            if matches!(self.variant, VariantSpec::Dgt { .. }) {
                return bad("noise is only supported for continuous-time variants".into());
            }
        }
        Ok(())
    }

    pub fn build_graph(&self) -> Result<Graph64> {
        let g = match &self.graph {
            GraphSpec::ErdosRenyi { n, p, seed } => erdos_renyi(*n, *p, seed.unwrap_or(self.seed))?,
            GraphSpec::Ring { n } => Graph64::ring(*n),
            GraphSpec::Path { n } => Graph64::path(*n),
            GraphSpec::Complete { n } => Graph64::complete(*n),
            GraphSpec::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
                let json: GraphJson = serde_json::from_str(&text).map_err(|e| BenchError::Config(e.to_string()))?;
                Graph64::from_json(&json)?
            }
        };
        if !g.is_connected() {
            return Err(BenchError::Config("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Problem over `n` agents with its optimum solved.
    pub fn build_problem(&self, n: usize) -> Result<Problem64> {
        let mut p = match &self.problem {
            ProblemSpec::Logistic { d, m_i, reg } => dataset::logistic_fixture(n, *m_i, *d, *reg, self.seed)?,
            ProblemSpec::Quadratic { d } => dataset::quadratic_fixture(n, *d, self.seed)?,
            ProblemSpec::Dataset { path, reg } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| BenchError::Config(format!("cannot open {}: {e}", path.display())))?;
                let ds = dataset::Dataset::read_csv(file)?;
                if ds.n_agents != n {
                    return Err(BenchError::Config(format!("dataset has {} agents, graph has {n}", ds.n_agents)));
                }
                ds.to_problem(*reg)?
            }
        };
        p.ensure_x_star()?;
        Ok(p)
    }
}
