//! Parallel one-parameter sweeps.

use rayon::prelude::*;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, VariantSpec, Xi0};
use crate::error::{BenchError, Result};
use crate::experiment::{run_experiment, Summary};

/// Parses `name=v1,v2,…`.
pub fn parse_param(spec: &str) -> Result<(String, Vec<f64>)> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| BenchError::Config(format!("expected name=v1,v2,…, got {spec:?}")))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| BenchError::Config(format!("bad sweep value {v:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(BenchError::Config("sweep needs at least one value".into()));
    }
    Ok((name.trim().to_string(), values))
}

/// Returns a copy of `cfg` with one parameter replaced.
pub fn with_param(cfg: &ExperimentConfig, name: &str, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    let mismatch = || BenchError::Config(format!("parameter {name:?} does not apply to variant {}", cfg.variant.name()));
    match (name, &mut c.variant) {
        ("lambda", VariantSpec::Async { lambda, .. }) => *lambda = value,
        ("nu", VariantSpec::Async { nu, .. }) => *nu = value,
        ("xi0", VariantSpec::Async { xi0, .. }) => *xi0 = Xi0::All(value),
        ("delta", VariantSpec::Sync { delta }) => *delta = value,
        ("gamma", VariantSpec::Dgt { gamma, .. }) => *gamma = value,
        ("lambda" | "nu" | "xi0" | "delta" | "gamma", _) => return Err(mismatch()),
        ("h" | "check_interval", _) => c.integrator.h = value,
        ("t_end", _) => c.integrator.t_end = value,
        ("seed", _) => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(BenchError::Config(format!("seed must be a non-negative integer, got {value}")));
            }
            c.seed = value as u64;
        }
        _ => return Err(BenchError::Config(format!("unknown sweep parameter {name:?}"))),
    }
    Ok(c)
}

pub fn job_dir(root: &Path, name: &str, value: f64) -> PathBuf {
    root.join(format!("{name}={value}"))
}

/// Runs one job per value in parallel, each in its own subdirectory.
pub fn sweep(cfg: &ExperimentConfig, name: &str, values: &[f64], root: &Path) -> Result<Vec<(f64, Result<Summary>)>> {
    let jobs = values.iter().map(|&v| with_param(cfg, name, v).map(|c| (v, c))).collect::<Result<Vec<_>>>()?;
    Ok(jobs
        .into_par_iter()
        .map(|(v, c)| {
            let dir = job_dir(root, name, v);
            (v, run_experiment(&c, &dir))
        })
        .collect())
}
