//! Runs one configured experiment and writes its artifact bundle.

use gradtrack_core::cgt::default_initial_state;
use gradtrack_core::graph::{laplacian, metropolis_weights};
use gradtrack_core::trace::fit_decay;
use gradtrack_core::trigger::{zeno_report, AsyncParams, Schedule, Simulation};
use gradtrack_core::{run_dgt, Certificate, CertificateReport, EventLog, IntegratorConfig, Trace};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::{ExperimentConfig, VariantSpec};
use crate::error::{BenchError, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const SUMMARY_FILE: &str = "summary.json";

const X0_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub status: Status,
    pub seed: u64,
    pub n_agents: usize,
    pub dim: usize,
    pub horizon: f64,
    pub initial_err: Option<f64>,
    pub final_err: Option<f64>,
    pub decay_rate: Option<f64>,
    pub decay_r2: Option<f64>,
    pub total_comm: u64,
    pub min_event_gap: Option<f64>,
    /// 1-based ids of agents failing the trailing-rate check.
    pub zeno_flags: Vec<usize>,
    pub error: Option<String>,
}

impl Summary {
    fn failed(cfg: &ExperimentConfig, err: &BenchError) -> Self {
        let status = if err.exit_code() == 2 { Status::Diverged } else { Status::Failed };
        Self {
            variant: cfg.variant.name().into(),
            status,
            seed: cfg.seed,
            n_agents: 0,
            dim: 0,
            horizon: horizon(cfg),
            initial_err: None,
            final_err: None,
            decay_rate: None,
            decay_r2: None,
            total_comm: 0,
            min_event_gap: None,
            zeno_flags: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub events: Option<EventLog>,
    pub certificate: Option<CertificateReport>,
    pub summary: Summary,
}

fn horizon(cfg: &ExperimentConfig) -> f64 {
    match cfg.variant {
        VariantSpec::Dgt { iterations, .. } => iterations as f64,
        _ => cfg.integrator.t_end,
    }
}

/// `x_i(0)` for a configuration.
pub fn initial_state(cfg: &ExperimentConfig, n: usize, d: usize) -> DVector<f64> {
    default_initial_state::<f64>(n, d, cfg.seed ^ X0_STREAM) * (cfg.init.scale / 5.0)
}

/// Runs the experiment in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let n = graph.n();
    let problem = cfg.build_problem(n)?;
    let d = problem.dim();
    let x0 = initial_state(cfg, n, d);

    let cert = if cfg.certify { Some(Certificate::build(&graph, &problem)?) } else { None };
    let probe = cert.as_ref().map(|c| c.probe(&problem)).transpose()?;

    let it = &cfg.integrator;
    let mut icfg = IntegratorConfig::new(it.h, it.t_end, it.method);
    icfg.sample_every = it.sample_every;
    let lap = laplacian(&graph, d);

    let (trace, events) = match &cfg.variant {
        VariantSpec::Dgt { gamma, iterations, form } => {
            let w = metropolis_weights(&graph);
            (run_dgt(&problem, &w, *gamma, x0, *iterations, *form)?, None)
        }
        variant => {
            let schedule = match variant {
                VariantSpec::Cgt => Schedule::Continuous,
                VariantSpec::Sync { delta } => Schedule::periodic(*delta, it.h)?,
                VariantSpec::Async { lambda, nu, xi0, law } => Schedule::Event(AsyncParams {
                    lambda: *lambda,
                    nu: *nu,
                    xi0: DVector::from_vec(xi0.values(n)?),
                    law: *law,
                }),
                VariantSpec::Dgt { .. } => unreachable!(),
            };
            let mut sim = Simulation::new(&problem, &lap, schedule, icfg);
            if let Some(noise) = &cfg.noise {
                sim = sim.with_noise(noise);
            }
            if let Some(p) = &probe {
                sim = sim.with_probe(p);
            }
            let run = sim.run(x0)?;
            let triggered = !matches!(variant, VariantSpec::Cgt);
            (run.trace, triggered.then_some(run.events))
        }
    };

    let fit = fit_decay(&trace);
    let zeno = events.as_ref().map(|log| zeno_report(log, horizon(cfg)));
    let summary = Summary {
        variant: cfg.variant.name().into(),
        status: Status::Ok,
        seed: cfg.seed,
        n_agents: n,
        dim: d,
        horizon: horizon(cfg),
        initial_err: trace.first().map(|r| r.err_x),
        final_err: trace.last().map(|r| r.err_x),
        decay_rate: fit.map(|f| f.rate),
        decay_r2: fit.map(|f| f.r2),
        total_comm: trace.last().map_or(0, |r| r.comm_total),
        min_event_gap: events
            .as_ref()
            .map(|log| log.min_gap.iter().copied().fold(f64::INFINITY, f64::min))
            .filter(|g| g.is_finite()),
        zeno_flags: zeno.map(|z| z.flagged().into_iter().map(|i| i + 1).collect()).unwrap_or_default(),
        error: None,
    };
    Ok(RunOutput { trace, events, certificate: cert.map(|c| c.report()), summary })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes the artifacts of a finished run into `dir`.
pub fn write_artifacts(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    out.trace.write_csv(create(dir, TRACE_FILE)?)?;
    if let Some(log) = &out.events {
        log.write_csv(create(dir, EVENTS_FILE)?)?;
    }
    if let Some(c) = &out.certificate {
        write_json(dir, CERTIFICATE_FILE, c)?;
    }
    write_json(dir, SUMMARY_FILE, &out.summary)
}

/// Runs and writes artifacts; a failed run still leaves a summary behind.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Summary> {
    match simulate(cfg) {
        Ok(out) => {
            write_artifacts(&out, dir)?;
            Ok(out.summary)
        }
        Err(err) => {
            std::fs::create_dir_all(dir)?;
            write_json(dir, SUMMARY_FILE, &Summary::failed(cfg, &err))?;
            Err(err)
        }
    }
}

/// Certificate alone, without running the dynamics.
pub fn certify(cfg: &ExperimentConfig) -> Result<CertificateReport> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let problem = cfg.build_problem(graph.n())?;
    Ok(Certificate::build(&graph, &problem)?.report())
}
