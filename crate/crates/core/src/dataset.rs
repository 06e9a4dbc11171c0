//! Labelled datasets for the logistic-regression fixtures and their CSV form.
//!
//! CSV layout: `p_1, …, p_{d−1}, label, agent_id`, one row per sample, with
//! 1-based agent identifiers.

use crate::costs::{CostOracle, Problem};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
    /// 0-based owner.
    pub agent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    pub n_agents: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Two unit-variance Gaussian clouds centred at `±(1, …, 1)` labelled
    /// `±1`, `per_agent` samples per agent.
    pub fn gaussian_clouds(n_agents: usize, per_agent: usize, n_features: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(n_agents * per_agent);
        for agent in 0..n_agents {
            for _ in 0..per_agent {
                let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let features = (0..n_features)
                    .map(|_| label + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect();
                samples.push(Sample { features, label, agent });
            }
        }
        Self { n_features, n_agents, samples }
    }

    /// One regularized logistic cost per agent, variable dimension `n_features + 1`.
    pub fn to_problem<T: Real>(&self, reg: f64) -> Result<Problem<T>> {
        let mut oracles = Vec::with_capacity(self.n_agents);
        for agent in 0..self.n_agents {
            let own: Vec<&Sample> = self.samples.iter().filter(|s| s.agent == agent).collect();
            let points = DMatrix::from_fn(own.len(), self.n_features, |r, c| lit::<T>(own[r].features[c]));
            let labels = own.iter().map(|s| lit::<T>(s.label)).collect();
            oracles.push(CostOracle::logistic(points, labels, lit(reg))?);
        }
        Problem::new(oracles)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.n_features).map(|k| format!("p_{k}")).collect();
        header.push("label".into());
        header.push("agent_id".into());
        out.write_record(&header)?;
        for s in &self.samples {
            let mut rec: Vec<String> = s.features.iter().map(|v| format!("{v:e}")).collect();
            rec.push(format!("{}", s.label));
            rec.push(format!("{}", s.agent + 1));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[header.len() - 2] != "label" || &header[header.len() - 1] != "agent_id" {
            return Err(Error::InvalidInput("dataset header must end with label,agent_id".into()));
        }
        let n_features = header.len() - 2;
        let mut samples = Vec::new();
        let mut n_agents = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad number {:?}: {e}", &rec[k])))
            };
            let features = (0..n_features).map(parse).collect::<Result<Vec<_>>>()?;
            let label = parse(n_features)?;
            let agent_id: usize = rec[n_features + 1]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidInput(format!("bad agent id: {e}")))?;
            if agent_id == 0 {
                return Err(Error::InvalidInput("agent_id is 1-based".into()));
            }
            n_agents = n_agents.max(agent_id);
            samples.push(Sample { features, label, agent: agent_id - 1 });
        }
        Ok(Self { n_features, n_agents, samples })
    }
}

/// Logistic-regression problem on synthetic Gaussian clouds.
pub fn logistic_fixture<T: Real>(n_agents: usize, per_agent: usize, d: usize, reg: f64, seed: u64) -> Result<Problem<T>> {
    if d < 2 {
        return Err(Error::InvalidInput("logistic fixture needs d ≥ 2 (weights plus bias)".into()));
    }
    Dataset::gaussian_clouds(n_agents, per_agent, d - 1, seed).to_problem(reg)
}

/// Random strongly convex quadratics with Hessian spectra in `[1, 2]` and
/// offsets uniform in `[−1, 1]^d`.
pub fn quadratic_fixture<T: Real>(n_agents: usize, d: usize, seed: u64) -> Result<Problem<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracles = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let spectrum = DVector::from_fn(d, |_, _| rng.random_range(1.0..=2.0));
        let a = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let b = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
        oracles.push(CostOracle::quadratic(a.map(lit::<T>), b.map(lit::<T>))?);
    }
    Problem::new(oracles)
}
