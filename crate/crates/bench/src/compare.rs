//! Communication cost to reach a target accuracy, most-efficient-agent
//! convention: for each run, the smallest per-agent broadcast count at
//! which that agent's own error first drops below the target.

use gradtrack_core::{EventLog, Trace};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variant: String,
    /// 1-based.
    pub agent: Option<usize>,
    pub count: Option<u64>,
    pub t: Option<f64>,
}

impl CompareRow {
    pub fn reached(&self) -> bool {
        self.count.is_some()
    }
}

/// Most efficient agent of one trace: `(agent, count, t)`, 0-based agent.
pub fn most_efficient_agent(trace: &Trace, target: f64) -> Option<(usize, u64, f64)> {
    let n = trace.first()?.agent_err.len();
    (0..n)
        .filter_map(|i| trace.rows.iter().find(|r| r.agent_err[i] <= target).map(|r| (i, r.agent_comm[i], r.t)))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.2.total_cmp(&b.2)))
}

pub fn compare_comm_efficiency<'a>(runs: impl IntoIterator<Item = (&'a str, &'a Trace)>, target: f64) -> Vec<CompareRow> {
    runs.into_iter()
        .map(|(name, trace)| {
            let best = most_efficient_agent(trace, target);
            CompareRow {
                variant: name.to_string(),
                agent: best.map(|b| b.0 + 1),
                count: best.map(|b| b.1),
                t: best.map(|b| b.2),
            }
        })
        .collect()
}

/// Period giving every agent the mean broadcast rate of an event-triggered
/// run over `[0, until]`.
pub fn matched_period(log: &EventLog, until: f64) -> Option<f64> {
    let count = log.events.iter().filter(|e| e.t <= until).count();
    (count > 0 && until > 0.0).then(|| until * log.n() as f64 / count as f64)
}

/// Runs must share problem, graph, seed and initial state to be compared.
pub fn check_comparable(cfgs: &[ExperimentConfig]) -> Result<()> {
    let Some(first) = cfgs.first() else {
        return Err(BenchError::Config("nothing to compare".into()));
    };
    for c in &cfgs[1..] {
        if c.problem != first.problem || c.graph != first.graph || c.seed != first.seed || c.init != first.init {
            return Err(BenchError::Config("compared runs must share problem, graph, seed and init".into()));
        }
    }
    Ok(())
}

pub fn write_csv<W: Write>(rows: &[CompareRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variant", "agent", "count", "t"]).map_err(std::io::Error::from)?;
    for r in rows {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "not reached".into());
        out.write_record([
            r.variant.clone(),
            opt(r.agent.map(|a| a.to_string())),
            opt(r.count.map(|c| c.to_string())),
            opt(r.t.map(|t| format!("{t:e}"))),
        ])
        .map_err(std::io::Error::from)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gradtrack_core::{EventKind, TraceRow};

    fn row(t: f64, comm: Vec<u64>, err: Vec<f64>) -> TraceRow {
        TraceRow {
            t,
            err_x: err.iter().map(|e| e * e).sum::<f64>().sqrt(),
            z_mean_norm: 0.0,
            lyap: None,
            comm_total: comm.iter().sum(),
            agent_comm: comm,
            agent_err: err,
        }
    }

    #[test]
    fn picks_the_cheapest_agent() {
        let tr = Trace {
            rows: vec![
                row(0.0, vec![1, 1], vec![1.0, 1.0]),
                row(1.0, vec![5, 2], vec![0.5, 0.01]),
                row(2.0, vec![6, 9], vec![0.001, 0.001]),
            ],
        };
        assert_eq!(most_efficient_agent(&tr, 0.01), Some((1, 2, 1.0)));
        assert_eq!(most_efficient_agent(&tr, 1.0), Some((0, 1, 0.0)));
        let rows = compare_comm_efficiency([("a", &tr)], 1e-9);
        assert!(!rows[0].reached());
    }

    #[test]
    fn matched_period_from_rate() {
        let mut log = EventLog::new(2);
        for i in 0..2 {
            log.record(0.0, i, EventKind::Initial);
        }
        log.record(0.5, 0, EventKind::Async);
        log.record(0.9, 0, EventKind::Async);
        // 4 broadcasts by two agents over one time unit: two per agent
        assert_eq!(matched_period(&log, 1.0), Some(0.5));
        assert_eq!(matched_period(&EventLog::new(2), 1.0), None);
    }

    #[test]
    fn csv_marks_unreached() {
        let rows = vec![CompareRow { variant: "dgt".into(), agent: None, count: None, t: None }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("dgt,not reached"));
    }
}
