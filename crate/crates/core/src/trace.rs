//! Time-indexed run records, their CSV schema, and log-linear decay fits.

use crate::error::{Error, Result};
use std::io::{Read, Write};

/// One sample of a run. Time is seconds for continuous variants and the
/// iteration index for the discrete algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// `‖x − 𝟏x*‖`.
    pub err_x: f64,
    /// `‖𝟏ᵀz‖`.
    pub z_mean_norm: f64,
    /// `V(ζ)` or `Ṽ(ζ, ξ)` when a certificate is attached.
    pub lyap: Option<f64>,
    /// Network-wide broadcasts so far.
    pub comm_total: u64,
    pub agent_comm: Vec<u64>,
    /// `‖x_i − x*‖` per agent; kept in memory only.
    pub agent_err: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

pub const TRACE_COLUMNS: [&str; 5] = ["t", "err_x", "z_mean_norm", "lyap", "comm_total"];

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&TraceRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_x).collect()
    }

    pub fn max_z_mean_norm(&self) -> f64 {
        self.rows.iter().map(|r| r.z_mean_norm).fold(0.0, f64::max)
    }

    /// Rows with `t` in `[from, to]`.
    pub fn window(&self, from: f64, to: f64) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.t >= from && r.t <= to)
    }

    /// Writes `t,err_x,z_mean_norm,lyap,comm_total,comm_1..comm_N`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.rows.first().map_or(0, |r| r.agent_comm.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = TRACE_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((1..=n).map(|i| format!("comm_{i}")));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                format!("{:e}", r.t),
                format!("{:e}", r.err_x),
                format!("{:e}", r.z_mean_norm),
                r.lyap.map(|v| format!("{v:e}")).unwrap_or_default(),
                r.comm_total.to_string(),
            ];
            rec.extend(r.agent_comm.iter().map(|c| c.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < TRACE_COLUMNS.len() || header.iter().zip(TRACE_COLUMNS).any(|(a, b)| a != b) {
            return Err(Error::InvalidInput(format!("unexpected trace header {header:?}")));
        }
        let n = header.len() - TRACE_COLUMNS.len();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| Error::InvalidInput(format!("column {k}: {e}")))
            };
            let int = |k: usize| -> Result<u64> {
                rec[k].parse::<u64>().map_err(|e| Error::InvalidInput(format!("column {k}: {e}")))
            };
            rows.push(TraceRow {
                t: num(0)?,
                err_x: num(1)?,
                z_mean_norm: num(2)?,
                lyap: if rec[3].is_empty() { None } else { Some(num(3)?) },
                comm_total: int(4)?,
                agent_comm: (0..n).map(|i| int(5 + i)).collect::<Result<_>>()?,
                agent_err: Vec::new(),
            });
        }
        Ok(Self { rows })
    }
}

/// Least-squares fit `ln err ≈ intercept − rate · t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits `ln y` against `t`, skipping non-positive values.
pub fn fit_log_linear(t: &[f64], y: &[f64]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&a, &b)| (a, b.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Some(DecayFit { rate: -slope, intercept, r2, points: pts.len() })
}

/// Relative level below which errors are treated as the numerical floor.
pub const FIT_FLOOR: f64 = 1e-12;

/// Decay fit on the middle half of the trace, excluding the floor.
pub fn fit_decay(trace: &Trace) -> Option<DecayFit> {
    let (first, last) = (trace.first()?, trace.last()?);
    let span = last.t - first.t;
    fit_decay_window(trace, first.t + 0.25 * span, first.t + 0.75 * span)
}

/// Decay fit over `[from, to]`, excluding samples below `FIT_FLOOR · max(1, err_0)`.
pub fn fit_decay_window(trace: &Trace, from: f64, to: f64) -> Option<DecayFit> {
    let floor = FIT_FLOOR * trace.first()?.err_x.max(1.0);
    let (t, y): (Vec<f64>, Vec<f64>) = trace.window(from, to).filter(|r| r.err_x > floor).map(|r| (r.t, r.err_x)).unzip();
    fit_log_linear(&t, &y)
}
