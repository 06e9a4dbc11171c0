//! Minimal self-contained SVG charts.

use gradtrack_core::{EventKind, EventLog, Trace};
use std::fmt::Write;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::experiment::{Summary, EVENTS_FILE, SUMMARY_FILE, TRACE_FILE};
use crate::error::Result;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    if hi > lo {
        Some((lo, hi))
    } else {
        Some((lo - 0.5, hi + 0.5))
    }
}

/// Line chart with a base-10 logarithmic y axis; non-positive values are dropped.
pub fn log_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut s = header(title);
    axes(&mut s, x_label, y_label);
    let pts = || series.iter().flat_map(|se| se.points.iter()).filter(|p| p.1 > 0.0 && p.1.is_finite());
    let (Some((xa, xb)), Some((ya, yb))) = (range(pts().map(|p| p.0)), range(pts().map(|p| p.1.log10()))) else {
        s.push_str("</svg>\n");
        return s;
    };
    let (ya, yb) = (ya.floor(), yb.ceil().max(ya.floor() + 1.0));
    let px = |x: f64| LEFT + (x - xa) / (xb - xa) * (W - LEFT - RIGHT);
    let py = |ly: f64| (H - BOTTOM) - (ly - ya) / (yb - ya) * (H - TOP - BOTTOM);
    let step = ((yb - ya) / 8.0).ceil().max(1.0);
    let mut e = ya;
    while e <= yb {
        let y = py(e);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#, LEFT - 6.0, y + 4.0, e as i64);
        e += step;
    }
    for (k, x) in [xa, (xa + xb) / 2.0, xb].into_iter().enumerate() {
        let anchor = ["start", "middle", "end"][k];
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="{anchor}">{}</text>"#, px(x), H - BOTTOM + 16.0, fmt_tick(x));
    }
    for (k, se) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let visible: Vec<(f64, f64)> =
            se.points.iter().filter(|p| p.1 > 0.0 && p.1.is_finite()).map(|p| (px(p.0), py(p.1.log10()))).collect();
        if visible.len() == 1 {
            let (x, y) = visible[0];
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        } else if !visible.is_empty() {
            let d: Vec<String> = visible
                .iter()
                .enumerate()
                .map(|(i, (x, y))| format!("{}{x:.2} {y:.2}", if i == 0 { "M" } else { "L" }))
                .collect();
            let _ = writeln!(s, r#"<path d="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, d.join(" "));
        }
        let ly = TOP + 16.0 * k as f64 + 10.0;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/>"#, W - RIGHT - 150.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, W - RIGHT - 132.0, escape(&se.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-2) {
        format!("{x:.1e}")
    } else {
        format!("{}", (x * 100.0).round() / 100.0)
    }
}

/// Error against time.
pub fn error_vs_time(label: &str, trace: &Trace) -> Series {
    Series { label: label.into(), points: trace.rows.iter().map(|r| (r.t, r.err_x)).collect() }
}

/// Error against network-wide communication rounds.
pub fn error_vs_comm(label: &str, trace: &Trace) -> Series {
    Series { label: label.into(), points: trace.rows.iter().map(|r| (r.comm_total as f64, r.err_x)).collect() }
}

/// One mark per broadcast: agent index against time.
pub fn raster(title: &str, log: &EventLog, horizon: f64) -> String {
    let mut s = header(title);
    axes(&mut s, "time", "agent");
    let n = log.n().max(1);
    let xb = if horizon > 0.0 { horizon } else { log.events.iter().map(|e| e.t).fold(1.0, f64::max) };
    let px = |t: f64| LEFT + t / xb * (W - LEFT - RIGHT);
    let row_h = (H - TOP - BOTTOM) / n as f64;
    let py = |i: usize| TOP + row_h * (i as f64 + 0.5);
    for i in 0..n {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py(i) + 4.0, i + 1);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - RIGHT, H - BOTTOM + 16.0, fmt_tick(xb));
    let half = (row_h * 0.35).min(6.0);
    for e in &log.events {
        let color = match e.kind {
            EventKind::Initial => "#888",
            EventKind::Sync => COLORS[1],
            EventKind::Async => COLORS[0],
        };
        let (x, y) = (px(e.t), py(e.agent));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#, y - half, y + half);
    }
    s.push_str("</svg>\n");
    s
}

/// Renders the charts of a run directory into `out`; returns the files written.
pub fn plot_run(run_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let trace = Trace::read_csv(BufReader::new(File::open(run_dir.join(TRACE_FILE))?))?;
    let summary: Summary = serde_json::from_reader(BufReader::new(File::open(run_dir.join(SUMMARY_FILE))?))?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut save = |name: &str, svg: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, svg)?;
        written.push(path);
        Ok(())
    };
    let label = summary.variant.as_str();
    save("error_time.svg", log_line_chart("optimality error", "time", "error", &[error_vs_time(label, &trace)]))?;
    save(
        "error_comm.svg",
        log_line_chart("optimality error", "communication rounds", "error", &[error_vs_comm(label, &trace)]),
    )?;
    let events = run_dir.join(EVENTS_FILE);
    if events.exists() {
        let log = EventLog::read_csv(BufReader::new(File::open(events)?), summary.n_agents)?;
        save("raster.svg", raster("broadcast events", &log, summary.horizon))?;
    }
    Ok(written)
}
