//! Summary tables and static SVG plots. Plots are pure functions of the
//! tables, so rerunning a report reproduces them byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::{HarnessError, Lambda2Estimate, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            _ => Err(HarnessError::Spec(format!("unknown report format {s:?}"))),
        }
    }
}

pub const SUMMARY_HEADER: &str = "experiment_id,kind,graph,n,k,degrees,lambda,c,delta,eta,replicates,censored,censored_fraction,tau_count,tau_mean,tau_median,tau_se,tau_lo95,tau_hi95,outcomes,hits_mean,frozen_mean,seed_derivation";

/// Caveat carried by every report that contains λ₂ proxy estimates.
pub const PROXY_NOTE: &str = "lambda2 estimates use a finite proxy (root reoccupied during [horizon/2, horizon]); \
     the threshold q and the horizon are engineering choices, not derived quantities";

#[derive(Serialize)]
struct JsonReport<'a> {
    seed_derivation: &'static str,
    notes: Vec<&'static str>,
    summaries: &'a [Summary],
    lambda2: &'a [Lambda2Estimate],
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn summary_csv(summaries: &[Summary]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER.split(','))?;
    for s in summaries {
        let outcomes = s
            .outcomes
            .iter()
            .map(|(k, v)| format!("{k}={}", v.count))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            s.experiment_id.clone(),
            s.kind.clone(),
            s.graph.clone(),
            s.n.to_string(),
            s.k.to_string(),
            s.degrees.clone(),
            s.lambda.to_string(),
            opt(s.c),
            s.delta.to_string(),
            s.eta.to_string(),
            s.replicates.to_string(),
            s.censored.to_string(),
            s.censored_fraction.to_string(),
            s.tau.count.to_string(),
            s.tau.mean.to_string(),
            s.tau.median.to_string(),
            s.tau.std_error.to_string(),
            s.tau.interval95.0.to_string(),
            s.tau.interval95.1.to_string(),
            outcomes,
            s.hits_mean.to_string(),
            s.frozen_mean.to_string(),
            s.seed_derivation.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Spec(e.to_string()))
}

pub fn lambda2_csv(estimates: &[Lambda2Estimate]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "degrees", "depth", "horizon", "threshold", "lo", "hi", "estimate", "probes", "non_monotone"])?;
    for e in estimates {
        let degrees = e.degrees.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
        w.write_record([
            e.n.to_string(),
            degrees,
            e.depth.to_string(),
            e.horizon.to_string(),
            e.threshold.to_string(),
            e.lo.to_string(),
            e.hi.to_string(),
            e.estimate.to_string(),
            e.probes.len().to_string(),
            e.non_monotone.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Spec(e.to_string()))
}

pub fn report_json(summaries: &[Summary], estimates: &[Lambda2Estimate]) -> Result<String, HarnessError> {
    let mut notes = Vec::new();
    if !estimates.is_empty() || summaries.iter().any(|s| s.kind == "lambda2") {
        notes.push(PROXY_NOTE);
    }
    let report = JsonReport { seed_derivation: crate::seed::SEED_DERIVATION, notes, summaries, lambda2: estimates };
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn svg_open(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, y0, x1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{MARGIN}" x2="{x0}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_labels(s: &mut String, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) {
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" text-anchor="middle">{}</text>"#, HEIGHT - MARGIN + 15.0, fmt_num(x_lo));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 15.0, fmt_num(x_hi));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 5.0, HEIGHT - MARGIN, fmt_num(y_lo));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 5.0, MARGIN + 4.0, fmt_num(y_hi));
}

fn fmt_num(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else {
        format!("{x:.3}")
    }
}

/// Step plots of the empirical survival functions `P(τ > t)`.
pub fn survival_svg(summaries: &[Summary]) -> String {
    let curves: Vec<&Summary> = summaries.iter().filter(|s| s.survival_curve.len() > 1).collect();
    let t_max = curves
        .iter()
        .flat_map(|s| s.survival_curve.iter().map(|p| p.0))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut s = svg_open("Empirical survival", "t", "P(tau > t)");
    tick_labels(&mut s, 0.0, t_max, 0.0, 1.0);
    let px = |t: f64| MARGIN + (WIDTH - 2.0 * MARGIN) * t / t_max;
    let py = |p: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * p;
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        let mut prev = 1.0;
        for &(t, p) in &c.survival_curve {
            let _ = write!(pts, "{:.2},{:.2} {:.2},{:.2} ", px(t), py(prev), px(t), py(p));
            prev = p;
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, pts.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{} (lambda={})</text>"#,
            WIDTH - MARGIN - 200.0,
            MARGIN + 15.0 * (i as f64 + 1.0),
            escape(&c.graph),
            fmt_num(c.lambda)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// λ̂ against n (log scale) with the final bisection brackets as error bars.
pub fn lambda2_svg(estimates: &[Lambda2Estimate]) -> String {
    let mut s = svg_open("lambda2 proxy estimate", "n (log scale)", "lambda");
    if estimates.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let ln_lo = estimates.iter().map(|e| (e.n as f64).ln()).fold(f64::INFINITY, f64::min);
    let ln_hi = estimates.iter().map(|e| (e.n as f64).ln()).fold(f64::NEG_INFINITY, f64::max);
    let span = if ln_hi > ln_lo { ln_hi - ln_lo } else { 1.0 };
    let y_hi = estimates.iter().map(|e| e.hi).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    tick_labels(&mut s, ln_lo.exp(), (ln_lo + span).exp(), 0.0, y_hi);
    let px = |n: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * ((n as f64).ln() - ln_lo) / span;
    let py = |y: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * y / y_hi;
    for e in estimates {
        let x = px(e.n);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, py(e.lo), py(e.hi));
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{}"/>"#, py(e.estimate), COLORS[0]);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the requested formats into `dir` and returns the files written.
pub fn emit_report(
    dir: &Path,
    summaries: &[Summary],
    estimates: &[Lambda2Estimate],
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), HarnessError> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Csv => {
                if !summaries.is_empty() {
                    put("summary.csv", summary_csv(summaries)?)?;
                }
                if !estimates.is_empty() {
                    put("lambda2.csv", lambda2_csv(estimates)?)?;
                }
            }
            ReportFormat::Json => put("report.json", report_json(summaries, estimates)?)?,
            ReportFormat::Svg => {
                if summaries.iter().any(|s| s.survival_curve.len() > 1) {
                    put("survival.svg", survival_svg(summaries))?;
                }
                if !estimates.is_empty() {
                    put("lambda2.svg", lambda2_svg(estimates))?;
                }
            }
        }
    }
    Ok(written)
}
