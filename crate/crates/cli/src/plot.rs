//! Minimal SVG line charts of the result curves. The CSVs are the actual
//! outputs; these are for a quick look.

use std::fmt::Write as _;
use std::path::Path;

use crate::commands::benchmark::MetricsRecord;
use crate::commands::convergence::GapCurve;
use crate::config::Method;
use crate::error::{CliError, CliResult};

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

type Series = (String, Vec<(f64, f64)>);

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

fn line_chart(path: &Path, title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> CliResult<()> {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let (left, right, top, bottom) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#, sx(xv), bottom + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, left - 6.0, sy(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, d.join(" "));
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{name}</text>"#, right - 90.0);
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

pub fn nmse_vs_snr(path: &Path, records: &[MetricsRecord]) -> CliResult<()> {
    let mut series: Vec<Series> = Vec::new();
    for m in Method::ALL {
        let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.method == m).map(|r| (r.snr_db, r.nmse_db)).collect();
        if !pts.is_empty() {
            series.push((m.name().into(), pts));
        }
    }
    line_chart(path, "NMSE versus SNR", "SNR (dB)", "NMSE (dB)", &series)
}

pub fn per_iteration(path: &Path, curves: &[(Method, Vec<f64>)]) -> CliResult<()> {
    let series: Vec<Series> = curves
        .iter()
        .map(|(m, c)| (m.name().into(), c.iter().enumerate().map(|(t, v)| ((t + 1) as f64, *v)).collect()))
        .collect();
    line_chart(path, "NMSE per iteration", "iteration", "NMSE (dB)", &series)
}

pub fn gaps(path: &Path, curves: &[GapCurve]) -> CliResult<()> {
    let series: Vec<Series> = curves
        .iter()
        .map(|g| (format!("{} dB", g.snr_db), g.mean.iter().enumerate().map(|(t, v)| ((t + 1) as f64, *v)).collect()))
        .collect();
    line_chart(path, "Normalized gap to the fixed point", "iteration", "log10 gap", &series)
}
