//! CSV tables and SVG line plots of a sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::folds::Scheme;
use crate::eval::pipeline::Method;
use crate::eval::sweep::{
    BASELINE_HEADER, BaselineRow, FOLDS_HEADER, SUMMARY_HEADER, SummaryRow, SweepResult, baseline_by_scheme,
    read_csv, summarize, write_csv,
};

pub const FOLDS_FILE: &str = "folds.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BASELINE_FILE: &str = "baseline.csv";

/// Reads `folds.csv` and, when present, `baseline.csv` from a sweep directory.
pub fn read_sweep(dir: &Path) -> Result<SweepResult> {
    let folds = read_csv(&dir.join(FOLDS_FILE))?;
    let baseline_path = dir.join(BASELINE_FILE);
    let baseline = if baseline_path.exists() {
        read_csv(&baseline_path)?
    } else {
        Vec::new()
    };
    Ok(SweepResult { folds, baseline })
}

/// Writes the per-fold and aggregated tables plus one accuracy and one gap
/// plot per scheme. Returns the written paths.
pub fn write_report(result: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if result.folds.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one result row".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let summary = summarize(&result.folds);
    let baseline = baseline_by_scheme(&result.baseline);
    let mut written = Vec::new();

    let mut table = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = out_dir.join(name);
        f(&p)?;
        written.push(p);
        Ok(())
    };
    table(FOLDS_FILE, &|p| write_csv(p, &result.folds, &FOLDS_HEADER))?;
    table(SUMMARY_FILE, &|p| write_csv(p, &summary, &SUMMARY_HEADER))?;
    if !result.baseline.is_empty() {
        table(BASELINE_FILE, &|p| write_csv::<BaselineRow>(p, &result.baseline, &BASELINE_HEADER))?;
    }

    let mut schemes: Vec<Scheme> = Vec::new();
    for s in &summary {
        if !schemes.contains(&s.scheme) {
            schemes.push(s.scheme);
        }
    }
    for scheme in schemes {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|s| s.scheme == scheme).collect();
        let reference = baseline.get(&scheme).copied();
        let acc = line_plot(
            &format!("Accuracy vs closing time ({scheme})"),
            "accuracy",
            &series(&rows, |r| Some(r.accuracy_mean)),
            reference,
        );
        let gap = line_plot(
            &format!("Time between closings vs closing time ({scheme})"),
            "minutes",
            &series(&rows, |r| r.gap_minutes_global),
            None,
        );
        for (name, svg) in [(format!("accuracy_{scheme}.svg"), acc), (format!("gap_{scheme}.svg"), gap)] {
            let p = out_dir.join(name);
            std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    Ok(written)
}

type Series = Vec<(Method, Vec<(f64, f64)>)>;

fn series(rows: &[&SummaryRow], value: impl Fn(&SummaryRow) -> Option<f64>) -> Series {
    let mut order: Vec<Method> = Vec::new();
    let mut by: BTreeMap<Method, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
        let points = by.entry(r.method).or_default();
        if let Some(v) = value(r) {
            points.push((r.closing_time as f64, v));
        }
    }
    order
        .into_iter()
        .map(|m| {
            let mut pts = by.remove(&m).unwrap_or_default();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (m, pts)
        })
        .collect()
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f", "#17becf"];

/// A minimal SVG line chart. Each point carries `data-method`, `data-x` and
/// `data-y` attributes holding the exact plotted values.
pub fn line_plot(title: &str, y_label: &str, series: &Series, reference: Option<f64>) -> String {
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let ys = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .chain(reference);
    let (x0, x1) = bounds(xs, 0.0, 60.0);
    let (y0, y1) = bounds(ys, 0.0, 1.0);
    let (y0, y1) = (y0.min(0.0), if y1 > y0 { y1 } else { y0 + 1.0 });
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    let (bx, by) = (px(x0), py(y0));
    writeln!(
        s,
        r#"<line x1="{bx}" y1="{by}" x2="{}" y2="{by}" stroke="black"/>"#,
        WIDTH - MARGIN
    )
    .unwrap();
    writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{bx}" y2="{MARGIN}" stroke="black"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">closing time (s)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (label, v) in [(x0, x0), (x1, x1)] {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#, px(v), by + 16.0).unwrap();
    }
    for v in [y0, y1] {
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            bx - 6.0,
            py(v) + 4.0,
            round3(v)
        )
        .unwrap();
    }

    if let Some(r) = reference {
        writeln!(
            s,
            r#"<line class="reference" data-method="majority" data-y="{r}" x1="{bx}" y1="{y}" x2="{}" y2="{y}" stroke="gray" stroke-dasharray="6 4"/>"#,
            WIDTH - MARGIN,
            y = py(r)
        )
        .unwrap();
    }
    for (i, (method, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{},{}", px(x), py(y))).collect();
        writeln!(
            s,
            r#"<polyline class="series" data-method="{method}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        )
        .unwrap();
        for &(x, y) in points {
            writeln!(
                s,
                r#"<circle class="point" data-method="{method}" data-x="{x}" data-y="{y}" cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                px(x),
                py(y)
            )
            .unwrap();
        }
        let ly = MARGIN + 16.0 * i as f64;
        writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{method}</text>"#,
            WIDTH - MARGIN - 90.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>, lo: f64, hi: f64) -> (f64, f64) {
    let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        a = a.min(v);
        b = b.max(v);
    }
    if !a.is_finite() {
        return (lo, hi);
    }
    if a == b {
        return (a - 1.0, b + 1.0);
    }
    (a, b)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Extracts `(method, x, y)` triples from the point markers of a plot.
pub fn plot_points(svg: &str) -> Vec<(String, f64, f64)> {
    let attr = |line: &str, name: &str| -> Option<String> {
        let key = format!(r#"{name}=""#);
        let start = line.find(&key)? + key.len();
        let end = line[start..].find('"')? + start;
        Some(line[start..end].to_string())
    };
    svg.lines()
        .filter(|l| l.contains(r#"class="point""#))
        .filter_map(|l| {
            Some((
                attr(l, "data-method")?,
                attr(l, "data-x")?.parse().ok()?,
                attr(l, "data-y")?.parse().ok()?,
            ))
        })
        .collect()
}

/// The `data-y` of the majority reference line, if drawn.
pub fn plot_reference(svg: &str) -> Option<f64> {
    let line = svg.lines().find(|l| l.contains(r#"class="reference""#))?;
    let start = line.find(r#"data-y=""#)? + 8;
    let end = line[start..].find('"')? + start;
    line[start..end].parse().ok()
}
