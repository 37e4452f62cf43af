//! CSV, JSON and SVG emission. Files are written once, after a run finishes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use dngd::analysis::MetricsSample;

use crate::experiment::{FlowReport, RunReport, SweepAxis, SweepReport};
use crate::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_Y: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Serialize)]
struct RunRow {
    k: f64,
    comm_scalars: u64,
    sum_subopt: f64,
    max_subopt: f64,
    consensus_err: f64,
    lyapunov: Option<f64>,
    momentum_invariant_margin: Option<f64>,
}

#[derive(Serialize)]
struct FlowRow {
    t: f64,
    max_subopt: f64,
    sum_subopt: f64,
    consensus_err: f64,
    lyapunov: Option<f64>,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `k,comm_scalars,sum_subopt,max_subopt,consensus_err,lyapunov,momentum_invariant_margin`.
pub fn write_metrics_csv(path: &Path, metrics: &[MetricsSample]) -> Result<(), CliError> {
    write_rows(
        path,
        metrics.iter().map(|m| RunRow {
            k: m.index,
            comm_scalars: m.comm_scalars,
            sum_subopt: m.sum_subopt,
            max_subopt: m.max_subopt,
            consensus_err: m.consensus_err,
            lyapunov: m.lyapunov,
            momentum_invariant_margin: m.momentum_margin,
        }),
    )
}

/// Columns `t,max_subopt,sum_subopt,consensus_err,lyapunov`.
pub fn write_flow_csv(path: &Path, metrics: &[MetricsSample]) -> Result<(), CliError> {
    write_rows(
        path,
        metrics.iter().map(|m| FlowRow {
            t: m.index,
            max_subopt: m.max_subopt,
            sum_subopt: m.sum_subopt,
            consensus_err: m.consensus_err,
            lyapunov: m.lyapunov,
        }),
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One labelled polyline.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Line plot with a fixed 800×600 viewBox. Non-finite points, and
/// non-positive ones on log axes, are dropped.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool, log_y: bool) -> String {
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!log_x || x > 0.0) && (!log_y || y > 0.0);
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter(|p| keep(p)).map(|&(x, y)| (tx(x), ty(y))).collect())
        .collect();
    let all = mapped.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = all.fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y1 = y0 + 1.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| HEIGHT - MARGIN_Y - (y - y0) / (y1 - y0) * plot_h;
    let axis_text = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3e}") };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="25" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(xv),
            HEIGHT - MARGIN_Y + 18.0,
            axis_text(xv, log_x)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py(yv) + 4.0,
            axis_text(yv, log_y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, (ser, pts)) in series.iter().zip(&mapped).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN_Y + 16.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn out_path(dir: &Path, file: String) -> PathBuf {
    dir.join(file)
}

/// Paths written for a run: metrics CSVs, summary, plot.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let single = report.algorithms.len() == 1;
    for a in &report.algorithms {
        let file = if single {
            format!("{}.metrics.csv", report.name)
        } else {
            format!("{}.{}.metrics.csv", report.name, a.label)
        };
        let path = out_path(dir, file);
        write_metrics_csv(&path, &a.record.metrics)?;
        written.push(path);
    }
    let summary = out_path(dir, format!("{}.summary.json", report.name));
    write_json(&summary, report)?;
    written.push(summary);

    let series: Vec<Series> = report
        .algorithms
        .iter()
        .map(|a| Series {
            label: &a.label,
            points: a.record.metrics.iter().map(|m| (m.comm_scalars as f64, m.sum_subopt)).collect(),
        })
        .collect();
    let svg = out_path(dir, format!("{}.svg", report.name));
    fs::write(&svg, svg_plot(&report.name, "communicated scalars", "Σ f(x_i) − f*", &series, false, true))?;
    written.push(svg);
    Ok(written)
}

pub fn write_flow(dir: &Path, report: &FlowReport) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let csv = out_path(dir, format!("{}.metrics.csv", report.name));
    write_flow_csv(&csv, &report.flow.metrics)?;
    let summary = out_path(dir, format!("{}.summary.json", report.name));
    write_json(&summary, report)?;
    let mut series = vec![Series {
        label: "Σ f(x_i) − f*",
        points: report.flow.metrics.iter().map(|m| (m.index, m.sum_subopt)).collect(),
    }];
    if report.flow.lyapunov_check.is_some() {
        series.push(Series {
            label: "Lyapunov",
            points: report.flow.metrics.iter().filter_map(|m| m.lyapunov.map(|v| (m.index, v))).collect(),
        });
    }
    let svg = out_path(dir, format!("{}.svg", report.name));
    fs::write(&svg, svg_plot(&report.name, "t", "value", &series, false, true))?;
    Ok(vec![csv, summary, svg])
}

pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let csv = out_path(dir, format!("{}.metrics.csv", report.name));
    write_rows(&csv, &report.rows)?;
    let summary = out_path(dir, format!("{}.summary.json", report.name));
    write_json(&summary, report)?;
    let svg = out_path(dir, format!("{}.svg", report.name));
    let plot = match report.axis {
        SweepAxis::Kappa => svg_plot(
            &report.name,
            "κ",
            "iterations to ε",
            &[Series {
                label: "iterations",
                points: report.rows.iter().filter_map(|r| r.iterations_to_epsilon.map(|i| (r.kappa, i))).collect(),
            }],
            true,
            true,
        ),
        SweepAxis::Epsilon => svg_plot(
            &report.name,
            "ε",
            "iterations to ε",
            &[Series {
                label: "iterations",
                points: report.rows.iter().filter_map(|r| r.iterations_to_epsilon.map(|i| (r.value, i))).collect(),
            }],
            true,
            true,
        ),
        SweepAxis::R => svg_plot(
            &report.name,
            "r",
            "decay exponent",
            &[
                Series {
                    label: "fitted",
                    points: report.rows.iter().filter_map(|r| r.exponent.map(|e| (r.value, e))).collect(),
                },
                Series {
                    label: "−(3 − r)",
                    points: report.rows.iter().filter_map(|r| r.target_exponent.map(|e| (r.value, e))).collect(),
                },
            ],
            false,
            false,
        ),
    };
    fs::write(&svg, plot)?;
    Ok(vec![csv, summary, svg])
}
