//! Static SVG charts with a CSV twin for each one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use drivescope_core::characterization::{ParamRow, SignalSeries};

use crate::io;
use crate::pipeline::RunReport;

pub const PARAM_NAMES: [&str; 5] = ["s0", "v0", "T", "a", "b"];

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#444444"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    /// Plots that were not drawn, with the reason.
    pub notices: Vec<String>,
}

struct Series<'a> {
    name: &'a str,
    points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", W / 2.0, esc(title));
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 8.0,
        esc(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    s
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = frame(title, x_label, y_label);
    for (v, y) in [(y0, py(y0)), (y1, py(y1))] {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3}</text>", PAD - 4.0, y + 4.0, v);
    }
    for (v, x) in [(x0, px(x0)), (x1, px(x1))] {
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{:.1}</text>", H - PAD + 16.0, v);
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        for &(x, y) in &ser.points {
            let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>", px(x), py(y));
        }
        if series.len() > 1 {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
                W - PAD + 4.0,
                PAD + 14.0 * (i as f64 + 1.0),
                esc(ser.name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn bar_chart(title: &str, bars: &[(String, Option<f64>)]) -> String {
    let mut s = frame(title, "parameter", "Pearson r");
    let py = |r: f64| H / 2.0 - r * (H / 2.0 - PAD);
    let _ = writeln!(
        s,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888\"/>",
        H / 2.0,
        W - PAD,
        H / 2.0
    );
    for (v, label) in [(1.0, "1"), (-1.0, "-1"), (0.0, "0")] {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label}</text>", PAD - 4.0, py(v) + 4.0);
    }
    let slot = (W - 2.0 * PAD) / bars.len().max(1) as f64;
    for (i, (name, r)) in bars.iter().enumerate() {
        let cx = PAD + slot * (i as f64 + 0.5);
        if let Some(r) = r {
            let (top, h) = if *r >= 0.0 { (py(*r), py(0.0) - py(*r)) } else { (py(0.0), py(*r) - py(0.0)) };
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
                cx - slot * 0.3,
                slot * 0.6,
                COLORS[0]
            );
            let _ = writeln!(s, "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{r:.3}</text>", top - 4.0);
        } else {
            let _ = writeln!(s, "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">n/a</text>", H / 2.0 - 4.0);
        }
        let _ = writeln!(s, "<text x=\"{cx:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>", H - PAD + 16.0, esc(name));
    }
    s.push_str("</svg>\n");
    s
}

fn seconds(rows: &[ParamRow], t_us: i64) -> f64 {
    (t_us - rows.first().map(|r| r.t_center_us).unwrap_or(0)) as f64 * 1e-6
}

fn emit(dir: &Path, stem: &str, svg: String, csv: String, out: &mut PlotOutput) -> Result<(), String> {
    for (ext, body) in [("svg", svg), ("csv", csv)] {
        let path = dir.join(format!("{stem}.{ext}"));
        io::write(&path, body)?;
        out.files.push(path);
    }
    Ok(())
}

/// One time-series plot per IDM parameter, a physiology overlay and a
/// correlation bar chart, each as `<name>.svg` plus `<name>.csv`.
pub fn emit_plots(report: &RunReport, physiology: Option<&SignalSeries>, dir: &Path) -> Result<PlotOutput, String> {
    let mut out = PlotOutput::default();
    let rows = &report.params;
    if rows.is_empty() {
        out.notices
            .push("no estimation windows: parameter, overlay and correlation plots skipped".into());
        return Ok(out);
    }

    for (i, name) in PARAM_NAMES.iter().enumerate() {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (seconds(rows, r.t_center_us), r.params.to_array()[i])).collect();
        let mut csv = format!("t_center_us,{name}\n");
        for r in rows {
            let _ = writeln!(csv, "{},{}", r.t_center_us, r.params.to_array()[i]);
        }
        let svg = line_chart(&format!("IDM {name} per window"), "window center (s)", name, &[Series { name, points }]);
        emit(dir, &format!("param_{name}"), svg, csv, &mut out)?;
    }

    match physiology {
        None => out.notices.push("no physiology series: overlay skipped".into()),
        Some(phys) => {
            let covered: Vec<&ParamRow> = rows.iter().filter(|r| phys.value_at(r.t_center_us).is_ok()).collect();
            if covered.is_empty() {
                out.notices
                    .push("physiology series does not cover any window center: overlay skipped".into());
            } else {
                // each curve is min-max scaled so they share one axis
                let mut columns: Vec<(&str, Vec<f64>)> = vec![(
                    "physiology",
                    covered.iter().map(|r| phys.value_at(r.t_center_us).expect("covered")).collect(),
                )];
                for (i, name) in PARAM_NAMES.iter().enumerate() {
                    columns.push((name, covered.iter().map(|r| r.params.to_array()[i]).collect()));
                }
                let mut csv = String::from("t_center_us");
                for (name, _) in &columns {
                    let _ = write!(csv, ",{name}");
                }
                csv.push('\n');
                for (k, r) in covered.iter().enumerate() {
                    let _ = write!(csv, "{}", r.t_center_us);
                    for (_, vals) in &columns {
                        let _ = write!(csv, ",{}", vals[k]);
                    }
                    csv.push('\n');
                }
                let series: Vec<Series> = columns
                    .iter()
                    .map(|(name, vals)| {
                        let (lo, hi) = bounds(vals.iter().copied());
                        Series {
                            name,
                            points: covered
                                .iter()
                                .zip(vals)
                                .map(|(r, v)| (seconds(rows, r.t_center_us), (v - lo) / (hi - lo)))
                                .collect(),
                        }
                    })
                    .collect();
                let svg = line_chart("Physiology and IDM parameters (scaled)", "window center (s)", "scaled value", &series);
                emit(dir, "physiology_overlay", svg, csv, &mut out)?;
            }
        }
    }

    match &report.correlation {
        None => out.notices.push("no correlation section in report: bar chart skipped".into()),
        Some(corr) => {
            let bars: Vec<(String, Option<f64>)> = PARAM_NAMES
                .iter()
                .map(|n| (n.to_string(), corr.values.get(*n).and_then(|e| e.r)))
                .collect();
            let mut csv = String::from("param,r\n");
            for (n, r) in &bars {
                let _ = writeln!(csv, "{n},{}", r.map(|v| v.to_string()).unwrap_or_default());
            }
            emit(dir, "correlation", bar_chart("Correlation with physiology", &bars), csv, &mut out)?;
        }
    }
    Ok(out)
}
