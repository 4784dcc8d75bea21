//! CSV and SVG renderings of a GRPO metrics trace.
//!
//! The chart is a plain 800x400 polyline plot with one `<path>` per series:
//! easy, medium and hard fractions for every step, plus eval accuracy on the
//! steps that carry one. A second trace can be overlaid with dashed strokes.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::grpo::StepMetrics;

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;

const SERIES: [(&str, &str); 4] = [
    ("easy", "#2a9d8f"),
    ("medium", "#e9c46a"),
    ("hard", "#e76f51"),
    ("eval_acc", "#264653"),
];

/// Reads a metrics JSONL stream; blank lines are skipped.
pub fn read_metrics<R: BufRead>(r: R) -> Result<Vec<StepMetrics>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(m);
    }
    Ok(out)
}

/// `step,easy,medium,hard,eval_acc`, with an empty accuracy cell on steps
/// without an evaluation.
pub fn to_csv(metrics: &[StepMetrics]) -> String {
    let mut s = String::from("step,easy,medium,hard,eval_acc\n");
    for m in metrics {
        let acc = m.eval_acc_at_05.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m.step, m.easy_frac, m.medium_frac, m.hard_frac, acc
        );
    }
    s
}

fn series(metrics: &[StepMetrics], idx: usize) -> Vec<(f64, f64)> {
    metrics
        .iter()
        .filter_map(|m| {
            let y = match idx {
                0 => Some(m.easy_frac),
                1 => Some(m.medium_frac),
                2 => Some(m.hard_frac),
                _ => m.eval_acc_at_05,
            };
            y.map(|y| (m.step as f64, y))
        })
        .collect()
}

fn path_data(points: &[(f64, f64)], max_step: f64) -> String {
    let plot_w = SVG_WIDTH - 2.0 * MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * MARGIN;
    let mut d = String::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let px = MARGIN
            + if max_step > 0.0 {
                x / max_step * plot_w
            } else {
                0.0
            };
        let py = SVG_HEIGHT - MARGIN - y.clamp(0.0, 1.0) * plot_h;
        let _ = write!(d, "{}{px:.2},{py:.2}", if i == 0 { "M" } else { " L" });
    }
    d
}

/// Line chart of every series present in `runs`. Series with no points are
/// omitted, so a trace without evaluations yields three paths.
pub fn to_svg(runs: &[(&str, &[StepMetrics])]) -> String {
    let max_step = runs
        .iter()
        .flat_map(|(_, m)| m.iter().map(|s| s.step))
        .max()
        .unwrap_or(0) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
        w = SVG_WIDTH,
        h = SVG_HEIGHT
    );
    let (x0, y0, x1, y1) = (MARGIN, SVG_HEIGHT - MARGIN, SVG_WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        "<g stroke=\"#999\" stroke-width=\"1\"><line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\"/><line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\"/></g>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{x0}\" y=\"{}\" font-size=\"12\">step 0..{max_step}</text>",
        SVG_HEIGHT - 10.0
    );
    for (run_idx, (label, metrics)) in runs.iter().enumerate() {
        let dash = if run_idx == 0 {
            ""
        } else {
            " stroke-dasharray=\"6 4\""
        };
        for (idx, (name, color)) in SERIES.iter().enumerate() {
            let pts = series(metrics, idx);
            if pts.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                "<path data-run=\"{}\" data-series=\"{name}\" d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
                escape(label),
                path_data(&pts, max_step)
            );
        }
    }
    for (idx, (name, color)) in SERIES.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"{color}\">{name}</text>",
            MARGIN + idx as f64 * 90.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
