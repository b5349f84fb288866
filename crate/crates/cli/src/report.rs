//! Aggregates finished runs into a per-run CSV and a static SVG figure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dcn_core::train::{parse_metrics_csv, RunMetrics};
use dcn_core::TrainConfig;
use serde::{Deserialize, Serialize};

pub const REPORT_HEADER: &str =
    "run,architecture,dataset,trial,freeze_graph,epochs,final_val_acc,best_val_acc,best_epoch";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub data: u64,
    pub dag: u64,
}

/// `summary.json` of a single training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub architecture: String,
    pub dataset: String,
    pub trial: usize,
    pub freeze_graph: bool,
    pub epochs: usize,
    pub final_val_acc: f64,
    pub final_val_loss: f64,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub trainable_params: usize,
    pub total_params: usize,
    pub seeds: Seeds,
    pub config: TrainConfig,
}

pub struct Run {
    pub name: String,
    pub summary: RunSummary,
    pub metrics: RunMetrics,
}

/// Every directory at or below `roots` holding both `metrics.csv` and
/// `summary.json`, sorted by path.
pub fn discover(roots: &[PathBuf]) -> Result<Vec<Run>> {
    let mut dirs = Vec::new();
    for root in roots {
        if !root.is_dir() {
            bail!("{} is not a directory", root.display());
        }
        collect(root, &mut dirs)?;
    }
    dirs.sort();
    dirs.dedup();
    if dirs.is_empty() {
        bail!("no runs found");
    }
    dirs.into_iter()
        .map(|dir| {
            let text = std::fs::read_to_string(dir.join("summary.json"))
                .with_context(|| format!("{}", dir.join("summary.json").display()))?;
            let summary: RunSummary = serde_json::from_str(&text)
                .with_context(|| format!("bad summary in {}", dir.display()))?;
            let csv = std::fs::read_to_string(dir.join("metrics.csv"))?;
            let metrics = parse_metrics_csv(&csv)
                .map_err(|e| dcn_core::Error::Schema(e))
                .with_context(|| format!("bad metrics in {}", dir.display()))?;
            Ok(Run {
                name: dir.display().to_string(),
                summary,
                metrics,
            })
        })
        .collect()
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("metrics.csv").is_file() && dir.join("summary.json").is_file() {
        out.push(dir.to_path_buf());
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for child in children {
        collect(&child, out)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_csv(runs: &[Run]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in runs {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{}",
            csv_field(&r.name),
            csv_field(&s.architecture),
            csv_field(&s.dataset),
            s.trial,
            s.freeze_graph,
            s.epochs,
            s.final_val_acc,
            s.best_val_acc,
            s.best_epoch
        );
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 360.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn accuracy(values: impl Iterator<Item = f64>) -> Self {
        let min = values.fold(1.0f64, f64::min);
        let lo = ((min * 10.0).floor() / 10.0).clamp(0.0, 0.9);
        Self { lo, hi: 1.0 }
    }

    fn y(&self, v: f64) -> f64 {
        BOTTOM - (v - self.lo) / (self.hi - self.lo) * (BOTTOM - TOP)
    }
}

fn y_ticks(svg: &mut String, axis: &Axis, x0: f64, x1: f64) {
    let steps = ((axis.hi - axis.lo) / 0.1).round() as usize;
    for i in 0..=steps {
        let v = axis.lo + i as f64 * 0.1;
        let y = axis.y(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{:.1}</text>"##,
            x0 - 4.0,
            y + 3.0,
            v * 100.0
        );
    }
}

/// Validation curves on the left, final accuracies per dataset on the
/// right.
pub fn report_svg(runs: &[Run]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let axis = Axis::accuracy(
        runs.iter()
            .flat_map(|r| r.metrics.epochs.iter().map(|e| e.val_acc)),
    );
    let (x0, x1) = (60.0, 560.0);
    let max_epoch = runs
        .iter()
        .map(|r| r.metrics.epochs.len())
        .max()
        .unwrap_or(1)
        .max(2);
    let x = |epoch: usize| x0 + (epoch - 1) as f64 / (max_epoch - 1) as f64 * (x1 - x0);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" font-size="14" text-anchor="middle">Validation accuracy (%) per epoch</text>"#,
        (x0 + x1) / 2.0
    );
    y_ticks(&mut svg, &axis, x0, x1);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">epoch (1 to {max_epoch})</text>"#,
        (x0 + x1) / 2.0,
        BOTTOM + 22.0
    );
    svg.push_str("<g id=\"curves\" fill=\"none\" stroke-width=\"1.5\">\n");
    for (i, r) in runs.iter().enumerate() {
        let points: Vec<String> = r
            .metrics
            .epochs
            .iter()
            .map(|e| format!("{:.2},{:.2}", x(e.epoch), axis.y(e.val_acc)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="curve" data-run="{}" stroke="{}" points="{}"><title>{}</title></polyline>"#,
            xml_escape(&r.name),
            PALETTE[i % PALETTE.len()],
            points.join(" "),
            xml_escape(&r.name)
        );
    }
    svg.push_str("</g>\n");

    let mut datasets: Vec<&str> = runs.iter().map(|r| r.summary.dataset.as_str()).collect();
    datasets.sort();
    datasets.dedup();
    let (bx0, bx1) = (640.0, 920.0);
    let slot = (bx1 - bx0) / datasets.len() as f64;
    let final_axis = Axis::accuracy(runs.iter().map(|r| r.summary.final_val_acc));
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" font-size="14" text-anchor="middle">Final accuracy (%) per dataset</text>"#,
        (bx0 + bx1) / 2.0
    );
    y_ticks(&mut svg, &final_axis, bx0, bx1);
    svg.push_str("<g id=\"distributions\">\n");
    for (d, name) in datasets.iter().enumerate() {
        let cx = bx0 + slot * (d as f64 + 0.5);
        let mut accs: Vec<f64> = runs
            .iter()
            .filter(|r| r.summary.dataset == *name)
            .map(|r| r.summary.final_val_acc)
            .collect();
        accs.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (accs.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            accs[lo] + (accs[hi] - accs[lo]) * (pos - lo as f64)
        };
        let (y_min, y_max) = (final_axis.y(accs[0]), final_axis.y(accs[accs.len() - 1]));
        let (y_q1, y_med, y_q3) = (final_axis.y(q(0.25)), final_axis.y(q(0.5)), final_axis.y(q(0.75)));
        let half = (slot * 0.25).min(30.0);
        let _ = writeln!(
            svg,
            r##"<g class="box" data-dataset="{}"><line x1="{cx:.1}" y1="{y_min:.1}" x2="{cx:.1}" y2="{y_max:.1}" stroke="#555"/><rect x="{:.1}" y="{y_q3:.1}" width="{:.1}" height="{:.1}" fill="#eef" stroke="#555"/><line x1="{:.1}" y1="{y_med:.1}" x2="{:.1}" y2="{y_med:.1}" stroke="#000" stroke-width="2"/>"##,
            xml_escape(name),
            cx - half,
            2.0 * half,
            (y_q1 - y_q3).max(0.5),
            cx - half,
            cx + half
        );
        for (k, a) in accs.iter().enumerate() {
            let jitter = (k as f64 - (accs.len() - 1) as f64 / 2.0) * 3.0;
            let _ = writeln!(
                svg,
                r##"<circle class="trial" cx="{:.1}" cy="{:.1}" r="3" fill="#d62728" fill-opacity="0.7"/>"##,
                cx + jitter,
                final_axis.y(*a)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="11" text-anchor="middle">{} (n={})</text></g>"#,
            BOTTOM + 22.0,
            xml_escape(name),
            accs.len()
        );
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}
