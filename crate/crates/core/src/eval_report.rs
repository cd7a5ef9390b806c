//! Forecast metrics, k-fold comparison of first- and final-generation
//! weights, and CSV/JSON/SVG report emission.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{evosts, EvoConfig, EvoError};
use crate::lstm::{predict_batch, LstmError, LstmWeights};
use crate::signal_io::{kfold_split, Dataset, SignalError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "partition,r2_random,r2_optimized,rmse_random,rmse_optimized";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no values to score")]
    EmptyInput,
    #[error("actual values have zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Evo(#[from] EvoError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error("report i/o: {0}")]
    Io(#[from] io::Error),
    #[error("report manifest: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ReportError>;

fn flat_pairs<'a, V: AsRef<[f64]>>(pred: &'a [V], actual: &'a [V]) -> Result<Vec<(f64, f64)>> {
    if pred.len() != actual.len() {
        return Err(ReportError::DimensionMismatch(format!(
            "{} predictions for {} actual vectors",
            pred.len(),
            actual.len()
        )));
    }
    let mut out = Vec::new();
    for (i, (p, a)) in pred.iter().zip(actual).enumerate() {
        let (p, a) = (p.as_ref(), a.as_ref());
        if p.len() != a.len() {
            return Err(ReportError::DimensionMismatch(format!(
                "pair {i}: prediction length {} vs actual length {}",
                p.len(),
                a.len()
            )));
        }
        out.extend(p.iter().copied().zip(a.iter().copied()));
    }
    if out.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(out)
}

/// Root mean squared error over every element of every pair.
pub fn rmse<V: AsRef<[f64]>>(pred: &[V], actual: &[V]) -> Result<f64> {
    let pairs = flat_pairs(pred, actual)?;
    let sse: f64 = pairs.iter().map(|(p, a)| (p - a).powi(2)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// `1 - SS_res / SS_tot` over the flattened values, centered on the mean
/// of all actual values.
pub fn r2<V: AsRef<[f64]>>(pred: &[V], actual: &[V]) -> Result<f64> {
    let pairs = flat_pairs(pred, actual)?;
    let mean = pairs.iter().map(|(_, a)| a).sum::<f64>() / pairs.len() as f64;
    let ss_tot: f64 = pairs.iter().map(|(_, a)| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(ReportError::ZeroVariance);
    }
    let ss_res: f64 = pairs.iter().map(|(p, a)| (a - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldReportRow {
    pub partition_id: usize,
    pub r2_random: f64,
    pub r2_optimized: f64,
    pub rmse_random: f64,
    pub rmse_optimized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricMeans {
    pub r2_random: f64,
    pub r2_optimized: f64,
    pub rmse_random: f64,
    pub rmse_optimized: f64,
}

impl MetricMeans {
    pub fn of(rows: &[FoldReportRow]) -> Self {
        let n = rows.len() as f64;
        let mean = |f: fn(&FoldReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        MetricMeans {
            r2_random: mean(|r| r.r2_random),
            r2_optimized: mean(|r| r.r2_optimized),
            rmse_random: mean(|r| r.rmse_random),
            rmse_optimized: mean(|r| r.rmse_optimized),
        }
    }
}

/// Per-fold provenance kept in the JSON manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldRun {
    pub partition_id: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub first_generation_score: f64,
    pub final_generation_score: f64,
    pub first_generation_best_checksum: String,
    pub final_generation_best_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvReport {
    pub schema_version: u32,
    pub k_folds: usize,
    pub cv_seed: u64,
    pub normalize: bool,
    pub config: EvoConfig,
    pub rows: Vec<FoldReportRow>,
    pub means: MetricMeans,
    pub folds: Vec<FoldRun>,
}

struct FoldOutcome {
    row: FoldReportRow,
    run: FoldRun,
}

fn evaluate_weights(
    weights: &LstmWeights,
    test: &Dataset,
    actual: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let predictions: Vec<Vec<f64>> = predict_batch(weights, &test.features())?
        .into_iter()
        .map(|p| test.normalization.invert_slice(&p))
        .collect();
    Ok((r2(&predictions, actual)?, rmse(&predictions, actual)?))
}

/// k-fold comparison of first- and final-generation best weights.
///
/// For every fold the remaining folds form the training set (kept in time
/// order). With `normalize`, z-score stats are fit on the training pairs
/// only and applied to both sides. Metrics are computed on values mapped
/// back through the dataset's normalization to source units.
pub fn cross_validate(
    dataset: &Dataset,
    evo_cfg: &EvoConfig,
    k_folds: usize,
    seed: u64,
    normalize: bool,
) -> Result<CvReport> {
    evo_cfg.validate()?;
    let assignment = kfold_split(dataset.len(), k_folds, seed)?;
    let outcomes: Vec<FoldOutcome> = (0..k_folds)
        .into_par_iter()
        .map(|fold| {
            let (train_idx, test_idx) = assignment.split(fold);
            if test_idx.iter().any(|i| train_idx.binary_search(i).is_ok()) {
                return Err(ReportError::DimensionMismatch(format!(
                    "fold {fold} leaks test pairs into training"
                )));
            }
            let mut train = dataset.subset(&train_idx);
            let mut test = dataset.subset(&test_idx);
            if normalize {
                let stats = train.fit_stats()?;
                train = train.normalized(&stats);
                test = test.normalized(&stats);
            }
            let actual: Vec<Vec<f64>> = dataset
                .subset(&test_idx)
                .pairs
                .iter()
                .map(|p| dataset.normalization.invert_slice(&p.target))
                .collect();

            let run = evosts(&train, evo_cfg)?;
            let (r2_random, rmse_random) =
                evaluate_weights(&run.first_generation_best, &test, &actual)?;
            let (r2_optimized, rmse_optimized) =
                evaluate_weights(&run.final_generation_best, &test, &actual)?;
            let partition_id = fold + 1;
            Ok(FoldOutcome {
                row: FoldReportRow {
                    partition_id,
                    r2_random,
                    r2_optimized,
                    rmse_random,
                    rmse_optimized,
                },
                run: FoldRun {
                    partition_id,
                    train_pairs: train_idx.len(),
                    test_pairs: test_idx.len(),
                    first_generation_score: run.generations[0].best().score,
                    final_generation_score: run.generations.last().expect("l >= 1").best().score,
                    first_generation_best_checksum: run.first_generation_best.checksum(),
                    final_generation_best_checksum: run.final_generation_best.checksum(),
                },
            })
        })
        .collect::<Result<_>>()?;

    let (rows, folds): (Vec<_>, Vec<_>) = outcomes.into_iter().map(|o| (o.row, o.run)).unzip();
    Ok(CvReport {
        schema_version: REPORT_SCHEMA_VERSION,
        k_folds,
        cv_seed: seed,
        normalize,
        config: evo_cfg.clone(),
        means: MetricMeans::of(&rows),
        rows,
        folds,
    })
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn report_csv(report: &CvReport) -> String {
    let f = |v: f64| format_significant(v, 6);
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.partition_id,
            f(r.r2_random),
            f(r.r2_optimized),
            f(r.rmse_random),
            f(r.rmse_optimized)
        );
    }
    let m = &report.means;
    let _ = writeln!(
        out,
        "mean,{},{},{},{}",
        f(m.r2_random),
        f(m.r2_optimized),
        f(m.rmse_random),
        f(m.rmse_optimized)
    );
    out
}

/// Sibling JSON manifest path: `report.csv` -> `report.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Write the CSV report and its JSON manifest. Empty reports are refused.
pub fn write_report(report: &CvReport, path: &Path) -> Result<()> {
    if report.rows.is_empty() {
        return Err(ReportError::Io(io::Error::new(
            io::ErrorKind::InvalidInput,
            "refusing to write an empty report",
        )));
    }
    fs::write(path, report_csv(report))?;
    fs::write(
        manifest_path(path),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    Ok(())
}

/// One labeled line in a plot; point `i` sits at `x_offset + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x_offset: usize,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, x_offset: usize, values: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            x_offset,
            values,
        }
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG line plot with axis ticks and a legend.
pub fn render_svg(series: &[Series], title: &str) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.values.is_empty()) {
        return Err(ReportError::EmptyInput);
    }
    if series
        .iter()
        .flat_map(|s| &s.values)
        .any(|v| !v.is_finite())
    {
        return Err(ReportError::DimensionMismatch(
            "series contains non-finite values".into(),
        ));
    }
    let x_max = series
        .iter()
        .map(|s| s.x_offset + s.values.len() - 1)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let x_min = series.iter().map(|s| s.x_offset).min().unwrap_or(0) as f64;
    let x_min = if x_min >= x_max { x_max - 1.0 } else { x_min };
    let (mut y_min, mut y_max) = series
        .iter()
        .flat_map(|s| &s.values)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if y_max - y_min < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    } else {
        let pad = 0.05 * (y_max - y_min);
        y_min -= pad;
        y_max += pad;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        xml_escape(title)
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{l:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/>"#,
        l = MARGIN_LEFT,
        r = MARGIN_LEFT + plot_w,
        b = MARGIN_TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}" stroke="black"/>"#,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h
    );
    for k in 0..=TICKS {
        let frac = k as f64 / TICKS as f64;
        let xv = x_min + frac * (x_max - x_min);
        let x = sx(xv);
        let b = MARGIN_TOP + plot_h;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            b + 5.0,
            b + 18.0,
            format_significant(xv, 4)
        );
        let yv = y_min + frac * (y_max - y_min);
        let y = sy(yv);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            format_significant(yv, 4),
            l = MARGIN_LEFT
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| format!("{:.2},{:.2}", sx((s.x_offset + j) as f64), sy(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            ly - 10.0,
            lx + 18.0,
            ly,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Plot an actual signal segment with any number of labeled predictions.
pub fn plot_signal(
    actual: &Series,
    predictions: &[Series],
    title: &str,
    path: &Path,
) -> Result<()> {
    let mut all = Vec::with_capacity(predictions.len() + 1);
    all.push(actual.clone());
    all.extend_from_slice(predictions);
    fs::write(path, render_svg(&all, title)?)?;
    Ok(())
}
