//! One-pass-evaluation harness: OTB-layout sequence loading, success and
//! precision curves, and result persistence (box files, JSON summary, CSV
//! and SVG curves).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::num::Real;

/// Success thresholds 0, 0.05, ..., 1 (21 points).
pub const SUCCESS_STEPS: usize = 21;
/// Precision thresholds 0, 1, ..., 50 pixels (51 points).
pub const PRECISION_STEPS: usize = 51;
/// Precision is reported at the 20-pixel threshold.
pub const DP_PIXELS: usize = 20;

#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frame_paths: Vec<PathBuf>,
    pub ground_truth: Vec<BoundingBox<f64>>,
    /// Per-frame visibility; frames flagged occluded or out of view still
    /// get predictions but are excluded from metric aggregation.
    pub visible: Vec<bool>,
}

impl Sequence {
    pub fn init_box(&self) -> &BoundingBox<f64> {
        &self.ground_truth[0]
    }

    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub ious: Vec<f64>,
    pub center_errors: Vec<f64>,
    pub success: Vec<f64>,
    pub precision: Vec<f64>,
    pub auc: f64,
    pub dp20: f64,
    pub fps: f64,
}

/// One sequence entry of `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub name: String,
    pub frames: usize,
    pub auc: f64,
    pub dp20: f64,
    pub fps: f64,
    pub success: Vec<f64>,
    pub precision: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub success_thresholds: Vec<f64>,
    pub precision_thresholds: Vec<f64>,
    pub mean_auc: f64,
    pub mean_dp20: f64,
    pub sequences: Vec<SummaryEntry>,
}

fn parse_box_line(path: &Path, lineno: usize, line: &str) -> Result<BoundingBox<f64>> {
    let fields: Vec<&str> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: lineno,
        msg,
    };
    if fields.len() < 4 {
        return Err(err(format!("expected 4 numbers, got {}", fields.len())));
    }
    let mut v = [0.0f64; 4];
    for (i, f) in fields.iter().take(4).enumerate() {
        v[i] = f
            .parse()
            .map_err(|_| err(format!("bad number {f:?}")))?;
    }
    Ok(BoundingBox::new(v[0], v[1], v[2], v[3]))
}

fn parse_flag_file(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
        {
            let v: i64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad flag {tok:?}"),
            })?;
            flags.push(v != 0);
        }
    }
    Ok(flags)
}

/// Numeric sort key for frame file names like `0001.jpg` or `img123.png`.
fn numeric_key(path: &Path) -> (u64, String) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    (digits.parse().unwrap_or(u64::MAX), stem.to_string())
}

/// Load an OTB-layout sequence: an `img/` folder (or loose images) plus a
/// `groundtruth_rect.txt` / `groundtruth.txt` box file, with optional
/// LaSOT-style `full_occlusion.txt` / `out_of_view.txt` visibility masks.
pub fn load_sequence(root: &Path) -> Result<Sequence> {
    let name = root
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("sequence")
        .to_string();
    let img_dir = if root.join("img").is_dir() {
        root.join("img")
    } else {
        root.to_path_buf()
    };
    let mut frame_paths: Vec<PathBuf> = fs::read_dir(&img_dir)
        .map_err(|e| Error::io(&img_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase),
                Some(ref e) if ["jpg", "jpeg", "png", "bmp"].contains(&e.as_str())
            )
        })
        .collect();
    frame_paths.sort_by_key(|p| numeric_key(p));
    if frame_paths.is_empty() {
        return Err(Error::SequenceLayout(format!(
            "no images under {}",
            img_dir.display()
        )));
    }

    let gt_path = ["groundtruth_rect.txt", "groundtruth.txt"]
        .iter()
        .map(|n| root.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::SequenceLayout(format!("no ground-truth file under {}", root.display()))
        })?;
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let mut ground_truth = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        ground_truth.push(parse_box_line(&gt_path, i + 1, line)?);
    }
    if ground_truth.is_empty() {
        return Err(Error::SequenceLayout(format!("{} is empty", gt_path.display())));
    }
    if !ground_truth[0].is_valid() {
        return Err(Error::DegenerateBox);
    }
    if ground_truth.len() != frame_paths.len() {
        log::warn!(
            "{name}: {} frames but {} annotations, truncating to the shorter",
            frame_paths.len(),
            ground_truth.len()
        );
        let n = ground_truth.len().min(frame_paths.len());
        ground_truth.truncate(n);
        frame_paths.truncate(n);
    }

    let mut visible = vec![true; frame_paths.len()];
    for mask in ["full_occlusion.txt", "out_of_view.txt"] {
        let p = root.join(mask);
        if p.is_file() {
            for (i, hidden) in parse_flag_file(&p)?.into_iter().enumerate() {
                if i < visible.len() && hidden {
                    visible[i] = false;
                }
            }
        }
    }
    Ok(Sequence {
        name,
        frame_paths,
        ground_truth,
        visible,
    })
}

pub fn success_thresholds() -> Vec<f64> {
    (0..SUCCESS_STEPS).map(|i| i as f64 * 0.05).collect()
}

pub fn precision_thresholds() -> Vec<f64> {
    (0..PRECISION_STEPS).map(|i| i as f64).collect()
}

/// Success/precision curves from per-frame overlaps and center errors.
/// Success uses strict `IoU > τ`; precision uses `error ≤ p`.
pub fn summarize<T: Real>(ious: &[T], errors: &[T]) -> Result<EvalResult> {
    if ious.is_empty() || ious.len() != errors.len() {
        return Err(Error::EmptyInput);
    }
    let n = ious.len() as f64;
    let success: Vec<f64> = success_thresholds()
        .iter()
        .map(|t| ious.iter().filter(|v| v.to_f64().unwrap() > *t).count() as f64 / n)
        .collect();
    let precision: Vec<f64> = precision_thresholds()
        .iter()
        .map(|p| errors.iter().filter(|v| v.to_f64().unwrap() <= *p).count() as f64 / n)
        .collect();
    let auc = success.iter().sum::<f64>() / success.len() as f64;
    let dp20 = precision[DP_PIXELS];
    Ok(EvalResult {
        ious: ious.iter().map(|v| v.to_f64().unwrap()).collect(),
        center_errors: errors.iter().map(|v| v.to_f64().unwrap()).collect(),
        success,
        precision,
        auc,
        dp20,
        fps: 0.0,
    })
}

/// Per-frame metrics of predictions against ground truth, skipping frames
/// flagged invisible.
pub fn score_sequence(
    predictions: &[BoundingBox<f64>],
    seq: &Sequence,
) -> Result<EvalResult> {
    let mut ious = Vec::new();
    let mut errors = Vec::new();
    for (i, pred) in predictions.iter().enumerate() {
        if i >= seq.ground_truth.len() || !seq.visible[i] {
            continue;
        }
        let gt = &seq.ground_truth[i];
        if !gt.is_valid() {
            continue;
        }
        ious.push(pred.iou(gt));
        errors.push(pred.center_error(gt));
    }
    summarize(&ious, &errors)
}

/// One "x,y,w,h" line per frame.
pub fn write_boxes(path: &Path, boxes: &[BoundingBox<f64>]) -> Result<()> {
    let mut out = String::new();
    for b in boxes {
        writeln!(out, "{:.2},{:.2},{:.2},{:.2}", b.x, b.y, b.w, b.h).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn build_summary(entries: Vec<SummaryEntry>) -> Summary {
    let n = entries.len().max(1) as f64;
    Summary {
        success_thresholds: success_thresholds(),
        precision_thresholds: precision_thresholds(),
        mean_auc: entries.iter().map(|e| e.auc).sum::<f64>() / n,
        mean_dp20: entries.iter().map(|e| e.dp20).sum::<f64>() / n,
        sequences: entries,
    }
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad summary file: {e}")))
}

/// `threshold,seq1,seq2,...` rows, one per threshold point.
pub fn curves_csv(
    thresholds: &[f64],
    names: &[&str],
    curves: &[&[f64]],
) -> String {
    let mut out = String::from("threshold");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, t) in thresholds.iter().enumerate() {
        write!(out, "{t}").unwrap();
        for c in curves {
            write!(out, ",{:.6}", c[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Minimal SVG line plot: one polyline per curve over [0, x_max] × [0, 1].
pub fn curves_svg(title: &str, thresholds: &[f64], names: &[&str], curves: &[&[f64]]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 50.0;
    let x_max = thresholds.last().copied().unwrap_or(1.0).max(1e-9);
    let px = |t: f64| M + (W - 2.0 * M) * t / x_max;
    let py = |v: f64| H - M - (H - 2.0 * M) * v.clamp(0.0, 1.0);
    let palette = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n\
         <line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - M,
        W - M,
        H - M,
        H - M,
    );
    for (ci, curve) in curves.iter().enumerate() {
        let pts: Vec<String> = thresholds
            .iter()
            .zip(curve.iter())
            .map(|(t, v)| format!("{:.1},{:.1}", px(*t), py(*v)))
            .collect();
        let color = palette[ci % palette.len()];
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        )
        .unwrap();
        if let Some(name) = names.get(ci) {
            writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>",
                W - M - 120.0,
                M + 16.0 * ci as f64 + 12.0,
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    svg
}
