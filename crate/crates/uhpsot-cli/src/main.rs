//! Command-line front end: track a single sequence, benchmark a dataset
//! root, render plots from a summary file, or regenerate the synthetic
//! fixture sequences.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use uhpsot_core::config::Config;
use uhpsot_core::eval::{
    self, EvalResult, Sequence, Summary, SummaryEntry,
};
use uhpsot_core::frame::Frame;
use uhpsot_core::geometry::BoundingBox;
use uhpsot_core::synth;
use uhpsot_core::tracker::Tracker;
use uhpsot_core::Scalar;

#[derive(Parser)]
#[command(name = "uhpsot", version, about = "Unsupervised single-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence (OTB layout) and report its metrics.
    Track {
        /// Sequence directory containing img/ and a ground-truth file.
        seq_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Results directory; omit to skip writing files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Treat the input as grayscale.
        #[arg(long)]
        no_color: bool,
    },
    /// Run the benchmark over every sequence under a dataset root.
    Bench {
        /// Dataset root with one OTB-layout directory per sequence.
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Only sequences whose name contains this string.
        #[arg(long)]
        seq: Option<String>,
        /// Worker threads (default: one per CPU).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        no_color: bool,
    },
    /// Render CSV and SVG curves from a summary.json.
    Plot {
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the synthetic fixture sequences.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>, no_color: bool) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    if no_color {
        cfg.force_gray = true;
    }
    Ok(cfg)
}

struct TrackOutput {
    boxes: Vec<BoundingBox<f64>>,
    result: EvalResult,
}

/// Initialize from the first ground-truth box and track the remaining
/// frames; wall-clock FPS covers the tracking loop, not image decoding.
fn run_track(cfg: &Config, seq: &Sequence) -> Result<TrackOutput> {
    let init = *seq.init_box();
    let first = Frame::load(&seq.frame_paths[0], 1, cfg.force_gray)
        .with_context(|| format!("loading {}", seq.frame_paths[0].display()))?;
    let init_s = BoundingBox::<Scalar>::new(
        init.x as Scalar,
        init.y as Scalar,
        init.w as Scalar,
        init.h as Scalar,
    );
    let mut elapsed = std::time::Duration::ZERO;
    let t0 = Instant::now();
    let mut tracker = Tracker::new(&first, &init_s, cfg)?;
    elapsed += t0.elapsed();
    let mut boxes = vec![init];
    for (i, path) in seq.frame_paths.iter().enumerate().skip(1) {
        let frame = Frame::load(path, i + 1, cfg.force_gray)
            .with_context(|| format!("loading {}", path.display()))?;
        let t = Instant::now();
        let bb = tracker.step(&frame)?;
        elapsed += t.elapsed();
        boxes.push(BoundingBox::new(
            bb.x as f64,
            bb.y as f64,
            bb.w as f64,
            bb.h as f64,
        ));
    }
    let mut result = eval::score_sequence(&boxes, seq)?;
    result.fps = seq.len() as f64 / elapsed.as_secs_f64().max(1e-9);
    Ok(TrackOutput { boxes, result })
}

fn entry_from(seq: &Sequence, out: &TrackOutput) -> SummaryEntry {
    SummaryEntry {
        name: seq.name.clone(),
        frames: seq.len(),
        auc: out.result.auc,
        dp20: out.result.dp20,
        fps: out.result.fps,
        success: out.result.success.clone(),
        precision: out.result.precision.clone(),
    }
}

fn write_outputs(out_dir: &Path, entries: &[(Sequence, TrackOutput)]) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut summary_entries = Vec::new();
    for (seq, out) in entries {
        eval::write_boxes(&out_dir.join(format!("{}.txt", seq.name)), &out.boxes)?;
        summary_entries.push(entry_from(seq, out));
    }
    summary_entries.sort_by(|a, b| a.name.cmp(&b.name));
    let summary = eval::build_summary(summary_entries);
    eval::write_summary(&out_dir.join("summary.json"), &summary)?;
    write_plots(&summary, out_dir)?;
    Ok(())
}

fn write_plots(summary: &Summary, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let names: Vec<&str> = summary.sequences.iter().map(|e| e.name.as_str()).collect();
    let success: Vec<&[f64]> = summary.sequences.iter().map(|e| e.success.as_slice()).collect();
    let precision: Vec<&[f64]> = summary
        .sequences
        .iter()
        .map(|e| e.precision.as_slice())
        .collect();
    fs::write(
        out_dir.join("success.csv"),
        eval::curves_csv(&summary.success_thresholds, &names, &success),
    )?;
    fs::write(
        out_dir.join("precision.csv"),
        eval::curves_csv(&summary.precision_thresholds, &names, &precision),
    )?;
    fs::write(
        out_dir.join("success.svg"),
        eval::curves_svg("Success plot", &summary.success_thresholds, &names, &success),
    )?;
    fs::write(
        out_dir.join("precision.svg"),
        eval::curves_svg(
            "Precision plot",
            &summary.precision_thresholds,
            &names,
            &precision,
        ),
    )?;
    Ok(())
}

fn find_sequences(root: &Path, filter: &Option<String>) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("reading dataset root {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && (p.join("groundtruth_rect.txt").is_file() || p.join("groundtruth.txt").is_file())
        })
        .filter(|p| match filter {
            Some(f) => p
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.contains(f.as_str())),
            None => true,
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no sequences found under {}", root.display());
    }
    Ok(dirs)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Track {
            seq_dir,
            config,
            out,
            no_color,
        } => {
            let cfg = load_config(&config, no_color)?;
            let seq = eval::load_sequence(&seq_dir)?;
            let result = run_track(&cfg, &seq)?;
            println!(
                "{}: {} frames, AUC {:.3}, DP@20 {:.3}, {:.1} FPS",
                seq.name,
                seq.len(),
                result.result.auc,
                result.result.dp20,
                result.result.fps
            );
            if let Some(dir) = out {
                write_outputs(&dir, &[(seq, result)])?;
            }
        }
        Command::Bench {
            dataset,
            config,
            out,
            seq,
            jobs,
            no_color,
        } => {
            let cfg = load_config(&config, no_color)?;
            let dirs = find_sequences(&dataset, &seq)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()?;
            // each worker owns its tracker; results are reduced afterwards
            let results: Vec<Result<(Sequence, TrackOutput)>> = pool.install(|| {
                dirs.par_iter()
                    .map(|dir| {
                        let seq = eval::load_sequence(dir)?;
                        let out = run_track(&cfg, &seq)?;
                        log::info!(
                            "{}: AUC {:.3}, DP@20 {:.3}, {:.1} FPS",
                            seq.name,
                            out.result.auc,
                            out.result.dp20,
                            out.result.fps
                        );
                        Ok((seq, out))
                    })
                    .collect()
            });
            let entries: Vec<(Sequence, TrackOutput)> =
                results.into_iter().collect::<Result<_>>()?;
            write_outputs(&out, &entries)?;
            let n = entries.len() as f64;
            let auc = entries.iter().map(|(_, o)| o.result.auc).sum::<f64>() / n;
            let dp = entries.iter().map(|(_, o)| o.result.dp20).sum::<f64>() / n;
            println!(
                "{} sequences: mean AUC {:.3}, mean DP@20 {:.3}",
                entries.len(),
                auc,
                dp
            );
        }
        Command::Plot { summary, out } => {
            let summary = eval::read_summary(&summary)?;
            write_plots(&summary, &out)?;
            println!("wrote curves to {}", out.display());
        }
        Command::Fixtures { out } => {
            for fixture in synth::standard_fixtures() {
                fixture.write(&out)?;
                println!("wrote {}", out.join(fixture.name).display());
            }
        }
    }
    Ok(())
}
