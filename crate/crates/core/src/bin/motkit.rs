//! Command-line driver: dataset generation, embedder training, gradient
//! verification, tracking, evaluation, and ablation grids.
//!
//! Every command is deterministic for a fixed config + seed, and every run
//! that produces outputs echoes its fully resolved configuration next to them.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use serde::Serialize;

use motkit::config::{
    resolve_with_overrides, sequence_seed, GridSpec, RunConfig, SequenceGroup,
};
use motkit::embedder::{embed, embed_backward, CropFeature, EmbedderConfig, EmbedderParams};
use motkit::error::{Error, Result};
use motkit::loss::{subco_loss, subco_loss_forward, subco_loss_gradient, LossConfig};
use motkit::metrics::{evaluate_all, pool_sequences, EvaluationReport};
use motkit::mot_io::{frames_to_rows, parse_mot_file, write_mot_file, ResultRow};
use motkit::pixmap::RgbImage;
use motkit::rng::Prng;
use motkit::synth::{generate_synthetic, load_dataset, write_dataset};
use motkit::tracker::track_sequence;
use motkit::train::{train, window_sequences};
use motkit::types::{filter_by_confidence, BBox, Detection, FrameDetections, SequenceSample};

/// Seed-stream labels, disjoint from the per-sequence groups in the config
/// module, so independent pipeline stages never share randomness.
const STREAM_INIT: u64 = 300;
const STREAM_SHUFFLE: u64 = 301;
const STREAM_GRAD_CHECK: u64 = 302;

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "motkit",
    about = "Self-supervised multi-object tracking toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic training and evaluation datasets.
    Generate {
        /// Config file (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (train/ and eval/ subtrees are created).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the appearance embedder on a generated dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset root (the generate output directory or its train/ subtree).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoint.json and training_log.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against central finite differences on
    /// randomized reduced-size instances (3 frames, up to 2 objects,
    /// 3-dim embeddings, 12-value crops).
    GradCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of instances that must pass.
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// Run the tracker over one dataset directory and write a result file.
    Track {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trained embedder checkpoint (JSON).
        #[arg(long)]
        checkpoint: PathBuf,
        /// One dataset directory (contains manifest.json).
        #[arg(long)]
        data: PathBuf,
        /// Result file path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a result file against ground truth.
    Eval {
        /// Ground-truth file.
        gt: PathBuf,
        /// Tracker result file.
        results: PathBuf,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline once per grid cell and tabulate metrics.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Grid file: [[axes]] entries with `path` and `values`.
        #[arg(long)]
        grid: PathBuf,
        /// Output directory (one cell_NNN/ subtree per grid cell).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, seed, out } => cmd_generate(config.as_deref(), seed, &out),
        Command::Train {
            config,
            seed,
            data,
            out,
        } => cmd_train(config.as_deref(), seed, &data, &out),
        Command::GradCheck {
            config,
            seed,
            count,
        } => cmd_grad_check(config.as_deref(), seed, count),
        Command::Track {
            config,
            checkpoint,
            data,
            out,
        } => cmd_track(config.as_deref(), &checkpoint, &data, &out),
        Command::Eval { gt, results, out } => cmd_eval(&gt, &results, out.as_deref()),
        Command::Ablate {
            config,
            seed,
            grid,
            out,
        } => cmd_ablate(config.as_deref(), seed, &grid, &out),
    }
}

fn load_run_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Invalid(format!("serialization failed: {e}")))
}

// ---------------------------------------------------------------------------
// generate

fn generate_datasets(cfg: &RunConfig, out: &Path) -> Result<()> {
    let groups = [
        (SequenceGroup::Train, "train", cfg.num_sequences, &cfg.synth),
        (
            SequenceGroup::Eval,
            "eval",
            cfg.eval_num_sequences,
            &cfg.eval_synth,
        ),
    ];
    for (group, label, count, synth_cfg) in groups {
        for i in 0..count {
            let mut scfg = synth_cfg.clone();
            scfg.seed = sequence_seed(cfg.seed, group, i);
            let (sample, gt) = generate_synthetic(&scfg)?;
            write_dataset(&out.join(label).join(format!("seq_{i:03}")), &sample, &gt)?;
        }
    }
    Ok(())
}

fn cmd_generate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_run_config(config, seed)?;
    create_dir(out)?;
    cfg.save(&out.join("config.toml"))?;
    generate_datasets(&cfg, out)?;
    println!(
        "wrote {} train + {} eval sequences under {}",
        cfg.num_sequences,
        cfg.eval_num_sequences,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

/// Dataset directories below `data`, preferring a `group` subtree when
/// present; `data` may also point directly at a single dataset.
fn dataset_dirs(data: &Path, group: &str) -> Result<Vec<PathBuf>> {
    let base = if data.join(group).is_dir() {
        data.join(group)
    } else {
        data.to_path_buf()
    };
    if base.join("manifest.json").is_file() {
        return Ok(vec![base]);
    }
    let entries = std::fs::read_dir(&base).map_err(|e| Error::io(&base, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Invalid(format!(
            "no dataset directories (containing manifest.json) under {}",
            base.display()
        )));
    }
    Ok(dirs)
}

/// Loads training sequences, trains the embedder, and writes the checkpoint,
/// per-epoch log, and resolved config into `out`.
fn train_pipeline(cfg: &RunConfig, data: &Path, out: &Path, quiet: bool) -> Result<EmbedderParams> {
    let dirs = dataset_dirs(data, "train")?;
    let mut samples = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let (sample, _gt) = load_dataset(dir)?;
        let frames = filter_by_confidence(&sample.frames, cfg.confidence_threshold);
        samples.push(SequenceSample::new(frames, sample.images)?);
    }
    let windows = window_sequences(&samples, cfg.loss.sequence_length)?;
    if windows.is_empty() {
        return Err(Error::Invalid(format!(
            "no training windows: {} sequences, none at least {} frames long",
            samples.len(),
            cfg.loss.sequence_length
        )));
    }

    let init_seed = Prng::seed_from_u64(cfg.seed).derive(STREAM_INIT).next_u64();
    let shuffle_seed = Prng::seed_from_u64(cfg.seed)
        .derive(STREAM_SHUFFLE)
        .next_u64();
    let params = EmbedderParams::init(cfg.embedder, &mut Prng::seed_from_u64(init_seed))?;
    let (trained, history) = train(&windows, &params, &cfg.loss, &cfg.optimizer, shuffle_seed)?;

    create_dir(out)?;
    cfg.save(&out.join("config.toml"))?;
    trained.save(&out.join("checkpoint.json"))?;
    let mut log = String::new();
    for stats in &history {
        log.push_str(
            &serde_json::to_string(stats)
                .map_err(|e| Error::Invalid(format!("log serialization failed: {e}")))?,
        );
        log.push('\n');
    }
    let log_path = out.join("training_log.jsonl");
    std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;

    if !quiet {
        for stats in &history {
            println!(
                "epoch {:>3}/{}: inter {:.4} intra {:.4} total {:.4} lr {:.2e} updated {} skipped {}",
                stats.epoch + 1,
                history.len(),
                stats.mean_inter,
                stats.mean_intra,
                stats.mean_total,
                stats.learning_rate,
                stats.updated,
                stats.skipped
            );
        }
        println!(
            "trained on {} windows from {} sequences; checkpoint at {}",
            windows.len(),
            samples.len(),
            out.join("checkpoint.json").display()
        );
    }
    Ok(trained)
}

fn cmd_train(config: Option<&Path>, seed: Option<u64>, data: &Path, out: &Path) -> Result<()> {
    let cfg = load_run_config(config, seed)?;
    train_pipeline(&cfg, data, out, false)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// grad-check

/// One randomized tiny scene: 3 frames, 1–2 drifting colored squares, a
/// 12-input embedder with 3-dim output, and a smooth operating point for the
/// objective (moderate sharpness, low match threshold).
fn gradient_instance(seed: u64) -> Result<(SequenceSample, EmbedderParams, LossConfig)> {
    let mut rng = Prng::seed_from_u64(seed);
    let objects = 1 + rng.uniform_usize(2);
    let normalize = rng.uniform() < 0.5;

    let mut base_colors = Vec::new();
    for _ in 0..objects {
        base_colors.push([
            40.0 + rng.uniform() * 180.0,
            40.0 + rng.uniform() * 180.0,
            40.0 + rng.uniform() * 180.0,
        ]);
    }
    let mut frames = Vec::new();
    let mut images = Vec::new();
    for f in 1..=3u32 {
        let mut img = RgbImage::filled(48, 24, [15, 15, 20]);
        let mut dets = Vec::new();
        for o in 0..objects {
            let x = 4.0 + 18.0 * o as f64 + 1.2 * (f - 1) as f64 + rng.uniform() * 1.5;
            let y = 5.0 + 2.0 * rng.uniform() + (f - 1) as f64 * 0.6;
            let bbox = BBox::new(x, y, 10.0, 10.0)?;
            let drift = 10.0 * (f as f64 - 1.0);
            let c = base_colors[o];
            let color = [
                (c[0] + drift).clamp(0.0, 255.0) as u8,
                (c[1] - drift).clamp(0.0, 255.0) as u8,
                c[2] as u8,
            ];
            img.fill_rect(bbox.x, bbox.y, bbox.width, bbox.height, color);
            dets.push(Detection::new(f, bbox, 0.9)?);
        }
        frames.push(FrameDetections::new(f, dets)?);
        images.push(img);
    }
    let sample = SequenceSample::new(frames, Some(images))?;

    let econfig = EmbedderConfig {
        patch_w: 2,
        patch_h: 2,
        hidden: 4,
        dim: 3,
        l2_normalize: normalize,
    };
    let params = EmbedderParams::init(econfig, &mut rng)?;
    let loss_cfg = LossConfig {
        sequence_length: 3,
        tau: 5.0,
        delta_match: 0.05,
        ..LossConfig::default()
    };
    Ok((sample, params, loss_cfg))
}

/// Largest relative error between `analytic` and the central finite
/// difference of `f` over every coordinate of `at`.
fn max_fd_error<F: Fn(&[f64]) -> Result<f64>>(
    at: &[f64],
    analytic: &[f64],
    f: F,
) -> Result<f64> {
    let h = 1e-4;
    let mut worst = 0.0f64;
    for idx in 0..at.len() {
        let mut plus = at.to_vec();
        plus[idx] += h;
        let mut minus = at.to_vec();
        minus[idx] -= h;
        let fd = (f(&plus)? - f(&minus)?) / (2.0 * h);
        let a = analytic[idx];
        let denom = a.abs().max(fd.abs()).max(1e-3);
        worst = worst.max((a - fd).abs() / denom);
    }
    Ok(worst)
}

/// Minimum pre-normalization output norm of the model on these crops; tiny
/// values make the normalization Jacobian ill-conditioned for differencing.
fn min_raw_norm(params: &EmbedderParams, crops: &[CropFeature]) -> Result<f64> {
    let mut raw = params.clone();
    raw.config.l2_normalize = false;
    let rows = embed(&raw, crops)?;
    let mut min = f64::INFINITY;
    for row in rows.rows() {
        min = min.min(row.dot(&row).sqrt());
    }
    Ok(min)
}

/// Checks one instance; `None` means the instance sits too close to a
/// non-smooth point (tied minimum, mask boundary, vanishing norm) for finite
/// differences to be meaningful, and the caller should draw another.
fn check_instance(seed: u64) -> Result<Option<f64>> {
    let (sample, params, loss_cfg) = gradient_instance(seed)?;
    let fwd = subco_loss_forward(&sample, &params, &loss_cfg)?;
    if fwd.breakdown.skipped
        || fwd.breakdown.inter <= 0.0
        || fwd.min_tie_margin() < 1e-7
        || fwd.mask_margin(&loss_cfg) < 1e-3
    {
        return Ok(None);
    }
    let all_crops: Vec<CropFeature> = fwd.crops.iter().flatten().cloned().collect();
    if params.config.l2_normalize && min_raw_norm(&params, &all_crops)? < 1e-2 {
        return Ok(None);
    }

    // Objective gradient vs differencing the scalar objective.
    let (_, grads) = subco_loss_gradient(&sample, &params, &loss_cfg)?;
    let base = params.flatten();
    let loss_err = max_fd_error(&base, &grads.flatten(), |flat| {
        let mut p = params.clone();
        p.assign_from_flat(flat)?;
        Ok(subco_loss(&sample, &p, &loss_cfg)?.total)
    })?;

    // Raw embedding backward pass vs differencing a random projection of the
    // embedding matrix.
    let mut rng = Prng::seed_from_u64(seed).derive(1);
    let upstream = Array2::from_shape_fn((all_crops.len(), params.config.dim), |_| {
        rng.normal()
    });
    let analytic = embed_backward(&params, &all_crops, &upstream)?.flatten();
    let embed_err = max_fd_error(&base, &analytic, |flat| {
        let mut p = params.clone();
        p.assign_from_flat(flat)?;
        Ok((&embed(&p, &all_crops)? * &upstream).sum())
    })?;

    Ok(Some(loss_err.max(embed_err)))
}

fn cmd_grad_check(config: Option<&Path>, seed: Option<u64>, count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let cfg = load_run_config(config, seed)?;
    let mut rng = Prng::seed_from_u64(cfg.seed).derive(STREAM_GRAD_CHECK);
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut max_err = 0.0f64;
    let mut attempts = 0usize;
    let attempt_cap = count.saturating_mul(60);
    while checked < count && attempts < attempt_cap {
        attempts += 1;
        match check_instance(rng.next_u64())? {
            None => continue,
            Some(err) => {
                checked += 1;
                max_err = max_err.max(err);
                if !(err < GRAD_TOLERANCE) {
                    failures += 1;
                }
            }
        }
    }
    if checked < count {
        return Err(Error::Invalid(format!(
            "only {checked}/{count} well-conditioned instances in {attempts} draws"
        )));
    }
    if failures == 0 {
        println!("PASS {checked}/{count}, max rel err {max_err:.2e} (< {GRAD_TOLERANCE:.0e})");
        Ok(())
    } else {
        println!(
            "FAIL {}/{count}, max rel err {max_err:.2e} (tolerance {GRAD_TOLERANCE:.0e})",
            checked - failures
        );
        Err(Error::Invalid(format!(
            "{failures} gradient check(s) exceeded tolerance"
        )))
    }
}

// ---------------------------------------------------------------------------
// track

fn cmd_track(config: Option<&Path>, checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let cfg = load_run_config(config, None)?;
    let params = EmbedderParams::load(checkpoint)?;
    if params.config != cfg.embedder {
        return Err(Error::Config(format!(
            "checkpoint model ({}x{} patch, hidden {}, dim {}) differs from configured model ({}x{} patch, hidden {}, dim {})",
            params.config.patch_w,
            params.config.patch_h,
            params.config.hidden,
            params.config.dim,
            cfg.embedder.patch_w,
            cfg.embedder.patch_h,
            cfg.embedder.hidden,
            cfg.embedder.dim
        )));
    }
    let (sample, _gt) = load_dataset(data)?;
    let images = sample
        .images
        .as_ref()
        .ok_or_else(|| Error::Invalid("dataset has no images".into()))?;
    let rows = track_sequence(&sample.frames, images, &params, &cfg.tracker)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    write_mot_file(&rows, out)?;
    cfg.save(&out.with_extension("config.toml"))?;
    let identities: std::collections::BTreeSet<u32> = rows.iter().map(|r| r.track_id).collect();
    println!(
        "tracked {} frames, {} identities -> {}",
        sample.frames.len(),
        identities.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn rows_from_file(path: &Path) -> Result<Vec<ResultRow>> {
    frames_to_rows(&parse_mot_file(path)?)
}

fn cmd_eval(gt: &Path, results: &Path, out: Option<&Path>) -> Result<()> {
    let gt_rows = rows_from_file(gt)?;
    let hyp_rows = rows_from_file(results)?;
    let report = evaluate_all(&gt_rows, &hyp_rows);
    print!("{}", report.render_text());
    if let Some(path) = out {
        std::fs::write(path, to_json_pretty(&report)?).map_err(|e| Error::io(path, e))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate

#[derive(Debug, Clone, Serialize)]
struct CellMetrics {
    mota: f64,
    idf1: f64,
    hota: f64,
    deta: f64,
    assa: f64,
    id_switches: u64,
    false_positives: u64,
    false_negatives: u64,
}

impl CellMetrics {
    fn from_report(report: &EvaluationReport) -> Self {
        CellMetrics {
            mota: report.clear.mota,
            idf1: report.idf1.idf1,
            hota: report.hota.hota,
            deta: report.hota.deta,
            assa: report.hota.assa,
            id_switches: report.clear.id_switches,
            false_positives: report.clear.false_positives,
            false_negatives: report.clear.false_negatives,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct CellOutcome {
    cell: String,
    settings: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<CellMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Full pipeline for one grid cell: resolve the patched config, generate
/// data, train, track the held-out sequences, and evaluate pooled metrics.
fn run_cell(
    base_toml: &str,
    origin: &Path,
    overrides: &[(String, toml::Value)],
    seed: Option<u64>,
    cell_dir: &Path,
) -> Result<CellMetrics> {
    let mut cfg = resolve_with_overrides(base_toml, origin, overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    create_dir(cell_dir)?;
    cfg.save(&cell_dir.join("config.toml"))?;
    generate_datasets(&cfg, cell_dir)?;
    let trained = train_pipeline(&cfg, cell_dir, cell_dir, true)?;

    let results_dir = cell_dir.join("results");
    create_dir(&results_dir)?;
    let mut pairs = Vec::new();
    for (i, dir) in dataset_dirs(cell_dir, "eval")?.iter().enumerate() {
        let (sample, gt_frames) = load_dataset(dir)?;
        let images = sample
            .images
            .as_ref()
            .ok_or_else(|| Error::Invalid("dataset has no images".into()))?;
        let rows = track_sequence(&sample.frames, images, &trained, &cfg.tracker)?;
        write_mot_file(&rows, &results_dir.join(format!("seq_{i:03}.txt")))?;
        pairs.push((frames_to_rows(&gt_frames)?, rows));
    }
    let (gt_pool, hyp_pool) = pool_sequences(&pairs);
    let report = evaluate_all(&gt_pool, &hyp_pool);
    let metrics_path = cell_dir.join("metrics.json");
    std::fs::write(&metrics_path, to_json_pretty(&report)?)
        .map_err(|e| Error::io(&metrics_path, e))?;
    Ok(CellMetrics::from_report(&report))
}

fn render_summary(rows: &[CellOutcome]) -> String {
    let mut text = String::new();
    text.push_str(&format!(
        "{:<10}{:>8}{:>8}{:>8}{:>8}{:>8}{:>7}{:>7}{:>7}  {}\n",
        "cell", "MOTA", "IDF1", "HOTA", "DetA", "AssA", "IDSw", "FP", "FN", "settings"
    ));
    for row in rows {
        match (&row.metrics, &row.error) {
            (Some(m), _) => text.push_str(&format!(
                "{:<10}{:>8.4}{:>8.4}{:>8.4}{:>8.4}{:>8.4}{:>7}{:>7}{:>7}  {}\n",
                row.cell,
                m.mota,
                m.idf1,
                m.hota,
                m.deta,
                m.assa,
                m.id_switches,
                m.false_positives,
                m.false_negatives,
                row.settings
            )),
            (None, Some(e)) => {
                text.push_str(&format!("{:<10}invalid: {}  [{}]\n", row.cell, e, row.settings))
            }
            (None, None) => text.push_str(&format!("{:<10}invalid\n", row.cell)),
        }
    }
    text
}

fn cmd_ablate(
    config: Option<&Path>,
    seed: Option<u64>,
    grid: &Path,
    out: &Path,
) -> Result<()> {
    let (base_toml, origin) = match config {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            p.to_path_buf(),
        ),
        None => (String::new(), PathBuf::from("<defaults>")),
    };
    let spec = GridSpec::load(grid)?;
    let cells = spec.cells();
    create_dir(out)?;

    let mut rows = Vec::with_capacity(cells.len());
    for (i, overrides) in cells.iter().enumerate() {
        let cell = format!("cell_{i:03}");
        let settings = overrides
            .iter()
            .map(|(p, v)| format!("{p}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        let outcome = match run_cell(&base_toml, &origin, overrides, seed, &out.join(&cell)) {
            Ok(metrics) => {
                println!(
                    "{cell}: MOTA {:.4} IDF1 {:.4} HOTA {:.4} IDSw {}  [{settings}]",
                    metrics.mota, metrics.idf1, metrics.hota, metrics.id_switches
                );
                CellOutcome {
                    cell,
                    settings,
                    metrics: Some(metrics),
                    error: None,
                }
            }
            Err(e) => {
                println!("{cell}: invalid ({e})  [{settings}]");
                CellOutcome {
                    cell,
                    settings,
                    metrics: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(outcome);
    }

    let summary = render_summary(&rows);
    let text_path = out.join("summary.txt");
    std::fs::write(&text_path, &summary).map_err(|e| Error::io(&text_path, e))?;
    let json_path = out.join("summary.json");
    std::fs::write(&json_path, to_json_pretty(&rows)?).map_err(|e| Error::io(&json_path, e))?;
    print!("{summary}");
    println!("summary written to {}", out.display());
    Ok(())
}
