//! Throwaway diagnostic: per-window loss anatomy for a dataset + checkpoint.
//! Usage: probe <data_dir> <checkpoint_or_"init"> [conf_threshold]

use motkit::config::RunConfig;
use motkit::embedder::EmbedderParams;
use motkit::loss::subco_loss_forward;
use motkit::rng::Prng;
use motkit::synth::load_dataset;
use motkit::train::window_sequences;
use motkit::types::{filter_by_confidence, SequenceSample};
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let data = Path::new(&args[1]);
    let ckpt = &args[2];
    let conf: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let cfg = RunConfig::default();

    let mut seqs = Vec::new();
    let base = data.join("train");
    let base = if base.is_dir() { base } else { data.to_path_buf() };
    let mut dirs: Vec<_> = std::fs::read_dir(&base)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    for d in &dirs {
        let (sample, _) = load_dataset(d).unwrap();
        let frames = filter_by_confidence(&sample.frames, conf);
        seqs.push(SequenceSample::new(frames, sample.images).unwrap());
    }
    let windows = window_sequences(&seqs, cfg.loss.sequence_length).unwrap();
    eprintln!("{} sequences -> {} windows", seqs.len(), windows.len());

    let params = if ckpt == "init" {
        let mut rng = Prng::seed_from_u64(cfg.seed).derive(300);
        EmbedderParams::init(cfg.embedder.clone(), &mut rng).unwrap()
    } else {
        EmbedderParams::load(Path::new(ckpt)).unwrap()
    };

    let mut rows: Vec<(usize, f64, String)> = Vec::new();
    for (w, win) in windows.iter().enumerate() {
        let fwd = subco_loss_forward(win, &params, &cfg.loss).unwrap();
        let mut detail = String::new();
        if let (Some((product, deleted)), Some(direct)) = (&fwd.chained, &fwd.direct) {
            for i in 0..product.nrows() {
                let cons: f64 = (0..product.ncols())
                    .map(|j| product[[i, j]] * direct.a[[i, j]])
                    .sum();
                let alive = deleted[i] < cfg.loss.deletion_threshold;
                detail.push_str(&format!(
                    "  row {i}: del {:.3} {} cons {:.4} -log {:.2}\n",
                    deleted[i],
                    if alive { "alive" } else { "dead " },
                    cons,
                    -(cfg.loss.epsilon_log + cons).ln()
                ));
            }
        }
        rows.push((w, fwd.breakdown.inter, detail));
    }
    let mean: f64 = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.1).collect();
    sorted.sort_by(f64::total_cmp);
    println!(
        "mean inter {mean:.4}  median {:.4}  p90 {:.4}  max {:.4}",
        sorted[sorted.len() / 2],
        sorted[sorted.len() * 9 / 10],
        sorted[sorted.len() - 1]
    );
    let over: usize = rows.iter().filter(|r| r.1 > 2.0).count();
    println!("windows with inter > 2.0: {over}/{}", rows.len());
    rows.sort_by(|a, b| f64::total_cmp(&b.1, &a.1));
    for (w, v, detail) in rows.iter().take(4) {
        println!("window {w}: inter {v:.4}\n{detail}");
    }
}
