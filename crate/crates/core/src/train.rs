//! Training loop: AdamW over the consistency objective, one optimizer step
//! per usable sample, with per-epoch aggregate statistics.

use crate::embedder::EmbedderParams;
use crate::error::{Error, Result};
use crate::loss::{subco_loss_gradient, LossConfig};
use crate::optim::{AdamW, OptimizerConfig};
use crate::rng::Prng;
use crate::types::SequenceSample;
use serde::{Deserialize, Serialize};

/// One epoch's aggregate record, serializable as a log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0-based epoch index.
    pub epoch: usize,
    /// Means over samples that produced an update this epoch.
    pub mean_inter: f64,
    pub mean_intra: f64,
    pub mean_total: f64,
    /// Samples that produced no update (nothing survived their chain).
    pub skipped: usize,
    pub updated: usize,
    pub learning_rate: f64,
    /// Every sample in the epoch was skipped — a warning condition; training
    /// continues with parameters unchanged for this epoch.
    pub all_skipped: bool,
}

/// Cut sequences into consecutive non-overlapping windows of `length` frames;
/// trailing partial windows are dropped. Window samples keep their original
/// frame indices and carry the matching image slices.
pub fn window_sequences(sequences: &[SequenceSample], length: usize) -> Result<Vec<SequenceSample>> {
    if length == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    let mut out = Vec::new();
    for seq in sequences {
        let full = seq.frames.len() / length;
        for w in 0..full {
            let range = w * length..(w + 1) * length;
            let frames = seq.frames[range.clone()].to_vec();
            let images = seq.images.as_ref().map(|imgs| imgs[range].to_vec());
            out.push(SequenceSample::new(frames, images)?);
        }
    }
    Ok(out)
}

/// Train the embedder on the given samples. Deterministic for a fixed seed:
/// the per-epoch sample order is drawn from it. Returns the trained
/// parameters and one record per epoch.
pub fn train(
    dataset: &[SequenceSample],
    params: &EmbedderParams,
    loss_cfg: &LossConfig,
    opt_cfg: &OptimizerConfig,
    seed: u64,
) -> Result<(EmbedderParams, Vec<EpochStats>)> {
    if dataset.is_empty() {
        return Err(Error::Invalid("training needs at least one sample".into()));
    }
    loss_cfg.validate()?;
    opt_cfg.validate()?;
    let mut params = params.clone();
    let mut flat = params.flatten();
    let mut optimizer = AdamW::new(*opt_cfg, flat.len())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = Prng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(opt_cfg.epochs);

    for epoch in 0..opt_cfg.epochs {
        let lr = opt_cfg.learning_rate_at(epoch);
        rng.shuffle(&mut order);
        let mut sum_inter = 0.0;
        let mut sum_intra = 0.0;
        let mut sum_total = 0.0;
        let mut skipped = 0;
        let mut updated = 0;
        for &idx in &order {
            let (breakdown, grads) = subco_loss_gradient(&dataset[idx], &params, loss_cfg)?;
            if breakdown.skipped {
                skipped += 1;
                continue;
            }
            let mut flat_grads = grads.flatten();
            opt_cfg.clip_gradient(&mut flat_grads);
            optimizer.step(&mut flat, &flat_grads, lr)?;
            params.assign_from_flat(&flat)?;
            sum_inter += breakdown.inter;
            sum_intra += breakdown.intra;
            sum_total += breakdown.total;
            updated += 1;
        }
        let denom = updated.max(1) as f64;
        history.push(EpochStats {
            epoch,
            mean_inter: sum_inter / denom,
            mean_intra: sum_intra / denom,
            mean_total: sum_total / denom,
            skipped,
            updated,
            learning_rate: lr,
            all_skipped: updated == 0,
        });
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::EmbedderConfig;
    use crate::pixmap::RgbImage;
    use crate::types::{BBox, Detection, FrameDetections};

    /// Moving colored squares with per-frame drift; one sample per call.
    fn moving_sample(t: usize, objects: usize, phase: f64) -> SequenceSample {
        let mut frames = Vec::new();
        let mut images = Vec::new();
        for f in 1..=t as u32 {
            let mut img = RgbImage::filled(96, 48, [12, 12, 12]);
            let mut dets = Vec::new();
            for o in 0..objects {
                let x = 6.0 + 28.0 * o as f64 + 2.0 * (f - 1) as f64 + 3.0 * phase;
                let y = 10.0 + 6.0 * ((f as f64 * 0.7 + o as f64 + phase).sin());
                let bbox = BBox::new(x, y, 14.0, 14.0).unwrap();
                let hue = [(60 + 80 * o as i32) as f64, 40.0, 200.0];
                let color = [
                    (hue[0]).clamp(0.0, 255.0) as u8,
                    (hue[1] + 30.0 * o as f64) as u8,
                    (hue[2] - 40.0 * o as f64) as u8,
                ];
                img.fill_rect(bbox.x, bbox.y, bbox.width, bbox.height, color);
                let mut det = Detection::new(f, bbox, 0.9).unwrap();
                det.track_id = Some(o as u32 + 1);
                dets.push(det);
            }
            frames.push(FrameDetections::new(f, dets).unwrap());
            images.push(img);
        }
        SequenceSample::new(frames, Some(images)).unwrap()
    }

    fn tiny_params(seed: u64) -> EmbedderParams {
        let config = EmbedderConfig {
            patch_w: 4,
            patch_h: 4,
            hidden: 8,
            dim: 4,
            l2_normalize: true,
        };
        EmbedderParams::init(config, &mut Prng::seed_from_u64(seed)).unwrap()
    }

    fn small_cfg(t: usize) -> LossConfig {
        LossConfig {
            sequence_length: t,
            ..LossConfig::default()
        }
    }

    #[test]
    fn windowing_cuts_and_drops_remainder() {
        let seq = moving_sample(7, 1, 0.0);
        let windows = window_sequences(std::slice::from_ref(&seq), 3).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].frames.len(), 3);
        assert_eq!(windows[0].frames[0].frame, 1);
        assert_eq!(windows[1].frames[0].frame, 4);
        assert_eq!(windows[1].images.as_ref().unwrap().len(), 3);

        let singles = window_sequences(std::slice::from_ref(&seq), 1).unwrap();
        assert_eq!(singles.len(), 7);
        assert!(window_sequences(&[], 4).unwrap().is_empty());
        assert!(window_sequences(&[seq], 0).is_err());
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let dataset = vec![moving_sample(3, 2, 0.0)];
        let params = tiny_params(1);
        let mut opt = OptimizerConfig::default();
        opt.epochs = 0;
        let (trained, history) = train(&dataset, &params, &small_cfg(3), &opt, 7).unwrap();
        assert_eq!(trained, params);
        assert!(history.is_empty());
    }

    #[test]
    fn zero_learning_rate_freezes_history() {
        let dataset = vec![moving_sample(3, 2, 0.0), moving_sample(3, 2, 1.0)];
        let params = tiny_params(2);
        let mut opt = OptimizerConfig::default();
        opt.epochs = 3;
        opt.learning_rate = 0.0;
        let (trained, history) = train(&dataset, &params, &small_cfg(3), &opt, 7).unwrap();
        assert_eq!(trained, params);
        assert_eq!(history.len(), 3);
        for stats in &history[1..] {
            assert_eq!(stats.mean_total, history[0].mean_total);
            assert_eq!(stats.mean_inter, history[0].mean_inter);
        }
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let dataset = vec![moving_sample(4, 2, 0.0), moving_sample(4, 2, 2.0)];
        let params = tiny_params(3);
        let mut opt = OptimizerConfig::default();
        opt.epochs = 2;
        opt.learning_rate = 1e-3;
        let (a, ha) = train(&dataset, &params, &small_cfg(4), &opt, 11).unwrap();
        let (b, hb) = train(&dataset, &params, &small_cfg(4), &opt, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_ne!(a, params, "training with a positive rate must move params");
    }

    #[test]
    fn loss_decreases_over_short_run() {
        let dataset: Vec<SequenceSample> =
            (0..4).map(|i| moving_sample(4, 2, i as f64)).collect();
        let params = tiny_params(4);
        let mut opt = OptimizerConfig::default();
        opt.epochs = 8;
        opt.learning_rate = 3e-3;
        opt.lr_decay_epoch = 100;
        let (_, history) = train(&dataset, &params, &small_cfg(4), &opt, 5).unwrap();
        let first = history.first().unwrap().mean_total;
        let last = history.last().unwrap().mean_total;
        assert!(last < first, "loss went {first} -> {last}");
        assert!(history.iter().all(|h| !h.all_skipped));
    }

    #[test]
    fn all_skipped_epoch_is_flagged_and_training_continues() {
        // Empty second frame forces full deletion in every sample.
        let mut sample = moving_sample(3, 2, 0.0);
        sample.frames[1].detections.clear();
        let params = tiny_params(5);
        let mut opt = OptimizerConfig::default();
        opt.epochs = 2;
        let (trained, history) = train(&[sample], &params, &small_cfg(3), &opt, 3).unwrap();
        assert_eq!(trained, params);
        assert_eq!(history.len(), 2);
        assert!(history.iter().all(|h| h.all_skipped && h.skipped == 1));
    }

    #[test]
    fn empty_dataset_rejected() {
        let params = tiny_params(6);
        assert!(train(
            &[],
            &params,
            &small_cfg(3),
            &OptimizerConfig::default(),
            0
        )
        .is_err());
    }
}
