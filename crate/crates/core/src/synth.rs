//! Synthetic tracking sequences with verifiable ground truth.
//!
//! Each sequence renders colored rectangles moving with constant velocity plus
//! jitter, bouncing off the image border, optionally crossed by larger
//! occluder rectangles drawn on top. A simulated detector then drops boxes
//! (randomly and under heavy occlusion), perturbs box corners, lowers the
//! confidence of partially occluded objects, and adds clutter boxes with no
//! ground-truth identity — producing the raw material an association method
//! has to cope with, at desk scale, with exact ground truth on the side.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mot_io::{frames_to_rows, parse_mot_file, write_det_file, write_mot_file};
use crate::pixmap::{hsv_to_rgb, RgbImage};
use crate::rng::Prng;
use crate::types::{BBox, Detection, FrameDetections, SequenceSample};

/// Knobs of the synthetic scene and detector simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Number of tracked objects (≥ 1).
    pub num_objects: usize,
    /// Number of frames (≥ 2).
    pub num_frames: usize,
    /// Image (width, height) in pixels.
    pub image_size: (usize, usize),
    /// Inclusive range of object edge lengths in pixels.
    pub object_size_range: (f64, f64),
    /// Inclusive range of object speeds in pixels/frame.
    pub speed_range: (f64, f64),
    /// Number of occluder rectangles drawn over the objects.
    pub occluder_count: usize,
    /// Standard deviation of per-frame color noise, in 8-bit color units.
    pub appearance_noise: f64,
    /// Probability that a visible true box is missing from the detections.
    pub detector_dropout: f64,
    /// Expected number of false-positive boxes per frame.
    pub clutter_rate: f64,
    /// Generation seed; same seed, same bytes.
    pub seed: u64,
    /// A detection is suppressed when an occluder covers more than this
    /// fraction of its box.
    pub occlusion_drop_overlap: f64,
    /// Standard deviation of Gaussian noise on detected box corners (pixels).
    pub box_noise: f64,
    /// Total relative brightness increase across the sequence (0 = constant).
    pub brightness_ramp: f64,
    /// Standard deviation of per-frame velocity jitter (pixels/frame).
    pub position_jitter: f64,
    /// Rotation of the object color wheel in degrees, to vary palettes
    /// between datasets.
    pub hue_shift: f64,
    /// Maximum per-object hue rotation speed in degrees/frame; each object
    /// draws its own rate uniformly from ±this, so appearance drifts over
    /// time and frames far apart look less alike than neighbors.
    pub hue_drift: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_objects: 3,
            num_frames: 16,
            image_size: (192, 144),
            object_size_range: (16.0, 32.0),
            speed_range: (1.0, 3.0),
            occluder_count: 3,
            appearance_noise: 8.0,
            detector_dropout: 0.08,
            clutter_rate: 0.3,
            seed: 7,
            occlusion_drop_overlap: 0.7,
            box_noise: 0.5,
            brightness_ramp: 0.0,
            position_jitter: 0.15,
            hue_shift: 0.0,
            hue_drift: 2.0,
        }
    }
}

impl SyntheticConfig {
    /// Checks ranges and that the largest object fits inside the image.
    pub fn validate(&self) -> Result<()> {
        if self.num_objects < 1 {
            return Err(Error::Config("num_objects must be at least 1".into()));
        }
        if self.num_frames < 2 {
            return Err(Error::Config("num_frames must be at least 2".into()));
        }
        let (w, h) = self.image_size;
        if w == 0 || h == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        let (lo, hi) = self.object_size_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "object_size_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if hi >= w as f64 || hi >= h as f64 {
            return Err(Error::Config(format!(
                "objects up to {hi}px cannot fit a {w}x{h} image"
            )));
        }
        let (slo, shi) = self.speed_range;
        if !(slo >= 0.0 && shi >= slo && shi.is_finite()) {
            return Err(Error::Config(format!(
                "speed_range must satisfy 0 <= lo <= hi, got ({slo}, {shi})"
            )));
        }
        for (name, value) in [
            ("detector_dropout", self.detector_dropout),
            ("occlusion_drop_overlap", self.occlusion_drop_overlap),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0, 1], got {value}"
                )));
            }
        }
        for (name, value) in [
            ("clutter_rate", self.clutter_rate),
            ("appearance_noise", self.appearance_noise),
            ("box_noise", self.box_noise),
            ("position_jitter", self.position_jitter),
            ("hue_drift", self.hue_drift),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a finite non-negative number, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// One moving rectangle (object or occluder).
#[derive(Debug, Clone)]
struct Mover {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
    hue: f64,
    saturation: f64,
    value: f64,
    /// Hue rotation per frame in degrees; zero for occluders.
    hue_drift: f64,
}

impl Mover {
    /// Base color at 1-based frame `t`, after the per-frame hue drift.
    fn color_at(&self, t: u32) -> [f64; 3] {
        let hue = (self.hue + self.hue_drift * (t - 1) as f64).rem_euclid(360.0);
        let rgb = hsv_to_rgb(hue, self.saturation, self.value);
        [rgb[0] as f64, rgb[1] as f64, rgb[2] as f64]
    }
}

impl Mover {
    fn bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, self.h).expect("mover extent stays positive")
    }

    /// Advances one frame with jitter, reflecting off the image border.
    fn advance(&mut self, width: f64, height: f64, jitter: f64, rng: &mut Prng) {
        self.vx += rng.normal_scaled(0.0, jitter);
        self.vy += rng.normal_scaled(0.0, jitter);
        self.x += self.vx;
        self.y += self.vy;
        if self.x < 0.0 {
            self.x = -self.x;
            self.vx = -self.vx;
        }
        if self.x + self.w > width {
            self.x = 2.0 * (width - self.w) - self.x;
            self.vx = -self.vx;
        }
        if self.y < 0.0 {
            self.y = -self.y;
            self.vy = -self.vy;
        }
        if self.y + self.h > height {
            self.y = 2.0 * (height - self.h) - self.y;
            self.vy = -self.vy;
        }
        // A double reflection (tiny image, large step) can still leave the
        // border; clamp as a final guard.
        self.x = self.x.clamp(0.0, width - self.w);
        self.y = self.y.clamp(0.0, height - self.h);
    }
}

/// Largest fraction of `bbox` covered by any single occluder.
fn max_occlusion_fraction(bbox: &BBox, occluders: &[BBox]) -> f64 {
    occluders
        .iter()
        .map(|occ| bbox.intersection_area(occ) / bbox.area())
        .fold(0.0, f64::max)
}

fn clamp_channel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Generates one sequence: rendered frames plus detector output as the
/// sample, and the exact ground truth separately. Deterministic per seed.
pub fn generate_synthetic(
    cfg: &SyntheticConfig,
) -> Result<(SequenceSample, Vec<FrameDetections>)> {
    cfg.validate()?;
    let (iw, ih) = cfg.image_size;
    let (fw, fh) = (iw as f64, ih as f64);
    let root = Prng::seed_from_u64(cfg.seed);
    let mut layout_rng = root.derive(1);
    let mut appearance_rng = root.derive(2);
    let mut detector_rng = root.derive(3);
    let mut clutter_rng = root.derive(4);
    let mut motion_rng = root.derive(5);

    let spawn =
        |rng: &mut Prng, size_lo: f64, size_hi: f64, hsv: (f64, f64, f64), drift: f64| {
            let w = rng.uniform_range(size_lo, size_hi);
            let h = rng.uniform_range(size_lo, size_hi);
            let x = rng.uniform_range(0.0, fw - w);
            let y = rng.uniform_range(0.0, fh - h);
            let speed = rng.uniform_range(cfg.speed_range.0, cfg.speed_range.1);
            let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
            Mover {
                x,
                y,
                w,
                h,
                vx: speed * angle.cos(),
                vy: speed * angle.sin(),
                hue: hsv.0,
                saturation: hsv.1,
                value: hsv.2,
                hue_drift: drift,
            }
        };

    let mut objects = Vec::with_capacity(cfg.num_objects);
    for i in 0..cfg.num_objects {
        // Evenly spaced hues at high saturation keep object appearances far
        // apart in pixel space (low cross-object cosine), which makes the
        // identity structure recoverable from small crops. Each object also
        // gets its own slow hue rotation so appearance changes gradually over
        // the sequence instead of staying constant.
        let hue = (cfg.hue_shift + i as f64 * 360.0 / cfg.num_objects as f64) % 360.0;
        let saturation = layout_rng.uniform_range(0.85, 1.0);
        let value = layout_rng.uniform_range(0.7, 0.95);
        let drift = layout_rng.uniform_range(-cfg.hue_drift, cfg.hue_drift);
        objects.push(spawn(
            &mut layout_rng,
            cfg.object_size_range.0,
            cfg.object_size_range.1,
            (hue, saturation, value),
            drift,
        ));
    }
    let mut occluders = Vec::with_capacity(cfg.occluder_count);
    for _ in 0..cfg.occluder_count {
        let gray = layout_rng.uniform_range(60.0, 110.0);
        let lo = cfg.object_size_range.1 * 1.3;
        let hi = (cfg.object_size_range.1 * 2.2).min(fw - 1.0).min(fh - 1.0);
        occluders.push(spawn(
            &mut layout_rng,
            lo.min(hi),
            hi,
            (0.0, 0.0, gray / 255.0),
            0.0,
        ));
    }

    let mut det_frames = Vec::with_capacity(cfg.num_frames);
    let mut gt_frames = Vec::with_capacity(cfg.num_frames);
    let mut images = Vec::with_capacity(cfg.num_frames);
    for t in 1..=cfg.num_frames as u32 {
        let ramp = 1.0
            + cfg.brightness_ramp * (t - 1) as f64 / (cfg.num_frames - 1) as f64;
        let mut image = RgbImage::filled(iw, ih, [12, 14, 18]);
        for obj in &objects {
            let base = obj.color_at(t);
            let mut color = [0u8; 3];
            for c in 0..3 {
                let noisy = base[c] * ramp
                    + appearance_rng.normal_scaled(0.0, cfg.appearance_noise);
                color[c] = clamp_channel(noisy);
            }
            image.fill_rect(obj.x, obj.y, obj.w, obj.h, color);
        }
        for occ in &occluders {
            let base = occ.color_at(t);
            let color = [
                clamp_channel(base[0] * ramp),
                clamp_channel(base[1] * ramp),
                clamp_channel(base[2] * ramp),
            ];
            image.fill_rect(occ.x, occ.y, occ.w, occ.h, color);
        }
        images.push(image);

        let occluder_boxes: Vec<BBox> = occluders.iter().map(Mover::bbox).collect();
        let mut gt = Vec::with_capacity(cfg.num_objects);
        let mut dets = Vec::new();
        for (i, obj) in objects.iter().enumerate() {
            let gt_box = obj.bbox();
            gt.push(
                Detection::new(t, gt_box, 1.0)
                    .expect("valid gt box")
                    .with_track_id(i as u32 + 1),
            );
            let occlusion = max_occlusion_fraction(&gt_box, &occluder_boxes);
            let dropped = occlusion > cfg.occlusion_drop_overlap
                || detector_rng.uniform() < cfg.detector_dropout;
            // Draw the detector randomness even for dropped boxes so the
            // stream position does not depend on earlier outcomes.
            let x0 = obj.x + detector_rng.normal_scaled(0.0, cfg.box_noise);
            let y0 = obj.y + detector_rng.normal_scaled(0.0, cfg.box_noise);
            let x1 = obj.x + obj.w + detector_rng.normal_scaled(0.0, cfg.box_noise);
            let y1 = obj.y + obj.h + detector_rng.normal_scaled(0.0, cfg.box_noise);
            let base_conf = detector_rng.uniform_range(0.80, 0.99);
            if dropped {
                continue;
            }
            // Keep the noisy box valid and on the image.
            let bx = x0.clamp(0.0, fw - 2.0);
            let by = y0.clamp(0.0, fh - 2.0);
            let bw = (x1 - bx).clamp(2.0, fw - bx);
            let bh = (y1 - by).clamp(2.0, fh - by);
            let det_box = BBox::new(bx, by, bw, bh).expect("clamped box is positive");
            let confidence = (base_conf - 0.7 * occlusion).max(0.15);
            dets.push(Detection::new(t, det_box, confidence).expect("valid detection"));
        }
        let clutter_count = clutter_rng.poisson(cfg.clutter_rate);
        for _ in 0..clutter_count {
            let w = clutter_rng
                .uniform_range(cfg.object_size_range.0, cfg.object_size_range.1);
            let h = clutter_rng
                .uniform_range(cfg.object_size_range.0, cfg.object_size_range.1);
            let x = clutter_rng.uniform_range(0.0, fw - w);
            let y = clutter_rng.uniform_range(0.0, fh - h);
            let conf = clutter_rng.uniform_range(0.05, 0.18);
            let bbox = BBox::new(x, y, w, h).expect("clutter box is positive");
            dets.push(Detection::new(t, bbox, conf).expect("valid clutter"));
        }
        det_frames.push(FrameDetections::new(t, dets)?);
        gt_frames.push(FrameDetections::new(t, gt)?);

        for obj in &mut objects {
            obj.advance(fw, fh, cfg.position_jitter, &mut motion_rng);
        }
        for occ in &mut occluders {
            occ.advance(fw, fh, cfg.position_jitter, &mut motion_rng);
        }
    }
    let sample = SequenceSample::new(det_frames, Some(images))?;
    Ok((sample, gt_frames))
}

/// Hand-built adversarial scene: two distinctly colored objects approach head
/// on, meet, and reverse direction, with both detections missing exactly at
/// the meeting frame. Extrapolated motion then lands each track on the other
/// object, so overlap-based matching swaps the identities while appearance
/// matching keeps them. Returns the sample (images + detections) and the
/// ground truth.
pub fn crossing_sequence() -> (SequenceSample, Vec<FrameDetections>) {
    const W: usize = 192;
    const H: usize = 96;
    const T: u32 = 15;
    const MEET: u32 = 8;
    const SPEED: f64 = 8.0;
    const SIZE: f64 = 20.0;
    let mid_x = 86.0; // left edge when centered at the meeting point
    let colors = [hsv_to_rgb(0.0, 0.85, 0.9), hsv_to_rgb(180.0, 0.85, 0.9)];
    let ys = [30.0, 40.0];

    let mut det_frames = Vec::new();
    let mut gt_frames = Vec::new();
    let mut images = Vec::new();
    for t in 1..=T {
        let offset = SPEED * (t as f64 - MEET as f64).abs();
        let xs = [mid_x - offset, mid_x + offset];
        let mut image = RgbImage::filled(W, H, [12, 14, 18]);
        for i in 0..2 {
            image.fill_rect(xs[i], ys[i], SIZE, SIZE, colors[i]);
        }
        let mut gt = Vec::new();
        let mut dets = Vec::new();
        for i in 0..2 {
            let bbox = BBox::new(xs[i], ys[i], SIZE, SIZE).unwrap();
            gt.push(
                Detection::new(t, bbox, 1.0)
                    .unwrap()
                    .with_track_id(i as u32 + 1),
            );
            if t != MEET {
                dets.push(Detection::new(t, bbox, 0.9).unwrap());
            }
        }
        gt_frames.push(FrameDetections::new(t, gt).unwrap());
        det_frames.push(FrameDetections::new(t, dets).unwrap());
        images.push(image);
    }
    let sample = SequenceSample::new(det_frames, Some(images))
        .expect("constructed scene is well-formed");
    (sample, gt_frames)
}

/// Dataset directory manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_frames: usize,
    pub width: usize,
    pub height: usize,
    /// Frame image paths relative to the dataset directory, in frame order.
    pub frames: Vec<String>,
}

/// Writes a generated sequence as a dataset directory: `manifest.json`,
/// `frames/%06d.ppm`, `gt.txt`, and `det.txt`.
pub fn write_dataset(
    dir: &Path,
    sample: &SequenceSample,
    gt: &[FrameDetections],
) -> Result<()> {
    let images = sample.images.as_ref().ok_or_else(|| {
        Error::Invalid("dataset writing requires rendered images".into())
    })?;
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut manifest = DatasetManifest {
        num_frames: sample.frames.len(),
        width: images.first().map_or(0, |im| im.width),
        height: images.first().map_or(0, |im| im.height),
        frames: Vec::with_capacity(images.len()),
    };
    for (frame, image) in sample.frames.iter().zip(images) {
        let name = format!("frames/{:06}.ppm", frame.frame);
        image.save_ppm(&dir.join(&name))?;
        manifest.frames.push(name);
    }
    let manifest_path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Invalid(format!("manifest serialization failed: {e}")))?;
    std::fs::write(&manifest_path, body).map_err(|e| Error::io(&manifest_path, e))?;
    write_mot_file(&frames_to_rows(gt)?, &dir.join("gt.txt"))?;
    write_det_file(&sample.frames, &dir.join("det.txt"))?;
    Ok(())
}

/// Expands a sparse per-frame list to cover `1..=num_frames`, inserting empty
/// frames where no detections exist, so frames stay aligned with images.
pub fn fill_missing_frames(
    frames: Vec<FrameDetections>,
    num_frames: usize,
) -> Vec<FrameDetections> {
    let mut by_frame: std::collections::BTreeMap<u32, FrameDetections> =
        frames.into_iter().map(|f| (f.frame, f)).collect();
    (1..=num_frames as u32)
        .map(|t| by_frame.remove(&t).unwrap_or_else(|| FrameDetections::empty(t)))
        .collect()
}

/// Loads a dataset directory written by [`write_dataset`]: the sample holds
/// the detector output (aligned to every frame) plus images, and the ground
/// truth comes back separately.
pub fn load_dataset(dir: &Path) -> Result<(SequenceSample, Vec<FrameDetections>)> {
    let manifest_path = dir.join("manifest.json");
    let body = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&body)
        .map_err(|e| Error::parse(&manifest_path, 0, format!("bad manifest: {e}")))?;
    if manifest.frames.len() != manifest.num_frames {
        return Err(Error::Invalid(format!(
            "manifest lists {} frames but declares {}",
            manifest.frames.len(),
            manifest.num_frames
        )));
    }
    let mut images = Vec::with_capacity(manifest.frames.len());
    for name in &manifest.frames {
        let image = RgbImage::load_ppm(&dir.join(name))?;
        if image.width != manifest.width || image.height != manifest.height {
            return Err(Error::Invalid(format!(
                "frame {name} is {}x{}, manifest says {}x{}",
                image.width, image.height, manifest.width, manifest.height
            )));
        }
        images.push(image);
    }
    let dets = parse_mot_file(&dir.join("det.txt"))?;
    let det_frames = fill_missing_frames(dets, manifest.num_frames);
    let gt = parse_mot_file(&dir.join("gt.txt"))?;
    let gt_frames = fill_missing_frames(gt, manifest.num_frames);
    let sample = SequenceSample::new(det_frames, Some(images))?;
    Ok((sample, gt_frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> SyntheticConfig {
        SyntheticConfig {
            num_objects: 3,
            num_frames: 10,
            occluder_count: 0,
            appearance_noise: 0.0,
            detector_dropout: 0.0,
            clutter_rate: 0.0,
            box_noise: 0.0,
            position_jitter: 0.0,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn validation_rejects_oversized_objects_and_short_sequences() {
        assert!(SyntheticConfig::default().validate().is_ok());
        let too_big = SyntheticConfig {
            object_size_range: (16.0, 300.0),
            ..SyntheticConfig::default()
        };
        assert!(too_big.validate().is_err());
        let too_short = SyntheticConfig {
            num_frames: 1,
            ..SyntheticConfig::default()
        };
        assert!(too_short.validate().is_err());
    }

    #[test]
    fn noiseless_scene_detects_every_object_every_frame() {
        let cfg = quiet_config();
        let (sample, gt) = generate_synthetic(&cfg).unwrap();
        assert_eq!(sample.frames.len(), 10);
        assert_eq!(gt.len(), 10);
        for (dets, gts) in sample.frames.iter().zip(&gt) {
            assert_eq!(dets.detections.len(), 3);
            assert_eq!(gts.detections.len(), 3);
            let ids: Vec<u32> = gts
                .detections
                .iter()
                .map(|d| d.track_id.unwrap())
                .collect();
            assert_eq!(ids, vec![1, 2, 3]);
            // Zero box noise: detector boxes coincide with the ground truth.
            for (d, g) in dets.detections.iter().zip(&gts.detections) {
                assert!((d.bbox.x - g.bbox.x).abs() < 1e-9);
                assert!((d.bbox.width - g.bbox.width).abs() < 1e-9);
                assert!(d.track_id.is_none());
                assert!(d.confidence >= 0.8);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical_different_seed_differs() {
        let cfg = SyntheticConfig::default();
        let (a, gt_a) = generate_synthetic(&cfg).unwrap();
        let (b, gt_b) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(gt_a, gt_b);
        let ia = a.images.as_ref().unwrap();
        let ib = b.images.as_ref().unwrap();
        assert!(ia
            .iter()
            .zip(ib)
            .all(|(x, y)| x.data == y.data && x.width == y.width));
        let (c, _) = generate_synthetic(&SyntheticConfig {
            seed: 8,
            ..cfg
        })
        .unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn dropout_rate_is_reproduced_empirically() {
        let cfg = SyntheticConfig {
            num_objects: 1,
            num_frames: 1000,
            detector_dropout: 0.5,
            occluder_count: 0,
            clutter_rate: 0.0,
            ..SyntheticConfig::default()
        };
        let (sample, _) = generate_synthetic(&cfg).unwrap();
        let present: usize = sample.frames.iter().map(|f| f.detections.len()).sum();
        let missing_rate = 1.0 - present as f64 / 1000.0;
        assert!(
            (missing_rate - 0.5).abs() < 0.05,
            "missing rate {missing_rate}"
        );
    }

    #[test]
    fn clutter_is_unidentified_and_low_confidence() {
        let cfg = SyntheticConfig {
            num_objects: 1,
            num_frames: 50,
            clutter_rate: 2.0,
            occluder_count: 0,
            detector_dropout: 0.0,
            ..SyntheticConfig::default()
        };
        let (sample, _) = generate_synthetic(&cfg).unwrap();
        let clutter: Vec<&Detection> = sample
            .frames
            .iter()
            .flat_map(|f| &f.detections)
            .filter(|d| d.confidence < 0.5)
            .collect();
        assert!(clutter.len() > 30, "expected clutter, got {}", clutter.len());
        assert!(clutter.iter().all(|d| d.track_id.is_none()));
        let true_dets = sample
            .frames
            .iter()
            .flat_map(|f| &f.detections)
            .filter(|d| d.confidence >= 0.5)
            .count();
        assert_eq!(true_dets, 50);
    }

    #[test]
    fn total_occlusion_suppresses_detections() {
        let gt_box = BBox::new(10.0, 10.0, 20.0, 20.0).unwrap();
        let occluder = BBox::new(5.0, 5.0, 40.0, 40.0).unwrap();
        assert_eq!(max_occlusion_fraction(&gt_box, &[occluder]), 1.0);
        let partial = BBox::new(20.0, 10.0, 20.0, 20.0).unwrap();
        assert!((max_occlusion_fraction(&gt_box, &[partial]) - 0.5).abs() < 1e-12);

        // Aggressive drop threshold: any occluder touch suppresses the box,
        // so a scene with several large occluders must lose detections.
        let cfg = SyntheticConfig {
            num_objects: 3,
            num_frames: 30,
            occluder_count: 3,
            occlusion_drop_overlap: 0.0,
            detector_dropout: 0.0,
            clutter_rate: 0.0,
            ..SyntheticConfig::default()
        };
        let (sample, gt) = generate_synthetic(&cfg).unwrap();
        let dets: usize = sample.frames.iter().map(|f| f.detections.len()).sum();
        let gts: usize = gt.iter().map(|f| f.detections.len()).sum();
        assert!(dets < gts, "expected occlusion drops ({dets} vs {gts})");
    }

    #[test]
    fn occluded_detections_have_reduced_confidence() {
        let cfg = SyntheticConfig {
            num_objects: 4,
            num_frames: 40,
            occluder_count: 2,
            occlusion_drop_overlap: 0.95,
            detector_dropout: 0.0,
            clutter_rate: 0.0,
            box_noise: 0.0,
            ..SyntheticConfig::default()
        };
        let (sample, _) = generate_synthetic(&cfg).unwrap();
        let min_conf = sample
            .frames
            .iter()
            .flat_map(|f| &f.detections)
            .map(|d| d.confidence)
            .fold(1.0, f64::min);
        assert!(
            min_conf < 0.8,
            "expected at least one confidence dip, min was {min_conf}"
        );
    }

    #[test]
    fn brightness_ramp_brightens_later_frames() {
        let cfg = SyntheticConfig {
            brightness_ramp: 0.5,
            appearance_noise: 0.0,
            ..SyntheticConfig::default()
        };
        let (sample, _) = generate_synthetic(&cfg).unwrap();
        let images = sample.images.as_ref().unwrap();
        let mean = |im: &RgbImage| {
            im.data.iter().map(|&b| b as f64).sum::<f64>() / im.data.len() as f64
        };
        assert!(mean(images.last().unwrap()) > mean(&images[0]) + 1.0);
    }

    #[test]
    fn objects_stay_inside_the_image() {
        let cfg = SyntheticConfig {
            num_objects: 5,
            num_frames: 200,
            speed_range: (4.0, 9.0),
            position_jitter: 0.5,
            ..SyntheticConfig::default()
        };
        let (_, gt) = generate_synthetic(&cfg).unwrap();
        let (w, h) = cfg.image_size;
        for frame in &gt {
            for d in &frame.detections {
                assert!(d.bbox.x >= 0.0 && d.bbox.y >= 0.0);
                assert!(d.bbox.right() <= w as f64 + 1e-9);
                assert!(d.bbox.bottom() <= h as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn crossing_scene_has_gap_at_meeting_frame() {
        let (sample, gt) = crossing_sequence();
        assert_eq!(sample.frames.len(), 15);
        assert_eq!(sample.frames[7].detections.len(), 0);
        assert!(sample
            .frames
            .iter()
            .enumerate()
            .all(|(i, f)| i == 7 || f.detections.len() == 2));
        // The two objects coincide horizontally at the meeting frame.
        let meet = &gt[7].detections;
        assert_eq!(meet[0].bbox.x, meet[1].bbox.x);
        // Approach speed is constant before the meeting.
        let dx = gt[1].detections[0].bbox.x - gt[0].detections[0].bbox.x;
        assert_eq!(dx, 8.0);
        let dx_after = gt[9].detections[0].bbox.x - gt[8].detections[0].bbox.x;
        assert_eq!(dx_after, -8.0);
    }

    #[test]
    fn dataset_round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            num_objects: 2,
            num_frames: 5,
            detector_dropout: 0.3,
            seed: 11,
            ..SyntheticConfig::default()
        };
        let (sample, gt) = generate_synthetic(&cfg).unwrap();
        write_dataset(dir.path(), &sample, &gt).unwrap();
        let (loaded, loaded_gt) = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.frames.len(), sample.frames.len());
        assert_eq!(loaded_gt.len(), gt.len());
        for (a, b) in sample.frames.iter().zip(&loaded.frames) {
            assert_eq!(a.frame, b.frame);
            assert_eq!(a.detections.len(), b.detections.len());
            for (x, y) in a.detections.iter().zip(&b.detections) {
                // File format rounds coordinates to 2 and confidence to 4
                // decimal places.
                assert!((x.bbox.x - y.bbox.x).abs() <= 0.005 + 1e-12);
                assert!((x.confidence - y.confidence).abs() <= 5e-5 + 1e-12);
            }
        }
        let original_images = sample.images.as_ref().unwrap();
        let loaded_images = loaded.images.as_ref().unwrap();
        assert!(original_images
            .iter()
            .zip(loaded_images)
            .all(|(a, b)| a.data == b.data));
        for (a, b) in gt.iter().zip(&loaded_gt) {
            for (x, y) in a.detections.iter().zip(&b.detections) {
                assert_eq!(x.track_id, y.track_id);
            }
        }
    }
}
