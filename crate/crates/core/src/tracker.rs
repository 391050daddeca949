//! Online two-stage tracking-by-detection with motion and appearance cues.
//!
//! Detections are split by confidence: high-confidence boxes are associated
//! first against all open tracks, then low-confidence boxes are offered to the
//! tracks left over, which recovers objects whose detector score dipped (e.g.
//! under partial occlusion). Each association stage can cost pairs by box
//! overlap, appearance similarity, or their weighted combination, and matched
//! tracks fold the new appearance into an exponential moving average.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::embedder::{embed, extract_crop, CropFeature, EmbedderParams};
use crate::error::{Error, Result};
use crate::hungarian::hungarian;
use crate::kalman::{state_bbox, KalmanFilter, KalmanState};
use crate::mot_io::ResultRow;
use crate::pixmap::RgbImage;
use crate::types::{BBox, FrameDetections};

/// Pairwise cost used by one association stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageCost {
    /// Box-overlap similarity only.
    Iou,
    /// Appearance (cosine) similarity only.
    Reid,
    /// Overlap plus `omega_reid`-weighted appearance.
    Combined,
}

/// Lifecycle phase of a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    /// Created but not yet emitting output (unused: tracks confirm at birth).
    Tentative,
    /// Matched in the current frame; eligible for output.
    Confirmed,
    /// Unmatched for at least one frame but still open for association.
    Lost,
    /// Aged out; never revived and its id is never reused.
    Removed,
}

/// One tracked object.
#[derive(Debug, Clone)]
pub struct Track {
    /// Stable id, unique within a tracker instance, assigned from 1 upward.
    pub id: u32,
    /// Motion belief.
    pub state: KalmanState,
    /// Exponential moving average of matched appearance embeddings.
    pub reid_feature: Array1<f64>,
    /// Frames since the last match (0 = matched this frame).
    pub age: u32,
    /// Total number of matched frames.
    pub hits: u32,
    /// Lifecycle phase.
    pub status: TrackStatus,
    /// Output boxes recorded so far, as (frame, box).
    pub box_history: Vec<(u32, BBox)>,
}

/// Tracker behavior knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Detections at or above this confidence join the first stage.
    pub high_thresh: f64,
    /// Detections at or above this (but below `high_thresh`) join the second
    /// stage; anything lower is discarded.
    pub low_thresh: f64,
    /// Minimum confidence for an unmatched first-stage detection to start a
    /// new track.
    pub new_track_thresh: f64,
    /// Weight of the appearance term in the combined cost.
    pub omega_reid: f64,
    /// Pairs below this overlap are forbidden whenever the stage cost
    /// includes overlap; ignored for the pure-appearance cost.
    pub match_iou_min: f64,
    /// A track unmatched for more than this many frames is removed.
    pub max_age: u32,
    /// EMA weight of the newest embedding in the appearance update.
    pub ema_alpha: f64,
    /// Cost used by the first association stage.
    pub stage1_cost: StageCost,
    /// Cost used by the second association stage.
    pub stage2_cost: StageCost,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            high_thresh: 0.6,
            low_thresh: 0.1,
            new_track_thresh: 0.7,
            omega_reid: 0.5,
            match_iou_min: 0.1,
            max_age: 30,
            ema_alpha: 0.9,
            stage1_cost: StageCost::Combined,
            stage2_cost: StageCost::Combined,
        }
    }
}

impl TrackerConfig {
    /// Checks threshold ordering and ranges.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
            Ok(())
        };
        unit("high_thresh", self.high_thresh)?;
        unit("low_thresh", self.low_thresh)?;
        unit("new_track_thresh", self.new_track_thresh)?;
        unit("match_iou_min", self.match_iou_min)?;
        unit("ema_alpha", self.ema_alpha)?;
        if self.low_thresh >= self.high_thresh {
            return Err(Error::Config(format!(
                "low_thresh ({}) must be below high_thresh ({})",
                self.low_thresh, self.high_thresh
            )));
        }
        if !self.omega_reid.is_finite() || self.omega_reid < 0.0 {
            return Err(Error::Config(format!(
                "omega_reid must be a finite non-negative weight, got {}",
                self.omega_reid
            )));
        }
        Ok(())
    }

    /// True when either stage consults appearance embeddings.
    pub fn needs_appearance(&self) -> bool {
        self.stage1_cost != StageCost::Iou || self.stage2_cost != StageCost::Iou
    }
}

/// Cosine similarity, defined as 0 when either vector has (near-)zero norm.
pub fn cosine_similarity(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Similarity of a track to a detection: box overlap plus `omega`-weighted
/// appearance. Negate for use as an assignment cost.
pub fn combined_cost(
    track: &Track,
    det_box: &BBox,
    det_embedding: &Array1<f64>,
    omega: f64,
) -> f64 {
    let predicted = state_bbox(&track.state);
    predicted.iou(det_box) + omega * cosine_similarity(&track.reid_feature, det_embedding)
}

/// Stateful tracker; use one instance per sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    filter: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u32,
}

impl Tracker {
    /// New tracker with the default motion model.
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            filter: KalmanFilter::default(),
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    /// Currently open (non-removed) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// The configuration this tracker runs with.
    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Similarity of one track/detection pair under a stage cost, or `None`
    /// when the pair is forbidden.
    fn stage_similarity(
        &self,
        cost: StageCost,
        track: &Track,
        predicted: &BBox,
        det_box: &BBox,
        det_embedding: &Array1<f64>,
    ) -> Option<f64> {
        let iou = predicted.iou(det_box);
        let cos = || cosine_similarity(&track.reid_feature, det_embedding);
        match cost {
            StageCost::Iou => {
                if iou < self.config.match_iou_min {
                    return None;
                }
                Some(iou)
            }
            StageCost::Reid => {
                // Overlap gating is disabled for the pure-appearance cost;
                // non-positive similarity is rejected instead so unrelated
                // appearances cannot be matched just to fill the assignment.
                let c = cos();
                if c <= 0.0 {
                    return None;
                }
                Some(c)
            }
            StageCost::Combined => {
                if iou < self.config.match_iou_min {
                    return None;
                }
                Some(iou + self.config.omega_reid * cos())
            }
        }
    }

    /// Runs one association stage; returns (track index, detection index)
    /// matches. `det_indices` addresses rows of `embeddings` and entries of
    /// `frame.detections`.
    fn associate(
        &self,
        cost: StageCost,
        track_indices: &[usize],
        det_indices: &[usize],
        frame: &FrameDetections,
        embeddings: &Array2<f64>,
    ) -> Result<Vec<(usize, usize)>> {
        if track_indices.is_empty() || det_indices.is_empty() {
            return Ok(Vec::new());
        }
        let mut costs = Array2::<f64>::zeros((track_indices.len(), det_indices.len()));
        for (row, &ti) in track_indices.iter().enumerate() {
            let track = &self.tracks[ti];
            let predicted = state_bbox(&track.state);
            for (col, &di) in det_indices.iter().enumerate() {
                let det = &frame.detections[di];
                let embedding = embeddings.row(di).to_owned();
                costs[[row, col]] = match self.stage_similarity(
                    cost,
                    track,
                    &predicted,
                    &det.bbox,
                    &embedding,
                ) {
                    Some(sim) => -sim,
                    None => f64::INFINITY,
                };
            }
        }
        let pairs = hungarian(&costs)?;
        Ok(pairs
            .into_iter()
            .map(|(row, col)| (track_indices[row], det_indices[col]))
            .collect())
    }

    /// Folds a matched detection into a track and returns its output row.
    fn apply_match(
        &mut self,
        track_idx: usize,
        det_idx: usize,
        frame: &FrameDetections,
        embeddings: &Array2<f64>,
    ) -> Result<ResultRow> {
        let det = &frame.detections[det_idx];
        let track = &mut self.tracks[track_idx];
        track.state = self.filter.update(&track.state, &det.bbox)?;
        let x = embeddings.row(det_idx).to_owned();
        if x.dot(&x).sqrt() > 1e-12 {
            let alpha = self.config.ema_alpha;
            let mut blended = &track.reid_feature * (1.0 - alpha) + &x * alpha;
            let norm = blended.dot(&blended).sqrt();
            if norm > 1e-12 {
                blended /= norm;
                track.reid_feature = blended;
            }
        }
        track.age = 0;
        track.hits += 1;
        track.status = TrackStatus::Confirmed;
        track.box_history.push((frame.frame, det.bbox));
        Ok(ResultRow {
            frame: frame.frame,
            track_id: track.id,
            bbox: det.bbox,
            confidence: det.confidence,
        })
    }

    /// Starts a new confirmed track from an unmatched detection.
    fn spawn_track(
        &mut self,
        det_idx: usize,
        frame: &FrameDetections,
        embeddings: &Array2<f64>,
    ) -> ResultRow {
        let det = &frame.detections[det_idx];
        let mut feature = embeddings.row(det_idx).to_owned();
        let norm = feature.dot(&feature).sqrt();
        if norm > 1e-12 {
            feature /= norm;
        }
        let track = Track {
            id: self.next_id,
            state: self.filter.initiate(&det.bbox),
            reid_feature: feature,
            age: 0,
            hits: 1,
            status: TrackStatus::Confirmed,
            box_history: vec![(frame.frame, det.bbox)],
        };
        self.next_id += 1;
        let row = ResultRow {
            frame: frame.frame,
            track_id: track.id,
            bbox: det.bbox,
            confidence: det.confidence,
        };
        self.tracks.push(track);
        row
    }

    /// Processes one frame: two-stage association, track bookkeeping, and the
    /// frame's output rows (matched or newborn tracks only, ordered by id).
    pub fn step(
        &mut self,
        frame: &FrameDetections,
        embeddings: &Array2<f64>,
    ) -> Result<Vec<ResultRow>> {
        if embeddings.nrows() != frame.detections.len() {
            return Err(Error::Shape(format!(
                "embedding rows ({}) must match detections ({})",
                embeddings.nrows(),
                frame.detections.len()
            )));
        }
        let high: Vec<usize> = (0..frame.detections.len())
            .filter(|&i| frame.detections[i].confidence >= self.config.high_thresh)
            .collect();
        let low: Vec<usize> = (0..frame.detections.len())
            .filter(|&i| {
                let c = frame.detections[i].confidence;
                c >= self.config.low_thresh && c < self.config.high_thresh
            })
            .collect();

        for track in &mut self.tracks {
            track.state = self.filter.predict(&track.state);
        }

        let all_tracks: Vec<usize> = (0..self.tracks.len()).collect();
        let stage1 = self.associate(
            self.config.stage1_cost,
            &all_tracks,
            &high,
            frame,
            embeddings,
        )?;
        let matched_tracks: Vec<usize> = stage1.iter().map(|&(t, _)| t).collect();
        let remaining_tracks: Vec<usize> = all_tracks
            .into_iter()
            .filter(|t| !matched_tracks.contains(t))
            .collect();
        let stage2 = self.associate(
            self.config.stage2_cost,
            &remaining_tracks,
            &low,
            frame,
            embeddings,
        )?;

        let mut rows = Vec::new();
        let mut matched_track_set = vec![false; self.tracks.len()];
        let mut matched_det_set = vec![false; frame.detections.len()];
        for &(t, d) in stage1.iter().chain(stage2.iter()) {
            matched_track_set[t] = true;
            matched_det_set[d] = true;
            rows.push(self.apply_match(t, d, frame, embeddings)?);
        }

        for (idx, track) in self.tracks.iter_mut().enumerate() {
            if !matched_track_set[idx] {
                track.age += 1;
                track.status = if track.age > self.config.max_age {
                    TrackStatus::Removed
                } else {
                    TrackStatus::Lost
                };
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Removed);

        for &d in &high {
            if !matched_det_set[d]
                && frame.detections[d].confidence >= self.config.new_track_thresh
            {
                rows.push(self.spawn_track(d, frame, embeddings));
            }
        }
        rows.sort_by_key(|r| r.track_id);
        Ok(rows)
    }
}

/// Per-frame appearance embeddings for a frame's detections, or an aligned
/// zero matrix when no stage consults appearance.
fn frame_embeddings(
    frame: &FrameDetections,
    image: &RgbImage,
    params: &EmbedderParams,
    needed: bool,
) -> Result<Array2<f64>> {
    if !needed || frame.detections.is_empty() {
        return Ok(Array2::zeros((frame.detections.len(), 1)));
    }
    let crops: Vec<CropFeature> = frame
        .detections
        .iter()
        .map(|det| {
            extract_crop(
                image,
                &det.bbox,
                params.config.patch_w,
                params.config.patch_h,
            )
        })
        .collect::<Result<_>>()?;
    embed(params, &crops)
}

/// Tracks a full detection sequence over its images, producing output rows in
/// frame order. Deterministic for fixed inputs.
pub fn track_sequence(
    frames: &[FrameDetections],
    images: &[RgbImage],
    params: &EmbedderParams,
    config: &TrackerConfig,
) -> Result<Vec<ResultRow>> {
    if frames.len() != images.len() {
        return Err(Error::Shape(format!(
            "{} detection frames vs {} images",
            frames.len(),
            images.len()
        )));
    }
    for pair in frames.windows(2) {
        if pair[1].frame <= pair[0].frame {
            return Err(Error::Invalid(
                "detection frames must be strictly increasing".into(),
            ));
        }
    }
    let mut tracker = Tracker::new(config.clone())?;
    let needed = config.needs_appearance();
    let mut rows = Vec::new();
    for (frame, image) in frames.iter().zip(images) {
        let embeddings = frame_embeddings(frame, image, params, needed)?;
        rows.extend(tracker.step(frame, &embeddings)?);
    }
    Ok(rows)
}
