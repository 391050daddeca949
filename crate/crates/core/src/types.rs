//! Core data model: boxes, detections, frames, and sequences.
//!
//! Detection ordering is load-bearing: detection `j` of a frame is row/column
//! `j` of every matrix derived from that frame downstream, so the order in a
//! [`FrameDetections`] must never be disturbed.

use crate::error::{Error, Result};
use crate::pixmap::RgbImage;
use serde::{Deserialize, Serialize};

/// Axis-aligned bounding box in pixel coordinates, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    /// Construct a box; width and height must be strictly positive.
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::Invalid(format!(
                "box dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(BBox {
            x,
            y,
            width,
            height,
        })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    /// Area of the intersection with `other` (0 when disjoint).
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let h = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        w * h
    }

    /// Intersection over union, in [0, 1].
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// One detector output: a box with a confidence, tied to a frame.
///
/// `track_id` carries the identity column of MOT-format files: the annotated
/// identity in ground-truth and synthetic data, the hypothesis identity in
/// tracker result files, and `None` for raw detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// 1-based frame index.
    pub frame: u32,
    pub bbox: BBox,
    /// Confidence in [0, 1].
    pub confidence: f64,
    pub class_id: u32,
    pub track_id: Option<u32>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, confidence: f64) -> Result<Self> {
        if frame == 0 {
            return Err(Error::Invalid("frame indices are 1-based".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Detection {
            frame,
            bbox,
            confidence,
            class_id: 1,
            track_id: None,
        })
    }

    pub fn with_track_id(mut self, id: u32) -> Self {
        self.track_id = Some(id);
        self
    }
}

/// All detections of one frame, in a stable order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    /// 1-based frame index.
    pub frame: u32,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn new(frame: u32, detections: Vec<Detection>) -> Result<Self> {
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::Invalid(format!(
                "detection for frame {} in frame {} group",
                d.frame, frame
            )));
        }
        Ok(FrameDetections { frame, detections })
    }

    pub fn empty(frame: u32) -> Self {
        FrameDetections {
            frame,
            detections: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// A run of consecutive frames plus (optionally) their rendered images; the
/// unit the training loss is computed over.
#[derive(Debug, Clone)]
pub struct SequenceSample {
    pub frames: Vec<FrameDetections>,
    /// One RGB buffer per frame when images are available.
    pub images: Option<Vec<RgbImage>>,
}

impl SequenceSample {
    pub fn new(frames: Vec<FrameDetections>, images: Option<Vec<RgbImage>>) -> Result<Self> {
        if frames.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::Invalid(
                "sequence frame indices must be strictly increasing".into(),
            ));
        }
        if let Some(imgs) = &images {
            if imgs.len() != frames.len() {
                return Err(Error::Shape(format!(
                    "{} images for {} frames",
                    imgs.len(),
                    frames.len()
                )));
            }
        }
        Ok(SequenceSample { frames, images })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Keep only detections with confidence at or above `threshold`, preserving
/// frame structure and within-frame order.
pub fn filter_by_confidence(frames: &[FrameDetections], threshold: f64) -> Vec<FrameDetections> {
    frames
        .iter()
        .map(|f| FrameDetections {
            frame: f.frame,
            detections: f
                .detections
                .iter()
                .filter(|d| d.confidence >= threshold)
                .cloned()
                .collect(),
        })
        .collect()
}
