//! Reading and writing the MOTChallenge comma-separated text format.
//!
//! Each line is `frame,id,bb_left,bb_top,bb_width,bb_height,conf[,...]` with
//! at least seven fields; trailing fields are ignored on read and written as
//! `-1,-1,-1` placeholders. An id of `-1` marks a detection without identity.

use crate::error::{Error, Result};
use crate::types::{BBox, Detection, FrameDetections};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// One output line of a tracker or annotator: an identified box on a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub frame: u32,
    pub track_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

fn parse_line(path: &Path, line_no: usize, line: &str) -> Result<Detection> {
    let err = |msg: String| Error::parse(path, line_no, msg);
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 7 {
        return Err(err(format!("expected at least 7 fields, got {}", fields.len())));
    }
    let frame: u32 = fields[0]
        .parse()
        .map_err(|_| err(format!("bad frame index {:?}", fields[0])))?;
    if frame == 0 {
        return Err(err("frame indices are 1-based".into()));
    }
    let id: i64 = fields[1]
        .parse()
        .map_err(|_| err(format!("bad track id {:?}", fields[1])))?;
    let track_id = match id {
        -1 => None,
        i if i >= 1 && i <= u32::MAX as i64 => Some(i as u32),
        _ => return Err(err(format!("track id must be -1 or >= 1, got {id}"))),
    };
    let num = |idx: usize, name: &str| -> Result<f64> {
        let v: f64 = fields[idx]
            .parse()
            .map_err(|_| err(format!("bad {name} {:?}", fields[idx])))?;
        if !v.is_finite() {
            return Err(err(format!("non-finite {name}")));
        }
        Ok(v)
    };
    let x = num(2, "bb_left")?;
    let y = num(3, "bb_top")?;
    let w = num(4, "bb_width")?;
    let h = num(5, "bb_height")?;
    if w <= 0.0 || h <= 0.0 {
        return Err(err(format!("non-positive box dimensions {w}x{h}")));
    }
    let conf = num(6, "confidence")?;
    if !(0.0..=1.0).contains(&conf) {
        return Err(err(format!("confidence {conf} outside [0, 1]")));
    }
    Ok(Detection {
        frame,
        bbox: BBox {
            x,
            y,
            width: w,
            height: h,
        },
        confidence: conf,
        class_id: 1,
        track_id,
    })
}

/// Parse a MOT-format file into frames sorted by index, preserving file order
/// within each frame. Malformed lines fail with their 1-based line number.
pub fn parse_mot_file(path: &Path) -> Result<Vec<FrameDetections>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mot_str(&content, path)
}

/// Parse MOT-format text; `path` is used only for error messages.
pub fn parse_mot_str(content: &str, path: &Path) -> Result<Vec<FrameDetections>> {
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let det = parse_line(path, i + 1, line)?;
        by_frame.entry(det.frame).or_default().push(det);
    }
    Ok(by_frame
        .into_iter()
        .map(|(frame, detections)| FrameDetections { frame, detections })
        .collect())
}

fn format_row(out: &mut String, row: &ResultRow) {
    writeln!(
        out,
        "{},{},{:.2},{:.2},{:.2},{:.2},{:.4},-1,-1,-1",
        row.frame,
        row.track_id,
        row.bbox.x,
        row.bbox.y,
        row.bbox.width,
        row.bbox.height,
        row.confidence
    )
    .expect("string formatting cannot fail");
}

/// Serialize result rows to MOT format: coordinates with 2 decimals,
/// confidence with 4. Rows must have frame and track id >= 1.
pub fn write_mot_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        if row.frame == 0 || row.track_id == 0 {
            return Err(Error::Invalid(format!(
                "result rows need 1-based frame and track id, got frame {} id {}",
                row.frame, row.track_id
            )));
        }
        format_row(&mut out, row);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Flatten identified detections into result rows (frame order, file-ready).
/// Detections without a track id are rejected.
pub fn frames_to_rows(frames: &[FrameDetections]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for f in frames {
        for d in &f.detections {
            let track_id = d.track_id.ok_or_else(|| {
                Error::Invalid(format!("detection on frame {} has no track id", f.frame))
            })?;
            rows.push(ResultRow {
                frame: d.frame,
                track_id,
                bbox: d.bbox,
                confidence: d.confidence,
            });
        }
    }
    Ok(rows)
}

/// Serialize detections without identities (`id` column written as -1), the
/// interchange form for raw detector output.
pub fn write_det_file(frames: &[FrameDetections], path: &Path) -> Result<()> {
    let mut out = String::new();
    for f in frames {
        for d in &f.detections {
            let id = d.track_id.map_or(-1, |i| i as i64);
            writeln!(
                out,
                "{},{},{:.2},{:.2},{:.2},{:.2},{:.4},-1,-1,-1",
                d.frame, id, d.bbox.x, d.bbox.y, d.bbox.width, d.bbox.height, d.confidence
            )
            .expect("string formatting cannot fail");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
