//! Tracking evaluation: event-based counts (MOTA family), identity-level F1,
//! and the detection/association decomposition with its alpha sweep.
//!
//! All evaluators take ground truth and hypotheses as flat result rows and are
//! pure; to evaluate several sequences jointly, pool them with
//! [`pool_sequences`] (which makes frames and ids disjoint) and run one
//! evaluation, so ratios are always computed from summed counts.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::hungarian::hungarian;
use crate::mot_io::ResultRow;
use crate::types::BBox;

/// Default overlap threshold for event-based and identity matching.
pub const DEFAULT_IOU_THRESH: f64 = 0.5;

/// Overlap thresholds of the alpha sweep: 0.05, 0.10, …, 0.95.
pub fn alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Matched (gt id, hypothesis id) pairs of one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMatches {
    pub frame: u32,
    pub pairs: Vec<(u32, u32)>,
}

/// Event-based report: error counts and trajectory coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearReport {
    /// 1 − (FP + FN + IDSw) / gt_total; 1.0 for empty ground truth with no
    /// false positives.
    pub mota: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    /// Trajectories matched in ≥ 80% of their frames.
    pub mostly_tracked: u64,
    /// Trajectories matched in ≤ 20% of their frames.
    pub mostly_lost: u64,
    /// Total ground-truth boxes.
    pub gt_total: u64,
    /// Per-frame correspondence log.
    pub frame_matches: Vec<FrameMatches>,
}

/// Identity-level report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfReport {
    /// 2·IDTP / (2·IDTP + IDFP + IDFN); 1.0 when both inputs are empty.
    pub idf1: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

/// One point of the alpha sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotaAlpha {
    pub alpha: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub tp: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
}

/// Detection/association decomposition report; scalars are means over the
/// alpha grid and `hota(α) = sqrt(deta(α)·assa(α))` at each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotaReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    /// Mean overlap of true-positive matches.
    pub loca: f64,
    pub per_alpha: Vec<HotaAlpha>,
}

/// All three reports of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub clear: ClearReport,
    pub idf1: IdfReport,
    pub hota: HotaReport,
}

/// Boxes of one side of one frame, ordered by id for determinism.
type FrameSide = Vec<(u32, BBox)>;

/// Groups both inputs by frame (sorted), each side ordered by id. Duplicate
/// (frame, id) rows keep the first occurrence.
fn by_frame(gt: &[ResultRow], hyp: &[ResultRow]) -> BTreeMap<u32, (FrameSide, FrameSide)> {
    let mut frames: BTreeMap<u32, (FrameSide, FrameSide)> = BTreeMap::new();
    for row in gt {
        let side = &mut frames.entry(row.frame).or_default().0;
        if !side.iter().any(|(id, _)| *id == row.track_id) {
            side.push((row.track_id, row.bbox));
        }
    }
    for row in hyp {
        let side = &mut frames.entry(row.frame).or_default().1;
        if !side.iter().any(|(id, _)| *id == row.track_id) {
            side.push((row.track_id, row.bbox));
        }
    }
    for (gts, hyps) in frames.values_mut() {
        gts.sort_by_key(|(id, _)| *id);
        hyps.sort_by_key(|(id, _)| *id);
    }
    frames
}

/// Event-based evaluation with the standard per-frame matching: previous-frame
/// correspondences persist while still above `iou_thresh`, remaining boxes are
/// matched by maximum-cardinality, maximum-overlap assignment, and an identity
/// switch is counted whenever a trajectory's matched hypothesis id differs
/// from its last known one.
pub fn evaluate_clear(gt: &[ResultRow], hyp: &[ResultRow], iou_thresh: f64) -> ClearReport {
    let frames = by_frame(gt, hyp);
    let mut last_match: BTreeMap<u32, u32> = BTreeMap::new();
    let mut false_positives = 0u64;
    let mut false_negatives = 0u64;
    let mut id_switches = 0u64;
    let mut gt_total = 0u64;
    let mut gt_frames: BTreeMap<u32, u64> = BTreeMap::new();
    let mut gt_matched: BTreeMap<u32, u64> = BTreeMap::new();
    let mut frame_matches = Vec::new();

    for (&frame, (gts, hyps)) in &frames {
        gt_total += gts.len() as u64;
        for (id, _) in gts {
            *gt_frames.entry(*id).or_default() += 1;
        }
        let mut gt_used = vec![false; gts.len()];
        let mut hyp_used = vec![false; hyps.len()];
        let mut pairs: Vec<(u32, u32)> = Vec::new();

        // Continuity: keep last frame's correspondence while it still holds.
        for (gi, (gid, gbox)) in gts.iter().enumerate() {
            if let Some(&hid) = last_match.get(gid) {
                if let Some(hi) = hyps
                    .iter()
                    .position(|(id, _)| *id == hid)
                    .filter(|&hi| !hyp_used[hi])
                {
                    if gbox.iou(&hyps[hi].1) >= iou_thresh {
                        gt_used[gi] = true;
                        hyp_used[hi] = true;
                        pairs.push((*gid, hid));
                    }
                }
            }
        }

        // Assignment over the remaining boxes, maximizing matches then total
        // overlap (forbidden below the threshold).
        let free_g: Vec<usize> = (0..gts.len()).filter(|&i| !gt_used[i]).collect();
        let free_h: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_used[i]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let mut cost = Array2::<f64>::zeros((free_g.len(), free_h.len()));
            for (r, &gi) in free_g.iter().enumerate() {
                for (c, &hi) in free_h.iter().enumerate() {
                    let iou = gts[gi].1.iou(&hyps[hi].1);
                    cost[[r, c]] = if iou >= iou_thresh { -iou } else { f64::INFINITY };
                }
            }
            for (r, c) in hungarian(&cost).expect("finite costs") {
                let (gid, _) = gts[free_g[r]];
                let (hid, _) = hyps[free_h[c]];
                gt_used[free_g[r]] = true;
                hyp_used[free_h[c]] = true;
                pairs.push((gid, hid));
            }
        }

        false_negatives += gt_used.iter().filter(|m| !**m).count() as u64;
        false_positives += hyp_used.iter().filter(|m| !**m).count() as u64;
        pairs.sort_unstable();
        for &(gid, hid) in &pairs {
            if let Some(&prev) = last_match.get(&gid) {
                if prev != hid {
                    id_switches += 1;
                }
            }
            last_match.insert(gid, hid);
            *gt_matched.entry(gid).or_default() += 1;
        }
        frame_matches.push(FrameMatches { frame, pairs });
    }

    let mut mostly_tracked = 0u64;
    let mut mostly_lost = 0u64;
    for (id, &present) in &gt_frames {
        let matched = gt_matched.get(id).copied().unwrap_or(0);
        let coverage = matched as f64 / present as f64;
        if coverage >= 0.8 {
            mostly_tracked += 1;
        } else if coverage <= 0.2 {
            mostly_lost += 1;
        }
    }

    let errors = false_positives + false_negatives + id_switches;
    let mota = if gt_total > 0 {
        1.0 - errors as f64 / gt_total as f64
    } else if errors == 0 {
        1.0
    } else {
        0.0
    };
    ClearReport {
        mota,
        false_positives,
        false_negatives,
        id_switches,
        mostly_tracked,
        mostly_lost,
        gt_total,
        frame_matches,
    }
}

/// Identity-level evaluation: one global bipartite matching between gt and
/// hypothesis trajectories maximizes the number of frame-wise overlaps
/// (IDTP); every unmatched gt box counts toward IDFN and every unmatched
/// hypothesis box toward IDFP.
pub fn evaluate_idf1(gt: &[ResultRow], hyp: &[ResultRow], iou_thresh: f64) -> IdfReport {
    let frames = by_frame(gt, hyp);
    let mut gt_ids: BTreeMap<u32, u64> = BTreeMap::new();
    let mut hyp_ids: BTreeMap<u32, u64> = BTreeMap::new();
    let mut overlap: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (gts, hyps) in frames.values() {
        for (gid, gbox) in gts {
            *gt_ids.entry(*gid).or_default() += 1;
            for (hid, hbox) in hyps {
                if gbox.iou(hbox) >= iou_thresh {
                    *overlap.entry((*gid, *hid)).or_default() += 1;
                }
            }
        }
        for (hid, _) in hyps {
            *hyp_ids.entry(*hid).or_default() += 1;
        }
    }
    let g_index: Vec<u32> = gt_ids.keys().copied().collect();
    let h_index: Vec<u32> = hyp_ids.keys().copied().collect();
    let mut idtp = 0u64;
    if !g_index.is_empty() && !h_index.is_empty() {
        let mut cost = Array2::<f64>::zeros((g_index.len(), h_index.len()));
        for (r, gid) in g_index.iter().enumerate() {
            for (c, hid) in h_index.iter().enumerate() {
                let count = overlap.get(&(*gid, *hid)).copied().unwrap_or(0);
                cost[[r, c]] = -(count as f64);
            }
        }
        for (r, c) in hungarian(&cost).expect("finite costs") {
            idtp += overlap.get(&(g_index[r], h_index[c])).copied().unwrap_or(0);
        }
    }
    let gt_boxes: u64 = gt_ids.values().sum();
    let hyp_boxes: u64 = hyp_ids.values().sum();
    let idfn = gt_boxes - idtp;
    let idfp = hyp_boxes - idtp;
    let denom = 2 * idtp + idfp + idfn;
    let idf1 = if denom > 0 {
        2.0 * idtp as f64 / denom as f64
    } else {
        1.0
    };
    IdfReport {
        idf1,
        idtp,
        idfp,
        idfn,
    }
}

/// Detection/association evaluation over the alpha sweep. Each frame is
/// matched by maximum cardinality among pairs with overlap ≥ α, tie-broken by
/// the trajectory-pair alignment score (frame-wise overlap accumulated over
/// the whole sequence, Jaccard-normalized), so matches prefer the hypothesis
/// that follows the same object over time.
pub fn evaluate_hota(gt: &[ResultRow], hyp: &[ResultRow]) -> HotaReport {
    let frames = by_frame(gt, hyp);
    let mut gt_ids: BTreeMap<u32, u64> = BTreeMap::new();
    let mut hyp_ids: BTreeMap<u32, u64> = BTreeMap::new();
    for (gts, hyps) in frames.values() {
        for (gid, _) in gts {
            *gt_ids.entry(*gid).or_default() += 1;
        }
        for (hid, _) in hyps {
            *hyp_ids.entry(*hid).or_default() += 1;
        }
    }
    let g_pos: BTreeMap<u32, usize> =
        gt_ids.keys().enumerate().map(|(i, id)| (*id, i)).collect();
    let h_pos: BTreeMap<u32, usize> =
        hyp_ids.keys().enumerate().map(|(i, id)| (*id, i)).collect();
    let ng = g_pos.len();
    let nh = h_pos.len();

    // Pass 1: potential alignment mass per trajectory pair.
    let mut potential = Array2::<f64>::zeros((ng, nh));
    for (gts, hyps) in frames.values() {
        let sims: Vec<Vec<f64>> = gts
            .iter()
            .map(|(_, gbox)| hyps.iter().map(|(_, hbox)| gbox.iou(hbox)).collect())
            .collect();
        for (i, (gid, _)) in gts.iter().enumerate() {
            let row_sum: f64 = sims[i].iter().sum();
            for (j, (hid, _)) in hyps.iter().enumerate() {
                let col_sum: f64 = sims.iter().map(|row| row[j]).sum();
                let denom = row_sum + col_sum - sims[i][j];
                if denom > 1e-12 && sims[i][j] > 0.0 {
                    potential[[g_pos[gid], h_pos[hid]]] += sims[i][j] / denom;
                }
            }
        }
    }
    let mut alignment = Array2::<f64>::zeros((ng, nh));
    for (gid, &gi) in &g_pos {
        for (hid, &hj) in &h_pos {
            let denom =
                gt_ids[gid] as f64 + hyp_ids[hid] as f64 - potential[[gi, hj]];
            if denom > 1e-12 {
                alignment[[gi, hj]] = potential[[gi, hj]] / denom;
            }
        }
    }

    // Pass 2: per-alpha matching and counts.
    let alphas = alpha_grid();
    let mut per_alpha = Vec::with_capacity(alphas.len());
    let mut loc_sums = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let mut tp = 0u64;
        let mut fn_count = 0u64;
        let mut fp_count = 0u64;
        let mut loc_sum = 0.0f64;
        let mut matches = Array2::<u64>::zeros((ng, nh));
        for (gts, hyps) in frames.values() {
            let mut matched = 0u64;
            if !gts.is_empty() && !hyps.is_empty() {
                let mut cost = Array2::<f64>::zeros((gts.len(), hyps.len()));
                for (i, (gid, gbox)) in gts.iter().enumerate() {
                    for (j, (hid, hbox)) in hyps.iter().enumerate() {
                        let sim = gbox.iou(hbox);
                        cost[[i, j]] = if sim >= alpha - 1e-9 {
                            -(alignment[[g_pos[gid], h_pos[hid]]] * sim)
                        } else {
                            f64::INFINITY
                        };
                    }
                }
                for (i, j) in hungarian(&cost).expect("finite costs") {
                    matched += 1;
                    loc_sum += gts[i].1.iou(&hyps[j].1);
                    matches[[g_pos[&gts[i].0], h_pos[&hyps[j].0]]] += 1;
                }
            }
            tp += matched;
            fn_count += gts.len() as u64 - matched;
            fp_count += hyps.len() as u64 - matched;
        }
        let det_denom = tp + fn_count + fp_count;
        let deta = if det_denom > 0 {
            tp as f64 / det_denom as f64
        } else {
            0.0
        };
        // Association quality: mean over true positives of the Jaccard overlap
        // of the two trajectories they connect.
        let mut ass_sum = 0.0f64;
        for (gid, &gi) in &g_pos {
            for (hid, &hj) in &h_pos {
                let mc = matches[[gi, hj]];
                if mc > 0 {
                    let denom = gt_ids[gid] + hyp_ids[hid] - mc;
                    ass_sum += mc as f64 * (mc as f64 / denom as f64);
                }
            }
        }
        let assa = if tp > 0 { ass_sum / tp as f64 } else { 0.0 };
        loc_sums.push(loc_sum);
        per_alpha.push(HotaAlpha {
            alpha,
            hota: (deta * assa).sqrt(),
            deta,
            assa,
            tp,
            false_negatives: fn_count,
            false_positives: fp_count,
        });
    }
    let n = per_alpha.len() as f64;
    let hota = per_alpha.iter().map(|p| p.hota).sum::<f64>() / n;
    let deta = per_alpha.iter().map(|p| p.deta).sum::<f64>() / n;
    let assa = per_alpha.iter().map(|p| p.assa).sum::<f64>() / n;
    let total_tp: u64 = per_alpha.iter().map(|p| p.tp).sum();
    let loca = if total_tp > 0 {
        loc_sums.iter().sum::<f64>() / total_tp as f64
    } else {
        0.0
    };
    HotaReport {
        hota,
        deta,
        assa,
        loca,
        per_alpha,
    }
}

/// Runs all three evaluations at the default overlap threshold.
pub fn evaluate_all(gt: &[ResultRow], hyp: &[ResultRow]) -> EvaluationReport {
    EvaluationReport {
        clear: evaluate_clear(gt, hyp, DEFAULT_IOU_THRESH),
        idf1: evaluate_idf1(gt, hyp, DEFAULT_IOU_THRESH),
        hota: evaluate_hota(gt, hyp),
    }
}

/// Concatenates several (gt, hypothesis) sequences into one pooled pair with
/// disjoint frame ranges and id spaces, so a single evaluation sums their
/// counts without cross-sequence interaction.
pub fn pool_sequences(sequences: &[(Vec<ResultRow>, Vec<ResultRow>)]) -> (Vec<ResultRow>, Vec<ResultRow>) {
    let mut gt_out = Vec::new();
    let mut hyp_out = Vec::new();
    let mut frame_base = 0u32;
    let mut gt_id_base = 0u32;
    let mut hyp_id_base = 0u32;
    for (gt, hyp) in sequences {
        let mut max_frame = 0u32;
        let mut max_gt_id = 0u32;
        let mut max_hyp_id = 0u32;
        for row in gt {
            max_frame = max_frame.max(row.frame);
            max_gt_id = max_gt_id.max(row.track_id);
            gt_out.push(ResultRow {
                frame: row.frame + frame_base,
                track_id: row.track_id + gt_id_base,
                ..*row
            });
        }
        for row in hyp {
            max_frame = max_frame.max(row.frame);
            max_hyp_id = max_hyp_id.max(row.track_id);
            hyp_out.push(ResultRow {
                frame: row.frame + frame_base,
                track_id: row.track_id + hyp_id_base,
                ..*row
            });
        }
        frame_base += max_frame;
        gt_id_base += max_gt_id;
        hyp_id_base += max_hyp_id;
    }
    (gt_out, hyp_out)
}

impl EvaluationReport {
    /// Aligned two-column text table of the headline numbers.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut push = |name: &str, value: String| {
            out.push_str(&format!("{name:<18}{value:>12}\n"));
        };
        push("MOTA", format!("{:.4}", self.clear.mota));
        push("FP", self.clear.false_positives.to_string());
        push("FN", self.clear.false_negatives.to_string());
        push("IDSw", self.clear.id_switches.to_string());
        push("MT", self.clear.mostly_tracked.to_string());
        push("ML", self.clear.mostly_lost.to_string());
        push("GT boxes", self.clear.gt_total.to_string());
        push("IDF1", format!("{:.4}", self.idf1.idf1));
        push("IDTP", self.idf1.idtp.to_string());
        push("IDFP", self.idf1.idfp.to_string());
        push("IDFN", self.idf1.idfn.to_string());
        push("HOTA", format!("{:.4}", self.hota.hota));
        push("DetA", format!("{:.4}", self.hota.deta));
        push("AssA", format!("{:.4}", self.hota.assa));
        push("LocA", format!("{:.4}", self.hota.loca));
        out
    }
}
