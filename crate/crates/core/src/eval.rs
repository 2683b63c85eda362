//! Detection scoring: greedy matching against ground truth and sensitivity
//! at fixed false-positives-per-image (FROC) operating points.
//!
//! Detections are matched in descending score order (ties keep input order).
//! Each detection takes the unmatched GT of its image with the highest IoU
//! (ties go to the lower GT index) and is a true positive when that IoU reaches
//! the threshold. Because matching is greedy by score, the labels computed
//! once on the full list are also the labels of every score-threshold prefix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::boxes::{iou, GtBox};
use crate::error::{Error, Result};

/// False-positives-per-image points reported by default.
pub const DEFAULT_FPPI_POINTS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Default matching IoU.
pub const DEFAULT_EVAL_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: GtBox,
    pub score: f64,
}

/// Ground-truth boxes keyed by image id. Images without lesions still count
/// towards the image total.
pub type GroundTruth = BTreeMap<String, Vec<GtBox>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// `true` for a true positive, indexed like the input detections.
    pub is_tp: Vec<bool>,
    /// Per image, whether each GT box was detected.
    pub gt_detected: BTreeMap<String, Vec<bool>>,
}

/// Indices of `dets` sorted by descending score; stable on ties.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

fn check_iou_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::validation(format!(
            "matching IoU threshold must lie in (0, 1), got {t}"
        )));
    }
    Ok(())
}

fn check_detections(dets: &[Detection], gts: &GroundTruth) -> Result<()> {
    for d in dets {
        if !gts.contains_key(&d.image_id) {
            return Err(Error::validation(format!(
                "detection refers to unknown image '{}'",
                d.image_id
            )));
        }
        if !d.score.is_finite() {
            return Err(Error::validation(format!(
                "detection on '{}' has non-finite score",
                d.image_id
            )));
        }
    }
    Ok(())
}

/// Greedy one-to-one matching of detections to ground truth.
pub fn match_detections(
    dets: &[Detection],
    gts: &GroundTruth,
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_iou_threshold(iou_threshold)?;
    check_detections(dets, gts)?;

    let mut gt_detected: BTreeMap<String, Vec<bool>> = gts
        .iter()
        .map(|(id, boxes)| (id.clone(), vec![false; boxes.len()]))
        .collect();
    let mut is_tp = vec![false; dets.len()];

    for i in score_order(dets) {
        let d = &dets[i];
        let boxes = &gts[&d.image_id];
        let taken = gt_detected.get_mut(&d.image_id).expect("checked above");
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in boxes.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&d.bbox, gt);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        if let Some((j, v)) = best {
            if v >= iou_threshold {
                taken[j] = true;
                is_tp[i] = true;
            }
        }
    }
    Ok(MatchResult { is_tp, gt_detected })
}

/// How requested FPPI points are read off the operating curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrocMode {
    /// Best sensitivity among operating points with FPPI at or below the point.
    #[default]
    Step,
    /// Linear interpolation between neighbouring operating points.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub fppi: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocResult {
    pub points: Vec<FrocPoint>,
    pub average: f64,
}

/// Operating points `(fppi, sensitivity)` for every distinct score threshold,
/// preceded by the empty-detection point `(0, 0)`.
pub fn operating_points(
    dets: &[Detection],
    gts: &GroundTruth,
    iou_threshold: f64,
) -> Result<Vec<FrocPoint>> {
    if gts.is_empty() {
        return Err(Error::validation("FROC needs at least one image"));
    }
    let total_gt: usize = gts.values().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::validation(
            "FROC needs at least one ground-truth box",
        ));
    }
    let matched = match_detections(dets, gts, iou_threshold)?;
    let n_images = gts.len() as f64;

    let order = score_order(dets);
    let mut points = vec![FrocPoint {
        fppi: 0.0,
        sensitivity: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if matched.is_tp[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_score = order
            .get(k + 1)
            .is_none_or(|&next| dets[next].score != dets[i].score);
        if last_of_score {
            points.push(FrocPoint {
                fppi: fp as f64 / n_images,
                sensitivity: tp as f64 / total_gt as f64,
            });
        }
    }
    Ok(points)
}

/// Sensitivity at each requested FPPI point plus their mean.
pub fn froc(
    dets: &[Detection],
    gts: &GroundTruth,
    fppi_points: &[f64],
    iou_threshold: f64,
    mode: FrocMode,
) -> Result<FrocResult> {
    if fppi_points.is_empty() {
        return Err(Error::validation("need at least one FPPI point"));
    }
    if let Some(p) = fppi_points.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::validation(format!(
            "FPPI points must be positive, got {p}"
        )));
    }
    let curve = operating_points(dets, gts, iou_threshold)?;
    let points: Vec<FrocPoint> = fppi_points
        .iter()
        .map(|&p| FrocPoint {
            fppi: p,
            sensitivity: match mode {
                FrocMode::Step => step_at(&curve, p),
                FrocMode::Linear => interpolate_at(&curve, p),
            },
        })
        .collect();
    let average = points.iter().map(|p| p.sensitivity).sum::<f64>() / points.len() as f64;
    Ok(FrocResult { points, average })
}

fn step_at(curve: &[FrocPoint], fppi: f64) -> f64 {
    curve
        .iter()
        .filter(|c| c.fppi <= fppi)
        .map(|c| c.sensitivity)
        .fold(0.0, f64::max)
}

/// Interpolates on the upper envelope of the curve. Points beyond the last
/// operating point take its sensitivity.
fn interpolate_at(curve: &[FrocPoint], fppi: f64) -> f64 {
    // collapse equal-fppi runs to their best sensitivity
    let mut envelope: Vec<FrocPoint> = Vec::with_capacity(curve.len());
    for &c in curve {
        match envelope.last_mut() {
            Some(last) if last.fppi == c.fppi => {
                last.sensitivity = last.sensitivity.max(c.sensitivity)
            }
            _ => envelope.push(c),
        }
    }
    let mut prev = envelope[0];
    for &c in &envelope[1..] {
        if c.fppi >= fppi {
            let t = (fppi - prev.fppi) / (c.fppi - prev.fppi);
            return prev.sensitivity + t * (c.sensitivity - prev.sensitivity);
        }
        prev = c;
    }
    prev.sensitivity
}
