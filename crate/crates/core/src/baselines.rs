//! Single-class average precision, kept as a comparison baseline for IPD.
//!
//! AP summarizes how well a detector does on a dataset as a whole, so two
//! datasets can reach the same AP while individual instances fare very
//! differently. Comparing the AP gap with the IPD of the same data makes
//! that visible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};

pub const DEFAULT_AP_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrCurvePoint {
    pub recall: f64,
    pub precision: f64,
    pub confidence: f64,
}

/// Precision/recall after each prediction, in descending confidence order.
///
/// Each prediction is matched greedily to the unmatched ground-truth box of
/// its image with the highest IOU, provided that IOU reaches
/// `iou_threshold`; otherwise it is a false positive. Confidence ties keep
/// image order, then prediction order.
pub fn pr_curve(gt: &[Vec<BBox>], pred: &[Vec<BBox>], iou_threshold: f64) -> Result<Vec<PrCurvePoint>> {
    if gt.len() != pred.len() {
        return Err(Error::invalid(format!(
            "{} ground-truth images but {} prediction images",
            gt.len(),
            pred.len()
        )));
    }
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::invalid(format!("IOU threshold {iou_threshold} outside (0, 1)")));
    }
    let total_gt: usize = gt.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::invalid("average precision is undefined without ground-truth boxes"));
    }

    let mut order: Vec<(f64, usize, usize)> = Vec::new();
    for (img, (g, p)) in gt.iter().zip(pred).enumerate() {
        for b in g {
            b.validate()?;
        }
        for (k, b) in p.iter().enumerate() {
            b.validate()?;
            let c = b
                .confidence
                .ok_or_else(|| Error::invalid(format!("prediction {k} in image {img} has no confidence")))?;
            order.push((c, img, k));
        }
    }
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut taken: Vec<Vec<bool>> = gt.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(order.len());
    for (n, &(conf, img, k)) in order.iter().enumerate() {
        let p = &pred[img][k];
        let best = gt[img]
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[img][*j])
            .map(|(j, g)| (iou_unchecked(g, p), j))
            .filter(|(v, _)| *v >= iou_threshold)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((_, j)) = best {
            taken[img][j] = true;
            tp += 1;
        }
        curve.push(PrCurvePoint {
            recall: tp as f64 / total_gt as f64,
            precision: tp as f64 / (n + 1) as f64,
            confidence: conf,
        });
    }
    Ok(curve)
}

/// Area under the monotone precision envelope (all-point interpolation).
pub fn average_precision(gt: &[Vec<BBox>], pred: &[Vec<BBox>], iou_threshold: f64) -> Result<f64> {
    let curve = pr_curve(gt, pred, iou_threshold)?;
    Ok(area_under_envelope(&curve))
}

fn area_under_envelope(curve: &[PrCurvePoint]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (p, env) in curve.iter().zip(&envelope) {
        ap += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    ap.clamp(0.0, 1.0)
}
