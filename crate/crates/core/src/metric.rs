//! IOU tables, per-instance performance values and the Instance Performance
//! Difference, plus the train-domain cross-validation matrix.
//!
//! The performance value of a ground-truth instance is the largest IOU it
//! reaches against any surviving prediction in its image. Predictions are not
//! consumed: two instances may share the same best prediction.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};
use crate::ingestion::ImageLabels;
use crate::matching::InstancePairing;

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;

/// Row-major `gt_count x pred_count` IOU matrix for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct IouTable {
    values: Vec<f64>,
    gt_count: usize,
    pred_count: usize,
}

impl IouTable {
    pub fn gt_count(&self) -> usize {
        self.gt_count
    }

    pub fn pred_count(&self) -> usize {
        self.pred_count
    }

    pub fn get(&self, gt: usize, pred: usize) -> f64 {
        self.values[gt * self.pred_count + pred]
    }

    pub fn row(&self, gt: usize) -> &[f64] {
        &self.values[gt * self.pred_count..(gt + 1) * self.pred_count]
    }
}

pub fn iou_table(gt: &[BBox], pred: &[BBox]) -> Result<IouTable> {
    for b in gt.iter().chain(pred) {
        b.validate()?;
    }
    let mut values = Vec::with_capacity(gt.len() * pred.len());
    for g in gt {
        values.extend(pred.iter().map(|p| iou_unchecked(g, p)));
    }
    Ok(IouTable {
        values,
        gt_count: gt.len(),
        pred_count: pred.len(),
    })
}

/// Row maximum of the table; 0 when the image has no predictions.
pub fn performance_value(table: &IouTable, gt_index: usize) -> Result<f64> {
    if gt_index >= table.gt_count {
        return Err(Error::invalid(format!(
            "gt index {gt_index} out of range for table with {} rows",
            table.gt_count
        )));
    }
    Ok(table.row(gt_index).iter().copied().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfRecord {
    pub dataset_pair_id: String,
    pub image_id: String,
    pub real_index: usize,
    pub synth_index: usize,
    pub p_real: f64,
    pub p_synth: f64,
}

impl PerfRecord {
    pub fn abs_diff(&self) -> f64 {
        (self.p_real - self.p_synth).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageContribution {
    pub image_id: String,
    /// Mean absolute difference over this image's pairs; `None` without pairs.
    pub ipd_contribution: Option<f64>,
    pub pair_count: usize,
    #[serde(default)]
    pub unmatched_real: usize,
    #[serde(default)]
    pub unmatched_synth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpdResult {
    pub ipd: f64,
    pub instance_count: usize,
    pub unmatched_real_total: usize,
    pub unmatched_synth_total: usize,
    pub per_image_breakdown: Vec<ImageContribution>,
    pub records: Vec<PerfRecord>,
}

/// Mean absolute difference between paired performance values.
///
/// The breakdown groups records by `image_id` in first-appearance order.
pub fn ipd(records: &[PerfRecord]) -> Result<IpdResult> {
    if records.is_empty() {
        return Err(Error::NoInstances("no matched instance pairs to compare".into()));
    }
    for r in records {
        for v in [r.p_real, r.p_synth] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "performance value {v} outside [0, 1] for image {} pair ({}, {})",
                    r.image_id, r.real_index, r.synth_index
                )));
            }
        }
    }
    let total: f64 = records.iter().map(PerfRecord::abs_diff).sum();

    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = groups.entry(r.image_id.as_str()).or_insert_with(|| {
            order.push(r.image_id.as_str());
            (0.0, 0)
        });
        e.0 += r.abs_diff();
        e.1 += 1;
    }
    let per_image_breakdown = order
        .into_iter()
        .map(|id| {
            let (sum, n) = groups[id];
            ImageContribution {
                image_id: id.to_string(),
                ipd_contribution: Some(sum / n as f64),
                pair_count: n,
                unmatched_real: 0,
                unmatched_synth: 0,
            }
        })
        .collect();

    Ok(IpdResult {
        ipd: total / records.len() as f64,
        instance_count: records.len(),
        unmatched_real_total: 0,
        unmatched_synth_total: 0,
        per_image_breakdown,
        records: records.to_vec(),
    })
}

/// Keeps predictions whose confidence reaches `conf_threshold`. Boxes without
/// a confidence are kept.
pub fn filter_predictions(pred: &[BBox], conf_threshold: f64) -> Vec<BBox> {
    pred.iter()
        .filter(|b| b.confidence.is_none_or(|c| c >= conf_threshold))
        .copied()
        .collect()
}

/// IPD over index-aligned image pairs and their instance pairings.
///
/// Records are ordered by image pair, then by real instance index.
pub fn evaluate_pair(
    dataset_pair_id: &str,
    real_labels: &[ImageLabels],
    synth_labels: &[ImageLabels],
    pairings: &[InstancePairing],
    conf_threshold: f64,
) -> Result<IpdResult> {
    if real_labels.len() != synth_labels.len() || real_labels.len() != pairings.len() {
        return Err(Error::invalid(format!(
            "mismatched lengths: {} real images, {} synthetic images, {} pairings",
            real_labels.len(),
            synth_labels.len(),
            pairings.len()
        )));
    }
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(Error::invalid(format!("confidence threshold {conf_threshold} outside [0, 1]")));
    }

    let mut records = Vec::new();
    let mut breakdown = Vec::with_capacity(pairings.len());
    let (mut unmatched_real, mut unmatched_synth) = (0, 0);

    for ((real, synth), pairing) in real_labels.iter().zip(synth_labels).zip(pairings) {
        pairing.check(real.gt_boxes.len(), synth.gt_boxes.len()).map_err(|e| {
            Error::invalid(format!("pairing for {} / {}: {e}", real.image_id, synth.image_id))
        })?;
        let t_real = iou_table(&real.gt_boxes, &filter_predictions(&real.pred_boxes, conf_threshold))?;
        let t_synth = iou_table(&synth.gt_boxes, &filter_predictions(&synth.pred_boxes, conf_threshold))?;

        let mut pairs = pairing.pairs.clone();
        pairs.sort_by_key(|p| (p.real_index, p.synth_index));
        let mut sum = 0.0;
        for p in &pairs {
            let rec = PerfRecord {
                dataset_pair_id: dataset_pair_id.to_string(),
                image_id: real.image_id.clone(),
                real_index: p.real_index,
                synth_index: p.synth_index,
                p_real: performance_value(&t_real, p.real_index)?,
                p_synth: performance_value(&t_synth, p.synth_index)?,
            };
            sum += rec.abs_diff();
            records.push(rec);
        }
        unmatched_real += pairing.unmatched_real.len();
        unmatched_synth += pairing.unmatched_synth.len();
        breakdown.push(ImageContribution {
            image_id: real.image_id.clone(),
            ipd_contribution: (!pairs.is_empty()).then(|| sum / pairs.len() as f64),
            pair_count: pairs.len(),
            unmatched_real: pairing.unmatched_real.len(),
            unmatched_synth: pairing.unmatched_synth.len(),
        });
    }

    if records.is_empty() {
        return Err(Error::NoInstances(format!(
            "zero instance pairs across {} image pairs",
            pairings.len()
        )));
    }
    let mut result = ipd(&records)?;
    result.unmatched_real_total = unmatched_real;
    result.unmatched_synth_total = unmatched_synth;
    result.per_image_breakdown = breakdown;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValCell {
    pub train_domain: String,
    pub eval_pair: (String, String),
    /// Absent when the training domain is not part of the pair.
    pub ipd: Option<f64>,
}

impl CrossValCell {
    pub fn involves(&self, domain: &str) -> bool {
        self.eval_pair.0 == domain || self.eval_pair.1 == domain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValMatrix {
    pub domains: Vec<String>,
    /// Unordered domain pairs, one per column.
    pub columns: Vec<(String, String)>,
    /// One row per training domain, in `domains` order.
    pub rows: Vec<Vec<CrossValCell>>,
}

impl CrossValMatrix {
    /// Minimum IPD of each row (`None` for a row without values).
    pub fn row_minima(&self) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|row| row.iter().filter_map(|c| c.ipd).reduce(f64::min))
            .collect()
    }

    pub fn row(&self, train_domain: &str) -> Option<&[CrossValCell]> {
        let i = self.domains.iter().position(|d| d == train_domain)?;
        Some(&self.rows[i])
    }
}

/// Key of a cross-validation result: training domain plus evaluated pair.
pub type CellKey = (String, (String, String));

/// Column order for `domains`: index pairs `(i, j)`, `i < j`, in reverse
/// lexicographic order, so with three domains column `k` is the pair that
/// excludes domain `k` and the blanks fall on the diagonal.
pub fn domain_pairs(domains: &[String]) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for i in 0..domains.len() {
        for j in i + 1..domains.len() {
            pairs.push((domains[i].clone(), domains[j].clone()));
        }
    }
    pairs.reverse();
    pairs
}

/// Builds the train-domain x domain-pair matrix. Every cell whose pair
/// contains the training domain must be present in `results` (either pair
/// order); other cells are left blank.
pub fn cross_validation(domains: &[String], results: &BTreeMap<CellKey, f64>) -> Result<CrossValMatrix> {
    if domains.len() < 2 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least two domains, got {}",
            domains.len()
        )));
    }
    let mut seen = HashSet::new();
    for d in domains {
        if !seen.insert(d.as_str()) {
            return Err(Error::invalid(format!("duplicate domain {d:?}")));
        }
    }
    let columns = domain_pairs(domains);
    let mut rows = Vec::with_capacity(domains.len());
    for train in domains {
        let mut row = Vec::with_capacity(columns.len());
        for (a, b) in &columns {
            let mut cell = CrossValCell {
                train_domain: train.clone(),
                eval_pair: (a.clone(), b.clone()),
                ipd: None,
            };
            if cell.involves(train) {
                let v = results
                    .get(&(train.clone(), (a.clone(), b.clone())))
                    .or_else(|| results.get(&(train.clone(), (b.clone(), a.clone()))))
                    .ok_or_else(|| {
                        Error::IncompleteResults(format!("missing cell train={train} pair=({a}, {b})"))
                    })?;
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::invalid(format!(
                        "cell train={train} pair=({a}, {b}) has invalid IPD {v}"
                    )));
                }
                cell.ipd = Some(*v);
            }
            row.push(cell);
        }
        rows.push(row);
    }
    Ok(CrossValMatrix {
        domains: domains.to_vec(),
        columns,
        rows,
    })
}

pub fn cross_validation_from_results(
    domains: &[String],
    results: &BTreeMap<CellKey, IpdResult>,
) -> Result<CrossValMatrix> {
    let values = results.iter().map(|(k, r)| (k.clone(), r.ipd)).collect();
    cross_validation(domains, &values)
}

/// The domain that, paired with `reference`, has the smallest IPD in `row`.
/// Ties go to the lexicographically smaller name.
pub fn closest_domain(row: &[CrossValCell], reference: &str) -> Result<String> {
    row.iter()
        .filter(|c| c.involves(reference))
        .filter_map(|c| {
            let other = if c.eval_pair.0 == reference {
                &c.eval_pair.1
            } else {
                &c.eval_pair.0
            };
            c.ipd.map(|v| (v, other))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, d)| d.clone())
        .ok_or_else(|| Error::invalid(format!("no cells with a value involve {reference:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::InstancePair;

    fn sq(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::from_corners(x1, y1, x2, y2).unwrap()
    }

    fn rec(p_real: f64, p_synth: f64) -> PerfRecord {
        PerfRecord {
            dataset_pair_id: "d".into(),
            image_id: "img".into(),
            real_index: 0,
            synth_index: 0,
            p_real,
            p_synth,
        }
    }

    #[test]
    fn iou_table_shapes() {
        let b = sq(0.0, 0.0, 2.0, 2.0);
        let t = iou_table(&[b], &[b]).unwrap();
        assert_eq!((t.gt_count(), t.pred_count()), (1, 1));
        assert_eq!(t.get(0, 0), 1.0);
        let t = iou_table(&[b], &[]).unwrap();
        assert_eq!((t.gt_count(), t.pred_count()), (1, 0));
        assert_eq!(performance_value(&t, 0).unwrap(), 0.0);
        assert!(performance_value(&t, 1).is_err());
    }

    #[test]
    fn iou_table_hand_computed() {
        // GT: A=(0,0)-(2,2), B=(10,0)-(14,2).
        // Pred: P=(1,1)-(3,3), Q=(0,0)-(2,1), R=(12,0)-(14,2).
        let gt = [sq(0.0, 0.0, 2.0, 2.0), sq(10.0, 0.0, 14.0, 2.0)];
        let pred = [sq(1.0, 1.0, 3.0, 3.0), sq(0.0, 0.0, 2.0, 1.0), sq(12.0, 0.0, 14.0, 2.0)];
        let t = iou_table(&gt, &pred).unwrap();
        let expected = [[1.0 / 7.0, 0.5, 0.0], [0.0, 0.0, 0.5]];
        for (i, row) in expected.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                assert!((t.get(i, j) - e).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn performance_value_examples() {
        let t = IouTable {
            values: vec![0.2, 0.7, 0.0, 0.1],
            gt_count: 2,
            pred_count: 2,
        };
        assert_eq!(performance_value(&t, 0).unwrap(), 0.7);
        assert_eq!(performance_value(&t, 1).unwrap(), 0.1);
    }

    #[test]
    fn ipd_examples() {
        assert_eq!(ipd(&[rec(0.4, 0.4), rec(0.9, 0.9)]).unwrap().ipd, 0.0);
        let r = ipd(&[rec(0.9, 0.7), rec(0.5, 0.6)]).unwrap();
        assert!((r.ipd - 0.15).abs() < 1e-15);
        assert_eq!(r.instance_count, 2);
        assert_eq!(ipd(&[rec(1.0, 0.0)]).unwrap().ipd, 1.0);
        assert!(matches!(ipd(&[]), Err(Error::NoInstances(_))));
        assert!(ipd(&[rec(1.2, 0.0)]).is_err());
    }

    fn labels(id: &str, gt: Vec<BBox>, pred: Vec<BBox>) -> ImageLabels {
        ImageLabels {
            image_id: id.into(),
            width_px: 100,
            height_px: 100,
            gt_boxes: gt,
            pred_boxes: pred,
        }
    }

    #[test]
    fn evaluate_single_pair() {
        let gt = sq(10.0, 10.0, 20.0, 20.0);
        // IOU 0.8 and 0.5 via horizontal shifts d: (10-d)/(10+d).
        let shift = |d: f64| sq(10.0 + d, 10.0, 20.0 + d, 20.0).with_confidence(0.9).unwrap();
        let real = labels("r", vec![gt], vec![shift(10.0 / 9.0)]);
        let synth = labels("s", vec![gt], vec![shift(10.0 / 3.0)]);
        let pairing = InstancePairing {
            pairs: vec![InstancePair {
                real_index: 0,
                synth_index: 0,
                distance: 0.0,
            }],
            unmatched_real: Default::default(),
            unmatched_synth: Default::default(),
            gate_distance: 1.0,
        };
        let r = evaluate_pair("x", &[real.clone()], &[synth], &[pairing.clone()], 0.25).unwrap();
        assert!((r.ipd - 0.3).abs() < 1e-12);
        assert_eq!(r.records[0].image_id, "r");

        let r = evaluate_pair("x", &[real.clone()], &[real.clone()], &[pairing.clone()], 0.25).unwrap();
        assert_eq!(r.ipd, 0.0);

        // Thresholding away every prediction yields performance 0.
        let r = evaluate_pair("x", &[real.clone()], &[real.clone()], &[pairing.clone()], 0.95).unwrap();
        assert_eq!((r.records[0].p_real, r.records[0].p_synth), (0.0, 0.0));

        assert!(evaluate_pair("x", &[real.clone()], &[], &[pairing], 0.25).is_err());
        let empty = InstancePairing::empty(1, 1, 1.0);
        assert!(matches!(
            evaluate_pair("x", &[real.clone()], &[real], &[empty], 0.25),
            Err(Error::NoInstances(_))
        ));
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn key(t: &str, a: &str, b: &str) -> CellKey {
        (t.into(), (a.into(), b.into()))
    }

    #[test]
    fn crossval_layout() {
        let d = names(&["Real", "Principled", "Hapke"]);
        let cols = domain_pairs(&d);
        assert_eq!(
            cols,
            vec![
                ("Principled".to_string(), "Hapke".to_string()),
                ("Real".to_string(), "Hapke".to_string()),
                ("Real".to_string(), "Principled".to_string()),
            ]
        );
        let results = BTreeMap::from([
            (key("Real", "Real", "Hapke"), 0.3152),
            (key("Real", "Real", "Principled"), 0.2256),
            (key("Principled", "Principled", "Hapke"), 0.0511),
            (key("Principled", "Principled", "Real"), 0.3808),
            (key("Hapke", "Principled", "Hapke"), 0.0261),
            (key("Hapke", "Real", "Hapke"), 0.4638),
        ]);
        let m = cross_validation(&d, &results).unwrap();
        assert_eq!(m.rows.len(), 3);
        let blanks: Vec<(usize, usize)> = m
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, c)| c.ipd.is_none()).map(move |(j, _)| (i, j)))
            .collect();
        assert_eq!(blanks, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(m.row_minima(), vec![Some(0.2256), Some(0.0511), Some(0.0261)]);
        assert_eq!(closest_domain(m.row("Real").unwrap(), "Real").unwrap(), "Principled");

        let mut missing = results.clone();
        missing.remove(&key("Hapke", "Real", "Hapke"));
        let err = cross_validation(&d, &missing).unwrap_err();
        assert!(err.to_string().contains("train=Hapke"), "{err}");
    }

    #[test]
    fn crossval_two_domains_and_errors() {
        let d = names(&["A", "B"]);
        let results = BTreeMap::from([(key("A", "A", "B"), 0.1), (key("B", "B", "A"), 0.2)]);
        let m = cross_validation(&d, &results).unwrap();
        assert_eq!(m.columns.len(), 1);
        assert!(m.rows.iter().flatten().all(|c| c.ipd.is_some()));
        assert!(cross_validation(&[], &results).is_err());
        assert!(cross_validation(&names(&["A", "A"]), &results).is_err());
    }

    #[test]
    fn closest_domain_ties_and_singletons() {
        let cell = |a: &str, b: &str, v: Option<f64>| CrossValCell {
            train_domain: "R".into(),
            eval_pair: (a.into(), b.into()),
            ipd: v,
        };
        let row = [cell("R", "Zeta", Some(0.3)), cell("R", "Alpha", Some(0.3))];
        assert_eq!(closest_domain(&row, "R").unwrap(), "Alpha");
        assert_eq!(closest_domain(&row[..1], "R").unwrap(), "Zeta");
        assert!(closest_domain(&[cell("A", "B", Some(0.1))], "R").is_err());
        assert!(closest_domain(&[cell("R", "B", None)], "R").is_err());
    }
}
