//! Synthetic scene pairs with known correspondences, misalignment and
//! detector quality. Used as the ground-truth oracle in end-to-end tests and
//! for `ipd scenegen`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, AffineTransform2D, BBox, Point2};
use crate::ingestion::{serialize_labels, CoordinateMode, DatasetManifest, ImageLabels, ManifestEntry, PairingEntry};

/// Distribution of the IOU between a ground-truth box and its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DetectorProfile {
    Fixed { iou: f64 },
    Uniform { low: f64, high: f64 },
}

impl DetectorProfile {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v < 1.0;
        match *self {
            DetectorProfile::Fixed { iou } if ok(iou) => Ok(()),
            DetectorProfile::Uniform { low, high } if ok(low) && ok(high) && low <= high => Ok(()),
            other => Err(Error::Spec(format!("infeasible detector profile {other:?}: IOUs must lie in (0, 1)"))),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            DetectorProfile::Fixed { iou } => iou,
            DetectorProfile::Uniform { low, high } if low == high => low,
            DetectorProfile::Uniform { low, high } => rng.random_range(low..high),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_instances: usize,
    /// Synthetic frame size in pixels.
    pub frame: (u32, u32),
    /// Real frame size; defaults to `frame`. Instances whose real center
    /// falls outside it are treated as not visible in the real image.
    #[serde(default)]
    pub real_frame: Option<(u32, u32)>,
    /// True synthetic-to-real map.
    pub transform: AffineTransform2D,
    pub center_noise_sigma: f64,
    pub dropout_real: f64,
    pub dropout_synth: f64,
    pub detector_profile_real: DetectorProfile,
    pub detector_profile_synth: DetectorProfile,
    pub rng_seed: u64,
    /// Side-length range of synthetic boxes, pixels.
    #[serde(default = "default_box_size")]
    pub box_size: (f64, f64),
    /// Minimum distance between synthetic instance centers.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Confidence range of emitted predictions.
    #[serde(default = "default_confidence")]
    pub confidence: (f64, f64),
}

fn default_box_size() -> (f64, f64) {
    (12.0, 24.0)
}

fn default_min_separation() -> f64 {
    40.0
}

fn default_confidence() -> (f64, f64) {
    (0.5, 1.0)
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_instances: 20,
            frame: (640, 480),
            real_frame: None,
            transform: AffineTransform2D::IDENTITY,
            center_noise_sigma: 0.0,
            dropout_real: 0.0,
            dropout_synth: 0.0,
            detector_profile_real: DetectorProfile::Fixed { iou: 0.8 },
            detector_profile_synth: DetectorProfile::Fixed { iou: 0.8 },
            rng_seed: 0,
            box_size: default_box_size(),
            min_separation: default_min_separation(),
            confidence: default_confidence(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let spec_err = |m: String| Err(Error::Spec(m));
        if self.frame.0 == 0 || self.frame.1 == 0 {
            return spec_err(format!("frame {:?} has a zero dimension", self.frame));
        }
        if let Some(f) = self.real_frame {
            if f.0 == 0 || f.1 == 0 {
                return spec_err(format!("real frame {f:?} has a zero dimension"));
            }
        }
        if !self.transform.is_finite() || self.transform.det().abs() < 1e-12 {
            return spec_err("transform must be finite and invertible".into());
        }
        if !(self.center_noise_sigma >= 0.0 && self.center_noise_sigma.is_finite()) {
            return spec_err(format!("noise sigma {} must be finite and >= 0", self.center_noise_sigma));
        }
        for (name, d) in [("dropout_real", self.dropout_real), ("dropout_synth", self.dropout_synth)] {
            if !(0.0..1.0).contains(&d) {
                return spec_err(format!("{name} {d} outside [0, 1)"));
            }
        }
        let (lo, hi) = self.box_size;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return spec_err(format!("box size range {:?} invalid", self.box_size));
        }
        if hi >= self.frame.0.min(self.frame.1) as f64 {
            return spec_err("boxes do not fit in the frame".into());
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return spec_err(format!("min_separation {} invalid", self.min_separation));
        }
        let (clo, chi) = self.confidence;
        if !(0.0 <= clo && clo <= chi && chi <= 1.0) {
            return spec_err(format!("confidence range {:?} invalid", self.confidence));
        }
        self.detector_profile_real.validate()?;
        self.detector_profile_synth.validate()
    }
}

/// Generated pair plus oracle data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePair {
    pub real: ImageLabels,
    pub synth: ImageLabels,
    /// True `(real gt index, synth gt index)` pairs, sorted by real index.
    pub correspondence: Vec<(usize, usize)>,
    /// Per real GT box: IOU with its own prediction, as drawn from the profile.
    pub real_target_ious: Vec<f64>,
    pub synth_target_ious: Vec<f64>,
    /// Per real GT box: best IOU against any prediction in the image.
    pub real_ious: Vec<f64>,
    pub synth_ious: Vec<f64>,
}

impl ScenePair {
    /// Mean absolute difference of the realized performance values over the
    /// true correspondences; `None` when no instance is visible in both.
    pub fn oracle_ipd(&self) -> Option<f64> {
        if self.correspondence.is_empty() {
            return None;
        }
        let sum: f64 = self
            .correspondence
            .iter()
            .map(|&(r, s)| (self.real_ious[r] - self.synth_ious[s]).abs())
            .sum();
        Some(sum / self.correspondence.len() as f64)
    }

    pub fn with_ids(mut self, real_id: impl Into<String>, synth_id: impl Into<String>) -> Self {
        self.real.image_id = real_id.into();
        self.synth.image_id = synth_id.into();
        self
    }
}

const PLACEMENT_ATTEMPTS_PER_INSTANCE: usize = 2000;
const BISECTION_STEPS: usize = 200;

pub fn generate_scene_pair(spec: &SceneSpec) -> Result<ScenePair> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let (fw, fh) = (spec.frame.0 as f64, spec.frame.1 as f64);
    let (rw, rh) = spec.real_frame.map_or((fw, fh), |f| (f.0 as f64, f.1 as f64));

    // Instance layout in the synthetic frame.
    let margin = spec.box_size.1 / 2.0;
    let mut centers: Vec<Point2> = Vec::with_capacity(spec.n_instances);
    let mut attempts = 0;
    while centers.len() < spec.n_instances {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS_PER_INSTANCE * spec.n_instances.max(1) {
            return Err(Error::Spec(format!(
                "cannot place {} instances with separation {} in a {}x{} frame",
                spec.n_instances, spec.min_separation, spec.frame.0, spec.frame.1
            )));
        }
        let c = Point2::new(rng.random_range(margin..fw - margin), rng.random_range(margin..fh - margin));
        if centers.iter().all(|p| p.distance(&c) >= spec.min_separation) {
            centers.push(c);
        }
    }
    let sizes: Vec<(f64, f64)> = (0..spec.n_instances)
        .map(|_| {
            let (lo, hi) = spec.box_size;
            if lo == hi {
                (lo, lo)
            } else {
                (rng.random_range(lo..=hi), rng.random_range(lo..=hi))
            }
        })
        .collect();

    let t = spec.transform;
    let col_x = t.a11.hypot(t.a21);
    let col_y = t.a12.hypot(t.a22);
    let noise = Normal::new(0.0, spec.center_noise_sigma).map_err(|e| Error::Spec(e.to_string()))?;

    let mut synth_gt: Vec<(usize, BBox)> = Vec::new();
    let mut real_gt: Vec<(usize, BBox)> = Vec::new();
    for (k, (c, &(w, h))) in centers.iter().zip(&sizes).enumerate() {
        let keep_synth = rng.random::<f64>() >= spec.dropout_synth;
        let keep_real = rng.random::<f64>() >= spec.dropout_real;
        let (nx, ny) = (noise.sample(&mut rng), noise.sample(&mut rng));
        if keep_synth {
            synth_gt.push((k, BBox::new(c.x, c.y, w, h)?));
        }
        let rc = t.apply(*c);
        let (rx, ry) = (rc.x + nx, rc.y + ny);
        let visible = (0.0..rw).contains(&rx) && (0.0..rh).contains(&ry);
        if keep_real && visible {
            real_gt.push((k, BBox::new(rx, ry, w * col_x, h * col_y)?));
        }
    }
    // Order in the two images is unrelated.
    synth_gt.shuffle(&mut rng);
    real_gt.shuffle(&mut rng);

    let (synth_preds, synth_target_ious) =
        emit_predictions(&synth_gt, &spec.detector_profile_synth, spec.confidence, &mut rng)?;
    let (real_preds, real_target_ious) =
        emit_predictions(&real_gt, &spec.detector_profile_real, spec.confidence, &mut rng)?;

    let mut correspondence: Vec<(usize, usize)> = real_gt
        .iter()
        .enumerate()
        .filter_map(|(ri, (k, _))| synth_gt.iter().position(|(sk, _)| sk == k).map(|si| (ri, si)))
        .collect();
    correspondence.sort_unstable();

    let real = ImageLabels {
        image_id: "real".into(),
        width_px: rw.round() as u32,
        height_px: rh.round() as u32,
        gt_boxes: real_gt.into_iter().map(|(_, b)| b).collect(),
        pred_boxes: real_preds,
    };
    let synth = ImageLabels {
        image_id: "synth".into(),
        width_px: spec.frame.0,
        height_px: spec.frame.1,
        gt_boxes: synth_gt.into_iter().map(|(_, b)| b).collect(),
        pred_boxes: synth_preds,
    };
    let real_ious = best_ious(&real.gt_boxes, &real.pred_boxes);
    let synth_ious = best_ious(&synth.gt_boxes, &synth.pred_boxes);
    Ok(ScenePair {
        real,
        synth,
        correspondence,
        real_target_ious,
        synth_target_ious,
        real_ious,
        synth_ious,
    })
}

fn emit_predictions(
    gt: &[(usize, BBox)],
    profile: &DetectorProfile,
    confidence: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<BBox>, Vec<f64>)> {
    let mut preds = Vec::with_capacity(gt.len());
    let mut targets = Vec::with_capacity(gt.len());
    for (_, b) in gt {
        let target = profile.sample(rng);
        let mut p = perturb_box_to_target_iou(b, target, rng)?;
        p.confidence = Some(if confidence.0 == confidence.1 {
            confidence.0
        } else {
            rng.random_range(confidence.0..=confidence.1)
        });
        preds.push(p);
        targets.push(target);
    }
    Ok((preds, targets))
}

/// Best IOU of each GT box against all predictions, by direct pairwise
/// evaluation.
fn best_ious(gt: &[BBox], pred: &[BBox]) -> Vec<f64> {
    gt.iter()
        .map(|g| pred.iter().map(|p| iou_unchecked(g, p)).fold(0.0, f64::max))
        .collect()
}

/// Offset magnitude along direction `angle` at which the translated box has
/// IOU `target` with `gt`. IOU falls strictly with the offset until the
/// boxes separate, so bisection converges to machine precision.
pub fn offset_for_target_iou(gt: &BBox, target: f64, angle: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::invalid(format!("target IOU {target} outside (0, 1]")));
    }
    gt.validate()?;
    if target == 1.0 {
        return Ok(0.0);
    }
    let (s, c) = angle.sin_cos();
    let shifted = |d: f64| BBox {
        cx: gt.cx + d * c,
        cy: gt.cy + d * s,
        ..*gt
    };
    // Boxes separate once either axis offset reaches the box extent.
    let mut hi = f64::INFINITY;
    if c.abs() > 1e-15 {
        hi = hi.min(gt.w / c.abs());
    }
    if s.abs() > 1e-15 {
        hi = hi.min(gt.h / s.abs());
    }
    let mut lo = 0.0;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if iou_unchecked(gt, &shifted(mid)) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Translates `gt` in a random direction so that its IOU with `gt` equals
/// `target`. The result keeps size and class and has no confidence.
pub fn perturb_box_to_target_iou(gt: &BBox, target: f64, rng: &mut impl Rng) -> Result<BBox> {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let d = offset_for_target_iou(gt, target, angle)?;
    let (s, c) = angle.sin_cos();
    Ok(BBox {
        cx: gt.cx + d * c,
        cy: gt.cy + d * s,
        confidence: None,
        ..*gt
    })
}

/// Paths written by [`write_scene_dataset`].
#[derive(Debug, Clone)]
pub struct WrittenDataset {
    pub real_manifest: PathBuf,
    pub synth_manifest: PathBuf,
}

/// Writes scenes as label files plus `real.json` and `synth.json` manifests
/// under `dir`. Image ids are taken from the scenes; both manifests carry
/// the pairing table.
pub fn write_scene_dataset(dir: &Path, scenes: &[ScenePair], mode: CoordinateMode) -> Result<WrittenDataset> {
    let labels_dir = dir.join("labels");
    fs::create_dir_all(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;
    let write = |rel: &Path, text: String| -> Result<()> {
        let p = dir.join(rel);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };

    let mut real_entries = Vec::new();
    let mut synth_entries = Vec::new();
    let mut pairing = Vec::new();
    for scene in scenes {
        for (im, entries) in [(&scene.real, &mut real_entries), (&scene.synth, &mut synth_entries)] {
            let dims = (im.width_px, im.height_px);
            let gt_rel = PathBuf::from("labels").join(format!("{}.txt", im.image_id));
            let pred_rel = PathBuf::from("labels").join(format!("{}.pred.txt", im.image_id));
            write(&gt_rel, serialize_labels(&im.gt_boxes, mode, dims))?;
            write(&pred_rel, serialize_labels(&im.pred_boxes, mode, dims))?;
            entries.push(ManifestEntry {
                image_id: im.image_id.clone(),
                gt_label_path: gt_rel,
                pred_label_path: Some(pred_rel),
                width_px: dims.0,
                height_px: dims.1,
            });
        }
        pairing.push(PairingEntry {
            real_image_id: scene.real.image_id.clone(),
            synth_image_id: scene.synth.image_id.clone(),
        });
    }

    let out = WrittenDataset {
        real_manifest: dir.join("real.json"),
        synth_manifest: dir.join("synth.json"),
    };
    for (id, entries, path) in [
        ("real", real_entries, &out.real_manifest),
        ("synth", synth_entries, &out.synth_manifest),
    ] {
        let m = DatasetManifest {
            dataset_id: id.into(),
            coordinate_mode: mode,
            entries,
            pairing: pairing.clone(),
        };
        let text = serde_json::to_string_pretty(&m)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene() {
        let spec = SceneSpec {
            n_instances: 0,
            ..Default::default()
        };
        let s = generate_scene_pair(&spec).unwrap();
        assert!(s.real.gt_boxes.is_empty() && s.synth.gt_boxes.is_empty());
        assert!(s.correspondence.is_empty());
        assert_eq!(s.oracle_ipd(), None);
    }

    #[test]
    fn target_one_is_identity() {
        let b = BBox::new(10.0, 10.0, 4.0, 6.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb_box_to_target_iou(&b, 1.0, &mut rng).unwrap(), b);
    }

    #[test]
    fn one_seventh_offset_on_diagonal() {
        let b = BBox::from_corners(0.0, 0.0, 2.0, 2.0).unwrap();
        let d = offset_for_target_iou(&b, 1.0 / 7.0, std::f64::consts::FRAC_PI_4).unwrap();
        let step = d / 2f64.sqrt();
        assert!((step - 1.0).abs() < 1e-9, "{step}");
    }

    #[test]
    fn infeasible_targets() {
        let b = BBox::new(10.0, 10.0, 4.0, 6.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(perturb_box_to_target_iou(&b, 0.0, &mut rng).is_err());
        assert!(perturb_box_to_target_iou(&b, 1.2, &mut rng).is_err());
        for p in [
            DetectorProfile::Fixed { iou: 1.0 },
            DetectorProfile::Fixed { iou: 0.0 },
            DetectorProfile::Uniform { low: 0.7, high: 0.2 },
        ] {
            let spec = SceneSpec {
                detector_profile_real: p,
                ..Default::default()
            };
            assert!(matches!(generate_scene_pair(&spec), Err(Error::Spec(_))), "{p:?}");
        }
    }

    #[test]
    fn bad_specs() {
        let cases = [
            SceneSpec {
                dropout_real: 1.0,
                ..Default::default()
            },
            SceneSpec {
                center_noise_sigma: f64::NAN,
                ..Default::default()
            },
            SceneSpec {
                n_instances: 500,
                min_separation: 100.0,
                ..Default::default()
            },
        ];
        for spec in cases {
            assert!(matches!(generate_scene_pair(&spec), Err(Error::Spec(_))), "{spec:?}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SceneSpec {
            center_noise_sigma: 0.5,
            dropout_real: 0.2,
            dropout_synth: 0.2,
            detector_profile_real: DetectorProfile::Uniform { low: 0.3, high: 0.95 },
            rng_seed: 99,
            ..Default::default()
        };
        assert_eq!(generate_scene_pair(&spec).unwrap(), generate_scene_pair(&spec).unwrap());
        let other = SceneSpec { rng_seed: 100, ..spec.clone() };
        assert_ne!(generate_scene_pair(&spec).unwrap(), generate_scene_pair(&other).unwrap());
    }

    #[test]
    fn correspondence_matches_geometry() {
        let t = AffineTransform2D::new(0.9, 0.1, -0.05, 1.1, 12.0, -4.0);
        let spec = SceneSpec {
            n_instances: 30,
            transform: t,
            dropout_real: 0.2,
            dropout_synth: 0.2,
            rng_seed: 5,
            real_frame: Some((800, 600)),
            ..Default::default()
        };
        let s = generate_scene_pair(&spec).unwrap();
        assert!(!s.correspondence.is_empty());
        for &(r, si) in &s.correspondence {
            let moved = t.apply(s.synth.gt_boxes[si].center());
            assert!(moved.distance(&s.real.gt_boxes[r].center()) < 1e-9);
        }
        s.real.validate().unwrap();
        s.synth.validate().unwrap();
    }
}
