//! Data boundary: label files, dataset manifests and reports.

mod labels;
mod manifest;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Point2};

pub use labels::{parse_label_file, parse_labels_of_kind, serialize_labels, CoordinateMode, LabelKind};
pub use manifest::{
    load_dataset, load_dataset_file, load_manifest, pair_datasets, Dataset, DatasetManifest, DatasetRole,
    LoadOptions, ManifestEntry, PairingEntry,
};
pub use report::{render_crossval_markdown, write_ipd_report, write_report, CrossValReport, IpdReport, ReportFormat};

/// Fractional slack around the frame for box centers.
pub const FRAME_SLACK: f64 = 0.1;

/// All boxes of one image in pixel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLabels {
    pub image_id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub gt_boxes: Vec<BBox>,
    pub pred_boxes: Vec<BBox>,
}

impl ImageLabels {
    pub fn new(image_id: impl Into<String>, width_px: u32, height_px: u32) -> Self {
        Self {
            image_id: image_id.into(),
            width_px,
            height_px,
            gt_boxes: Vec::new(),
            pred_boxes: Vec::new(),
        }
    }

    pub fn gt_centers(&self) -> Vec<Point2> {
        self.gt_boxes.iter().map(BBox::center).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::invalid(format!("image {} has a zero dimension", self.image_id)));
        }
        let (w, h) = (self.width_px as f64, self.height_px as f64);
        let in_frame = |b: &BBox| {
            (-FRAME_SLACK * w..=(1.0 + FRAME_SLACK) * w).contains(&b.cx)
                && (-FRAME_SLACK * h..=(1.0 + FRAME_SLACK) * h).contains(&b.cy)
        };
        for (kind, boxes, want_conf) in [("gt", &self.gt_boxes, false), ("pred", &self.pred_boxes, true)] {
            for (i, b) in boxes.iter().enumerate() {
                b.validate()
                    .map_err(|e| Error::invalid(format!("image {} {kind} box {i}: {e}", self.image_id)))?;
                if !in_frame(b) {
                    return Err(Error::invalid(format!(
                        "image {} {kind} box {i} center ({}, {}) lies outside the {}x{} frame",
                        self.image_id, b.cx, b.cy, self.width_px, self.height_px
                    )));
                }
                if b.confidence.is_some() != want_conf {
                    return Err(Error::invalid(format!(
                        "image {} {kind} box {i}: {}",
                        self.image_id,
                        if want_conf {
                            "prediction without confidence"
                        } else {
                            "ground truth with confidence"
                        }
                    )));
                }
            }
        }
        Ok(())
    }
}
