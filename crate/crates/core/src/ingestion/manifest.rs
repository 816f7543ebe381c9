//! Dataset manifests and atomic dataset loading.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labels::{parse_labels_of_kind, CoordinateMode, LabelKind};
use super::ImageLabels;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub gt_label_path: PathBuf,
    #[serde(default)]
    pub pred_label_path: Option<PathBuf>,
    pub width_px: u32,
    pub height_px: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingEntry {
    pub real_image_id: String,
    pub synth_image_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub coordinate_mode: CoordinateMode,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub pairing: Vec<PairingEntry>,
}

/// Which side of the pairing table a manifest's own images occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Keep only boxes of this class.
    pub class_filter: Option<u32>,
    /// Load the images without checking the pairing table against them.
    #[serde(default)]
    pub skip_pairing_check: bool,
}

/// A fully validated dataset in pixel units. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dataset_id: String,
    pub role: DatasetRole,
    pub images: Vec<ImageLabels>,
    pub pairing: Vec<PairingEntry>,
}

impl Dataset {
    pub fn image(&self, image_id: &str) -> Option<&ImageLabels> {
        self.images.iter().find(|i| i.image_id == image_id)
    }
}

/// Reads a manifest and returns it with the directory its paths resolve against.
pub fn load_manifest(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Load {
        entry: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, base))
}

pub fn load_dataset_file(path: &Path, role: DatasetRole, opts: &LoadOptions) -> Result<Dataset> {
    let (manifest, base) = load_manifest(path)?;
    load_dataset(&manifest, &base, role, opts)
}

/// Loads every entry of `manifest`. Any invalid file, line or reference
/// fails the whole load.
pub fn load_dataset(manifest: &DatasetManifest, base_dir: &Path, role: DatasetRole, opts: &LoadOptions) -> Result<Dataset> {
    let mut ids = HashSet::new();
    for e in &manifest.entries {
        if !ids.insert(e.image_id.as_str()) {
            return Err(Error::Load {
                entry: e.image_id.clone(),
                message: "image_id declared twice".into(),
            });
        }
        if e.width_px == 0 || e.height_px == 0 {
            return Err(Error::Load {
                entry: e.image_id.clone(),
                message: format!("invalid image size {}x{}", e.width_px, e.height_px),
            });
        }
    }
    if !opts.skip_pairing_check {
        check_pairing(&manifest.pairing, &ids, role)?;
    }

    let images = manifest
        .entries
        .par_iter()
        .map(|e| load_entry(e, manifest.coordinate_mode, base_dir, opts))
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        dataset_id: manifest.dataset_id.clone(),
        role,
        images,
        pairing: manifest.pairing.clone(),
    })
}

fn check_pairing(pairing: &[PairingEntry], own_ids: &HashSet<&str>, role: DatasetRole) -> Result<()> {
    let mut seen_real = HashSet::new();
    let mut seen_synth = HashSet::new();
    for p in pairing {
        if !seen_real.insert(p.real_image_id.as_str()) {
            return Err(Error::Load {
                entry: p.real_image_id.clone(),
                message: "real image_id appears twice in pairing".into(),
            });
        }
        if !seen_synth.insert(p.synth_image_id.as_str()) {
            return Err(Error::Load {
                entry: p.synth_image_id.clone(),
                message: "synthetic image_id appears twice in pairing".into(),
            });
        }
        let own = match role {
            DatasetRole::Real => &p.real_image_id,
            DatasetRole::Synthetic => &p.synth_image_id,
        };
        if !own_ids.contains(own.as_str()) {
            return Err(Error::Load {
                entry: own.clone(),
                message: "pairing references an undeclared image_id".into(),
            });
        }
    }
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_labels(path: &Path, mode: CoordinateMode, dims: (u32, u32), kind: LabelKind) -> Result<Vec<super::BBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels_of_kind(&text, mode, dims, kind).map_err(|e| e.with_path(path))
}

fn load_entry(e: &ManifestEntry, mode: CoordinateMode, base: &Path, opts: &LoadOptions) -> Result<ImageLabels> {
    let dims = (e.width_px, e.height_px);
    let mut gt_boxes = read_labels(&resolve(base, &e.gt_label_path), mode, dims, LabelKind::GroundTruth)?;
    let mut pred_boxes = match &e.pred_label_path {
        Some(p) => read_labels(&resolve(base, p), mode, dims, LabelKind::Prediction)?,
        None => Vec::new(),
    };
    if let Some(c) = opts.class_filter {
        gt_boxes.retain(|b| b.class_id == c);
        pred_boxes.retain(|b| b.class_id == c);
    }
    let labels = ImageLabels {
        image_id: e.image_id.clone(),
        width_px: e.width_px,
        height_px: e.height_px,
        gt_boxes,
        pred_boxes,
    };
    labels.validate().map_err(|err| Error::Load {
        entry: e.image_id.clone(),
        message: err.to_string(),
    })?;
    Ok(labels)
}

/// Resolves the pairing table into `(real image index, synthetic image index)`
/// pairs, in table order. The table comes from whichever manifest carries
/// one; if both do they must agree.
pub fn pair_datasets(real: &Dataset, synth: &Dataset) -> Result<Vec<(usize, usize)>> {
    let table = match (real.pairing.is_empty(), synth.pairing.is_empty()) {
        (true, true) => {
            return Err(Error::Load {
                entry: format!("{} / {}", real.dataset_id, synth.dataset_id),
                message: "neither manifest has a pairing table".into(),
            })
        }
        (false, true) => &real.pairing,
        (true, false) => &synth.pairing,
        (false, false) => {
            if real.pairing != synth.pairing {
                return Err(Error::Load {
                    entry: format!("{} / {}", real.dataset_id, synth.dataset_id),
                    message: "the two manifests carry different pairing tables".into(),
                });
            }
            &real.pairing
        }
    };
    let real_idx: HashMap<&str, usize> = real.images.iter().enumerate().map(|(i, im)| (im.image_id.as_str(), i)).collect();
    let synth_idx: HashMap<&str, usize> =
        synth.images.iter().enumerate().map(|(i, im)| (im.image_id.as_str(), i)).collect();
    table
        .iter()
        .map(|p| {
            let r = real_idx.get(p.real_image_id.as_str()).ok_or_else(|| Error::Load {
                entry: p.real_image_id.clone(),
                message: format!("pairing references an image not in dataset {}", real.dataset_id),
            })?;
            let s = synth_idx.get(p.synth_image_id.as_str()).ok_or_else(|| Error::Load {
                entry: p.synth_image_id.clone(),
                message: format!("pairing references an image not in dataset {}", synth.dataset_id),
            })?;
            Ok((*r, *s))
        })
        .collect()
}
