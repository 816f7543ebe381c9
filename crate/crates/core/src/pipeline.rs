//! Registration, matching and evaluation over paired datasets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use std::path::Path;

use crate::ingestion::{load_dataset_file, pair_datasets, Dataset, DatasetRole, ImageLabels, IpdReport, LoadOptions};
use crate::matching::{match_instances, InstancePairing};
use crate::metric::{evaluate_pair, IpdResult, DEFAULT_CONF_THRESHOLD};
use crate::registration::{register, RegistrationConfig, RegistrationResult};

/// How the maximum center distance of a matched pair is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum GateRule {
    /// `fraction x` the median ground-truth box diagonal of the real image.
    MedianDiagonalFraction { fraction: f64 },
    /// A fixed distance in pixels.
    Fixed { distance: f64 },
}

impl Default for GateRule {
    fn default() -> Self {
        GateRule::MedianDiagonalFraction { fraction: 0.5 }
    }
}

impl GateRule {
    /// Gate for one image; `None` when the real image has no boxes to
    /// measure.
    pub fn gate_for(&self, real: &ImageLabels) -> Result<Option<f64>> {
        let g = match *self {
            GateRule::Fixed { distance } => Some(distance),
            GateRule::MedianDiagonalFraction { fraction } => {
                let mut d: Vec<f64> = real.gt_boxes.iter().map(|b| b.diagonal()).collect();
                if d.is_empty() {
                    return Ok(None);
                }
                d.sort_unstable_by(f64::total_cmp);
                let n = d.len();
                let median = if n % 2 == 1 {
                    d[n / 2]
                } else {
                    (d[n / 2 - 1] + d[n / 2]) / 2.0
                };
                Some(fraction * median)
            }
        };
        match g {
            Some(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
            Some(v) => Err(Error::invalid(format!("gate distance {v} must be finite and > 0"))),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// `rng_seed` is the base seed; each image pair derives its own.
    pub registration: RegistrationConfig,
    pub gate: GateRule,
    pub conf_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            registration: RegistrationConfig::default(),
            gate: GateRule::default(),
            conf_threshold: DEFAULT_CONF_THRESHOLD,
        }
    }
}

/// Registration and pairing of one real/synthetic image pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub real_image_id: String,
    pub synth_image_id: String,
    pub seed: u64,
    /// Absent when either image has no ground-truth boxes.
    pub registration: Option<RegistrationResult>,
    pub pairing: InstancePairing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub dataset_pair_id: String,
    pub outcomes: Vec<PairOutcome>,
    pub result: IpdResult,
}

/// Per-pair RNG seed: first 8 bytes of SHA-256 over the base seed and both
/// image ids.
pub fn derive_seed(base: u64, real_image_id: &str, synth_image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((real_image_id.len() as u64).to_le_bytes());
    h.update(real_image_id.as_bytes());
    h.update(synth_image_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Registers the synthetic GT centers onto the real ones and pairs instances.
pub fn register_and_match(real: &ImageLabels, synth: &ImageLabels, cfg: &PipelineConfig, seed: u64) -> Result<PairOutcome> {
    let real_pts = real.gt_centers();
    let synth_pts = synth.gt_centers();
    let (registration, pairing) = match cfg.gate.gate_for(real)? {
        Some(gate) if !synth_pts.is_empty() => {
            let reg_cfg = RegistrationConfig {
                rng_seed: seed,
                ..cfg.registration.clone()
            };
            let reg = register(&synth_pts, &real_pts, &reg_cfg)?;
            if reg.fallback {
                log::warn!(
                    "{} / {}: registration fell back to a centroid translation",
                    real.image_id,
                    synth.image_id
                );
            }
            let pairing = match_instances(&reg.transform, &synth_pts, &real_pts, gate)?;
            (Some(reg), pairing)
        }
        gate => (
            None,
            // Without real boxes there is nothing to gate; 0 marks the gate as unused.
            InstancePairing::empty(real_pts.len(), synth_pts.len(), gate.unwrap_or(0.0)),
        ),
    };
    log::debug!(
        "{} / {}: {} pairs, {} unmatched real, {} unmatched synthetic",
        real.image_id,
        synth.image_id,
        pairing.pairs.len(),
        pairing.unmatched_real.len(),
        pairing.unmatched_synth.len()
    );
    Ok(PairOutcome {
        real_image_id: real.image_id.clone(),
        synth_image_id: synth.image_id.clone(),
        seed,
        registration,
        pairing,
    })
}

/// Full IPD evaluation of two datasets. Image pairs are processed in
/// parallel; results are assembled in pairing-table order.
pub fn run(real: &Dataset, synth: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let index_pairs = pair_datasets(real, synth)?;
    let outcomes = index_pairs
        .par_iter()
        .map(|&(ri, si)| {
            let (r, s) = (&real.images[ri], &synth.images[si]);
            let seed = derive_seed(cfg.registration.rng_seed, &r.image_id, &s.image_id);
            register_and_match(r, s, cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let real_labels: Vec<ImageLabels> = index_pairs.iter().map(|&(ri, _)| real.images[ri].clone()).collect();
    let synth_labels: Vec<ImageLabels> = index_pairs.iter().map(|&(_, si)| synth.images[si].clone()).collect();
    let pairings: Vec<InstancePairing> = outcomes.iter().map(|o| o.pairing.clone()).collect();
    let dataset_pair_id = format!("{}/{}", real.dataset_id, synth.dataset_id);
    let result = evaluate_pair(&dataset_pair_id, &real_labels, &synth_labels, &pairings, cfg.conf_threshold)?;
    Ok(PipelineOutput {
        dataset_pair_id,
        outcomes,
        result,
    })
}

/// Loads two manifests, runs the pipeline and assembles the full report.
pub fn evaluate_manifests(real: &Path, synth: &Path, cfg: &PipelineConfig, opts: &LoadOptions) -> Result<IpdReport> {
    let r = load_dataset_file(real, DatasetRole::Real, opts)?;
    let s = load_dataset_file(synth, DatasetRole::Synthetic, opts)?;
    let out = run(&r, &s, cfg)?;
    Ok(IpdReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        real_dataset: r.dataset_id,
        synth_dataset: s.dataset_id,
        class_filter: opts.class_filter,
        config: cfg.clone(),
        result: out.result,
        image_pairs: out.outcomes,
    })
}
