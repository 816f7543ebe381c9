//! Instance Performance Difference (IPD) toolkit.
//!
//! Measures the sim-to-real gap between paired real and synthetic detection
//! datasets. For every real/synthetic image pair the ground-truth instance
//! centers are registered with a RANSAC search over 3-point affine
//! hypotheses, instances are paired by optimal assignment, and the
//! per-instance detector IOUs of the two domains are compared. The IPD is the
//! mean absolute difference of those performance values.
//!
//! Module map:
//!
//! * [`geometry`]: boxes, IOU, points and affine maps.
//! * [`registration`]: RANSAC point-set registration.
//! * [`matching`]: optimal assignment and gated instance pairing.
//! * [`metric`]: IOU tables, performance values, IPD and cross-validation.
//! * [`baselines`]: single-class average precision.
//! * [`ingestion`]: label files, manifests and reports.
//! * [`scenegen`]: synthetic scene pairs with known ground truth.
//! * [`pipeline`]: registration, matching and evaluation over whole datasets.
//! * [`cli`]: the `ipd` command-line front end.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod ingestion;
pub mod matching;
pub mod metric;
pub mod pipeline;
pub mod registration;
pub mod scenegen;

pub use error::{Error, Result};
pub use geometry::{apply_affine, bbox_center, fit_affine_3pt, iou, AffineTransform2D, BBox, Point2};
pub use matching::{assignment_min_cost, match_instances, InstancePairing};
pub use metric::{evaluate_pair, ipd, IpdResult, PerfRecord};
pub use registration::{register, RegistrationConfig, RegistrationResult};
