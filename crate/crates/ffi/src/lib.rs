//! C ABI for `ipd-core`.
//!
//! Every fallible function returns an [`IpdStatus`]; on failure a message is
//! available from [`ipd_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function. Strings
//! returned as `char *` are owned by the caller and released with
//! [`ipd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ipd_core::error::Error;
use ipd_core::ingestion::{write_ipd_report, IpdReport, LoadOptions, ReportFormat};
use ipd_core::metric::PerfRecord;
use ipd_core::pipeline::{evaluate_manifests, GateRule, PipelineConfig};
use ipd_core::registration::{RegistrationConfig, TripleSampling};
use ipd_core::{AffineTransform2D, BBox, Point2};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidInput = 2,
    NoInstances = 3,
    Degenerate = 4,
    Parse = 5,
    Load = 6,
    Io = 7,
    Incomplete = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IpdStatus {
    match err {
        Error::InvalidInput(_) | Error::Spec(_) => IpdStatus::InvalidInput,
        Error::DegenerateSample(_) => IpdStatus::Degenerate,
        Error::NoInstances(_) => IpdStatus::NoInstances,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => IpdStatus::Parse,
        Error::Load { .. } => IpdStatus::Load,
        Error::IncompleteResults(_) => IpdStatus::Incomplete,
        Error::Io { .. } => IpdStatus::Io,
    }
}

fn fail(err: Error) -> IpdStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

fn null_arg(name: &str) -> IpdStatus {
    set_error(format!("{name} is null"));
    IpdStatus::NullArgument
}

/// Runs `f`, converting panics into `IpdStatus::Panic`.
fn guard(f: impl FnOnce() -> IpdStatus) -> IpdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            IpdStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, IpdStatus> {
    if p.is_null() {
        return Err(null_arg(name));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(format!("{name} is not valid UTF-8"));
            Err(IpdStatus::InvalidInput)
        }
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ipd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ipd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ipd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdPoint {
    pub x: f64,
    pub y: f64,
}

/// Axis-aligned box in pixels, center/width/height.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// `p -> [a11 a12; a21 a22] p + [tx; ty]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdAffine {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl From<AffineTransform2D> for IpdAffine {
    fn from(t: AffineTransform2D) -> Self {
        Self {
            a11: t.a11,
            a12: t.a12,
            a21: t.a21,
            a22: t.a22,
            tx: t.tx,
            ty: t.ty,
        }
    }
}

fn point(p: &IpdPoint) -> Point2 {
    Point2::new(p.x, p.y)
}

/// Intersection over union of two boxes.
///
/// # Safety
/// `a`, `b` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ipd_iou(a: *const IpdBox, b: *const IpdBox, out: *mut f64) -> IpdStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return null_arg("ipd_iou argument");
        }
        let (a, b) = (&*a, &*b);
        let boxes = BBox::new(a.cx, a.cy, a.w, a.h).and_then(|x| Ok((x, BBox::new(b.cx, b.cy, b.w, b.h)?)));
        match boxes.and_then(|(x, y)| ipd_core::iou(&x, &y)) {
            Ok(v) => {
                *out = v;
                IpdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Exact affine map taking `src[i]` to `dst[i]` for three point pairs.
///
/// # Safety
/// `src` and `dst` must point to three points each; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipd_fit_affine_3pt(src: *const IpdPoint, dst: *const IpdPoint, out: *mut IpdAffine) -> IpdStatus {
    guard(|| {
        if src.is_null() || dst.is_null() || out.is_null() {
            return null_arg("ipd_fit_affine_3pt argument");
        }
        let s = std::slice::from_raw_parts(src, 3);
        let d = std::slice::from_raw_parts(dst, 3);
        let s = [point(&s[0]), point(&s[1]), point(&s[2])];
        let d = [point(&d[0]), point(&d[1]), point(&d[2])];
        match ipd_core::fit_affine_3pt(&s, &d) {
            Ok(t) => {
                *out = t.into();
                IpdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdRegistrationConfig {
    pub max_iterations: u64,
    /// Negative selects the automatic threshold.
    pub early_exit_score: f64,
    pub rng_seed: u64,
    pub trim_fraction: f64,
    /// Neighborhood size for local triple sampling; 0 samples uniformly.
    pub local_neighbors: u32,
    pub refine: bool,
}

impl From<&RegistrationConfig> for IpdRegistrationConfig {
    fn from(c: &RegistrationConfig) -> Self {
        Self {
            max_iterations: c.max_iterations as u64,
            early_exit_score: c.early_exit_score.unwrap_or(-1.0),
            rng_seed: c.rng_seed,
            trim_fraction: c.trim_fraction,
            local_neighbors: match c.sampling {
                TripleSampling::Uniform => 0,
                TripleSampling::Local { neighbors } => neighbors as u32,
            },
            refine: c.refine,
        }
    }
}

impl IpdRegistrationConfig {
    fn to_core(self) -> RegistrationConfig {
        RegistrationConfig {
            max_iterations: usize::try_from(self.max_iterations).unwrap_or(usize::MAX),
            early_exit_score: (self.early_exit_score >= 0.0).then_some(self.early_exit_score),
            rng_seed: self.rng_seed,
            trim_fraction: self.trim_fraction,
            sampling: match self.local_neighbors {
                0 => TripleSampling::Uniform,
                k => TripleSampling::Local { neighbors: k as usize },
            },
            refine: self.refine,
            ..RegistrationConfig::default()
        }
    }
}

/// Fills `out` with the library defaults.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipd_registration_config_default(out: *mut IpdRegistrationConfig) -> IpdStatus {
    if out.is_null() {
        return null_arg("out");
    }
    *out = (&RegistrationConfig::default()).into();
    IpdStatus::Ok
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdRegistrationResult {
    /// Maps synthetic coordinates into real-image coordinates.
    pub transform: IpdAffine,
    pub score: f64,
    pub iterations_used: u64,
    pub hypothesis_count: u64,
    pub fallback: bool,
}

/// Registers synthetic points onto real points.
///
/// # Safety
/// `synth` and `real` must point to `n_synth` and `n_real` points; `cfg` may
/// be null for defaults; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipd_register(
    synth: *const IpdPoint,
    n_synth: usize,
    real: *const IpdPoint,
    n_real: usize,
    cfg: *const IpdRegistrationConfig,
    out: *mut IpdRegistrationResult,
) -> IpdStatus {
    guard(|| {
        if out.is_null() || (synth.is_null() && n_synth > 0) || (real.is_null() && n_real > 0) {
            return null_arg("ipd_register argument");
        }
        let pts = |p: *const IpdPoint, n: usize| -> Vec<Point2> {
            if n == 0 {
                Vec::new()
            } else {
                std::slice::from_raw_parts(p, n).iter().map(point).collect()
            }
        };
        let cfg = if cfg.is_null() {
            RegistrationConfig::default()
        } else {
            (*cfg).to_core()
        };
        match ipd_core::register(&pts(synth, n_synth), &pts(real, n_real), &cfg) {
            Ok(r) => {
                *out = IpdRegistrationResult {
                    transform: r.transform.into(),
                    score: r.score,
                    iterations_used: r.iterations_used as u64,
                    hypothesis_count: r.hypothesis_count as u64,
                    fallback: r.fallback,
                };
                IpdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Accumulates paired performance values.
pub struct IpdRecords {
    records: Vec<PerfRecord>,
}

#[no_mangle]
pub extern "C" fn ipd_records_new() -> *mut IpdRecords {
    Box::into_raw(Box::new(IpdRecords { records: Vec::new() }))
}

/// # Safety
/// `h` must come from [`ipd_records_new`] and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ipd_records_free(h: *mut IpdRecords) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Appends one matched instance pair. `image_id` may be null.
///
/// # Safety
/// `h` must be a live handle; `image_id` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ipd_records_push(h: *mut IpdRecords, image_id: *const c_char, p_real: f64, p_synth: f64) -> IpdStatus {
    guard(|| {
        let Some(h) = h.as_mut() else {
            return null_arg("records handle");
        };
        let id = if image_id.is_null() {
            String::new()
        } else {
            CStr::from_ptr(image_id).to_string_lossy().into_owned()
        };
        let i = h.records.len();
        h.records.push(PerfRecord {
            dataset_pair_id: String::new(),
            image_id: id,
            real_index: i,
            synth_index: i,
            p_real,
            p_synth,
        });
        IpdStatus::Ok
    })
}

/// Mean absolute difference over the pushed pairs.
///
/// # Safety
/// `h` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ipd_records_compute(h: *const IpdRecords, out: *mut f64) -> IpdStatus {
    guard(|| {
        let Some(h) = h.as_ref() else {
            return null_arg("records handle");
        };
        if out.is_null() {
            return null_arg("out");
        }
        match ipd_core::ipd(&h.records) {
            Ok(r) => {
                *out = r.ipd;
                IpdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdPipelineConfig {
    pub registration: IpdRegistrationConfig,
    /// Fixed gate in pixels; when not positive the gate is
    /// `gate_fraction x` the median real box diagonal.
    pub gate_distance: f64,
    pub gate_fraction: f64,
    pub conf_threshold: f64,
}

impl IpdPipelineConfig {
    fn to_core(self) -> PipelineConfig {
        PipelineConfig {
            registration: self.registration.to_core(),
            gate: if self.gate_distance > 0.0 {
                GateRule::Fixed {
                    distance: self.gate_distance,
                }
            } else {
                GateRule::MedianDiagonalFraction {
                    fraction: self.gate_fraction,
                }
            },
            conf_threshold: self.conf_threshold,
        }
    }
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipd_pipeline_config_default(out: *mut IpdPipelineConfig) -> IpdStatus {
    if out.is_null() {
        return null_arg("out");
    }
    let d = PipelineConfig::default();
    let fraction = match d.gate {
        GateRule::MedianDiagonalFraction { fraction } => fraction,
        GateRule::Fixed { .. } => 0.5,
    };
    *out = IpdPipelineConfig {
        registration: (&d.registration).into(),
        gate_distance: 0.0,
        gate_fraction: fraction,
        conf_threshold: d.conf_threshold,
    };
    IpdStatus::Ok
}

/// Result of evaluating two dataset manifests.
pub struct IpdEvaluation {
    report: IpdReport,
}

/// Evaluates a real and a synthetic manifest. `cfg` may be null for defaults.
///
/// # Safety
/// Paths must be NUL-terminated UTF-8; `out` must be valid. On success
/// `*out` receives a handle to release with [`ipd_evaluation_free`].
#[no_mangle]
pub unsafe extern "C" fn ipd_evaluate_manifests(
    real_manifest: *const c_char,
    synth_manifest: *const c_char,
    cfg: *const IpdPipelineConfig,
    out: *mut *mut IpdEvaluation,
) -> IpdStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("out");
        }
        *out = ptr::null_mut();
        let real = match path_arg(real_manifest, "real_manifest") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let synth = match path_arg(synth_manifest, "synth_manifest") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let cfg = if cfg.is_null() {
            PipelineConfig::default()
        } else {
            (*cfg).to_core()
        };
        match evaluate_manifests(real, synth, &cfg, &LoadOptions::default()) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(IpdEvaluation { report }));
                IpdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipd_evaluation_free(h: *mut IpdEvaluation) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// IPD value of an evaluation; NaN for a null handle.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipd_evaluation_value(h: *const IpdEvaluation) -> f64 {
    h.as_ref().map_or(f64::NAN, |e| e.report.result.ipd)
}

/// Number of matched instance pairs; 0 for a null handle.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipd_evaluation_instance_count(h: *const IpdEvaluation) -> u64 {
    h.as_ref().map_or(0, |e| e.report.result.instance_count as u64)
}

/// Full JSON report; release with [`ipd_string_free`]. Null on failure.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ipd_evaluation_to_json(h: *const IpdEvaluation) -> *mut c_char {
    let Some(h) = h.as_ref() else {
        null_arg("evaluation handle");
        return ptr::null_mut();
    };
    match write_ipd_report(&h.report, ReportFormat::Json) {
        Ok(text) => CString::new(text).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}
