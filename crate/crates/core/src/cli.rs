//! The `ipd` command-line front end.
//!
//! Exit codes: 0 on success, 2 on input or parse errors, 3 when registration
//! and matching produced no instance pairs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{average_precision, DEFAULT_AP_IOU_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::AffineTransform2D;
use crate::ingestion::report::CellResult;
use crate::ingestion::{
    load_dataset_file, pair_datasets, parse_labels_of_kind, write_ipd_report, write_report, CoordinateMode,
    CrossValReport, Dataset, DatasetRole, ImageLabels, IpdReport, LabelKind, LoadOptions, ReportFormat,
};
use crate::metric::{closest_domain, cross_validation, filter_predictions, CellKey, IpdResult, DEFAULT_CONF_THRESHOLD};
use crate::pipeline::{derive_seed, evaluate_manifests, register_and_match, GateRule, PipelineConfig};
use crate::registration::{RegistrationConfig, TripleSampling, DEFAULT_MAX_ITERATIONS, DEFAULT_TRIM_FRACTION};
use crate::scenegen::{generate_scene_pair, write_scene_dataset, DetectorProfile, SceneSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_PAIRS: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoInstances(_) => EXIT_NO_PAIRS,
        _ => EXIT_INPUT,
    }
}

#[derive(Debug, Parser)]
#[command(name = "ipd", version, about = "Instance Performance Difference between paired real and synthetic datasets")]
pub struct Cli {
    /// Increase diagnostic output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the IPD between a real and a synthetic dataset.
    Ipd(IpdArgs),
    /// Render a train-domain cross-validation table of IPDs.
    Crossval(CrossvalArgs),
    /// Register one image pair and print the transform and instance pairs.
    Register(RegisterArgs),
    /// Generate paired test scenes with known ground truth.
    Scenegen(ScenegenArgs),
    /// Average precision of each dataset's predictions (baseline comparison).
    Ap(ApArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplingArg {
    Uniform,
    Local,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Base RNG seed; each image pair derives its own from the image ids.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    /// Fraction of nearest-neighbor distances trimmed from the registration score.
    #[arg(long, default_value_t = DEFAULT_TRIM_FRACTION)]
    pub trim: f64,
    /// Early-exit score in pixels (default: 1e-3 x scene diagonal).
    #[arg(long)]
    pub early_exit: Option<f64>,
    #[arg(long, value_enum, default_value_t = SamplingArg::Local)]
    pub sampling: SamplingArg,
    /// Neighborhood size for local triple sampling.
    #[arg(long, default_value_t = 4)]
    pub neighbors: usize,
    /// Disable least-squares polishing of registration hypotheses.
    #[arg(long)]
    pub no_refine: bool,
    /// Fixed gate distance in pixels (default: --gate-fraction x median real box diagonal).
    #[arg(long)]
    pub gate: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub gate_fraction: f64,
    /// Predictions below this confidence are ignored.
    #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
    pub conf_threshold: f64,
    /// Keep only boxes of this class id.
    #[arg(long)]
    pub class: Option<u32>,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            registration: RegistrationConfig {
                max_iterations: self.max_iterations,
                early_exit_score: self.early_exit,
                rng_seed: self.seed,
                min_points_for_affine: 3,
                trim_fraction: self.trim,
                sampling: match self.sampling {
                    SamplingArg::Uniform => TripleSampling::Uniform,
                    SamplingArg::Local => TripleSampling::Local {
                        neighbors: self.neighbors,
                    },
                },
                refine: !self.no_refine,
            },
            gate: match self.gate {
                Some(distance) => GateRule::Fixed { distance },
                None => GateRule::MedianDiagonalFraction {
                    fraction: self.gate_fraction,
                },
            },
            conf_threshold: self.conf_threshold,
        }
    }

    fn load_options(&self) -> LoadOptions {
        LoadOptions {
            class_filter: self.class,
            ..LoadOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct IpdArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub synth: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Report destination (default: stdout, after the IPD line).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    /// Domain names in row order, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub domains: Vec<String>,
    /// Precomputed cell `TRAIN:A:B=IPD`; repeatable.
    #[arg(long = "cell")]
    pub cells: Vec<String>,
    /// JSON file of cells, each with `ipd` or `real_manifest`/`synth_manifest`.
    #[arg(long)]
    pub cells_file: Option<PathBuf>,
    /// Reference domain for the closest-domain summary on stderr.
    #[arg(long)]
    pub reference: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long, requires = "synth", conflicts_with_all = ["real_labels", "synth_labels"])]
    pub real: Option<PathBuf>,
    #[arg(long, requires = "real")]
    pub synth: Option<PathBuf>,
    /// Real image id of the pair to register (default: first pairing row).
    #[arg(long)]
    pub image: Option<String>,
    /// Ground-truth label file for the real image (pixel coordinates).
    #[arg(long, requires = "synth_labels")]
    pub real_labels: Option<PathBuf>,
    #[arg(long, requires = "real_labels")]
    pub synth_labels: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ScenegenArgs {
    /// Output directory for label files and manifests.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene spec as JSON; flags below are ignored when given.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub pairs: usize,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Synthetic frame `WIDTHxHEIGHT`.
    #[arg(long, default_value = "640x480")]
    pub frame: String,
    /// Real frame `WIDTHxHEIGHT` (default: same as --frame).
    #[arg(long)]
    pub real_frame: Option<String>,
    /// Synthetic-to-real affine map `a11,a12,a21,a22,tx,ty`.
    #[arg(long, default_value = "1,0,0,1,0,0")]
    pub transform: String,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout_real: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout_synth: f64,
    /// Real detector IOU: `0.9` (fixed) or `0.5:0.9` (uniform).
    #[arg(long, default_value = "0.8")]
    pub real_iou: String,
    #[arg(long, default_value = "0.8")]
    pub synth_iou: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CoordsArg::Normalized)]
    pub coords: CoordsArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CoordsArg {
    Normalized,
    Pixel,
}

#[derive(Debug, Args)]
pub struct ApArgs {
    /// Manifests to evaluate; roles do not matter here.
    #[arg(required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_AP_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
    pub conf_threshold: f64,
    #[arg(long)]
    pub class: Option<u32>,
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(&cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // A second init in the same process (tests) is harmless.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn execute(cmd: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Ipd(a) => cmd_ipd(a, stdout),
        Command::Crossval(a) => cmd_crossval(a, stdout, stderr),
        Command::Register(a) => cmd_register(a, stdout, stderr),
        Command::Scenegen(a) => cmd_scenegen(a, stdout),
        Command::Ap(a) => cmd_ap(a, stdout),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => stdout.write_all(text.as_bytes()).map_err(io_err),
    }
}

fn load_pair(real: &Path, synth: &Path, opts: &LoadOptions) -> Result<(Dataset, Dataset)> {
    let r = load_dataset_file(real, DatasetRole::Real, opts)?;
    let s = load_dataset_file(synth, DatasetRole::Synthetic, opts)?;
    Ok((r, s))
}

fn evaluate(real: &Path, synth: &Path, args: &PipelineArgs) -> Result<IpdReport> {
    evaluate_manifests(real, synth, &args.config(), &args.load_options())
}

pub fn cmd_ipd(a: &IpdArgs, stdout: &mut dyn Write) -> Result<()> {
    let report = evaluate(&a.real, &a.synth, &a.pipeline)?;
    writeln!(stdout, "IPD {:.6}", report.result.ipd).map_err(io_err)?;
    log::info!(
        "{} pairs, {} unmatched real, {} unmatched synthetic",
        report.result.instance_count,
        report.result.unmatched_real_total,
        report.result.unmatched_synth_total
    );
    let text = write_ipd_report(&report, a.format.into())?;
    emit(a.out.as_deref(), &text, stdout)
}

/// One cross-validation cell in a cells file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSpec {
    pub train: String,
    pub pair: (String, String),
    #[serde(default)]
    pub ipd: Option<f64>,
    #[serde(default)]
    pub real_manifest: Option<PathBuf>,
    #[serde(default)]
    pub synth_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellsFile {
    #[serde(default)]
    pub domains: Vec<String>,
    pub cells: Vec<CellSpec>,
}

fn parse_cell_flag(s: &str) -> Result<CellSpec> {
    let bad = || Error::invalid(format!("cell {s:?} is not of the form TRAIN:A:B=IPD"));
    let (lhs, value) = s.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = lhs.split(':').collect();
    let [train, a, b] = parts[..] else {
        return Err(bad());
    };
    let ipd: f64 = value.trim().parse().map_err(|_| bad())?;
    Ok(CellSpec {
        train: train.trim().into(),
        pair: (a.trim().into(), b.trim().into()),
        ipd: Some(ipd),
        real_manifest: None,
        synth_manifest: None,
    })
}

pub fn cmd_crossval(a: &CrossvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let mut domains = a.domains.clone();
    let mut specs: Vec<CellSpec> = Vec::new();
    let mut base = PathBuf::new();
    if let Some(p) = &a.cells_file {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let file: CellsFile = serde_json::from_str(&text).map_err(|e| Error::Load {
            entry: p.display().to_string(),
            message: e.to_string(),
        })?;
        if domains.is_empty() {
            domains = file.domains;
        }
        specs.extend(file.cells);
        base = p.parent().map(Path::to_path_buf).unwrap_or_default();
    }
    for c in &a.cells {
        specs.push(parse_cell_flag(c)?);
    }
    if domains.is_empty() {
        return Err(Error::invalid("no domains given (use --domains or a cells file)"));
    }

    let cfg = a.pipeline.config();
    let mut values: BTreeMap<CellKey, f64> = BTreeMap::new();
    let mut cells = Vec::new();
    let mut any_computed = false;
    for spec in &specs {
        let (value, result): (f64, Option<IpdResult>) = match (&spec.ipd, &spec.real_manifest, &spec.synth_manifest) {
            (Some(v), None, None) => (*v, None),
            (None, Some(r), Some(s)) => {
                let report = evaluate(&base.join(r), &base.join(s), &a.pipeline)?;
                any_computed = true;
                (report.result.ipd, Some(report.result))
            }
            _ => {
                return Err(Error::invalid(format!(
                    "cell train={} pair=({}, {}) needs either ipd or both manifests",
                    spec.train, spec.pair.0, spec.pair.1
                )))
            }
        };
        let key = (spec.train.clone(), spec.pair.clone());
        if values.insert(key, value).is_some() {
            return Err(Error::invalid(format!(
                "cell train={} pair=({}, {}) given twice",
                spec.train, spec.pair.0, spec.pair.1
            )));
        }
        cells.push(CellResult {
            train_domain: spec.train.clone(),
            eval_pair: spec.pair.clone(),
            result,
        });
    }

    let matrix = cross_validation(&domains, &values)?;
    if let Some(reference) = &a.reference {
        if let Some(row) = matrix.row(reference) {
            let closest = closest_domain(row, reference)?;
            writeln!(stderr, "closest to {reference} (trained on {reference}): {closest}").map_err(io_err)?;
        }
    }
    let mut report = CrossValReport::new(matrix);
    report.cells = cells;
    report.config = any_computed.then_some(cfg);
    let text = write_report(&report, a.format.into())?;
    emit(a.out.as_deref(), &text, stdout)
}

fn read_gt_file(path: &Path, id: &str) -> Result<ImageLabels> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let gt = parse_labels_of_kind(&text, CoordinateMode::Pixel, (1, 1), LabelKind::GroundTruth)
        .map_err(|e| e.with_path(path))?;
    Ok(ImageLabels {
        image_id: id.into(),
        width_px: 1,
        height_px: 1,
        gt_boxes: gt,
        pred_boxes: Vec::new(),
    })
}

pub fn cmd_register(a: &RegisterArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let (real, synth) = match (&a.real, &a.synth, &a.real_labels, &a.synth_labels) {
        (Some(r), Some(s), _, _) => {
            let (rd, sd) = load_pair(r, s, &a.pipeline.load_options())?;
            let pairs = pair_datasets(&rd, &sd)?;
            let (ri, si) = match &a.image {
                Some(id) => *pairs
                    .iter()
                    .find(|(ri, _)| rd.images[*ri].image_id == *id)
                    .ok_or_else(|| Error::invalid(format!("image {id:?} is not in the pairing table")))?,
                None => *pairs
                    .first()
                    .ok_or_else(|| Error::invalid("the pairing table is empty"))?,
            };
            (rd.images[ri].clone(), sd.images[si].clone())
        }
        (_, _, Some(r), Some(s)) => (read_gt_file(r, "real")?, read_gt_file(s, "synth")?),
        _ => return Err(Error::invalid("give --real/--synth manifests or --real-labels/--synth-labels")),
    };
    let cfg = a.pipeline.config();
    let seed = derive_seed(cfg.registration.rng_seed, &real.image_id, &synth.image_id);
    let outcome = register_and_match(&real, &synth, &cfg, seed)?;

    let w = |out: &mut dyn Write, s: String| out.write_all(s.as_bytes()).map_err(io_err);
    w(stdout, format!("pair {} <- {}\n", real.image_id, synth.image_id))?;
    match &outcome.registration {
        Some(reg) => {
            if reg.fallback {
                w(
                    stderr,
                    "warning: too few usable points for an affine fit; fell back to centroid translation\n".into(),
                )?;
            }
            let t: &AffineTransform2D = &reg.transform;
            w(stdout, format!("transform [{:.6} {:.6} {:.6}; {:.6} {:.6} {:.6}]\n", t.a11, t.a12, t.tx, t.a21, t.a22, t.ty))?;
            w(
                stdout,
                format!(
                    "score {:.6} iterations {} hypotheses {} fallback {}\n",
                    reg.score, reg.iterations_used, reg.hypothesis_count, reg.fallback
                ),
            )?;
        }
        None => w(stderr, "warning: an image has no ground-truth boxes; nothing to register\n".into())?,
    }
    let p = &outcome.pairing;
    w(stdout, format!("gate {:.6}\n", p.gate_distance))?;
    w(stdout, "real synth distance real_before synth_before synth_after\n".into())?;
    for pair in &p.pairs {
        let rc = real.gt_boxes[pair.real_index].center();
        let sc = synth.gt_boxes[pair.synth_index].center();
        let moved = outcome.registration.as_ref().map_or(sc, |r| r.transform.apply(sc));
        w(
            stdout,
            format!(
                "{} {} {:.6} ({:.3},{:.3}) ({:.3},{:.3}) ({:.3},{:.3})\n",
                pair.real_index, pair.synth_index, pair.distance, rc.x, rc.y, sc.x, sc.y, moved.x, moved.y
            ),
        )?;
    }
    let join = |s: &std::collections::BTreeSet<usize>| s.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    w(stdout, format!("unmatched_real [{}]\n", join(&p.unmatched_real)))?;
    w(stdout, format!("unmatched_synth [{}]\n", join(&p.unmatched_synth)))?;
    Ok(())
}

fn parse_dims(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::invalid(format!("frame {s:?} is not WIDTHxHEIGHT"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

fn parse_transform(s: &str) -> Result<AffineTransform2D> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("transform {s:?} is not six comma-separated numbers")))?;
    let [a11, a12, a21, a22, tx, ty] = v[..] else {
        return Err(Error::invalid(format!("transform {s:?} needs six values")));
    };
    Ok(AffineTransform2D::new(a11, a12, a21, a22, tx, ty))
}

fn parse_profile(s: &str) -> Result<DetectorProfile> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("detector IOU {s:?} is not a number or LOW:HIGH range")))
    };
    match s.split_once(':') {
        Some((lo, hi)) => Ok(DetectorProfile::Uniform {
            low: num(lo)?,
            high: num(hi)?,
        }),
        None => Ok(DetectorProfile::Fixed { iou: num(s)? }),
    }
}

pub fn cmd_scenegen(a: &ScenegenArgs, stdout: &mut dyn Write) -> Result<()> {
    let base = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SceneSpec>(&text).map_err(|e| Error::Load {
                entry: p.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => SceneSpec {
            n_instances: a.instances,
            frame: parse_dims(&a.frame)?,
            real_frame: a.real_frame.as_deref().map(parse_dims).transpose()?,
            transform: parse_transform(&a.transform)?,
            center_noise_sigma: a.noise,
            dropout_real: a.dropout_real,
            dropout_synth: a.dropout_synth,
            detector_profile_real: parse_profile(&a.real_iou)?,
            detector_profile_synth: parse_profile(&a.synth_iou)?,
            rng_seed: a.seed,
            ..SceneSpec::default()
        },
    };
    let mut scenes = Vec::with_capacity(a.pairs);
    let mut oracle_sum = 0.0;
    let mut oracle_n = 0usize;
    for i in 0..a.pairs {
        let (rid, sid) = (format!("real_{i:04}"), format!("synth_{i:04}"));
        let spec = SceneSpec {
            rng_seed: derive_seed(base.rng_seed, &rid, &sid),
            ..base.clone()
        };
        let scene = generate_scene_pair(&spec)?.with_ids(rid, sid);
        for &(r, s) in &scene.correspondence {
            oracle_sum += (scene.real_ious[r] - scene.synth_ious[s]).abs();
            oracle_n += 1;
        }
        scenes.push(scene);
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mode = match a.coords {
        CoordsArg::Normalized => CoordinateMode::Normalized,
        CoordsArg::Pixel => CoordinateMode::Pixel,
    };
    let written = write_scene_dataset(&a.out, &scenes, mode)?;
    let oracle_path = a.out.join("oracle.json");
    let oracle = serde_json::json!({
        "pairs": scenes.len(),
        "true_pairs": oracle_n,
        "oracle_ipd": if oracle_n > 0 { Some(oracle_sum / oracle_n as f64) } else { None },
        "scenes": scenes,
    });
    fs::write(&oracle_path, serde_json::to_string_pretty(&oracle)? + "\n").map_err(|e| Error::io(&oracle_path, e))?;
    writeln!(stdout, "real manifest {}", written.real_manifest.display()).map_err(io_err)?;
    writeln!(stdout, "synth manifest {}", written.synth_manifest.display()).map_err(io_err)?;
    if oracle_n > 0 {
        writeln!(stdout, "oracle IPD {:.6} over {oracle_n} true pairs", oracle_sum / oracle_n as f64).map_err(io_err)?;
    }
    Ok(())
}

pub fn cmd_ap(a: &ApArgs, stdout: &mut dyn Write) -> Result<()> {
    let opts = LoadOptions {
        class_filter: a.class,
        skip_pairing_check: true,
    };
    for m in &a.manifests {
        let d = load_dataset_file(m, DatasetRole::Real, &opts)?;
        let gt: Vec<_> = d.images.iter().map(|im| im.gt_boxes.clone()).collect();
        let pred: Vec<_> = d
            .images
            .iter()
            .map(|im| filter_predictions(&im.pred_boxes, a.conf_threshold))
            .collect();
        let ap = average_precision(&gt, &pred, a.iou_threshold)?;
        writeln!(stdout, "AP@{} {} {:.6}", a.iou_threshold, d.dataset_id, ap).map_err(io_err)?;
    }
    Ok(())
}
