//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion; run with `cargo test -p ipd-core --test acceptance -- --nocapture`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ipd_core::baselines::average_precision;
use ipd_core::cli::{cmd_ipd, Cli, Command};
use ipd_core::geometry::{fit_affine_3pt, iou, BBox, Point2};
use ipd_core::ingestion::{render_crossval_markdown, CoordinateMode};
use ipd_core::matching::{assignment_cost, assignment_min_cost};
use ipd_core::metric::{closest_domain, cross_validation, evaluate_pair, ipd, PerfRecord};
use ipd_core::pipeline::{derive_seed, register_and_match, PipelineConfig};
use ipd_core::scenegen::{generate_scene_pair, write_scene_dataset, DetectorProfile, SceneSpec};
use clap::Parser;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs one criterion, prints its verdict line and fails the test on `FAIL`.
fn criterion(name: &str, body: impl FnOnce() -> Result<String, String>) {
    let outcome = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(detail) => {
            println!("FAIL {name}: {detail}");
            panic!("{name} failed: {detail}");
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Fraction of lattice sample points inside both boxes over those inside
/// either, on a `n x n` grid spanning the union bounding box.
fn raster_iou(a: &BBox, b: &BBox, n: usize) -> f64 {
    let x0 = a.x1().min(b.x1());
    let x1 = a.x2().max(b.x2());
    let y0 = a.y1().min(b.y1());
    let y1 = a.y2().max(b.y2());
    let (hx, hy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    // Samples sit at x0 + (k + 0.5) hx; count those in [lo, hi].
    let count = |lo: f64, hi: f64, origin: f64, h: f64| -> i64 {
        if hi <= lo {
            return 0;
        }
        let first = ((lo - origin) / h - 0.5).ceil().max(0.0) as i64;
        let last = (((hi - origin) / h - 0.5).floor() as i64).min(n as i64 - 1);
        (last - first + 1).max(0)
    };
    let (mut inter, mut uni) = (0i64, 0i64);
    for k in 0..n {
        let y = y0 + (k as f64 + 0.5) * hy;
        let in_a = y >= a.y1() && y <= a.y2();
        let in_b = y >= b.y1() && y <= b.y2();
        let ca = if in_a { count(a.x1(), a.x2(), x0, hx) } else { 0 };
        let cb = if in_b { count(b.x1(), b.x2(), x0, hx) } else { 0 };
        let ci = if in_a && in_b {
            count(a.x1().max(b.x1()), a.x2().min(b.x2()), x0, hx)
        } else {
            0
        };
        inter += ci;
        uni += ca + cb - ci;
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}

#[test]
fn iou_matches_rasterized_oracle() {
    criterion("iou-oracle", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for i in 0..1000 {
            let a = BBox::new(
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
                rng.random_range(1.0..60.0),
                rng.random_range(1.0..60.0),
            )
            .unwrap();
            // Mix overlapping, nested and disjoint pairs.
            let spread = [10.0, 40.0, 150.0][i % 3];
            let b = BBox::new(
                a.cx + rng.random_range(-spread..spread),
                a.cy + rng.random_range(-spread..spread),
                rng.random_range(1.0..60.0),
                rng.random_range(1.0..60.0),
            )
            .unwrap();
            let exact = iou(&a, &b).unwrap();
            let raster = raster_iou(&a, &b, 20_000);
            worst = worst.max((exact - raster).abs());
        }
        let elapsed = start.elapsed();
        ensure(worst <= 1e-3, || format!("max abs error {worst:e}"))?;
        ensure(elapsed <= Duration::from_secs(10), || format!("took {elapsed:?}"))?;
        Ok(format!("1000 pairs, max abs error {worst:.2e}, {elapsed:.2?}"))
    });
}

#[test]
fn affine_exact_fit() {
    criterion("affine-exact-fit", || {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut fitted = 0;
        let mut worst = 0.0f64;
        while fitted < 500 {
            let mut p = || Point2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
            let src = [p(), p(), p()];
            let dst = [p(), p(), p()];
            let ext = extent(&src);
            let area2 = ((src[1].x - src[0].x) * (src[2].y - src[0].y) - (src[2].x - src[0].x) * (src[1].y - src[0].y)).abs();
            if area2 < 1e-2 * ext * ext {
                continue;
            }
            let t = fit_affine_3pt(&src, &dst).map_err(|e| format!("non-degenerate triple rejected: {e}"))?;
            for (s, d) in src.iter().zip(&dst) {
                worst = worst.max(t.apply(*s).distance(d) / ext);
            }
            fitted += 1;
        }
        ensure(worst <= 1e-9, || format!("residual {worst:e} x extent"))?;

        let mut rejected = 0;
        for i in 0..500 {
            let base = Point2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
            let dir = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let at = |s: f64| Point2::new(base.x + s * dir.x, base.y + s * dir.y);
            let src = if i % 5 == 0 {
                let p = Point2::new(base.x.round(), base.y.round());
                [p, Point2::new(p.x + 1.0, p.y + 2.0), Point2::new(p.x + 3.0, p.y + 6.0)]
            } else {
                [at(rng.random_range(-300.0..300.0)), at(rng.random_range(-300.0..300.0)), at(rng.random_range(-300.0..300.0))]
            };
            let dst = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
            if fit_affine_3pt(&src, &dst).is_err() {
                rejected += 1;
            }
        }
        ensure(rejected == 500, || format!("only {rejected}/500 collinear triples rejected"))?;
        Ok(format!("500 fits, max residual {worst:.2e} x extent; 500/500 collinear rejected"))
    });
}

fn extent(pts: &[Point2; 3]) -> f64 {
    let xs = pts.iter().map(|p| p.x);
    let ys = pts.iter().map(|p| p.y);
    let w = xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min);
    let h = ys.clone().fold(f64::NEG_INFINITY, f64::max) - ys.fold(f64::INFINITY, f64::min);
    w.max(h)
}

#[test]
fn registration_recovery() {
    criterion("registration-recovery", || {
        let cfg = PipelineConfig::default();
        let mut good = 0;
        let mut slowest = Duration::ZERO;
        let mut worst_cond = 0.0f64;
        let mut misses = Vec::new();
        for i in 0..100u64 {
            let spec = common::recovery_spec(1000 + i);
            worst_cond = worst_cond.max(common::condition_number(&spec.transform));
            let scene = generate_scene_pair(&spec).map_err(|e| e.to_string())?;
            let seed = derive_seed(0, &scene.real.image_id, &scene.synth.image_id);
            let start = Instant::now();
            let out = register_and_match(&scene.real, &scene.synth, &cfg, seed).map_err(|e| e.to_string())?;
            slowest = slowest.max(start.elapsed());
            let frac = common::correct_fraction(&out.pairing, &scene.correspondence);
            if frac >= 0.95 {
                good += 1;
            } else {
                misses.push(format!("scene {i}: {frac:.3}"));
            }
        }
        ensure(worst_cond <= 5.0 + 1e-9, || format!("condition number {worst_cond}"))?;
        ensure(good >= 95, || format!("{good}/100 scenes recovered; misses {misses:?}"))?;
        ensure(slowest <= Duration::from_secs(1), || format!("slowest scene {slowest:?}"))?;
        Ok(format!("{good}/100 scenes with >= 95% correct pairs; slowest scene {slowest:.2?}"))
    });
}

fn brute_force_min(cost: &[f64], rows: usize, cols: usize) -> f64 {
    // Assign every row of the smaller side to a distinct column of the larger.
    let (small, large, at): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if rows <= cols {
        (rows, cols, Box::new(|r, c| cost[r * cols + c]))
    } else {
        (cols, rows, Box::new(|c, r| cost[r * cols + c]))
    };
    fn go(i: usize, small: usize, large: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, at: &dyn Fn(usize, usize) -> f64) {
        if i == small {
            *best = best.min(acc);
            return;
        }
        for j in 0..large {
            if !used[j] {
                used[j] = true;
                go(i + 1, small, large, used, acc + at(i, j), best, at);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, small, large, &mut vec![false; large], 0.0, &mut best, &*at);
    best
}

#[test]
fn assignment_optimality() {
    criterion("assignment-optimality", || {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for case in 0..200 {
            let small = rng.random_range(1..=7);
            let large = small + rng.random_range(0..=3);
            let (rows, cols) = if case % 2 == 0 { (small, large) } else { (large, small) };
            let cost: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0..50) as f64).collect();
            let got = assignment_min_cost(&cost, rows, cols).map_err(|e| e.to_string())?;
            ensure(got.len() == rows.min(cols), || format!("case {case}: {} pairs", got.len()))?;
            let total = assignment_cost(&cost, cols, &got);
            let best = brute_force_min(&cost, rows, cols);
            ensure(total == best, || format!("case {case} ({rows}x{cols}): {total} vs brute force {best}"))?;
        }
        Ok("200 matrices equal brute-force minimum exactly".into())
    });
}

fn equivalence_spec(seed: u64, identical: bool) -> SceneSpec {
    let mut spec = common::recovery_spec(seed);
    if identical {
        let iou = 0.55 + 0.4 * (seed % 7) as f64 / 7.0;
        spec.detector_profile_real = DetectorProfile::Fixed { iou };
        spec.detector_profile_synth = DetectorProfile::Fixed { iou };
    } else {
        spec.detector_profile_real = DetectorProfile::Uniform { low: 0.3, high: 0.95 };
        spec.detector_profile_synth = DetectorProfile::Uniform { low: 0.5, high: 0.9 };
    }
    spec
}

#[test]
fn pipeline_matches_oracle() {
    criterion("pipeline-oracle-equivalence", || {
        let cfg = PipelineConfig::default();
        let mut recovered = 0;
        let mut worst = 0.0f64;
        let mut worst_identical = 0.0f64;
        for i in 0..50u64 {
            for identical in [false, true] {
                let scene = generate_scene_pair(&equivalence_spec(2000 + i, identical)).map_err(|e| e.to_string())?;
                let seed = derive_seed(0, &scene.real.image_id, &scene.synth.image_id);
                let out = register_and_match(&scene.real, &scene.synth, &cfg, seed).map_err(|e| e.to_string())?;
                let truth: BTreeSet<_> = scene.correspondence.iter().copied().collect();
                if common::pairing_set(&out.pairing) != truth {
                    continue;
                }
                let result = evaluate_pair(
                    "scene",
                    std::slice::from_ref(&scene.real),
                    std::slice::from_ref(&scene.synth),
                    std::slice::from_ref(&out.pairing),
                    cfg.conf_threshold,
                )
                .map_err(|e| e.to_string())?;
                let oracle = scene.oracle_ipd().ok_or("scene without true pairs")?;
                let err = (result.ipd - oracle).abs();
                if identical {
                    worst_identical = worst_identical.max(result.ipd);
                } else {
                    recovered += 1;
                }
                worst = worst.max(err);
            }
        }
        ensure(recovered > 0, || "no scenario recovered the true pairing".into())?;
        ensure(worst <= 2e-3, || format!("pipeline vs oracle error {worst:e}"))?;
        ensure(worst_identical <= 2e-3, || format!("identical profiles give IPD {worst_identical:e}"))?;
        Ok(format!(
            "{recovered}/50 recovered; max |IPD - oracle| {worst:.2e}; identical-profile IPD <= {worst_identical:.2e}"
        ))
    });
}

fn records_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..60)
}

fn to_records(v: &[(f64, f64)]) -> Vec<PerfRecord> {
    v.iter()
        .enumerate()
        .map(|(i, &(r, s))| PerfRecord {
            dataset_pair_id: "a/b".into(),
            image_id: format!("img{}", i % 4),
            real_index: i,
            synth_index: i,
            p_real: r,
            p_synth: s,
        })
        .collect()
}

#[test]
fn ipd_algebra() {
    criterion("ipd-algebra", || {
        let mut runner = TestRunner::new(Config {
            cases: 512,
            ..Config::default()
        });
        runner
            .run(&(records_strategy(), 1usize..10), |(pairs, split)| {
                let recs = to_records(&pairs);
                let v = ipd(&recs).unwrap().ipd;
                prop_assert!((0.0..=1.0).contains(&v));

                let same: Vec<_> = pairs.iter().map(|&(r, _)| (r, r)).collect();
                prop_assert_eq!(ipd(&to_records(&same)).unwrap().ipd, 0.0);

                let swapped: Vec<_> = pairs.iter().map(|&(r, s)| (s, r)).collect();
                prop_assert_eq!(ipd(&to_records(&swapped)).unwrap().ipd, v);

                // Weighted mean of partition means equals the overall mean.
                let k = split.min(recs.len());
                let (a, b) = recs.split_at(k);
                let mut recombined = 0.0;
                for part in [a, b] {
                    if !part.is_empty() {
                        recombined += ipd(part).unwrap().ipd * part.len() as f64;
                    }
                }
                recombined /= recs.len() as f64;
                prop_assert!((recombined - v).abs() <= 1e-12, "{} vs {}", recombined, v);

                let direct = pairs.iter().map(|(r, s)| (r - s).abs()).sum::<f64>() / pairs.len() as f64;
                prop_assert!((direct - v).abs() <= 1e-12);
                Ok(())
            })
            .map_err(|e| e.to_string())?;
        Ok("reflexivity, symmetry, range and mean decomposition over 512 random record sets".into())
    });
}

#[test]
fn table_one_golden() {
    criterion("table1-golden", || {
        let k = |t: &str, a: &str, b: &str| (t.to_string(), (a.to_string(), b.to_string()));
        let values = BTreeMap::from([
            (k("Real", "Real", "Hapke"), 0.3152),
            (k("Real", "Real", "Principled"), 0.2256),
            (k("Principled", "Principled", "Hapke"), 0.0511),
            (k("Principled", "Real", "Principled"), 0.3808),
            (k("Hapke", "Principled", "Hapke"), 0.0261),
            (k("Hapke", "Real", "Hapke"), 0.4638),
        ]);
        let domains: Vec<String> = ["Real", "Principled", "Hapke"].map(String::from).to_vec();
        let m = cross_validation(&domains, &values).map_err(|e| e.to_string())?;
        let rendered = render_crossval_markdown(&m);
        let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/table1.md"))
            .map_err(|e| e.to_string())?;
        ensure(rendered == golden, || format!("rendered:\n{rendered}\nexpected:\n{golden}"))?;
        let closest = closest_domain(m.row("Real").ok_or("no Real row")?, "Real").map_err(|e| e.to_string())?;
        ensure(closest == "Principled", || format!("closest to Real is {closest}"))?;
        Ok("table matches golden file; closest to Real is Principled".into())
    });
}

#[test]
fn ap_sanity() {
    criterion("ap-sanity", || {
        let sq = |x: f64, y: f64| BBox::new(x, y, 10.0, 10.0).unwrap();
        let gt = vec![vec![sq(10.0, 10.0), sq(50.0, 50.0)], vec![sq(30.0, 30.0)]];
        let perfect: Vec<Vec<BBox>> = gt
            .iter()
            .map(|im| im.iter().map(|b| b.clone().with_confidence(0.9).unwrap()).collect())
            .collect();
        let ap_perfect = average_precision(&gt, &perfect, 0.5).map_err(|e| e.to_string())?;
        ensure(ap_perfect == 1.0, || format!("perfect detector AP {ap_perfect}"))?;

        let ap_empty = average_precision(&gt, &[vec![], vec![]], 0.5).map_err(|e| e.to_string())?;
        ensure(ap_empty == 0.0, || format!("empty predictions AP {ap_empty}"))?;

        let gt2 = vec![vec![sq(10.0, 10.0), sq(50.0, 50.0)]];
        let pred2 = vec![vec![
            sq(80.0, 80.0).with_confidence(0.9).unwrap(),
            sq(10.0, 10.0).with_confidence(0.6).unwrap(),
        ]];
        let ap_traced = average_precision(&gt2, &pred2, 0.5).map_err(|e| e.to_string())?;
        ensure(ap_traced == 0.25, || format!("hand-traced example AP {ap_traced}"))?;
        Ok("perfect 1.0, empty 0.0, false-positive-first example 0.25".into())
    });
}

#[test]
fn determinism() {
    criterion("determinism", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let scenes = (0..4u64)
            .map(|i| {
                generate_scene_pair(&common::recovery_spec(3000 + i))
                    .map(|s| s.with_ids(format!("r{i}"), format!("s{i}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let written = write_scene_dataset(dir.path(), &scenes, CoordinateMode::Normalized).map_err(|e| e.to_string())?;
        let mut reports = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("report{run}.json"));
            let argv = [
                "ipd".as_ref(),
                "ipd".as_ref(),
                "--real".as_ref(),
                written.real_manifest.as_os_str(),
                "--synth".as_ref(),
                written.synth_manifest.as_os_str(),
                "--seed".as_ref(),
                "7".as_ref(),
                "--out".as_ref(),
                out.as_os_str(),
            ];
            let cli = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
            let Command::Ipd(args) = cli.command else {
                return Err("parsed to the wrong subcommand".into());
            };
            cmd_ipd(&args, &mut Vec::new()).map_err(|e| e.to_string())?;
            reports.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        ensure(reports[0] == reports[1], || "reports differ".into())?;
        Ok(format!("two runs gave byte-identical {}-byte JSON reports", reports[0].len()))
    });
}
