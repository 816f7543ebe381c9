#![allow(dead_code)]

use std::collections::BTreeSet;

use ipd_core::geometry::AffineTransform2D;
use ipd_core::matching::InstancePairing;
use ipd_core::scenegen::{DetectorProfile, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random affine map with condition number in `[1, max_cond]`, scaled so the
/// whole synthetic frame lands inside a real frame of the returned size.
pub fn well_conditioned_affine(rng: &mut impl Rng, frame: (u32, u32), max_cond: f64) -> (AffineTransform2D, (u32, u32)) {
    let rot = |t: f64| AffineTransform2D::rotation(t);
    let cond = rng.random_range(1.0..=max_cond);
    let gain = rng.random_range(0.8..=1.2);
    let s = cond.sqrt();
    let stretch = AffineTransform2D::new(gain * s, 0.0, 0.0, gain / s, 0.0, 0.0);
    let theta1 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let theta2 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let linear = rot(theta1).compose(&stretch).compose(&rot(theta2));

    let (w, h) = (frame.0 as f64, frame.1 as f64);
    let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)].map(|(x, y)| linear.apply(ipd_core::Point2::new(x, y)));
    let min_x = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let min_y = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_x = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let max_y = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let t = AffineTransform2D::new(linear.a11, linear.a12, linear.a21, linear.a22, -min_x, -min_y);
    let real_frame = ((max_x - min_x).ceil() as u32 + 1, (max_y - min_y).ceil() as u32 + 1);
    (t, real_frame)
}

pub fn condition_number(t: &AffineTransform2D) -> f64 {
    let (a, b, c, d) = (t.a11, t.a12, t.a21, t.a22);
    let s = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s + disc) / (s - disc)).sqrt()
}

/// Scene spec of the recovery benchmark: 20-50 instances, condition number
/// at most 5, 0.5 px center noise and 20% dropout on each side.
pub fn recovery_spec(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = (640, 480);
    let (transform, real_frame) = well_conditioned_affine(&mut rng, frame, 5.0);
    SceneSpec {
        n_instances: rng.random_range(20..=50),
        frame,
        real_frame: Some(real_frame),
        transform,
        center_noise_sigma: 0.5,
        dropout_real: 0.2,
        dropout_synth: 0.2,
        detector_profile_real: DetectorProfile::Uniform { low: 0.4, high: 0.95 },
        detector_profile_synth: DetectorProfile::Uniform { low: 0.4, high: 0.95 },
        rng_seed: rng.random(),
        ..SceneSpec::default()
    }
}

/// Correct pairs over the larger of the true and the reported pair counts.
pub fn correct_fraction(pairing: &InstancePairing, truth: &[(usize, usize)]) -> f64 {
    let truth: BTreeSet<(usize, usize)> = truth.iter().copied().collect();
    let correct = pairing
        .pairs
        .iter()
        .filter(|p| truth.contains(&(p.real_index, p.synth_index)))
        .count();
    let denom = truth.len().max(pairing.pairs.len());
    if denom == 0 {
        1.0
    } else {
        correct as f64 / denom as f64
    }
}

pub fn pairing_set(pairing: &InstancePairing) -> BTreeSet<(usize, usize)> {
    pairing.pairs.iter().map(|p| (p.real_index, p.synth_index)).collect()
}
