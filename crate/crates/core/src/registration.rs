//! Point-set registration of synthetic onto real instance centers.
//!
//! Each iteration draws one triple of synthetic centers and one triple of
//! real centers, fits an exact affine map for each of the six bijections
//! between them and scores the map by the trimmed mean nearest-neighbor
//! distance of the transformed synthetic set. The lowest-scoring hypothesis
//! over the whole budget wins. The returned transform always maps synthetic
//! coordinates into real-image coordinates.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_affine_3pt, fit_affine_lstsq, AffineTransform2D, Point2};

/// How each iteration picks its two point triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TripleSampling {
    /// Three distinct points uniformly at random from each set.
    Uniform,
    /// A uniformly drawn seed point plus two distinct points drawn from its
    /// `neighbors` nearest neighbors, independently in each set. Affine maps
    /// roughly preserve neighborhoods, so corresponding triples are found in
    /// O(n) rather than O(n^3) draws.
    Local { neighbors: usize },
}

impl Default for TripleSampling {
    fn default() -> Self {
        TripleSampling::Local { neighbors: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub max_iterations: usize,
    /// Stop once the best score drops to this value. `None` uses
    /// `1e-3 x` the diagonal of the real points' bounding box.
    pub early_exit_score: Option<f64>,
    pub rng_seed: u64,
    pub min_points_for_affine: usize,
    pub trim_fraction: f64,
    #[serde(default)]
    pub sampling: TripleSampling,
    /// Least-squares polish of promising hypotheses over their trimmed
    /// nearest-neighbor correspondences.
    #[serde(default = "default_refine")]
    pub refine: bool,
}

fn default_refine() -> bool {
    true
}

pub const DEFAULT_MAX_ITERATIONS: usize = 2000;
pub const DEFAULT_TRIM_FRACTION: f64 = 0.2;
pub const EARLY_EXIT_DIAGONAL_FRACTION: f64 = 1e-3;

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            early_exit_score: None,
            rng_seed: 0,
            min_points_for_affine: 3,
            trim_fraction: DEFAULT_TRIM_FRACTION,
            sampling: TripleSampling::default(),
            refine: true,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.trim_fraction) {
            return Err(Error::invalid(format!(
                "trim_fraction {} outside [0, 1]",
                self.trim_fraction
            )));
        }
        if let Some(e) = self.early_exit_score {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::invalid(format!("early_exit_score {e} must be finite and >= 0")));
            }
        }
        if self.min_points_for_affine < 3 {
            return Err(Error::invalid("min_points_for_affine must be at least 3"));
        }
        if let TripleSampling::Local { neighbors } = self.sampling {
            if neighbors < 2 {
                return Err(Error::invalid("local sampling needs at least 2 neighbors"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub transform: AffineTransform2D,
    pub score: f64,
    pub iterations_used: usize,
    pub hypothesis_count: usize,
    /// Set when the result is the centroid translation rather than a RANSAC
    /// hypothesis (too few points, or every sample was degenerate).
    pub fallback: bool,
}

/// Bijections between two triples, as index permutations of the real triple.
const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

const REFINE_ROUNDS: usize = 8;
/// Hypotheses scoring within this factor of the best so far are refined;
/// a correct map fitted on a small noisy triple can start well behind.
const REFINE_RATIO: f64 = 2.0;

pub fn register(synth_pts: &[Point2], real_pts: &[Point2], cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    check_points(synth_pts, "synthetic")?;
    check_points(real_pts, "real")?;

    let min_pts = cfg.min_points_for_affine;
    if synth_pts.len() < min_pts || real_pts.len() < min_pts {
        return fallback_result(synth_pts, real_pts, cfg.trim_fraction, 0, 0);
    }

    let early_exit = cfg
        .early_exit_score
        .unwrap_or_else(|| EARLY_EXIT_DIAGONAL_FRACTION * bounding_diagonal(real_pts));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut synth_sampler = TripleSampler::new(synth_pts, cfg.sampling);
    let mut real_sampler = TripleSampler::new(real_pts, cfg.sampling);
    let mut scorer = Scorer::new(real_pts, synth_pts.len(), cfg.trim_fraction);

    let mut best: Option<(AffineTransform2D, f64)> = None;
    let mut hypotheses = 0usize;
    let mut iterations = 0usize;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let s = synth_sampler.draw(&mut rng);
        let r = real_sampler.draw(&mut rng);
        let src = [synth_pts[s[0]], synth_pts[s[1]], synth_pts[s[2]]];
        for perm in PERMUTATIONS {
            let dst = [real_pts[r[perm[0]]], real_pts[r[perm[1]]], real_pts[r[perm[2]]]];
            let Ok(t) = fit_affine_3pt(&src, &dst) else {
                continue;
            };
            hypotheses += 1;
            let raw = scorer.score(&t, synth_pts);
            let best_score = best.map_or(f64::INFINITY, |(_, b)| b);
            let (t, score) = if cfg.refine && raw < REFINE_RATIO * best_score {
                refine(t, raw, synth_pts, real_pts, &mut scorer)
            } else {
                (t, raw)
            };
            if score < best_score {
                best = Some((t, score));
            }
        }
        if best.is_some_and(|(_, b)| b <= early_exit) {
            break;
        }
    }

    match best {
        Some((transform, score)) => Ok(RegistrationResult {
            transform,
            score,
            iterations_used: iterations,
            hypothesis_count: hypotheses,
            fallback: false,
        }),
        None => fallback_result(synth_pts, real_pts, cfg.trim_fraction, iterations, hypotheses),
    }
}

/// Trimmed mean nearest-neighbor distance from transformed synthetic points
/// to the real set.
///
/// Keeps the `ceil((1 - trim) * k)` smallest distances (at least one) with
/// `k = min(|synth|, |real|)`.
pub fn registration_score(
    t: &AffineTransform2D,
    synth_pts: &[Point2],
    real_pts: &[Point2],
    trim_fraction: f64,
) -> Result<f64> {
    if synth_pts.is_empty() || real_pts.is_empty() {
        return Err(Error::invalid("registration_score needs non-empty point sets"));
    }
    if !(0.0..=1.0).contains(&trim_fraction) {
        return Err(Error::invalid(format!("trim_fraction {trim_fraction} outside [0, 1]")));
    }
    Ok(Scorer::new(real_pts, synth_pts.len(), trim_fraction).score(t, synth_pts))
}

/// Number of nearest-neighbor distances kept by the trimmed mean.
pub fn kept_count(n_synth: usize, n_real: usize, trim_fraction: f64) -> usize {
    let k = n_synth.min(n_real);
    // The epsilon absorbs products like 0.8 * 20 = 16.000000000000004.
    let keep = ((1.0 - trim_fraction) * k as f64 - 1e-9).ceil().max(1.0) as usize;
    keep.min(k.max(1))
}

/// Pure translation taking the synthetic centroid onto the real centroid.
pub fn fallback_translation(synth_pts: &[Point2], real_pts: &[Point2]) -> Result<AffineTransform2D> {
    if synth_pts.is_empty() || real_pts.is_empty() {
        return Err(Error::invalid("fallback_translation needs non-empty point sets"));
    }
    let cs = centroid(synth_pts);
    let cr = centroid(real_pts);
    Ok(AffineTransform2D::translation(cr.x - cs.x, cr.y - cs.y))
}

fn fallback_result(
    synth_pts: &[Point2],
    real_pts: &[Point2],
    trim_fraction: f64,
    iterations_used: usize,
    hypothesis_count: usize,
) -> Result<RegistrationResult> {
    let transform = fallback_translation(synth_pts, real_pts)?;
    let score = registration_score(&transform, synth_pts, real_pts, trim_fraction)?;
    Ok(RegistrationResult {
        transform,
        score,
        iterations_used,
        hypothesis_count,
        fallback: true,
    })
}

fn check_points(pts: &[Point2], which: &str) -> Result<()> {
    if pts.is_empty() {
        return Err(Error::invalid(format!("{which} point set is empty")));
    }
    if let Some(i) = pts.iter().position(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("{which} point {i} is not finite")));
    }
    Ok(())
}

fn centroid(pts: &[Point2]) -> Point2 {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    Point2::new(sx / n, sy / n)
}

pub(crate) fn bounding_diagonal(pts: &[Point2]) -> f64 {
    let mut it = pts.iter();
    let Some(first) = it.next() else {
        return 0.0;
    };
    let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
    for p in it {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    (x1 - x0).hypot(y1 - y0)
}

/// Re-fits `t` by least squares over the kept nearest-neighbor pairs until
/// the score stops improving.
fn refine(
    mut t: AffineTransform2D,
    mut score: f64,
    synth_pts: &[Point2],
    real_pts: &[Point2],
    scorer: &mut Scorer,
) -> (AffineTransform2D, f64) {
    let mut src = Vec::with_capacity(synth_pts.len());
    let mut dst = Vec::with_capacity(synth_pts.len());
    for _ in 0..REFINE_ROUNDS {
        scorer.score(&t, synth_pts);
        src.clear();
        dst.clear();
        let moved: Vec<Point2> = synth_pts.iter().map(|p| t.apply(*p)).collect();
        for &(_, si, ri) in scorer.kept() {
            // Mutual nearest neighbors only; an orphan's nearest real point
            // usually has a closer synthetic partner.
            if nearest(&real_pts[ri], &moved) == si {
                src.push(synth_pts[si]);
                dst.push(real_pts[ri]);
            }
        }
        if src.len() < 3 {
            break;
        }
        let Some(candidate) = fit_affine_lstsq(&src, &dst) else {
            break;
        };
        let s = scorer.score(&candidate, synth_pts);
        if s < score {
            t = candidate;
            score = s;
        } else {
            break;
        }
    }
    (t, score)
}

fn nearest(p: &Point2, pts: &[Point2]) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for (i, q) in pts.iter().enumerate() {
        let d = p.distance_sq(q);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Reusable scoring buffers for one registration problem.
struct Scorer<'a> {
    real: &'a [Point2],
    keep: usize,
    /// (distance, synth index, nearest real index), sorted after `score`.
    dists: Vec<(f64, usize, usize)>,
}

impl<'a> Scorer<'a> {
    fn new(real: &'a [Point2], n_synth: usize, trim_fraction: f64) -> Self {
        Self {
            real,
            keep: kept_count(n_synth, real.len(), trim_fraction),
            dists: Vec::with_capacity(n_synth),
        }
    }

    fn score(&mut self, t: &AffineTransform2D, synth: &[Point2]) -> f64 {
        self.dists.clear();
        for (si, p) in synth.iter().enumerate() {
            let q = t.apply(*p);
            let mut best = (f64::INFINITY, 0usize);
            for (ri, r) in self.real.iter().enumerate() {
                let d = q.distance_sq(r);
                if d < best.0 {
                    best = (d, ri);
                }
            }
            self.dists.push((best.0, si, best.1));
        }
        // Stable tie order keeps the kept set deterministic.
        self.dists
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let sum: f64 = self.dists[..self.keep].iter().map(|d| d.0.sqrt()).sum();
        let mean = sum / self.keep as f64;
        if mean.is_finite() {
            mean
        } else {
            f64::INFINITY
        }
    }

    fn kept(&self) -> &[(f64, usize, usize)] {
        &self.dists[..self.keep]
    }
}

struct TripleSampler {
    n: usize,
    sampling: TripleSampling,
    /// Per point, other indices ordered by distance (ties by index).
    neighbors: Vec<Vec<usize>>,
}

impl TripleSampler {
    fn new(pts: &[Point2], sampling: TripleSampling) -> Self {
        let neighbors = match sampling {
            TripleSampling::Uniform => Vec::new(),
            TripleSampling::Local { neighbors } => {
                let k = neighbors.min(pts.len() - 1);
                pts.iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let mut others: Vec<(f64, usize)> = pts
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(j, q)| (p.distance_sq(q), j))
                            .collect();
                        others.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                        others.truncate(k);
                        others.into_iter().map(|(_, j)| j).collect()
                    })
                    .collect()
            }
        };
        Self {
            n: pts.len(),
            sampling,
            neighbors,
        }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> [usize; 3] {
        match self.sampling {
            TripleSampling::Uniform => {
                let v = index::sample(rng, self.n, 3);
                [v.index(0), v.index(1), v.index(2)]
            }
            TripleSampling::Local { .. } => {
                let seed = rng.random_range(0..self.n);
                let nb = &self.neighbors[seed];
                let v = index::sample(rng, nb.len(), 2);
                [seed, nb[v.index(0)], nb[v.index(1)]]
            }
        }
    }
}
