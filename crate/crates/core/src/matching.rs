//! One-to-one instance pairing after registration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineTransform2D, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstancePair {
    pub real_index: usize,
    pub synth_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePairing {
    /// Sorted by `real_index`.
    pub pairs: Vec<InstancePair>,
    pub unmatched_real: BTreeSet<usize>,
    pub unmatched_synth: BTreeSet<usize>,
    pub gate_distance: f64,
}

impl InstancePairing {
    pub fn empty(n_real: usize, n_synth: usize, gate_distance: f64) -> Self {
        Self {
            pairs: Vec::new(),
            unmatched_real: (0..n_real).collect(),
            unmatched_synth: (0..n_synth).collect(),
            gate_distance,
        }
    }

    /// Checks the one-to-one, gate and partition invariants.
    pub fn check(&self, n_real: usize, n_synth: usize) -> Result<()> {
        let mut seen_r = BTreeSet::new();
        let mut seen_s = BTreeSet::new();
        for p in &self.pairs {
            if !seen_r.insert(p.real_index) || !seen_s.insert(p.synth_index) {
                return Err(Error::invalid(format!("index reused in pair {p:?}")));
            }
            if !(p.distance <= self.gate_distance) {
                return Err(Error::invalid(format!("pair {p:?} exceeds gate {}", self.gate_distance)));
            }
        }
        let all_r: BTreeSet<usize> = seen_r.union(&self.unmatched_real).copied().collect();
        let all_s: BTreeSet<usize> = seen_s.union(&self.unmatched_synth).copied().collect();
        if all_r != (0..n_real).collect()
            || all_s != (0..n_synth).collect()
            || !seen_r.is_disjoint(&self.unmatched_real)
            || !seen_s.is_disjoint(&self.unmatched_synth)
        {
            return Err(Error::invalid("pairing does not partition the index sets"));
        }
        Ok(())
    }
}

/// Optimal one-to-one pairing of transformed synthetic centers with real
/// centers. Assignment costs are center distances capped at `gate_distance`;
/// pairs farther apart than the gate are demoted to the unmatched sets after
/// the assignment is solved.
pub fn match_instances(
    transform: &AffineTransform2D,
    synth_centers: &[Point2],
    real_centers: &[Point2],
    gate_distance: f64,
) -> Result<InstancePairing> {
    if !(gate_distance > 0.0) || gate_distance.is_nan() {
        return Err(Error::invalid(format!("gate_distance {gate_distance} must be > 0")));
    }
    if !transform.is_finite() {
        return Err(Error::invalid("transform has non-finite entries"));
    }
    let (n_real, n_synth) = (real_centers.len(), synth_centers.len());
    if n_real == 0 || n_synth == 0 {
        return Ok(InstancePairing::empty(n_real, n_synth, gate_distance));
    }

    let moved: Vec<Point2> = synth_centers.iter().map(|p| transform.apply(*p)).collect();
    let mut dist = Vec::with_capacity(n_real * n_synth);
    for r in real_centers {
        for s in &moved {
            dist.push(r.distance(s));
        }
    }
    // Every over-gate pair costs the same, so the assignment gains nothing by
    // rerouting a forced far pair through a close true partner.
    let cost: Vec<f64> = dist.iter().map(|&d| d.min(gate_distance)).collect();

    let mut pairing = InstancePairing::empty(n_real, n_synth, gate_distance);
    for (ri, si) in assignment_min_cost(&cost, n_real, n_synth)? {
        let distance = dist[ri * n_synth + si];
        if distance <= gate_distance {
            pairing.pairs.push(InstancePair {
                real_index: ri,
                synth_index: si,
                distance,
            });
            pairing.unmatched_real.remove(&ri);
            pairing.unmatched_synth.remove(&si);
        }
    }
    Ok(pairing)
}

/// Minimum-cost assignment of `min(n_rows, n_cols)` pairs over a row-major
/// cost matrix. Returns `(row, col)` pairs sorted by row.
///
/// Shortest-augmenting-path Hungarian method with dual potentials,
/// O(k^2 * max(n_rows, n_cols)) for k = min(n_rows, n_cols).
pub fn assignment_min_cost(cost: &[f64], n_rows: usize, n_cols: usize) -> Result<Vec<(usize, usize)>> {
    if cost.len() != n_rows * n_cols {
        return Err(Error::invalid(format!(
            "cost matrix has {} entries, expected {n_rows}x{n_cols}",
            cost.len()
        )));
    }
    if let Some(i) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::invalid(format!("cost entry {i} is not finite")));
    }
    if n_rows == 0 || n_cols == 0 {
        return Ok(Vec::new());
    }

    let transposed = n_rows > n_cols;
    let (n, m) = if transposed { (n_cols, n_rows) } else { (n_rows, n_cols) };
    let at = |i: usize, j: usize| {
        if transposed {
            cost[j * n_cols + i]
        } else {
            cost[i * n_cols + j]
        }
    };

    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (i, j) = (owner[j] - 1, j - 1);
            if transposed {
                (j, i)
            } else {
                (i, j)
            }
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Total cost of an assignment, summed in row order.
pub fn assignment_cost(cost: &[f64], n_cols: usize, assignment: &[(usize, usize)]) -> f64 {
    assignment.iter().map(|&(r, c)| cost[r * n_cols + c]).sum()
}
