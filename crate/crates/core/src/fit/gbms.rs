//! Mean-shift mode seeking that fixes the number of mixture components.
//!
//! The cloud is min-max normalised per dimension; the bandwidth is measured
//! in that space. Seeds are the point centroids of occupied cubic bins of
//! side `bandwidth`. Each iteration moves every seed to the mean of the data
//! points within `bandwidth` of it (kd-tree radius search) until the mean
//! seed displacement drops below the tolerance. Converged seeds are merged by
//! single linkage at `merge_radius`; each cluster is represented by its
//! best-supported seed.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::model::PointCloud4D;
use crate::par;

use super::kdtree::KdTree4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmsParams {
    pub bandwidth: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub merge_radius: f64,
}

impl GbmsParams {
    pub const DEFAULT_MAX_ITERS: usize = 100;
    pub const DEFAULT_TOL: f64 = 1e-5;

    /// Defaults: 100 iterations, tolerance 1e-5, merge radius `bandwidth / 2`.
    pub fn new(bandwidth: f64) -> Result<Self> {
        let p = Self {
            bandwidth,
            max_iters: Self::DEFAULT_MAX_ITERS,
            convergence_tol: Self::DEFAULT_TOL,
            merge_radius: bandwidth / 2.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(invalid(format!("bandwidth {} must be positive and finite", self.bandwidth)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.convergence_tol > 0.0 && self.merge_radius > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Per-dimension affine map onto `[0, 1]`. Constant dimensions map to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub min: [f64; 4],
    pub range: [f64; 4],
}

impl Normalizer {
    pub fn fit(points: &[[f64; 4]]) -> Self {
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        for p in points {
            for d in 0..4 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let range = std::array::from_fn(|d| {
            let r = max[d] - min[d];
            if r > 0.0 { r } else { 1.0 }
        });
        Self { min, range }
    }

    #[inline]
    pub fn apply(&self, p: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|d| (p[d] - self.min[d]) / self.range[d])
    }

    #[inline]
    pub fn invert(&self, p: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|d| self.min[d] + p[d] * self.range[d])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmsResult {
    /// Modes in the cloud's original units.
    pub modes: Vec<[f64; 4]>,
    /// Modes in normalised space.
    pub normalized_modes: Vec<[f64; 4]>,
    /// Data points within one bandwidth of each mode.
    pub support: Vec<usize>,
    pub seeds: usize,
    pub iterations: usize,
    pub normalizer: Normalizer,
}

impl GbmsResult {
    pub fn components(&self) -> usize {
        self.modes.len()
    }
}

/// Bin seeds: centroid of the points in each occupied bin, ordered by bin key.
pub fn bin_seeds(points: &[[f64; 4]], bin: f64) -> Vec<[f64; 4]> {
    let mut bins: BTreeMap<[i64; 4], ([f64; 4], usize)> = BTreeMap::new();
    for p in points {
        let key = p.map(|v| (v / bin).floor() as i64);
        let e = bins.entry(key).or_insert(([0.0; 4], 0));
        for d in 0..4 {
            e.0[d] += p[d];
        }
        e.1 += 1;
    }
    bins.into_values().map(|(s, c)| s.map(|v| v / c as f64)).collect()
}

fn shift(tree: &KdTree4, q: &[f64; 4], radius: f64) -> Option<([f64; 4], usize)> {
    let mut sum = [0.0; 4];
    let mut count = 0usize;
    let pts = tree.points();
    tree.for_each_within(q, radius, |i| {
        for d in 0..4 {
            sum[d] += pts[i][d];
        }
        count += 1;
    });
    (count > 0).then(|| (sum.map(|s| s / count as f64), count))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Estimates the number of components as the number of distinct modes.
pub fn gbms_estimate_components(cloud: &PointCloud4D, params: &GbmsParams) -> Result<GbmsResult> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let normalizer = Normalizer::fit(cloud.points());
    let data: Vec<[f64; 4]> = cloud.points().iter().map(|p| normalizer.apply(p)).collect();
    let tree = KdTree4::new(data);
    let bw = params.bandwidth;

    let mut seeds = bin_seeds(tree.points(), bw);
    let n_seeds = seeds.len();
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let moved = par::map(seeds.len(), |s| {
            shift(&tree, &seeds[s], bw).map(|(m, _)| m).unwrap_or(seeds[s])
        });
        let disp: f64 = seeds
            .iter()
            .zip(&moved)
            .map(|(a, b)| (0..4).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / seeds.len() as f64;
        seeds = moved;
        if disp < params.convergence_tol {
            break;
        }
    }

    // final support; seeds stranded away from all data are dropped
    let support = par::map(seeds.len(), |s| shift(&tree, &seeds[s], bw).map_or(0, |(_, c)| c));
    let mut kept: Vec<usize> = (0..seeds.len()).filter(|&s| support[s] > 0).collect();
    if kept.is_empty() {
        kept = (0..seeds.len()).collect();
    }

    let seed_tree = KdTree4::new(kept.iter().map(|&s| seeds[s]).collect());
    let mut uf = UnionFind((0..kept.len()).collect());
    for a in 0..kept.len() {
        seed_tree.for_each_within(&seeds[kept[a]], params.merge_radius, |b| {
            if b != a {
                uf.union(a, b);
            }
        });
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for a in 0..kept.len() {
        let root = uf.find(a);
        let e = best.entry(root).or_insert(a);
        if support[kept[a]] > support[kept[*e]] {
            *e = a;
        }
    }
    let mut reps: Vec<usize> = best.into_values().map(|a| kept[a]).collect();
    reps.sort_by(|&a, &b| support[b].cmp(&support[a]).then(a.cmp(&b)));

    let normalized_modes: Vec<[f64; 4]> = reps.iter().map(|&s| seeds[s]).collect();
    Ok(GbmsResult {
        modes: normalized_modes.iter().map(|m| normalizer.invert(m)).collect(),
        normalized_modes,
        support: reps.iter().map(|&s| support[s]).collect(),
        seeds: n_seeds,
        iterations,
        normalizer,
    })
}
