//! Spatial index over mixture components for sparse responsibility
//! evaluation.
//!
//! Component `b` reaches weighted log-density `τ` only inside the ellipsoid
//! `dᵀΣ_b⁻¹d ≤ 2(offset_b − τ)`, whose extent along axis `k` is
//! `√(2(offset_b − τ)Σ_b,kk)`. A kd-tree over the means stores the largest
//! offset and diagonal variances per node; given any evaluated log-density
//! `L₀` at a point, every component that cannot reach `L₀ − cutoff` is
//! skipped, since its responsibility is then below `exp(−cutoff)`.
//!
//! Queries are made per block of nearby points ([`PointBlocks`]): the block
//! box yields one candidate list, which each point then filters with its own
//! bound.

use crate::kernels::tri_index;
use crate::model::{CholeskyCache, Gmm4};

const LEAF: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 4],
    hi: [f64; 4],
    var: [f64; 4],
    off: f64,
    start: u32,
    end: u32,
    children: Option<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct ComponentIndex {
    means: Vec<[f64; 4]>,
    var: Vec<[f64; 4]>,
    off: Vec<f64>,
    /// Per component: mean, packed precision factor, offset, diagonal
    /// variances.
    recs: Vec<[f64; 20]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// Relative slack on the variances absorbs rounding in the bound tests.
const VAR_SLACK: f64 = 1.0 + 1e-9;

impl ComponentIndex {
    pub fn new(model: &Gmm4, cache: &CholeskyCache) -> Self {
        let m = model.len();
        let means = model.means().to_vec();
        let var: Vec<[f64; 4]> = model
            .covariances_packed()
            .iter()
            .map(|c| std::array::from_fn(|k| c[tri_index(k, k)] * VAR_SLACK))
            .collect();
        let table = cache.weighted_table(model);
        let off: Vec<f64> = (0..m).map(|b| table.offset(b)).collect();
        let recs = (0..m)
            .map(|b| {
                let mut r = [0.0; 20];
                r[..4].copy_from_slice(&means[b]);
                r[4..14].copy_from_slice(&cache.precisions()[b]);
                r[14] = off[b];
                r[15..19].copy_from_slice(&var[b]);
                r
            })
            .collect();
        let mut idx = Self { means, var, off, recs, order: (0..m as u32).collect(), nodes: Vec::new() };
        let mut order = std::mem::take(&mut idx.order);
        idx.build(&mut order, 0);
        idx.order = order;
        idx
    }

    fn build(&mut self, order: &mut [u32], offset: u32) -> u32 {
        let id = self.nodes.len() as u32;
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        let mut var = [0.0f64; 4];
        let mut off = f64::NEG_INFINITY;
        for &b in order.iter() {
            let b = b as usize;
            for d in 0..4 {
                lo[d] = lo[d].min(self.means[b][d]);
                hi[d] = hi[d].max(self.means[b][d]);
                var[d] = var[d].max(self.var[b][d]);
            }
            off = off.max(self.off[b]);
        }
        let end = offset + order.len() as u32;
        self.nodes.push(Node { lo, hi, var, off, start: offset, end, children: None });
        if order.len() <= LEAF {
            return id;
        }
        let dim = (0..4).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        let mid = order.len() / 2;
        let means = &self.means;
        order.select_nth_unstable_by(mid, |&a, &b| means[a as usize][dim].total_cmp(&means[b as usize][dim]));
        let (l, r) = order.split_at_mut(mid);
        let left = self.build(l, offset);
        let right = self.build(r, offset + mid as u32);
        self.nodes[id as usize].children = Some((left, right));
        id
    }

    pub fn len(&self) -> usize {
        self.recs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recs.is_empty()
    }

    /// `ln π_b + ln N(x | μ_b, Σ_b)`, same arithmetic as the dense table.
    #[inline]
    pub fn eval(&self, b: usize, x: &[f64; 4]) -> f64 {
        let r = &self.recs[b];
        let d0 = x[0] - r[0];
        let d1 = x[1] - r[1];
        let d2 = x[2] - r[2];
        let d3 = x[3] - r[3];
        let y0 = r[4] * d0;
        let y1 = r[5] * d0 + r[6] * d1;
        let y2 = r[7] * d0 + r[8] * d1 + r[9] * d2;
        let y3 = r[10] * d0 + r[11] * d1 + r[12] * d2 + r[13] * d3;
        r[14] - 0.5 * (y0 * y0 + y1 * y1 + y2 * y2 + y3 * y3)
    }

    /// Weighted log-density under some component close to `x`; a lower
    /// bound on the mixture log-density.
    pub fn anchor(&self, x: &[f64; 4]) -> f64 {
        if self.nodes.is_empty() {
            return f64::NEG_INFINITY;
        }
        let mut n = 0usize;
        while let Some((l, r)) = self.nodes[n].children {
            let (a, b) = (&self.nodes[l as usize], &self.nodes[r as usize]);
            n = if box_dist2(&a.lo, &a.hi, x) <= box_dist2(&b.lo, &b.hi, x) { l } else { r } as usize;
        }
        let node = &self.nodes[n];
        self.order[node.start as usize..node.end as usize]
            .iter()
            .map(|&b| self.eval(b as usize, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Components that can reach above `tau` somewhere in the box `[lo, hi]`.
    pub fn box_candidates(&self, lo: &[f64; 4], hi: &[f64; 4], tau: f64, stack: &mut Vec<u32>, out: &mut Vec<u32>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        stack.clear();
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if !reaches_box(&node.lo, &node.hi, &node.var, 2.0 * (node.off - tau), lo, hi) {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &b in &self.order[node.start as usize..node.end as usize] {
                        let bu = b as usize;
                        let m = &self.means[bu];
                        if reaches_box(m, m, &self.var[bu], 2.0 * (self.off[bu] - tau), lo, hi) {
                            out.push(b);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }

    /// Evaluates every component in `cands` that can exceed `tau` at `x`.
    #[inline]
    pub fn filter(&self, x: &[f64; 4], tau: f64, cands: &[u32], mut f: impl FnMut(usize, f64)) {
        for &b in cands {
            let b = b as usize;
            let r = &self.recs[b];
            let reach = 2.0 * (r[14] - tau);
            let inside = reach >= 0.0
                && (x[0] - r[0]) * (x[0] - r[0]) <= reach * r[15]
                && (x[1] - r[1]) * (x[1] - r[1]) <= reach * r[16]
                && (x[2] - r[2]) * (x[2] - r[2]) <= reach * r[17]
                && (x[3] - r[3]) * (x[3] - r[3]) <= reach * r[18];
            if inside {
                f(b, self.eval(b, x));
            }
        }
    }

    /// Like [`filter`](Self::filter) with `tau = max − cutoff`, where `max`
    /// starts at `floor` and rises with every larger value found. Reports at
    /// least every candidate above the final `max − cutoff`, possibly a few
    /// below it, and returns the final `max`.
    #[inline]
    pub fn filter_running(&self, x: &[f64; 4], floor: f64, cutoff: f64, cands: &[u32], mut f: impl FnMut(usize, f64)) -> f64 {
        let mut max = floor;
        let mut tau = floor - cutoff;
        for &b in cands {
            let b = b as usize;
            let r = &self.recs[b];
            let reach = 2.0 * (r[14] - tau);
            let inside = reach >= 0.0
                && (x[0] - r[0]) * (x[0] - r[0]) <= reach * r[15]
                && (x[1] - r[1]) * (x[1] - r[1]) <= reach * r[16]
                && (x[2] - r[2]) * (x[2] - r[2]) <= reach * r[17]
                && (x[3] - r[3]) * (x[3] - r[3]) <= reach * r[18];
            if inside {
                let lp = self.eval(b, x);
                if lp > max {
                    max = lp;
                    tau = max - cutoff;
                }
                f(b, lp);
            }
        }
        max
    }

    /// Calls `f(b, ln π_b + ln N(x | b))` for every component whose value
    /// can exceed the mixture log-density minus `cutoff`. The components left
    /// out have a combined responsibility below `M·exp(−cutoff)`.
    pub fn for_each_candidate(&self, x: &[f64; 4], cutoff: f64, stack: &mut Vec<u32>, f: impl FnMut(usize, f64)) {
        let tau = self.anchor(x) - cutoff;
        let mut cands = Vec::new();
        self.box_candidates(x, x, tau, stack, &mut cands);
        self.filter(x, tau, &cands, f);
    }
}

/// Points grouped into spatially compact blocks by recursive median splits.
#[derive(Debug, Clone)]
pub struct PointBlocks {
    perm: Vec<u32>,
    blocks: Vec<(u32, u32, [f64; 4], [f64; 4])>,
}

const BLOCK: usize = 64;

impl PointBlocks {
    pub fn new(points: &[[f64; 4]]) -> Self {
        let mut perm: Vec<u32> = (0..points.len() as u32).collect();
        let mut blocks = Vec::new();
        split_blocks(points, &mut perm, 0, &mut blocks);
        Self { perm, blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Point indices of block `k` and its bounding box.
    pub fn block(&self, k: usize) -> (&[u32], &[f64; 4], &[f64; 4]) {
        let (s, e, lo, hi) = &self.blocks[k];
        (&self.perm[*s as usize..*e as usize], lo, hi)
    }
}

fn split_blocks(points: &[[f64; 4]], perm: &mut [u32], offset: u32, out: &mut Vec<(u32, u32, [f64; 4], [f64; 4])>) {
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for &i in perm.iter() {
        for d in 0..4 {
            lo[d] = lo[d].min(points[i as usize][d]);
            hi[d] = hi[d].max(points[i as usize][d]);
        }
    }
    let dim = (0..4).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    if perm.len() <= BLOCK || hi[dim] == lo[dim] {
        if !perm.is_empty() {
            out.push((offset, offset + perm.len() as u32, lo, hi));
        }
        return;
    }
    let mid = perm.len() / 2;
    perm.select_nth_unstable_by(mid, |&a, &b| points[a as usize][dim].total_cmp(&points[b as usize][dim]));
    let (l, r) = perm.split_at_mut(mid);
    split_blocks(points, l, offset, out);
    split_blocks(points, r, offset + mid as u32, out);
}

/// Whether a component with mean in `[mlo, mhi]`, diagonal variances at
/// most `var` and `2(offset − τ) ≤ reach` can exceed `τ` inside `[lo, hi]`.
#[inline]
fn reaches_box(mlo: &[f64; 4], mhi: &[f64; 4], var: &[f64; 4], reach: f64, lo: &[f64; 4], hi: &[f64; 4]) -> bool {
    if reach < 0.0 {
        return false;
    }
    (0..4).all(|d| {
        let gap = (mlo[d] - hi[d]).max(lo[d] - mhi[d]).max(0.0);
        gap * gap <= reach * var[d]
    })
}

#[inline]
fn box_dist2(lo: &[f64; 4], hi: &[f64; 4], x: &[f64; 4]) -> f64 {
    (0..4)
        .map(|d| {
            let e = (lo[d] - x[d]).max(x[d] - hi[d]).max(0.0);
            e * e
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels;
    use crate::model::CholeskyCache;
    use crate::synth;

    #[test]
    fn skipped_components_are_negligible() {
        let cloud = synth::noisy_planes(3000, 1);
        let labels = super::super::kinit_labels(cloud.points(), 300, 2).unwrap();
        let model = super::super::em::m_step_hard(cloud.points(), &labels, 300, 1e-6).unwrap();
        let cache = CholeskyCache::new(&model).unwrap();
        let table = cache.weighted_table(&model);
        let index = ComponentIndex::new(&model, &cache);
        let cutoff = 20.0;
        let mut full = vec![0.0; model.len()];
        let mut stack = Vec::new();
        let mut visited = 0usize;
        for x in cloud.points() {
            table.eval(x, &mut full);
            let lse = kernels::logsumexp(&full);
            let mut seen = vec![false; model.len()];
            index.for_each_candidate(x, cutoff, &mut stack, |b, lp| {
                assert_eq!(lp, full[b]);
                seen[b] = true;
            });
            for b in 0..model.len() {
                if !seen[b] {
                    assert!(full[b] < lse - cutoff);
                } else {
                    visited += 1;
                }
            }
        }
        assert!(visited < cloud.len() * model.len() / 4, "index pruned too little: {visited}");
    }
}
