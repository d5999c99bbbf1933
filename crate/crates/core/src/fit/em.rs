//! Log-domain expectation-maximisation.

use crate::error::{Error, Result};
use crate::kernels::{self, tri_index, Packed4, EPS_COUNT};
use crate::model::{CholeskyCache, Gmm4, PointCloud4D};
use crate::par;

use super::index::{ComponentIndex, PointBlocks};
use super::Responsibilities;

/// In the sparse paths, responsibilities below `exp(GAMMA_FLOOR_LN) / M` are
/// neglected, so the mass left out per point stays below about 1e-16.
pub const GAMMA_FLOOR_LN: f64 = -36.8;

fn cutoff(m: usize) -> f64 {
    -GAMMA_FLOOR_LN + (m as f64).ln()
}

const BLOCKS_PER_TASK: usize = 32;

/// Visits every point with its mixture log-density and the candidate
/// components (with weighted log-densities) that can carry responsibility.
/// Work is split into tasks of consecutive blocks; one accumulator per task,
/// returned in task order.
fn sparse_pass<A, I, V>(
    points: &[[f64; 4]],
    blocks: &PointBlocks,
    index: &ComponentIndex,
    cut: f64,
    init: I,
    visit: V,
) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    V: Fn(&mut A, &[f64; 4], f64, &[(usize, f64)]) + Sync + Send,
{
    par::map_chunks(blocks.len(), BLOCKS_PER_TASK, |range| {
        let mut acc = init();
        let mut stack = Vec::new();
        let mut cands = Vec::new();
        let mut anchors = Vec::new();
        let mut row = Vec::new();
        let mut own = Vec::new();
        let mut sorted = Vec::new();
        for k in range {
            let (ids, lo, hi) = blocks.block(k);
            anchors.clear();
            anchors.extend(ids.iter().map(|&i| index.anchor(&points[i as usize])));
            // A few points with poor anchors would loosen the shared
            // threshold for the whole block, so it follows the median.
            sorted.clear();
            sorted.extend_from_slice(&anchors);
            let mid = sorted.len() / 2;
            let tau_block = *sorted.select_nth_unstable_by(mid, f64::total_cmp).1 - cut;
            index.box_candidates(lo, hi, tau_block, &mut stack, &mut cands);
            for (&i, &a) in ids.iter().zip(&anchors) {
                let x = &points[i as usize];
                row.clear();
                let mut max = index.filter_running(x, a, cut, &cands, |b, lp| row.push((b, lp)));
                if max - cut < tau_block {
                    // Components outside the shared list may still matter.
                    index.box_candidates(x, x, max - cut, &mut stack, &mut own);
                    row.clear();
                    max = index.filter_running(x, max, cut, &own, |b, lp| row.push((b, lp)));
                }
                let lse = max + row.iter().map(|r| (r.1 - max).exp()).sum::<f64>().ln();
                visit(&mut acc, x, lse, &row);
            }
        }
        acc
    })
}

/// Responsibilities and total log-likelihood of `model` on `cloud`.
pub fn e_step(cloud: &PointCloud4D, model: &Gmm4, cache: &CholeskyCache) -> Result<(Responsibilities, f64)> {
    let m = model.len();
    if cache.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "cache holds {} factors for a {m}-component model",
            cache.len()
        )));
    }
    let table = cache.weighted_table(model);
    let points = cloud.points();
    let parts = par::map_chunks(points.len(), par::row_chunk(), |range| {
        let mut rows = vec![0.0; range.len() * m];
        let mut ll = 0.0;
        for (r, x) in rows.chunks_exact_mut(m).zip(&points[range]) {
            table.eval(x, r);
            let lse = kernels::logsumexp(r);
            ll += lse;
            for v in r.iter_mut() {
                *v -= lse;
            }
        }
        (rows, ll)
    });
    let mut log_gamma = Vec::with_capacity(points.len() * m);
    let mut ll = 0.0;
    for (rows, part) in parts {
        log_gamma.extend_from_slice(&rows);
        ll += part;
    }
    Ok((Responsibilities::from_log(log_gamma, m)?, ll))
}

/// Mixture from per-component counts, means and normalised scatters.
/// Components with count below [`EPS_COUNT`] are dropped.
pub(crate) fn assemble(counts: &[f64], means: &[[f64; 4]], scatters: &[Packed4], cov_reg: f64) -> Result<Gmm4> {
    let keep: Vec<usize> = (0..counts.len()).filter(|&b| counts[b] >= EPS_COUNT).collect();
    if keep.is_empty() {
        return Err(Error::Numerical("every component lost its support".into()));
    }
    if keep.len() < counts.len() {
        log::debug!("removing {} degenerate components", counts.len() - keep.len());
    }
    let total: f64 = keep.iter().map(|&b| counts[b]).sum();
    let weights = keep.iter().map(|&b| counts[b] / total).collect();
    let kept_means = keep.iter().map(|&b| means[b]).collect();
    let covs = keep
        .iter()
        .map(|&b| {
            let mut c = scatters[b];
            for d in 0..4 {
                c[tri_index(d, d)] += cov_reg;
            }
            c
        })
        .collect();
    Gmm4::new(weights, kept_means, covs)
}

/// Maximisation step: weighted moments plus `cov_reg` on the diagonal.
pub fn m_step(cloud: &PointCloud4D, resp: &Responsibilities, cov_reg: f64) -> Result<Gmm4> {
    if resp.rows() != cloud.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} responsibility rows for {} points",
            resp.rows(),
            cloud.len()
        )));
    }
    let linear: Vec<f64> = resp.log_gamma().iter().map(|v| v.exp()).collect();
    let mo = kernels::weighted_moments(cloud.points(), &linear, resp.cols())?;
    assemble(&mo.counts, &mo.means, &mo.scatters, cov_reg)
}

/// M-step from a hard partition; same arithmetic as [`m_step`] on one-hot rows.
pub fn m_step_hard(points: &[[f64; 4]], labels: &[usize], k: usize, cov_reg: f64) -> Result<Gmm4> {
    let mut counts = vec![0.0; k];
    let mut sums = vec![[0.0; 4]; k];
    for (x, &l) in points.iter().zip(labels) {
        counts[l] += 1.0;
        for d in 0..4 {
            sums[l][d] += x[d];
        }
    }
    let means: Vec<[f64; 4]> = (0..k).map(|b| sums[b].map(|s| s / counts[b])).collect();
    let mut scatters = vec![[0.0; 10]; k];
    for (x, &l) in points.iter().zip(labels) {
        let mu = &means[l];
        let dx = [x[0] - mu[0], x[1] - mu[1], x[2] - mu[2], x[3] - mu[3]];
        for r in 0..4 {
            for c in 0..=r {
                scatters[l][tri_index(r, c)] += dx[r] * dx[c];
            }
        }
    }
    for b in 0..k {
        for v in &mut scatters[b] {
            *v /= counts[b];
        }
    }
    assemble(&counts, &means, &scatters, cov_reg)
}

/// Total log-likelihood of `points` under `model`, evaluated over the
/// components that can matter at each point.
pub fn log_likelihood(points: &[[f64; 4]], model: &Gmm4) -> Result<f64> {
    log_likelihood_blocks(points, &PointBlocks::new(points), model)
}

pub(crate) fn log_likelihood_blocks(points: &[[f64; 4]], blocks: &PointBlocks, model: &Gmm4) -> Result<f64> {
    let index = ComponentIndex::new(model, &CholeskyCache::new(model)?);
    let parts = sparse_pass(points, blocks, &index, cutoff(model.len()), || 0.0, |acc, _, lse, _| *acc += lse);
    Ok(parts.into_iter().sum())
}

const STRIDE: usize = 15;

/// One E-step and M-step without materialising the responsibility matrix.
/// Returns the updated model and the log-likelihood of the input model.
///
/// Only components located by the [`ComponentIndex`] bound are evaluated.
/// Moments are accumulated about the previous means to keep the scatter
/// well conditioned; per-chunk partial sums are reduced in chunk order.
pub fn em_iteration(points: &[[f64; 4]], model: &Gmm4, cov_reg: f64) -> Result<(Gmm4, f64)> {
    em_iteration_blocks(points, &PointBlocks::new(points), model, cov_reg)
}

pub(crate) fn em_iteration_blocks(
    points: &[[f64; 4]],
    blocks: &PointBlocks,
    model: &Gmm4,
    cov_reg: f64,
) -> Result<(Gmm4, f64)> {
    let index = ComponentIndex::new(model, &CholeskyCache::new(model)?);
    let cut = cutoff(model.len());
    let m = model.len();
    let mu = model.means();
    let parts = sparse_pass(
        points,
        blocks,
        &index,
        cut,
        || (vec![0.0; m * STRIDE], 0.0),
        |(acc, ll), x, lse, row| {
            *ll += lse;
            for &(b, lp) in row {
                let lg = lp - lse;
                if lg < -cut {
                    continue;
                }
                let g = lg.exp();
                let a = &mut acc[b * STRIDE..(b + 1) * STRIDE];
                let dx = [x[0] - mu[b][0], x[1] - mu[b][1], x[2] - mu[b][2], x[3] - mu[b][3]];
                a[0] += g;
                for d in 0..4 {
                    a[1 + d] += g * dx[d];
                }
                let mut k = 5;
                for r in 0..4 {
                    let gr = g * dx[r];
                    for c in 0..=r {
                        a[k] += gr * dx[c];
                        k += 1;
                    }
                }
            }
        },
    );
    let mut total = vec![0.0; m * STRIDE];
    let mut ll = 0.0;
    for (acc, part) in parts {
        for (t, a) in total.iter_mut().zip(&acc) {
            *t += a;
        }
        ll += part;
    }
    let mut counts = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(m);
    let mut scatters = Vec::with_capacity(m);
    for b in 0..m {
        let a = &total[b * STRIDE..(b + 1) * STRIDE];
        let count = a[0];
        counts.push(count);
        if count < EPS_COUNT {
            means.push([0.0; 4]);
            scatters.push([0.0; 10]);
            continue;
        }
        let shift: [f64; 4] = std::array::from_fn(|d| a[1 + d] / count);
        means.push(std::array::from_fn(|d| mu[b][d] + shift[d]));
        let mut sc = [0.0; 10];
        for r in 0..4 {
            for c in 0..=r {
                let i = tri_index(r, c);
                sc[i] = a[5 + i] / count - shift[r] * shift[c];
            }
        }
        scatters.push(sc);
    }
    Ok((assemble(&counts, &means, &scatters, cov_reg)?, ll))
}
