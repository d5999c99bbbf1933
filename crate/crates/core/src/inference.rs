//! Generative queries on a fitted mixture: joint resampling, intensity
//! conditioned on 3D location, and average log-likelihood.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::fit::log_likelihood;
use crate::kernels::{tri_index, LN_2PI};
use crate::model::{CholeskyCache, Gmm4, PointCloud4D};
use crate::{kernels, par, rng};

/// Draws `n` points from the joint 4D mixture. Sample `i` uses its own
/// random stream, so any subset of indices reproduces exactly.
pub fn joint_dist_sample(model: &Gmm4, n: usize, seed: u64) -> Result<PointCloud4D> {
    sample_with_components(model, n, seed).map(|(c, _)| c)
}

/// Like [`joint_dist_sample`], also returning the component of each sample.
pub fn sample_with_components(model: &Gmm4, n: usize, seed: u64) -> Result<(PointCloud4D, Vec<usize>)> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let cache = CholeskyCache::new(model)?;
    let mut cdf = Vec::with_capacity(model.len());
    let mut acc = 0.0;
    for w in model.weights() {
        acc += w;
        cdf.push(acc);
    }
    let drawn = par::map(n, |i| {
        let mut r = rng::stream(seed, i as u64);
        let u = r.random::<f64>() * acc;
        let b = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let z: [f64; 4] = std::array::from_fn(|_| r.sample(StandardNormal));
        let l = &cache.factors()[b];
        let mu = &model.means()[b];
        let x: [f64; 4] = std::array::from_fn(|i| mu[i] + (0..=i).map(|k| l[tri_index(i, k)] * z[k]).sum::<f64>());
        (x, b)
    });
    let (pts, comps) = drawn.into_iter().unzip();
    Ok((PointCloud4D::new(pts)?, comps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalResult {
    /// `E[i | x]` clamped to `[0, 1]`.
    pub expected_intensity: Vec<f64>,
    /// `Var[i | x]`, non-negative.
    pub variance: Vec<f64>,
    /// `E[i | x]` before clamping.
    pub raw_expected: Vec<f64>,
}

/// Intensity distribution conditioned on spatial location.
///
/// The leading 3×3 block of each Cholesky factor is the factor of the
/// spatial marginal, and its last row gives the regression of intensity on
/// position, so no extra factorisation is needed: with `y = L_xx⁻¹(x − μ_x)`
/// the conditional mean is `μ_i + L_i·y` and the conditional variance is
/// `L_ii²`. Gate weights use the spatial marginals. If every gate is −∞ the
/// component with the smallest spatial Mahalanobis distance is used alone.
pub fn color_conditional(model: &Gmm4, locs: &[[f64; 3]]) -> Result<ConditionalResult> {
    let cache = CholeskyCache::new(model)?;
    let m = model.len();
    let lw: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
    let out = par::map_chunks(locs.len(), par::row_chunk(), |range| {
        let mut gate = vec![0.0; m];
        let mut mean = vec![0.0; m];
        let mut quad = vec![0.0; m];
        let mut res = Vec::with_capacity(range.len());
        for x in &locs[range] {
            for b in 0..m {
                let p = &cache.precisions()[b];
                let l = &cache.factors()[b];
                let mu = &model.means()[b];
                let d = [x[0] - mu[0], x[1] - mu[1], x[2] - mu[2]];
                let y = [
                    p[0] * d[0],
                    p[1] * d[0] + p[2] * d[1],
                    p[3] * d[0] + p[4] * d[1] + p[5] * d[2],
                ];
                let q = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                quad[b] = q;
                let log_det: f64 = (0..3).map(|j| p[tri_index(j, j)].ln()).sum();
                gate[b] = lw[b] - 1.5 * LN_2PI + log_det - 0.5 * q;
                mean[b] = mu[3] + l[6] * y[0] + l[7] * y[1] + l[8] * y[2];
            }
            let lse = kernels::logsumexp(&gate);
            let (e, v) = if lse.is_finite() {
                let e: f64 = (0..m).map(|b| (gate[b] - lse).exp() * mean[b]).sum();
                let v: f64 = (0..m)
                    .map(|b| (gate[b] - lse).exp() * (cache.factors()[b][9].powi(2) + (mean[b] - e).powi(2)))
                    .sum();
                (e, v)
            } else {
                let b = (0..m).fold(0, |best, b| if quad[b] < quad[best] { b } else { best });
                (mean[b], cache.factors()[b][9].powi(2))
            };
            debug_assert!(v >= -1e-12);
            res.push((e, v.max(0.0)));
        }
        res
    });
    let mut r = ConditionalResult {
        expected_intensity: Vec::with_capacity(locs.len()),
        variance: Vec::with_capacity(locs.len()),
        raw_expected: Vec::with_capacity(locs.len()),
    };
    for (e, v) in out.into_iter().flatten() {
        r.raw_expected.push(e);
        r.expected_intensity.push(e.clamp(0.0, 1.0));
        r.variance.push(v);
    }
    Ok(r)
}

/// Average log-likelihood per point.
pub fn score(model: &Gmm4, cloud: &PointCloud4D) -> Result<f64> {
    Ok(log_likelihood(cloud.points(), model)? / cloud.len() as f64)
}
