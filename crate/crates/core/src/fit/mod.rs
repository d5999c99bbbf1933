//! Self-organizing fit: mean-shift picks the component count, k-means++
//! builds the first hard partition, and log-domain EM refines it.

mod em;
mod index;
mod gbms;
mod kdtree;
mod kinit;

pub use em::{e_step, em_iteration, log_likelihood, m_step, m_step_hard, GAMMA_FLOOR_LN};
pub use gbms::{bin_seeds, gbms_estimate_components, GbmsParams, GbmsResult, Normalizer};
pub use index::{ComponentIndex, PointBlocks};
pub use kdtree::KdTree4;
pub use kinit::{canonical_order, kinit, kinit_labels, kmeanspp_centers};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::model::{Gmm4, PointCloud4D};

/// `N × M` log-domain responsibility matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    log_gamma: Vec<f64>,
    cols: usize,
}

impl Responsibilities {
    /// Checks that every row log-sums to zero within 1e-9.
    pub fn from_log(log_gamma: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 || log_gamma.len() % cols != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} entries do not form rows of {cols}",
                log_gamma.len()
            )));
        }
        for (n, row) in log_gamma.chunks_exact(cols).enumerate() {
            let s = kernels::logsumexp(row);
            if !(s.abs() <= 1e-9) {
                return Err(invalid(format!("responsibility row {n} log-sums to {s}")));
            }
        }
        Ok(Self { log_gamma, cols })
    }

    /// One-hot rows: 0 at the label, −∞ elsewhere.
    pub fn from_labels(labels: &[usize], cols: usize) -> Self {
        let mut log_gamma = vec![f64::NEG_INFINITY; labels.len() * cols];
        for (n, &l) in labels.iter().enumerate() {
            assert!(l < cols, "label {l} out of range");
            log_gamma[n * cols + l] = 0.0;
        }
        Self { log_gamma, cols }
    }

    pub fn rows(&self) -> usize {
        self.log_gamma.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.log_gamma[n * self.cols..(n + 1) * self.cols]
    }

    pub fn log_gamma(&self) -> &[f64] {
        &self.log_gamma
    }

    /// Index of the largest entry of each row.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.log_gamma
            .chunks_exact(self.cols)
            .map(|r| (0..r.len()).fold(0, |best, b| if r[b] > r[best] { b } else { best }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmParams {
    pub max_iters: usize,
    pub ll_rel_tol: f64,
    pub cov_reg: f64,
    pub seed: u64,
}

impl Default for EmParams {
    fn default() -> Self {
        Self { max_iters: 100, ll_rel_tol: 1e-5, cov_reg: 1e-6, seed: 0 }
    }
}

impl EmParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cov_reg >= 0.0 && self.cov_reg.is_finite()) {
            return Err(invalid(format!("cov_reg {} must be non-negative", self.cov_reg)));
        }
        if !(self.ll_rel_tol > 0.0) {
            return Err(invalid(format!("ll_rel_tol {} must be positive", self.ll_rel_tol)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub model: Gmm4,
    /// Component count chosen by mean shift, before any degenerate removal.
    pub initial_components: usize,
    /// Number of EM iterations run.
    pub iterations: usize,
    /// Log-likelihood of the returned model.
    pub log_likelihood: f64,
    /// Log-likelihood of the model entering each iteration.
    pub ll_history: Vec<f64>,
    pub converged: bool,
}

/// Runs EM from `init` until the relative log-likelihood change drops below
/// the tolerance or the iteration budget is spent.
pub fn run_em(points: &[[f64; 4]], init: Gmm4, params: &EmParams) -> Result<(Gmm4, Vec<f64>, bool)> {
    params.validate()?;
    let blocks = PointBlocks::new(points);
    let mut model = init;
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..params.max_iters {
        let (next, ll) = em::em_iteration_blocks(points, &blocks, &model, params.cov_reg)?;
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood became {ll}")));
        }
        let prev = history.last().copied();
        history.push(ll);
        model = next;
        if let Some(prev) = prev {
            if ((ll - prev) / ll.abs().max(f64::MIN_POSITIVE)).abs() < params.ll_rel_tol {
                converged = true;
                break;
            }
        }
    }
    Ok((model, history, converged))
}

/// Full pipeline with explicit mean-shift parameters.
pub fn fit_with(cloud: &PointCloud4D, gbms: &GbmsParams, em: &EmParams) -> Result<FitOutput> {
    em.validate()?;
    // canonical order makes every stage independent of the row order
    let order = canonical_order(cloud.points());
    let sorted = PointCloud4D::new(order.iter().map(|&i| cloud.points()[i]).collect())?;
    let modes = gbms_estimate_components(&sorted, gbms)?;
    let k = modes.components();
    let labels = kinit_labels(sorted.points(), k, em.seed)?;
    let init = em::m_step_hard(sorted.points(), &labels, k, em.cov_reg)?;
    let (model, ll_history, converged) = run_em(sorted.points(), init, em)?;
    let log_likelihood = log_likelihood(sorted.points(), &model)?;
    log::info!(
        "fit: {} points, {k} modes, {} components after {} iterations, ll {log_likelihood:.6}",
        cloud.len(),
        model.len(),
        ll_history.len()
    );
    Ok(FitOutput {
        model,
        initial_components: k,
        iterations: ll_history.len(),
        log_likelihood,
        ll_history,
        converged,
    })
}

/// Fits a mixture with the default mean-shift settings at `bandwidth`.
pub fn fit(cloud: &PointCloud4D, bandwidth: f64, em: &EmParams) -> Result<FitOutput> {
    fit_with(cloud, &GbmsParams::new(bandwidth)?, em)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn three_blobs_recovered() {
        let per = 1000;
        let sigma = 0.01;
        let (cloud, _) = synth::blobs(&synth::THREE_BLOB_CENTERS, sigma, per, 3);
        let out = fit(&cloud, 0.1, &EmParams::with_seed(1)).unwrap();
        assert_eq!(out.model.len(), 3);
        let tol = 3.0 * sigma / (per as f64).sqrt();
        for c in &synth::THREE_BLOB_CENTERS {
            let found = out.model.means().iter().any(|m| (0..4).all(|d| (m[d] - c[d]).abs() < tol));
            assert!(found, "{c:?} vs {:?}", out.model.means());
        }
    }

    #[test]
    fn single_gaussian_recovers_sample_moments() {
        let cov = kernels::packed_diag([0.04, 0.09, 0.01, 0.0025]);
        let cloud = synth::gaussian(&[1.0, -1.0, 2.0, 0.5], &cov, 2000, 4).unwrap();
        let out = fit(&cloud, 0.9, &EmParams::with_seed(2)).unwrap();
        assert_eq!(out.model.len(), 1);
        let n = cloud.len() as f64;
        let mean: [f64; 4] = std::array::from_fn(|d| cloud.points().iter().map(|p| p[d]).sum::<f64>() / n);
        for d in 0..4 {
            assert!((out.model.means()[0][d] - mean[d]).abs() < 1e-9);
        }
        let c = out.model.covariance(0);
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = cloud.points().iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).sum::<f64>() / n;
                assert!((c[i][j] - s - if i == j { 1e-6 } else { 0.0 }).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn repeated_fit_is_bit_identical() {
        let cloud = synth::noisy_planes(1500, 5);
        let a = fit(&cloud, 0.15, &EmParams::with_seed(9)).unwrap();
        let b = fit(&cloud, 0.15, &EmParams::with_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn likelihood_history_non_decreasing() {
        let cloud = synth::noisy_planes(1500, 6);
        let out = fit(&cloud, 0.12, &EmParams::with_seed(3)).unwrap();
        for w in out.ll_history.windows(2) {
            assert!(w[1] - w[0] >= -1e-8 * w[0].abs(), "{:?}", out.ll_history);
        }
        assert!(out.log_likelihood >= out.ll_history.last().unwrap() - 1e-8 * out.log_likelihood.abs());
    }

    #[test]
    fn permutation_invariant() {
        let cloud = synth::noisy_planes(800, 7);
        let mut pts = cloud.points().to_vec();
        pts.reverse();
        pts.swap(3, 500);
        let shuffled = PointCloud4D::new(pts).unwrap();
        let a = fit(&cloud, 0.15, &EmParams::with_seed(4)).unwrap();
        let b = fit(&shuffled, 0.15, &EmParams::with_seed(4)).unwrap();
        assert_eq!(a.model.len(), b.model.len());
        assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-9 * a.log_likelihood.abs());
    }

    #[test]
    fn responsibilities_validation() {
        assert!(Responsibilities::from_log(vec![0.0, 0.0], 2).is_err());
        let half = 0.5f64.ln();
        let r = Responsibilities::from_log(vec![half, half, 0.0, f64::NEG_INFINITY], 2).unwrap();
        assert_eq!(r.rows(), 2);
        assert_eq!(r.hard_labels(), vec![0, 0]);
        assert!(EmParams { cov_reg: -1.0, ..EmParams::default() }.validate().is_err());
    }
}
