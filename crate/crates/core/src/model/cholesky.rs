use crate::error::Result;
use crate::kernels::{self, tri_index, BatchedSpd4, LogDensityTable, Packed4};

use super::Gmm4;

/// Per-component Cholesky factors `Σ_b = L_b L_bᵀ`, precision factors
/// `P_b = L_b⁻¹` and log-determinant terms `Σ_j ln(diag P_b)_j = −½ ln|Σ_b|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyCache {
    factors: Vec<Packed4>,
    precisions: Vec<Packed4>,
    log_det_terms: Vec<f64>,
}

impl CholeskyCache {
    /// Fails with the index of the first component whose covariance is not
    /// positive definite.
    pub fn new(model: &Gmm4) -> Result<Self> {
        let batch = BatchedSpd4::new(model.covariances_packed().to_vec());
        let factors = kernels::batched_cholesky(&batch)?;
        let precisions = kernels::batched_tri_inverse(&factors)?.into_blocks();
        let log_det_terms = precisions
            .iter()
            .map(|p| (0..4).map(|j| p[tri_index(j, j)].ln()).sum())
            .collect();
        Ok(Self { factors: factors.into_blocks(), precisions, log_det_terms })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[Packed4] {
        &self.factors
    }

    pub fn precisions(&self) -> &[Packed4] {
        &self.precisions
    }

    pub fn log_det_terms(&self) -> &[f64] {
        &self.log_det_terms
    }

    /// `ln N(x | μ_b, Σ_b)` through the precision factor.
    pub fn log_density(&self, model: &Gmm4, b: usize, x: &[f64; 4]) -> f64 {
        let mu = &model.means()[b];
        let p = &self.precisions[b];
        let d = [x[0] - mu[0], x[1] - mu[1], x[2] - mu[2], x[3] - mu[3]];
        let mut q = 0.0;
        for i in 0..4 {
            let y: f64 = (0..=i).map(|k| p[tri_index(i, k)] * d[k]).sum();
            q += y * y;
        }
        -0.5 * (4.0 * kernels::LN_2PI + q) + self.log_det_terms[b]
    }

    /// Evaluation table for `ln π_b + ln N(x | μ_b, Σ_b)`.
    pub fn weighted_table(&self, model: &Gmm4) -> LogDensityTable {
        let lw: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
        LogDensityTable::new(&lw, model.means(), &self.precisions, &self.log_det_terms)
    }
}

/// Builds the Cholesky cache of `model`.
pub fn cholesky_cache(model: &Gmm4) -> Result<CholeskyCache> {
    CholeskyCache::new(model)
}
