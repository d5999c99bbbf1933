//! Shared domain types: point clouds, the 4D mixture model, its Cholesky
//! cache and rigid transforms.

mod cholesky;
pub mod io;
mod transform;

pub use cholesky::{cholesky_cache, CholeskyCache};
pub use io::{load_gmm, save_gmm, ModelFormat};
pub use transform::{RigidTransform, Vector6};

use crate::error::{invalid, Error, Result};
use crate::kernels::{cholesky4, tri_index, unpack_sym, Packed4};

/// Dimensionality of the mixture: x, y, z, intensity.
pub const DIM: usize = 4;

/// Floats stored per component: 1 weight + 4 mean + 10 packed covariance.
pub const FLOATS_PER_COMPONENT: usize = 1 + DIM + 10;

/// `N × 4` samples of `(x, y, z, intensity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud4D {
    points: Vec<[f64; 4]>,
}

impl PointCloud4D {
    /// Requires at least one point and finite entries. Intensity is not
    /// range-checked here because model samples live on unbounded support;
    /// see [`PointCloud4D::from_sensor`].
    pub fn new(points: Vec<[f64; 4]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    /// Like [`PointCloud4D::new`] and additionally requires intensity in `[0, 1]`.
    pub fn from_sensor(points: Vec<[f64; 4]>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !(0.0..=1.0).contains(&p[3])) {
            return Err(invalid(format!("intensity of point {i} outside [0, 1]")));
        }
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    pub fn into_points(self) -> Vec<[f64; 4]> {
        self.points
    }

    pub fn spatial(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.points.iter().map(|p| [p[0], p[1], p[2]])
    }
}

/// A Gaussian mixture over `(x, y, z, intensity)` with full covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm4 {
    weights: Vec<f64>,
    means: Vec<[f64; 4]>,
    covariances: Vec<Packed4>,
}

impl Gmm4 {
    pub fn new(weights: Vec<f64>, means: Vec<[f64; 4]>, covariances: Vec<Packed4>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(invalid("mixture needs at least one component"));
        }
        if means.len() != m || covariances.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if let Some(b) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(invalid(format!("weight of component {b} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        if let Some(b) = means.iter().position(|mu| mu.iter().any(|v| !v.is_finite())) {
            return Err(invalid(format!("mean of component {b} is not finite")));
        }
        if let Some(b) = covariances.iter().position(|c| cholesky4(c).is_none()) {
            return Err(Error::NotPositiveDefinite { component: b });
        }
        Ok(Self { weights, means, covariances })
    }

    /// Single component.
    pub fn single(mean: [f64; 4], covariance: Packed4) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![covariance])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[[f64; 4]] {
        &self.means
    }

    pub fn covariances_packed(&self) -> &[Packed4] {
        &self.covariances
    }

    pub fn covariance(&self, b: usize) -> [[f64; 4]; 4] {
        unpack_sym(&self.covariances[b])
    }

    /// Spatial 3×3 block of component `b`'s covariance.
    pub fn spatial_covariance(&self, b: usize) -> [[f64; 3]; 3] {
        let c = &self.covariances[b];
        std::array::from_fn(|i| {
            std::array::from_fn(|j| if j <= i { c[tri_index(i, j)] } else { c[tri_index(j, i)] })
        })
    }

    /// The mixture pushed through a rigid motion of its spatial part.
    /// Intensity statistics are unchanged; spatial/intensity cross terms rotate.
    pub fn transformed(&self, pose: &RigidTransform) -> Gmm4 {
        let r = pose.rotation();
        let means = self
            .means
            .iter()
            .map(|mu| {
                let p = pose.apply([mu[0], mu[1], mu[2]]);
                [p[0], p[1], p[2], mu[3]]
            })
            .collect();
        let covariances = self
            .covariances
            .iter()
            .map(|c| {
                let s = unpack_sym(c);
                // full 4x4 rotation: blockdiag(R, 1)
                let mut q = [[0.0; 4]; 4];
                q[3][3] = 1.0;
                for i in 0..3 {
                    for j in 0..3 {
                        q[i][j] = r[(i, j)];
                    }
                }
                let mut out = [[0.0; 4]; 4];
                for i in 0..4 {
                    for j in 0..=i {
                        let mut v = 0.0;
                        for k in 0..4 {
                            for l in 0..4 {
                                v += q[i][k] * s[k][l] * q[j][l];
                            }
                        }
                        out[i][j] = v;
                    }
                }
                crate::kernels::pack_lower(&out)
            })
            .collect();
        Gmm4 { weights: self.weights.clone(), means, covariances }
    }

    /// The model as it reads back from the binary format: every parameter
    /// rounded to `f32`, weights renormalised.
    pub fn to_f32_precision(&self) -> Result<Gmm4> {
        let narrow = |v: f64| v as f32 as f64;
        io::from_loaded_parts(
            self.weights.iter().map(|&w| narrow(w)).collect(),
            self.means.iter().map(|m| m.map(narrow)).collect(),
            self.covariances.iter().map(|c| c.map(narrow)).collect(),
        )
    }

    pub(crate) fn from_parts_unchecked(
        weights: Vec<f64>,
        means: Vec<[f64; 4]>,
        covariances: Vec<Packed4>,
    ) -> Self {
        Self { weights, means, covariances }
    }
}

/// Storage size in bytes of a model with `components` components at four
/// bytes per float.
pub const fn memory_footprint_for(components: usize) -> u64 {
    4 * components as u64 * FLOATS_PER_COMPONENT as u64
}

/// Storage size in bytes of `model`.
pub fn memory_footprint(model: &Gmm4) -> u64 {
    memory_footprint_for(model.len())
}
