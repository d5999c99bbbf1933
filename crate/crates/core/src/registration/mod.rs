//! Distribution-to-distribution rigid alignment of the spatial marginals of
//! two mixtures, and pose-graph optimisation for loop closure.
//!
//! The objective is the negated closed-form L2 inner product of the moved
//! source mixture with the target mixture,
//! `−Σ_ab π_a π_b N(Rμ_a + t | μ_b, RΣ_aRᵀ + Σ_b)`. This is a stand-in for
//! the anisotropic/isoplanar objectives of the original GIRA registration
//! code, not a reproduction of them. It is minimised on SE(3) by damped
//! Gauss-Newton steps with left retraction `T ← exp(δ)·T`.

mod posegraph;

pub use posegraph::{pose_graph_optimize, PoseEdge, PoseGraph, PoseGraphParams, PoseGraphResult};

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Gmm4, RigidTransform, Vector6};
use crate::par;

/// Pairs whose Mahalanobis bound exceeds this many nats below their peak
/// are left out of cost and derivatives.
const PAIR_CUTOFF: f64 = 36.8;
const LN_2PI: f64 = crate::kernels::LN_2PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationParams {
    pub max_iters: usize,
    /// Stop once `‖∇cost‖ ≤ grad_tol · max(1, |cost|)`.
    pub grad_tol: f64,
    /// Flattened eigenvalue as a fraction of the largest eigenvalue in the
    /// mixture.
    pub planar_ratio: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-8, planar_ratio: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spatial marginal of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture3 {
    pub weights: Vec<f64>,
    pub means: Vec<Vector3<f64>>,
    pub covs: Vec<Matrix3<f64>>,
    lam: Vec<f64>,
}

fn lambda_max(c: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new(*c).eigenvalues.max().max(0.0) * (1.0 + 1e-9)
}

impl Mixture3 {
    pub fn new(weights: Vec<f64>, means: Vec<Vector3<f64>>, covs: Vec<Matrix3<f64>>) -> Self {
        let lam = covs.iter().map(lambda_max).collect();
        Self { weights, means, covs, lam }
    }

    pub fn spatial(model: &Gmm4) -> Self {
        let means = model.means().iter().map(|m| Vector3::new(m[0], m[1], m[2])).collect();
        let covs = (0..model.len())
            .map(|b| {
                let s = model.spatial_covariance(b);
                Matrix3::from_fn(|i, j| s[i][j])
            })
            .collect();
        Self::new(model.weights().to_vec(), means, covs)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Replaces every covariance's smallest eigenvalue by
    /// `ratio × (largest eigenvalue in the mixture)`, keeping eigenvectors.
    pub fn flattened(&self, ratio: f64) -> Self {
        let eig: Vec<SymmetricEigen<f64, nalgebra::U3>> = self.covs.iter().map(|c| SymmetricEigen::new(*c)).collect();
        let top = eig.iter().map(|e| e.eigenvalues.max()).fold(0.0f64, f64::max);
        let eps = ratio * top;
        let covs = eig
            .into_iter()
            .map(|mut e| {
                let i = e.eigenvalues.imin();
                e.eigenvalues[i] = eps;
                let c = e.recompose();
                (c + c.transpose()) * 0.5
            })
            .collect();
        Self::new(self.weights.clone(), self.means.clone(), covs)
    }
}

/// Cost, gradient and Gauss-Newton Hessian with respect to a left
/// perturbation `(ρ, φ)` of `pose`.
#[derive(Debug, Clone, Copy)]
pub struct CostEval {
    pub cost: f64,
    pub gradient: Vector6,
    pub hessian: Matrix6<f64>,
}

fn evaluate(src: &Mixture3, tgt: &Mixture3, pose: &RigidTransform, derivatives: bool) -> Result<CostEval> {
    let r = *pose.rotation();
    let t = *pose.translation();
    let w = [skew(&Vector3::x()), skew(&Vector3::y()), skew(&Vector3::z())];
    let per = par::map(src.len(), |a| {
        let y = r * src.means[a] + t;
        let ca = r * src.covs[a] * r.transpose();
        let mut cost = 0.0;
        let mut grad = Vector6::zeros();
        let mut hess = Matrix6::zeros();
        for b in 0..tgt.len() {
            let res = y - tgt.means[b];
            let bound = src.lam[a] + tgt.lam[b];
            if res.norm_squared() > 2.0 * PAIR_CUTOFF * bound {
                continue;
            }
            let s = ca + tgt.covs[b];
            let Some(chol) = s.cholesky() else { continue };
            let z = chol.solve(&res);
            let log_det = 2.0 * (0..3).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
            let ln_f = -0.5 * (3.0 * LN_2PI + log_det + res.dot(&z));
            let wf = src.weights[a] * tgt.weights[b] * ln_f.exp();
            cost -= wf;
            if !derivatives {
                continue;
            }
            let s_inv = chol.inverse();
            let mut g = Vector6::zeros();
            for k in 0..3 {
                g[k] = -z[k];
                let dr = w[k] * y;
                let ds = w[k] * ca - ca * w[k];
                g[3 + k] = -z.dot(&dr) + 0.5 * z.dot(&(ds * z)) - 0.5 * (s_inv * ds).trace();
            }
            grad -= g * wf;
            let mut jac = nalgebra::Matrix3x6::zeros();
            jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&y)));
            hess += jac.transpose() * s_inv * jac * wf;
        }
        (cost, grad, hess)
    });
    let mut out = CostEval { cost: 0.0, gradient: Vector6::zeros(), hessian: Matrix6::zeros() };
    for (c, g, h) in per {
        out.cost += c;
        out.gradient += g;
        out.hessian += h;
    }
    if !out.cost.is_finite() || !out.gradient.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!("registration cost became {}", out.cost)));
    }
    Ok(out)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Negated L2 inner product of `source` moved by `pose` with `target`.
pub fn l2_cost(source: &Gmm4, target: &Gmm4, pose: &RigidTransform) -> f64 {
    mixture_cost(&Mixture3::spatial(source), &Mixture3::spatial(target), pose)
}

pub fn mixture_cost(source: &Mixture3, target: &Mixture3, pose: &RigidTransform) -> f64 {
    evaluate(source, target, pose, false).map_or(f64::NAN, |e| e.cost)
}

/// Cost with analytic gradient and Gauss-Newton Hessian.
pub fn mixture_cost_derivatives(source: &Mixture3, target: &Mixture3, pose: &RigidTransform) -> Result<CostEval> {
    evaluate(source, target, pose, true)
}

/// Levenberg-Marquardt on SE(3) from `init`.
pub fn register_mixtures(
    init: &RigidTransform,
    source: &Mixture3,
    target: &Mixture3,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    if source.is_empty() || target.is_empty() {
        return Err(invalid("registration needs non-empty mixtures"));
    }
    let mut pose = init.renormalized();
    let mut cur = evaluate(source, target, &pose, true)?;
    let mut lambda = 1e-4;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        if cur.gradient.norm() <= params.grad_tol * cur.cost.abs().max(1.0) {
            converged = true;
            break;
        }
        let diag_floor = cur.hessian.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = cur.hessian;
            for i in 0..6 {
                a[(i, i)] += lambda * a[(i, i)].max(diag_floor);
            }
            let Some(ch) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -ch.solve(&cur.gradient);
            let trial = RigidTransform::exp(&step).compose(&pose).renormalized();
            let cost = mixture_cost(source, target, &trial);
            if !cost.is_finite() {
                return Err(Error::Numerical("registration cost became non-finite".into()));
            }
            if cost < cur.cost {
                pose = trial;
                cur = evaluate(source, target, &pose, true)?;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
            break;
        }
        iterations += 1;
    }
    Ok(RegistrationResult { transform: pose, final_cost: cur.cost, iterations, converged })
}

pub fn anisotropic_registration_with(
    init: &RigidTransform,
    source: &Gmm4,
    target: &Gmm4,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    register_mixtures(init, &Mixture3::spatial(source), &Mixture3::spatial(target), params)
}

pub fn isoplanar_registration_with(
    init: &RigidTransform,
    source: &Gmm4,
    target: &Gmm4,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    let s = Mixture3::spatial(source).flattened(params.planar_ratio);
    let t = Mixture3::spatial(target).flattened(params.planar_ratio);
    register_mixtures(init, &s, &t, params)
}

pub fn isoplanar_hybrid_registration_with(
    init: &RigidTransform,
    source: &Gmm4,
    target: &Gmm4,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    let coarse = isoplanar_registration_with(init, source, target, params)?;
    anisotropic_registration_with(&coarse.transform, source, target, params)
}

/// Full-covariance alignment.
pub fn anisotropic_registration(init: &RigidTransform, source: &Gmm4, target: &Gmm4) -> Result<RegistrationResult> {
    anisotropic_registration_with(init, source, target, &RegistrationParams::default())
}

/// Alignment after flattening every covariance to a disc.
pub fn isoplanar_registration(init: &RigidTransform, source: &Gmm4, target: &Gmm4) -> Result<RegistrationResult> {
    isoplanar_registration_with(init, source, target, &RegistrationParams::default())
}

/// Isoplanar coarse stage followed by anisotropic refinement.
pub fn isoplanar_hybrid_registration(init: &RigidTransform, source: &Gmm4, target: &Gmm4) -> Result<RegistrationResult> {
    isoplanar_hybrid_registration_with(init, source, target, &RegistrationParams::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Anisotropic,
    Isoplanar,
    IsoplanarHybrid,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anisotropic" => Ok(Self::Anisotropic),
            "isoplanar" => Ok(Self::Isoplanar),
            "isoplanar-hybrid" | "hybrid" => Ok(Self::IsoplanarHybrid),
            _ => Err(invalid(format!("unknown registration variant {s:?}"))),
        }
    }
}

pub fn register(
    variant: Variant,
    init: &RigidTransform,
    source: &Gmm4,
    target: &Gmm4,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    match variant {
        Variant::Anisotropic => anisotropic_registration_with(init, source, target, params),
        Variant::Isoplanar => isoplanar_registration_with(init, source, target, params),
        Variant::IsoplanarHybrid => isoplanar_hybrid_registration_with(init, source, target, params),
    }
}
