//! Rigid transforms on SE(3).
//!
//! Tangent vectors are ordered `(ρ, φ)`: translation part first, rotation
//! part (axis × angle) second. Perturbations are applied on the left,
//! `T ← exp(ξ) · T`.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};

use crate::error::{invalid, Error, Result};

pub type Vector6 = nalgebra::Vector6<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl RigidTransform {
    /// Checks `RᵀR = I` and `det R = 1` within 1e-10.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("transform has non-finite entries"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if ortho > 1e-10 || (det - 1.0).abs() > 1e-10 {
            return Err(invalid(format!(
                "rotation is not orthonormal (|RᵀR - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::from(t) }
    }

    /// From a unit quaternion `[w, x, y, z]` (normalised here) and a translation.
    pub fn from_quaternion(q: [f64; 4], t: [f64; 3]) -> Result<Self> {
        let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        if !(quat.norm() > 1e-12) {
            return Err(invalid("zero quaternion"));
        }
        let uq = UnitQuaternion::from_quaternion(quat);
        Ok(Self { rotation: *uq.to_rotation_matrix().matrix(), translation: Vector3::from(t) })
    }

    /// `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        [q.w, q.i, q.j, q.k]
    }

    /// Projects an approximately orthonormal matrix onto SO(3).
    pub fn orthonormalized(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_matrix_eps(&rotation, 1e-15, 100, Rotation3::identity());
        Self { rotation: *r.matrix(), translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.rotation * Vector3::from(p) + self.translation;
        [q.x, q.y, q.z]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Re-projects the rotation onto SO(3) to remove accumulated drift.
    pub fn renormalized(&self) -> RigidTransform {
        Self::orthonormalized(self.rotation, self.translation)
    }

    /// Exponential map from `(ρ, φ)`.
    pub fn exp(xi: &Vector6) -> RigidTransform {
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        let phi = Vector3::new(xi[3], xi[4], xi[5]);
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let k = skew(&phi);
        let k2 = k * k;
        let (a, b, c) = if theta < 1e-5 {
            // series of sinθ/θ, (1-cosθ)/θ², (θ-sinθ)/θ³
            (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
        };
        let rotation = Matrix3::identity() + k * a + k2 * b;
        let v = Matrix3::identity() + k * b + k2 * c;
        RigidTransform { rotation, translation: v * rho }
    }

    /// Logarithm map to `(ρ, φ)`.
    pub fn log(&self) -> Vector6 {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let phi = q.scaled_axis();
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let k = skew(&phi);
        let coef = if theta < 1e-5 {
            1.0 / 12.0 + theta2 / 720.0
        } else {
            (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
        };
        let v_inv = Matrix3::identity() - k * 0.5 + k * k * coef;
        let rho = v_inv * self.translation;
        Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z)
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }

    /// 6×6 adjoint for the `(ρ, φ)` ordering.
    pub fn adjoint(&self) -> nalgebra::Matrix6<f64> {
        let mut ad = nalgebra::Matrix6::zeros();
        let r = self.rotation;
        let tr = skew(&self.translation) * r;
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&tr);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// From a homogeneous matrix; the rotation block is re-orthonormalised
    /// (text files carry limited digits) but must already be close to SO(3).
    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self> {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into();
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(invalid("last row of a rigid transform must be 0 0 0 1"));
        }
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-4 || r.determinant() < 0.0 {
            return Err(invalid("rotation block is not a rotation"));
        }
        Ok(Self::orthonormalized(r, t))
    }

    /// Four lines of four space-separated values, row-major.
    pub fn to_text(&self) -> String {
        let m = self.to_matrix4();
        let mut s = String::new();
        for i in 0..4 {
            let row: Vec<String> = (0..4).map(|j| format!("{:.17e}", m[(i, j)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("bad number {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 16 {
            return Err(Error::Format(format!("expected 16 values, found {}", vals.len())));
        }
        Self::from_matrix4(&Matrix4::from_row_slice(&vals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xi() -> impl Strategy<Value = Vector6> {
        (prop::array::uniform3(-2.0..2.0f64), prop::array::uniform3(-1.5..1.5f64))
            .prop_map(|(r, p)| Vector6::new(r[0], r[1], r[2], p[0], p[1], p[2]))
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(v in xi()) {
            let t = RigidTransform::exp(&v);
            prop_assert!((t.log() - v).amax() < 1e-9);
            prop_assert!(RigidTransform::new(*t.rotation(), *t.translation()).is_ok());
        }

        #[test]
        fn compose_inverse_is_identity(v in xi()) {
            let t = RigidTransform::exp(&v);
            let e = t.compose(&t.inverse());
            prop_assert!((e.to_matrix4() - Matrix4::identity()).amax() < 1e-12);
        }

        #[test]
        fn adjoint_moves_perturbation(v in xi(), d in xi()) {
            // T exp(d) = exp(Ad_T d) T
            let t = RigidTransform::exp(&v);
            let d = d * 0.1;
            let lhs = t.compose(&RigidTransform::exp(&d));
            let rhs = RigidTransform::exp(&(t.adjoint() * d)).compose(&t);
            prop_assert!((lhs.to_matrix4() - rhs.to_matrix4()).amax() < 1e-10);
        }
    }

    #[test]
    fn text_round_trip() {
        let t = RigidTransform::exp(&Vector6::new(0.3, -1.0, 2.0, 0.2, 0.1, -0.4));
        let back = RigidTransform::parse_text(&t.to_text()).unwrap();
        assert!((back.to_matrix4() - t.to_matrix4()).amax() < 1e-14);
        assert!(RigidTransform::parse_text("1 0 0").is_err());
    }

    #[test]
    fn quaternion_round_trip() {
        let t = RigidTransform::exp(&Vector6::new(0.0, 0.0, 0.0, 0.5, -0.2, 0.9));
        let q = t.quaternion();
        let back = RigidTransform::from_quaternion(q, [0.0; 3]).unwrap();
        assert!((back.rotation() - t.rotation()).amax() < 1e-12);
    }

    #[test]
    fn rejects_non_rotation() {
        assert!(RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflect, Vector3::zeros()).is_err());
    }
}
