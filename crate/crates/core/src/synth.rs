//! Synthetic data: Gaussian blobs, sampled mixtures and a rendered indoor
//! scene used by tests, benches and the CLI.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::ingest::{CameraIntrinsics, Image, IntensityImage};
use crate::kernels::{cholesky4, tri_index, Packed4};
use crate::model::{PointCloud4D, RigidTransform};
use crate::rng;

pub const THREE_BLOB_CENTERS: [[f64; 4]; 3] = [[0.1; 4], [0.5; 4], [0.9; 4]];

/// Isotropic blobs of `per_blob` points each; also returns the blob label of
/// every point.
pub fn blobs(centers: &[[f64; 4]], sigma: f64, per_blob: usize, seed: u64) -> (PointCloud4D, Vec<usize>) {
    let mut pts = Vec::with_capacity(centers.len() * per_blob);
    let mut labels = Vec::with_capacity(pts.capacity());
    for (b, c) in centers.iter().enumerate() {
        let mut r = rng::stream(seed, b as u64);
        for _ in 0..per_blob {
            pts.push(std::array::from_fn(|d| c[d] + sigma * r.sample::<f64, _>(StandardNormal)));
            labels.push(b);
        }
    }
    (PointCloud4D::new(pts).expect("finite blob samples"), labels)
}

/// `n` draws from `N(mean, cov)`.
pub fn gaussian(mean: &[f64; 4], cov: &Packed4, n: usize, seed: u64) -> Result<PointCloud4D> {
    let l = cholesky4(cov).ok_or_else(|| invalid("covariance is not positive definite"))?;
    let mut r = rng::stream(seed, 0);
    let pts = (0..n)
        .map(|_| {
            let z: [f64; 4] = std::array::from_fn(|_| r.sample(StandardNormal));
            std::array::from_fn(|i| mean[i] + (0..=i).map(|k| l[tri_index(i, k)] * z[k]).sum::<f64>())
        })
        .collect();
    PointCloud4D::new(pts)
}

/// A floor, a textured wall and a cylinder with 5 mm surface noise, roughly
/// 2 m across.
pub fn noisy_planes(n: usize, seed: u64) -> PointCloud4D {
    let mut r = rng::stream(seed, 0);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let noise = 0.005 * r.sample::<f64, _>(StandardNormal);
        let s = r.random::<f64>();
        let (a, b) = (r.random::<f64>(), r.random::<f64>());
        let p = if s < 0.45 {
            let (x, z) = (-1.0 + 2.0 * a, 2.0 * b);
            let tile = ((x * 2.0).floor() as i64 + (z * 2.0).floor() as i64).rem_euclid(2);
            [x, noise, z, 0.25 + 0.4 * tile as f64]
        } else if s < 0.8 {
            let (x, y) = (-1.0 + 2.0 * a, 1.5 * b);
            [x, y, 2.0 + noise, 0.5 + 0.3 * (4.0 * x).sin() * (3.0 * y).cos()]
        } else {
            let th = std::f64::consts::TAU * a;
            let y = b;
            let rad = 0.25 + noise;
            [0.3 + rad * th.cos(), y, 1.0 + rad * th.sin(), 0.85 - 0.2 * y]
        };
        pts.push(p);
    }
    PointCloud4D::new(pts).expect("finite scene samples")
}

/// Intrinsics of the VGA reference camera scaled to `width × height`.
pub fn scaled_intrinsics(width: usize, height: usize) -> CameraIntrinsics {
    let s = width as f64 / 640.0;
    let t = height as f64 / 480.0;
    CameraIntrinsics {
        fx: 525.0 * s,
        fy: 525.0 * t,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
        depth_scale: crate::ingest::DEFAULT_DEPTH_SCALE,
        width,
        height,
    }
}

/// Rendered depth and intensity pair.
#[derive(Debug, Clone)]
pub struct Frame {
    pub depth: Image<u16>,
    pub intensity: IntensityImage,
    pub intrinsics: CameraIntrinsics,
}

const FLOOR_Y: f64 = 1.0;
const BACK_Z: f64 = 4.0;
const LEFT_X: f64 = -1.8;
const RIGHT_X: f64 = 2.2;
const FRONT_Z: f64 = -1.5;
const CYL: ([f64; 2], f64, f64) = ([0.2, 2.2], 0.35, -0.3);
const SPHERE: ([f64; 3], f64) = ([-0.7, 0.6, 2.6], 0.4);

fn shade(p: [f64; 3], surface: u8) -> f64 {
    match surface {
        0 => {
            let tile = ((p[0] * 2.0).floor() as i64 + (p[2] * 2.0).floor() as i64).rem_euclid(2);
            0.25 + 0.4 * tile as f64
        }
        1 => 0.5 + 0.3 * (4.0 * p[0]).sin() * (3.0 * p[1]).cos(),
        2 => 0.4 + 0.1 * (2.0 * p[2]).sin(),
        3 => 0.55,
        4 => 0.45,
        5 => 0.85 - 0.2 * (FLOOR_Y - p[1]),
        _ => 0.15,
    }
}

/// Nearest hit along `o + t d`: `(t, surface)`.
fn trace(o: [f64; 3], d: [f64; 3]) -> Option<(f64, u8)> {
    let mut best: Option<(f64, u8)> = None;
    let mut consider = |t: f64, s: u8| {
        if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, s));
        }
    };
    for (axis, value, surface) in [(1, FLOOR_Y, 0), (2, BACK_Z, 1), (0, LEFT_X, 2), (0, RIGHT_X, 3), (2, FRONT_Z, 4)] {
        if d[axis] != 0.0 {
            consider((value - o[axis]) / d[axis], surface);
        }
    }
    let ([cx, cz], r, top) = CYL;
    let (ox, oz) = (o[0] - cx, o[2] - cz);
    let a = d[0] * d[0] + d[2] * d[2];
    let b = 2.0 * (ox * d[0] + oz * d[2]);
    let c = ox * ox + oz * oz - r * r;
    let disc = b * b - 4.0 * a * c;
    if a > 0.0 && disc >= 0.0 {
        let t = (-b - disc.sqrt()) / (2.0 * a);
        let y = o[1] + t * d[1];
        if (top..=FLOOR_Y).contains(&y) {
            consider(t, 5);
        }
    }
    let (sc, sr) = SPHERE;
    let oc = [o[0] - sc[0], o[1] - sc[1], o[2] - sc[2]];
    let a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let b = 2.0 * (oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2]);
    let c = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - sr * sr;
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        consider((-b - disc.sqrt()) / (2.0 * a), 6);
    }
    best
}

/// Renders the indoor scene from camera pose `pose` (camera to world, camera
/// axes x right, y down, z forward). Depth is stored in millimetres.
pub fn render_frame(width: usize, height: usize, pose: &RigidTransform) -> Frame {
    let intr = scaled_intrinsics(width, height);
    let rot = pose.rotation();
    let o = pose.translation();
    let mut depth = vec![0u16; width * height];
    let mut gray = vec![0u8; width * height];
    for v in 0..height {
        for u in 0..width {
            let dc = nalgebra::Vector3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
            let dw = rot * dc;
            // with the camera-frame direction scaled to unit z, t is the depth
            if let Some((t, s)) = trace([o.x, o.y, o.z], [dw.x, dw.y, dw.z]) {
                let mm = (t * intr.depth_scale).round();
                if mm >= 1.0 && mm <= u16::MAX as f64 {
                    let p = [o.x + t * dw.x, o.y + t * dw.y, o.z + t * dw.z];
                    depth[v * width + u] = mm as u16;
                    gray[v * width + u] = (shade(p, s).clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
    }
    Frame {
        depth: Image::new(width, height, depth).expect("sized buffer"),
        intensity: IntensityImage::Gray8(Image::new(width, height, gray).expect("sized buffer")),
        intrinsics: intr,
    }
}

/// Camera pose `i` of a short sideways sweep through the scene.
pub fn trajectory_pose(i: usize) -> RigidTransform {
    let s = i as f64;
    let xi = crate::model::Vector6::new(0.06 * s, -0.01 * s, 0.03 * s, 0.0, 0.04 * s, 0.005 * s);
    RigidTransform::exp(&xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::image_pair_to_cloud;

    #[test]
    fn blobs_have_requested_shape() {
        let (c, labels) = blobs(&THREE_BLOB_CENTERS, 0.01, 10, 0);
        assert_eq!(c.len(), 30);
        assert_eq!(labels.iter().filter(|&&l| l == 2).count(), 10);
    }

    #[test]
    fn gaussian_sample_moments() {
        let cov = crate::kernels::packed_diag([1.0, 4.0, 0.25, 0.01]);
        let c = gaussian(&[1.0, 2.0, 3.0, 0.5], &cov, 20000, 1).unwrap();
        let n = c.len() as f64;
        let m1: f64 = c.points().iter().map(|p| p[1]).sum::<f64>() / n;
        let v1: f64 = c.points().iter().map(|p| (p[1] - m1).powi(2)).sum::<f64>() / n;
        assert!((m1 - 2.0).abs() < 0.05);
        assert!((v1 - 4.0).abs() < 0.15);
    }

    #[test]
    fn rendered_depth_matches_geometry() {
        let f = render_frame(64, 48, &RigidTransform::identity());
        // the centre ray looks straight down +z at the cylinder
        let d = f.depth.get(32, 24) as f64 / 1000.0;
        assert!(d > 1.8 && d < 2.2, "{d}");
        let cloud = image_pair_to_cloud(&f.depth, &f.intensity, &f.intrinsics).unwrap();
        assert_eq!(cloud.len(), 64 * 48);
        for p in cloud.points() {
            assert!(p[1] <= FLOOR_Y + 1e-3 && p[2] <= BACK_Z + 1e-3);
        }
    }
}
