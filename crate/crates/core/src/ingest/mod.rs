//! Depth + intensity frames to 4D point clouds.

mod image_io;
pub mod ply;

pub use image_io::{load_depth, load_intensity, save_depth_png, save_intensity_png};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{PointCloud4D, RigidTransform};
use crate::par;

/// Default depth units per meter (millimetre depth images).
pub const DEFAULT_DEPTH_SCALE: f64 = 1000.0;

/// Pinhole intrinsics of a depth camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    pub width: usize,
    pub height: usize,
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, depth_scale: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, depth_scale, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.depth_scale > 0.0) {
            return Err(invalid("focal lengths and depth scale must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(invalid("principal point must lie inside the image"));
        }
        Ok(())
    }

    /// Kinect-style defaults for a 640×480 sensor.
    pub fn default_vga() -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5, depth_scale: DEFAULT_DEPTH_SCALE, width: 640, height: 480 }
    }

    /// Intrinsics matching [`decimate`] by `factor`: decimated pixel `u`
    /// samples original pixel `u·factor`.
    pub fn decimated(&self, factor: usize) -> Result<Self> {
        if factor == 0 || factor > self.width || factor > self.height {
            return Err(invalid(format!("decimation factor {factor} out of range")));
        }
        let f = factor as f64;
        Self::new(
            self.fx / f,
            self.fy / f,
            self.cx / f,
            self.cy / f,
            self.depth_scale,
            self.width / factor,
            self.height / factor,
        )
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        [self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy]
    }

    /// Camera-frame point for pixel `(u, v)` at metric depth `z`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [(u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z]
    }
}

/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}×{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let data = (0..height).flat_map(|v| (0..width).map(move |u| (u, v))).map(|(u, v)| f(u, v)).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Intensity channel at either bit depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntensityImage {
    Gray8(Image<u8>),
    Gray16(Image<u16>),
}

impl IntensityImage {
    pub fn width(&self) -> usize {
        match self {
            Self::Gray8(i) => i.width(),
            Self::Gray16(i) => i.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Self::Gray8(i) => i.height(),
            Self::Gray16(i) => i.height(),
        }
    }

    /// Intensity at `(u, v)` scaled to `[0, 1]`.
    #[inline]
    pub fn normalized(&self, u: usize, v: usize) -> f64 {
        match self {
            Self::Gray8(i) => i.get(u, v) as f64 / u8::MAX as f64,
            Self::Gray16(i) => i.get(u, v) as f64 / u16::MAX as f64,
        }
    }

    pub fn decimate(&self, factor: usize) -> Result<Self> {
        Ok(match self {
            Self::Gray8(i) => Self::Gray8(decimate(i, factor)?),
            Self::Gray16(i) => Self::Gray16(decimate(i, factor)?),
        })
    }
}

/// Back-projects every pixel with nonzero depth. Points come out in
/// row-major pixel order.
pub fn image_pair_to_cloud(
    depth: &Image<u16>,
    intensity: &IntensityImage,
    intrinsics: &CameraIntrinsics,
) -> Result<PointCloud4D> {
    intrinsics.validate()?;
    let (w, h) = (depth.width(), depth.height());
    if intensity.width() != w || intensity.height() != h {
        return Err(Error::DimensionMismatch(format!(
            "depth is {w}×{h}, intensity is {}×{}",
            intensity.width(),
            intensity.height()
        )));
    }
    if intrinsics.width != w || intrinsics.height != h {
        return Err(Error::DimensionMismatch(format!(
            "intrinsics are for {}×{}, image is {w}×{h}",
            intrinsics.width, intrinsics.height
        )));
    }
    let rows = par::map(h, |v| {
        let mut row = Vec::new();
        for u in 0..w {
            let d = depth.get(u, v);
            if d == 0 {
                continue;
            }
            let z = d as f64 / intrinsics.depth_scale;
            let [x, y, z] = intrinsics.back_project(u as f64, v as f64, z);
            row.push([x, y, z, intensity.normalized(u, v)]);
        }
        row
    });
    let points: Vec<[f64; 4]> = rows.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    PointCloud4D::from_sensor(points)
}

/// Strided subsampling: output pixel `(u, v)` is input `(u·factor, v·factor)`.
pub fn decimate<T: Copy>(image: &Image<T>, factor: usize) -> Result<Image<T>> {
    if factor == 0 {
        return Err(invalid("decimation factor must be at least 1"));
    }
    if factor > image.width || factor > image.height {
        return Err(invalid(format!(
            "decimation factor {factor} exceeds image size {}×{}",
            image.width, image.height
        )));
    }
    let (w, h) = (image.width / factor, image.height / factor);
    Ok(Image::from_fn(w, h, |u, v| image.get(u * factor, v * factor)))
}

/// Applies `pose` to the spatial columns; intensity is untouched.
pub fn transform_cloud(cloud: &PointCloud4D, pose: &RigidTransform) -> PointCloud4D {
    let pts = cloud
        .points()
        .iter()
        .map(|p| {
            let q = pose.apply([p[0], p[1], p[2]]);
            [q[0], q[1], q[2], p[3]]
        })
        .collect();
    PointCloud4D::new(pts).expect("rigid motion keeps a valid cloud valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vector6;
    use proptest::prelude::*;

    fn intr(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 120.0, w as f64 / 2.0 - 0.5, h as f64 / 2.0 - 0.5, 1000.0, w, h).unwrap()
    }

    #[test]
    fn principal_and_offset_rays() {
        let k = CameraIntrinsics::new(2.0, 2.0, 1.0, 1.0, 1000.0, 4, 4).unwrap();
        let depth = Image::from_fn(4, 4, |u, v| if (u, v) == (1, 1) || (u, v) == (3, 1) { 1000 } else { 0 });
        let inten = IntensityImage::Gray8(Image::from_fn(4, 4, |_, _| 51));
        let c = image_pair_to_cloud(&depth, &inten, &k).unwrap();
        assert_eq!(c.points(), &[[0.0, 0.0, 1.0, 0.2], [1.0, 0.0, 1.0, 0.2]]);
    }

    #[test]
    fn ramp_frame_oracle() {
        let k = CameraIntrinsics::new(3.0, 3.0, 1.5, 1.5, 1000.0, 4, 4).unwrap();
        let depth = Image::from_fn(4, 4, |_, _| 1000u16);
        let inten = IntensityImage::Gray8(Image::from_fn(4, 4, |u, v| (17 * (v * 4 + u)) as u8));
        let c = image_pair_to_cloud(&depth, &inten, &k).unwrap();
        assert_eq!(c.len(), 16);
        for (idx, p) in c.points().iter().enumerate() {
            let (u, v) = (idx % 4, idx / 4);
            let raw = 17 * idx;
            assert_eq!(p[3], raw as f64 / 255.0);
            assert_eq!(p[0], (u as f64 - 1.5) / 3.0);
            assert_eq!(p[1], (v as f64 - 1.5) / 3.0);
            assert_eq!(p[2], 1.0);
        }
    }

    #[test]
    fn errors() {
        let k = intr(4, 4);
        let depth = Image::from_fn(4, 4, |_, _| 0u16);
        let inten = IntensityImage::Gray16(Image::from_fn(4, 4, |_, _| 0u16));
        assert!(matches!(image_pair_to_cloud(&depth, &inten, &k), Err(Error::EmptyCloud)));
        let inten = IntensityImage::Gray16(Image::from_fn(4, 3, |_, _| 0u16));
        assert!(matches!(image_pair_to_cloud(&depth, &inten, &k), Err(Error::DimensionMismatch(_))));
        assert!(CameraIntrinsics::new(1.0, 1.0, 5.0, 1.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn decimation_sizes() {
        let img = Image::from_fn(640, 480, |u, v| (u + 1000 * v) as u32);
        let d2 = decimate(&img, 2).unwrap();
        assert_eq!((d2.width(), d2.height()), (320, 240));
        assert_eq!(d2.get(3, 5), img.get(6, 10));
        let d3 = decimate(&img, 3).unwrap();
        assert_eq!((d3.width(), d3.height()), (213, 160));
        let d4 = decimate(&img, 4).unwrap();
        assert_eq!((d4.width(), d4.height()), (160, 120));
        assert_eq!(decimate(&img, 1).unwrap(), img);
        assert!(decimate(&img, 0).is_err());
        assert!(decimate(&Image::from_fn(3, 8, |_, _| 0u8), 4).is_err());
    }

    #[test]
    fn decimated_intrinsics_agree_with_decimated_pixels() {
        let k = CameraIntrinsics::default_vga();
        let k2 = k.decimated(2).unwrap();
        let a = k.back_project(2.0 * 37.0, 2.0 * 91.0, 1.7);
        let b = k2.back_project(37.0, 91.0, 1.7);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn decimation_composes(a in 1usize..4, b in 1usize..4, w in 12usize..40, h in 12usize..40) {
            let img = Image::from_fn(w, h, |u, v| (u * 7 + v * 131) as u32);
            let once = decimate(&img, a * b).unwrap();
            let twice = decimate(&decimate(&img, a).unwrap(), b).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn back_projection_inverts_projection(u in 0.0..640.0f64, v in 0.0..480.0f64, z in 0.1..10.0f64) {
            let k = CameraIntrinsics::default_vga();
            let p = k.back_project(u, v, z);
            let [pu, pv] = k.project(p);
            prop_assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }

        #[test]
        fn transform_preserves_distances(
            pts in prop::collection::vec(prop::array::uniform4(-5.0..5.0f64), 2..20),
            xi in prop::array::uniform6(-1.0..1.0f64),
        ) {
            let cloud = PointCloud4D::new(pts).unwrap();
            let t = RigidTransform::exp(&Vector6::from_row_slice(&xi));
            let out = transform_cloud(&cloud, &t);
            let d = |p: &[f64; 4], q: &[f64; 4]| ((p[0]-q[0]).powi(2) + (p[1]-q[1]).powi(2) + (p[2]-q[2]).powi(2)).sqrt();
            for i in 0..cloud.len() {
                prop_assert_eq!(out.points()[i][3], cloud.points()[i][3]);
                for j in 0..i {
                    let a = d(&cloud.points()[i], &cloud.points()[j]);
                    let b = d(&out.points()[i], &out.points()[j]);
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn transform_cases() {
        let cloud = PointCloud4D::new(vec![[1.0, 2.0, 3.0, 0.5], [0.0, 0.0, 0.0, 0.1]]).unwrap();
        assert_eq!(transform_cloud(&cloud, &RigidTransform::identity()), cloud);
        let shifted = transform_cloud(&cloud, &RigidTransform::from_translation([1.0, 0.0, 0.0]));
        assert_eq!(shifted.points()[0], [2.0, 2.0, 3.0, 0.5]);
        assert_eq!(shifted.points()[1], [1.0, 0.0, 0.0, 0.1]);

        let t1 = RigidTransform::exp(&Vector6::new(0.1, 0.2, 0.3, 0.3, -0.1, 0.2));
        let t2 = RigidTransform::exp(&Vector6::new(-0.5, 0.0, 1.0, -0.2, 0.4, 0.1));
        let once = transform_cloud(&cloud, &t2.compose(&t1));
        let twice = transform_cloud(&transform_cloud(&cloud, &t1), &t2);
        for (a, b) in once.points().iter().zip(twice.points()) {
            for i in 0..4 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }
}
