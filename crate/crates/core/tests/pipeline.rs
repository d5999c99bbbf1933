//! Frame to model to samples, through the public API only.

use gmmscape::fit::{fit, EmParams};
use gmmscape::model::{load_gmm, save_gmm, ModelFormat};
use gmmscape::{ingest, inference, par, synth, Gmm4, PointCloud4D, RigidTransform};

fn frame_cloud(width: usize, height: usize) -> PointCloud4D {
    let f = synth::render_frame(width, height, &RigidTransform::identity());
    ingest::image_pair_to_cloud(&f.depth, &f.intensity, &f.intrinsics).unwrap()
}

fn fitted(cloud: &PointCloud4D) -> Gmm4 {
    fit(cloud, 0.05, &EmParams::with_seed(3)).unwrap().model
}

#[test]
fn fitted_model_explains_its_frame_better_than_a_single_gaussian() {
    let cloud = frame_cloud(80, 60);
    let model = fitted(&cloud);
    assert!(model.len() > 10);
    let one = fit(&cloud, 2.0, &EmParams::with_seed(3)).unwrap().model;
    assert_eq!(one.len(), 1);
    let (s_many, s_one) = (inference::score(&model, &cloud).unwrap(), inference::score(&one, &cloud).unwrap());
    assert!(s_many > s_one + 1.0, "{s_many} vs {s_one}");
}

fn moments(points: &[[f64; 4]]) -> ([f64; 4], [[f64; 4]; 4]) {
    let n = points.len() as f64;
    let mean: [f64; 4] = std::array::from_fn(|d| points.iter().map(|p| p[d]).sum::<f64>() / n);
    let cov = std::array::from_fn(|i| {
        std::array::from_fn(|j| points.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).sum::<f64>() / n)
    });
    (mean, cov)
}

#[test]
fn resampled_points_keep_the_frame_moments() {
    // an EM fixed point reproduces the data mean and covariance (plus the
    // diagonal regulariser), so samples must match them up to sampling noise
    let cloud = frame_cloud(80, 60);
    let model = fitted(&cloud);
    let n = 200_000;
    let samples = inference::joint_dist_sample(&model, n, 9).unwrap();
    let (m0, c0) = moments(cloud.points());
    let (m1, c1) = moments(samples.points());
    for i in 0..4 {
        let se = (c0[i][i] / n as f64).sqrt();
        assert!((m0[i] - m1[i]).abs() < 5.0 * se, "mean {i}: {} vs {}", m0[i], m1[i]);
        for j in 0..4 {
            let scale = (c0[i][i] * c0[j][j]).sqrt();
            assert!((c0[i][j] - c1[i][j]).abs() < 0.02 * scale, "cov {i}{j}: {} vs {}", c0[i][j], c1[i][j]);
        }
    }
}

#[test]
fn fit_ignores_thread_count_and_input_order() {
    let cloud = frame_cloud(64, 48);
    let serial = par::with_threads(1, || fitted(&cloud));
    let parallel = par::with_threads(4, || fitted(&cloud));
    assert_eq!(serial, parallel);
    let mut reversed = cloud.points().to_vec();
    reversed.reverse();
    assert_eq!(fitted(&PointCloud4D::new(reversed).unwrap()), serial);
}

fn assert_close(a: &Gmm4, b: &Gmm4, rel: f64) {
    assert_eq!(a.len(), b.len());
    let close = |x: f64, y: f64| (x - y).abs() <= rel * x.abs().max(y.abs());
    assert!(a.weights().iter().zip(b.weights()).all(|(x, y)| close(*x, *y)));
    assert_eq!(a.means(), b.means());
    assert_eq!(a.covariances_packed(), b.covariances_packed());
}

#[test]
fn model_files_round_trip() {
    let model = fitted(&frame_cloud(64, 48));
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("m.sgmm");
    let json = dir.path().join("m.json");
    save_gmm(&model, &bin, ModelFormat::Binary).unwrap();
    save_gmm(&model, &json, ModelFormat::Json).unwrap();
    // loading renormalises the weights, which may move them by an ulp
    assert_close(&load_gmm(&json).unwrap(), &model, 1e-15);
    assert_close(&load_gmm(&bin).unwrap(), &model.to_f32_precision().unwrap(), 1e-15);
    let expected = 12 + gmmscape::memory_footprint(&model) as usize;
    assert_eq!(std::fs::metadata(&bin).unwrap().len() as usize, expected);
}

#[test]
fn moved_frame_moves_the_model() {
    let cloud = frame_cloud(64, 48);
    // a pure shift leaves the normalised cloud, and so the component count,
    // unchanged up to rounding
    let pose = RigidTransform::from_translation([0.3, -0.1, 0.2]);
    let moved = ingest::transform_cloud(&cloud, &pose);
    let (a, b) = (fitted(&cloud).transformed(&pose), fitted(&moved));
    let (sa, sb) = (inference::score(&a, &moved).unwrap(), inference::score(&b, &moved).unwrap());
    assert!((sa - sb).abs() < 0.05 * sa.abs().max(1.0), "{sa} vs {sb}");
}
