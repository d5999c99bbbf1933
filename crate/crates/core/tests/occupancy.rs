//! Occupancy maps built from fitted models of rendered frames.

use gmmscape::fit::{fit, EmParams};
use gmmscape::occupancy::{CellState, GridParams, OccupancyGrid3D};
use gmmscape::{ingest, synth, RigidTransform};

fn grid_params() -> GridParams {
    GridParams { resolution: 0.1, origin: [-2.5, -1.5, -0.5], dims: [50, 30, 50], ..GridParams::default() }
}

#[test]
fn map_of_a_rendered_room() {
    let pose = RigidTransform::identity();
    let f = synth::render_frame(80, 60, &pose);
    let cloud = ingest::image_pair_to_cloud(&f.depth, &f.intensity, &f.intrinsics).unwrap();
    let model = fit(&cloud, 0.05, &EmParams::with_seed(1)).unwrap().model;
    let mut grid = OccupancyGrid3D::new(grid_params()).unwrap();
    grid.insert_resampled_model(&model, &pose, 60_000, 6.0, 2).unwrap();

    let p = *grid.params();
    // the camera sits in free space, the floor one meter below it is solid
    assert_eq!(grid.state(p.voxel_of([0.0, 0.0, 0.5]).unwrap()), CellState::Free);
    let floor = grid.query_occupied().iter().filter(|c| (c[1] - 1.0).abs() < 0.15).count();
    assert!(floor > 20, "{floor} occupied floor voxels");
    // nothing is seen behind the camera
    assert_eq!(grid.state(p.voxel_of([0.0, 0.0, -0.3]).unwrap()), CellState::Unknown);

    let c = grid.counts();
    assert_eq!(c.occupied + c.free + c.unknown, p.cell_count());
    assert!(c.occupied > 0 && c.free > c.occupied);
}

#[test]
fn grid_files_round_trip_and_insertion_is_repeatable() {
    let pose = RigidTransform::identity();
    let f = synth::render_frame(48, 36, &pose);
    let cloud = ingest::image_pair_to_cloud(&f.depth, &f.intensity, &f.intrinsics).unwrap();
    let model = fit(&cloud, 0.08, &EmParams::with_seed(5)).unwrap().model;
    let build = || {
        let mut g = OccupancyGrid3D::new(grid_params()).unwrap();
        g.insert_resampled_model(&model, &pose, 20_000, 5.0, 11).unwrap();
        g
    };
    let g = build();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.bin");
    g.save(&path).unwrap();
    let back = OccupancyGrid3D::load(&path).unwrap();
    assert_eq!(back.params(), g.params());
    assert_eq!(back.cells().len(), g.cells().len());
    assert!(back.cells().iter().zip(g.cells()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(build().cells().iter().zip(g.cells()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn sensor_outside_the_grid_is_rejected() {
    let f = synth::render_frame(32, 24, &RigidTransform::identity());
    let cloud = ingest::image_pair_to_cloud(&f.depth, &f.intensity, &f.intrinsics).unwrap();
    let model = fit(&cloud, 0.1, &EmParams::with_seed(1)).unwrap().model;
    let mut grid = OccupancyGrid3D::new(grid_params()).unwrap();
    let far = RigidTransform::from_translation([40.0, 0.0, 0.0]);
    let err = grid.insert_resampled_model(&model, &far, 100, 5.0, 0).unwrap_err();
    assert!(matches!(err, gmmscape::Error::OriginOutsideGrid(_)));
    assert_eq!(grid.counts().unknown, grid.params().cell_count());
}
