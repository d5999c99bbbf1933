//! Model-to-model alignment and pose graphs built from it.

use gmmscape::fit::{kinit_labels, m_step_hard, run_em, EmParams};
use gmmscape::model::Vector6;
use gmmscape::registration::{
    l2_cost, pose_graph_optimize, register, PoseEdge, PoseGraph, RegistrationParams, Variant,
};
use gmmscape::{synth, Gmm4, RigidTransform};

fn scene(seed: u64) -> Gmm4 {
    let cloud = synth::noisy_planes(8000, seed);
    let labels = kinit_labels(cloud.points(), 60, seed).unwrap();
    let init = m_step_hard(cloud.points(), &labels, 60, 1e-6).unwrap();
    run_em(cloud.points(), init, &EmParams { max_iters: 30, ..EmParams::with_seed(seed) }).unwrap().0
}

#[test]
fn every_variant_undoes_a_small_motion() {
    let target = scene(1);
    let source = scene(2);
    let motion = RigidTransform::exp(&Vector6::new(0.05, -0.03, 0.04, 0.02, -0.03, 0.04));
    let moved = source.transformed(&motion);
    for variant in [Variant::Anisotropic, Variant::Isoplanar, Variant::IsoplanarHybrid] {
        let r = register(variant, &RigidTransform::identity(), &moved, &target, &RegistrationParams::default()).unwrap();
        let err = r.transform.compose(&motion);
        assert!(err.rotation_angle() < 0.5f64.to_radians(), "{variant:?}: {}", err.rotation_angle());
        assert!(err.translation().norm() < 0.01, "{variant:?}: {}", err.translation().norm());
        assert!(r.final_cost <= l2_cost(&moved, &target, &RigidTransform::identity()));
    }
}

#[test]
fn registration_starts_from_the_initial_guess() {
    let target = scene(3);
    let motion = RigidTransform::exp(&Vector6::new(0.3, 0.1, -0.2, 0.1, 0.25, -0.1));
    let moved = target.transformed(&motion);
    let r = register(Variant::IsoplanarHybrid, &motion.inverse(), &moved, &target, &RegistrationParams::default()).unwrap();
    let err = r.transform.compose(&motion);
    assert!(err.rotation_angle() < 1e-6 && err.translation().norm() < 1e-6);
}

#[test]
fn registered_loop_closes_a_pose_graph() {
    // three views of one scene; pairwise registrations become edges
    let views: Vec<RigidTransform> = [[0.0; 6], [0.06, 0.0, 0.02, 0.0, 0.05, 0.0], [0.1, -0.02, 0.05, 0.02, 0.1, 0.0]]
        .iter()
        .map(|v| RigidTransform::exp(&Vector6::from_row_slice(v)))
        .collect();
    let world = scene(4);
    // model i lives in frame i: world points seen from pose i
    let models: Vec<Gmm4> = views.iter().map(|p| world.transformed(&p.inverse())).collect();
    let params = RegistrationParams::default();
    let rel = |i: usize, j: usize| {
        // maps frame j into frame i
        register(Variant::IsoplanarHybrid, &RigidTransform::identity(), &models[j], &models[i], &params).unwrap().transform
    };
    let mut graph = PoseGraph::new(vec![RigidTransform::identity(); 3], vec![]).unwrap();
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        graph.add_edge(PoseEdge::new(i, j, rel(i, j))).unwrap();
    }
    let r = pose_graph_optimize(&graph, 0).unwrap();
    for (got, want) in r.graph.nodes().iter().zip(&views) {
        let err = want.inverse().compose(got);
        assert!(err.rotation_angle() < 1e-4 && err.translation().norm() < 1e-4);
    }
}

#[test]
fn pose_graph_files_round_trip() {
    let nodes: Vec<RigidTransform> =
        (0..4).map(|i| RigidTransform::exp(&Vector6::new(0.1 * i as f64, 0.0, 0.0, 0.0, 0.02 * i as f64, 0.0))).collect();
    let mut g = PoseGraph::chain(nodes);
    g.add_edge(PoseEdge::new(3, 0, RigidTransform::from_translation([-0.3, 0.0, 0.0]))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    g.save(&path).unwrap();
    let back = PoseGraph::load(&path).unwrap();
    assert_eq!(back.edges().len(), 4);
    assert!((back.cost() - g.cost()).abs() < 1e-12);
}
