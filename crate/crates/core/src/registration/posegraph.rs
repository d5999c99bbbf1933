//! Pose-graph optimisation on SE(3).
//!
//! Edge residual `e = log(Z⁻¹ T_i⁻¹ T_j)`. Under left perturbations
//! `T_k ← exp(δ_k) T_k` its Jacobians are `J_j = J_r⁻¹(e) Ad(T_j⁻¹)` and
//! `J_i = −J_j`, with `J_r⁻¹(e) ≈ I + ½ad(e) + ad(e)²/12`.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{RigidTransform, Vector6};

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEdge {
    pub i: usize,
    pub j: usize,
    /// Measured pose of node `j` in the frame of node `i`.
    pub measurement: RigidTransform,
    pub information: Matrix6<f64>,
}

impl PoseEdge {
    pub fn new(i: usize, j: usize, measurement: RigidTransform) -> Self {
        Self { i, j, measurement, information: Matrix6::identity() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph {
    nodes: Vec<RigidTransform>,
    edges: Vec<PoseEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGraphParams {
    pub max_iters: usize,
    /// Relative cost decrease below which the optimiser stops.
    pub rel_tol: f64,
    /// Absolute cost below which the graph counts as consistent.
    pub abs_tol: f64,
}

impl Default for PoseGraphParams {
    fn default() -> Self {
        Self { max_iters: 100, rel_tol: 1e-12, abs_tol: 1e-20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraphResult {
    pub graph: PoseGraph,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn hat(v: &nalgebra::Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `ad(ξ)` for the `(ρ, φ)` ordering.
fn ad(xi: &Vector6) -> Matrix6<f64> {
    let rho = xi.fixed_rows::<3>(0).into_owned();
    let phi = xi.fixed_rows::<3>(3).into_owned();
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&phi));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&hat(&rho));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&hat(&phi));
    m
}

impl PoseGraph {
    /// Checks edge indices and that information matrices are symmetric
    /// positive semidefinite.
    pub fn new(nodes: Vec<RigidTransform>, edges: Vec<PoseEdge>) -> Result<Self> {
        for (k, e) in edges.iter().enumerate() {
            if e.i >= nodes.len() || e.j >= nodes.len() || e.i == e.j {
                return Err(invalid(format!("edge {k} ({}, {}) is out of range", e.i, e.j)));
            }
            let info = &e.information;
            if (info - info.transpose()).amax() > 1e-9 * info.amax().max(1.0) {
                return Err(invalid(format!("edge {k} information is not symmetric")));
            }
            if SymmetricEigen::new(*info).eigenvalues.min() < -1e-9 * info.amax().max(1.0) {
                return Err(invalid(format!("edge {k} information is not positive semidefinite")));
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[RigidTransform] {
        &self.nodes
    }

    pub fn edges(&self) -> &[PoseEdge] {
        &self.edges
    }

    pub fn edge_residual(&self, k: usize) -> Vector6 {
        let e = &self.edges[k];
        e.measurement
            .inverse()
            .compose(&self.nodes[e.i].inverse())
            .compose(&self.nodes[e.j])
            .log()
    }

    /// `Σ eᵀ Λ e` over all edges.
    pub fn cost(&self) -> f64 {
        (0..self.edges.len())
            .map(|k| {
                let r = self.edge_residual(k);
                (r.transpose() * self.edges[k].information * r)[0]
            })
            .sum()
    }

    fn check_connected(&self, root: usize) -> Result<()> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(node) => Err(Error::Disconnected { node }),
            None => Ok(()),
        }
    }

    /// Graph of `poses` linked by their exact relative poses, consecutive
    /// nodes only.
    pub fn chain(poses: Vec<RigidTransform>) -> Self {
        let edges = (1..poses.len())
            .map(|j| PoseEdge::new(j - 1, j, poses[j - 1].inverse().compose(&poses[j])))
            .collect();
        Self { nodes: poses, edges }
    }

    pub fn add_edge(&mut self, edge: PoseEdge) -> Result<()> {
        let mut edges = std::mem::take(&mut self.edges);
        edges.push(edge);
        *self = Self::new(std::mem::take(&mut self.nodes), edges)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            nodes: self.nodes.iter().map(|n| NodeFile { quaternion: n.quaternion(), translation: vec3(n) }).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeFile {
                    i: e.i,
                    j: e.j,
                    quaternion: e.measurement.quaternion(),
                    translation: vec3(&e.measurement),
                    information: Some(std::array::from_fn(|r| std::array::from_fn(|c| e.information[(r, c)]))),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        let nodes = file
            .nodes
            .iter()
            .map(|n| RigidTransform::from_quaternion(n.quaternion, n.translation))
            .collect::<Result<Vec<_>>>()?;
        let edges = file
            .edges
            .iter()
            .map(|e| {
                Ok(PoseEdge {
                    i: e.i,
                    j: e.j,
                    measurement: RigidTransform::from_quaternion(e.quaternion, e.translation)?,
                    information: e
                        .information
                        .map_or_else(Matrix6::identity, |m| Matrix6::from_fn(|r, c| m[r][c])),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes, edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn vec3(t: &RigidTransform) -> [f64; 3] {
    let v = t.translation();
    [v.x, v.y, v.z]
}

#[derive(Serialize, Deserialize)]
struct NodeFile {
    /// `[w, x, y, z]`
    quaternion: [f64; 4],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct EdgeFile {
    i: usize,
    j: usize,
    quaternion: [f64; 4],
    translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    information: Option<[[f64; 6]; 6]>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<NodeFile>,
    edges: Vec<EdgeFile>,
}

/// Damped Gauss-Newton over all node poses except `fixed_node`.
pub fn pose_graph_optimize(graph: &PoseGraph, fixed_node: usize) -> Result<PoseGraphResult> {
    pose_graph_optimize_with(graph, fixed_node, &PoseGraphParams::default())
}

pub fn pose_graph_optimize_with(graph: &PoseGraph, fixed_node: usize, params: &PoseGraphParams) -> Result<PoseGraphResult> {
    let n = graph.nodes.len();
    if fixed_node >= n {
        return Err(invalid(format!("fixed node {fixed_node} out of range for {n} nodes")));
    }
    graph.check_connected(fixed_node)?;
    // variable slot of each node; the fixed node has none
    let slot = |k: usize| -> Option<usize> {
        match k.cmp(&fixed_node) {
            std::cmp::Ordering::Less => Some(k),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(k - 1),
        }
    };
    let dim = 6 * (n - 1);
    let mut g = graph.clone();
    let initial_cost = g.cost();
    let mut cost = initial_cost;
    let mut lambda = 1e-6;
    let mut iterations = 0;
    let mut converged = cost <= params.abs_tol;
    while !converged && iterations < params.max_iters && dim > 0 {
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        for (k, e) in g.edges.iter().enumerate() {
            let r = g.edge_residual(k);
            let a = ad(&r);
            let jr_inv = Matrix6::identity() + a * 0.5 + a * a / 12.0;
            let jj = jr_inv * g.nodes[e.j].inverse().adjoint();
            let ji = -jj;
            let blocks = [(slot(e.i), ji), (slot(e.j), jj)];
            for (sa, ja) in &blocks {
                let Some(sa) = sa else { continue };
                let jt_l = ja.transpose() * e.information;
                let rhs = jt_l * r;
                for q in 0..6 {
                    b[6 * sa + q] += rhs[q];
                }
                for (sb, jb) in &blocks {
                    let Some(sb) = sb else { continue };
                    let blk = jt_l * jb;
                    let mut view = h.view_mut((6 * sa, 6 * sb), (6, 6));
                    view += blk;
                }
            }
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = h.clone();
            for i in 0..dim {
                a[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(ch) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = -ch.solve(&b);
            let mut trial = g.clone();
            for k in 0..n {
                if let Some(s) = slot(k) {
                    let d = Vector6::from_fn(|q, _| delta[6 * s + q]);
                    trial.nodes[k] = RigidTransform::exp(&d).compose(&g.nodes[k]).renormalized();
                }
            }
            let c = trial.cost();
            if !c.is_finite() {
                return Err(Error::Numerical("pose graph cost became non-finite".into()));
            }
            if c <= cost {
                let decrease = cost - c;
                g = trial;
                cost = c;
                lambda = (lambda / 5.0).max(1e-12);
                accepted = true;
                if cost <= params.abs_tol || decrease <= params.rel_tol * cost {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        iterations += 1;
        if !accepted {
            // no further decrease is reachable at working precision
            converged = true;
        }
    }
    if dim == 0 {
        converged = true;
    }
    Ok(PoseGraphResult { graph: g, initial_cost, final_cost: cost, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn noisy(r: &mut impl Rng, rot_sigma: f64, trans_sigma: f64) -> RigidTransform {
        let xi = Vector6::from_fn(|k, _| r.sample::<f64, _>(StandardNormal) * if k < 3 { trans_sigma } else { rot_sigma });
        RigidTransform::exp(&xi)
    }

    fn circle(n: usize) -> Vec<RigidTransform> {
        (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                let rot = RigidTransform::exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, a));
                RigidTransform::from_translation([2.0 * a.cos(), 2.0 * a.sin(), 0.1 * (3.0 * a).sin()]).compose(&rot)
            })
            .collect()
    }

    #[test]
    fn consistent_chain_stays_put() {
        let g = PoseGraph::chain(circle(20));
        let out = pose_graph_optimize(&g, 0).unwrap();
        assert!(out.final_cost < 1e-10);
        for (a, b) in g.nodes().iter().zip(out.graph.nodes()) {
            assert!((a.to_matrix4() - b.to_matrix4()).amax() < 1e-9);
        }
    }

    #[test]
    fn loop_closure_reduces_drift() {
        let truth = circle(50);
        let mut r = rng::stream(4, 0);
        let mut odo = vec![truth[0]];
        let mut edges = Vec::new();
        for j in 1..50 {
            let z = truth[j - 1].inverse().compose(&truth[j]).compose(&noisy(&mut r, 0.5f64.to_radians(), 0.01));
            edges.push(PoseEdge::new(j - 1, j, z));
            odo.push(odo[j - 1].compose(&z));
        }
        edges.push(PoseEdge::new(49, 0, truth[49].inverse().compose(&truth[0])));
        let g = PoseGraph::new(odo.clone(), edges).unwrap();
        let before = (odo[49].translation() - truth[49].translation()).norm();
        let out = pose_graph_optimize(&g, 0).unwrap();
        let after = (out.graph.nodes()[49].translation() - truth[49].translation()).norm();
        assert!(after * 10.0 <= before, "{before} -> {after}");
        assert!(out.final_cost <= out.initial_cost);
    }

    #[test]
    fn gauge_invariance() {
        let truth = circle(12);
        let mut r = rng::stream(5, 0);
        let mut g = PoseGraph::chain(truth.iter().map(|t| t.compose(&noisy(&mut r, 0.02, 0.05))).collect());
        g.add_edge(PoseEdge::new(11, 0, truth[11].inverse().compose(&truth[0]))).unwrap();
        let shift = noisy(&mut r, 0.7, 2.0);
        let moved = PoseGraph::new(g.nodes().iter().map(|n| shift.compose(n)).collect(), g.edges().to_vec()).unwrap();
        let a = pose_graph_optimize(&g, 0).unwrap().graph;
        let b = pose_graph_optimize(&moved, 0).unwrap().graph;
        for k in 1..12 {
            let ra = a.nodes()[0].inverse().compose(&a.nodes()[k]);
            let rb = b.nodes()[0].inverse().compose(&b.nodes()[k]);
            assert!((ra.to_matrix4() - rb.to_matrix4()).amax() < 1e-6);
        }
    }

    #[test]
    fn disconnected_and_bad_edges() {
        let nodes = circle(4);
        let g = PoseGraph::new(nodes.clone(), vec![PoseEdge::new(0, 1, RigidTransform::identity())]).unwrap();
        assert!(matches!(pose_graph_optimize(&g, 0), Err(Error::Disconnected { node: 2 })));
        assert!(PoseGraph::new(nodes.clone(), vec![PoseEdge::new(0, 7, RigidTransform::identity())]).is_err());
        let mut e = PoseEdge::new(0, 1, RigidTransform::identity());
        e.information[(0, 0)] = -1.0;
        assert!(PoseGraph::new(nodes, vec![e]).is_err());
    }

    #[test]
    fn json_round_trip_and_default_information() {
        let mut g = PoseGraph::chain(circle(5));
        g.edges[1].information = Matrix6::identity() * 4.0;
        let back = PoseGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back.edges()[1].information, g.edges()[1].information);
        for (a, b) in g.nodes().iter().zip(back.nodes()) {
            assert!((a.to_matrix4() - b.to_matrix4()).amax() < 1e-12);
        }
        let text = r#"{"nodes":[{"quaternion":[1,0,0,0],"translation":[0,0,0]},{"quaternion":[1,0,0,0],"translation":[1,0,0]}],
            "edges":[{"i":0,"j":1,"quaternion":[1,0,0,0],"translation":[1,0,0]}]}"#;
        let g = PoseGraph::from_json(text).unwrap();
        assert_eq!(g.edges()[0].information, Matrix6::identity());
        assert!(g.cost() < 1e-24);
    }
}
