//! Per-frame input graph: node, edge, layered-edge and 2-ring edge features.

mod body;

pub use body::{AnalyticBody, BodyIndex, BodyProxy, EXHAUSTIVE_LIMIT};

use gdsr_nnet::Tensor;

use crate::error::{CoreError, Result};
use crate::mesh::vec3::{self, dist, norm, sub, Vec3};
use crate::mesh::{vertex_normals, GarmentMesh, Topology};
use crate::spatial::PointGrid;

pub const NODE_WIDTH: usize = 23;
pub const EDGE_WIDTH: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sigma_b: f64,
    pub sigma_l: f64,
    pub dt: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sigma_b: 0.01,
            sigma_l: 0.008,
            dt: 1.0,
        }
    }
}

/// Interaction vector: push along the nearest body normal when inside the clearance.
pub fn body_interaction(c: Vec3, body: &BodyIndex<'_>, sigma_b: f64) -> Vec3 {
    body.interaction(c, sigma_b)
}

/// Same as [`body_interaction`] for the previous garment position against the current body.
pub fn history_interaction(c_prev: Vec3, body_t: &BodyIndex<'_>, sigma_b: f64) -> Vec3 {
    body_t.interaction(c_prev, sigma_b)
}

/// Garment positions entering one graph: current and two previous inputs,
/// two previous corrected predictions.
#[derive(Clone, Copy, Debug)]
pub struct FrameInputs<'a> {
    pub c: &'a [Vec3],
    pub c_prev: &'a [Vec3],
    pub c_prev2: &'a [Vec3],
    pub chat_prev: &'a [Vec3],
    pub chat_prev2: &'a [Vec3],
    pub body: &'a BodyProxy,
}

impl FrameInputs<'_> {
    fn check(&self, n: usize) -> Result<()> {
        for (name, arr) in [
            ("C_t", self.c),
            ("C_t-1", self.c_prev),
            ("C_t-2", self.c_prev2),
            ("Chat_t-1", self.chat_prev),
            ("Chat_t-2", self.chat_prev2),
        ] {
            if arr.len() != n {
                return Err(CoreError::TopologyMismatch(format!(
                    "{name} has {} vertices, mesh has {n}",
                    arr.len()
                )));
            }
        }
        if self.body.vertices.is_empty() {
            return Err(CoreError::EmptyBody);
        }
        Ok(())
    }
}

/// `[n, ċ, c̈, p, ‖p‖, p̂, ‖p̂‖, d, ċ̂]` per vertex.
pub fn init_node_features(
    inputs: &FrameInputs<'_>,
    faces: &[[usize; 3]],
    cfg: &FeatureConfig,
) -> Result<Tensor> {
    let n = inputs.c.len();
    inputs.check(n)?;
    let normals = vertex_normals(inputs.c, faces);
    let index = inputs.body.index();
    let inv_dt = 1.0 / cfg.dt;
    let inv_dt2 = inv_dt * inv_dt;
    let mut out = Vec::with_capacity(n * NODE_WIDTH);
    for i in 0..n {
        let (c0, c1, c2) = (inputs.c[i], inputs.c_prev[i], inputs.c_prev2[i]);
        let vel = vec3::scale(sub(c0, c1), inv_dt);
        let acc = [0, 1, 2].map(|k| (c0[k] - 2.0 * c1[k] + c2[k]) * inv_dt2);
        let p = body_interaction(c0, &index, cfg.sigma_b);
        let ph = history_interaction(c1, &index, cfg.sigma_b);
        let d = sub(inputs.chat_prev[i], c1);
        let vh = vec3::scale(sub(inputs.chat_prev[i], inputs.chat_prev2[i]), inv_dt);
        out.extend_from_slice(&normals[i]);
        out.extend_from_slice(&vel);
        out.extend_from_slice(&acc);
        out.extend_from_slice(&p);
        out.push(norm(p));
        out.extend_from_slice(&ph);
        out.push(norm(ph));
        out.extend_from_slice(&d);
        out.extend_from_slice(&vh);
    }
    Ok(Tensor::matrix(n, NODE_WIDTH, out))
}

/// Layout for directed pairs `(i, j)`: `[c_j−c_i, ‖·‖, c'_j−c'_i, ‖·‖, last]`.
pub fn pair_features(
    pairs: &[[usize; 2]],
    c: &[Vec3],
    c_prev: &[Vec3],
    last: impl Fn(usize, usize) -> f64,
) -> Tensor {
    let mut out = Vec::with_capacity(pairs.len() * EDGE_WIDTH);
    for &[i, j] in pairs {
        let d = sub(c[j], c[i]);
        let dp = sub(c_prev[j], c_prev[i]);
        out.extend_from_slice(&d);
        out.push(norm(d));
        out.extend_from_slice(&dp);
        out.push(norm(dp));
        out.push(last(i, j));
    }
    Tensor::matrix(pairs.len(), EDGE_WIDTH, out)
}

/// Edge features for both directions of every mesh edge.
pub fn init_edge_features(
    topology: &Topology,
    c: &[Vec3],
    c_prev: &[Vec3],
    rest: &[Vec3],
) -> (Vec<[usize; 2]>, Tensor) {
    let pairs = topology.directed_edges();
    let feats = pair_features(&pairs, c, c_prev, |i, j| dist(rest[i], rest[j]));
    (pairs, feats)
}

/// Cross-layer vertex pairs closer than `sigma_l`, both directions, sorted.
pub fn detect_layered_pairs(c: &[Vec3], layer_id: &[u8], sigma_l: f64) -> Vec<[usize; 2]> {
    let first = layer_id.first().copied();
    if layer_id.iter().all(|&l| Some(l) == first) {
        return Vec::new();
    }
    let grid = PointGrid::new(c.to_vec(), sigma_l);
    let mut pairs = Vec::new();
    for (i, p) in c.iter().enumerate() {
        for j in grid.within(p, sigma_l, |j| layer_id[j] != layer_id[i]) {
            pairs.push([i, j]);
        }
    }
    pairs
}

pub fn detect_layered_edges(
    c: &[Vec3],
    c_prev: &[Vec3],
    layer_id: &[u8],
    sigma_l: f64,
) -> (Vec<[usize; 2]>, Tensor) {
    let pairs = detect_layered_pairs(c, layer_id, sigma_l);
    let feats = pair_features(&pairs, c, c_prev, |_, _| sigma_l);
    (pairs, feats)
}

/// Static per-garment connectivity reused for every frame.
#[derive(Clone, Debug)]
pub struct GraphTemplate {
    pub faces: Vec<[usize; 3]>,
    pub rest: Vec<Vec3>,
    pub layer_id: Vec<u8>,
    pub edges: Vec<[usize; 2]>,
    pub ring2: Vec<[usize; 2]>,
    pub topology: Topology,
}

impl GraphTemplate {
    pub fn new(mesh: &GarmentMesh) -> Result<Self> {
        let topology = Topology::new(mesh)?;
        Ok(GraphTemplate {
            faces: mesh.faces.clone(),
            rest: mesh.rest_positions.clone(),
            layer_id: mesh.layer_id.clone(),
            edges: topology.directed_edges(),
            ring2: topology.directed_ring2(),
            topology,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.rest.len()
    }

    pub fn build(&self, inputs: &FrameInputs<'_>, cfg: &FeatureConfig) -> Result<GraphState> {
        let nodes = init_node_features(inputs, &self.faces, cfg)?;
        let rest = &self.rest;
        let edge_features =
            pair_features(&self.edges, inputs.c, inputs.c_prev, |i, j| dist(rest[i], rest[j]));
        let ring2_features =
            pair_features(&self.ring2, inputs.c, inputs.c_prev, |i, j| dist(rest[i], rest[j]));
        let (layered, layered_features) =
            detect_layered_edges(inputs.c, inputs.c_prev, &self.layer_id, cfg.sigma_l);
        Ok(GraphState {
            node_features: nodes,
            edge_features,
            layered_edge_features: layered_features,
            ring2_features,
            edges: self.edges.clone(),
            layered_edges: layered,
            ring2_edges: self.ring2.clone(),
        })
    }
}

/// Features and directed `(receiver, sender)` connectivity for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphState {
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub layered_edge_features: Tensor,
    pub ring2_features: Tensor,
    pub edges: Vec<[usize; 2]>,
    pub layered_edges: Vec<[usize; 2]>,
    pub ring2_edges: Vec<[usize; 2]>,
}

impl GraphState {
    pub fn node_count(&self) -> usize {
        self.node_features.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_body() -> BodyProxy {
        BodyProxy::new(vec![[0.0; 3]], vec![[0.0, 0.0, 1.0]], vec![]).unwrap()
    }

    #[test]
    fn interaction_clamps_and_scales() {
        let body = plane_body();
        let idx = body.index();
        assert_eq!(body_interaction([0.0, 0.0, 0.05], &idx, 0.02), [0.0; 3]);
        let p = body_interaction([0.0, 0.0, 0.005], &idx, 0.02);
        assert_eq!(p[0..2], [0.0, 0.0]);
        assert!((p[2] - 0.015).abs() < 1e-15);
    }

    #[test]
    fn approaching_body_increases_history_interaction() {
        // garment at rest 0.015 above the body, body advances 0.01 towards it
        let body_prev = plane_body();
        let body_t = body_prev.translated([0.0, 0.0, 0.01]);
        let c = [0.0, 0.0, 0.015];
        let before = norm(body_interaction(c, &body_prev.index(), 0.02));
        let after = norm(history_interaction(c, &body_t.index(), 0.02));
        assert!(after > before);
    }

    #[test]
    fn edge_length_field() {
        let topo = Topology::from_faces(3, &[[0, 1, 2]]).unwrap();
        let c = [[0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [0.0, 1.0, 0.0]];
        let (pairs, f) = init_edge_features(&topo, &c, &c, &c);
        let k = pairs.iter().position(|p| *p == [0, 1]).unwrap();
        assert_eq!(f.row(k)[3], 5.0);
        assert_eq!(f.row(k)[8], 5.0);
    }

    #[test]
    fn single_layer_has_no_layered_edges() {
        let c = [[0.0; 3], [0.001, 0.0, 0.0]];
        assert!(detect_layered_pairs(&c, &[0, 0], 0.01).is_empty());
        assert_eq!(detect_layered_pairs(&c, &[0, 1], 0.01), vec![[0, 1], [1, 0]]);
    }
}
