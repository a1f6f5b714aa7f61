//! Post-synthesis collision handling: detection on the corrected coarse mesh,
//! displacement applied to the fine vertices bound to each detected coarse vertex.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::featgraph::BodyIndex;
use crate::mesh::vec3::{self, dot, sub, Vec3};
use crate::mesh::{nearest_uv_vertices, vertex_normals, GarmentMesh};
use crate::spatial::PointGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionConfig {
    pub sigma_b: f64,
    pub sigma_l: f64,
    pub gamma: f64,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig {
            sigma_b: 0.01,
            sigma_l: 0.008,
            gamma: 0.024,
        }
    }
}

impl CollisionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.sigma_b) && ok(self.sigma_l) && ok(self.gamma)) {
            return Err(CoreError::Config("collision constants must be positive".into()));
        }
        if self.gamma < self.sigma_l {
            return Err(CoreError::Config("gamma must be at least sigma_l".into()));
        }
        Ok(())
    }
}

/// A detected coarse collision: the half-space every bound fine vertex is pushed out of.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub anchor: Vec3,
    pub normal: Vec3,
    pub clearance: f64,
}

impl Detection {
    /// `max[σ − (g − anchor)·n, 0]`.
    pub fn depth(&self, g: Vec3) -> f64 {
        (self.clearance - dot(sub(g, self.anchor), self.normal)).max(0.0)
    }
}

/// Per-coarse-vertex body detections against the nearest body vertex.
pub fn detect_body(chat: &[Vec3], body: &BodyIndex<'_>, sigma_b: f64) -> Vec<Option<Detection>> {
    let proxy = body.body();
    chat.iter()
        .map(|&c| {
            let b = body.nearest(c);
            let det = Detection {
                anchor: proxy.vertices[b],
                normal: proxy.normals[b],
                clearance: sigma_b,
            };
            (sigma_b - dot(sub(c, det.anchor), det.normal) > 0.0).then_some(det)
        })
        .collect()
}

/// Per-coarse-vertex detections of exterior layers against the nearest interior vertex.
pub fn detect_layers(
    chat: &[Vec3],
    faces: &[[usize; 3]],
    layer_id: &[u8],
    cfg: &CollisionConfig,
) -> Vec<Option<Detection>> {
    let n = chat.len();
    let lowest = layer_id.iter().copied().min();
    if layer_id.iter().all(|&l| Some(l) == lowest) {
        return vec![None; n];
    }
    let normals = vertex_normals(chat, faces);
    let grid = PointGrid::new(chat.to_vec(), cfg.gamma);
    (0..n)
        .map(|e| {
            let j = grid.nearest(&chat[e], |i| layer_id[i] < layer_id[e])?;
            let det = Detection {
                anchor: chat[j],
                normal: normals[j],
                clearance: cfg.sigma_l,
            };
            let close = vec3::dist(chat[e], chat[j]) < cfg.gamma;
            (close && cfg.sigma_l - dot(sub(chat[e], chat[j]), det.normal) > 0.0).then_some(det)
        })
        .collect()
}

/// Moves each fine vertex out of the half-space of its coarse vertex's detection.
pub fn apply_detections(fine: &[Vec3], nearest: &[usize], detections: &[Option<Detection>]) -> Vec<Vec3> {
    fine.iter()
        .zip(nearest)
        .map(|(&g, &i)| match detections[i] {
            Some(d) => {
                let depth = d.depth(g);
                if depth > 0.0 {
                    vec3::add(g, vec3::scale(d.normal, depth))
                } else {
                    g
                }
            }
            None => g,
        })
        .collect()
}

/// Static data for resolving collisions on one garment.
#[derive(Clone, Debug)]
pub struct CollisionResolver {
    pub config: CollisionConfig,
    /// Nearest coarse vertex in UV for every fine vertex.
    pub nearest: Vec<usize>,
    faces: Vec<[usize; 3]>,
    layer_id: Vec<u8>,
}

impl CollisionResolver {
    pub fn new(coarse: &GarmentMesh, fine: &GarmentMesh, config: CollisionConfig) -> Result<Self> {
        config.validate()?;
        Ok(CollisionResolver {
            config,
            nearest: nearest_uv_vertices(coarse, fine)?,
            faces: coarse.faces.clone(),
            layer_id: coarse.layer_id.clone(),
        })
    }

    fn check(&self, fine: &[Vec3], chat: &[Vec3]) -> Result<()> {
        if fine.len() != self.nearest.len() {
            return Err(CoreError::ShapeMismatch {
                what: "fine vertices",
                expected: self.nearest.len(),
                got: fine.len(),
            });
        }
        if chat.len() != self.layer_id.len() {
            return Err(CoreError::ShapeMismatch {
                what: "coarse vertices",
                expected: self.layer_id.len(),
                got: chat.len(),
            });
        }
        Ok(())
    }

    pub fn resolve_body(&self, fine: &[Vec3], chat: &[Vec3], body: &BodyIndex<'_>) -> Result<Vec<Vec3>> {
        self.check(fine, chat)?;
        let det = detect_body(chat, body, self.config.sigma_b);
        Ok(apply_detections(fine, &self.nearest, &det))
    }

    pub fn resolve_layers(&self, fine: &[Vec3], chat: &[Vec3]) -> Result<Vec<Vec3>> {
        self.check(fine, chat)?;
        let det = detect_layers(chat, &self.faces, &self.layer_id, &self.config);
        Ok(apply_detections(fine, &self.nearest, &det))
    }

    /// Body first, then layers.
    pub fn resolve(&self, fine: &[Vec3], chat: &[Vec3], body: &BodyIndex<'_>) -> Result<Vec<Vec3>> {
        let g = self.resolve_body(fine, chat, body)?;
        self.resolve_layers(&g, chat)
    }
}
