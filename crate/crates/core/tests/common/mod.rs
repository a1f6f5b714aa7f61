#![allow(dead_code)]

use gdsr_core::datagen::{coarse_sheet, SceneConfig};
use gdsr_core::mesh::vec3::Vec3;
use gdsr_core::mesh::GarmentMesh;
use gdsr_core::model::ModelConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_scene(n: usize) -> SceneConfig {
    SceneConfig {
        grid_n: n,
        spacing: 0.02,
        frames: 6,
        ..SceneConfig::default()
    }
}

/// Flat `n × n` vertex grid with spacing `h`, two triangles per cell.
pub fn grid(n: usize, h: f64) -> GarmentMesh {
    coarse_sheet(&SceneConfig {
        grid_n: n,
        spacing: h,
        ..SceneConfig::default()
    })
    .unwrap()
}

pub fn jitter(p: &[Vec3], amount: f64, r: &mut impl Rng) -> Vec<Vec3> {
    p.iter()
        .map(|q| {
            [
                q[0] + amount * (r.random::<f64>() - 0.5),
                q[1] + amount * (r.random::<f64>() - 0.5),
                q[2] + amount * (r.random::<f64>() - 0.5),
            ]
        })
        .collect()
}

pub fn max_dist(a: &[Vec3], b: &[Vec3]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (0..3).map(|k| (p[k] - q[k]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Two stacked copies of a 6 × 6 grid `gap` apart, on separate layers.
pub fn two_sheets(gap: f64) -> (GarmentMesh, Vec<Vec3>) {
    let a = grid(6, 0.01);
    let n = a.vertex_count();
    let mut vertices = a.vertices.clone();
    vertices.extend(a.vertices.iter().map(|p| [p[0], p[1], p[2] + gap]));
    let mut faces = a.faces.clone();
    faces.extend(a.faces.iter().map(|f| f.map(|i| i + n)));
    let mut uv = a.uv.clone();
    uv.extend(a.uv.iter().map(|t| [t[0] + 1.0, t[1]]));
    let mut mesh = GarmentMesh::new(vertices.clone(), faces, uv).unwrap();
    mesh.layer_id = (0..2 * n).map(|i| u8::from(i >= n)).collect();
    (mesh, vertices)
}

/// A tiny network with every block present.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        latent: 8,
        mlp_hidden: 8,
        steps: 2,
        hierarchy: true,
        sr_width: 20,
        sr_split: 8,
        decoder_hidden: 12,
        corrector_hidden: 10,
        hyper_hidden: 16,
        field_hidden: 4,
        field_layers: 3,
        hyper_init_scale: 1.0,
        ..ModelConfig::default()
    }
}
