use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Frame, SceneConfig};
use crate::error::{CoreError, Result};
use crate::featgraph::{AnalyticBody, BodyProxy, FeatureConfig};
use crate::mesh::{load_mesh, GarmentMesh};

pub const SCENE_FILE: &str = "scene.json";
pub const REST_COARSE: &str = "rest_coarse.obj";
pub const REST_FINE: &str = "rest_fine.obj";

/// Contents of `scene.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SceneFile {
    config: SceneConfig,
    frames: usize,
    dt: f64,
    sigma_b: f64,
    sigma_l: f64,
}

pub fn frame_dir(root: &Path, f: usize) -> PathBuf {
    root.join(format!("frame_{f:05}"))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CoreError::io(path, e))
}

pub fn save_dataset(data: &Dataset, root: &Path) -> Result<()> {
    mkdir(root)?;
    let feat = FeatureConfig::default();
    let scene = SceneFile {
        config: data.config.clone(),
        frames: data.frames.len(),
        dt: feat.dt,
        sigma_b: feat.sigma_b,
        sigma_l: feat.sigma_l,
    };
    let path = root.join(SCENE_FILE);
    let text = serde_json::to_string_pretty(&scene)?;
    std::fs::write(&path, text).map_err(|e| CoreError::io(&path, e))?;
    data.coarse.save(&root.join(REST_COARSE))?;
    data.fine.save(&root.join(REST_FINE))?;
    for (f, frame) in data.frames.iter().enumerate() {
        let dir = frame_dir(root, f);
        mkdir(&dir)?;
        data.coarse.save_positions(&dir.join("coarse_in.obj"), &frame.coarse_in)?;
        data.coarse.save_positions(&dir.join("coarse_gt.obj"), &frame.coarse_gt)?;
        data.fine.save_positions(&dir.join("fine_gt.obj"), &frame.fine_gt)?;
        frame.body.save(&dir.join("body.obj"))?;
    }
    Ok(())
}

pub fn load_scene(root: &Path) -> Result<(SceneConfig, usize)> {
    let path = root.join(SCENE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let scene: SceneFile = serde_json::from_str(&text)?;
    Ok((scene.config, scene.frames))
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let (config, count) = load_scene(root)?;
    let coarse: GarmentMesh = load_mesh(&root.join(REST_COARSE))?;
    let fine: GarmentMesh = load_mesh(&root.join(REST_FINE))?;
    let mut frames = Vec::with_capacity(count);
    for f in 0..count {
        let dir = frame_dir(root, f);
        let mut body = BodyProxy::load(&dir.join("body.obj"))?;
        if let Some(center) = body_center(&body) {
            body.analytic = Some(AnalyticBody::Sphere {
                center,
                radius: config.body.radius,
            });
        }
        frames.push(Frame {
            coarse_in: coarse.load_positions(&dir.join("coarse_in.obj"))?,
            coarse_gt: coarse.load_positions(&dir.join("coarse_gt.obj"))?,
            fine_gt: fine.load_positions(&dir.join("fine_gt.obj"))?,
            body,
        });
    }
    Dataset::assemble(config, coarse, fine, frames)
}

/// Sphere center recovered from a vertex and its outward normal.
fn body_center(body: &BodyProxy) -> Option<[f64; 3]> {
    let v = body.vertices.first()?;
    let n = body.normals.first()?;
    let r = {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &body.vertices {
            lo = lo.min(p[2]);
            hi = hi.max(p[2]);
        }
        0.5 * (hi - lo)
    };
    Some([v[0] - r * n[0], v[1] - r * n[1], v[2] - r * n[2]])
}
