//! Synthetic draped-sheet sequences with paired coarse and fine meshes.
//!
//! A square sheet rests on a moving sphere. The ground-truth coarse surface is
//! a kinematic drape that preserves radial arc length, so the rim gathers and
//! compresses circumferentially. The fine ground truth is the barycentric
//! up-sampling of that surface plus a per-face bump along the interpolated
//! normal whose height grows with local compression. The network input is a
//! smoothed, noisy copy of the coarse ground truth.

mod io;

pub use io::{frame_dir, load_dataset, load_scene, save_dataset, REST_COARSE, REST_FINE, SCENE_FILE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::featgraph::{AnalyticBody, BodyProxy};
use crate::mesh::vec3::{self, add, scale, Vec3};
use crate::mesh::{
    barycentric_sample, coincident_vertices, subdivide, vertex_normals, CorrespondenceMap, GarmentMesh,
    Topology,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodySpec {
    pub radius: f64,
    /// Gap between the sphere top and the sheet apex.
    pub gap: f64,
    /// Peak displacement of the sphere center along x, y, z.
    pub amplitude: [f64; 3],
    /// Periods (frames) of the three displacement components.
    pub period: [f64; 3],
    pub rings: usize,
    pub segments: usize,
}

impl Default for BodySpec {
    fn default() -> Self {
        BodySpec {
            radius: 0.12,
            gap: 0.004,
            amplitude: [0.05, 0.04, 0.015],
            period: [60.0, 75.0, 40.0],
            rings: 24,
            segments: 48,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrapeSpec {
    /// Asymptotic slope angle of the drape (radians) and its temporal swing.
    pub slope: f64,
    pub slope_swing: f64,
    /// Arc length over which the slope builds up, and its temporal swing.
    pub width: f64,
    pub width_swing: f64,
    pub period: f64,
    /// Lateral lag of the rim against the body velocity.
    pub lag_gain: f64,
    pub lag_frames: f64,
}

impl Default for DrapeSpec {
    fn default() -> Self {
        DrapeSpec {
            slope: 1.1,
            slope_swing: 0.15,
            width: 0.13,
            width_swing: 0.02,
            period: 50.0,
            lag_gain: 2.0,
            lag_frames: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WrinkleSpec {
    /// Bump height on uncompressed cloth (meters).
    pub amplitude: f64,
    /// Relative height increase at full circumferential compression.
    pub gain: f64,
}

impl Default for WrinkleSpec {
    fn default() -> Self {
        WrinkleSpec {
            amplitude: 0.0008,
            gain: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Coarse grid vertices per side.
    pub grid_n: usize,
    /// Coarse grid spacing in meters and UV units.
    pub spacing: f64,
    pub subdivisions: usize,
    pub frames: usize,
    pub seed: u64,
    pub layers: usize,
    pub body: BodySpec,
    pub drape: DrapeSpec,
    pub wrinkle: WrinkleSpec,
    /// Input noise as a fraction of the coarse spacing.
    pub noise: f64,
    pub smoothing_passes: usize,
    pub smoothing_lambda: f64,
    /// Normal offset of the second layer.
    pub layer_offset: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            grid_n: 33,
            spacing: 0.02,
            subdivisions: 3,
            frames: 120,
            seed: 0,
            layers: 1,
            body: BodySpec::default(),
            drape: DrapeSpec::default(),
            wrinkle: WrinkleSpec::default(),
            noise: 0.02,
            smoothing_passes: 2,
            smoothing_lambda: 0.5,
            layer_offset: 1.5 * 0.008,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.grid_n < 2 {
            return bad("grid_n must be at least 2");
        }
        if self.subdivisions < 2 {
            return bad("subdivisions must be at least 2");
        }
        if self.frames < 3 {
            return bad("frames must be at least 3");
        }
        if !(1..=2).contains(&self.layers) {
            return bad("layers must be 1 or 2");
        }
        let positive = [
            self.spacing,
            self.body.radius,
            self.drape.width,
            self.drape.period,
            self.body.period[0],
            self.body.period[1],
            self.body.period[2],
        ];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return bad("lengths and periods must be positive");
        }
        if self.body.rings < 2 || self.body.segments < 3 {
            return bad("body tessellation too coarse");
        }
        let nonneg = [
            self.noise,
            self.wrinkle.amplitude,
            self.wrinkle.gain,
            self.smoothing_lambda,
            self.body.gap,
            self.layer_offset,
            self.drape.lag_gain,
            self.drape.lag_frames,
        ];
        if nonneg.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("amplitudes, gains and offsets must be non-negative");
        }
        if self.drape.width_swing >= self.drape.width {
            return bad("width_swing must be below width");
        }
        Ok(())
    }

    pub fn coarse_face_count(&self) -> usize {
        2 * (self.grid_n - 1) * (self.grid_n - 1) * self.layers
    }

    pub fn fine_face_count(&self) -> usize {
        self.coarse_face_count() * self.subdivisions * self.subdivisions
    }
}

/// One frame of a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Network input (degraded coarse simulation).
    pub coarse_in: Vec<Vec3>,
    /// Coarse ground truth, the down-sampled fine ground truth.
    pub coarse_gt: Vec<Vec3>,
    pub fine_gt: Vec<Vec3>,
    pub body: BodyProxy,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: SceneConfig,
    pub coarse: GarmentMesh,
    pub fine: GarmentMesh,
    /// Fine-to-coarse barycentric bindings.
    pub correspondence: CorrespondenceMap,
    /// Fine vertex coinciding with each coarse vertex.
    pub coincident: Vec<usize>,
    pub frames: Vec<Frame>,
}

impl Dataset {
    /// Binds a loaded or generated mesh pair.
    pub fn assemble(config: SceneConfig, coarse: GarmentMesh, fine: GarmentMesh, frames: Vec<Frame>) -> Result<Self> {
        let correspondence = crate::mesh::build_correspondence(&coarse, &fine)?;
        let coincident = coincident_vertices(&coarse, &fine)?;
        Ok(Dataset {
            config,
            coarse,
            fine,
            correspondence,
            coincident,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Coarse grid (one or two layers); layer 1 sits to the right of layer 0 in UV.
pub fn coarse_sheet(cfg: &SceneConfig) -> Result<GarmentMesh> {
    let n = cfg.grid_n;
    let h = cfg.spacing;
    let half = 0.5 * h * (n - 1) as f64;
    let width = h * (n - 1) as f64;
    let mut vertices = Vec::new();
    let mut uv = Vec::new();
    let mut faces = Vec::new();
    let mut layer_id = Vec::new();
    for layer in 0..cfg.layers {
        let base = vertices.len();
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (i as f64 * h, j as f64 * h);
                vertices.push([x - half, y - half, 0.0]);
                uv.push([x + layer as f64 * (width + 4.0 * h), y]);
                layer_id.push(layer as u8);
            }
        }
        let id = |i: usize, j: usize| base + j * n + i;
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                faces.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                faces.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }
    let mesh = GarmentMesh {
        rest_positions: vertices.clone(),
        vertices,
        faces,
        uv,
        layer_id,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Radial profile `(ρ(s), z(s))` of a drape whose slope angle rises as
/// `slope·(1 − exp(−s²/2w²))`; tabulated by the midpoint rule.
struct Profile {
    ds: f64,
    rho: Vec<f64>,
    z: Vec<f64>,
}

impl Profile {
    fn new(slope: f64, width: f64, s_max: f64) -> Self {
        let steps = 4096;
        let ds = s_max / steps as f64;
        let mut rho = Vec::with_capacity(steps + 1);
        let mut z = Vec::with_capacity(steps + 1);
        let (mut r, mut h) = (0.0, 0.0);
        rho.push(r);
        z.push(h);
        for k in 0..steps {
            let s = (k as f64 + 0.5) * ds;
            let phi = slope * (1.0 - (-s * s / (2.0 * width * width)).exp());
            r += phi.cos() * ds;
            h -= phi.sin() * ds;
            rho.push(r);
            z.push(h);
        }
        Profile { ds, rho, z }
    }

    fn eval(&self, s: f64) -> (f64, f64) {
        let x = s / self.ds;
        let k = (x.floor() as usize).min(self.rho.len() - 2);
        let t = x - k as f64;
        (
            self.rho[k] + t * (self.rho[k + 1] - self.rho[k]),
            self.z[k] + t * (self.z[k + 1] - self.z[k]),
        )
    }
}

/// Random phases and the closed-form motion of one sequence.
struct Motion {
    body_phase: [f64; 3],
    drape_phase: [f64; 2],
}

impl Motion {
    fn new<R: Rng>(rng: &mut R) -> Self {
        let mut p = || rng.random::<f64>() * std::f64::consts::TAU;
        Motion {
            body_phase: [p(), p(), p()],
            drape_phase: [p(), p()],
        }
    }

    fn center(&self, spec: &BodySpec, t: f64) -> Vec3 {
        let mut c = [0.0, 0.0, -spec.radius - spec.gap];
        for k in 0..3 {
            c[k] += spec.amplitude[k] * (std::f64::consts::TAU * t / spec.period[k] + self.body_phase[k]).sin();
        }
        c
    }

    fn velocity(&self, spec: &BodySpec, t: f64) -> Vec3 {
        let mut v = [0.0; 3];
        for k in 0..3 {
            let w = std::f64::consts::TAU / spec.period[k];
            v[k] = spec.amplitude[k] * w * (w * t + self.body_phase[k]).cos();
        }
        v
    }

    fn drape(&self, spec: &DrapeSpec, t: f64) -> (f64, f64) {
        let w = std::f64::consts::TAU / spec.period;
        (
            spec.slope + spec.slope_swing * (w * t + self.drape_phase[0]).sin(),
            spec.width + spec.width_swing * (0.7 * w * t + self.drape_phase[1]).sin(),
        )
    }
}

/// Ground-truth coarse positions of layer 0 and per-vertex circumferential compression.
fn drape_frame(cfg: &SceneConfig, motion: &Motion, rest: &[Vec3], t: f64) -> (Vec<Vec3>, Vec<f64>) {
    let center = motion.center(&cfg.body, t);
    let apex = add(center, [0.0, 0.0, cfg.body.radius + cfg.body.gap]);
    let lag = motion.velocity(&cfg.body, t - cfg.drape.lag_frames);
    let (slope, width) = motion.drape(&cfg.drape, t);
    let s_max = rest.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max) + cfg.spacing;
    let profile = Profile::new(slope, width, s_max);
    let mut pos = Vec::with_capacity(rest.len());
    let mut compression = Vec::with_capacity(rest.len());
    for p in rest {
        let s = p[0].hypot(p[1]);
        let (rho, z) = profile.eval(s);
        let dir = if s > 0.0 { [p[0] / s, p[1] / s] } else { [0.0, 0.0] };
        let reach = 1.0 - (-s * s / (2.0 * width * width)).exp();
        let swing = -cfg.drape.lag_gain * reach;
        pos.push([
            apex[0] + rho * dir[0] + swing * lag[0],
            apex[1] + rho * dir[1] + swing * lag[1],
            apex[2] + z + swing * lag[2],
        ]);
        compression.push(if s > 0.0 { (1.0 - rho / s).max(0.0) } else { 0.0 });
    }
    (pos, compression)
}

/// Bump profile on a face: `27·w₀w₁w₂ + 1.5·(w₀w₁ + w₁w₂ + w₂w₀)`, zero at the corners,
/// symmetric in the barycentric weights and therefore continuous across faces.
pub fn bump(u: f64, v: f64) -> f64 {
    let w = 1.0 - u - v;
    27.0 * u * v * w + 1.5 * (u * v + v * w + w * u)
}

/// Fine positions: barycentric up-sampling plus a compression-scaled bump along
/// the interpolated coarse normal.
pub fn synthesize_fine(
    coarse: &[Vec3],
    faces: &[[usize; 3]],
    corr: &CorrespondenceMap,
    compression: &[f64],
    spec: &WrinkleSpec,
) -> Vec<Vec3> {
    let normals = vertex_normals(coarse, faces);
    corr.entries
        .iter()
        .map(|b| {
            let tri = faces[b.face];
            let base = barycentric_sample(coarse, tri, b.u, b.v);
            let h = spec.amplitude * bump(b.u, b.v);
            if h == 0.0 {
                return base;
            }
            let n = vec3::normalize(barycentric_sample(&normals, tri, b.u, b.v)).unwrap_or([0.0, 0.0, 1.0]);
            let comp = barycentric_sample(
                &compression.iter().map(|&c| [c, 0.0, 0.0]).collect::<Vec<_>>(),
                tri,
                b.u,
                b.v,
            )[0];
            add(base, scale(n, h * (1.0 + spec.gain * comp)))
        })
        .collect()
}

/// Uniform-Laplacian smoothing with boundary vertices held fixed.
pub fn smooth(positions: &[Vec3], topology: &Topology, boundary: &[bool], passes: usize, lambda: f64) -> Vec<Vec3> {
    let mut p = positions.to_vec();
    for _ in 0..passes {
        let lap = crate::mesh::uniform_laplacian(topology, &p);
        for (i, q) in p.iter_mut().enumerate() {
            if !boundary[i] {
                *q = add(*q, scale(lap[i], lambda));
            }
        }
    }
    p
}

/// Coarse ground truth as the coincident fine vertices.
pub fn downsample_fine(fine: &[Vec3], coincident: &[usize]) -> Vec<Vec3> {
    coincident.iter().map(|&k| fine[k]).collect()
}

pub fn gen_sequence(cfg: &SceneConfig) -> Result<Dataset> {
    cfg.validate()?;
    let coarse = coarse_sheet(cfg)?;
    let sub = subdivide(&coarse, cfg.subdivisions)?;
    let fine = sub.mesh;
    let corr = sub.parent;
    let coincident = coincident_vertices(&coarse, &fine)?;
    let topology = Topology::from_faces(coarse.vertex_count(), &coarse.faces)?;
    let boundary = topology.boundary_vertices();
    let per_layer = cfg.grid_n * cfg.grid_n;
    let rest0 = &coarse.rest_positions[..per_layer];
    let layer0_faces: Vec<[usize; 3]> = coarse.faces[..coarse.faces.len() / cfg.layers].to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let motion = Motion::new(&mut rng);
    let noise = Normal::new(0.0, cfg.noise * cfg.spacing).map_err(|e| CoreError::Config(e.to_string()))?;
    let sphere = BodyProxy::sphere([0.0; 3], cfg.body.radius, cfg.body.rings, cfg.body.segments);

    let mut frames = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let t = f as f64;
        let (layer0, comp0) = drape_frame(cfg, &motion, rest0, t);
        let mut gt_coarse = layer0.clone();
        let mut compression = comp0.clone();
        if cfg.layers == 2 {
            let normals = vertex_normals(&layer0, &layer0_faces);
            gt_coarse.extend(layer0.iter().zip(&normals).map(|(p, n)| add(*p, scale(*n, cfg.layer_offset))));
            compression.extend_from_slice(&comp0);
        }
        let center = motion.center(&cfg.body, t);
        let analytic = AnalyticBody::Sphere {
            center,
            radius: cfg.body.radius,
        };
        if f == 0 {
            if let Some(i) = gt_coarse.iter().position(|&p| analytic.contains(p)) {
                return Err(CoreError::Config(format!(
                    "sheet vertex {i} starts inside the body"
                )));
            }
        }
        let fine_gt = synthesize_fine(&gt_coarse, &coarse.faces, &corr, &compression, &cfg.wrinkle);
        let coarse_gt = downsample_fine(&fine_gt, &coincident);
        let smoothed = smooth(&coarse_gt, &topology, &boundary, cfg.smoothing_passes, cfg.smoothing_lambda);
        let coarse_in = smoothed
            .iter()
            .map(|p| [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng), p[2] + noise.sample(&mut rng)])
            .collect();
        let mut body = sphere.translated(center);
        body.analytic = Some(analytic);
        frames.push(Frame {
            coarse_in,
            coarse_gt,
            fine_gt,
            body,
        });
    }
    Dataset::assemble(cfg.clone(), coarse, fine, frames)
}
