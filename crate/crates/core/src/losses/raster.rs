//! UV-space normal-map rendering and patch windows.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::mesh::vec3::{normalize, Vec3};
use crate::mesh::{vertex_normals, GarmentMesh, UvLocator};

/// Axis-aligned square UV window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchWindow {
    pub origin: [f64; 2],
    pub size: f64,
}

impl PatchWindow {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.origin[0]
            && p[1] >= self.origin[1]
            && p[0] <= self.origin[0] + self.size
            && p[1] <= self.origin[1] + self.size
    }

    /// Centre of pixel `(x, y)` at the given resolution.
    pub fn pixel_center(&self, x: usize, y: usize, resolution: usize) -> [f64; 2] {
        let step = self.size / resolution as f64;
        [
            self.origin[0] + (x as f64 + 0.5) * step,
            self.origin[1] + (y as f64 + 0.5) * step,
        ]
    }
}

/// Pixel-to-triangle binding for one window; fixed by the UV atlas.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelCoverage {
    pub resolution: usize,
    /// `(pixel index, fine face, barycentric weights)` for covered pixels, row-major order.
    pub pixels: Vec<(usize, usize, [f64; 3])>,
}

impl PixelCoverage {
    pub fn new(mesh: &GarmentMesh, locator: &UvLocator, window: &PatchWindow, resolution: usize) -> Self {
        let mut pixels = Vec::new();
        for y in 0..resolution {
            for x in 0..resolution {
                let p = window.pixel_center(x, y, resolution);
                if let Some((f, u, v, score)) = locator.locate(mesh, p, |_| true) {
                    if score >= -1e-12 {
                        pixels.push((y * resolution + x, f, [1.0 - u - v, u, v]));
                    }
                }
            }
        }
        PixelCoverage { resolution, pixels }
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.resolution * self.resolution];
        for &(i, _, _) in &self.pixels {
            m[i] = true;
        }
        m
    }

    pub fn fraction(&self) -> f64 {
        self.pixels.len() as f64 / (self.resolution * self.resolution) as f64
    }
}

/// Rendered unit normals; uncovered pixels hold zeros and are masked.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalPatch {
    pub window: PatchWindow,
    pub resolution: usize,
    pub pixels: Vec<Vec3>,
    pub coverage_mask: Vec<bool>,
}

impl NormalPatch {
    pub fn covered(&self) -> usize {
        self.coverage_mask.iter().filter(|&&m| m).count()
    }
}

/// Shades covered pixels with barycentrically interpolated, renormalized vertex normals.
pub fn shade(coverage: &PixelCoverage, faces: &[[usize; 3]], normals: &[Vec3], window: PatchWindow) -> NormalPatch {
    let r = coverage.resolution;
    let mut pixels = vec![[0.0; 3]; r * r];
    for &(i, f, w) in &coverage.pixels {
        let tri = faces[f];
        let mut n = [0.0; 3];
        for c in 0..3 {
            for k in 0..3 {
                n[k] += w[c] * normals[tri[c]][k];
            }
        }
        pixels[i] = normalize(n).unwrap_or([0.0, 0.0, 1.0]);
    }
    NormalPatch {
        window,
        resolution: r,
        pixels,
        coverage_mask: coverage.mask(),
    }
}

pub fn rasterize_normal_patch(
    mesh: &GarmentMesh,
    positions: &[Vec3],
    window: PatchWindow,
    resolution: usize,
) -> NormalPatch {
    let locator = UvLocator::new(mesh);
    let coverage = PixelCoverage::new(mesh, &locator, &window, resolution);
    let normals = vertex_normals(positions, &mesh.faces);
    shade(&coverage, &mesh.faces, &normals, window)
}

/// UV bounding box `(lo, hi)` of a mesh.
pub fn atlas_bounds(mesh: &GarmentMesh) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for t in &mesh.uv {
        for k in 0..2 {
            lo[k] = lo[k].min(t[k]);
            hi[k] = hi[k].max(t[k]);
        }
    }
    (lo, hi)
}

/// Smallest square window containing the whole atlas.
pub fn atlas_window(mesh: &GarmentMesh) -> PatchWindow {
    let (lo, hi) = atlas_bounds(mesh);
    PatchWindow {
        origin: lo,
        size: (hi[0] - lo[0]).max(hi[1] - lo[1]),
    }
}

pub const MIN_PATCH_COVERAGE: f64 = 0.3;
pub const PATCH_TRIES: usize = 50;

/// Uniform windows inside `bounds`, each redrawn up to 50 times until
/// `coverage(window) ≥ 0.3`; the last draw is kept otherwise.
pub fn crop_patches<R: Rng + ?Sized>(
    bounds: ([f64; 2], [f64; 2]),
    count: usize,
    size: f64,
    rng: &mut R,
    coverage: impl Fn(&PatchWindow) -> f64,
) -> Result<Vec<PatchWindow>> {
    let (lo, hi) = bounds;
    if count == 0 {
        return Err(CoreError::Config("patch count must be at least 1".into()));
    }
    if !(size > 0.0) || hi[0] - lo[0] < size || hi[1] - lo[1] < size {
        return Err(CoreError::Config(format!(
            "patch size {size} exceeds atlas extent {:?}",
            [hi[0] - lo[0], hi[1] - lo[1]]
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut w = PatchWindow {
            origin: lo,
            size,
        };
        for _ in 0..PATCH_TRIES {
            w.origin = [
                lo[0] + rng.random::<f64>() * (hi[0] - lo[0] - size),
                lo[1] + rng.random::<f64>() * (hi[1] - lo[1] - size),
            ];
            if coverage(&w) >= MIN_PATCH_COVERAGE {
                break;
            }
        }
        out.push(w);
    }
    Ok(out)
}

/// Writes a patch as a binary PPM with normals mapped to `[0, 255]`.
pub fn to_ppm(patch: &NormalPatch) -> Vec<u8> {
    let r = patch.resolution;
    let mut out = format!("P6\n{r} {r}\n255\n").into_bytes();
    for y in (0..r).rev() {
        for x in 0..r {
            let i = y * r + x;
            let n = patch.pixels[i];
            for k in 0..3 {
                let v = if patch.coverage_mask[i] {
                    ((n[k] * 0.5 + 0.5) * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                };
                out.push(v);
            }
        }
    }
    out
}
