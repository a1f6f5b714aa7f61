use std::path::Path;

use crate::error::{CoreError, Result};
use crate::mesh::vec3::{self, dot, norm, sub, Vec3};
use crate::mesh::{parse_obj, write_obj_with_normals};
use crate::spatial::{nearest_brute, PointGrid};

/// Above this many vertices nearest-vertex queries go through a spatial hash.
pub const EXHAUSTIVE_LIMIT: usize = 5000;

/// Closed-form body shapes used by the data generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticBody {
    Sphere { center: Vec3, radius: f64 },
    Capsule { a: Vec3, b: Vec3, radius: f64 },
}

impl AnalyticBody {
    /// Signed distance (negative inside) and its unit gradient.
    pub fn sdf(&self, p: Vec3) -> (f64, Vec3) {
        let (closest, radius) = match *self {
            AnalyticBody::Sphere { center, radius } => (center, radius),
            AnalyticBody::Capsule { a, b, radius } => {
                let ab = sub(b, a);
                let len2 = dot(ab, ab);
                let t = if len2 > 0.0 {
                    (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (vec3::add(a, vec3::scale(ab, t)), radius)
            }
        };
        let d = sub(p, closest);
        let r = norm(d);
        let grad = vec3::normalize(d).unwrap_or([0.0, 0.0, 1.0]);
        (r - radius, grad)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.sdf(p).0 < 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyProxy {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub analytic: Option<AnalyticBody>,
}

impl BodyProxy {
    pub fn new(vertices: Vec<Vec3>, normals: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(CoreError::EmptyBody);
        }
        if normals.len() != vertices.len() {
            return Err(CoreError::ShapeMismatch {
                what: "body normals",
                expected: vertices.len(),
                got: normals.len(),
            });
        }
        if let Some(i) = normals.iter().position(|n| (norm(*n) - 1.0).abs() > 1e-6) {
            return Err(CoreError::Config(format!("body normal {i} is not unit length")));
        }
        Ok(BodyProxy {
            vertices,
            normals,
            faces,
            analytic: None,
        })
    }

    /// UV-sphere tessellation with analytic normals.
    pub fn sphere(center: Vec3, radius: f64, rings: usize, segments: usize) -> Self {
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        let mut faces = Vec::new();
        let rings = rings.max(2);
        let segments = segments.max(3);
        normals.push([0.0, 0.0, 1.0]);
        for r in 1..rings {
            let theta = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                normals.push([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
            }
        }
        normals.push([0.0, 0.0, -1.0]);
        for n in &normals {
            vertices.push(vec3::add(center, vec3::scale(*n, radius)));
        }
        let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
        let south = normals.len() - 1;
        for s in 0..segments {
            faces.push([0, ring(1, s), ring(1, s + 1)]);
            faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                faces.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
                faces.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
            }
        }
        BodyProxy {
            vertices,
            normals,
            faces,
            analytic: Some(AnalyticBody::Sphere { center, radius }),
        }
    }

    pub fn translated(&self, t: Vec3) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = vec3::add(*v, t);
        }
        out.analytic = self.analytic.map(|a| match a {
            AnalyticBody::Sphere { center, radius } => AnalyticBody::Sphere {
                center: vec3::add(center, t),
                radius,
            },
            AnalyticBody::Capsule { a, b, radius } => AnalyticBody::Capsule {
                a: vec3::add(a, t),
                b: vec3::add(b, t),
                radius,
            },
        });
        out
    }

    pub fn index(&self) -> BodyIndex<'_> {
        BodyIndex::new(self)
    }

    pub fn to_obj(&self) -> String {
        write_obj_with_normals(&self.vertices, &self.normals, &self.faces)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj()).map_err(|e| CoreError::io(path, e))
    }

    /// Reads positions and per-vertex normals (`vn` indexed like `v`, or by face corners).
    pub fn from_obj_text(text: &str) -> Result<Self> {
        let obj = parse_obj(text)?;
        let n = obj.positions.len();
        let mut normals = vec![None; n];
        if obj.normals.len() == n {
            normals = obj.normals.iter().map(|v| Some(*v)).collect();
        }
        for face in &obj.faces {
            for c in face {
                if let Some(k) = c.normal {
                    normals[c.position].get_or_insert(obj.normals[k]);
                }
            }
        }
        let normals: Vec<Vec3> = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.and_then(vec3::normalize)
                    .ok_or_else(|| CoreError::Config(format!("body vertex {i} has no usable normal")))
            })
            .collect::<Result<_>>()?;
        let faces = obj.faces.iter().map(|f| f.map(|c| c.position)).collect();
        BodyProxy::new(obj.positions, normals, faces)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_obj_text(&text)
    }
}

/// Nearest-body-vertex queries; exhaustive for small bodies, hashed otherwise.
pub struct BodyIndex<'a> {
    body: &'a BodyProxy,
    grid: Option<PointGrid<3>>,
}

impl<'a> BodyIndex<'a> {
    pub fn new(body: &'a BodyProxy) -> Self {
        let grid = (body.vertices.len() > EXHAUSTIVE_LIMIT).then(|| {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for v in &body.vertices {
                for k in 0..3 {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
            let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
            let cell = (extent / (body.vertices.len() as f64).cbrt()).max(1e-6);
            PointGrid::new(body.vertices.clone(), cell)
        });
        BodyIndex { body, grid }
    }

    pub fn body(&self) -> &BodyProxy {
        self.body
    }

    pub fn nearest(&self, c: Vec3) -> usize {
        match &self.grid {
            Some(g) => g.nearest(&c, |_| true),
            None => nearest_brute(&self.body.vertices, &c, |_| true),
        }
        .expect("body proxy is non-empty")
    }

    /// `ReLU[σ − (c − b)·n_b]·n_b` for the nearest body vertex `b`.
    pub fn interaction(&self, c: Vec3, sigma: f64) -> Vec3 {
        let b = self.nearest(c);
        let n = self.body.normals[b];
        let depth = (sigma - dot(sub(c, self.body.vertices[b]), n)).max(0.0);
        vec3::scale(n, depth)
    }
}
