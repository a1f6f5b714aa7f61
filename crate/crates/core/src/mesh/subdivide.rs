use std::collections::HashMap;

use crate::error::{CoreError, Result};

use super::correspondence::{Binding, CorrespondenceMap};
use super::vec3::Vec3;
use super::GarmentMesh;

/// A `k`-fold UV subdivision together with its exact parent bindings.
#[derive(Clone, Debug)]
pub struct Subdivision {
    pub mesh: GarmentMesh,
    pub parent: CorrespondenceMap,
}

fn lerp3(a: Vec3, b: Vec3, c: Vec3, u: f64, v: f64) -> Vec3 {
    let w = 1.0 - u - v;
    [
        w * a[0] + u * b[0] + v * c[0],
        w * a[1] + u * b[1] + v * c[1],
        w * a[2] + u * b[2] + v * c[2],
    ]
}

fn lerp2(a: [f64; 2], b: [f64; 2], c: [f64; 2], u: f64, v: f64) -> [f64; 2] {
    let w = 1.0 - u - v;
    [
        w * a[0] + u * b[0] + v * c[0],
        w * a[1] + u * b[1] + v * c[1],
    ]
}

/// Splits every face into `k²` similar triangles.
///
/// Coarse vertices keep their indices; points on shared edges are created
/// once and interpolated from the lower-indexed endpoint, so both faces see
/// bit-identical positions.
pub fn subdivide(coarse: &GarmentMesh, k: usize) -> Result<Subdivision> {
    if k == 0 {
        return Err(CoreError::Config("subdivision factor must be positive".into()));
    }
    let kf = k as f64;
    let mut mesh = GarmentMesh {
        vertices: coarse.vertices.clone(),
        faces: Vec::with_capacity(coarse.faces.len() * k * k),
        uv: coarse.uv.clone(),
        rest_positions: coarse.rest_positions.clone(),
        layer_id: coarse.layer_id.clone(),
    };
    let mut parent: Vec<Binding> = Vec::with_capacity(coarse.vertex_count() * k * k);
    for i in 0..coarse.vertex_count() {
        let (f, corner) = coarse
            .faces
            .iter()
            .enumerate()
            .find_map(|(f, t)| t.iter().position(|&x| x == i).map(|c| (f, c)))
            .ok_or(CoreError::UncoveredVertex(i))?;
        let (u, v) = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)][corner];
        parent.push(Binding { face: f, u, v });
    }
    let mut edge_points: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for (f, &tri) in coarse.faces.iter().enumerate() {
        let mut lattice = vec![usize::MAX; (k + 1) * (k + 1)];
        for i in 0..=k {
            for j in 0..=(k - i) {
                let corner = match (i, j) {
                    (0, 0) => Some(tri[0]),
                    (i, 0) if i == k => Some(tri[1]),
                    (0, j) if j == k => Some(tri[2]),
                    _ => None,
                };
                let id = if let Some(c) = corner {
                    c
                } else {
                    // which edge, if any, and the step along it from its lower end
                    let on_edge = if j == 0 {
                        Some((tri[0], tri[1], i))
                    } else if i == 0 {
                        Some((tri[0], tri[2], j))
                    } else if i + j == k {
                        Some((tri[1], tri[2], j))
                    } else {
                        None
                    };
                    match on_edge {
                        Some((a, b, s)) => {
                            let (lo, hi, t) = if a < b { (a, b, s) } else { (b, a, k - s) };
                            *edge_points.entry((lo, hi, t)).or_insert_with(|| {
                                let w = t as f64 / kf;
                                let p = |x: Vec3, y: Vec3| lerp3(x, y, y, w, 0.0);
                                mesh.vertices.push(p(coarse.vertices[lo], coarse.vertices[hi]));
                                mesh.rest_positions
                                    .push(p(coarse.rest_positions[lo], coarse.rest_positions[hi]));
                                let (ul, uh) = (coarse.uv[lo], coarse.uv[hi]);
                                mesh.uv.push(lerp2(ul, uh, uh, w, 0.0));
                                mesh.layer_id.push(coarse.layer_id[lo]);
                                let (u, v) = (i as f64 / kf, j as f64 / kf);
                                parent.push(Binding { face: f, u, v });
                                mesh.vertices.len() - 1
                            })
                        }
                        None => {
                            let (u, v) = (i as f64 / kf, j as f64 / kf);
                            let [a, b, c] = tri;
                            mesh.vertices.push(lerp3(
                                coarse.vertices[a],
                                coarse.vertices[b],
                                coarse.vertices[c],
                                u,
                                v,
                            ));
                            mesh.rest_positions.push(lerp3(
                                coarse.rest_positions[a],
                                coarse.rest_positions[b],
                                coarse.rest_positions[c],
                                u,
                                v,
                            ));
                            mesh.uv.push(lerp2(coarse.uv[a], coarse.uv[b], coarse.uv[c], u, v));
                            mesh.layer_id.push(coarse.layer_id[a]);
                            parent.push(Binding { face: f, u, v });
                            mesh.vertices.len() - 1
                        }
                    }
                };
                lattice[i * (k + 1) + j] = id;
            }
        }
        let at = |i: usize, j: usize| lattice[i * (k + 1) + j];
        for i in 0..k {
            for j in 0..(k - i) {
                mesh.faces.push([at(i, j), at(i + 1, j), at(i, j + 1)]);
                if i + j + 2 <= k {
                    mesh.faces.push([at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
                }
            }
        }
    }
    mesh.validate()?;
    Ok(Subdivision {
        mesh,
        parent: CorrespondenceMap { entries: parent },
    })
}
