use crate::error::{CoreError, Result};

use super::correspondence::CorrespondenceMap;
use super::topology::Topology;
use super::vec3::{self, cross, dot, norm, normalize, sub, Vec3};
use super::{GarmentMesh, AREA_EPS};

/// `(1−u−v)·c0 + u·c1 + v·c2`, summed in that order.
#[inline]
pub fn barycentric_sample(positions: &[Vec3], tri: [usize; 3], u: f64, v: f64) -> Vec3 {
    let w = 1.0 - u - v;
    let (a, b, c) = (positions[tri[0]], positions[tri[1]], positions[tri[2]]);
    [
        w * a[0] + u * b[0] + v * c[0],
        w * a[1] + u * b[1] + v * c[1],
        w * a[2] + u * b[2] + v * c[2],
    ]
}

/// Barycentric up-sampling of coarse positions onto every bound fine vertex.
pub fn upsample(positions: &[Vec3], faces: &[[usize; 3]], corr: &CorrespondenceMap) -> Vec<Vec3> {
    corr.entries
        .iter()
        .map(|b| barycentric_sample(positions, faces[b.face], b.u, b.v))
        .collect()
}

/// Orthonormal triangle frame; `axes` holds the columns `e1, e2, n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub origin: Vec3,
    pub axes: [Vec3; 3],
}

impl LocalFrame {
    pub fn e1(&self) -> Vec3 {
        self.axes[0]
    }

    pub fn e2(&self) -> Vec3 {
        self.axes[1]
    }

    pub fn n(&self) -> Vec3 {
        self.axes[2]
    }

    /// Rotates local components into world space (no translation).
    pub fn to_world(&self, local: Vec3) -> Vec3 {
        let [e1, e2, n] = self.axes;
        [
            e1[0] * local[0] + e2[0] * local[1] + n[0] * local[2],
            e1[1] * local[0] + e2[1] * local[1] + n[1] * local[2],
            e1[2] * local[0] + e2[2] * local[1] + n[2] * local[2],
        ]
    }

    pub fn to_local(&self, world: Vec3) -> Vec3 {
        [dot(self.axes[0], world), dot(self.axes[1], world), dot(self.axes[2], world)]
    }

    /// Row-major 3×3 matrix with the axes as columns.
    pub fn rotation(&self) -> [f64; 9] {
        let [e1, e2, n] = self.axes;
        [
            e1[0], e2[0], n[0], //
            e1[1], e2[1], n[1], //
            e1[2], e2[2], n[2],
        ]
    }
}

/// Frame with `e1` along `f0→f1`, `n` the unit normal and `e2 = n × e1`.
pub fn triangle_frame(positions: &[Vec3], tri: [usize; 3]) -> Option<LocalFrame> {
    let origin = positions[tri[0]];
    let d1 = sub(positions[tri[1]], origin);
    let d2 = sub(positions[tri[2]], origin);
    let c = cross(d1, d2);
    if !(0.5 * norm(c) > AREA_EPS) {
        return None;
    }
    let e1 = normalize(d1)?;
    let n = normalize(c)?;
    Some(LocalFrame {
        origin,
        axes: [e1, cross(n, e1), n],
    })
}

/// Frames for every face, failing on the first degenerate one.
pub fn face_frames(positions: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<LocalFrame>> {
    faces
        .iter()
        .enumerate()
        .map(|(f, &tri)| triangle_frame(positions, tri).ok_or(CoreError::DegenerateFace(f)))
        .collect()
}

/// Unit face normals; degenerate faces get `(0,0,1)`.
pub fn face_normals(positions: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    faces
        .iter()
        .map(|&[a, b, c]| {
            let n = cross(sub(positions[b], positions[a]), sub(positions[c], positions[a]));
            normalize(n).unwrap_or([0.0, 0.0, 1.0])
        })
        .collect()
}

/// Area-weighted vertex normals; vertices with no usable face get `(0,0,1)`.
pub fn vertex_normals(positions: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![[0.0; 3]; positions.len()];
    for &[a, b, c] in faces {
        let n = cross(sub(positions[b], positions[a]), sub(positions[c], positions[a]));
        for i in [a, b, c] {
            acc[i] = vec3::add(acc[i], n);
        }
    }
    acc.into_iter()
        .map(|n| normalize(n).unwrap_or([0.0, 0.0, 1.0]))
        .collect()
}

/// Mean of the 1-ring minus the vertex; zero for isolated vertices.
pub fn uniform_laplacian(topology: &Topology, positions: &[Vec3]) -> Vec<Vec3> {
    topology
        .neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            if nb.is_empty() {
                return [0.0; 3];
            }
            let mut s = [0.0; 3];
            for &j in nb {
                s = vec3::add(s, positions[j]);
            }
            sub(vec3::scale(s, 1.0 / nb.len() as f64), positions[i])
        })
        .collect()
}

/// Signed angle between unit normals about the edge direction `e`.
#[inline]
pub fn bending_angle(n1: Vec3, n2: Vec3, e: Vec3) -> f64 {
    dot(cross(n1, n2), e).atan2(dot(n1, n2))
}

/// One signed bending angle per interior edge, in `topology.interior_edges` order.
pub fn dihedral_angles(topology: &Topology, faces: &[[usize; 3]], positions: &[Vec3]) -> Vec<f64> {
    let normals = face_normals(positions, faces);
    topology
        .interior_edges
        .iter()
        .map(|e| {
            let dir = normalize(sub(positions[e.b], positions[e.a])).unwrap_or([1.0, 0.0, 0.0]);
            bending_angle(normals[e.face_lo], normals[e.face_hi], dir)
        })
        .collect()
}

/// Columns `w_u`, `w_v` of the 3×2 map from rest UV to world space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappingMatrix {
    pub w_u: Vec3,
    pub w_v: Vec3,
}

/// Weights `(a, b)` with `w_u = Σ a_k x_k` and `w_v = Σ b_k x_k` over the three corners.
pub fn mapping_coefficients(uv: [[f64; 2]; 3]) -> Option<([f64; 3], [f64; 3])> {
    let (du1, dv1) = (uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]);
    let (du2, dv2) = (uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]);
    let det = du1 * dv2 - du2 * dv1;
    if !(0.5 * det.abs() > AREA_EPS) {
        return None;
    }
    let a = [(dv1 - dv2) / det, dv2 / det, -dv1 / det];
    let b = [(du2 - du1) / det, -du2 / det, du1 / det];
    Some((a, b))
}

/// `w = [Δx1 Δx2]·D⁻¹` with `D = [[Δu1, Δu2], [Δv1, Δv2]]`.
pub fn mapping_matrix(uv: [[f64; 2]; 3], x: [Vec3; 3]) -> Result<MappingMatrix> {
    let (du1, dv1) = (uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]);
    let (du2, dv2) = (uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]);
    let det = du1 * dv2 - du2 * dv1;
    if !(0.5 * det.abs() > AREA_EPS) {
        return Err(CoreError::DegenerateUv(Vec::new()));
    }
    let d1 = sub(x[1], x[0]);
    let d2 = sub(x[2], x[0]);
    let mut w_u = [0.0; 3];
    let mut w_v = [0.0; 3];
    for k in 0..3 {
        w_u[k] = (d1[k] * dv2 - d2[k] * dv1) / det;
        w_v[k] = (d2[k] * du1 - d1[k] * du2) / det;
    }
    Ok(MappingMatrix { w_u, w_v })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Energies {
    /// `[E_u, E_v, E_uv]` per face.
    pub per_face: Vec<[f64; 3]>,
    pub mean: [f64; 3],
}

pub fn stretch_shear_energies(mesh: &GarmentMesh, positions: &[Vec3]) -> Result<Energies> {
    let per_face: Vec<[f64; 3]> = mesh
        .faces
        .iter()
        .enumerate()
        .map(|(f, &[a, b, c])| {
            let m = mapping_matrix(
                [mesh.uv[a], mesh.uv[b], mesh.uv[c]],
                [positions[a], positions[b], positions[c]],
            )
            .map_err(|_| CoreError::SingularMapping(f))?;
            let su = norm(m.w_u) - 1.0;
            let sv = norm(m.w_v) - 1.0;
            let sh = dot(m.w_u, m.w_v);
            Ok([su * su, sv * sv, sh * sh])
        })
        .collect::<Result<_>>()?;
    let mut mean = [0.0; 3];
    for e in &per_face {
        for k in 0..3 {
            mean[k] += e[k];
        }
    }
    if !per_face.is_empty() {
        for m in &mut mean {
            *m /= per_face.len() as f64;
        }
    }
    Ok(Energies { per_face, mean })
}
