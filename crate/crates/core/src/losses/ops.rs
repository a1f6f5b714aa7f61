//! Differentiable mesh quantities on a [`Tape`].

use std::rc::Rc;

use gdsr_nnet::{SparseMatrix, Tape, Var};

use crate::error::{CoreError, Result};
use crate::mesh::{mapping_coefficients, InteriorEdge};

fn corner(faces: &[[usize; 3]], k: usize) -> Rc<[usize]> {
    faces.iter().map(|f| f[k]).collect()
}

/// Unnormalized face normals `(p1 − p0) × (p2 − p0)`.
pub fn face_cross(tape: &mut Tape, p: Var, faces: &[[usize; 3]]) -> Var {
    let p0 = tape.gather_rows(p, corner(faces, 0));
    let p1 = tape.gather_rows(p, corner(faces, 1));
    let p2 = tape.gather_rows(p, corner(faces, 2));
    let d1 = tape.sub(p1, p0);
    let d2 = tape.sub(p2, p0);
    tape.rows_cross(d1, d2)
}

/// Area-weighted unit vertex normals over `n` vertices.
pub fn vertex_normals(tape: &mut Tape, p: Var, faces: &[[usize; 3]], n: usize) -> Var {
    let c = face_cross(tape, p, faces);
    let mut acc: Option<Var> = None;
    for k in 0..3 {
        let s = tape.scatter_add_rows(c, corner(faces, k), n);
        acc = Some(match acc {
            None => s,
            Some(a) => tape.add(a, s),
        });
    }
    let acc = acc.expect("three corners");
    tape.rows_normalize(acc, [0.0, 0.0, 1.0])
}

/// Uniform Laplacian operator restricted to `rows`, over `n` vertices.
pub fn laplacian_operator(neighbors: &[Vec<usize>], rows: &[usize], n: usize) -> SparseMatrix {
    let entries: Vec<Vec<(usize, f64)>> = rows
        .iter()
        .map(|&i| {
            let nb = &neighbors[i];
            if nb.is_empty() {
                return Vec::new();
            }
            let w = 1.0 / nb.len() as f64;
            let mut r: Vec<(usize, f64)> = nb.iter().map(|&j| (j, w)).collect();
            r.push((i, -1.0));
            r
        })
        .collect();
    SparseMatrix::from_rows(n, &entries)
}

/// Linear operators producing `w_u` and `w_v` rows per face from vertex positions.
pub fn mapping_operators(
    uv: &[[f64; 2]],
    faces: &[[usize; 3]],
    n: usize,
    face_ids: impl Fn(usize) -> usize,
) -> Result<(SparseMatrix, SparseMatrix)> {
    let mut wu = Vec::with_capacity(faces.len());
    let mut wv = Vec::with_capacity(faces.len());
    for (f, tri) in faces.iter().enumerate() {
        let (a, b) = mapping_coefficients([uv[tri[0]], uv[tri[1]], uv[tri[2]]])
            .ok_or(CoreError::SingularMapping(face_ids(f)))?;
        wu.push((0..3).map(|k| (tri[k], a[k])).collect());
        wv.push((0..3).map(|k| (tri[k], b[k])).collect());
    }
    Ok((
        SparseMatrix::from_rows(n, &wu),
        SparseMatrix::from_rows(n, &wv),
    ))
}

/// Signed bending angle per interior edge.
pub fn dihedral(tape: &mut Tape, p: Var, faces: &[[usize; 3]], edges: &[InteriorEdge]) -> Var {
    let c = face_cross(tape, p, faces);
    let normals = tape.rows_normalize(c, [0.0, 0.0, 1.0]);
    let lo: Rc<[usize]> = edges.iter().map(|e| e.face_lo).collect();
    let hi: Rc<[usize]> = edges.iter().map(|e| e.face_hi).collect();
    let a: Rc<[usize]> = edges.iter().map(|e| e.a).collect();
    let b: Rc<[usize]> = edges.iter().map(|e| e.b).collect();
    let n1 = tape.gather_rows(normals, lo);
    let n2 = tape.gather_rows(normals, hi);
    let pa = tape.gather_rows(p, a);
    let pb = tape.gather_rows(p, b);
    let d = tape.sub(pb, pa);
    let e = tape.rows_normalize(d, [1.0, 0.0, 0.0]);
    let x = tape.rows_cross(n1, n2);
    let y = tape.rows_dot(x, e);
    let xx = tape.rows_dot(n1, n2);
    tape.atan2(y, xx)
}

/// `mean |a − b|`, or a constant zero for empty inputs.
pub fn l1(tape: &mut Tape, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    let d = tape.abs(d);
    tape.mean(d)
}

/// Mean squared row norm.
pub fn mean_sq_norm(tape: &mut Tape, a: Var) -> Var {
    let rows = tape.value(a).rows();
    let s = tape.square(a);
    let s = tape.sum(s);
    tape.scale(s, if rows == 0 { 0.0 } else { 1.0 / rows as f64 })
}

/// Stretch and shear difference terms between two position sets.
pub fn deformation_terms(
    tape: &mut Tape,
    p: Var,
    p_gt: Var,
    wu_op: &Rc<SparseMatrix>,
    wv_op: &Rc<SparseMatrix>,
) -> Var {
    let mut parts = Vec::with_capacity(3);
    let wu = tape.sparse(p, wu_op.clone());
    let wv = tape.sparse(p, wv_op.clone());
    let wu_gt = tape.sparse(p_gt, wu_op.clone());
    let wv_gt = tape.sparse(p_gt, wv_op.clone());
    let nu = tape.rows_norm(wu);
    let nu_gt = tape.rows_norm(wu_gt);
    parts.push(l1(tape, nu, nu_gt));
    let nv = tape.rows_norm(wv);
    let nv_gt = tape.rows_norm(wv_gt);
    parts.push(l1(tape, nv, nv_gt));
    let sh = tape.rows_dot(wu, wv);
    let sh_gt = tape.rows_dot(wu_gt, wv_gt);
    parts.push(l1(tape, sh, sh_gt));
    let s = tape.add(parts[0], parts[1]);
    tape.add(s, parts[2])
}
