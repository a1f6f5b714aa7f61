//! Wavefront OBJ subset: `v`, `vt`, `vn` and polygonal `f` records.

use std::fmt::Write;

use crate::error::{CoreError, Result};

use super::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjCorner {
    pub position: usize,
    pub uv: Option<usize>,
    pub normal: Option<usize>,
}

/// Raw file contents with zero-based indices; polygons are fan-triangulated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjData {
    pub positions: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
    pub normals: Vec<Vec3>,
    pub faces: Vec<[ObjCorner; 3]>,
    /// 1-based source line of each triangle.
    pub face_lines: Vec<usize>,
}

fn parse_err(line: usize, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        line,
        message: message.into(),
    }
}

fn floats<const N: usize>(line: usize, tokens: &[&str]) -> Result<[f64; N]> {
    if tokens.len() < N {
        return Err(parse_err(line, format!("expected {N} numbers")));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(tokens) {
        let v: f64 = t
            .parse()
            .map_err(|_| parse_err(line, format!("bad number {t:?}")))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite number {t:?}")));
        }
        *o = v;
    }
    Ok(out)
}

/// Resolves a 1-based or negative (relative to `seen`) index against `count`.
fn index(line: usize, token: &str, seen: usize, count: usize) -> Result<Option<usize>> {
    if token.is_empty() {
        return Ok(None);
    }
    let raw: i64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("bad index {token:?}")))?;
    let resolved = match raw {
        0 => return Err(parse_err(line, "index 0 is invalid")),
        r if r > 0 => r - 1,
        r => seen as i64 + r,
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(CoreError::IndexOutOfRange {
            line,
            index: raw,
            count,
        });
    }
    Ok(Some(resolved as usize))
}

pub fn parse_obj(text: &str) -> Result<ObjData> {
    let mut data = ObjData::default();
    let mut pending: Vec<(usize, Vec<&str>, [usize; 3])> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let Some((&head, rest)) = tokens.split_first() else {
            continue;
        };
        match head {
            "v" => data.positions.push(floats::<3>(line, rest)?),
            "vt" => data.uvs.push(floats::<2>(line, rest)?),
            "vn" => data.normals.push(floats::<3>(line, rest)?),
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_err(line, "face needs at least 3 corners"));
                }
                let seen = [data.positions.len(), data.uvs.len(), data.normals.len()];
                pending.push((line, rest.to_vec(), seen));
            }
            _ => {}
        }
    }
    for (line, corners, seen) in pending {
        let mut parsed = Vec::with_capacity(corners.len());
        for c in corners {
            let mut parts = c.split('/');
            let p = parts.next().unwrap_or("");
            let t = parts.next().unwrap_or("");
            let n = parts.next().unwrap_or("");
            if parts.next().is_some() {
                return Err(parse_err(line, format!("bad face corner {c:?}")));
            }
            let position = index(line, p, seen[0], data.positions.len())?
                .ok_or_else(|| parse_err(line, "face corner without a vertex index"))?;
            parsed.push(ObjCorner {
                position,
                uv: index(line, t, seen[1], data.uvs.len())?,
                normal: index(line, n, seen[2], data.normals.len())?,
            });
        }
        for k in 1..parsed.len() - 1 {
            data.faces.push([parsed[0], parsed[k], parsed[k + 1]]);
            data.face_lines.push(line);
        }
    }
    Ok(data)
}

/// One UV per vertex, faces written as `f a/a b/b c/c`.
pub fn write_obj(positions: &[Vec3], uv: &[[f64; 2]], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(48 * positions.len() + 24 * faces.len());
    for p in positions {
        let _ = writeln!(s, "v {} {} {}", p[0], p[1], p[2]);
    }
    for t in uv {
        let _ = writeln!(s, "vt {} {}", t[0], t[1]);
    }
    for f in faces {
        let [a, b, c] = f.map(|i| i + 1);
        let _ = writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}");
    }
    s
}

/// Positions and per-vertex normals, faces written as `f a//a b//b c//c`.
pub fn write_obj_with_normals(positions: &[Vec3], normals: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(96 * positions.len());
    for p in positions {
        let _ = writeln!(s, "v {} {} {}", p[0], p[1], p[2]);
    }
    for n in normals {
        let _ = writeln!(s, "vn {} {} {}", n[0], n[1], n[2]);
    }
    for f in faces {
        let [a, b, c] = f.map(|i| i + 1);
        let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    s
}

/// Parses a layer sidecar: one small integer per line, one line per OBJ vertex.
pub fn parse_layers(text: &str, vertex_count: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(vertex_count);
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let v: u8 = t
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad layer label {t:?}")))?;
        out.push(v);
    }
    if out.len() != vertex_count {
        return Err(CoreError::ShapeMismatch {
            what: "layer sidecar",
            expected: vertex_count,
            got: out.len(),
        });
    }
    Ok(out)
}

pub fn format_layers(layers: &[u8]) -> String {
    let mut s = String::with_capacity(2 * layers.len());
    for l in layers {
        let _ = writeln!(s, "{l}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n\
        vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3\nf 1/1 3/3 4/4\n";

    #[test]
    fn parses_unit_quad() {
        let d = parse_obj(QUAD).unwrap();
        assert_eq!(d.positions.len(), 4);
        assert_eq!(d.faces.len(), 2);
        assert_eq!(d.faces[1][2].uv, Some(3));
    }

    #[test]
    fn polygon_is_fan_triangulated() {
        let text = QUAD.replace("f 1/1 2/2 3/3\nf 1/1 3/3 4/4\n", "f 1/1 2/2 3/3 4/4\n");
        let d = parse_obj(&text).unwrap();
        assert_eq!(d.faces.len(), 2);
        assert_eq!(d.face_lines, vec![9, 9]);
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let text = QUAD.replace("f 1/1 3/3 4/4", "f 1/1 3/3 9/4");
        match parse_obj(&text) {
            Err(CoreError::IndexOutOfRange { line, index, count }) => {
                assert_eq!((line, index, count), (10, 9, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_indices_are_relative() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n";
        let d = parse_obj(text).unwrap();
        assert_eq!(d.faces[0].map(|c| c.position), [0, 1, 2]);
    }

    #[test]
    fn bad_number_reports_line() {
        let err = parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, CoreError::Parse { line: 2, .. }));
        assert!(parse_obj("v 0 0 inf\n").is_err());
    }

    #[test]
    fn written_floats_round_trip_exactly() {
        let p = [[0.1, 1.0 / 3.0, -2.5e-300], [f64::MAX, 7.0, 0.0], [1e-17, 2.0, 3.0]];
        let uv = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0 / 7.0]];
        let text = write_obj(&p, &uv, &[[0, 1, 2]]);
        let d = parse_obj(&text).unwrap();
        assert_eq!(d.positions, p.to_vec());
        assert_eq!(d.uvs, uv.to_vec());
    }

    #[test]
    fn layers_count_must_match() {
        assert_eq!(parse_layers("0\n1\n\n1\n", 3).unwrap(), vec![0, 1, 1]);
        assert!(parse_layers("0\n1\n", 3).is_err());
        assert!(parse_layers("0\n-1\n", 2).is_err());
        assert_eq!(parse_layers(&format_layers(&[2, 0]), 2).unwrap(), vec![2, 0]);
    }
}
