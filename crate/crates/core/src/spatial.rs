//! Uniform-grid spatial hash over points in `D` dimensions.
//!
//! Queries return exactly what an exhaustive scan would, including the
//! lowest-index tie break, so the grid can stand in for brute force.

use std::collections::HashMap;

#[derive(Clone, Debug)]
pub struct PointGrid<const D: usize> {
    cell: f64,
    points: Vec<[f64; D]>,
    buckets: HashMap<[i64; D], Vec<usize>>,
    lo: [i64; D],
    hi: [i64; D],
}

fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

impl<const D: usize> PointGrid<D> {
    pub fn new(points: Vec<[f64; D]>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut buckets: HashMap<[i64; D], Vec<usize>> = HashMap::new();
        let mut lo = [i64::MAX; D];
        let mut hi = [i64::MIN; D];
        for (i, p) in points.iter().enumerate() {
            let key = Self::key_of(cell, p);
            for k in 0..D {
                lo[k] = lo[k].min(key[k]);
                hi[k] = hi[k].max(key[k]);
            }
            buckets.entry(key).or_default().push(i);
        }
        PointGrid {
            cell,
            points,
            buckets,
            lo,
            hi,
        }
    }

    fn key_of(cell: f64, p: &[f64; D]) -> [i64; D] {
        let mut key = [0i64; D];
        for k in 0..D {
            key[k] = (p[k] / cell).floor() as i64;
        }
        key
    }

    pub fn points(&self) -> &[[f64; D]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn visit_shell(&self, centre: &[i64; D], r: i64, f: &mut impl FnMut(usize)) {
        let mut offset = [-r; D];
        loop {
            if offset.iter().any(|o| o.abs() == r) {
                let mut key = [0i64; D];
                for k in 0..D {
                    key[k] = centre[k] + offset[k];
                }
                if let Some(b) = self.buckets.get(&key) {
                    b.iter().for_each(|&i| f(i));
                }
            }
            let mut k = 0;
            loop {
                if k == D {
                    return;
                }
                offset[k] += 1;
                if offset[k] <= r {
                    break;
                }
                offset[k] = -r;
                k += 1;
            }
        }
    }

    /// Nearest accepted point; ties go to the lowest index.
    pub fn nearest(&self, q: &[f64; D], accept: impl Fn(usize) -> bool) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let centre = Self::key_of(self.cell, q);
        let max_r = (0..D)
            .map(|k| (centre[k] - self.lo[k]).abs().max((self.hi[k] - centre[k]).abs()))
            .max()
            .unwrap_or(0);
        let mut best: Option<(f64, usize)> = None;
        for r in 0..=max_r {
            self.visit_shell(&centre, r, &mut |i| {
                if !accept(i) {
                    return;
                }
                let d = sq_dist(q, &self.points[i]);
                if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                    best = Some((d, i));
                }
            });
            if let Some((bd, _)) = best {
                let reach = r as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// All accepted points with distance strictly below `radius`, ascending index.
    pub fn within(&self, q: &[f64; D], radius: f64, accept: impl Fn(usize) -> bool) -> Vec<usize> {
        let centre = Self::key_of(self.cell, q);
        let r = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut offset = [-r; D];
        'outer: loop {
            let mut key = [0i64; D];
            for k in 0..D {
                key[k] = centre[k] + offset[k];
            }
            if let Some(b) = self.buckets.get(&key) {
                for &i in b {
                    if accept(i) && sq_dist(q, &self.points[i]) < r2 {
                        out.push(i);
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == D {
                    break 'outer;
                }
                offset[k] += 1;
                if offset[k] <= r {
                    break;
                }
                offset[k] = -r;
                k += 1;
            }
        }
        out.sort_unstable();
        out
    }
}

/// Exhaustive nearest-point scan with the same tie-break as [`PointGrid::nearest`].
pub fn nearest_brute<const D: usize>(
    points: &[[f64; D]],
    q: &[f64; D],
    accept: impl Fn(usize) -> bool,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        if !accept(i) {
            continue;
        }
        let d = sq_dist(q, p);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}
