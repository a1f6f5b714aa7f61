use std::io::Write;

use super::ssim::ssim;
use crate::datagen::Dataset;
use crate::error::{CoreError, Result};
use crate::losses::{atlas_window, shade, PixelCoverage};
use crate::mesh::vec3::Vec3;
use crate::mesh::{stretch_shear_energies, upsample, vertex_normals, GarmentMesh, UvLocator};

pub const ATLAS_RESOLUTION: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub frame: usize,
    pub l1: f64,
    pub e_u: f64,
    pub e_v: f64,
    pub e_uv: f64,
    pub ssim: f64,
    pub ssim_baseline: f64,
    /// Fine-vertex L1 of the naive up-sampling of the coarse input.
    pub l1_baseline: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean: EvalRow,
}

/// Full-atlas normal image in `[0, 1]` (interleaved RGB) and its coverage mask.
pub fn atlas_normal_image(
    mesh: &GarmentMesh,
    coverage: &PixelCoverage,
    positions: &[Vec3],
) -> Vec<f64> {
    let normals = vertex_normals(positions, &mesh.faces);
    let patch = shade(coverage, &mesh.faces, &normals, atlas_window(mesh));
    patch
        .pixels
        .iter()
        .zip(&patch.coverage_mask)
        .flat_map(|(n, &m)| {
            if m {
                n.map(|x| 0.5 * (x + 1.0))
            } else {
                [0.0; 3]
            }
        })
        .collect()
}

fn mean_l1(a: &[Vec3], b: &[Vec3]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (0..3).map(|k| (p[k] - q[k]).abs()).sum::<f64>())
        .sum();
    s / (3 * a.len()).max(1) as f64
}

/// Compares predicted fine meshes with the dataset ground truth, frame by frame.
pub fn evaluate(data: &Dataset, predicted: &[Vec<Vec3>]) -> Result<EvalReport> {
    if predicted.len() > data.len() {
        return Err(CoreError::ShapeMismatch {
            what: "evaluated frames",
            expected: data.len(),
            got: predicted.len(),
        });
    }
    let fine = &data.fine;
    let locator = UvLocator::new(fine);
    let coverage = PixelCoverage::new(fine, &locator, &atlas_window(fine), ATLAS_RESOLUTION);
    let mask = coverage.mask();
    let r = ATLAS_RESOLUTION;
    let mut rows = Vec::with_capacity(predicted.len());
    for (t, pred) in predicted.iter().enumerate() {
        if pred.len() != fine.vertex_count() {
            return Err(CoreError::ShapeMismatch {
                what: "predicted fine vertices",
                expected: fine.vertex_count(),
                got: pred.len(),
            });
        }
        let frame = &data.frames[t];
        let baseline = upsample(&frame.coarse_in, &data.coarse.faces, &data.correspondence);
        let gt_img = atlas_normal_image(fine, &coverage, &frame.fine_gt);
        let pred_img = atlas_normal_image(fine, &coverage, pred);
        let base_img = atlas_normal_image(fine, &coverage, &baseline);
        let e = stretch_shear_energies(fine, pred)?;
        rows.push(EvalRow {
            frame: t,
            l1: mean_l1(pred, &frame.fine_gt),
            e_u: e.mean[0],
            e_v: e.mean[1],
            e_uv: e.mean[2],
            ssim: ssim(&pred_img, &gt_img, r, r, 3, Some(&mask)),
            ssim_baseline: ssim(&base_img, &gt_img, r, r, 3, Some(&mask)),
            l1_baseline: mean_l1(&baseline, &frame.fine_gt),
        });
    }
    let n = rows.len().max(1) as f64;
    let avg = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean = EvalRow {
        frame: rows.len(),
        l1: avg(|r| r.l1),
        e_u: avg(|r| r.e_u),
        e_v: avg(|r| r.e_v),
        e_uv: avg(|r| r.e_uv),
        ssim: avg(|r| r.ssim),
        ssim_baseline: avg(|r| r.ssim_baseline),
        l1_baseline: avg(|r| r.l1_baseline),
    };
    Ok(EvalReport { rows, mean })
}

/// Per-frame rows followed by a `mean` row.
pub fn write_eval_csv(report: &EvalReport, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "frame,L1,E_u,E_v,E_uv,SSIM,SSIM_baseline")?;
    let line = |out: &mut dyn Write, label: String, r: &EvalRow| {
        writeln!(
            out,
            "{label},{},{},{},{},{},{}",
            r.l1, r.e_u, r.e_v, r.e_uv, r.ssim, r.ssim_baseline
        )
    };
    for r in &report.rows {
        line(out, r.frame.to_string(), r)?;
    }
    line(out, "mean".into(), &report.mean)
}
