mod common;

use common::{grid, jitter, rng};
use gdsr_core::losses::{
    crop_patches, evaluate, loss_total, positions_tensor, rasterize_normal_patch, wrinkle_loss,
    CoarsePlan, LossWeights, PatchPlan, PatchWindow, PixelCoverage, DEFORMATION_WEIGHT,
    DIHEDRAL_WEIGHT, LAPLACIAN_WEIGHT, NORMAL_WEIGHT, PERCEPTUAL_WEIGHT, PYRAMID_FACTORS,
};
use gdsr_core::mesh::vec3::{dot, norm, Vec3};
use gdsr_core::mesh::{
    dihedral_angles, mapping_matrix, subdivide, vertex_normals, GarmentMesh, Topology, UvLocator,
};
use gdsr_nnet::gradcheck::check_gradients;
use gdsr_nnet::{ParamStore, Tape};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn mean_abs(a: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = a.into_iter().collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    }
}

fn flat_diff(a: &[Vec3], b: &[Vec3]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| (0..3).map(move |k| p[k] - q[k]))
        .collect()
}

fn laplacian_oracle(topo: &Topology, p: &[Vec3], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for &i in rows {
        let nb = &topo.neighbors[i];
        for k in 0..3 {
            let avg = nb.iter().map(|&j| p[j][k]).sum::<f64>() / nb.len() as f64;
            s += (avg - p[i][k]).powi(2);
        }
    }
    s / rows.len() as f64
}

fn deformation_oracle(mesh: &GarmentMesh, faces: &[usize], p: &[Vec3], q: &[Vec3]) -> f64 {
    let (mut su, mut sv, mut sh) = (Vec::new(), Vec::new(), Vec::new());
    for &f in faces {
        let [a, b, c] = mesh.faces[f];
        let uv = [mesh.uv[a], mesh.uv[b], mesh.uv[c]];
        let m = mapping_matrix(uv, [p[a], p[b], p[c]]).unwrap();
        let g = mapping_matrix(uv, [q[a], q[b], q[c]]).unwrap();
        su.push(norm(m.w_u) - norm(g.w_u));
        sv.push(norm(m.w_v) - norm(g.w_v));
        sh.push(dot(m.w_u, m.w_v) - dot(g.w_u, g.w_v));
    }
    mean_abs(su) + mean_abs(sv) + mean_abs(sh)
}

fn interior(topo: &Topology) -> Vec<usize> {
    let b = topo.boundary_vertices();
    (0..topo.vertex_count).filter(|&i| !b[i]).collect()
}

fn coarse_oracle(mesh: &GarmentMesh, p: &[Vec3], q: &[Vec3]) -> (f64, f64) {
    let topo = Topology::new(mesh).unwrap();
    let geo = mean_abs(flat_diff(p, q))
        + NORMAL_WEIGHT
            * mean_abs(flat_diff(
                &vertex_normals(p, &mesh.faces),
                &vertex_normals(q, &mesh.faces),
            ));
    let ta = dihedral_angles(&topo, &mesh.faces, p);
    let tb = dihedral_angles(&topo, &mesh.faces, q);
    let all: Vec<usize> = (0..mesh.faces.len()).collect();
    let def = LAPLACIAN_WEIGHT * laplacian_oracle(&topo, p, &interior(&topo))
        + DIHEDRAL_WEIGHT * mean_abs(ta.iter().zip(&tb).map(|(a, b)| a - b))
        + deformation_oracle(mesh, &all, p, q);
    (geo, def)
}

fn coarse_losses(mesh: &GarmentMesh, p: &[Vec3], q: &[Vec3]) -> (f64, f64, f64) {
    let plan = CoarsePlan::new(mesh, &Topology::new(mesh).unwrap()).unwrap();
    let run = |which: u8| {
        evaluate(|t| {
            let a = t.constant(positions_tensor(p));
            let b = t.constant(positions_tensor(q));
            match which {
                0 => plan.loss_geo(t, a, b),
                1 => plan.loss_def(t, a, b),
                _ => plan.loss(t, a, b),
            }
        })
    };
    (run(0), run(1), run(2))
}

fn bumpy(mesh: &GarmentMesh, seed: u64) -> Vec<Vec3> {
    jitter(&mesh.vertices, 0.01, &mut rng(seed))
}

#[test]
fn inner_coefficients() {
    assert_eq!(NORMAL_WEIGHT, 0.01);
    assert_eq!(LAPLACIAN_WEIGHT, 1e4);
    assert_eq!(DIHEDRAL_WEIGHT, 0.1);
    assert_eq!(DEFORMATION_WEIGHT, 0.01);
    assert_eq!(PERCEPTUAL_WEIGHT, 0.01);
    assert_eq!(PYRAMID_FACTORS, [1, 2, 4]);
}

#[test]
fn uniform_offset_gives_a_third_of_the_shift() {
    let mesh = grid(5, 0.05);
    let q = bumpy(&mesh, 1);
    let p: Vec<Vec3> = q.iter().map(|v| [v[0] + 0.01, v[1], v[2]]).collect();
    let (geo, ..) = coarse_losses(&mesh, &p, &q);
    assert!((geo - 0.01 / 3.0).abs() < 1e-15, "{geo}");
}

#[test]
fn coarse_losses_match_scalar_oracle() {
    let mesh = grid(6, 0.04);
    for seed in 0..4 {
        let p = bumpy(&mesh, seed);
        let q = bumpy(&mesh, seed + 100);
        let (geo, def, total) = coarse_losses(&mesh, &p, &q);
        let (og, od) = coarse_oracle(&mesh, &p, &q);
        assert!((geo - og).abs() < 1e-12, "{geo} vs {og}");
        assert!((def - od).abs() < 1e-10 * od.max(1.0), "{def} vs {od}");
        assert!((total - (og + 0.01 * od)).abs() < 1e-10 * total.max(1.0));
    }
}

#[test]
fn identical_flat_sheet_costs_nothing() {
    let mesh = grid(6, 0.04);
    let (geo, def, total) = coarse_losses(&mesh, &mesh.vertices, &mesh.vertices);
    assert_eq!(geo, 0.0);
    assert!(def < 1e-20 && total < 1e-20);
}

#[test]
fn stretch_along_u_costs_one() {
    let mesh = grid(5, 0.05);
    let p: Vec<Vec3> = mesh.vertices.iter().map(|v| [2.0 * v[0], v[1], v[2]]).collect();
    let (_, def, _) = coarse_losses(&mesh, &p, &mesh.vertices);
    assert!((def - 1.0).abs() < 1e-9, "{def}");
}

#[test]
fn pure_shear_only_moves_the_dot_term() {
    let mesh = grid(5, 0.05);
    let phi: f64 = 0.3;
    let p: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|v| [v[0] + v[1] * phi.sin(), v[1] * phi.cos(), v[2]])
        .collect();
    let all: Vec<usize> = (0..mesh.faces.len()).collect();
    assert!((deformation_oracle(&mesh, &all, &p, &mesh.vertices) - phi.sin()).abs() < 1e-12);
    let (_, def, _) = coarse_losses(&mesh, &p, &mesh.vertices);
    assert!((def - phi.sin()).abs() < 1e-9, "{def}");
}

struct FineScene {
    fine: GarmentMesh,
    topo: Topology,
    locator: UvLocator,
}

fn fine_scene() -> FineScene {
    let coarse = grid(5, 0.04);
    let fine = subdivide(&coarse, 3).unwrap().mesh;
    FineScene {
        topo: Topology::new(&fine).unwrap(),
        locator: UvLocator::new(&fine),
        fine,
    }
}

impl FineScene {
    fn plan(&self, origin: [f64; 2], size: f64, res: usize) -> PatchPlan {
        PatchPlan::new(&self.fine, &self.topo, &self.locator, PatchWindow { origin, size }, res).unwrap()
    }

    fn local(plan: &PatchPlan, p: &[Vec3]) -> gdsr_nnet::Tensor {
        let rows: Vec<Vec3> = plan.vertices.iter().map(|&g| p[g]).collect();
        positions_tensor(&rows)
    }

    fn eval(&self, plan: &PatchPlan, p: &[Vec3], q: &[Vec3], which: u8) -> f64 {
        evaluate(|t| {
            let a = t.constant(Self::local(plan, p));
            let b = t.constant(Self::local(plan, q));
            match which {
                0 => plan.loss_geo(t, a, b),
                1 => plan.loss_def(t, a, b),
                _ => plan.pyramid_l1(t, a, b),
            }
        })
    }
}

/// Masked block means computed pixel by pixel.
fn pyramid_oracle(a: &[Vec3], b: &[Vec3], mask: &[bool], res: usize) -> f64 {
    let mut total = 0.0;
    for &f in &PYRAMID_FACTORS {
        let cells = res.div_ceil(f);
        let mut diffs = Vec::new();
        for by in 0..cells {
            for bx in 0..cells {
                let (mut sa, mut sb, mut n) = ([0.0; 3], [0.0; 3], 0.0);
                for y in by * f..((by + 1) * f).min(res) {
                    for x in bx * f..((bx + 1) * f).min(res) {
                        let i = y * res + x;
                        if mask[i] {
                            for k in 0..3 {
                                sa[k] += a[i][k];
                                sb[k] += b[i][k];
                            }
                            n += 1.0;
                        }
                    }
                }
                if n > 0.0 {
                    diffs.extend((0..3).map(|k| sa[k] / n - sb[k] / n));
                }
            }
        }
        total += mean_abs(diffs);
    }
    total
}

#[test]
fn pyramid_matches_pooling_loop() {
    let sc = fine_scene();
    let res = 24;
    let window = ([0.03, 0.02], 0.1);
    let plan = sc.plan(window.0, window.1, res);
    let p = jitter(&sc.fine.vertices, 0.004, &mut rng(3));
    let q = jitter(&sc.fine.vertices, 0.004, &mut rng(4));
    let w = PatchWindow { origin: window.0, size: window.1 };
    let ra = rasterize_normal_patch(&sc.fine, &p, w, res);
    let rb = rasterize_normal_patch(&sc.fine, &q, w, res);
    let want = pyramid_oracle(&ra.pixels, &rb.pixels, &ra.coverage_mask, res);
    let got = sc.eval(&plan, &p, &q, 2);
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn patch_losses_match_oracles() {
    let sc = fine_scene();
    let (origin, size) = ([0.05, 0.01], 0.09);
    let plan = sc.plan(origin, size, 32);
    let w = PatchWindow { origin, size };
    let p = jitter(&sc.fine.vertices, 0.004, &mut rng(5));
    let q = jitter(&sc.fine.vertices, 0.004, &mut rng(6));
    let inside: Vec<usize> = (0..sc.fine.vertex_count()).filter(|&k| w.contains(sc.fine.uv[k])).collect();
    let pos = mean_abs(inside.iter().flat_map(|&k| (0..3).map(|c| p[k][c] - q[k][c]).collect::<Vec<_>>()));
    let ra = rasterize_normal_patch(&sc.fine, &p, w, 32);
    let rb = rasterize_normal_patch(&sc.fine, &q, w, 32);
    let geo = pos + PERCEPTUAL_WEIGHT * pyramid_oracle(&ra.pixels, &rb.pixels, &ra.coverage_mask, 32);
    assert!((sc.eval(&plan, &p, &q, 0) - geo).abs() < 1e-12);

    let faces: Vec<usize> = (0..sc.fine.faces.len())
        .filter(|&f| sc.fine.faces[f].iter().all(|&v| w.contains(sc.fine.uv[v])))
        .collect();
    assert!(!faces.is_empty());
    let boundary = sc.topo.boundary_vertices();
    let mut rows: Vec<usize> = faces.iter().flat_map(|&f| sc.fine.faces[f]).filter(|&v| !boundary[v]).collect();
    rows.sort_unstable();
    rows.dedup();
    let def = laplacian_oracle(&sc.topo, &p, &rows) + deformation_oracle(&sc.fine, &faces, &p, &q);
    let got = sc.eval(&plan, &p, &q, 1);
    assert!((got - def).abs() < 1e-10 * def.max(1.0), "{got} vs {def}");
}

#[test]
fn identical_patches_cost_nothing() {
    let sc = fine_scene();
    let plan = sc.plan([0.02, 0.02], 0.1, 32);
    let p = &sc.fine.vertices;
    assert_eq!(sc.eval(&plan, p, p, 0), 0.0);
    assert!(sc.eval(&plan, p, p, 1) < 1e-20);
}

#[test]
fn normal_only_difference_is_seen_by_the_pyramid() {
    let sc = fine_scene();
    let (origin, size) = ([0.04, 0.04], 0.08);
    let plan = sc.plan(origin, size, 32);
    let w = PatchWindow { origin, size };
    let q = sc.fine.vertices.clone();
    let mut p = q.clone();
    let mut moved = 0;
    for &g in &plan.vertices {
        if !w.contains(sc.fine.uv[g]) {
            p[g][2] += 0.003;
            moved += 1;
        }
    }
    assert!(moved > 0);
    let pos_only = evaluate(|t| {
        let a = t.constant(FineScene::local(&plan, &p));
        let b = t.constant(FineScene::local(&plan, &q));
        let a = t.gather_rows(a, plan.inside.clone());
        let b = t.gather_rows(b, plan.inside.clone());
        gdsr_core::losses::l1(t, a, b)
    });
    assert_eq!(pos_only, 0.0);
    assert!(sc.eval(&plan, &p, &q, 2) > 0.0);
}

#[test]
fn flat_sheet_renders_up() {
    let sc = fine_scene();
    let patch = rasterize_normal_patch(
        &sc.fine,
        &sc.fine.vertices,
        PatchWindow { origin: [0.0, 0.0], size: 0.16 },
        40,
    );
    assert_eq!(patch.covered(), 1600);
    for n in &patch.pixels {
        assert!((n[2] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sinusoid_normals_match_analytic_surface() {
    let mesh = grid(81, 0.0025);
    let (amp, k) = (0.004, 2.0 * std::f64::consts::PI / 0.1);
    let p: Vec<Vec3> = mesh
        .vertices
        .iter()
        .zip(&mesh.uv)
        .map(|(v, t)| [v[0], v[1], amp * (k * t[0]).sin()])
        .collect();
    let w = PatchWindow { origin: [0.02, 0.02], size: 0.15 };
    let res = 48;
    let patch = rasterize_normal_patch(&mesh, &p, w, res);
    assert_eq!(patch.covered(), res * res);
    for y in 0..res {
        for x in 0..res {
            let c = w.pixel_center(x, y, res);
            let slope = amp * k * (k * c[0]).cos();
            let s = (1.0 + slope * slope).sqrt();
            let want = [-slope / s, 0.0, 1.0 / s];
            let got = patch.pixels[y * res + x];
            let err = (0..3).map(|i| (got[i] - want[i]).powi(2)).sum::<f64>().sqrt();
            assert!(err < 0.02, "pixel ({x},{y}) error {err}");
        }
    }
}

#[test]
fn window_off_the_atlas_is_fully_masked() {
    let sc = fine_scene();
    let patch = rasterize_normal_patch(
        &sc.fine,
        &sc.fine.vertices,
        PatchWindow { origin: [5.0, 5.0], size: 0.1 },
        16,
    );
    assert_eq!(patch.covered(), 0);
    let plan = sc.plan([5.0, 5.0], 0.1, 16);
    assert_eq!(plan.covered_pixels(), 0);
    let p = jitter(&sc.fine.vertices, 0.01, &mut rng(1));
    assert_eq!(sc.eval(&plan, &p, &sc.fine.vertices, 0), 0.0);
}

#[test]
fn coverage_ignores_rigid_motion() {
    let sc = fine_scene();
    let rot = Rotation3::new(Vector3::new(0.3, -1.1, 0.4));
    let moved: Vec<Vec3> = sc
        .fine
        .vertices
        .iter()
        .map(|v| {
            let r = rot * Vector3::new(v[0], v[1], v[2]);
            [r.x + 1.0, r.y - 2.0, r.z + 0.5]
        })
        .collect();
    let w = PatchWindow { origin: [0.03, 0.05], size: 0.12 };
    let a = rasterize_normal_patch(&sc.fine, &sc.fine.vertices, w, 32);
    let b = rasterize_normal_patch(&sc.fine, &moved, w, 32);
    assert_eq!(a.coverage_mask, b.coverage_mask);
    assert_eq!(
        PixelCoverage::new(&sc.fine, &sc.locator, &w, 32),
        PixelCoverage::new(&sc.fine, &sc.locator, &w, 32)
    );
}

#[test]
fn crop_patches_is_seeded_and_checked() {
    let bounds = ([0.0, 0.0], [1.0, 0.5]);
    let a = crop_patches(bounds, 8, 0.2, &mut rng(9), |_| 1.0).unwrap();
    let b = crop_patches(bounds, 8, 0.2, &mut rng(9), |_| 1.0).unwrap();
    assert_eq!(a.len(), 8);
    assert_eq!(a, b);
    for w in &a {
        assert!(w.origin[0] >= 0.0 && w.origin[0] + 0.2 <= 1.0);
        assert!(w.origin[1] >= 0.0 && w.origin[1] + 0.2 <= 0.5);
    }
    assert!(crop_patches(bounds, 8, 0.6, &mut rng(9), |_| 1.0).is_err());
    assert!(crop_patches(bounds, 0, 0.1, &mut rng(9), |_| 1.0).is_err());
}

#[test]
fn crop_origins_are_uniform() {
    let bounds = ([0.0, 0.0], [1.0, 1.0]);
    let size = 0.5;
    let w = crop_patches(bounds, 1000, size, &mut rng(12), |_| 1.0).unwrap();
    for axis in 0..2 {
        let mut bins = [0.0f64; 10];
        for p in &w {
            let b = ((p.origin[axis] / size) * 10.0).floor().min(9.0) as usize;
            bins[b] += 1.0;
        }
        let chi2: f64 = bins.iter().map(|o| (o - 100.0).powi(2) / 100.0).sum();
        // 9 degrees of freedom, p = 0.001
        assert!(chi2 < 27.88, "axis {axis}: chi2 {chi2}");
    }
}

#[test]
fn low_coverage_windows_are_redrawn() {
    let bounds = ([0.0, 0.0], [1.0, 1.0]);
    let w = crop_patches(bounds, 50, 0.1, &mut rng(2), |w| if w.origin[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
    assert!(w.iter().all(|w| w.origin[0] < 0.5));
}

#[test]
fn schedule_weights() {
    let w = LossWeights::at_epoch(0);
    assert_eq!((w.lambda_c, w.lambda_w), (1.9, 0.1));
    let w = LossWeights::at_epoch(10);
    assert_eq!((w.lambda_c, w.lambda_w), (1.7, 0.3));
    let w = LossWeights::at_epoch(80);
    assert_eq!((w.lambda_c, w.lambda_w), (1.0, 1.0));
    let total = evaluate(|t| {
        let z = t.constant(gdsr_nnet::Tensor::scalar(0.0));
        loss_total(t, z, z, LossWeights::at_epoch(0))
    });
    assert_eq!(total, 0.0);
}

#[test]
fn total_loss_gradients_match_finite_differences() {
    let coarse = grid(3, 0.05);
    let sub = subdivide(&coarse, 2).unwrap();
    let fine = sub.mesh;
    let ctopo = Topology::new(&coarse).unwrap();
    let ftopo = Topology::new(&fine).unwrap();
    let cplan = CoarsePlan::new(&coarse, &ctopo).unwrap();
    let locator = UvLocator::new(&fine);
    let plans = vec![
        PatchPlan::new(&fine, &ftopo, &locator, PatchWindow { origin: [0.0, 0.0], size: 0.07 }, 12).unwrap(),
        PatchPlan::new(&fine, &ftopo, &locator, PatchWindow { origin: [0.03, 0.02], size: 0.07 }, 12).unwrap(),
    ];
    let union: Vec<usize> = (0..fine.vertex_count()).collect();
    let c_gt = jitter(&coarse.vertices, 0.01, &mut rng(20));
    let f_gt = jitter(&fine.vertices, 0.005, &mut rng(21));
    let mut store = ParamStore::new();
    let cid = store.add("coarse", positions_tensor(&jitter(&coarse.vertices, 0.01, &mut rng(22))));
    let fid = store.add("fine", positions_tensor(&jitter(&fine.vertices, 0.005, &mut rng(23))));
    let entries: Vec<_> = [cid, fid]
        .into_iter()
        .flat_map(|id| (0..store.get(id).len()).map(move |i| (id, i)))
        .collect();
    let report = check_gradients(
        &store,
        |t: &mut Tape, b| {
            let cg = t.constant(positions_tensor(&c_gt));
            let fg = t.constant(positions_tensor(&f_gt));
            let lc = cplan.loss(t, b.var(cid), cg);
            let lw = wrinkle_loss(t, &plans, &union, b.var(fid), fg);
            loss_total(t, lc, lw, LossWeights::at_epoch(10))
        },
        &entries,
        1e-6,
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coarse_losses_are_nonnegative(seed in 0u64..10_000, amount in 0.0f64..0.02) {
        let mesh = grid(4, 0.05);
        let p = jitter(&mesh.vertices, amount, &mut rng(seed));
        let q = jitter(&mesh.vertices, amount, &mut rng(seed + 1));
        let (geo, def, total) = coarse_losses(&mesh, &p, &q);
        prop_assert!(geo >= 0.0 && def >= 0.0 && total >= 0.0);
        let (geo, def, _) = coarse_losses(&mesh, &p, &p);
        prop_assert_eq!(geo, 0.0);
        let topo = Topology::new(&mesh).unwrap();
        let lap = LAPLACIAN_WEIGHT * laplacian_oracle(&topo, &p, &interior(&topo));
        prop_assert!((def - lap).abs() <= 1e-12 * lap.max(1e-300));
    }

    #[test]
    fn patch_losses_are_nonnegative(seed in 0u64..10_000, ox in 0.0f64..0.08, oy in 0.0f64..0.08) {
        let sc = fine_scene();
        let plan = sc.plan([ox, oy], 0.08, 16);
        let p = jitter(&sc.fine.vertices, 0.004, &mut rng(seed));
        let q = jitter(&sc.fine.vertices, 0.004, &mut rng(seed + 1));
        prop_assert!(sc.eval(&plan, &p, &q, 0) >= 0.0);
        prop_assert!(sc.eval(&plan, &p, &q, 1) >= 0.0);
        prop_assert_eq!(sc.eval(&plan, &p, &p, 0), 0.0);
    }
}
