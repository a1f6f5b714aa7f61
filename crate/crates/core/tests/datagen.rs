mod common;

use common::{rng, small_scene};
use gdsr_core::datagen::{downsample_fine, gen_sequence, load_dataset, save_dataset, SceneConfig, WrinkleSpec};
use gdsr_core::featgraph::AnalyticBody;
use gdsr_core::mesh::vec3::{dot, norm, sub, Vec3};
use gdsr_core::mesh::{stretch_shear_energies, subdivide};
use gdsr_core::CoreError;
use rand::Rng;

/// `(1−u−v)·a + u·b + v·c` per bound fine vertex.
fn upsample_oracle(coarse: &[Vec3], faces: &[[usize; 3]], bindings: &[(usize, f64, f64)]) -> Vec<Vec3> {
    bindings
        .iter()
        .map(|&(f, u, v)| {
            let [a, b, c] = faces[f].map(|i| coarse[i]);
            std::array::from_fn(|k| (1.0 - u - v) * a[k] + u * b[k] + v * c[k])
        })
        .collect()
}

fn mean_edge(p: &[Vec3], faces: &[[usize; 3]]) -> f64 {
    let mut sum = 0.0;
    for f in faces {
        for e in 0..3 {
            sum += norm(sub(p[f[e]], p[f[(e + 1) % 3]]));
        }
    }
    sum / (3 * faces.len()) as f64
}

#[test]
fn zero_amplitude_is_plain_upsampling() {
    let cfg = SceneConfig {
        wrinkle: WrinkleSpec {
            amplitude: 0.0,
            ..WrinkleSpec::default()
        },
        ..small_scene(9)
    };
    let data = gen_sequence(&cfg).unwrap();
    let bindings: Vec<_> = data.correspondence.entries.iter().map(|b| (b.face, b.u, b.v)).collect();
    for frame in &data.frames {
        let up = upsample_oracle(&frame.coarse_gt, &data.coarse.faces, &bindings);
        for (a, b) in up.iter().zip(&frame.fine_gt) {
            assert!(norm(sub(*a, *b)) < 1e-10);
        }
    }
}

#[test]
fn same_seed_same_dataset() {
    let a = gen_sequence(&small_scene(9)).unwrap();
    let b = gen_sequence(&small_scene(9)).unwrap();
    assert_eq!(a.frames, b.frames);
    let c = gen_sequence(&SceneConfig { seed: 7, ..small_scene(9) }).unwrap();
    assert_ne!(a.frames[0].coarse_in, c.frames[0].coarse_in);
}

#[test]
fn default_scene_is_plausible() {
    let cfg = SceneConfig::default();
    let data = gen_sequence(&cfg).unwrap();
    assert_eq!(data.coarse.vertex_count(), 1089);
    assert_eq!(data.coarse.face_count(), 2048);
    assert_eq!(data.fine.face_count(), 18432);
    assert_eq!(data.len(), 120);
    for frame in &data.frames {
        let e = stretch_shear_energies(&data.fine, &frame.fine_gt).unwrap();
        assert!(e.mean[0] < 0.1 && e.mean[1] < 0.1, "{:?}", e.mean);
    }
}

#[test]
fn downsampling_picks_coincident_vertices() {
    let data = gen_sequence(&small_scene(7)).unwrap();
    let coarse_uv = &data.coarse.uv;
    let fine_uv = &data.fine.uv;
    for (i, &k) in data.coincident.iter().enumerate() {
        let d = ((coarse_uv[i][0] - fine_uv[k][0]).powi(2) + (coarse_uv[i][1] - fine_uv[k][1]).powi(2)).sqrt();
        assert!(d < 1e-12);
    }
    let mut r = rng(5);
    let random: Vec<Vec3> = (0..data.fine.vertex_count()).map(|_| r.random()).collect();
    let down = downsample_fine(&random, &data.coincident);
    for (i, &k) in data.coincident.iter().enumerate() {
        assert_eq!(down[i], random[k]);
    }
    let bindings: Vec<_> = data.correspondence.entries.iter().map(|b| (b.face, b.u, b.v)).collect();
    let coarse: Vec<Vec3> = (0..data.coarse.vertex_count()).map(|_| r.random()).collect();
    let up = upsample_oracle(&coarse, &data.coarse.faces, &bindings);
    assert_eq!(downsample_fine(&up, &data.coincident), coarse);
    for frame in &data.frames {
        assert_eq!(downsample_fine(&frame.fine_gt, &data.coincident), frame.coarse_gt);
    }
}

#[test]
fn body_sign_matches_containment() {
    let data = gen_sequence(&small_scene(9)).unwrap();
    let mut r = rng(11);
    let mut checked = 0;
    for frame in &data.frames {
        let Some(AnalyticBody::Sphere { center, radius }) = frame.body.analytic else {
            panic!("generated body has no analytic sphere");
        };
        let index = frame.body.index();
        for _ in 0..10_000 / data.len() + 1 {
            let x: Vec3 = std::array::from_fn(|k| center[k] + 2.0 * radius * (r.random::<f64>() - 0.5) * 2.0);
            let inside = norm(sub(x, center)) < radius;
            let analytic = frame.body.analytic.unwrap();
            assert_eq!(analytic.sdf(x).0 < 0.0, inside);
            assert_eq!(analytic.contains(x), inside);
            // tessellated proxy agrees outside a thin band around the surface
            if (norm(sub(x, center)) - radius).abs() > 0.02 * radius {
                let b = index.nearest(x);
                let side = dot(sub(x, frame.body.vertices[b]), frame.body.normals[b]);
                assert_eq!(side < 0.0, inside);
            }
            checked += 1;
        }
    }
    assert!(checked >= 10_000);
}

#[test]
fn input_offset_is_a_small_fraction_of_the_edges() {
    let data = gen_sequence(&small_scene(17)).unwrap();
    for frame in &data.frames {
        let offset = frame
            .coarse_in
            .iter()
            .zip(&frame.coarse_gt)
            .map(|(a, b)| norm(sub(*a, *b)))
            .sum::<f64>()
            / frame.coarse_gt.len() as f64;
        let ratio = offset / mean_edge(&frame.coarse_gt, &data.coarse.faces);
        assert!((0.005..0.1).contains(&ratio), "{ratio}");
    }
}

#[test]
fn dataset_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_sequence(&SceneConfig { layers: 2, ..small_scene(6) }).unwrap();
    save_dataset(&data, dir.path()).unwrap();
    assert!(dir.path().join("frame_00000/coarse_in.obj").exists());
    assert!(dir.path().join("frame_00005/body.obj").exists());
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.config, data.config);
    assert_eq!(back.coarse.layer_id, data.coarse.layer_id);
    assert_eq!(back.fine.layer_id, data.fine.layer_id);
    assert_eq!(back.coincident, data.coincident);
    assert_eq!(back.correspondence.entries, data.correspondence.entries);
    for (a, b) in data.frames.iter().zip(&back.frames) {
        assert_eq!(a.coarse_in, b.coarse_in);
        assert_eq!(a.coarse_gt, b.coarse_gt);
        assert_eq!(a.fine_gt, b.fine_gt);
        assert_eq!(a.body.vertices, b.body.vertices);
        let (Some(AnalyticBody::Sphere { center: c0, radius: r0 }), Some(AnalyticBody::Sphere { center: c1, radius: r1 })) =
            (a.body.analytic, b.body.analytic)
        else {
            panic!("analytic body lost");
        };
        assert!(norm(sub(c0, c1)) < 1e-12);
        assert_eq!(r0, r1);
    }
}

#[test]
fn sheet_inside_the_body_is_a_config_error() {
    let mut cfg = small_scene(9);
    cfg.drape.slope = 1.5;
    cfg.drape.width = 0.01;
    cfg.drape.width_swing = 0.0;
    assert!(matches!(gen_sequence(&cfg), Err(CoreError::Config(m)) if m.contains("inside the body")));
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        SceneConfig { subdivisions: 1, ..small_scene(5) },
        SceneConfig { frames: 2, ..small_scene(5) },
        SceneConfig { layers: 3, ..small_scene(5) },
        SceneConfig { spacing: 0.0, ..small_scene(5) },
        SceneConfig { noise: -1.0, ..small_scene(5) },
    ] {
        assert!(matches!(gen_sequence(&cfg), Err(CoreError::Config(_))));
    }
}

#[test]
fn fine_rest_mesh_is_the_uv_subdivision() {
    let data = gen_sequence(&SceneConfig { layers: 2, ..small_scene(7) }).unwrap();
    let sub3 = subdivide(&data.coarse, 3).unwrap().mesh;
    assert_eq!(sub3.face_count(), data.fine.face_count());
    let bindings: Vec<_> = data.correspondence.entries.iter().map(|b| (b.face, b.u, b.v)).collect();
    let rebuilt = upsample_oracle(&data.coarse.rest_positions, &data.coarse.faces, &bindings);
    for (a, b) in rebuilt.iter().zip(&data.fine.rest_positions) {
        assert!(norm(sub(*a, *b)) <= 1e-12);
    }
    for (a, b) in sub3.rest_positions.iter().zip(&data.fine.rest_positions) {
        assert!(norm(sub(*a, *b)) <= 1e-12);
    }
}
