mod common;

use common::{rng, small_config, small_scene};
use gdsr_core::collision::{CollisionConfig, CollisionResolver};
use gdsr_core::datagen::{gen_sequence, Dataset, SceneConfig};
use gdsr_core::featgraph::{FeatureConfig, FrameInputs, GraphTemplate};
use gdsr_core::losses::LambdaSchedule;
use gdsr_core::model::{FineRequest, GdsrModel};
use gdsr_core::pipeline::{
    evaluate, rollout, ssim, teacher_forced_graph, write_eval_csv, write_loss_csv, HistoryMode, TrainConfig, Trainer,
    SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};
use gdsr_core::CoreError;
use rand::Rng;

fn tiny_data() -> Dataset {
    gen_sequence(&SceneConfig {
        subdivisions: 2,
        ..small_scene(6)
    })
    .unwrap()
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        patches_per_step: 2,
        patch_resolution: 16,
        patch_size: 0.04,
        model: small_config(),
        ..TrainConfig::default()
    }
}

/// Direct 2D Gaussian-window SSIM, one window at a time.
fn ssim_oracle(a: &[f64], b: &[f64], w: usize, h: usize, ch: usize, mask: &[bool]) -> f64 {
    let r = SSIM_WINDOW / 2;
    let g = |d: f64| (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    let (c1, c2) = ((SSIM_K1).powi(2), (SSIM_K2).powi(2));
    let (mut total, mut count) = (0.0, 0);
    for c in 0..ch {
        for cy in r..h - r {
            for cx in r..w - r {
                if !mask[cy * w + cx] {
                    continue;
                }
                let (mut sw, mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for y in cy - r..=cy + r {
                    for x in cx - r..=cx + r {
                        let wt = g(x as f64 - cx as f64) * g(y as f64 - cy as f64);
                        let (p, q) = (a[(y * w + x) * ch + c], b[(y * w + x) * ch + c]);
                        sw += wt;
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (ma, mb) = (ma / sw, mb / sw);
                let va = saa / sw - ma * ma;
                let vb = sbb / sw - mb * mb;
                let cov = sab / sw - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

#[test]
fn learning_rate_halves_every_fifty_epochs() {
    let c = TrainConfig::default();
    assert_eq!(c.lr_init, 1e-4);
    assert_eq!(c.lr_at(0), 1e-4);
    assert_eq!(c.lr_at(25), 1e-4);
    assert_eq!(c.lr_at(49), 1e-4);
    assert_eq!(c.lr_at(50), 5e-5);
    assert_eq!(c.lr_at(75), 5e-5);
    assert_eq!(c.lr_at(100), 2.5e-5);
    assert_eq!(c.patches_per_step, 8);
    assert_eq!(c.batch_size, 1);
}

#[test]
fn lambda_schedule_values() {
    let s = LambdaSchedule::default();
    let w = s.at_epoch(0);
    assert_eq!((w.lambda_c, w.lambda_w), (1.9, 0.1));
    let w = s.at_epoch(20);
    assert_eq!((w.lambda_c, w.lambda_w), (1.5, 0.5));
    let w = s.at_epoch(200);
    assert_eq!((w.lambda_c, w.lambda_w), (1.0, 1.0));
}

#[test]
fn ssim_matches_direct_window_sums() {
    let (w, h, ch) = (23, 17, 3);
    let mut r = rng(2);
    let a: Vec<f64> = (0..w * h * ch).map(|_| r.random()).collect();
    let b: Vec<f64> = a.iter().map(|x| (x + 0.3 * (r.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect();
    let mask: Vec<bool> = (0..w * h).map(|_| r.random::<f64>() < 0.7).collect();
    let fast = ssim(&a, &b, w, h, ch, Some(&mask));
    assert!((fast - ssim_oracle(&a, &b, w, h, ch, &mask)).abs() < 1e-12);
    let all = vec![true; w * h];
    assert!((ssim(&a, &b, w, h, ch, None) - ssim_oracle(&a, &b, w, h, ch, &all)).abs() < 1e-12);
    assert!((ssim(&a, &a, w, h, ch, None) - 1.0).abs() < 1e-12);
}

#[test]
fn one_frame_rollout_is_forward_plus_collision() {
    let data = tiny_data();
    let model = GdsrModel::new(small_config(), &mut rng(1)).unwrap();
    let feat = FeatureConfig::default();
    let resolver = CollisionResolver::new(&data.coarse, &data.fine, CollisionConfig::default()).unwrap();
    let out = rollout(&model, &data, 1, &feat, Some(&resolver), HistoryMode::Autoregressive).unwrap();
    let f0 = &data.frames[0];
    let inputs = FrameInputs {
        c: &f0.coarse_in,
        c_prev: &f0.coarse_in,
        c_prev2: &f0.coarse_in,
        chat_prev: &f0.coarse_in,
        chat_prev2: &f0.coarse_in,
        body: &f0.body,
    };
    let graph = GraphTemplate::new(&data.coarse).unwrap().build(&inputs, &feat).unwrap();
    let request = FineRequest::all(&data.correspondence, &data.coarse.faces, data.coarse.vertex_count());
    let pred = model.predict(&graph, &f0.coarse_in, &data.coarse.faces, &request).unwrap();
    let fine = resolver.resolve(&pred.fine, &pred.chat, &f0.body.index()).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].chat, pred.chat);
    assert_eq!(out[0].fine, fine);
}

#[test]
fn teacher_forced_rollout_matches_per_frame_prediction() {
    let data = tiny_data();
    let model = GdsrModel::new(small_config(), &mut rng(3)).unwrap();
    let feat = FeatureConfig::default();
    let out = rollout(&model, &data, data.len(), &feat, None, HistoryMode::TeacherForced).unwrap();
    let template = GraphTemplate::new(&data.coarse).unwrap();
    let request = FineRequest::all(&data.correspondence, &data.coarse.faces, data.coarse.vertex_count());
    for (t, p) in out.iter().enumerate() {
        let graph = teacher_forced_graph(&template, &data, t, &feat).unwrap();
        let q = model.predict(&graph, &data.frames[t].coarse_in, &data.coarse.faces, &request).unwrap();
        assert_eq!(p.fine, q.fine, "frame {t}");
    }
}

#[test]
fn autoregressive_history_feeds_back_predictions() {
    let data = tiny_data();
    let model = GdsrModel::new(small_config(), &mut rng(3)).unwrap();
    let feat = FeatureConfig::default();
    let a = rollout(&model, &data, 3, &feat, None, HistoryMode::Autoregressive).unwrap();
    let b = rollout(&model, &data, 3, &feat, None, HistoryMode::TeacherForced).unwrap();
    assert_ne!(a[2].chat, b[2].chat);
    assert!(matches!(
        rollout(&model, &data, data.len() + 1, &feat, None, HistoryMode::Autoregressive),
        Err(CoreError::Config(_))
    ));
}

#[test]
fn ground_truth_scores_perfectly() {
    let data = tiny_data();
    let gt: Vec<_> = data.frames.iter().map(|f| f.fine_gt.clone()).collect();
    let report = evaluate(&data, &gt).unwrap();
    assert_eq!(report.rows.len(), data.len());
    for row in &report.rows {
        assert_eq!(row.l1, 0.0);
        assert!((row.ssim - 1.0).abs() < 1e-12);
        assert!(row.ssim_baseline < 1.0);
        assert!(row.l1_baseline > 0.0);
    }
    let mut buf = Vec::new();
    write_eval_csv(&report, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "frame,L1,E_u,E_v,E_uv,SSIM,SSIM_baseline");
    assert_eq!(lines.len(), data.len() + 2);
    assert!(lines.last().unwrap().starts_with("mean,"));
    assert!(evaluate(&data, &vec![gt[0].clone(); data.len() + 1]).is_err());
}

#[test]
fn training_is_deterministic_and_logged() {
    let data = tiny_data();
    let run = || {
        let mut trainer = Trainer::new(&data, tiny_train(2)).unwrap();
        trainer.run(|_, _| Ok(())).unwrap();
        (trainer.model.to_checkpoint().unwrap().tensors, trainer.log)
    };
    let (p, log) = run();
    let (q, log2) = run();
    assert_eq!(p, q);
    assert_eq!(log, log2);
    assert_eq!(log.len(), 2 * data.len());
    assert!(log.iter().all(|r| r.total.is_finite() && r.lr == 1e-4));
    let mut buf = Vec::new();
    write_loss_csv(&log, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("epoch,step,L_coa,L_wri,total,lr,lambda_c,lambda_w\n"));
    assert_eq!(text.lines().count(), log.len() + 1);
}

#[test]
fn nonfinite_loss_names_the_frame() {
    let mut data = tiny_data();
    // the last target only enters the loss of its own frame
    data.frames[5].coarse_gt[3][1] = f64::NAN;
    let mut trainer = Trainer::new(&data, tiny_train(1)).unwrap();
    assert!(trainer.step(0, 1).is_ok());
    match trainer.step(0, 5) {
        Err(CoreError::NonFinite { frame, .. }) => assert_eq!(frame, 5),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}
