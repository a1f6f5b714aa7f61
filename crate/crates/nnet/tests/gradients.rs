//! Finite-difference checks for every differentiable primitive and block.

use std::rc::Rc;

use gdsr_nnet::gradcheck::{check_gradients, sample_entries};
use gdsr_nnet::mlp::uniform_tensor;
use gdsr_nnet::{
    Activation, Bound, FieldLayout, LinearInput, Mlp, MlpSpec, ParamStore, SparseMatrix, Tape,
    Tensor, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
// central differences carry ~1e-11 round-off at unit loss scale
const FLOOR: f64 = 1e-6;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

fn all_entries(store: &ParamStore) -> Vec<(gdsr_nnet::ParamId, usize)> {
    store
        .ids()
        .flat_map(|id| (0..store.get(id).len()).map(move |i| (id, i)))
        .collect()
}

fn assert_check<F: Fn(&mut Tape, &Bound) -> Var>(store: &ParamStore, f: F) {
    let report = check_gradients(store, f, &all_entries(store), H, FLOOR).unwrap();
    let worst = report.worst().unwrap();
    assert!(
        report.max_rel_error() < TOL,
        "worst sample {worst:?}"
    );
}

/// Weighted sum so every output element contributes a distinct gradient.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Var {
    let shape = tape.shape(v).to_vec();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let w = uniform_tensor(&mut r, &shape, 1.0);
    let wv = tape.constant(w);
    let p = tape.mul(v, wv);
    tape.sum(p)
}

#[test]
fn square_at_three_has_gradient_six() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let y = tape.square(x);
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 6.0);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn elementwise_and_reduction_ops() {
    let mut r = rng();
    let mut s = ParamStore::new();
    let a = s.add("a", uniform_tensor(&mut r, &[4, 3], 1.0));
    let b = s.add("b", uniform_tensor(&mut r, &[4, 3], 1.0));
    assert_check(&s, |t, p| {
        let (a, b) = (p.var(a), p.var(b));
        let x = t.add(a, b);
        let y = t.sub(x, b);
        let z = t.mul(y, b);
        let q = t.square(z);
        let ab = t.abs(a);
        let m = t.add(q, ab);
        let sc = t.scale(m, 0.3);
        let r = t.relu(sc);
        let mean = t.mean(r);
        let ws = weighted_sum(t, z, 1);
        t.add(mean, ws)
    });
}

#[test]
fn structural_ops() {
    let mut r = rng();
    let mut s = ParamStore::new();
    let a = s.add("a", uniform_tensor(&mut r, &[5, 3], 1.0));
    let b = s.add("b", uniform_tensor(&mut r, &[5, 2], 1.0));
    let idx: Rc<[usize]> = vec![4, 0, 0, 2, 3, 1, 4].into();
    let sp = Rc::new(SparseMatrix::from_rows(
        5,
        &[vec![(0, 0.5), (3, -1.0)], vec![], vec![(4, 2.0), (4, 1.0), (1, 0.25)]],
    ));
    assert_check(&s, |t, p| {
        let (a, b) = (p.var(a), p.var(b));
        let g = t.gather_rows(a, idx.clone());
        let sc = t.scatter_add_rows(g, idx.clone(), 6);
        let c = t.concat_cols(&[a, b]);
        let sl = t.slice_cols(c, 1, 4);
        let sp = t.sparse(a, sp.clone());
        let rs = t.reshape(sl, &[3, 5]);
        let parts = [
            weighted_sum(t, sc, 2),
            weighted_sum(t, rs, 3),
            weighted_sum(t, sp, 4),
        ];
        let x = t.add(parts[0], parts[1]);
        t.add(x, parts[2])
    });
}

#[test]
fn geometric_row_ops() {
    let mut r = rng();
    let mut s = ParamStore::new();
    let a = s.add("a", uniform_tensor(&mut r, &[6, 3], 1.0));
    let b = s.add("b", uniform_tensor(&mut r, &[6, 3], 1.0));
    let mats: Rc<[[f64; 9]]> = (0..6)
        .map(|i| {
            let c = (i as f64 * 0.7).cos();
            let sn = (i as f64 * 0.7).sin();
            [c, -sn, 0.0, sn, c, 0.0, 0.0, 0.0, 1.0]
        })
        .collect();
    assert_check(&s, |t, p| {
        let (a, b) = (p.var(a), p.var(b));
        let c = t.rows_cross(a, b);
        let d = t.rows_dot(a, b);
        let n = t.rows_norm(c);
        let u = t.rows_normalize(b, [0.0, 0.0, 1.0]);
        let m = t.mul_rows(u, d);
        let ang = t.atan2(d, n);
        let rot = t.rotate_rows(m, mats.clone());
        let parts = [weighted_sum(t, rot, 5), weighted_sum(t, ang, 6)];
        t.add(parts[0], parts[1])
    });
}

#[test]
fn matmul_and_gathered_linear() {
    let mut r = rng();
    let mut s = ParamStore::new();
    let x = s.add("x", uniform_tensor(&mut r, &[4, 3], 1.0));
    let y = s.add("y", uniform_tensor(&mut r, &[3, 2], 1.0));
    let w = s.add("w", uniform_tensor(&mut r, &[8, 5], 1.0));
    let bias = s.add("b", uniform_tensor(&mut r, &[1, 5], 0.5));
    let idx: Rc<[usize]> = vec![0, 3, 3, 1, 2, 0].into();
    let idx2: Rc<[usize]> = vec![1, 1, 0, 2, 3, 2].into();
    assert_check(&s, |t, p| {
        let mm = t.matmul(p.var(x), p.var(y));
        let gy = t.gather_rows(mm, idx2.clone());
        let inputs = [
            LinearInput::gathered(p.var(x), idx.clone()),
            LinearInput::gathered(p.var(x), idx2.clone()),
            LinearInput::dense(gy),
        ];
        let out = t.multi_linear(&inputs, p.var(w), Some(p.var(bias)), Activation::Relu);
        weighted_sum(t, out, 8)
    });
}

#[test]
fn relu_mlp_block() {
    let mut r = rng();
    let mut s = ParamStore::new();
    let mlp = Mlp::new(&mut s, "m", MlpSpec::relu(&[5, 16, 16, 4]), &mut r).unwrap();
    // non-zero biases so hidden units are not all aligned with the origin
    for id in s.ids().collect::<Vec<_>>() {
        let shape = s.get(id).shape().to_vec();
        if shape[0] == 1 {
            *s.get_mut(id) = uniform_tensor(&mut r, &shape, 0.3);
        }
    }
    let x = uniform_tensor(&mut r, &[7, 5], 1.0);
    let entries = sample_entries(&s, 40, &mut r);
    let report = check_gradients(
        &s,
        |t, p| {
            let xv = t.constant(x.clone());
            let y = mlp.forward(t, p, xv).unwrap();
            weighted_sum(t, y, 9)
        },
        &entries,
        H,
        FLOOR,
    )
    .unwrap();
    assert!(report.max_rel_error() < TOL, "{:?}", report.worst());
}

#[test]
fn complex_wire_mlp_block() {
    let mut r = rng();
    let mut s = ParamStore::new();
    let mlp = Mlp::new(&mut s, "w", MlpSpec::wire(&[3, 8, 8, 3], 5.0, 10.0), &mut r).unwrap();
    let x = uniform_tensor(&mut r, &[5, 3], 0.5);
    assert_check(&s, |t, p| {
        let xv = t.constant(x.clone());
        let y = mlp.forward(t, p, xv).unwrap();
        weighted_sum(t, y, 10)
    });
}

#[test]
fn per_row_wire_field() {
    let mut r = rng();
    let layout = Rc::new(FieldLayout::new(vec![3, 6, 6, 6, 6, 3], 5.0, 10.0).unwrap());
    let mut s = ParamStore::new();
    let w = s.add("fields", uniform_tensor(&mut r, &[3, layout.param_count()], 0.12));
    let inputs = Rc::new(Tensor::from_rows(&[
        [1.0, 0.0, 0.0],
        [0.2, 0.5, 0.3],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [0.0, 0.9, 0.1],
    ]));
    let field_of: Rc<[usize]> = vec![2, 0, 2, 1].into();
    assert_check(&s, |t, p| {
        let y = t.wire_field(p.var(w), inputs.clone(), field_of.clone(), layout.clone());
        weighted_sum(t, y, 11)
    });
}
