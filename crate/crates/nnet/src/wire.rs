//! Complex Gabor wavelet (WIRE) activation and complex-valued layers.
//!
//! Complex tensors are stored as interleaved `(re, im)` pairs along the
//! column axis, so a `[n, m]` complex matrix occupies `[n, 2m]` reals.
//! Gradients are taken with respect to the real and imaginary parts
//! independently, which is all a real-valued loss needs.

use std::rc::Rc;

use crate::error::{NnetError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `ψ(z) = exp(i·ω0·z) · exp(−|α0·z|²)` for `z = re + i·im`.
pub fn wire_activate(re: f64, im: f64, omega0: f64, alpha0: f64) -> (f64, f64) {
    let envelope = (-omega0 * im - alpha0 * alpha0 * (re * re + im * im)).exp();
    let phase = omega0 * re;
    (envelope * phase.cos(), envelope * phase.sin())
}

/// Value and real Jacobian `[[∂re/∂a, ∂re/∂b], [∂im/∂a, ∂im/∂b]]` of ψ at `a + ib`.
fn wire_with_jacobian(a: f64, b: f64, omega0: f64, alpha0: f64) -> ((f64, f64), [[f64; 2]; 2]) {
    let (re, im) = wire_activate(a, b, omega0, alpha0);
    let k = 2.0 * alpha0 * alpha0;
    let db = -omega0 - k * b;
    (
        (re, im),
        [[-k * a * re - omega0 * im, db * re], [-k * a * im + omega0 * re, db * im]],
    )
}

/// Maps `(g_re, g_im)` of the activation output to the gradient of its input.
fn wire_backward(a: f64, b: f64, g_re: f64, g_im: f64, omega0: f64, alpha0: f64) -> (f64, f64) {
    let (_, j) = wire_with_jacobian(a, b, omega0, alpha0);
    (
        g_re * j[0][0] + g_im * j[1][0],
        g_re * j[0][1] + g_im * j[1][1],
    )
}

/// Parameter layout of a complex WIRE MLP whose parameters arrive as one
/// flat vector (as produced by a hyper-network).
///
/// Layer `l` maps width `widths[l]` to `widths[l+1]`: a complex weight block
/// `[in, out]` (row-major, interleaved) followed by a complex bias `[out]`.
/// Inputs are real; hidden layers are WIRE-activated; the output is the real
/// part of the final affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLayout {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    omega0: f64,
    alpha0: f64,
}

impl FieldLayout {
    pub fn new(widths: Vec<usize>, omega0: f64, alpha0: f64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnetError::InvalidSpec(format!(
                "field widths {widths:?} need at least two positive entries"
            )));
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut acc = 0;
        for w in widths.windows(2) {
            offsets.push(acc);
            acc += 2 * (w[0] * w[1] + w[1]);
        }
        offsets.push(acc);
        Ok(Self {
            widths,
            offsets,
            omega0,
            alpha0,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Total real scalars: `Σ_l 2·(in_l·out_l + out_l)`.
    pub fn param_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `(weight_offset, bias_offset)` of layer `l` inside the flat vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let w = self.offsets[l];
        (w, w + 2 * self.widths[l] * self.widths[l + 1])
    }

    /// Random flat parameter vector: Glorot-uniform weights scaled by `1/ω0`, zero biases.
    pub fn init_params<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        for l in 0..self.layers() {
            let (wo, bo) = self.layer_offsets(l);
            let bound = crate::mlp::glorot_bound(self.widths[l], self.widths[l + 1]) / self.omega0;
            for x in &mut p[wo..bo] {
                *x = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    /// Pre-activations of every layer for one input (complex, interleaved).
    fn forward_trace(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace: Vec<Vec<f64>> = Vec::with_capacity(self.layers());
        let mut act: Vec<f64> = x.iter().flat_map(|&v| [v, 0.0]).collect();
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (wo, bo) = self.layer_offsets(l);
            let mut z = params[bo..bo + 2 * n_out].to_vec();
            for i in 0..n_in {
                let (ar, ai) = (act[2 * i], act[2 * i + 1]);
                if ar == 0.0 && ai == 0.0 {
                    continue;
                }
                let row = &params[wo + 2 * i * n_out..wo + 2 * (i + 1) * n_out];
                for j in 0..n_out {
                    let (wr, wi) = (row[2 * j], row[2 * j + 1]);
                    z[2 * j] += ar * wr - ai * wi;
                    z[2 * j + 1] += ar * wi + ai * wr;
                }
            }
            if l + 1 < self.layers() {
                act = z
                    .chunks(2)
                    .flat_map(|c| {
                        let (r, i) = wire_activate(c[0], c[1], self.omega0, self.alpha0);
                        [r, i]
                    })
                    .collect();
            }
            trace.push(z);
        }
        trace
    }

    /// Evaluates the field at one real input.
    pub fn eval(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(x.len(), self.input_width());
        let trace = self.forward_trace(params, x);
        trace.last().unwrap().chunks(2).map(|c| c[0]).collect()
    }

    /// Accumulates `∂(dout·y)/∂params` into `dparams` for one input.
    pub fn backward(&self, params: &[f64], x: &[f64], dout: &[f64], dparams: &mut [f64]) {
        let trace = self.forward_trace(params, x);
        let layers = self.layers();
        // gradient w.r.t. the complex pre-activation of the current layer
        let mut gz: Vec<f64> = dout.iter().flat_map(|&g| [g, 0.0]).collect();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (wo, bo) = self.layer_offsets(l);
            let input: Vec<f64> = if l == 0 {
                x.iter().flat_map(|&v| [v, 0.0]).collect()
            } else {
                trace[l - 1]
                    .chunks(2)
                    .flat_map(|c| {
                        let (r, i) = wire_activate(c[0], c[1], self.omega0, self.alpha0);
                        [r, i]
                    })
                    .collect()
            };
            for (d, g) in dparams[bo..bo + 2 * n_out].iter_mut().zip(&gz) {
                *d += g;
            }
            let mut ga = vec![0.0; 2 * n_in];
            for i in 0..n_in {
                let (ar, ai) = (input[2 * i], input[2 * i + 1]);
                let base = wo + 2 * i * n_out;
                let mut sr = 0.0;
                let mut si = 0.0;
                for j in 0..n_out {
                    let (gr, gi) = (gz[2 * j], gz[2 * j + 1]);
                    let (wr, wi) = (params[base + 2 * j], params[base + 2 * j + 1]);
                    dparams[base + 2 * j] += gr * ar + gi * ai;
                    dparams[base + 2 * j + 1] += -gr * ai + gi * ar;
                    sr += gr * wr + gi * wi;
                    si += -gr * wi + gi * wr;
                }
                ga[2 * i] = sr;
                ga[2 * i + 1] = si;
            }
            if l > 0 {
                let pre = &trace[l - 1];
                gz = (0..n_in)
                    .flat_map(|i| {
                        let (r, im) = wire_backward(
                            pre[2 * i],
                            pre[2 * i + 1],
                            ga[2 * i],
                            ga[2 * i + 1],
                            self.omega0,
                            self.alpha0,
                        );
                        [r, im]
                    })
                    .collect();
            }
        }
    }
}

impl Tape {
    /// Element-wise ψ over an interleaved complex tensor.
    pub fn wire(&mut self, z: Var, omega0: f64, alpha0: f64) -> Var {
        let src = self.value(z);
        assert_eq!(src.cols() % 2, 0, "wire: interleaved complex input");
        let data = src
            .data()
            .chunks(2)
            .flat_map(|c| {
                let (r, i) = wire_activate(c[0], c[1], omega0, alpha0);
                [r, i]
            })
            .collect();
        let value = Tensor::new(src.shape().to_vec(), data).unwrap();
        self.custom(
            &[z],
            value,
            Box::new(move |ctx| {
                let d = ctx
                    .inputs[0]
                    .data()
                    .chunks(2)
                    .zip(ctx.grad.data().chunks(2))
                    .flat_map(|(zc, g)| {
                        let (r, i) = wire_backward(zc[0], zc[1], g[0], g[1], omega0, alpha0);
                        [r, i]
                    })
                    .collect();
                vec![Some(Tensor::new(ctx.inputs[0].shape().to_vec(), d).unwrap())]
            }),
        )
    }

    /// Real part of an interleaved complex tensor, `[n, 2m] → [n, m]`.
    pub fn real_part(&mut self, z: Var) -> Var {
        let src = self.value(z);
        let (n, m) = (src.rows(), src.cols() / 2);
        let data = src.data().chunks(2).map(|c| c[0]).collect();
        let value = Tensor::matrix(n, m, data);
        self.custom(
            &[z],
            value,
            Box::new(move |ctx| {
                let d = ctx.grad.data().iter().flat_map(|&g| [g, 0.0]).collect();
                vec![Some(Tensor::matrix(n, 2 * m, d))]
            }),
        )
    }

    /// Complex affine layer `z = x·W + b`. `w` is `[k, 2m]`, `b` is `[1, 2m]`;
    /// `x` is `[n, k]` real when `real_input`, else `[n, 2k]` interleaved.
    pub fn complex_linear(&mut self, x: Var, w: Var, b: Var, real_input: bool) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let k = wv.rows();
        let m = wv.cols() / 2;
        let n = xv.rows();
        let x_complex: Vec<f64> = if real_input {
            assert_eq!(xv.cols(), k, "complex_linear: real input width");
            xv.data().iter().flat_map(|&v| [v, 0.0]).collect()
        } else {
            assert_eq!(xv.cols(), 2 * k, "complex_linear: complex input width");
            xv.data().to_vec()
        };
        assert_eq!(bv.len(), 2 * m, "complex_linear: bias width");
        let mut out = vec![0.0; n * 2 * m];
        for r in 0..n {
            let dst = &mut out[r * 2 * m..(r + 1) * 2 * m];
            dst.copy_from_slice(bv.data());
            for i in 0..k {
                let (ar, ai) = (x_complex[r * 2 * k + 2 * i], x_complex[r * 2 * k + 2 * i + 1]);
                let row = wv.row(i);
                for j in 0..m {
                    let (wr, wi) = (row[2 * j], row[2 * j + 1]);
                    dst[2 * j] += ar * wr - ai * wi;
                    dst[2 * j + 1] += ar * wi + ai * wr;
                }
            }
        }
        let value = Tensor::matrix(n, 2 * m, out);
        let x_complex = Rc::new(x_complex);
        self.custom(
            &[x, w, b],
            value,
            Box::new(move |ctx| {
                let (wt, g) = (ctx.inputs[1], ctx.grad.data());
                let mut dx = vec![0.0; n * 2 * k];
                let mut dw = vec![0.0; k * 2 * m];
                let mut db = vec![0.0; 2 * m];
                for r in 0..n {
                    let gr_row = &g[r * 2 * m..(r + 1) * 2 * m];
                    for (d, v) in db.iter_mut().zip(gr_row) {
                        *d += v;
                    }
                    for i in 0..k {
                        let (ar, ai) =
                            (x_complex[r * 2 * k + 2 * i], x_complex[r * 2 * k + 2 * i + 1]);
                        let row = wt.row(i);
                        let (mut sr, mut si) = (0.0, 0.0);
                        for j in 0..m {
                            let (gr, gi) = (gr_row[2 * j], gr_row[2 * j + 1]);
                            let (wr, wi) = (row[2 * j], row[2 * j + 1]);
                            dw[i * 2 * m + 2 * j] += gr * ar + gi * ai;
                            dw[i * 2 * m + 2 * j + 1] += -gr * ai + gi * ar;
                            sr += gr * wr + gi * wi;
                            si += -gr * wi + gi * wr;
                        }
                        dx[r * 2 * k + 2 * i] = sr;
                        dx[r * 2 * k + 2 * i + 1] = si;
                    }
                }
                let gx = ctx.needs[0].then(|| {
                    if real_input {
                        Tensor::matrix(n, k, dx.chunks(2).map(|c| c[0]).collect())
                    } else {
                        Tensor::matrix(n, 2 * k, dx)
                    }
                });
                vec![
                    gx,
                    ctx.needs[1].then(|| Tensor::matrix(k, 2 * m, dw)),
                    ctx.needs[2].then(|| Tensor::matrix(1, 2 * m, db)),
                ]
            }),
        )
    }

    /// Evaluates per-row WIRE fields: sample `r` uses the parameter row
    /// `field_of[r]` of `weights` (`[F, param_count]`) at input `inputs[r]`.
    pub fn wire_field(
        &mut self,
        weights: Var,
        inputs: Rc<Tensor>,
        field_of: Rc<[usize]>,
        layout: Rc<FieldLayout>,
    ) -> Var {
        let wv = self.value(weights);
        assert_eq!(wv.cols(), layout.param_count(), "wire_field: parameter width");
        assert_eq!(inputs.cols(), layout.input_width(), "wire_field: input width");
        assert_eq!(inputs.rows(), field_of.len(), "wire_field: one field per sample");
        let out_w = layout.output_width();
        let mut out = Vec::with_capacity(field_of.len() * out_w);
        for (r, &f) in field_of.iter().enumerate() {
            out.extend(layout.eval(wv.row(f), inputs.row(r)));
        }
        let value = Tensor::matrix(field_of.len(), out_w, out);
        self.custom(
            &[weights],
            value,
            Box::new(move |ctx| {
                let wt = ctx.inputs[0];
                let p = layout.param_count();
                let mut d = vec![0.0; wt.len()];
                for (r, &f) in field_of.iter().enumerate() {
                    let g = ctx.grad.row(r);
                    if g.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    layout.backward(wt.row(f), inputs.row(r), g, &mut d[f * p..(f + 1) * p]);
                }
                vec![Some(Tensor::new(wt.shape().to_vec(), d).unwrap())]
            }),
        )
    }
}
