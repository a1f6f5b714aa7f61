//! Differentiable primitives recorded on a [`Tape`].
//!
//! All values are treated as 2-D `[rows, cols]` matrices. Index arrays are
//! shared through `Rc` so closures can hold them without copying.

use std::rc::Rc;

use crate::tape::{BackwardCtx, Tape, Var};
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

/// One operand of [`Tape::multi_linear`]; `index` gathers rows before the product.
#[derive(Clone)]
pub struct LinearInput {
    pub var: Var,
    pub index: Option<Rc<[usize]>>,
}

impl LinearInput {
    pub fn dense(var: Var) -> Self {
        Self { var, index: None }
    }

    pub fn gathered(var: Var, index: Rc<[usize]>) -> Self {
        Self {
            var,
            index: Some(index),
        }
    }
}

/// Constant sparse matrix in CSR form; `apply` maps `[cols, w]` to `[rows, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, weight)` lists.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for &(c, w) in row {
                assert!(c < cols, "sparse column {c} out of range {cols}");
                col_idx.push(c);
                vals.push(w);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn apply(&self, x: &[f64], width: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * width];
        for r in 0..self.rows {
            let dst = &mut out[r * width..(r + 1) * width];
            for (c, w) in self.row(r) {
                let src = &x[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    pub fn apply_transpose(&self, g: &[f64], width: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cols * width];
        for r in 0..self.rows {
            let src = &g[r * width..(r + 1) * width];
            for (c, w) in self.row(r) {
                let dst = &mut out[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

fn same_shape(ctx: &BackwardCtx<'_>, data: Vec<f64>) -> Tensor {
    Tensor::new(ctx.output.shape().to_vec(), data).expect("gradient shape")
}

fn like(t: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(t.shape().to_vec(), data).expect("gradient shape")
}

fn scatter_rows(src: &[f64], idx: &[usize], n: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * width];
    for (r, &i) in idx.iter().enumerate() {
        let dst = &mut out[i * width..(i + 1) * width];
        for (d, s) in dst.iter_mut().zip(&src[r * width..(r + 1) * width]) {
            *d += s;
        }
    }
    out
}

fn gather(src: &[f64], idx: &[usize], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
    out
}

impl Tape {
    fn binary_check(&self, op: &str, a: Var, b: Var) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{op}: operand shapes differ"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_check("add", a, b);
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = like(va, data);
        self.custom(
            &[a, b],
            value,
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_check("sub", a, b);
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let value = like(va, data);
        self.custom(
            &[a, b],
            value,
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))]),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_check("mul", a, b);
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = like(va, data);
        self.custom(
            &[a, b],
            value,
            Box::new(|ctx| {
                let (x, y, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let ga = ctx.needs[0].then(|| {
                    like(x, g.data().iter().zip(y.data()).map(|(g, y)| g * y).collect())
                });
                let gb = ctx.needs[1].then(|| {
                    like(y, g.data().iter().zip(x.data()).map(|(g, x)| g * x).collect())
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.custom(&[a], value, Box::new(move |ctx| vec![Some(ctx.grad.map(|g| g * s))]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.custom(
            &[a],
            value,
            Box::new(|ctx| {
                let data = ctx
                    .grad
                    .data()
                    .iter()
                    .zip(ctx.output.data())
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![Some(same_shape(ctx, data))]
            }),
        )
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.custom(
            &[a],
            value,
            Box::new(|ctx| {
                let data = ctx
                    .grad
                    .data()
                    .iter()
                    .zip(ctx.inputs[0].data())
                    .map(|(g, x)| {
                        if *x > 0.0 {
                            *g
                        } else if *x < 0.0 {
                            -*g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![Some(same_shape(ctx, data))]
            }),
        )
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.custom(
            &[a],
            value,
            Box::new(|ctx| {
                let data = ctx
                    .grad
                    .data()
                    .iter()
                    .zip(ctx.inputs[0].data())
                    .map(|(g, x)| 2.0 * g * x)
                    .collect();
                vec![Some(same_shape(ctx, data))]
            }),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.custom(
            &[a],
            value,
            Box::new(|ctx| {
                let g = ctx.grad.item();
                vec![Some(ctx.inputs[0].map(|_| g))]
            }),
        )
    }

    /// Mean over all elements; an empty input yields 0 with no gradient flow.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        if n == 0 {
            return self.constant(Tensor::scalar(0.0));
        }
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let src = self.value(a);
        let value = Tensor::new(shape.to_vec(), src.data().to_vec()).expect("reshape size");
        self.custom(
            &[a],
            value,
            Box::new(|ctx| vec![Some(like(ctx.inputs[0], ctx.grad.data().to_vec()))]),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        assert_eq!(k, vb.rows(), "matmul inner dimensions");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, &mut out, false);
        let value = Tensor::matrix(m, n, out);
        self.custom(
            &[a, b],
            value,
            Box::new(move |ctx| {
                let (x, w, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let ga = ctx.needs[0].then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, w.data(), true, &mut d, false);
                    like(x, d)
                });
                let gb = ctx.needs[1].then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, x.data(), true, g.data(), false, &mut d, false);
                    like(w, d)
                });
                vec![ga, gb]
            }),
        )
    }

    /// `act(Σ_i gather(x_i)·W_i + b)` where `W_i` are consecutive row blocks of `w`.
    ///
    /// Equivalent to concatenating the (gathered) inputs column-wise and
    /// applying one affine layer, but the products of gathered inputs are
    /// formed once per source row instead of once per gathered row.
    pub fn multi_linear(
        &mut self,
        inputs: &[LinearInput],
        w: Var,
        b: Option<Var>,
        act: Activation,
    ) -> Var {
        let wv = self.value(w);
        let (k_total, m) = (wv.rows(), wv.cols());
        let widths: Vec<usize> = inputs.iter().map(|i| self.value(i.var).cols()).collect();
        assert_eq!(
            widths.iter().sum::<usize>(),
            k_total,
            "multi_linear: input widths vs weight rows"
        );
        let out_rows = match &inputs[0].index {
            Some(idx) => idx.len(),
            None => self.value(inputs[0].var).rows(),
        };
        let mut out = vec![0.0; out_rows * m];
        let mut offset = 0;
        for (inp, &k) in inputs.iter().zip(&widths) {
            let x = self.value(inp.var);
            let w_block = &wv.data()[offset * m..(offset + k) * m];
            match &inp.index {
                None => {
                    assert_eq!(x.rows(), out_rows, "multi_linear: row count");
                    gemm(out_rows, k, m, x.data(), false, w_block, false, &mut out, true);
                }
                Some(idx) => {
                    assert_eq!(idx.len(), out_rows, "multi_linear: index length");
                    let n = x.rows();
                    let mut tmp = vec![0.0; n * m];
                    gemm(n, k, m, x.data(), false, w_block, false, &mut tmp, false);
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = &mut out[r * m..(r + 1) * m];
                        for (d, s) in dst.iter_mut().zip(&tmp[i * m..(i + 1) * m]) {
                            *d += s;
                        }
                    }
                }
            }
            offset += k;
        }
        if let Some(b) = b {
            let bv = self.value(b);
            assert_eq!(bv.len(), m, "multi_linear: bias width");
            for row in out.chunks_mut(m) {
                for (o, bb) in row.iter_mut().zip(bv.data()) {
                    *o += bb;
                }
            }
        }
        if act == Activation::Relu {
            out.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        let value = Tensor::matrix(out_rows, m, out);
        let mut parents: Vec<Var> = inputs.iter().map(|i| i.var).collect();
        parents.push(w);
        if let Some(b) = b {
            parents.push(b);
        }
        let indices: Vec<Option<Rc<[usize]>>> = inputs.iter().map(|i| i.index.clone()).collect();
        let has_bias = b.is_some();
        self.custom(
            &parents,
            value,
            Box::new(move |ctx| {
                let n_in = indices.len();
                let g: Vec<f64> = match act {
                    Activation::None => ctx.grad.data().to_vec(),
                    Activation::Relu => ctx
                        .grad
                        .data()
                        .iter()
                        .zip(ctx.output.data())
                        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                        .collect(),
                };
                let wt = ctx.inputs[n_in];
                let mut result: Vec<Option<Tensor>> = Vec::with_capacity(ctx.inputs.len());
                let mut dw = ctx.needs[n_in].then(|| vec![0.0; k_total * m]);
                let mut offset = 0;
                for (j, idx) in indices.iter().enumerate() {
                    let x = ctx.inputs[j];
                    let (n, k) = (x.rows(), x.cols());
                    let w_block = &wt.data()[offset * m..(offset + k) * m];
                    let scattered;
                    let gsrc: &[f64] = match idx {
                        None => &g,
                        Some(idx) => {
                            scattered = scatter_rows(&g, idx, n, m);
                            &scattered
                        }
                    };
                    if let Some(dw) = dw.as_mut() {
                        gemm(
                            k,
                            n,
                            m,
                            x.data(),
                            true,
                            gsrc,
                            false,
                            &mut dw[offset * m..(offset + k) * m],
                            false,
                        );
                    }
                    result.push(ctx.needs[j].then(|| {
                        let mut dx = vec![0.0; n * k];
                        gemm(n, m, k, gsrc, false, w_block, true, &mut dx, false);
                        like(x, dx)
                    }));
                    offset += k;
                }
                result.push(dw.map(|d| like(wt, d)));
                if has_bias {
                    result.push(ctx.needs[n_in + 1].then(|| {
                        let mut db = vec![0.0; m];
                        for row in g.chunks(m) {
                            for (d, x) in db.iter_mut().zip(row) {
                                *d += x;
                            }
                        }
                        like(ctx.inputs[n_in + 1], db)
                    }));
                }
                result
            }),
        )
    }

    /// Single affine layer `act(x·W + b)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>, act: Activation) -> Var {
        self.multi_linear(&[LinearInput::dense(x)], w, b, act)
    }

    pub fn gather_rows(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let src = self.value(a);
        let (n, width) = (src.rows(), src.cols());
        assert!(idx.iter().all(|&i| i < n), "gather_rows: index out of range");
        let value = Tensor::matrix(idx.len(), width, gather(src.data(), &idx, width));
        self.custom(
            &[a],
            value,
            Box::new(move |ctx| {
                vec![Some(like(
                    ctx.inputs[0],
                    scatter_rows(ctx.grad.data(), &idx, n, width),
                ))]
            }),
        )
    }

    /// `out[idx[r]] += a[r]` into `n` zero rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Rc<[usize]>, n: usize) -> Var {
        let src = self.value(a);
        let width = src.cols();
        assert_eq!(src.rows(), idx.len(), "scatter_add_rows: index length");
        assert!(idx.iter().all(|&i| i < n), "scatter_add_rows: index out of range");
        let value = Tensor::matrix(n, width, scatter_rows(src.data(), &idx, n, width));
        self.custom(
            &[a],
            value,
            Box::new(move |ctx| {
                vec![Some(like(
                    ctx.inputs[0],
                    gather(ctx.grad.data(), &idx, width),
                ))]
            }),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let v = self.value(*p);
                assert_eq!(v.rows(), rows, "concat_cols: row count");
                out.extend_from_slice(v.row(r));
            }
        }
        let value = Tensor::matrix(rows, total, out);
        self.custom(
            parts,
            value,
            Box::new(move |ctx| {
                let mut offset = 0;
                widths
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| {
                        let grads = ctx.needs[j].then(|| {
                            let mut d = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                d.extend_from_slice(&ctx.grad.row(r)[offset..offset + w]);
                            }
                            like(ctx.inputs[j], d)
                        });
                        offset += w;
                        grads
                    })
                    .collect()
            }),
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let src = self.value(a);
        let (rows, cols) = (src.rows(), src.cols());
        assert!(start <= end && end <= cols, "slice_cols: range");
        let width = end - start;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&src.row(r)[start..end]);
        }
        let value = Tensor::matrix(rows, width, out);
        self.custom(
            &[a],
            value,
            Box::new(move |ctx| {
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + end].copy_from_slice(ctx.grad.row(r));
                }
                vec![Some(like(ctx.inputs[0], d))]
            }),
        )
    }

    /// Applies a constant sparse row operator: `out = S · a`.
    pub fn sparse(&mut self, a: Var, s: Rc<SparseMatrix>) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows(), s.cols(), "sparse: operand rows");
        let width = src.cols();
        let value = Tensor::matrix(s.rows(), width, s.apply(src.data(), width));
        self.custom(
            &[a],
            value,
            Box::new(move |ctx| {
                vec![Some(like(
                    ctx.inputs[0],
                    s.apply_transpose(ctx.grad.data(), width),
                ))]
            }),
        )
    }

    /// Row-wise cross product of two `[n, 3]` operands.
    pub fn rows_cross(&mut self, a: Var, b: Var) -> Var {
        self.binary_check("rows_cross", a, b);
        assert_eq!(self.value(a).cols(), 3, "rows_cross needs 3 columns");
        let data = self
            .value(a)
            .data()
            .chunks(3)
            .zip(self.value(b).data().chunks(3))
            .flat_map(|(x, y)| cross(x, y))
            .collect();
        let value = like(self.value(a), data);
        self.custom(
            &[a, b],
            value,
            Box::new(|ctx| {
                let (x, y, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                // d(x×y) with upstream g: dx = y×g, dy = g×x
                let ga = ctx.needs[0].then(|| {
                    like(
                        x,
                        y.data()
                            .chunks(3)
                            .zip(g.data().chunks(3))
                            .flat_map(|(y, g)| cross(y, g))
                            .collect(),
                    )
                });
                let gb = ctx.needs[1].then(|| {
                    like(
                        y,
                        g.data()
                            .chunks(3)
                            .zip(x.data().chunks(3))
                            .flat_map(|(g, x)| cross(g, x))
                            .collect(),
                    )
                });
                vec![ga, gb]
            }),
        )
    }

    /// Row-wise dot product, `[n, c] × [n, c] → [n, 1]`.
    pub fn rows_dot(&mut self, a: Var, b: Var) -> Var {
        self.binary_check("rows_dot", a, b);
        let c = self.value(a).cols();
        let n = self.value(a).rows();
        let data = self
            .value(a)
            .data()
            .chunks(c.max(1))
            .zip(self.value(b).data().chunks(c.max(1)))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        let value = Tensor::matrix(n, 1, data);
        self.custom(
            &[a, b],
            value,
            Box::new(move |ctx| {
                let (x, y, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad.data());
                let scaled = |src: &Tensor| {
                    like(
                        src,
                        src.data()
                            .chunks(c)
                            .zip(g)
                            .flat_map(|(row, gi)| row.iter().map(move |v| v * gi))
                            .collect(),
                    )
                };
                vec![
                    ctx.needs[0].then(|| scaled(y)),
                    ctx.needs[1].then(|| scaled(x)),
                ]
            }),
        )
    }

    /// Row-wise Euclidean norm, `[n, c] → [n, 1]`; the gradient at 0 is 0.
    pub fn rows_norm(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let c = src.cols();
        let data = src
            .data()
            .chunks(c)
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let value = Tensor::matrix(src.rows(), 1, data);
        self.custom(
            &[a],
            value,
            Box::new(move |ctx| {
                let (x, y, g) = (ctx.inputs[0], ctx.output.data(), ctx.grad.data());
                let d = x
                    .data()
                    .chunks(c)
                    .zip(y.iter().zip(g))
                    .flat_map(|(row, (n, gi))| {
                        let s = if *n > 0.0 { gi / n } else { 0.0 };
                        row.iter().map(move |v| v * s)
                    })
                    .collect();
                vec![Some(like(x, d))]
            }),
        )
    }

    /// Row-wise normalization of `[n, 3]` vectors. Rows with norm below
    /// `1e-300` become `fallback` and pass no gradient.
    pub fn rows_normalize(&mut self, a: Var, fallback: [f64; 3]) -> Var {
        let src = self.value(a);
        assert_eq!(src.cols(), 3, "rows_normalize needs 3 columns");
        let norms: Vec<f64> = src
            .data()
            .chunks(3)
            .map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
            .collect();
        let mut data = Vec::with_capacity(src.len());
        for (r, n) in src.data().chunks(3).zip(&norms) {
            if *n > 1e-300 {
                data.extend(r.iter().map(|x| x / n));
            } else {
                data.extend_from_slice(&fallback);
            }
        }
        let value = like(src, data);
        self.custom(
            &[a],
            value,
            Box::new(move |ctx| {
                let (y, g) = (ctx.output.data(), ctx.grad.data());
                let mut d = vec![0.0; y.len()];
                for (i, n) in norms.iter().enumerate() {
                    if *n <= 1e-300 {
                        continue;
                    }
                    let yi = &y[3 * i..3 * i + 3];
                    let gi = &g[3 * i..3 * i + 3];
                    let proj = yi[0] * gi[0] + yi[1] * gi[1] + yi[2] * gi[2];
                    for c in 0..3 {
                        d[3 * i + c] = (gi[c] - yi[c] * proj) / n;
                    }
                }
                vec![Some(like(ctx.inputs[0], d))]
            }),
        )
    }

    /// Scales each row of `a` by the matching entry of the `[n, 1]` column `s`.
    pub fn mul_rows(&mut self, a: Var, s: Var) -> Var {
        let (va, vs) = (self.value(a), self.value(s));
        let c = va.cols();
        assert_eq!(vs.len(), va.rows(), "mul_rows: scale length");
        let data = va
            .data()
            .chunks(c)
            .zip(vs.data())
            .flat_map(|(row, k)| row.iter().map(move |x| x * k))
            .collect();
        let value = like(va, data);
        self.custom(
            &[a, s],
            value,
            Box::new(move |ctx| {
                let (x, k, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad.data());
                let ga = ctx.needs[0].then(|| {
                    like(
                        x,
                        g.chunks(c)
                            .zip(k.data())
                            .flat_map(|(row, k)| row.iter().map(move |v| v * k))
                            .collect(),
                    )
                });
                let gs = ctx.needs[1].then(|| {
                    like(
                        k,
                        g.chunks(c)
                            .zip(x.data().chunks(c))
                            .map(|(gr, xr)| gr.iter().zip(xr).map(|(p, q)| p * q).sum())
                            .collect(),
                    )
                });
                vec![ga, gs]
            }),
        )
    }

    /// Element-wise `atan2(y, x)`.
    pub fn atan2(&mut self, y: Var, x: Var) -> Var {
        self.binary_check("atan2", y, x);
        let vy = self.value(y);
        let data = vy
            .data()
            .iter()
            .zip(self.value(x).data())
            .map(|(a, b)| a.atan2(*b))
            .collect();
        let value = like(vy, data);
        self.custom(
            &[y, x],
            value,
            Box::new(|ctx| {
                let (ys, xs, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad.data());
                let denom: Vec<f64> = ys
                    .data()
                    .iter()
                    .zip(xs.data())
                    .map(|(a, b)| a * a + b * b)
                    .collect();
                let gy = ctx.needs[0].then(|| {
                    like(
                        ys,
                        g.iter()
                            .zip(xs.data().iter().zip(&denom))
                            .map(|(g, (b, d))| if *d > 0.0 { g * b / d } else { 0.0 })
                            .collect(),
                    )
                });
                let gx = ctx.needs[1].then(|| {
                    like(
                        xs,
                        g.iter()
                            .zip(ys.data().iter().zip(&denom))
                            .map(|(g, (a, d))| if *d > 0.0 { -g * a / d } else { 0.0 })
                            .collect(),
                    )
                });
                vec![gy, gx]
            }),
        )
    }

    /// `out_i = M_i · a_i` for `[n, 3]` rows and constant row-major 3×3 matrices.
    pub fn rotate_rows(&mut self, a: Var, mats: Rc<[[f64; 9]]>) -> Var {
        let src = self.value(a);
        assert_eq!(src.cols(), 3, "rotate_rows needs 3 columns");
        assert_eq!(src.rows(), mats.len(), "rotate_rows: one matrix per row");
        let data = src
            .data()
            .chunks(3)
            .zip(mats.iter())
            .flat_map(|(x, m)| {
                [
                    m[0] * x[0] + m[1] * x[1] + m[2] * x[2],
                    m[3] * x[0] + m[4] * x[1] + m[5] * x[2],
                    m[6] * x[0] + m[7] * x[1] + m[8] * x[2],
                ]
            })
            .collect();
        let value = like(src, data);
        self.custom(
            &[a],
            value,
            Box::new(move |ctx| {
                let d = ctx
                    .grad
                    .data()
                    .chunks(3)
                    .zip(mats.iter())
                    .flat_map(|(g, m)| {
                        [
                            m[0] * g[0] + m[3] * g[1] + m[6] * g[2],
                            m[1] * g[0] + m[4] * g[1] + m[7] * g[2],
                            m[2] * g[0] + m[5] * g[1] + m[8] * g[2],
                        ]
                    })
                    .collect();
                vec![Some(like(ctx.inputs[0], d))]
            }),
        )
    }
}

pub(crate) fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
