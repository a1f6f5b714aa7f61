//! Multi-layer perceptrons: real ReLU stacks and complex WIRE stacks.

use rand::Rng;

use crate::error::{NnetError, Result};
use crate::ops::{Activation, LinearInput};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Wire,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: ActivationKind,
    pub complex_valued: bool,
    pub wire_omega0: f64,
    pub wire_alpha0: f64,
}

impl MlpSpec {
    pub fn relu(widths: &[usize]) -> Self {
        Self {
            layer_widths: widths.to_vec(),
            activation: ActivationKind::Relu,
            complex_valued: false,
            wire_omega0: 0.0,
            wire_alpha0: 0.0,
        }
    }

    pub fn wire(widths: &[usize], omega0: f64, alpha0: f64) -> Self {
        Self {
            layer_widths: widths.to_vec(),
            activation: ActivationKind::Wire,
            complex_valued: true,
            wire_omega0: omega0,
            wire_alpha0: alpha0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(NnetError::InvalidSpec(
                "an MLP needs at least two widths".into(),
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(NnetError::InvalidSpec("zero layer width".into()));
        }
        if (self.activation == ActivationKind::Wire) != self.complex_valued {
            return Err(NnetError::InvalidSpec(
                "wire activation and complex layers go together".into(),
            ));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// Shapes of `(weight, bias)` for layer `l`.
    pub fn layer_shapes(&self, l: usize) -> ([usize; 2], [usize; 2]) {
        let (i, o) = (self.layer_widths[l], self.layer_widths[l + 1]);
        if self.complex_valued {
            ([i, 2 * o], [1, 2 * o])
        } else {
            ([i, o], [1, o])
        }
    }
}

/// Glorot-uniform bound `√(6/(fan_in+fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn uniform_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// An MLP whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `<prefix>.l<i>.w` / `<prefix>.l<i>.b` with Glorot-uniform
    /// weights and zero biases. Complex layers are additionally scaled by
    /// `1/ω0` so initial pre-activations sit inside the wavelet envelope.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        spec: MlpSpec,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers());
        for l in 0..spec.layers() {
            let (ws, bs) = spec.layer_shapes(l);
            let mut bound = glorot_bound(spec.layer_widths[l], spec.layer_widths[l + 1]);
            if spec.complex_valued {
                bound /= spec.wire_omega0;
            }
            let w = store.add(format!("{prefix}.l{l}.w"), uniform_tensor(rng, &ws, bound));
            let b = store.add(format!("{prefix}.l{l}.b"), Tensor::zeros(&bs));
            layers.push((w, b));
        }
        Ok(Self { spec, layers })
    }

    /// Re-attaches to parameters already present in `store`.
    pub fn attach(store: &ParamStore, prefix: &str, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers());
        for l in 0..spec.layers() {
            let lookup = |suffix: &str, shape: [usize; 2]| -> Result<ParamId> {
                let name = format!("{prefix}.l{l}.{suffix}");
                let id = store
                    .id(&name)
                    .ok_or_else(|| NnetError::UnknownParam(name.clone()))?;
                if store.get(id).shape() != shape {
                    return Err(NnetError::ShapeMismatch {
                        op: "attach mlp",
                        expected: shape.to_vec(),
                        got: store.get(id).shape().to_vec(),
                    });
                }
                Ok(id)
            };
            let (ws, bs) = spec.layer_shapes(l);
            layers.push((lookup("w", ws)?, lookup("b", bs)?));
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layer_params(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.spec.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.spec.layer_widths.last().unwrap()
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bound, x: Var) -> Result<Var> {
        self.forward_multi(tape, params, &[LinearInput::dense(x)])
    }

    /// Forward pass whose first layer consumes several (possibly gathered)
    /// operands, as if they were concatenated column-wise.
    pub fn forward_multi(
        &self,
        tape: &mut Tape,
        params: &Bound,
        inputs: &[LinearInput],
    ) -> Result<Var> {
        let width: usize = inputs.iter().map(|i| tape.value(i.var).cols()).sum();
        if width != self.input_width() {
            return Err(NnetError::ShapeMismatch {
                op: "mlp_forward",
                expected: vec![self.input_width()],
                got: vec![width],
            });
        }
        let last = self.layers.len() - 1;
        match self.spec.activation {
            ActivationKind::Relu | ActivationKind::None => {
                let hidden_act = if self.spec.activation == ActivationKind::Relu {
                    Activation::Relu
                } else {
                    Activation::None
                };
                let mut h: Option<Var> = None;
                for (l, (w, b)) in self.layers.iter().enumerate() {
                    let act = if l == last { Activation::None } else { hidden_act };
                    let (w, b) = (params.var(*w), params.var(*b));
                    h = Some(match h {
                        None => tape.multi_linear(inputs, w, Some(b), act),
                        Some(prev) => tape.linear(prev, w, Some(b), act),
                    });
                }
                Ok(h.unwrap())
            }
            ActivationKind::Wire => {
                let x = if inputs.len() == 1 && inputs[0].index.is_none() {
                    inputs[0].var
                } else {
                    let parts: Vec<Var> = inputs
                        .iter()
                        .map(|i| match &i.index {
                            None => i.var,
                            Some(idx) => tape.gather_rows(i.var, idx.clone()),
                        })
                        .collect();
                    tape.concat_cols(&parts)
                };
                let mut h = x;
                for (l, (w, b)) in self.layers.iter().enumerate() {
                    h = tape.complex_linear(h, params.var(*w), params.var(*b), l == 0);
                    if l < last {
                        h = tape.wire(h, self.spec.wire_omega0, self.spec.wire_alpha0);
                    }
                }
                Ok(tape.real_part(h))
            }
        }
    }
}

/// Stateless forward pass: `params` lists `[w0, b0, w1, b1, ...]`.
pub fn mlp_forward(params: &[Tensor], spec: &MlpSpec, x: &Tensor) -> Result<Tensor> {
    spec.validate()?;
    if params.len() != 2 * spec.layers() {
        return Err(NnetError::InvalidSpec(format!(
            "expected {} parameter tensors, got {}",
            2 * spec.layers(),
            params.len()
        )));
    }
    let mut store = ParamStore::new();
    for l in 0..spec.layers() {
        let (ws, bs) = spec.layer_shapes(l);
        for (k, (t, shape)) in [(&params[2 * l], ws), (&params[2 * l + 1], bs)]
            .into_iter()
            .enumerate()
        {
            if t.shape() != shape {
                return Err(NnetError::ShapeMismatch {
                    op: "mlp_forward parameters",
                    expected: shape.to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            store.add(format!("p.l{l}.{}", if k == 0 { "w" } else { "b" }), t.clone());
        }
    }
    let mlp = Mlp::attach(&store, "p", spec.clone())?;
    let mut tape = Tape::new();
    let bound = store.bind_frozen(&mut tape);
    let xv = tape.constant(x.clone());
    let y = mlp.forward(&mut tape, &bound, xv)?;
    Ok(tape.value(y).clone())
}
