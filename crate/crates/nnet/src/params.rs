//! Named parameter storage and its binding onto a tape.

use std::collections::HashMap;

use crate::error::{NnetError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics if the name is already taken.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.lookup.contains_key(&name),
            "duplicate parameter name {name}"
        );
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count over all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Result<&Tensor> {
        self.id(name)
            .map(|id| self.get(id))
            .ok_or_else(|| NnetError::UnknownParam(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Replaces every tensor from `(name, tensor)` pairs, checking names and shapes.
    pub fn load_from<'a>(
        &mut self,
        entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<()> {
        let mut seen = vec![false; self.tensors.len()];
        for (name, t) in entries {
            let id = self
                .id(name)
                .ok_or_else(|| NnetError::UnknownParam(name.to_string()))?;
            let slot = &mut self.tensors[id.0];
            if slot.shape() != t.shape() {
                return Err(NnetError::ShapeMismatch {
                    op: "load parameters",
                    expected: slot.shape().to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            *slot = t.clone();
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(NnetError::UnknownParam(format!(
                "{} (missing from source)",
                self.names[missing]
            )));
        }
        Ok(())
    }

    /// Copies every parameter onto `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Copies every parameter onto `tape` as a constant (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| tape.constant(t.clone()))
                .collect(),
        }
    }
}

/// Tape handles for a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradient per parameter, zero-filled where nothing flowed.
    pub fn gradients(&self, store: &ParamStore, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(store.ids())
            .map(|(v, id)| {
                grads
                    .take(*v)
                    .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
            })
            .collect()
    }
}
