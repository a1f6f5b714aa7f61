//! Minimal differentiable computation substrate.
//!
//! A [`Tape`] records matrix-valued operations and replays them in reverse
//! to produce gradients. On top of it sit dense ReLU and complex WIRE
//! layers ([`Mlp`], [`FieldLayout`]), the [`adamw_step`] optimizer, a
//! finite-difference checker and the binary [`Checkpoint`] container.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod mlp;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod wire;

pub use checkpoint::Checkpoint;
pub use error::{NnetError, Result};
pub use mlp::{mlp_forward, ActivationKind, Mlp, MlpSpec};
pub use ops::{Activation, LinearInput, SparseMatrix};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use wire::{wire_activate, FieldLayout};
