//! Garment dynamic super-resolution.
//!
//! A coarse garment simulation is corrected by a mesh graph network and then
//! enriched with per-triangle implicit wrinkle fields whose weights come from
//! a hyper-network. The crate covers the whole loop: meshes and geometric
//! kernels, graph features, the network blocks, losses, collision handling,
//! a synthetic data generator, training, roll-out and evaluation.

pub mod error;
pub mod collision;
pub mod datagen;
pub mod featgraph;
pub mod losses;
pub mod mesh;
pub mod model;
pub mod pipeline;
pub mod spatial;

pub use error::{CoreError, Result};
