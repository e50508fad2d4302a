//! Graph context encoder: masked-graph reconstruction for molecule
//! generation and pretraining.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: dense f64 tensors with tape-based reverse-mode
//!   differentiation,
//! * [`graph`]: categorical attributed graphs, batching, and file I/O,
//! * [`molecule`]: a restricted SMILES dialect, validity checking, and
//!   canonical keys,
//! * [`model`]: the encoder/decoder network built from GINe convolutions,
//!   top-k pooling, and per-layer edge updates,
//! * [`masking`]: corruption of graphs into (ground truth, masked) pairs
//!   and the reconstruction loss,
//! * [`training`]: Adam, pretraining, checkpoints, and transfer to
//!   classification,
//! * [`generation`]: n-shot molecule generation and corpus metrics.

pub mod generation;
pub mod graph;
pub mod masking;
pub mod model;
pub mod molecule;
pub mod rng;
pub mod tensor;
pub mod training;
