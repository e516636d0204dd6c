//! Desk-scale synthetic-to-realistic translation with joint single-image
//! depth estimation.
//!
//! The crate is organized around the training pipeline: a small
//! reverse-mode autodiff engine ([`tensor`]), a procedural two-domain
//! dataset generator ([`scenegen`]), the four networks ([`nets`]), the loss
//! terms ([`losses`]), the alternating optimizer loop ([`trainer`]) and the
//! depth metrics ([`eval`]).

pub mod tensor;

pub mod eval;
pub mod losses;
pub mod nets;
pub mod scenegen;
pub mod trainer;
pub mod verify;

pub use tensor::{Elem, Tensor, TensorError};
