//! Siamese contrastive embedding network for compositional zero-shot learning.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithmic piece:
//! a small reverse-mode autodiff engine with an Adam optimizer, the
//! compositional dataset model and its anchor/positive/negative sampler, the
//! twin contrastive encoders with their classifiers, the state transition
//! module (generator and discriminator), the generalized zero-shot evaluation
//! protocol and the training loop that ties them together.
//!
//! File formats, configuration parsing and the command-line driver live in
//! the companion `scen` crate.

#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod math;
pub mod model;
pub mod nn;
pub mod optim;
pub mod stm;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, Var};
pub use data::{CompositionLabel, DatasetBundle, Split};
pub use error::{Error, Result};
pub use tensor::Tensor;
