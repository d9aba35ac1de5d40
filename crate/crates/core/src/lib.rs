//! Numerical laboratory for learnability of ReLU networks on data manifolds.
//!
//! Two regimes are modelled side by side:
//!
//! * **Sampleable manifolds** (hyperspheres and friends) where an ε-net plus
//!   nearest-anchor interpolation learns any bounded-weight ReLU network, and
//!   gradient training succeeds in practice.
//! * **Bounded-reach space-filling curves** that follow a binary-reflected
//!   Gray code around the Boolean cube. Lifted parity functions on these
//!   curves are single-hidden-layer ReLU networks that no statistical-query
//!   learner can find with few queries.
//!
//! The crate is organised bottom-up: [`graycode`] and [`manifold`] build the
//! data, [`nn`] and [`targets`] build the functions, [`geometry`],
//! [`learner`], [`sq`] and [`iddim`] run the analyses, and [`cli`] binds
//! everything into reproducible experiments.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod graycode;
pub mod iddim;
pub mod learner;
pub mod manifold;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod sq;
pub mod targets;

pub use error::{Error, Result};
pub use rng::LabRng;
