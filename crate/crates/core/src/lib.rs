//! Edge-of-chaos (EoC) initialization and signal-propagation analysis for
//! deep networks with sparsifying activations.
//!
//! Four activation families are covered: shifted ReLU, soft threshold, and
//! their magnitude-clipped variants. For each, the crate provides
//!
//! - closed-form variance maps `V(q)`, their derivatives, and the
//!   correlation-map slope `chi1` ([`meanfield`]),
//! - EoC solving: given a target sparsity `s` and pre-activation variance
//!   `q*`, recover the threshold, weight variance, and bias variance that
//!   put the network on the edge of chaos ([`meanfield::eoc_solve`]),
//! - input-output Jacobian spectrum statistics ([`spectrum`]),
//! - finite-width simulation of dense and 1-D convolutional networks to
//!   verify the mean-field predictions empirically ([`sim`]),
//! - desk-scale SGD training to demonstrate which initializations train
//!   and which collapse ([`train`]).
//!
//! Everything numerical is deterministic: simulations derive per-layer
//! RNG substreams from a single seed, and all parallel reductions use a
//! fixed order, so results are independent of thread count. The `parallel`
//! feature (on by default) enables rayon across batch elements, trials,
//! seeds, and sweep cells; disabling it yields a sequential build with
//! bitwise-identical output.

pub mod activation;
mod error;
pub mod meanfield;
pub(crate) mod par;
pub mod rng;
pub mod sim;
pub mod special;
pub mod spectrum;
pub mod train;

pub use activation::{ActivationKind, ActivationSpec};
pub use error::{Error, Result};
pub use meanfield::{EocSolution, FixedPoint, MeanFieldParams, Stability};
pub use sim::{Arch, LayerStats, Network, NetworkSpec};
pub use spectrum::{SpectrumReport, WeightEnsemble};
pub use train::{Dataset, TrainConfig, TrainReport};
