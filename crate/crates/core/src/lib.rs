//! Communication-free coupling of discrete distributions.
//!
//! Two parties share a random seed and each holds a distribution over the
//! same `n` items. Each outputs one sample from its own distribution, and
//! the goal is to make the samples agree as often as possible. This crate
//! provides:
//!
//! - [`protocols`]: the optimal (communicating) coupling, weighted MinHash
//!   and Gumbel sampling;
//! - [`analysis`]: exact collision probabilities, the worst-case bound and
//!   Monte Carlo estimators;
//! - [`lowcomm`]: an interactive protocol reaching `1 − TV − ε` with a few
//!   messages of `O(log(n/ε))` bits;
//! - [`specdec`]: drafter-invariant speculative decoding over toy models.
//!
//! Monte Carlo loops run on rayon with the default `parallel` feature; see
//! [`exec::Execution`].

pub mod analysis;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod lowcomm;
pub mod numeric;
pub mod protocols;
pub mod randomness;
pub mod specdec;

pub use distributions::{discretize, tv_distance, DiscreteDistribution, GridDistribution};
pub use error::{CouplingError, Result};
pub use exec::Execution;
pub use protocols::ProtocolKind;
pub use randomness::{SharedRandomSource, UniformSource};
