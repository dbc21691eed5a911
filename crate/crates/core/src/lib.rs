//! Image reconstruction with a generative convolutional regularizer.
//!
//! The image `u` is split as `u = v + (u - v)`, where `v` is synthesized by
//! a multi-layer, per-channel strided upconvolution network from sparse
//! latents and constrained kernels, and the remainder is penalized by
//! smoothed total variation. All variables are estimated jointly with an
//! inertial proximal alternating scheme.

pub mod block;
pub mod convnet;
pub mod energy;
pub mod error;
pub mod forward;
pub mod grid;
pub mod ipalm;
pub mod prox;

pub use block::BlockVariable;
pub use convnet::{derive_size_plan, synthesize, KernelSet, LatentStack, SizePlan};
pub use energy::{Block, Energy, ModelConfig, ObjectiveTerms};
pub use error::{GenregError, Result};
pub use forward::{simulate_corruption, Degradation, ProblemSpec, Recipe};
pub use grid::Grid;
pub use ipalm::{solve, AlgoParams, Solution, Solver, SolverState, TraceEntry};
