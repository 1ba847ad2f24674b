//! Workbench for compositional text-circuit question answering.
//!
//! The pipeline turns synthetic "following" stories into text diagrams,
//! compiles the diagrams into parameterised quantum circuits with shared
//! per-word parameters, and answers binary questions by comparing the
//! measured overlap of the text state with a positive and a negative
//! question effect. On top of that core the crate provides:
//!
//! - [`story`]: dataset generation with controlled width/depth/density,
//!   a deterministic oracle for ground-truth labels, and train/test splits;
//! - [`diagram`]: text diagrams over noun wires and semantic rewrites;
//! - [`circuit`]: the semantic functor from diagrams to gate sequences;
//! - [`sim`]: exact statevector/density evaluation and adjoint-mode gradients;
//! - [`train`]: Adam-based in-task training with checkpoint selection;
//! - [`noise`]: angle-dependent two-qubit depolarising noise with
//!   Monte-Carlo trajectory sampling;
//! - [`compile`]: lowering to a hardware-style native gate set and a greedy
//!   qubit-reuse pass;
//! - [`planner`]: tensor-network extraction and randomized-greedy
//!   contraction-cost estimation;
//! - [`interpret`]: Bloch-sphere exports, axiom checks, hand-built Clifford
//!   reference models, interventions and bias tables;
//! - [`cli`]: experiment configuration, artifact emission and reports.
//!
//! Every operation is deterministic given its seed; see the `examples/`
//! directory for one runnable example per capability.

pub mod circuit;
pub mod cli;
pub mod compile;
pub mod diagram;
pub mod interpret;
pub mod linalg;
pub mod noise;
pub mod planner;
pub(crate) mod rngs;
pub mod sim;
pub mod stats;
pub mod story;
pub mod train;

pub use circuit::{functor_apply, Circuit, FunctorConfig, ParamStore};
pub use diagram::{apply_rewrites, parse_story, TextDiagram, Word};
pub use sim::{evaluate, evaluate_pair, gradient, EvalResult, SimConfig};
pub use story::{evaluate_oracle, Dialect, Direction, Story};
