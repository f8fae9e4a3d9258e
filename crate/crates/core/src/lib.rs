//! Core library for transmission-section power flow adjustment.
//!
//! The crate is organised around a small pipeline:
//!
//! 1. [`grid`] parses MATPOWER-style case files into an immutable [`grid::GridCase`],
//!    loads section definitions, and builds the bus/branch graph.
//! 2. [`powerflow`] solves AC (Newton-Raphson) and DC power flow and turns converged
//!    solutions into section flows and per-bus state features.
//! 3. [`tensor`] is a dense-tensor reverse-mode autodiff engine; [`store`] holds named
//!    learnable parameters with Adam state and a binary checkpoint format.
//! 4. [`nn`] implements the section-adaptive multi-factor attention network together
//!    with concat / soft-attention baselines and its ablated variants.
//! 5. [`env`] is the generator re-dispatch environment (scenario generation, masked
//!    actions, reward shaping); [`agent`] trains and evaluates a dueling Q-network
//!    on top of it.
//!
//! The crate is `no_std` + `alloc`: it performs no IO and takes no wall-clock
//! measurements of its own. File formats, the CLI, and timing live in the companion
//! binary crate. Everything here is deterministic given a seed; see [`rng`].

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agent;
pub mod cases;
pub mod env;
pub mod grid;
pub mod linalg;
mod math;
pub mod nn;
pub mod powerflow;
pub mod rng;
pub mod store;
pub mod tensor;

pub use grid::{GridCase, PowerGraph, Section};
pub use powerflow::{PowerFlowSolution, SectionFlow, StateMatrix};
pub use store::ParameterStore;
pub use tensor::{Tape, Tensor};
