//! Boundary feedback stabilization of one-dimensional viscoplastic forming.
//!
//! The perturbation of a stress/velocity state `(v, σ)` around a desired
//! state `(v*(x), σ*)` obeys a 2×2 hyperbolic balance law. This crate
//!
//! * linearizes pluggable viscoplastic laws at the desired state ([`material`]),
//! * diagonalizes the linear system into Riemann invariants ([`hyperbolics`]),
//! * evaluates the weighted-L² Lyapunov functional, the decay-rate functional
//!   and synthesizes boundary gains with a checked decay certificate ([`lyapunov`]),
//! * integrates the closed loop with a first-order upwind finite-volume scheme
//!   ([`solver`]), driving the boundaries through the feedback laws in
//!   physical variables ([`control`]),
//! * and wires everything into a config-driven command line ([`cli`]).
//!
//! Units are fixed throughout: MPa, mm, s and N (1 MPa·mm² = 1 N).

pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod hyperbolics;
pub mod lyapunov;
pub mod material;
pub mod solver;

pub use error::{Error, Result};
