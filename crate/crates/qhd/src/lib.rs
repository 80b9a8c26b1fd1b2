//! Quantum Hamiltonian Descent toolkit.
//!
//! Grid simulation of the QHD Schrödinger dynamics, quantum adiabatic and
//! classical gradient baselines, spectral diagnostics, Hamming/radix-2
//! encodings of box-constrained quadratic programs onto Ising machines, and
//! benchmarking metrics.
//!
//! Grids are indexed row-major with axis 0 slowest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classical;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod ising;
pub mod mesh;
pub mod objectives;
pub mod spectral;

pub use error::{Error, Result};
