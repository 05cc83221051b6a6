//! Pseudo-spectral simulation of the fractional Schrödinger evolution
//! `i d/dt psi = (omega(D) + V) psi`, `omega(xi) = |xi|^(2 rho)/(2 rho)`, with
//! propagation-estimate probes and high-velocity inverse scattering.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod estimates;
mod fft;
pub mod grid;
pub mod potentials;
pub mod reconstruction;
pub mod scattering;
pub mod symbol;
pub mod wavepackets;

pub use error::{Error, Result};
pub use grid::{Direction, Field, GridSpec, Space};
pub use symbol::{FractionalOrder, SymbolParams};
