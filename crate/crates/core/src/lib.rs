//! Exact solution, pricing and phase-transition analysis for the one-factor
//! discrete-time interest-rate model whose Libors are log-normal in the
//! terminal measure.
//!
//! The model is solved exactly by a backward recursion in extended precision
//! ([`solver`]); the Libor law in its forward measure is a finite log-normal
//! mixture ([`distribution`]); caplets and Libor-in-arrears have closed forms
//! ([`pricing`]); and the zeros of the generating function locate the critical
//! volatility ([`criticality`]). [`mc`] is a terminal-measure Monte Carlo used
//! to show what a naive simulation misses.

pub mod criticality;
pub mod curve;
pub mod distribution;
pub mod error;
pub mod export;
pub mod mc;
pub mod normal;
pub mod pricing;
pub mod quadrature;
pub mod solver;
pub mod wide;

pub use curve::{ModelParams, TenorStructure, YieldCurve};
pub use error::{ModelError, Result};
pub use solver::{GeneratingFunction, ModelSolution};
pub use wide::{WideComplex, WideReal};
