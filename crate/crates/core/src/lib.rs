//! Numerical toolkit for holomorphic endomorphisms of ℙ² that preserve a
//! pencil of lines: Green functions, equilibrium-measure sampling, normal
//! forms at repelling points, the global Poincaré map, and exact 1-form
//! invariance checks.

pub mod dynamics;
pub mod error;
pub mod foliation;
pub mod green;
pub mod io;
pub mod measure;
pub mod normal_form;
pub mod numeric;
pub mod periodic;
pub mod poincare;
pub mod rng;

pub use error::{Error, Result};
pub use numeric::*;
