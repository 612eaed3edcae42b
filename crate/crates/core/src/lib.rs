//! Numerical toolkit for weighted twisted convolution algebras `ℓ^{1,ν}(G|𝒞)`
//! over discrete groups of polynomial growth.

pub mod bundle;
pub mod calculus;
pub mod cli;
pub mod error;
pub mod groups;
pub mod inversion;
pub mod norms;
pub mod sections;
pub mod spectra;
pub mod verify;

pub use error::{Error, Result};
