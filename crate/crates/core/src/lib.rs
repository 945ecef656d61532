//! Toroidal quantization of pseudo-differential and Fourier series operators on T^n.
//!
//! Frequencies live on finite lattice windows ([`FrequencyBox`]); periodic functions
//! are band-limited and sampled on uniform grids.

mod fft;
pub mod calculus;
pub mod error;
pub mod evolve;
pub mod fso;
pub mod harmonic;
pub mod io;
pub mod jet;
pub mod lattice;
pub mod microlocal;
pub mod quantize;
pub mod symbols;

pub use error::{Error, Result};
pub use harmonic::{EuclideanSampledFunction, GridFunction};
pub use lattice::{FrequencyBox, LatticeEval, LatticeFunction, MultiIndex};

pub type C64 = num_complex::Complex64;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
