//! Numerical free probability: transforms, subordination, free convolutions,
//! overlap functions and free denoisers.

pub mod error;
mod kernel;
pub mod transforms;
pub mod measure;
pub mod subordination;
pub mod convolution;
pub mod overlap;
pub mod denoiser;
pub mod export;

pub use error::{Error, Result};
pub use measure::{Atom, Measure, MeasureSpec, SupportDomain};
pub use num_complex::Complex64;
