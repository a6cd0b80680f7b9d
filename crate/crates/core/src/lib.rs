//! Littlewood-Paley calculus, dyadic median selection and multilinear
//! operators realized on the discrete periodic torus.

pub mod dyadic;
pub mod error;
pub mod fft;
pub mod grid;
pub mod littlewood_paley;
pub mod maximal;
pub mod median;
pub mod multiplier;
pub mod pseudodiff;
pub mod reduce;
pub mod spaces;

pub use error::{Error, Result};
pub use grid::{random_band_limited, random_band_limited_real, Grid, Ladder, SampledFunction, ScaleFields};
pub use num_complex::Complex64;
