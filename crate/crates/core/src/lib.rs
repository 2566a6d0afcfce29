//! Edge-augmented diffeomorphic multi-modal 2D image registration.
//!
//! A moving image is aligned to a fixed image by optimizing a stationary
//! velocity field (dense, or parameterized by a cubic B-spline lattice)
//! whose exponential gives the deformation. The objective combines an
//! image similarity term, a similarity term on the gradient-magnitude edge
//! maps of both images, and a diffusion regularizer on the velocity. Every
//! term has an analytic gradient that is chained back through warping and
//! scaling-and-squaring.

pub mod bench;
pub mod edge;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod optim;
pub mod register;
pub mod similarity;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{normalize_minmax, Image2D, LabelMap2D, VectorField2D};
