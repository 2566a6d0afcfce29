//! Diffeomorphic transformation machinery.

mod bspline;
mod jacobian;
pub(crate) mod sampling;
mod svf;

pub use bspline::{bspline_adjoint, bspline_to_dense, control_count, cubic_basis, BSplineGrid};
pub use jacobian::jacobian_determinant;
pub use svf::{
    compose, svf_exp, svf_exp_adjoint, svf_exp_adjoint_from_trace, svf_exp_trace, warp_adjoint,
    warp_image, warp_labels, SquaringConfig, MAX_SQUARINGS,
};
