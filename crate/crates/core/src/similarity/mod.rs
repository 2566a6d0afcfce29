//! Loss terms with analytic gradients.
//!
//! Image losses take `(fixed, moving)` and differentiate with respect to
//! the moving (warped) image. All values are means over pixels so that
//! weights transfer across image sizes.

mod lncc;
mod mse;
mod ngf;
mod nmi;
mod reg;

pub use lncc::{box_sum, lncc};
pub use mse::mse;
pub use ngf::ngf;
pub use nmi::{nmi, parzen_weights};
pub use reg::reg_diffusion;

/// A scalar loss value and its gradient with respect to the designated
/// argument.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValueGrad<G> {
    pub value: f64,
    pub grad: G,
}
