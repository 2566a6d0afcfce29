use crate::edge::diff_stencil;
use crate::error::{Error, Result};
use crate::grid::{Image2D, VectorField2D};

/// Determinant of the Jacobian of `phi(x) = x + u(x)`, central differences
/// in the interior and one-sided on the border.
pub fn jacobian_determinant(u: &VectorField2D) -> Result<Image2D> {
    let (w, h) = u.shape();
    if w < 2 || h < 2 {
        return Err(Error::invalid(format!("field must be at least 2x2, got {w}x{h}")));
    }
    Ok(Image2D::from_fn(w, h, |x, y| {
        let (xl, xh, wx) = diff_stencil(x, w);
        let (yl, yh, wy) = diff_stencil(y, h);
        let (a, b) = (u.get(xh, y), u.get(xl, y));
        let (c, d) = (u.get(x, yh), u.get(x, yl));
        let dux_dx = wx * (a[0] - b[0]);
        let duy_dx = wx * (a[1] - b[1]);
        let dux_dy = wy * (c[0] - d[0]);
        let duy_dy = wy * (c[1] - d[1]);
        (1.0 + dux_dx) * (1.0 + duy_dy) - dux_dy * duy_dx
    }))
}
