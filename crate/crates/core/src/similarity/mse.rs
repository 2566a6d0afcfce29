use super::LossValueGrad;
use crate::error::{check_shape, Result};
use crate::grid::Image2D;

/// Mean squared difference; gradient `2 (M - F) / N` with respect to `moving`.
pub fn mse(fixed: &Image2D, moving: &Image2D) -> Result<LossValueGrad<Image2D>> {
    check_shape(fixed.shape(), moving.shape())?;
    let n = fixed.len() as f64;
    let mut total = 0.0;
    let grad = fixed
        .as_slice()
        .iter()
        .zip(moving.as_slice())
        .map(|(&f, &m)| {
            let d = m - f;
            total += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossValueGrad {
        value: total / n,
        grad: Image2D::from_raw(fixed.width(), fixed.height(), grad),
    })
}
