use super::LossValueGrad;
use crate::error::{Error, Result};
use crate::grid::VectorField2D;

/// Diffusion regularizer on a velocity field: squared forward differences
/// along both axes (pairs straddling the border omitted), normalized by
/// `pixels * 2 components * 2 directions`.
pub fn reg_diffusion(v: &VectorField2D) -> Result<LossValueGrad<VectorField2D>> {
    let (w, h) = v.shape();
    if w < 2 || h < 2 {
        return Err(Error::invalid(format!("field must be at least 2x2, got {w}x{h}")));
    }
    let norm = 1.0 / (4 * w * h) as f64;
    let d = v.as_slice();
    let mut total = 0.0;
    let mut grad = vec![0.0; d.len()];
    let mut pair = |i: usize, j: usize, total: &mut f64| {
        for c in 0..2 {
            let diff = d[2 * j + c] - d[2 * i + c];
            *total += diff * diff;
            grad[2 * j + c] += 2.0 * diff * norm;
            grad[2 * i + c] -= 2.0 * diff * norm;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                pair(i, i + 1, &mut total);
            }
            if y + 1 < h {
                pair(i, i + w, &mut total);
            }
        }
    }
    Ok(LossValueGrad {
        value: total * norm,
        grad: VectorField2D::from_raw(w, h, grad),
    })
}
