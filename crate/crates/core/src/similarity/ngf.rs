use super::LossValueGrad;
use crate::edge::{gradient_central, gradient_central_adjoint};
use crate::error::{check_shape, Error, Result};
use crate::grid::{Image2D, VectorField2D};

const EPS_FLOOR: f64 = 1e-8;

/// Edge parameter `eps_rel * mean |grad I|`, floored. The second value is
/// false when the floor is active (no dependence on the image).
fn edge_parameter(g: &VectorField2D, eps_rel: f64) -> (f64, bool) {
    let mean = g.mean_norm();
    let eps = eps_rel * mean;
    if eps > EPS_FLOOR {
        (eps, true)
    } else {
        (EPS_FLOOR, false)
    }
}

/// Normalized gradient fields distance
/// `mean(1 - (gF.gM)^2 / ((|gF|^2 + eF^2)(|gM|^2 + eM^2)))`, in `[0, 1]`.
/// The gradient with respect to `moving` includes the dependence of its
/// edge parameter on the image.
pub fn ngf(fixed: &Image2D, moving: &Image2D, eps_rel: f64) -> Result<LossValueGrad<Image2D>> {
    check_shape(fixed.shape(), moving.shape())?;
    if !(eps_rel > 0.0) {
        return Err(Error::invalid(format!("NGF eps_rel must be positive, got {eps_rel}")));
    }
    let gf = gradient_central(fixed)?;
    let gm = gradient_central(moving)?;
    let (eps_f, _) = edge_parameter(&gf, eps_rel);
    let (eps_m, eps_m_live) = edge_parameter(&gm, eps_rel);
    let (ef2, em2) = (eps_f * eps_f, eps_m * eps_m);
    let n = fixed.len();
    let inv_n = 1.0 / n as f64;

    let a = gf.as_slice();
    let b = gm.as_slice();
    let mut total = 0.0;
    let mut d_g = vec![0.0; 2 * n];
    let mut d_eps = 0.0;
    for px in 0..n {
        let (fx, fy) = (a[2 * px], a[2 * px + 1]);
        let (mx, my) = (b[2 * px], b[2 * px + 1]);
        let dot = fx * mx + fy * my;
        let p = fx * fx + fy * fy + ef2;
        let q = mx * mx + my * my + em2;
        let t = dot * dot / (p * q);
        total += 1.0 - t;
        // value = mean(1 - t)
        let c1 = -2.0 * dot / (p * q) * inv_n;
        let c2 = 2.0 * t / q * inv_n;
        d_g[2 * px] = c1 * fx + c2 * mx;
        d_g[2 * px + 1] = c1 * fy + c2 * my;
        d_eps += 2.0 * t * eps_m / q * inv_n;
    }
    if eps_m_live {
        // eps_m = eps_rel * mean |gM|
        let k = d_eps * eps_rel * inv_n;
        for px in 0..n {
            let (mx, my) = (b[2 * px], b[2 * px + 1]);
            let norm = mx.hypot(my);
            if norm > 0.0 {
                d_g[2 * px] += k * mx / norm;
                d_g[2 * px + 1] += k * my / norm;
            }
        }
    }
    let (w, h) = fixed.shape();
    let grad = gradient_central_adjoint(&VectorField2D::from_raw(w, h, d_g))?;
    Ok(LossValueGrad {
        value: total * inv_n,
        grad,
    })
}
