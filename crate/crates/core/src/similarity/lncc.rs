use super::LossValueGrad;
use crate::error::{check_shape, Error, Result};
use crate::grid::Image2D;

/// Sum over the `(2r+1) x (2r+1)` window centred on each pixel, with the
/// window clipped to the image.
pub fn box_sum(data: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let mut rows = vec![0.0; width * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            rows[y * width + x] = row[lo..=hi].iter().sum();
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for x in 0..width {
            let mut acc = 0.0;
            for yy in lo..=hi {
                acc += rows[yy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn window_count(i: usize, n: usize, r: usize) -> usize {
    (i + r).min(n - 1) - i.saturating_sub(r) + 1
}

/// Negative mean local normalized cross-correlation.
///
/// Per pixel, over the clipped `window x window` neighbourhood,
/// `cc = cross^2 / (var_f * var_m + eps)` with centred (unnormalized) sums.
/// The value lies in `[-1, 0]`; the gradient is taken with respect to
/// `moving`.
pub fn lncc(fixed: &Image2D, moving: &Image2D, window: usize, eps: f64) -> Result<LossValueGrad<Image2D>> {
    check_shape(fixed.shape(), moving.shape())?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("LNCC window must be odd and >= 3, got {window}")));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("LNCC eps must be positive, got {eps}")));
    }
    let (w, h) = fixed.shape();
    let r = window / 2;
    let f = fixed.as_slice();
    let m = moving.as_slice();
    let n_px = w * h;

    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let s_f = box_sum(f, w, h, r);
    let s_m = box_sum(m, w, h, r);
    let s_ff = box_sum(&sq(f, f), w, h, r);
    let s_mm = box_sum(&sq(m, m), w, h, r);
    let s_fm = box_sum(&sq(f, m), w, h, r);

    let mut total = 0.0;
    let mut a_coef = vec![0.0; n_px];
    let mut b_coef = vec![0.0; n_px];
    let mut c_coef = vec![0.0; n_px];
    for y in 0..h {
        let ny = window_count(y, h, r);
        for x in 0..w {
            let i = y * w + x;
            let n = (window_count(x, w, r) * ny) as f64;
            let mu_f = s_f[i] / n;
            let mu_m = s_m[i] / n;
            let cross = s_fm[i] - s_f[i] * mu_m;
            let var_f = s_ff[i] - s_f[i] * mu_f;
            let var_m = s_mm[i] - s_m[i] * mu_m;
            let denom = var_f * var_m + eps;
            total += cross * cross / denom;
            // d cc / d M(y) = a (F(y) - mu_f) + b (M(y) - mu_m) for y in the window
            let a = 2.0 * cross / denom;
            let b = -2.0 * cross * cross * var_f / (denom * denom);
            a_coef[i] = a;
            b_coef[i] = b;
            c_coef[i] = a * mu_f + b * mu_m;
        }
    }
    // clipped windows are symmetric, so the transpose of the box sum is itself
    let sa = box_sum(&a_coef, w, h, r);
    let sb = box_sum(&b_coef, w, h, r);
    let sc = box_sum(&c_coef, w, h, r);
    let scale = -1.0 / n_px as f64;
    let grad = (0..n_px)
        .map(|i| scale * (f[i] * sa[i] + m[i] * sb[i] - sc[i]))
        .collect();
    Ok(LossValueGrad {
        value: -total / n_px as f64,
        grad: Image2D::from_raw(w, h, grad),
    })
}
