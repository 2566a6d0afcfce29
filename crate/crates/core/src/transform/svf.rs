//! Stationary velocity fields: scaling-and-squaring exponentiation, field
//! composition, image warping and the reverse-mode counterparts of each.
//!
//! Displacements follow the convention `phi(x) = x + u(x)`; warping an
//! image samples it at `phi(x)`.

use serde::{Deserialize, Serialize};

use super::sampling::Stencil;
use crate::error::{check_shape, Error, Result};
use crate::grid::{Image2D, LabelMap2D, VectorField2D};

/// Upper bound on the number of squarings.
pub const MAX_SQUARINGS: u32 = 12;

/// Number of squaring steps used by [`svf_exp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SquaringConfig {
    steps: u32,
}

impl SquaringConfig {
    pub fn new(steps: u32) -> Result<Self> {
        if steps > MAX_SQUARINGS {
            return Err(Error::invalid(format!(
                "squaring steps must be <= {MAX_SQUARINGS}, got {steps}"
            )));
        }
        Ok(Self { steps })
    }

    pub fn steps(self) -> u32 {
        self.steps
    }
}

impl Default for SquaringConfig {
    fn default() -> Self {
        Self { steps: 6 }
    }
}

/// Displacement of `phi_outer o phi_inner`:
/// `result(x) = outer(x + inner(x)) + inner(x)`.
pub fn compose(outer: &VectorField2D, inner: &VectorField2D) -> Result<VectorField2D> {
    check_shape(outer.shape(), inner.shape())?;
    Ok(compose_unchecked(outer, inner))
}

fn compose_unchecked(outer: &VectorField2D, inner: &VectorField2D) -> VectorField2D {
    let (w, h) = outer.shape();
    let a = outer.as_slice();
    let b = inner.as_slice();
    let mut out = vec![0.0; 2 * w * h];
    for y in 0..h {
        for x in 0..w {
            let i = 2 * (y * w + x);
            let s = Stencil::new(x as f64 + b[i], y as f64 + b[i + 1], w, h);
            out[i] = s.value_interleaved(a, 0) + b[i];
            out[i + 1] = s.value_interleaved(a, 1) + b[i + 1];
        }
    }
    VectorField2D::from_raw(w, h, out)
}

/// All intermediate displacements `u^0 .. u^K` of scaling and squaring.
pub fn svf_exp_trace(v: &VectorField2D, cfg: SquaringConfig) -> Vec<VectorField2D> {
    let mut trace = Vec::with_capacity(cfg.steps as usize + 1);
    trace.push(v.scaled(1.0 / f64::from(1u32 << cfg.steps)));
    for _ in 0..cfg.steps {
        let last = trace.last().unwrap();
        let next = compose_unchecked(last, last);
        trace.push(next);
    }
    trace
}

/// Displacement of `exp(v)` by scaling and squaring.
pub fn svf_exp(v: &VectorField2D, cfg: SquaringConfig) -> VectorField2D {
    svf_exp_trace(v, cfg).pop().unwrap()
}

/// `out(x) = img(x + u(x))`, bilinear with clamp-to-edge borders.
pub fn warp_image(img: &Image2D, u: &VectorField2D) -> Result<Image2D> {
    check_shape(img.shape(), u.shape())?;
    let (w, h) = img.shape();
    let d = u.as_slice();
    let data = img.as_slice();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = 2 * (y * w + x);
            out.push(Stencil::new(x as f64 + d[i], y as f64 + d[i + 1], w, h).value(data));
        }
    }
    Ok(Image2D::from_raw(w, h, out))
}

/// Nearest-neighbour warp of a label map, `out(x) = labels(round(x + u(x)))`
/// with clamp-to-edge borders.
pub fn warp_labels(labels: &LabelMap2D, u: &VectorField2D) -> Result<LabelMap2D> {
    check_shape(labels.shape(), u.shape())?;
    let (w, h) = labels.shape();
    Ok(LabelMap2D::from_fn(w, h, |x, y| {
        let [dx, dy] = u.get(x, y);
        let sx = (x as f64 + dx).round().clamp(0.0, (w - 1) as f64) as usize;
        let sy = (y as f64 + dy).round().clamp(0.0, (h - 1) as f64) as usize;
        labels.get(sx, sy)
    }))
}

/// Gradient of `L(u) = sum dl_dout * warp_image(img, u)` with respect to `u`.
pub fn warp_adjoint(img: &Image2D, u: &VectorField2D, dl_dout: &Image2D) -> Result<VectorField2D> {
    check_shape(img.shape(), u.shape())?;
    check_shape(img.shape(), dl_dout.shape())?;
    let (w, h) = img.shape();
    let d = u.as_slice();
    let data = img.as_slice();
    let g = dl_dout.as_slice();
    let mut out = vec![0.0; 2 * w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if g[p] == 0.0 {
                continue;
            }
            let s = Stencil::new(x as f64 + d[2 * p], y as f64 + d[2 * p + 1], w, h);
            let grad = s.gradient(data);
            out[2 * p] = g[p] * grad[0];
            out[2 * p + 1] = g[p] * grad[1];
        }
    }
    Ok(VectorField2D::from_raw(w, h, out))
}

/// Reverse pass through one self-composition `next = u o u`; returns the
/// cotangent of `u`.
fn self_compose_adjoint(u: &VectorField2D, g_next: &[f64]) -> Vec<f64> {
    let (w, h) = u.shape();
    let a = u.as_slice();
    // direct term of `+ u(x)`
    let mut g = g_next.to_vec();
    for y in 0..h {
        for x in 0..w {
            let i = 2 * (y * w + x);
            let (gx, gy) = (g_next[i], g_next[i + 1]);
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let s = Stencil::new(x as f64 + a[i], y as f64 + a[i + 1], w, h);
            // through the sample position
            let dx = s.gradient_interleaved(a, 0);
            let dy = s.gradient_interleaved(a, 1);
            g[i] += gx * dx[0] + gy * dy[0];
            g[i + 1] += gx * dx[1] + gy * dy[1];
            // through the sampled values: scatter to the four neighbours
            for k in 0..4 {
                let j = 2 * s.idx[k];
                g[j] += s.w[k] * gx;
                g[j + 1] += s.w[k] * gy;
            }
        }
    }
    g
}

/// Gradient with respect to `v` of a loss whose gradient with respect to
/// `u = svf_exp(v, cfg)` is `dl_du`.
pub fn svf_exp_adjoint(
    v: &VectorField2D,
    cfg: SquaringConfig,
    dl_du: &VectorField2D,
) -> Result<VectorField2D> {
    check_shape(v.shape(), dl_du.shape())?;
    let trace = svf_exp_trace(v, cfg);
    Ok(svf_exp_adjoint_from_trace(&trace, dl_du))
}

/// Same as [`svf_exp_adjoint`] but reuses a recorded forward trace.
pub fn svf_exp_adjoint_from_trace(trace: &[VectorField2D], dl_du: &VectorField2D) -> VectorField2D {
    let steps = trace.len() - 1;
    let mut g = dl_du.as_slice().to_vec();
    for k in (0..steps).rev() {
        g = self_compose_adjoint(&trace[k], &g);
    }
    let scale = 1.0 / f64::from(1u32 << steps);
    g.iter_mut().for_each(|c| *c *= scale);
    let (w, h) = dl_du.shape();
    VectorField2D::from_raw(w, h, g)
}
