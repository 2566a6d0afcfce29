//! Cubic B-spline control lattice and its tensor-product expansion to a
//! dense velocity field.
//!
//! Control point `k` along an axis sits at pixel position `(k - 1) * spacing`.
//! Pixel `x` is influenced by control points `floor(x / s) .. floor(x / s) + 3`
//! with weights `B0(t) .. B3(t)`, `t = x / s - floor(x / s)`.

use crate::error::{check_shape, Error, Result};
use crate::grid::VectorField2D;

/// Uniform cubic B-spline basis functions at fractional offset `t`.
#[inline]
pub fn cubic_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Control-point lattice with `(dx, dy)` velocities in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineGrid {
    spacing: usize,
    cp_width: usize,
    cp_height: usize,
    data: Vec<f64>,
}

/// Number of control points needed along an axis of `n` pixels.
pub fn control_count(n: usize, spacing: usize) -> usize {
    n.div_ceil(spacing) + 3
}

impl BSplineGrid {
    /// Zero lattice covering a `width x height` image.
    pub fn zeros(width: usize, height: usize, spacing: usize) -> Result<Self> {
        if spacing < 2 {
            return Err(Error::invalid(format!("control spacing must be >= 2, got {spacing}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("empty image domain"));
        }
        let cp_width = control_count(width, spacing);
        let cp_height = control_count(height, spacing);
        Ok(Self {
            spacing,
            cp_width,
            cp_height,
            data: vec![0.0; 2 * cp_width * cp_height],
        })
    }

    /// Lattice from interleaved control values.
    pub fn from_values(width: usize, height: usize, spacing: usize, data: Vec<f64>) -> Result<Self> {
        let mut g = Self::zeros(width, height, spacing)?;
        if data.len() != g.data.len() {
            return Err(Error::invalid(format!(
                "expected {} control components, got {}",
                g.data.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control points".into()));
        }
        g.data = data;
        Ok(g)
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn cp_shape(&self) -> (usize, usize) {
        (self.cp_width, self.cp_height)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        let k = 2 * (j * self.cp_width + i);
        [self.data[k], self.data[k + 1]]
    }

    pub fn set(&mut self, i: usize, j: usize, v: [f64; 2]) {
        let k = 2 * (j * self.cp_width + i);
        self.data[k] = v[0];
        self.data[k + 1] = v[1];
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn covers(&self, width: usize, height: usize) -> Result<()> {
        check_shape(
            (control_count(width, self.spacing), control_count(height, self.spacing)),
            (self.cp_width, self.cp_height),
        )
    }

    /// Field value at a continuous pixel position, clamped to the lattice
    /// support of a `width x height` image.
    pub fn evaluate(&self, width: usize, height: usize, px: f64, py: f64) -> [f64; 2] {
        let s = self.spacing as f64;
        let ax = |p: f64, n: usize| {
            let p = p.clamp(0.0, (n - 1) as f64) / s;
            let base = p.floor();
            (base as usize, cubic_basis(p - base))
        };
        let (bx, wx) = ax(px, width);
        let (by, wy) = ax(py, height);
        let mut out = [0.0; 2];
        for (m, wm) in wy.iter().enumerate() {
            for (l, wl) in wx.iter().enumerate() {
                let c = self.get(bx + l, by + m);
                out[0] += wl * wm * c[0];
                out[1] += wl * wm * c[1];
            }
        }
        out
    }
}

/// Per-pixel base index and basis weights along one axis.
fn axis_weights(n: usize, spacing: usize) -> Vec<(usize, [f64; 4])> {
    (0..n)
        .map(|x| {
            let base = x / spacing;
            let t = (x % spacing) as f64 / spacing as f64;
            (base, cubic_basis(t))
        })
        .collect()
}

/// Dense velocity field from the tensor-product expansion of the lattice.
pub fn bspline_to_dense(grid: &BSplineGrid, width: usize, height: usize) -> Result<VectorField2D> {
    grid.covers(width, height)?;
    let wx = axis_weights(width, grid.spacing);
    let wy = axis_weights(height, grid.spacing);
    // separable: first contract along x for every control row
    let cw = grid.cp_width;
    let mut rows = vec![0.0; 2 * width * grid.cp_height];
    for j in 0..grid.cp_height {
        for (x, (bx, w)) in wx.iter().enumerate() {
            let mut acc = [0.0; 2];
            for (l, wl) in w.iter().enumerate() {
                let k = 2 * (j * cw + bx + l);
                acc[0] += wl * grid.data[k];
                acc[1] += wl * grid.data[k + 1];
            }
            let o = 2 * (j * width + x);
            rows[o] = acc[0];
            rows[o + 1] = acc[1];
        }
    }
    let mut out = vec![0.0; 2 * width * height];
    for (y, (by, w)) in wy.iter().enumerate() {
        for x in 0..width {
            let mut acc = [0.0; 2];
            for (m, wm) in w.iter().enumerate() {
                let k = 2 * ((by + m) * width + x);
                acc[0] += wm * rows[k];
                acc[1] += wm * rows[k + 1];
            }
            let o = 2 * (y * width + x);
            out[o] = acc[0];
            out[o + 1] = acc[1];
        }
    }
    Ok(VectorField2D::from_raw(width, height, out))
}

/// Transpose of [`bspline_to_dense`]: accumulates a dense cotangent onto the
/// control points. `grid` only supplies the lattice geometry.
pub fn bspline_adjoint(grid: &BSplineGrid, dl_dv: &VectorField2D) -> Result<BSplineGrid> {
    let (width, height) = dl_dv.shape();
    grid.covers(width, height)?;
    let wx = axis_weights(width, grid.spacing);
    let wy = axis_weights(height, grid.spacing);
    let cw = grid.cp_width;
    let g = dl_dv.as_slice();

    let mut rows = vec![0.0; 2 * width * grid.cp_height];
    for (y, (by, w)) in wy.iter().enumerate() {
        for x in 0..width {
            let k = 2 * (y * width + x);
            for (m, wm) in w.iter().enumerate() {
                let o = 2 * ((by + m) * width + x);
                rows[o] += wm * g[k];
                rows[o + 1] += wm * g[k + 1];
            }
        }
    }
    let mut out = vec![0.0; grid.data.len()];
    for j in 0..grid.cp_height {
        for (x, (bx, w)) in wx.iter().enumerate() {
            let k = 2 * (j * width + x);
            for (l, wl) in w.iter().enumerate() {
                let o = 2 * (j * cw + bx + l);
                out[o] += wl * rows[k];
                out[o + 1] += wl * rows[k + 1];
            }
        }
    }
    Ok(BSplineGrid {
        spacing: grid.spacing,
        cp_width: grid.cp_width,
        cp_height: grid.cp_height,
        data: out,
    })
}
