//! Bilinear sampling with clamp-to-edge borders, together with the
//! derivative of the interpolant with respect to the sample position.
//!
//! At integer positions the interpolating cell is the lower one, i.e. the
//! sample at `x = k` is taken as the right end of cell `[k-1, k]`. Outside
//! the domain the position is clamped, so the positional derivative is zero
//! along that axis.

/// One axis of a bilinear stencil.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: usize,
    hi: usize,
    /// Interpolation fraction in `[0, 1]` towards `hi`.
    t: f64,
    /// `dt / dp`, 0 when the position was clamped.
    dt: f64,
}

#[inline]
fn axis(p: f64, n: usize) -> Axis {
    if n == 1 {
        return Axis { lo: 0, hi: 0, t: 0.0, dt: 0.0 };
    }
    let last = (n - 1) as f64;
    if p < 0.0 {
        Axis { lo: 0, hi: 1, t: 0.0, dt: 0.0 }
    } else if p > last {
        Axis { lo: n - 2, hi: n - 1, t: 1.0, dt: 0.0 }
    } else {
        let lo = ((p.ceil() as isize) - 1).clamp(0, n as isize - 2) as usize;
        Axis { lo, hi: lo + 1, t: p - lo as f64, dt: 1.0 }
    }
}

/// Four-neighbour stencil at a continuous position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    tx: f64,
    ty: f64,
    dtx: f64,
    dty: f64,
}

impl Stencil {
    #[inline]
    pub fn new(px: f64, py: f64, width: usize, height: usize) -> Self {
        let ax = axis(px, width);
        let ay = axis(py, height);
        let (tx, ty) = (ax.t, ay.t);
        let idx = [
            ay.lo * width + ax.lo,
            ay.lo * width + ax.hi,
            ay.hi * width + ax.lo,
            ay.hi * width + ax.hi,
        ];
        let w = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
        Self { idx, w, tx, ty, dtx: ax.dt, dty: ay.dt }
    }

    #[inline]
    fn grad_of(&self, v: [f64; 4]) -> [f64; 2] {
        [
            self.dtx * ((1.0 - self.ty) * (v[1] - v[0]) + self.ty * (v[3] - v[2])),
            self.dty * ((1.0 - self.tx) * (v[2] - v[0]) + self.tx * (v[3] - v[1])),
        ]
    }

    /// Interpolated value of a scalar raster.
    #[inline]
    pub fn value(&self, data: &[f64]) -> f64 {
        self.w[0] * data[self.idx[0]]
            + self.w[1] * data[self.idx[1]]
            + self.w[2] * data[self.idx[2]]
            + self.w[3] * data[self.idx[3]]
    }

    /// Positional gradient of the interpolant of a scalar raster.
    #[inline]
    pub fn gradient(&self, data: &[f64]) -> [f64; 2] {
        self.grad_of(self.idx.map(|i| data[i]))
    }

    /// Interpolated value of one component of an interleaved vector raster.
    #[inline]
    pub fn value_interleaved(&self, data: &[f64], c: usize) -> f64 {
        self.w[0] * data[2 * self.idx[0] + c]
            + self.w[1] * data[2 * self.idx[1] + c]
            + self.w[2] * data[2 * self.idx[2] + c]
            + self.w[3] * data[2 * self.idx[3] + c]
    }

    #[inline]
    pub fn gradient_interleaved(&self, data: &[f64], c: usize) -> [f64; 2] {
        self.grad_of(self.idx.map(|i| data[2 * i + c]))
    }
}
