use super::LossValueGrad;
use crate::error::{check_shape, Error, Result};
use crate::grid::Image2D;

const P_FLOOR: f64 = 1e-12;

/// Beyond this many kernel widths a Gaussian weight is below 1e-19 of the
/// peak and does not change any double-precision sum.
const KERNEL_REACH: f64 = 9.5;

/// Soft bin assignment of one intensity.
struct Parzen {
    bins: usize,
    sigma: f64,
    reach: usize,
}

impl Parzen {
    fn new(bins: usize, sigma_ratio: f64) -> Self {
        let reach = ((KERNEL_REACH * sigma_ratio).ceil() as usize + 1).min(bins);
        Self {
            bins,
            sigma: sigma_ratio / bins as f64,
            reach,
        }
    }

    fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.bins as f64
    }

    /// First bin, normalized weights and their derivatives w.r.t. the
    /// intensity, for the bins within reach of `i`.
    fn weights(&self, i: f64, w: &mut Vec<f64>, dw: &mut Vec<f64>) -> usize {
        let nearest = ((i * self.bins as f64).floor() as isize).clamp(0, self.bins as isize - 1) as usize;
        let lo = nearest.saturating_sub(self.reach);
        let hi = (nearest + self.reach).min(self.bins - 1);
        w.clear();
        dw.clear();
        let inv_var = 1.0 / (self.sigma * self.sigma);
        let mut z = 0.0;
        let mut dz = 0.0;
        for k in lo..=hi {
            let d = i - self.center(k);
            let e = (-0.5 * d * d * inv_var).exp();
            let de = -d * inv_var * e;
            w.push(e);
            dw.push(de);
            z += e;
            dz += de;
        }
        for (wk, dwk) in w.iter_mut().zip(dw.iter_mut()) {
            *dwk = *dwk / z - *wk * dz / (z * z);
            *wk /= z;
        }
        lo
    }
}

/// Per-bin Parzen weights of a single intensity (all bins, normalized).
pub fn parzen_weights(intensity: f64, bins: usize, sigma_ratio: f64) -> Vec<f64> {
    let p = Parzen::new(bins, sigma_ratio);
    let (mut w, mut dw) = (Vec::new(), Vec::new());
    let lo = p.weights(intensity, &mut w, &mut dw);
    let mut out = vec![0.0; bins];
    out[lo..lo + w.len()].copy_from_slice(&w);
    out
}

fn entropy_term(p: f64) -> f64 {
    -p * p.max(P_FLOOR).ln()
}

/// d(-p ln max(p, floor)) / dp
fn entropy_slope(p: f64) -> f64 {
    if p > P_FLOOR {
        -(p.ln() + 1.0)
    } else {
        -P_FLOOR.ln()
    }
}

/// Negative normalized mutual information `-(H_F + H_M) / H_FM` from a
/// Gaussian Parzen joint histogram. Intensities must lie in `[0, 1]`.
pub fn nmi(fixed: &Image2D, moving: &Image2D, bins: usize, sigma_ratio: f64) -> Result<LossValueGrad<Image2D>> {
    check_shape(fixed.shape(), moving.shape())?;
    if bins < 8 {
        return Err(Error::invalid(format!("NMI needs at least 8 bins, got {bins}")));
    }
    if !(sigma_ratio > 0.0) {
        return Err(Error::invalid(format!("NMI sigma ratio must be positive, got {sigma_ratio}")));
    }
    for img in [fixed, moving] {
        if let Some((index, &value)) = img
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::IntensityOutOfRange { value, index });
        }
    }
    let parzen = Parzen::new(bins, sigma_ratio);
    let n = fixed.len();
    let inv_n = 1.0 / n as f64;

    // sparse per-pixel weights, kept for the backward pass
    let span = 2 * parzen.reach + 1;
    let mut f_lo = vec![0usize; n];
    let mut f_w = vec![0.0; n * span];
    let mut f_len = vec![0usize; n];
    let mut m_lo = vec![0usize; n];
    let mut m_w = vec![0.0; n * span];
    let mut m_dw = vec![0.0; n * span];
    let mut m_len = vec![0usize; n];
    let (mut w, mut dw) = (Vec::with_capacity(span), Vec::with_capacity(span));

    let mut joint = vec![0.0; bins * bins];
    for (px, (&fi, &mi)) in fixed.as_slice().iter().zip(moving.as_slice()).enumerate() {
        f_lo[px] = parzen.weights(fi, &mut w, &mut dw);
        f_len[px] = w.len();
        f_w[px * span..px * span + w.len()].copy_from_slice(&w);
        m_lo[px] = parzen.weights(mi, &mut w, &mut dw);
        m_len[px] = w.len();
        m_w[px * span..px * span + w.len()].copy_from_slice(&w);
        m_dw[px * span..px * span + w.len()].copy_from_slice(&dw);

        let fw = &f_w[px * span..px * span + f_len[px]];
        let mw = &m_w[px * span..px * span + m_len[px]];
        for (a, wa) in fw.iter().enumerate() {
            let row = &mut joint[(f_lo[px] + a) * bins + m_lo[px]..];
            for (b, wb) in mw.iter().enumerate() {
                row[b] += wa * wb;
            }
        }
    }
    joint.iter_mut().for_each(|p| *p *= inv_n);

    let mut p_f = vec![0.0; bins];
    let mut p_m = vec![0.0; bins];
    for k in 0..bins {
        for l in 0..bins {
            let p = joint[k * bins + l];
            p_f[k] += p;
            p_m[l] += p;
        }
    }
    let h_f: f64 = p_f.iter().map(|&p| entropy_term(p)).sum();
    let h_m: f64 = p_m.iter().map(|&p| entropy_term(p)).sum();
    let h_fm: f64 = joint.iter().map(|&p| entropy_term(p)).sum();
    if !(h_fm > 0.0) {
        return Err(Error::invalid("joint entropy vanished; NMI is undefined for constant images"));
    }
    let score = (h_f + h_m) / h_fm;

    // d score / d p_kl: the fixed marginal does not depend on the moving image
    let slope_m: Vec<f64> = p_m.iter().map(|&p| entropy_slope(p) / h_fm).collect();
    let g_joint: Vec<f64> = joint
        .iter()
        .enumerate()
        .map(|(kl, &p)| slope_m[kl % bins] - score * entropy_slope(p) / h_fm)
        .collect();

    let mut grad = vec![0.0; n];
    for px in 0..n {
        let fw = &f_w[px * span..px * span + f_len[px]];
        let mdw = &m_dw[px * span..px * span + m_len[px]];
        let mut acc = 0.0;
        for (a, wa) in fw.iter().enumerate() {
            let row = &g_joint[(f_lo[px] + a) * bins + m_lo[px]..];
            let mut inner = 0.0;
            for (b, dwb) in mdw.iter().enumerate() {
                inner += row[b] * dwb;
            }
            acc += wa * inner;
        }
        // loss is -score
        grad[px] = -acc * inv_n;
    }
    Ok(LossValueGrad {
        value: -score,
        grad: Image2D::from_raw(fixed.width(), fixed.height(), grad),
    })
}
