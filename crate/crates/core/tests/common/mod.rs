//! Independent reference implementations shared by the integration tests.
//! Everything here is written for clarity, not speed, and avoids the
//! library's own helpers.

#![allow(dead_code)]

use std::collections::BTreeMap;

use edgereg_core::{Image2D, LabelMap2D, VectorField2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(w: usize, h: usize, lo: f64, hi: f64, seed: u64) -> Image2D {
    let mut r = rng(seed);
    Image2D::from_fn(w, h, |_, _| lo + (hi - lo) * r.random::<f64>())
}

pub fn random_field(w: usize, h: usize, amp: f64, seed: u64) -> VectorField2D {
    let mut r = rng(seed);
    VectorField2D::from_fn(w, h, |_, _| {
        [amp * (2.0 * r.random::<f64>() - 1.0), amp * (2.0 * r.random::<f64>() - 1.0)]
    })
}

/// Gaussian-smoothed noise (replicate borders) rescaled to a given peak
/// vector norm.
pub fn smooth_field(w: usize, h: usize, sigma: f64, peak: f64, seed: u64) -> VectorField2D {
    let raw = random_field(w, h, 1.0, seed);
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ksum: f64 = k.iter().sum();
    let at = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![[0.0; 2]; w * h];
    for y in 0..h {
        for x in 0..w {
            for (t, kt) in k.iter().enumerate() {
                let v = raw.get(at(x as isize + t as isize - r, w), y);
                rows[y * w + x][0] += kt * v[0] / ksum;
                rows[y * w + x][1] += kt * v[1] / ksum;
            }
        }
    }
    let mut out = vec![[0.0; 2]; w * h];
    for y in 0..h {
        for x in 0..w {
            for (t, kt) in k.iter().enumerate() {
                let v = rows[at(y as isize + t as isize - r, h) * w + x];
                out[y * w + x][0] += kt * v[0] / ksum;
                out[y * w + x][1] += kt * v[1] / ksum;
            }
        }
    }
    let m = out.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    VectorField2D::from_fn(w, h, |x, y| {
        let v = out[y * w + x];
        [v[0] * peak / m, v[1] * peak / m]
    })
}

pub fn mse(f: &Image2D, m: &Image2D) -> f64 {
    let mut s = 0.0;
    for y in 0..f.height() {
        for x in 0..f.width() {
            let d = f.get(x, y) - m.get(x, y);
            s += d * d;
        }
    }
    s / (f.width() * f.height()) as f64
}

/// Windowed correlation with every window collected explicitly.
pub fn lncc(f: &Image2D, m: &Image2D, window: usize, eps: f64) -> f64 {
    let (w, h) = f.shape();
    let r = (window / 2) as isize;
    let mut total = 0.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut fv = Vec::new();
            let mut mv = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize {
                        fv.push(f.get(xx as usize, yy as usize));
                        mv.push(m.get(xx as usize, yy as usize));
                    }
                }
            }
            let n = fv.len() as f64;
            let mf = fv.iter().sum::<f64>() / n;
            let mm = mv.iter().sum::<f64>() / n;
            let cross: f64 = fv.iter().zip(&mv).map(|(a, b)| (a - mf) * (b - mm)).sum();
            let vf: f64 = fv.iter().map(|a| (a - mf) * (a - mf)).sum();
            let vm: f64 = mv.iter().map(|b| (b - mm) * (b - mm)).sum();
            total += cross * cross / (vf * vm + eps);
        }
    }
    -total / (w * h) as f64
}

/// Central differences inside, one-sided differences on the border.
pub fn gradient(img: &Image2D) -> Vec<[f64; 2]> {
    let (w, h) = img.shape();
    let d = |n: usize, i: usize, at: &dyn Fn(usize) -> f64| {
        if i == 0 {
            at(1) - at(0)
        } else if i == n - 1 {
            at(n - 1) - at(n - 2)
        } else {
            (at(i + 1) - at(i - 1)) / 2.0
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = d(w, x, &|i| img.get(i, y));
            let gy = d(h, y, &|j| img.get(x, j));
            out.push([gx, gy]);
        }
    }
    out
}

pub fn ngf(f: &Image2D, m: &Image2D, eps_rel: f64) -> f64 {
    let gf = gradient(f);
    let gm = gradient(m);
    let eps = |g: &[[f64; 2]]| {
        let mean = g.iter().map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt()).sum::<f64>() / g.len() as f64;
        (eps_rel * mean).max(1e-8)
    };
    let (ef, em) = (eps(&gf), eps(&gm));
    let mut total = 0.0;
    for (a, b) in gf.iter().zip(&gm) {
        let dot = a[0] * b[0] + a[1] * b[1];
        let na = a[0] * a[0] + a[1] * a[1] + ef * ef;
        let nb = b[0] * b[0] + b[1] * b[1] + em * em;
        total += 1.0 - dot * dot / (na * nb);
    }
    total / gf.len() as f64
}

/// NMI `(H_F + H_M) / H_FM` from a plain histogram with hard bin assignment.
pub fn nmi_hard(f: &Image2D, m: &Image2D, bins: usize) -> f64 {
    let bin = |v: f64| ((v * bins as f64) as usize).min(bins - 1);
    let mut joint = vec![vec![0.0; bins]; bins];
    for (a, b) in f.as_slice().iter().zip(m.as_slice()) {
        joint[bin(*a)][bin(*b)] += 1.0;
    }
    let n = f.len() as f64;
    let h = |ps: &mut dyn Iterator<Item = f64>| -> f64 {
        ps.filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
    };
    let pf: Vec<f64> = joint.iter().map(|row| row.iter().sum::<f64>() / n).collect();
    let pm: Vec<f64> = (0..bins).map(|l| joint.iter().map(|row| row[l]).sum::<f64>() / n).collect();
    let hfm = h(&mut joint.iter().flatten().map(|c| c / n));
    (h(&mut pf.into_iter()) + h(&mut pm.into_iter())) / hfm
}

pub fn dice(a: &LabelMap2D, b: &LabelMap2D, labels: &[u32]) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for &l in labels {
        let sa: Vec<usize> = (0..a.as_slice().len()).filter(|&i| a.as_slice()[i] == l).collect();
        let sb: Vec<usize> = (0..b.as_slice().len()).filter(|&i| b.as_slice()[i] == l).collect();
        if sa.is_empty() && sb.is_empty() {
            continue;
        }
        let common = sa.iter().filter(|i| sb.contains(i)).count();
        out.insert(l, 2.0 * common as f64 / (sa.len() + sb.len()) as f64);
    }
    out
}

pub fn jacobian(u: &VectorField2D) -> Vec<f64> {
    let (w, h) = u.shape();
    let ux = gradient(&u.component(0));
    let uy = gradient(&u.component(1));
    (0..w * h)
        .map(|i| (1.0 + ux[i][0]) * (1.0 + uy[i][1]) - ux[i][1] * uy[i][0])
        .collect()
}

/// Bilinear sample of a field with clamp-to-edge borders.
pub fn sample(u: &VectorField2D, x: f64, y: f64) -> [f64; 2] {
    let (w, h) = u.shape();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w - 2);
    let y0 = (y.floor() as usize).min(h - 2);
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let mut out = [0.0; 2];
    for (c, o) in out.iter_mut().enumerate() {
        let v = |xx: usize, yy: usize| u.get(xx, yy)[c];
        *o = (1.0 - ty) * ((1.0 - tx) * v(x0, y0) + tx * v(x0 + 1, y0))
            + ty * ((1.0 - tx) * v(x0, y0 + 1) + tx * v(x0 + 1, y0 + 1));
    }
    out
}

/// Forward Euler integration of `dx/dt = v(x)` over unit time; returns the
/// displacement of every grid point.
pub fn euler_flow(v: &VectorField2D, steps: usize) -> VectorField2D {
    let dt = 1.0 / steps as f64;
    VectorField2D::from_fn(v.width(), v.height(), |x, y| {
        let (mut px, mut py) = (x as f64, y as f64);
        for _ in 0..steps {
            let s = sample(v, px, py);
            px += dt * s[0];
            py += dt * s[1];
        }
        [px - x as f64, py - y as f64]
    })
}

/// Central finite differences of `f` at `x` with step `h`.
pub fn finite_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|g - fd| / |g|` over components with `|g| > floor`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(g, _)| g.abs() > floor)
        .map(|(g, n)| (g - n).abs() / g.abs())
        .fold(0.0, f64::max)
}
