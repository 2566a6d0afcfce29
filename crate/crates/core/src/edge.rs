//! Gradient-magnitude edge maps.

use crate::error::{Error, Result};
use crate::grid::{Image2D, VectorField2D};

/// Edge extraction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeOptions {
    /// Standard deviation of the Gaussian pre-smoothing in pixels; 0 disables it.
    pub sigma_pre: f64,
    /// Rescale the magnitude by its maximum so the map lies in `[0, 1]`.
    pub normalize: bool,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        Self {
            sigma_pre: 1.0,
            normalize: true,
        }
    }
}

fn require_2x2(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::invalid(format!(
            "image must be at least 2x2 for finite differences, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Finite-difference stencil along one axis of length `n >= 2`:
/// `(lower index, upper index, weight)` so that `d(i) = w * (f[hi] - f[lo])`.
#[inline]
pub(crate) fn diff_stencil(i: usize, n: usize) -> (usize, usize, f64) {
    if i == 0 {
        (0, 1, 1.0)
    } else if i == n - 1 {
        (n - 2, n - 1, 1.0)
    } else {
        (i - 1, i + 1, 0.5)
    }
}

/// Central differences in the interior, one-sided differences on the border.
pub fn gradient_central(img: &Image2D) -> Result<VectorField2D> {
    let (w, h) = img.shape();
    require_2x2(w, h)?;
    Ok(VectorField2D::from_fn(w, h, |x, y| {
        let (xl, xh, wx) = diff_stencil(x, w);
        let (yl, yh, wy) = diff_stencil(y, h);
        [
            wx * (img.get(xh, y) - img.get(xl, y)),
            wy * (img.get(x, yh) - img.get(x, yl)),
        ]
    }))
}

/// Transpose of [`gradient_central`]: maps a field-shaped cotangent back to
/// an image-shaped one.
pub fn gradient_central_adjoint(g: &VectorField2D) -> Result<Image2D> {
    let (w, h) = g.shape();
    require_2x2(w, h)?;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (yl, yh, wy) = diff_stencil(y, h);
        for x in 0..w {
            let (xl, xh, wx) = diff_stencil(x, w);
            let [gx, gy] = g.get(x, y);
            out[y * w + xh] += wx * gx;
            out[y * w + xl] -= wx * gx;
            out[yh * w + x] += wy * gy;
            out[yl * w + x] -= wy * gy;
        }
    }
    Ok(Image2D::from_raw(w, h, out))
}

/// Normalized Gaussian kernel truncated at `3 sigma`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / denom).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian smoothing with replicate padding. `sigma <= 0`
/// returns a copy.
pub fn gaussian_blur(img: &Image2D, sigma: f64) -> Image2D {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = img.shape();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * img.get(clamp(x as isize + k as isize - r, w), y);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[clamp(y as isize + k as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Image2D::from_raw(w, h, out)
}

/// Gradient-magnitude edge map, optionally pre-smoothed and max-normalized.
pub fn edge_map(img: &Image2D, opts: &EdgeOptions) -> Result<Image2D> {
    if opts.sigma_pre < 0.0 || !opts.sigma_pre.is_finite() {
        return Err(Error::invalid(format!("sigma_pre must be >= 0, got {}", opts.sigma_pre)));
    }
    require_2x2(img.width(), img.height())?;
    let smoothed = gaussian_blur(img, opts.sigma_pre);
    let g = gradient_central(&smoothed)?;
    let mag: Vec<f64> = g
        .as_slice()
        .chunks_exact(2)
        .map(|v| v[0].hypot(v[1]))
        .collect();
    let mut e = Image2D::from_raw(img.width(), img.height(), mag);
    if opts.normalize {
        let peak = e.as_slice().iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            e.as_mut_slice().iter_mut().for_each(|v| *v /= peak);
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw() -> EdgeOptions {
        EdgeOptions {
            sigma_pre: 0.0,
            normalize: true,
        }
    }

    fn random_image(w: usize, h: usize, seed: u64) -> Image2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image2D::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    fn rot90(img: &Image2D) -> Image2D {
        // (x, y) -> (h-1-y, x)
        let (w, h) = img.shape();
        Image2D::from_fn(h, w, |x, y| img.get(y, h - 1 - x))
    }

    #[test]
    fn constant_has_no_gradient() {
        let g = gradient_central(&Image2D::filled(4, 3, 2.5)).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_gradient_is_exact() {
        let img = Image2D::from_fn(5, 4, |x, _| x as f64);
        let g = gradient_central(&img).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(g.get(x, y), [1.0, 0.0]);
            }
        }
    }

    #[test]
    fn impulse_border_and_interior() {
        let mut img = Image2D::zeros(3, 3);
        img.set(1, 1, 4.0);
        let g = gradient_central(&img).unwrap();
        assert_eq!(g.get(0, 1)[0], 4.0);
        assert_eq!(g.get(1, 1)[0], 0.0);
        assert_eq!(g.get(2, 1)[0], -4.0);
    }

    #[test]
    fn too_small_rejected() {
        assert!(gradient_central(&Image2D::zeros(1, 5)).is_err());
        assert!(edge_map(&Image2D::zeros(5, 1), &raw()).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let img = random_image(7, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = VectorField2D::from_fn(7, 5, |_, _| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]);
        let fwd = gradient_central(&img).unwrap();
        let lhs: f64 = fwd.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
        let back = gradient_central_adjoint(&g).unwrap();
        let rhs: f64 = img.as_slice().iter().zip(back.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn constant_edge_map_is_zero() {
        for sigma in [0.0, 1.0, 2.5] {
            let e = edge_map(&Image2D::filled(8, 8, 0.3), &EdgeOptions { sigma_pre: sigma, normalize: true }).unwrap();
            assert!(e.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn diagonal_ramp_normalizes_to_one() {
        let img = Image2D::from_fn(6, 6, |x, y| (x + y) as f64);
        let g = gradient_central(&img).unwrap();
        assert!((g.get(2, 3)[0].hypot(g.get(2, 3)[1]) - 2f64.sqrt()).abs() < 1e-15);
        let e = edge_map(&img, &raw()).unwrap();
        for y in 1..5 {
            for x in 1..5 {
                assert!((e.get(x, y) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let img = random_image(8, 8, 11);
        let at = |x: isize, y: isize| img.get(x as usize, y as usize);
        let mut mags = vec![0.0; 64];
        for y in 0..8isize {
            for x in 0..8isize {
                let gx = match x {
                    0 => at(1, y) - at(0, y),
                    7 => at(7, y) - at(6, y),
                    _ => (at(x + 1, y) - at(x - 1, y)) / 2.0,
                };
                let gy = match y {
                    0 => at(x, 1) - at(x, 0),
                    7 => at(x, 7) - at(x, 6),
                    _ => (at(x, y + 1) - at(x, y - 1)) / 2.0,
                };
                mags[(y * 8 + x) as usize] = (gx * gx + gy * gy).sqrt();
            }
        }
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        let e = edge_map(&img, &raw()).unwrap();
        for (a, b) in e.as_slice().iter().zip(&mags) {
            assert!((a - b / peak).abs() < 1e-15);
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let b = gaussian_blur(&Image2D::filled(5, 9, 0.7), 1.5);
        assert!(b.as_slice().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn rotation_equivariance(seed in any::<u64>(), sigma in prop_oneof![Just(0.0), Just(1.0)]) {
            let img = random_image(7, 5, seed);
            let opts = EdgeOptions { sigma_pre: sigma, normalize: true };
            let a = edge_map(&rot90(&img), &opts).unwrap();
            let b = rot90(&edge_map(&img, &opts).unwrap());
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn shift_and_scale_invariance(seed in any::<u64>(), c in -5.0f64..5.0, a in 0.1f64..10.0) {
            let img = random_image(6, 6, seed);
            let opts = EdgeOptions::default();
            let base = edge_map(&img, &opts).unwrap();
            let shifted = edge_map(&img.map(|v| v + c), &opts).unwrap();
            let scaled = edge_map(&img.map(|v| a * v), &opts).unwrap();
            for ((p, q), r) in base.as_slice().iter().zip(shifted.as_slice()).zip(scaled.as_slice()) {
                prop_assert!((p - q).abs() < 1e-9);
                prop_assert!((p - r).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(p));
            }
        }
    }
}
