//! Seeded multi-modal phantoms with known segmentations and deformations.
//!
//! A phantom is a head-like arrangement of five label regions: background,
//! a thin outer ring, a convoluted intermediate layer, a core and a pair of
//! small inner blobs. Two renderings assign intensities per label; the second uses a
//! non-monotone mapping, so no global monotone intensity relation links
//! the two modalities.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::edge::gaussian_blur;
use crate::error::{Error, Result};
use crate::grid::{Image2D, LabelMap2D, VectorField2D};
use crate::transform::{svf_exp, warp_image, warp_labels, SquaringConfig};

/// Intensity of labels 0..=4 in the first modality.
pub const MODALITY_A: [f64; 5] = [0.0, 0.3, 0.5, 0.7, 0.9];
/// Intensity of labels 0..=4 in the second modality.
pub const MODALITY_B: [f64; 5] = [0.0, 0.8, 0.3, 0.9, 0.4];

pub const NUM_LABELS: u32 = 5;
pub const MIN_PHANTOM_SIZE: usize = 64;

/// Rendering nuisances applied independently to each modality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomOptions {
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Amplitude of the smooth multiplicative bias field (0.1 = +-10%).
    pub bias: f64,
}

impl Default for PhantomOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.02,
            bias: 0.1,
        }
    }
}

// independent random streams derived from one seed
const STREAM_SHAPE: u64 = 1;
const STREAM_RENDER_A: u64 = 2;
const STREAM_RENDER_B: u64 = 3;
const STREAM_FIELD: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Closed star-shaped curve
/// `r(theta) = r0 (1 + sum a_k cos(k theta + p_k)) - inset`.
#[derive(Clone)]
struct Contour {
    cx: f64,
    cy: f64,
    r0: f64,
    inset: f64,
    harmonics: Vec<(f64, f64, f64)>,
}

impl Contour {
    /// Harmonics `2..=max_k` with amplitudes up to `wobble / (k - 1)`.
    fn random(rng: &mut ChaCha8Rng, center: (f64, f64), r0: f64, wobble: f64, max_k: u32) -> Self {
        let harmonics = (2..=max_k)
            .map(|k| {
                let k = f64::from(k);
                (k, wobble * rng.random::<f64>() / (k - 1.0), TAU * rng.random::<f64>())
            })
            .collect();
        Self {
            cx: center.0,
            cy: center.1,
            r0,
            inset: 0.0,
            harmonics,
        }
    }

    /// The same curve moved inwards by `d` pixels along each ray.
    fn shrunk(&self, d: f64) -> Self {
        Self {
            inset: self.inset + d,
            ..self.clone()
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let theta = dy.atan2(dx);
        let wave: f64 = self.harmonics.iter().map(|&(k, a, p)| a * (k * theta + p).cos()).sum();
        let r = self.r0 * (1.0 + wave) - self.inset;
        r > 0.0 && dx * dx + dy * dy <= r * r
    }
}

fn phantom_labels(seed: u64, size: usize) -> LabelMap2D {
    let mut rng = stream(seed, STREAM_SHAPE);
    let s = size as f64;
    let mut jitter = |amp: f64| (rng.random::<f64>() - 0.5) * amp * s;
    let center = (0.5 * s + jitter(0.06), 0.5 * s + jitter(0.06));
    let inner_center = (center.0 + jitter(0.02), center.1 + jitter(0.02));
    let gap = (0.07 + 0.02 * (jitter(1.0) / s + 0.5)) * s;
    let blob_y = center.1 + jitter(0.02);

    let head = Contour::random(&mut rng, center, 0.42 * s, 0.06, 5);
    // thin ring of constant thickness
    let inner = head.shrunk(0.03 * s);
    // convoluted boundary, so windows often straddle three tissues
    let core = Contour::random(&mut rng, inner_center, 0.3 * s, 0.2, 9);
    let blobs = [
        Contour::random(&mut rng, (center.0 - gap, blob_y), 0.05 * s, 0.2, 4),
        Contour::random(&mut rng, (center.0 + gap, blob_y), 0.05 * s, 0.2, 4),
    ];
    LabelMap2D::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64, y as f64);
        if blobs.iter().any(|b| b.contains(px, py)) {
            4
        } else if core.contains(px, py) {
            3
        } else if inner.contains(px, py) {
            2
        } else if head.contains(px, py) {
            1
        } else {
            0
        }
    })
}

/// Smooth field in `[-1, 1]`: product of two low-frequency cosines.
fn bias_field(rng: &mut ChaCha8Rng, size: usize) -> Image2D {
    let s = size as f64;
    let fx = 0.5 + 0.5 * rng.random::<f64>();
    let fy = 0.5 + 0.5 * rng.random::<f64>();
    let px = TAU * rng.random::<f64>();
    let py = TAU * rng.random::<f64>();
    Image2D::from_fn(size, size, |x, y| {
        (TAU * fx * x as f64 / s + px).cos() * (TAU * fy * y as f64 / s + py).cos()
    })
}

fn render(labels: &LabelMap2D, table: &[f64; 5], mut rng: ChaCha8Rng, opts: &PhantomOptions) -> Image2D {
    let size = labels.width();
    let bias = bias_field(&mut rng, size);
    let noise = Normal::new(0.0, opts.noise_sigma.max(0.0)).expect("finite noise sigma");
    Image2D::from_fn(size, size, |x, y| {
        let mut v = table[labels.get(x, y) as usize];
        if opts.bias != 0.0 {
            v *= 1.0 + opts.bias * bias.get(x, y);
        }
        if opts.noise_sigma > 0.0 {
            v += noise.sample(&mut rng);
        }
        v.clamp(0.0, 1.0)
    })
}

/// Label map and both modality renderings of one phantom.
pub fn make_phantom_with(seed: u64, size: usize, opts: &PhantomOptions) -> Result<(LabelMap2D, Image2D, Image2D)> {
    if size < MIN_PHANTOM_SIZE {
        return Err(Error::invalid(format!(
            "phantom size must be >= {MIN_PHANTOM_SIZE}, got {size}"
        )));
    }
    if !(opts.noise_sigma >= 0.0 && opts.noise_sigma.is_finite()) || !opts.bias.is_finite() {
        return Err(Error::invalid("noise sigma and bias must be finite, sigma >= 0"));
    }
    let labels = phantom_labels(seed, size);
    let a = render(&labels, &MODALITY_A, stream(seed, STREAM_RENDER_A), opts);
    let b = render(&labels, &MODALITY_B, stream(seed, STREAM_RENDER_B), opts);
    Ok((labels, a, b))
}

pub fn make_phantom(seed: u64, size: usize) -> Result<(LabelMap2D, Image2D, Image2D)> {
    make_phantom_with(seed, size, &PhantomOptions::default())
}

/// Seeded smooth velocity field whose exponential has a peak displacement of
/// `max_disp` pixels (within 5%). `smooth_sigma` defaults to `size / 12`.
pub fn random_smooth_svf(seed: u64, size: usize, max_disp: f64, smooth_sigma: Option<f64>) -> Result<VectorField2D> {
    if size < 2 {
        return Err(Error::invalid("field size must be >= 2"));
    }
    if !(max_disp >= 0.0 && max_disp < size as f64 / 8.0) {
        return Err(Error::invalid(format!(
            "max_disp must lie in [0, size/8) = [0, {}), got {max_disp}",
            size as f64 / 8.0
        )));
    }
    let sigma = smooth_sigma.unwrap_or(size as f64 / 12.0);
    if !(sigma > 0.0) {
        return Err(Error::invalid("smoothing sigma must be positive"));
    }
    if max_disp == 0.0 {
        return Ok(VectorField2D::zeros(size, size));
    }
    // blur on a padded canvas so the border does not see replicated noise
    let pad = (3.0 * sigma).ceil() as usize;
    let canvas = size + 2 * pad;
    let mut rng = stream(seed, STREAM_FIELD);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut smooth_noise = || {
        let noise = Image2D::from_fn(canvas, canvas, |_, _| normal.sample(&mut rng));
        let blurred = gaussian_blur(&noise, sigma);
        Image2D::from_fn(size, size, |x, y| blurred.get(x + pad, y + pad))
    };
    let sx = smooth_noise();
    let sy = smooth_noise();
    let raw = VectorField2D::from_components(&sx, &sy)?;

    let cfg = SquaringConfig::default();
    let mut v = raw.scaled(max_disp / raw.max_norm());
    for _ in 0..20 {
        let reach = svf_exp(&v, cfg).max_norm();
        if (reach - max_disp).abs() <= 0.01 * max_disp {
            break;
        }
        v = v.scaled(max_disp / reach);
    }
    Ok(v)
}

/// Fixed/moving phantom pair with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPair {
    /// First-modality rendering.
    pub fixed: Image2D,
    /// Second-modality rendering warped by `gt_displacement`.
    pub moving: Image2D,
    pub fixed_seg: LabelMap2D,
    pub moving_seg: LabelMap2D,
    pub gt_displacement: VectorField2D,
    pub seed: u64,
}

pub fn make_pair(seed: u64, size: usize, max_disp: f64) -> Result<PhantomPair> {
    let (labels, a, b) = make_phantom(seed, size)?;
    let v = random_smooth_svf(seed, size, max_disp, None)?;
    let u = svf_exp(&v, SquaringConfig::default());
    Ok(PhantomPair {
        fixed: a,
        moving: warp_image(&b, &u)?,
        moving_seg: warp_labels(&labels, &u)?,
        fixed_seg: labels,
        gt_displacement: u,
        seed,
    })
}
