//! Raster types shared by every stage of the pipeline.
//!
//! All rasters are row-major, index `y * width + x`. Vector fields store
//! their two components interleaved (`dx, dy`) so that a field can be
//! handed to the optimizer as one flat parameter slice.

use crate::error::{check_shape, Error, Result};

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "raster dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Scalar raster with double-precision intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image pixel {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps a buffer produced internally. Shape must already be consistent.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image2D {
        Image2D::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Integer label raster. Label 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap2D {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap2D {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        check_dims(width, height)?;
        if labels.len() != width * height {
            return Err(Error::invalid(format!(
                "label data has {} values, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        assert!(width > 0 && height > 0, "empty label map");
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    /// Sorted distinct labels, background included if present.
    pub fn label_set(&self) -> Vec<u32> {
        let mut set: Vec<u32> = self.labels.clone();
        set.sort_unstable();
        set.dedup();
        set
    }
}

/// Per-pixel 2-vector raster in pixel units (velocities, displacements and
/// their gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl VectorField2D {
    /// Builds a field from interleaved `(dx, dy)` components.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != 2 * width * height {
            return Err(Error::invalid(format!(
                "field data has {} components, expected 2x{}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field component {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "empty field");
        Self {
            width,
            height,
            data: vec![0.0; 2 * width * height],
        }
    }

    pub fn constant(width: usize, height: usize, v: [f64; 2]) -> Self {
        Self::from_fn(width, height, |_, _| v)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        assert!(width > 0 && height > 0, "empty field");
        let mut data = Vec::with_capacity(2 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 2 * width * height);
        Self {
            width,
            height,
            data,
        }
    }

    /// Assembles a field from separate x and y component images.
    pub fn from_components(dx: &Image2D, dy: &Image2D) -> Result<Self> {
        check_shape(dx.shape(), dy.shape())?;
        let data = dx
            .as_slice()
            .iter()
            .zip(dy.as_slice())
            .flat_map(|(&a, &b)| [a, b])
            .collect();
        Ok(Self::from_raw(dx.width(), dx.height(), data))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of pixels (not components).
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        let i = 2 * (y * self.width + x);
        [self.data[i], self.data[i + 1]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 2]) {
        let i = 2 * (y * self.width + x);
        self.data[i] = v[0];
        self.data[i + 1] = v[1];
    }

    /// Interleaved components `dx0, dy0, dx1, dy1, ...`.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// One component as a scalar image (0 = x, 1 = y).
    pub fn component(&self, c: usize) -> Image2D {
        assert!(c < 2);
        Image2D::from_raw(
            self.width,
            self.height,
            self.data.iter().skip(c).step_by(2).copied().collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> VectorField2D {
        VectorField2D::from_raw(self.width, self.height, self.data.iter().map(|v| v * s).collect())
    }

    /// Largest Euclidean vector length.
    pub fn max_norm(&self) -> f64 {
        self.data
            .chunks_exact(2)
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Mean Euclidean vector length.
    pub fn mean_norm(&self) -> f64 {
        self.data.chunks_exact(2).map(|v| v[0].hypot(v[1])).sum::<f64>()
            / self.pixel_count() as f64
    }
}

/// Affine rescale of intensities to `[0, 1]`. A constant image maps to zeros.
pub fn normalize_minmax(img: &Image2D) -> Image2D {
    let (lo, hi) = img.min_max();
    if hi > lo {
        let inv = 1.0 / (hi - lo);
        // min/max are hit exactly, clamp guards against the last-ulp overshoot
        img.map(|v| ((v - lo) * inv).clamp(0.0, 1.0))
    } else {
        Image2D::zeros(img.width(), img.height())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constructors_validate_shape_and_finiteness() {
        assert!(Image2D::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image2D::new(0, 2, vec![]).is_err());
        assert!(Image2D::new(1, 1, vec![f64::NAN]).is_err());
        assert!(VectorField2D::new(2, 1, vec![0.0; 3]).is_err());
        assert!(VectorField2D::new(1, 1, vec![0.0, f64::INFINITY]).is_err());
        assert!(LabelMap2D::new(2, 2, vec![0; 5]).is_err());
    }

    #[test]
    fn normalize_constant_is_zero() {
        let img = Image2D::filled(3, 2, 7.5);
        assert!(normalize_minmax(&img).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_two_values() {
        let img = Image2D::new(2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(normalize_minmax(&img).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn normalize_unit_range_unchanged() {
        let img = Image2D::new(3, 1, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(normalize_minmax(&img), img);
    }

    #[test]
    fn field_components_round_trip() {
        let f = VectorField2D::from_fn(3, 2, |x, y| [x as f64, -(y as f64)]);
        let g = VectorField2D::from_components(&f.component(0), &f.component(1)).unwrap();
        assert_eq!(f, g);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(vals in proptest::collection::vec(-100.0f64..100.0, 12)) {
            let img = Image2D::new(4, 3, vals).unwrap();
            let once = normalize_minmax(&img);
            let twice = normalize_minmax(&once);
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-15);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }
    }
}
