//! Two-dimensional fields, foreground masks and file I/O.
//!
//! All fields are row-major and indexed `(row, col)`; the flat index of a
//! pixel is `row * width + col`.

mod pgm;
mod raw;

pub use pgm::{decode_pgm, encode_pgm, read_labels, write_labels, BitDepth, Graymap};
pub use raw::{decode_raw, encode_raw, read_raw, write_raw, RAW_MAGIC};

use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance on `|Σ_i u_i(r) − 1|` for a valid membership map.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Label-map value for pixels outside every class.
pub const BACKGROUND_LABEL: u8 = 255;

/// Read-only view shared by every grid-shaped field.
pub trait Field {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn values(&self) -> &[f64];

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroSize);
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidData(format!(
            "{len} values for a {width}x{height} grid"
        )));
    }
    Ok(())
}

/// Boolean foreground indicator over a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_len(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.bits[index]
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Flat indices of foreground pixels, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        Error::check_dims(self.dims(), other.dims())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        Error::check_dims(self.dims(), other.dims())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits,
        })
    }
}

/// Observed intensities with an optional explicit foreground mask.
///
/// Intensities are finite and non-negative. Without an explicit mask the
/// foreground is every pixel with intensity `> 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
    mask: Option<Mask>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidData(format!(
                "intensity {v} at index {i} is negative or not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            mask: None,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn with_mask(mut self, mask: Mask) -> Result<Self> {
        Error::check_dims(self.dims(), mask.dims())?;
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn explicit_mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    /// Explicit mask if present, otherwise [`default_mask`].
    pub fn effective_mask(&self) -> Mask {
        match &self.mask {
            Some(m) => m.clone(),
            None => default_mask(self),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn into_field(self) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            data: self.data,
        }
    }

    /// Builds an image from a scalar field, keeping `mask` if given.
    pub fn from_field(field: ScalarField, mask: Option<Mask>) -> Result<Self> {
        let img = Self::new(field.width, field.height, field.data)?;
        match mask {
            Some(m) => img.with_mask(m),
            None => Ok(img),
        }
    }

    /// Multiplies every intensity by `k`, keeping the mask.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let img = Self::new(
            self.width,
            self.height,
            self.data.iter().map(|v| v * k).collect(),
        )?;
        Ok(Self {
            mask: self.mask.clone(),
            ..img
        })
    }

    /// Copy with every value clamped into `[0, 1]`.
    pub fn saturated(&self) -> Self {
        Self {
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }
}

impl Field for ImageGrid {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Foreground indicator: true exactly where intensity is positive.
pub fn default_mask(img: &ImageGrid) -> Mask {
    Mask {
        width: img.width,
        height: img.height,
        bits: img.data.iter().map(|&v| v > 0.0).collect(),
    }
}

/// A grid of finite reals: bias fields, corrected images, noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "value {v} at index {i} is not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Evaluates `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    // Internal constructor for buffers already known to be finite.
    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl Field for ScalarField {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Per-pixel class probabilities, one plane per class.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMap {
    width: usize,
    height: usize,
    planes: Vec<Vec<f64>>,
}

impl MembershipMap {
    /// Validates plane shapes and that every probability lies in `[0, 1]`.
    /// The simplex constraint is checked separately by [`check_simplex`](Self::check_simplex)
    /// since it only applies on a mask.
    pub fn new(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::InvalidParameter("membership needs at least one class".into()));
        }
        for plane in &planes {
            check_len(width, height, plane.len())?;
            if let Some((i, v)) = plane
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::OutOfRange { index: i, value: *v });
            }
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub(crate) fn from_parts(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Self {
        Self {
            width,
            height,
            planes,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn n_classes(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, class: usize) -> &[f64] {
        &self.planes[class]
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    /// Reorders planes so that new plane `k` is old plane `order[k]`.
    pub(crate) fn permuted(mut self, order: &[usize]) -> Self {
        debug_assert_eq!(order.len(), self.planes.len());
        let mut old: Vec<Option<Vec<f64>>> = self.planes.drain(..).map(Some).collect();
        self.planes = order
            .iter()
            .map(|&k| old[k].take().expect("order is a permutation"))
            .collect();
        self
    }

    pub fn check_simplex(&self, mask: &Mask) -> Result<()> {
        Error::check_dims(self.dims(), mask.dims())?;
        for r in mask.indices() {
            let sum: f64 = self.planes.iter().map(|p| p[r]).sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::SimplexViolation { index: r, sum });
            }
        }
        Ok(())
    }

    /// Index of the most probable class at every pixel; ties go to the lower class.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.width * self.height)
            .map(|r| {
                let mut best = 0;
                for k in 1..self.planes.len() {
                    if self.planes[k][r] > self.planes[best][r] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Reads a binary graymap (scaled to `[0, 1]` by its maximum value) or a
/// raw float field, chosen by the file's magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageGrid> {
    if bytes.starts_with(RAW_MAGIC) {
        let field = decode_raw(bytes)?;
        return ImageGrid::from_field(field, None);
    }
    let gm = decode_pgm(bytes)?;
    let max = f64::from(gm.maxval);
    let data = gm.pixels.iter().map(|&p| f64::from(p) / max).collect();
    ImageGrid::new(gm.width, gm.height, data)
}

/// Writes `field` as a binary graymap.
///
/// With `rescale` the field's `[min, max]` is mapped linearly onto the full
/// integer range (a constant field writes zeros); otherwise every value must
/// already lie in `[0, 1]`. Quantization rounds half up.
pub fn write_image<F: Field>(
    field: &F,
    path: impl AsRef<Path>,
    rescale: bool,
    depth: BitDepth,
) -> Result<()> {
    let path = path.as_ref();
    let gm = quantize(field, rescale, depth)?;
    std::fs::write(path, encode_pgm(&gm)).map_err(|e| Error::io(path, e))
}

pub fn quantize<F: Field>(field: &F, rescale: bool, depth: BitDepth) -> Result<Graymap> {
    let values = field.values();
    if values.is_empty() {
        return Err(Error::ZeroSize);
    }
    let maxval = depth.maxval();
    let top = f64::from(maxval);
    let (lo, span) = if rescale {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        (lo, hi - lo)
    } else {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index: i, value: *v });
        }
        (0.0, 1.0)
    };
    let pixels = values
        .iter()
        .map(|&v| {
            let unit = if span > 0.0 { (v - lo) / span } else { 0.0 };
            (unit * top + 0.5).floor().clamp(0.0, top) as u16
        })
        .collect();
    Ok(Graymap {
        width: field.width(),
        height: field.height(),
        maxval,
        pixels,
    })
}
