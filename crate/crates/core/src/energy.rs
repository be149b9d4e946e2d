//! Fuzzy-clustering energy with a multiplicative bias and its closed-form
//! coordinate updates.
//!
//! For an image `I`, memberships `u`, centers `c` and bias `b` the energy is
//!
//! ```text
//! E = Σ_i Σ_{r ∈ mask} u_i(r)^p · (I(r) − b(r)·c_i)²
//! ```
//!
//! subject to `Σ_i u_i(r) = 1` on the mask. Each update minimizes `E` over
//! one block with the others fixed; the bias update additionally smooths
//! numerator and denominator with a Gaussian kernel before dividing.
//!
//! Pixel sums run in ascending flat-index order, class sums in ascending
//! class order, so results are bitwise reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, ImageGrid, Mask, MembershipMap, ScalarField};

/// Distances and denominators below this are treated as zero.
pub const ZERO_GUARD: f64 = 1e-12;

/// Gap inserted between tied class centers.
pub const CENTER_JITTER: f64 = 1e-9;

/// Fuzziness exponent `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Fuzziness(f64);

impl Fuzziness {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidParameter(format!("fuzziness must be > 1, got {p}")));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `u^p`
    #[inline]
    pub fn pow(self, u: f64) -> f64 {
        if self.0 == 2.0 {
            u * u
        } else {
            u.powf(self.0)
        }
    }
}

impl Default for Fuzziness {
    fn default() -> Self {
        Self(2.0)
    }
}

impl TryFrom<f64> for Fuzziness {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<Fuzziness> for f64 {
    fn from(p: Fuzziness) -> f64 {
        p.0
    }
}

/// Class centers, strictly increasing and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters(Vec<f64>);

impl ClassCenters {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("at least one class center required".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "class centers must be finite and non-negative".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "class centers must be strictly increasing".into(),
            ));
        }
        Ok(Self(values))
    }

    /// Sorts `values` ascending and separates ties by [`CENTER_JITTER`].
    /// Returns the centers and the order: new position `k` holds old index `order[k]`.
    pub(crate) fn sorted_with_order(values: Vec<f64>) -> (Self, Vec<usize>) {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut sorted: Vec<f64> = order.iter().map(|&k| values[k].max(0.0)).collect();
        for k in 1..sorted.len() {
            if sorted[k] <= sorted[k - 1] {
                sorted[k] = sorted[k - 1] + CENTER_JITTER;
            }
        }
        (Self(sorted), order)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiplies every center by `k > 0`; order is preserved.
    pub fn scaled(&self, k: f64) -> Self {
        debug_assert!(k > 0.0);
        Self(self.0.iter().map(|c| c * k).collect())
    }
}

/// Square, normalized, symmetric convolution kernel of odd size.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    /// The 1×1 kernel `[1]`.
    pub fn identity() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    /// Normalizes `weights` (row-major, `size × size`) to unit sum.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::InvalidParameter(format!("kernel size {size} must be odd")));
        }
        if weights.len() != size * size {
            return Err(Error::InvalidParameter("kernel weight count".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("kernel weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("kernel weights sum to zero".into()));
        }
        let at = |r: usize, c: usize| weights[r * size + c];
        for r in 0..size {
            for c in 0..size {
                let w = at(r, c);
                if w != at(c, r) || w != at(size - 1 - r, c) || w != at(r, size - 1 - c) {
                    return Err(Error::InvalidParameter("kernel must be symmetric".into()));
                }
            }
        }
        Ok(Self {
            size,
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }
}

/// Sampled isotropic Gaussian, `exp(−(dx² + dy²) / 2σ²)` at integer offsets,
/// normalized to unit sum.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel2D> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "kernel size must be odd and positive, got {size}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (size / 2) as i64;
    let two_var = 2.0 * sigma * sigma;
    let mut weights = Vec::with_capacity(size * size);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let d2 = (dx * dx + dy * dy) as f64;
            weights.push((-d2 / two_var).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    Ok(Kernel2D {
        size,
        weights: weights.into_iter().map(|w| w / total).collect(),
    })
}

/// Same-size convolution with clamp-to-edge boundary handling.
pub fn convolve_same(field: &ScalarField, k: &Kernel2D) -> ScalarField {
    let (w, h) = field.dims();
    ScalarField::from_parts(w, h, convolve_buf(field.values(), w, h, k))
}

pub(crate) fn convolve_buf(data: &[f64], width: usize, height: usize, k: &Kernel2D) -> Vec<f64> {
    if k.size() == 1 {
        return data.to_vec();
    }
    let radius = k.radius() as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = vec![0.0; width * height];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for ky in 0..k.size() {
                let sy = clamp(row as isize + ky as isize - radius, height);
                let line = &data[sy * width..(sy + 1) * width];
                for kx in 0..k.size() {
                    let sx = clamp(col as isize + kx as isize - radius, width);
                    acc += k.weight(ky, kx) * line[sx];
                }
            }
            out[row * width + col] = acc;
        }
    }
    out
}

/// Bounds applied to the bias after each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasClamp {
    pub lo: f64,
    pub hi: f64,
}

impl BiasClamp {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "bias clamp needs 0 < lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn apply(self, b: f64) -> f64 {
        b.clamp(self.lo, self.hi)
    }
}

impl Default for BiasClamp {
    fn default() -> Self {
        Self { lo: 0.2, hi: 2.5 }
    }
}

fn check_membership_shape(img: &ImageGrid, u: &MembershipMap, c: &ClassCenters) -> Result<()> {
    Error::check_dims(img.dims(), u.dims())?;
    if u.n_classes() != c.len() {
        return Err(Error::InvalidParameter(format!(
            "{} membership planes for {} centers",
            u.n_classes(),
            c.len()
        )));
    }
    Ok(())
}

/// `Σ_i Σ_{r ∈ mask} u_i(r)^p (I(r) − b(r) c_i)²`
pub fn evaluate_energy(
    img: &ImageGrid,
    u: &MembershipMap,
    c: &ClassCenters,
    b: &ScalarField,
    p: Fuzziness,
) -> Result<f64> {
    check_membership_shape(img, u, c)?;
    Error::check_dims(img.dims(), b.dims())?;
    let mask = img.effective_mask();
    u.check_simplex(&mask)?;
    Ok(energy_on_mask(img.values(), &mask, u, c, b.values(), p))
}

pub(crate) fn energy_on_mask(
    data: &[f64],
    mask: &Mask,
    u: &MembershipMap,
    c: &ClassCenters,
    b: &[f64],
    p: Fuzziness,
) -> f64 {
    let mut total = 0.0;
    for (plane, &ci) in u.planes().iter().zip(c.values()) {
        for r in mask.indices() {
            let resid = data[r] - b[r] * ci;
            total += p.pow(plane[r]) * resid * resid;
        }
    }
    total
}

/// Closed-form optimal memberships for fixed `b` and `c`.
///
/// `u_i = 1 / Σ_j (d_i² / d_j²)^(1/(p−1))` with `d_i = |I − b c_i|`. Classes
/// with `d_i <` [`ZERO_GUARD`] share probability 1 equally. Background
/// pixels are assigned wholly to class 0.
pub fn update_membership(
    img: &ImageGrid,
    b: &ScalarField,
    c: &ClassCenters,
    p: Fuzziness,
) -> Result<MembershipMap> {
    Error::check_dims(img.dims(), b.dims())?;
    let mask = img.effective_mask();
    Ok(membership_on_mask(img.values(), &mask, b.values(), c, p))
}

pub(crate) fn membership_on_mask(
    data: &[f64],
    mask: &Mask,
    b: &[f64],
    c: &ClassCenters,
    p: Fuzziness,
) -> MembershipMap {
    let n = c.len();
    let npix = data.len();
    let exponent = -1.0 / (p.value() - 1.0);
    let mut planes = vec![vec![0.0; npix]; n];
    let mut dist = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for r in 0..npix {
        if !mask.contains(r) {
            planes[0][r] = 1.0;
            continue;
        }
        let mut zeros = 0usize;
        for (d, &ci) in dist.iter_mut().zip(c.values()) {
            *d = (data[r] - b[r] * ci).abs();
            if *d < ZERO_GUARD {
                zeros += 1;
            }
        }
        if zeros > 0 {
            let share = 1.0 / zeros as f64;
            for (plane, &d) in planes.iter_mut().zip(&dist) {
                plane[r] = if d < ZERO_GUARD { share } else { 0.0 };
            }
            continue;
        }
        // (d_i²)^(-1/(p-1)) / Σ_j (d_j²)^(-1/(p-1)) is the same ratio without
        // overflow for widely separated distances.
        let mut sum = 0.0;
        for (wt, &d) in wts.iter_mut().zip(&dist) {
            *wt = if p.value() == 2.0 {
                1.0 / (d * d)
            } else {
                (d * d).powf(exponent)
            };
            sum += *wt;
        }
        for (plane, &wt) in planes.iter_mut().zip(&wts) {
            plane[r] = (wt / sum).clamp(0.0, 1.0);
        }
    }
    MembershipMap::from_parts(mask.width(), mask.height(), planes)
}

/// Closed-form optimal centers for fixed `u` and `b`.
///
/// `c_i = Σ b I u_i^p / Σ b² u_i^p` over the mask. A class whose denominator
/// is below [`ZERO_GUARD`] keeps `prev[i]`. Centers come back sorted, and the
/// membership planes are permuted to match.
pub fn update_centers(
    img: &ImageGrid,
    b: &ScalarField,
    u: MembershipMap,
    p: Fuzziness,
    prev: &ClassCenters,
) -> Result<(ClassCenters, MembershipMap)> {
    check_membership_shape(img, &u, prev)?;
    Error::check_dims(img.dims(), b.dims())?;
    let mask = img.effective_mask();
    Ok(centers_on_mask(img.values(), &mask, b.values(), u, p, prev))
}

pub(crate) fn centers_on_mask(
    data: &[f64],
    mask: &Mask,
    b: &[f64],
    u: MembershipMap,
    p: Fuzziness,
    prev: &ClassCenters,
) -> (ClassCenters, MembershipMap) {
    let raw: Vec<f64> = u
        .planes()
        .iter()
        .zip(prev.values())
        .map(|(plane, &old)| {
            let (mut num, mut den) = (0.0, 0.0);
            for r in mask.indices() {
                let up = p.pow(plane[r]);
                num += b[r] * data[r] * up;
                den += b[r] * b[r] * up;
            }
            if den < ZERO_GUARD {
                old
            } else {
                num / den
            }
        })
        .collect();
    let (centers, order) = ClassCenters::sorted_with_order(raw);
    let identity = order.iter().enumerate().all(|(k, &o)| k == o);
    let u = if identity { u } else { u.permuted(&order) };
    (centers, u)
}

/// Smoothed closed-form bias for fixed `u` and `c`.
///
/// `b = (K * Σ_i c_i I u_i^p) / (K * Σ_i c_i² u_i^p)`, both fields zeroed off
/// the mask before convolving. Pixels with a smoothed denominator below
/// [`ZERO_GUARD`] and all background pixels get 1. With `clamp = None` the
/// ratio is left unbounded.
pub fn update_bias(
    img: &ImageGrid,
    u: &MembershipMap,
    c: &ClassCenters,
    p: Fuzziness,
    k: &Kernel2D,
    clamp: Option<BiasClamp>,
) -> Result<ScalarField> {
    check_membership_shape(img, u, c)?;
    let mask = img.effective_mask();
    Ok(bias_on_mask(img.values(), &mask, u, c, p, k, clamp))
}

pub(crate) fn bias_on_mask(
    data: &[f64],
    mask: &Mask,
    u: &MembershipMap,
    c: &ClassCenters,
    p: Fuzziness,
    k: &Kernel2D,
    clamp: Option<BiasClamp>,
) -> ScalarField {
    let (w, h) = mask.dims();
    let npix = data.len();
    let mut num = vec![0.0; npix];
    let mut den = vec![0.0; npix];
    for r in mask.indices() {
        let (mut n, mut d) = (0.0, 0.0);
        for (plane, &ci) in u.planes().iter().zip(c.values()) {
            let up = p.pow(plane[r]);
            n += ci * data[r] * up;
            d += ci * ci * up;
        }
        num[r] = n;
        den[r] = d;
    }
    let num = convolve_buf(&num, w, h, k);
    let den = convolve_buf(&den, w, h, k);
    let b = (0..npix)
        .map(|r| {
            if !mask.contains(r) || den[r] < ZERO_GUARD {
                return 1.0;
            }
            let ratio = num[r] / den[r];
            match clamp {
                Some(cl) => cl.apply(ratio),
                None => ratio,
            }
        })
        .collect();
    ScalarField::from_parts(w, h, b)
}
