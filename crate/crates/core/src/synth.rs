//! Ground-truth generators: smooth random bias fields, piecewise-constant
//! phantoms and biased observations `I = i·b + n`.
//!
//! A bias field is a random combination of 2D Legendre products up to total
//! degree `L_l` plus `sin(x^k y^(l−k))` terms up to degree `L_t`, rescaled
//! to a target interval. Legendre terms are evaluated on `[−1, 1]`, the
//! trigonometric terms on `[0, 1]`; in both cases the first and last pixel
//! centers land on the interval ends.
//!
//! Weights are drawn uniformly from `weight_range` by a ChaCha8 generator
//! seeded with `seed`: first the Legendre weights in `(i, j)` lexicographic
//! order, then the trigonometric weights in `(l, k)` lexicographic order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::grid::BACKGROUND_LABEL;
use crate::grid::{Field, ImageGrid, Mask, ScalarField};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a value uniformly from `[lo, hi)` (or exactly `lo` when equal).
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSynthSpec {
    pub legendre_degree: usize,
    pub trig_degree: usize,
    pub weight_range: (f64, f64),
    pub rescale_range: (f64, f64),
    pub seed: u64,
}

impl BiasSynthSpec {
    pub const LOW_LEVEL: (f64, f64) = (0.8, 1.2);
    pub const HIGH_LEVEL: (f64, f64) = (0.3, 1.7);

    pub fn low_level(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn high_level(seed: u64) -> Self {
        Self {
            rescale_range: Self::HIGH_LEVEL,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (wl, wh) = self.weight_range;
        let (lo, hi) = self.rescale_range;
        if !(wl.is_finite() && wh.is_finite() && wl <= wh) {
            return Err(Error::InvalidParameter(format!(
                "weight range ({wl}, {wh}) must be finite with lo <= hi"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "rescale range ({lo}, {hi}) must satisfy 0 < lo <= hi"
            )));
        }
        Ok(())
    }
}

impl Default for BiasSynthSpec {
    fn default() -> Self {
        Self {
            legendre_degree: 15,
            trig_degree: 2,
            weight_range: (-20.0, 20.0),
            rescale_range: Self::LOW_LEVEL,
            seed: 0,
        }
    }
}

/// `P_0(x) .. P_n(x)` by the Bonnet recurrence.
fn legendre_table(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Legendre polynomial `P_n(x)` on `[−1, 1]`.
pub fn legendre(n: usize, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("x = {x} outside [-1, 1]")));
    }
    Ok(legendre_table(n, x)[n])
}

/// Position of pixel center `i` of `n` on `[lo, hi]`, ends inclusive.
fn pixel_coord(i: usize, n: usize, lo: f64, hi: f64) -> f64 {
    if n == 1 {
        return 0.5 * (lo + hi);
    }
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

pub fn synth_bias(width: usize, height: usize, spec: &BiasSynthSpec) -> Result<ScalarField> {
    spec.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::ZeroSize);
    }
    let ll = spec.legendre_degree;
    let lt = spec.trig_degree;
    let (wl, wh) = spec.weight_range;
    let mut rng = seeded_rng(spec.seed);

    let mut legendre_terms = Vec::new();
    for i in 0..=ll {
        for j in 0..=ll - i {
            legendre_terms.push((i, j, uniform(&mut rng, wl, wh)));
        }
    }
    let mut trig_terms = Vec::new();
    for l in 0..=lt {
        for k in 0..=l {
            trig_terms.push((k as i32, (l - k) as i32, uniform(&mut rng, wl, wh)));
        }
    }

    let px: Vec<Vec<f64>> = (0..width)
        .map(|c| legendre_table(ll, pixel_coord(c, width, -1.0, 1.0)))
        .collect();
    let py: Vec<Vec<f64>> = (0..height)
        .map(|r| legendre_table(ll, pixel_coord(r, height, -1.0, 1.0)))
        .collect();

    let raw = ScalarField::from_fn(width, height, |row, col| {
        let (lx, ly) = (&px[col], &py[row]);
        let xt = pixel_coord(col, width, 0.0, 1.0);
        let yt = pixel_coord(row, height, 0.0, 1.0);
        let mut acc = 0.0;
        for &(i, j, w) in &legendre_terms {
            acc += w * lx[i] * ly[j];
        }
        for &(kx, ky, w) in &trig_terms {
            acc += w * (xt.powi(kx) * yt.powi(ky)).sin();
        }
        acc
    })?;
    rescale_to_range(&raw, spec.rescale_range.0, spec.rescale_range.1)
}

/// Affine map sending the field's minimum to `lo` and maximum to `hi`
/// exactly; a constant field maps to `(lo + hi) / 2`.
pub fn rescale_to_range(field: &ScalarField, lo: f64, hi: f64) -> Result<ScalarField> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidParameter(format!("bad range ({lo}, {hi})")));
    }
    let (min, max) = field.min_max();
    let span = max - min;
    let data = field
        .values()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                let t = (v - min) / span;
                (lo * (1.0 - t) + hi * t).clamp(lo, hi)
            } else {
                0.5 * (lo + hi)
            }
        })
        .collect();
    ScalarField::new(field.width(), field.height(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Geometry {
    /// Class `k` is a centered disk of radius `(n − k) / n` of half the
    /// shorter side. Pixels outside the outermost disk are background.
    ConcentricDisks,
    /// Nearest-seed cells; seed `s` carries class `s mod n`.
    VoronoiCells { seed_count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub n_classes: usize,
    pub class_intensities: Vec<f64>,
    pub geometry: Geometry,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            n_classes: 4,
            class_intensities: vec![0.25, 0.5, 0.75, 1.0],
            geometry: Geometry::ConcentricDisks,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::ZeroSize);
        }
        if self.n_classes == 0 || self.n_classes >= BACKGROUND_LABEL as usize {
            return Err(Error::InvalidParameter("class count must be in 1..=254".into()));
        }
        if self.class_intensities.len() != self.n_classes {
            return Err(Error::InvalidParameter(format!(
                "{} intensities for {} classes",
                self.class_intensities.len(),
                self.n_classes
            )));
        }
        if self
            .class_intensities
            .iter()
            .any(|&v| !(v > 0.0 && v <= 1.0))
        {
            return Err(Error::InvalidParameter("class intensities must lie in (0, 1]".into()));
        }
        if self.class_intensities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "class intensities must be strictly increasing".into(),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
        }
        if let Geometry::VoronoiCells { seed_count } = self.geometry {
            if seed_count < self.n_classes {
                return Err(Error::InvalidParameter(
                    "voronoi needs at least one seed per class".into(),
                ));
            }
        }
        Ok(())
    }
}

fn disk_labels(spec: &PhantomSpec) -> Vec<u8> {
    let (w, h, n) = (spec.width, spec.height, spec.n_classes);
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let outer = 0.5 * w.min(h) as f64;
    let mut labels = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let d = (row as f64 - cy).hypot(col as f64 - cx);
            let label = (0..n)
                .rev()
                .find(|&k| d <= outer * (n - k) as f64 / n as f64)
                .map_or(BACKGROUND_LABEL, |k| k as u8);
            labels.push(label);
        }
    }
    labels
}

fn voronoi_labels(spec: &PhantomSpec, seed_count: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (w, h) = (spec.width, spec.height);
    let seeds: Vec<(f64, f64)> = (0..seed_count)
        .map(|_| (uniform(rng, 0.0, h as f64), uniform(rng, 0.0, w as f64)))
        .collect();
    let mut labels = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let (y, x) = (row as f64 + 0.5, col as f64 + 0.5);
            let mut best = (f64::INFINITY, 0usize);
            for (s, &(sy, sx)) in seeds.iter().enumerate() {
                let d = (y - sy).powi(2) + (x - sx).powi(2);
                if d < best.0 {
                    best = (d, s);
                }
            }
            labels.push((best.1 % spec.n_classes) as u8);
        }
    }
    labels
}

/// Piecewise-constant phantom and its per-pixel class labels. Noise is added
/// inside the object only, so background stays exactly 0.
pub fn make_phantom(spec: &PhantomSpec) -> Result<(ImageGrid, Vec<u8>)> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let labels = match spec.geometry {
        Geometry::ConcentricDisks => disk_labels(spec),
        Geometry::VoronoiCells { seed_count } => voronoi_labels(spec, seed_count, &mut rng),
    };
    let mut counts = vec![0usize; spec.n_classes];
    for &l in labels.iter().filter(|&&l| l != BACKGROUND_LABEL) {
        counts[l as usize] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidParameter(format!(
            "class {k} has no pixels at {}x{}",
            spec.width, spec.height
        )));
    }
    let mut data: Vec<f64> = labels
        .iter()
        .map(|&l| match l {
            BACKGROUND_LABEL => 0.0,
            l => spec.class_intensities[l as usize],
        })
        .collect();
    let support = Mask::new(
        spec.width,
        spec.height,
        labels.iter().map(|&l| l != BACKGROUND_LABEL).collect(),
    )?;
    add_noise(&mut data, &support, spec.noise_sigma, &mut rng)?;
    Ok((ImageGrid::new(spec.width, spec.height, data)?.with_mask(support)?, labels))
}

fn add_noise(data: &mut [f64], support: &Mask, sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for r in support.indices() {
        data[r] = (data[r] + normal.sample(rng)).max(0.0);
    }
    Ok(())
}

/// `I = clean · b + n` with i.i.d. Gaussian noise on the clean image's
/// effective mask, clamped at 0. The result carries that mask.
pub fn apply_bias(clean: &ImageGrid, b: &ScalarField, noise_sigma: f64, seed: u64) -> Result<ImageGrid> {
    Error::check_dims(clean.dims(), b.dims())?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
    }
    let mut data: Vec<f64> = clean
        .values()
        .iter()
        .zip(b.values())
        .map(|(i, b)| (i * b).max(0.0))
        .collect();
    let mask = clean.effective_mask();
    add_noise(&mut data, &mask, noise_sigma, &mut seeded_rng(seed))?;
    ImageGrid::new(clean.width(), clean.height(), data)?.with_mask(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre(0, 0.37).unwrap(), 1.0);
        assert_eq!(legendre(1, 0.7).unwrap(), 0.7);
        assert!((legendre(2, 0.5).unwrap() + 0.125).abs() < 1e-15);
        assert!(legendre(3, 1.5).is_err());
    }

    #[test]
    fn legendre_closed_forms() {
        for &x in &[-1.0f64, -0.6, 0.0, 0.25, 0.9, 1.0] {
            let p3 = (5.0 * x * x * x - 3.0 * x) / 2.0;
            let p4 = (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0;
            assert!((legendre(3, x).unwrap() - p3).abs() < 1e-14);
            assert!((legendre(4, x).unwrap() - p4).abs() < 1e-14);
            // P_n(1) = 1, P_n(-1) = (-1)^n
            assert!((legendre(15, 1.0).unwrap() - 1.0).abs() < 1e-13);
            assert!((legendre(15, -1.0).unwrap() + 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_rescale_forces_constant() {
        let spec = BiasSynthSpec {
            legendre_degree: 0,
            trig_degree: 0,
            weight_range: (5.0, 5.0),
            rescale_range: (1.0, 1.0),
            seed: 3,
        };
        let b = synth_bias(6, 4, &spec).unwrap();
        assert!(b.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn synth_hits_range_endpoints() {
        for spec in [BiasSynthSpec::low_level(7), BiasSynthSpec::high_level(8)] {
            let b = synth_bias(32, 24, &spec).unwrap();
            let (lo, hi) = b.min_max();
            assert_eq!((lo, hi), spec.rescale_range);
        }
    }

    #[test]
    fn synth_is_reproducible_and_seed_dependent() {
        let a = synth_bias(16, 16, &BiasSynthSpec::low_level(1)).unwrap();
        let b = synth_bias(16, 16, &BiasSynthSpec::low_level(1)).unwrap();
        let c = synth_bias(16, 16, &BiasSynthSpec::low_level(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn synth_rejects_bad_specs() {
        let bad = BiasSynthSpec { rescale_range: (1.2, 0.8), ..Default::default() };
        assert!(synth_bias(4, 4, &bad).is_err());
        let bad = BiasSynthSpec { weight_range: (1.0, -1.0), ..Default::default() };
        assert!(synth_bias(4, 4, &bad).is_err());
        assert!(synth_bias(0, 4, &BiasSynthSpec::default()).is_err());
    }

    #[test]
    fn rescale_examples() {
        let f = ScalarField::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let r = rescale_to_range(&f, 0.8, 1.2).unwrap();
        assert_eq!(r.values()[0], 0.8);
        assert!((r.values()[1] - 1.0).abs() < 1e-15);
        assert_eq!(r.values()[2], 1.2);

        let c = ScalarField::filled(2, 2, 4.0);
        let r = rescale_to_range(&c, 0.3, 1.7).unwrap();
        assert!(r.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let r = rescale_to_range(&f, 1.0, 1.0).unwrap();
        assert!(r.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn phantom_single_class() {
        let spec = PhantomSpec {
            width: 9,
            height: 7,
            n_classes: 1,
            class_intensities: vec![0.5],
            geometry: Geometry::VoronoiCells { seed_count: 3 },
            ..Default::default()
        };
        let (img, labels) = make_phantom(&spec).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.5));
        assert!(labels.iter().all(|&l| l == 0));

        let disk = PhantomSpec { geometry: Geometry::ConcentricDisks, ..spec };
        let (img, labels) = make_phantom(&disk).unwrap();
        for (v, l) in img.values().iter().zip(&labels) {
            assert_eq!(*v, if *l == 0 { 0.5 } else { 0.0 });
        }
        assert_eq!(labels[0], BACKGROUND_LABEL);
        assert_eq!(labels[3 * 9 + 4], 0);
    }

    #[test]
    fn phantom_disks_cover_all_classes() {
        let (img, labels) = make_phantom(&PhantomSpec::default()).unwrap();
        let mut counts = [0usize; 4];
        for &l in labels.iter().filter(|&&l| l != BACKGROUND_LABEL) {
            counts[l as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
        for (v, l) in img.values().iter().zip(&labels) {
            let want = match *l {
                BACKGROUND_LABEL => 0.0,
                l => [0.25, 0.5, 0.75, 1.0][l as usize],
            };
            assert_eq!(*v, want);
        }
        // innermost disk at the center, background in the corners
        assert_eq!(labels[64 * 128 + 64], 3);
        assert_eq!(labels[64 * 128 + 1], 0);
        assert_eq!(labels[0], BACKGROUND_LABEL);
        assert_eq!(img.effective_mask().count(), counts.iter().sum::<usize>());
    }

    #[test]
    fn phantom_voronoi() {
        let spec = PhantomSpec {
            geometry: Geometry::VoronoiCells { seed_count: 12 },
            seed: 5,
            width: 64,
            height: 64,
            ..Default::default()
        };
        let (a, la) = make_phantom(&spec).unwrap();
        let (b, lb) = make_phantom(&spec).unwrap();
        assert_eq!((a, la.clone()), (b, lb));
        assert!(la.iter().all(|&l| l < 4));
    }

    #[test]
    fn phantom_validation() {
        let bad = PhantomSpec { class_intensities: vec![0.5, 0.25, 0.75, 1.0], ..Default::default() };
        assert!(make_phantom(&bad).is_err());
        let bad = PhantomSpec { class_intensities: vec![0.0, 0.25, 0.75, 1.0], ..Default::default() };
        assert!(make_phantom(&bad).is_err());
        let bad = PhantomSpec { width: 3, height: 3, ..Default::default() };
        assert!(make_phantom(&bad).is_err());
    }

    #[test]
    fn phantom_noise_is_clamped() {
        let spec = PhantomSpec {
            width: 32,
            height: 32,
            noise_sigma: 0.3,
            seed: 9,
            ..Default::default()
        };
        let (img, labels) = make_phantom(&spec).unwrap();
        assert!(img.values().iter().all(|&v| v >= 0.0));
        for (v, l) in img.values().iter().zip(&labels) {
            if *l == BACKGROUND_LABEL {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(img.values().iter().any(|&v| v != 0.25 && v != 0.5 && v != 0.75 && v != 1.0));
    }

    #[test]
    fn apply_bias_examples() {
        let clean = ImageGrid::new(1, 1, vec![0.5]).unwrap();
        let b = ScalarField::filled(1, 1, 1.5);
        assert_eq!(apply_bias(&clean, &b, 0.0, 0).unwrap().values(), &[0.75]);

        let (clean, _) = make_phantom(&PhantomSpec { width: 16, height: 16, ..Default::default() }).unwrap();
        let out = apply_bias(&clean, &ScalarField::filled(16, 16, 1.0), 0.0, 0).unwrap();
        assert_eq!(out.values(), clean.values());
        assert_eq!(out.effective_mask(), clean.effective_mask());
        assert!(apply_bias(&clean, &ScalarField::filled(15, 16, 1.0), 0.0, 0).is_err());
    }
}
