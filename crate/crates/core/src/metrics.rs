//! Correction quality metrics.
//!
//! PSNR and SSIM are evaluated over the union of both images' foreground
//! masks (every pixel if that union is empty). SSIM uses an 11×11 Gaussian
//! window with σ = 1.5, `C1 = (0.01 L)²`, `C2 = (0.03 L)²` and `L = 1`, local
//! statistics computed with clamp-to-edge borders.

use serde_json::{json, Map, Value};

use crate::energy::{convolve_buf, gaussian_kernel};
use crate::error::{Error, Result};
use crate::grid::{Field, ImageGrid, Mask, BACKGROUND_LABEL};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

/// `100 · σ / μ` over the selected pixels, population standard deviation.
pub fn coefficient_of_variation(img: &ImageGrid, class_mask: &Mask) -> Result<f64> {
    Error::check_dims(img.dims(), class_mask.dims())?;
    let data = img.values();
    let n = class_mask.count();
    if n < 2 {
        return Err(Error::TooFewPixels(n));
    }
    let mean = class_mask.indices().map(|r| data[r]).sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err(Error::NonPositiveMean);
    }
    let var = class_mask
        .indices()
        .map(|r| (data[r] - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(100.0 * var.sqrt() / mean)
}

fn metric_mask(reference: &ImageGrid, test: &ImageGrid) -> Result<Mask> {
    Error::check_dims(reference.dims(), test.dims())?;
    let m = reference.effective_mask().union(&test.effective_mask())?;
    if m.is_empty() {
        return Ok(Mask::full(reference.width(), reference.height()));
    }
    Ok(m)
}

/// `10 log10(peak² / MSE)`; identical images give `+∞`.
pub fn psnr(reference: &ImageGrid, test: &ImageGrid, peak: f64) -> Result<f64> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidParameter(format!("peak must be positive, got {peak}")));
    }
    let mask = metric_mask(reference, test)?;
    let (a, b) = (reference.values(), test.values());
    let mse = mask.indices().map(|r| (a[r] - b[r]).powi(2)).sum::<f64>() / mask.count() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn check_unit_range(img: &ImageGrid) -> Result<()> {
    match img
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        Some((index, &value)) => Err(Error::OutOfRange { index, value }),
        None => Ok(()),
    }
}

/// Mean local structural similarity of two images with values in `[0, 1]`.
pub fn ssim(reference: &ImageGrid, test: &ImageGrid) -> Result<f64> {
    let mask = metric_mask(reference, test)?;
    check_unit_range(reference)?;
    check_unit_range(test)?;
    let (w, h) = reference.dims();
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)?;
    let (x, y) = (reference.values(), test.values());
    let blur = |v: Vec<f64>| convolve_buf(&v, w, h, &k);
    let mx = blur(x.to_vec());
    let my = blur(y.to_vec());
    let mxx = blur(x.iter().map(|v| v * v).collect());
    let myy = blur(y.iter().map(|v| v * v).collect());
    let mxy = blur(x.iter().zip(y).map(|(a, b)| a * b).collect());
    let total: f64 = mask
        .indices()
        .map(|r| {
            let (ux, uy) = (mx[r], my[r]);
            let sxx = mxx[r] - ux * ux;
            let syy = myy[r] - uy * uy;
            let sxy = mxy[r] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * sxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (sxx + syy + SSIM_C2))
        })
        .sum();
    Ok(total / mask.count() as f64)
}

/// Metrics of one image against the clean reference.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// `(class id, CV %)` for every labelled class with at least two pixels.
    pub per_class_cv: Vec<(usize, f64)>,
    pub ssim: f64,
    pub psnr: f64,
    pub n_pixels: usize,
}

impl MetricReport {
    /// Per-class CV from `labels` (background label skipped), PSNR against
    /// `clean` with peak 1, and SSIM on copies of both images saturated to `[0, 1]`.
    pub fn evaluate(clean: &ImageGrid, labels: &[u8], test: &ImageGrid) -> Result<Self> {
        Error::check_dims(clean.dims(), test.dims())?;
        if labels.len() != clean.values().len() {
            return Err(Error::DimensionMismatch {
                expected: clean.dims(),
                found: (labels.len(), 1),
            });
        }
        let (w, h) = clean.dims();
        let n_labels = labels
            .iter()
            .filter(|&&l| l != BACKGROUND_LABEL)
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0);
        let mut per_class_cv = Vec::new();
        for k in 0..n_labels {
            let class_mask = Mask::new(w, h, labels.iter().map(|&l| l as usize == k).collect())?;
            if class_mask.count() < 2 {
                continue;
            }
            per_class_cv.push((k, coefficient_of_variation(test, &class_mask)?));
        }
        Ok(Self {
            per_class_cv,
            ssim: ssim(&clean.saturated(), &test.saturated())?,
            psnr: psnr(clean, test, 1.0)?,
            n_pixels: metric_mask(clean, test)?.count(),
        })
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = self
            .per_class_cv
            .iter()
            .map(|(k, _)| format!("class_cv_{k}"))
            .collect();
        cols.extend(["ssim", "psnr_db", "n_pixels"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.per_class_cv.iter().map(|(_, v)| fmt_sig(*v)).collect();
        cols.push(fmt_sig(self.ssim));
        cols.push(fmt_sig(self.psnr));
        cols.push(self.n_pixels.to_string());
        cols.join(",")
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        for (k, v) in &self.per_class_cv {
            obj.insert(format!("class_cv_{k}"), json!(v));
        }
        obj.insert("ssim".into(), json!(self.ssim));
        let psnr = if self.psnr.is_finite() {
            json!(self.psnr)
        } else {
            json!("inf")
        };
        obj.insert("psnr_db".into(), psnr);
        obj.insert("n_pixels".into(), json!(self.n_pixels));
        Value::Object(obj)
    }
}

/// Formats with 9 significant digits; `inf`/`-inf`/`nan` for non-finite values.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit('e').next().unwrap().parse().unwrap();
    if (-5..9).contains(&exp) {
        format!("{x:.*}", (8 - exp) as usize)
    } else {
        sci
    }
}
