//! Alternating minimization driver.
//!
//! Each step refreshes the class centers, recomputes memberships, refreshes
//! the centers again, then recomputes the smoothed bias. Iteration stops once
//! the mean squared change of the bias over the mask drops below `epsilon`
//! or after `max_iters` steps.

use serde::{Deserialize, Serialize};

use crate::energy::{
    bias_on_mask, centers_on_mask, energy_on_mask, gaussian_kernel, membership_on_mask,
    BiasClamp, ClassCenters, Fuzziness, Kernel2D,
};
use crate::error::{Error, Result};
use crate::grid::{Field, ImageGrid, Mask, MembershipMap, ScalarField};

/// Lower bound on the bias when dividing it out of the image.
pub const DIVISION_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_classes: usize,
    pub fuzziness: f64,
    pub kernel_size: usize,
    /// `None` means `kernel_size / 3`.
    pub kernel_sigma: Option<f64>,
    pub max_iters: usize,
    pub epsilon: f64,
    /// `None` disables clamping.
    pub bias_clamp: Option<BiasClamp>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_classes: 4,
            fuzziness: 2.0,
            kernel_size: 5,
            kernel_sigma: None,
            max_iters: 200,
            epsilon: 1e-6,
            bias_clamp: Some(BiasClamp::default()),
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// Unsmoothed, unclamped variant: every update is an exact block minimizer.
    pub fn exact_descent(n_classes: usize) -> Self {
        Self {
            n_classes,
            kernel_size: 1,
            bias_clamp: None,
            ..Self::default()
        }
    }

    pub fn sigma(&self) -> f64 {
        self.kernel_sigma
            .unwrap_or(self.kernel_size as f64 / 3.0)
    }

    /// Copy with `kernel_sigma` filled in.
    pub fn materialized(&self) -> Self {
        Self {
            kernel_sigma: Some(self.sigma()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    fn prepare(&self) -> Result<Prepared> {
        if self.n_classes == 0 || self.n_classes > 255 {
            return Err(Error::InvalidParameter(format!(
                "class count must be in 1..=255, got {}",
                self.n_classes
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if let Some(cl) = self.bias_clamp {
            BiasClamp::new(cl.lo, cl.hi)?;
        }
        Ok(Prepared {
            p: Fuzziness::new(self.fuzziness)?,
            kernel: gaussian_kernel(self.kernel_size, self.sigma())?,
            clamp: self.bias_clamp,
        })
    }
}

struct Prepared {
    p: Fuzziness,
    kernel: Kernel2D,
    clamp: Option<BiasClamp>,
}

/// Iterates of the alternation.
///
/// `energy_trace[0]` is the energy of the initial state; every step appends
/// one energy and one mean squared bias change.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub iteration: usize,
    pub membership: MembershipMap,
    pub centers: ClassCenters,
    pub bias: ScalarField,
    pub energy_trace: Vec<f64>,
    pub bias_change_trace: Vec<f64>,
}

impl SolverState {
    pub fn energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace starts with the initial energy")
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub energy: f64,
    pub bias_ms_change: f64,
    pub centers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionResult {
    /// `I / b` on the mask, `I` elsewhere.
    pub corrected: ScalarField,
    /// Mean-normalized bias, 1 off the mask.
    pub bias: ScalarField,
    pub membership: MembershipMap,
    /// Centers rescaled to match the normalized bias.
    pub centers: ClassCenters,
    pub converged: bool,
    pub iterations: usize,
    pub final_energy: f64,
    pub trace: Vec<TraceRecord>,
}

fn foreground(img: &ImageGrid) -> Result<Mask> {
    let mask = img.effective_mask();
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

/// `n` centers evenly spaced from the smallest to the largest masked
/// intensity, or their midpoint when `n = 1`.
fn spread_centers(img: &ImageGrid, mask: &Mask, n: usize) -> ClassCenters {
    let data = img.values();
    let (lo, hi) = mask
        .indices()
        .map(|r| data[r])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let picks = if n == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                lo * (1.0 - t) + hi * t
            })
            .collect()
    };
    ClassCenters::sorted_with_order(picks).0
}

/// Unit bias, evenly spread centers and the memberships they imply.
pub fn initialize(img: &ImageGrid, cfg: &SolverConfig) -> Result<SolverState> {
    let prep = cfg.prepare()?;
    let mask = foreground(img)?;
    let (w, h) = img.dims();
    let bias = ScalarField::filled(w, h, 1.0);
    let centers = spread_centers(img, &mask, cfg.n_classes);
    let membership = membership_on_mask(img.values(), &mask, bias.values(), &centers, prep.p);
    let e0 = energy_on_mask(img.values(), &mask, &membership, &centers, bias.values(), prep.p);
    Ok(SolverState {
        iteration: 0,
        membership,
        centers,
        bias,
        energy_trace: vec![e0],
        bias_change_trace: Vec::new(),
    })
}

fn step_prepared(img: &ImageGrid, mask: &Mask, s: SolverState, prep: &Prepared) -> SolverState {
    let data = img.values();
    let b_old = s.bias;
    let (c, _) = centers_on_mask(data, mask, b_old.values(), s.membership, prep.p, &s.centers);
    let u = membership_on_mask(data, mask, b_old.values(), &c, prep.p);
    let (c, u) = centers_on_mask(data, mask, b_old.values(), u, prep.p, &c);
    let b = bias_on_mask(data, mask, &u, &c, prep.p, &prep.kernel, prep.clamp);

    let energy = energy_on_mask(data, mask, &u, &c, b.values(), prep.p);
    let change = squared_change(b.values(), b_old.values(), mask) / mask.count() as f64;

    let mut energy_trace = s.energy_trace;
    energy_trace.push(energy);
    let mut bias_change_trace = s.bias_change_trace;
    bias_change_trace.push(change);
    SolverState {
        iteration: s.iteration + 1,
        membership: u,
        centers: c,
        bias: b,
        energy_trace,
        bias_change_trace,
    }
}

/// One round of centers → memberships → centers → bias.
pub fn step(img: &ImageGrid, s: SolverState, cfg: &SolverConfig) -> Result<SolverState> {
    Error::check_dims(img.dims(), s.bias.dims())?;
    Error::check_dims(img.dims(), s.membership.dims())?;
    if s.membership.n_classes() != s.centers.len() {
        return Err(Error::InvalidParameter(
            "membership planes and centers disagree".into(),
        ));
    }
    let prep = cfg.prepare()?;
    let mask = foreground(img)?;
    Ok(step_prepared(img, &mask, s, &prep))
}

/// Runs the alternation to convergence and extracts the corrected image.
pub fn fit(img: &ImageGrid, cfg: &SolverConfig) -> Result<CorrectionResult> {
    let prep = cfg.prepare()?;
    let mask = foreground(img)?;
    let mut state = initialize(img, cfg)?;
    let mut trace = Vec::new();
    let mut converged = false;
    while state.iteration < cfg.max_iters {
        state = step_prepared(img, &mask, state, &prep);
        let change = *state.bias_change_trace.last().unwrap();
        trace.push(TraceRecord {
            iteration: state.iteration,
            energy: state.energy(),
            bias_ms_change: change,
            centers: state.centers.values().to_vec(),
        });
        if change < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let (bias, centers) = normalize_bias(&state.bias, &state.centers, &mask)?;
    let data = img.values();
    let corrected = (0..data.len())
        .map(|r| {
            if mask.contains(r) {
                data[r] / bias.values()[r].max(DIVISION_GUARD)
            } else {
                data[r]
            }
        })
        .collect();
    let (w, h) = img.dims();
    let final_energy = energy_on_mask(data, &mask, &state.membership, &centers, bias.values(), prep.p);
    Ok(CorrectionResult {
        corrected: ScalarField::new(w, h, corrected)?,
        bias,
        membership: state.membership,
        centers,
        converged,
        iterations: state.iteration,
        final_energy,
        trace,
    })
}

/// Divides the bias by its mean `μ` over the mask and multiplies the centers
/// by `μ`, which leaves the energy unchanged. Pixels off the mask keep their value.
pub fn normalize_bias(
    b: &ScalarField,
    c: &ClassCenters,
    mask: &Mask,
) -> Result<(ScalarField, ClassCenters)> {
    Error::check_dims(b.dims(), mask.dims())?;
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let values = b.values();
    let mean = mask.indices().map(|r| values[r]).sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err(Error::NonPositiveMean);
    }
    let scaled = values
        .iter()
        .enumerate()
        .map(|(r, &v)| if mask.contains(r) { v / mean } else { v })
        .collect();
    Ok((
        ScalarField::new(b.width(), b.height(), scaled)?,
        c.scaled(mean),
    ))
}

fn squared_change(new: &[f64], old: &[f64], mask: &Mask) -> f64 {
    mask.indices()
        .map(|r| {
            let d = new[r] - old[r];
            d * d
        })
        .sum()
}

/// `Σ_i Σ_{r ∈ mask} (u_i(r) − u_i^old(r))²`
pub fn seg_residual(u_new: &MembershipMap, u_old: &MembershipMap, mask: &Mask) -> Result<f64> {
    Error::check_dims(u_new.dims(), u_old.dims())?;
    Error::check_dims(u_new.dims(), mask.dims())?;
    if u_new.n_classes() != u_old.n_classes() {
        return Err(Error::InvalidParameter("class counts differ".into()));
    }
    Ok(u_new
        .planes()
        .iter()
        .zip(u_old.planes())
        .map(|(a, b)| squared_change(a, b, mask))
        .sum())
}

/// `Σ_{r ∈ mask} (b_new(r) − b_old(r))²`
pub fn bias_residual(b_new: &ScalarField, b_old: &ScalarField, mask: &Mask) -> Result<f64> {
    Error::check_dims(b_new.dims(), b_old.dims())?;
    Error::check_dims(b_new.dims(), mask.dims())?;
    Ok(squared_change(b_new.values(), b_old.values(), mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::evaluate_energy;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig { n_classes: 0, ..Default::default() },
            SolverConfig { fuzziness: 1.0, ..Default::default() },
            SolverConfig { kernel_size: 4, ..Default::default() },
            SolverConfig { kernel_sigma: Some(0.0), ..Default::default() },
            SolverConfig { max_iters: 0, ..Default::default() },
            SolverConfig { epsilon: 0.0, ..Default::default() },
            SolverConfig { bias_clamp: Some(BiasClamp { lo: 2.0, hi: 1.0 }), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn default_sigma_is_size_over_three() {
        let cfg = SolverConfig::default();
        assert!((cfg.sigma() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(cfg.materialized().kernel_sigma, Some(cfg.sigma()));
    }

    #[test]
    fn initialize_single_class_constant() {
        let img = ImageGrid::filled(4, 4, 0.5).unwrap();
        let cfg = SolverConfig { n_classes: 1, ..Default::default() };
        let s = initialize(&img, &cfg).unwrap();
        assert_eq!(s.centers.values(), &[0.5]);
        assert!(s.membership.plane(0).iter().all(|&u| u == 1.0));
        assert!(s.bias.values().iter().all(|&b| b == 1.0));
        assert_eq!(s.iteration, 0);
        assert_eq!(s.energy_trace, vec![0.0]);
    }

    #[test]
    fn initialize_spreads_centers_over_range() {
        let levels = [0.2, 0.4, 0.6, 0.8];
        let data: Vec<f64> = (0..64).map(|i| levels[i % 4]).collect();
        let img = ImageGrid::new(8, 8, data).unwrap();
        let s = initialize(&img, &SolverConfig::default()).unwrap();
        for (c, l) in s.centers.values().iter().zip(levels) {
            assert!((c - l).abs() < 1e-12, "{c} vs {l}");
        }
        // a dominant level still gets only one center
        let data: Vec<f64> = (0..64).map(|i| levels[if i < 56 { 0 } else { i % 4 }]).collect();
        let img = ImageGrid::new(8, 8, data).unwrap();
        let s = initialize(&img, &SolverConfig::default()).unwrap();
        assert!((s.centers.values()[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn initialize_jitters_ties() {
        let img = ImageGrid::filled(3, 3, 0.5).unwrap();
        let s = initialize(&img, &SolverConfig { n_classes: 3, ..Default::default() }).unwrap();
        let c = s.centers.values();
        assert_eq!(c[0], 0.5);
        assert!(c[1] > c[0] && c[2] > c[1]);
        assert!(c[2] - c[0] < 3e-9);
    }

    #[test]
    fn initialize_empty_mask() {
        let img = ImageGrid::filled(3, 3, 0.0).unwrap();
        assert!(matches!(
            initialize(&img, &SolverConfig::default()),
            Err(Error::EmptyMask)
        ));
        assert!(matches!(fit(&img, &SolverConfig::default()), Err(Error::EmptyMask)));
    }

    #[test]
    fn fixed_point_at_perfect_fit() {
        // I = b·c with crisp classes and b ≡ 1 stays put
        let data: Vec<f64> = (0..36).map(|i| if (i / 6 + i % 6) % 2 == 0 { 0.3 } else { 0.9 }).collect();
        let img = ImageGrid::new(6, 6, data).unwrap();
        let cfg = SolverConfig { n_classes: 2, ..Default::default() };
        let s0 = initialize(&img, &cfg).unwrap();
        assert_eq!(s0.centers.values(), &[0.3, 0.9]);
        let s1 = step(&img, s0.clone(), &cfg).unwrap();
        for (a, b) in s1.bias.values().iter().zip(s0.bias.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in s1.centers.values().iter().zip(s0.centers.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        for k in 0..2 {
            for (a, b) in s1.membership.plane(k).iter().zip(s0.membership.plane(k)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert_eq!(s1.bias_change_trace.len(), 1);
        assert!(s1.bias_change_trace[0] >= 0.0);
        assert_eq!(s1.energy_trace.len(), 2);
    }

    #[test]
    fn step_rejects_mismatched_state() {
        let img = ImageGrid::filled(3, 3, 0.5).unwrap();
        let cfg = SolverConfig { n_classes: 1, ..Default::default() };
        let s = initialize(&ImageGrid::filled(4, 3, 0.5).unwrap(), &cfg).unwrap();
        assert!(matches!(step(&img, s, &cfg), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constant_image_converges_in_one_step() {
        let img = ImageGrid::filled(5, 5, 0.5).unwrap();
        let cfg = SolverConfig { n_classes: 1, ..Default::default() };
        let res = fit(&img, &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        for (a, b) in res.corrected.values().iter().zip(img.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_keeps_background_untouched() {
        let mut data = vec![0.0; 64];
        for (i, v) in data.iter_mut().enumerate() {
            if i % 8 > 1 {
                *v = if i % 3 == 0 { 0.3 } else { 0.7 };
            }
        }
        let img = ImageGrid::new(8, 8, data).unwrap();
        let res = fit(&img, &SolverConfig { n_classes: 2, ..Default::default() }).unwrap();
        for r in 0..64 {
            if img.values()[r] == 0.0 {
                assert_eq!(res.bias.values()[r], 1.0);
                assert_eq!(res.corrected.values()[r], 0.0);
            }
        }
        assert!(res.iterations <= 200);
    }

    #[test]
    fn normalize_examples() {
        let mask = Mask::full(3, 2);
        let c = ClassCenters::new(vec![1.0, 3.0]).unwrap();
        let (b, c2) = normalize_bias(&ScalarField::filled(3, 2, 2.0), &c, &mask).unwrap();
        assert!(b.values().iter().all(|&v| v == 1.0));
        assert_eq!(c2.values(), &[2.0, 6.0]);

        let (b, c2) = normalize_bias(&ScalarField::filled(3, 2, 1.0), &c, &mask).unwrap();
        assert!(b.values().iter().all(|&v| v == 1.0));
        assert_eq!(c2, c);
    }

    #[test]
    fn normalize_preserves_energy() {
        let img = ImageGrid::new(3, 1, vec![0.2, 0.5, 0.9]).unwrap();
        let b = ScalarField::new(3, 1, vec![0.9, 1.4, 1.1]).unwrap();
        let c = ClassCenters::new(vec![0.3, 0.7]).unwrap();
        let p = Fuzziness::default();
        let u = crate::energy::update_membership(&img, &b, &c, p).unwrap();
        let before = evaluate_energy(&img, &u, &c, &b, p).unwrap();
        let (b2, c2) = normalize_bias(&b, &c, &img.effective_mask()).unwrap();
        let after = evaluate_energy(&img, &u, &c2, &b2, p).unwrap();
        assert!((before - after).abs() <= 1e-9 * before);
    }

    #[test]
    fn normalize_rejects_non_positive_mean() {
        let mask = Mask::full(2, 1);
        let c = ClassCenters::new(vec![1.0]).unwrap();
        assert!(matches!(
            normalize_bias(&ScalarField::filled(2, 1, 0.0), &c, &mask),
            Err(Error::NonPositiveMean)
        ));
    }

    #[test]
    fn residual_examples() {
        let mask = Mask::full(1, 1);
        let a = MembershipMap::new(1, 1, vec![vec![1.0], vec![0.0]]).unwrap();
        let b = MembershipMap::new(1, 1, vec![vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(seg_residual(&a, &a, &mask).unwrap(), 0.0);
        assert_eq!(seg_residual(&a, &b, &mask).unwrap(), 0.5);
        assert_eq!(seg_residual(&b, &a, &mask).unwrap(), 0.5);

        let mask = Mask::full(2, 1);
        let x = ScalarField::new(2, 1, vec![1.0, 1.0]).unwrap();
        let y = ScalarField::new(2, 1, vec![1.1, 0.8]).unwrap();
        assert_eq!(bias_residual(&x, &x, &mask).unwrap(), 0.0);
        assert!((bias_residual(&y, &x, &mask).unwrap() - 0.05).abs() < 1e-15);
        assert!(bias_residual(&x, &ScalarField::filled(1, 1, 1.0), &mask).is_err());
    }

    #[test]
    fn residual_matches_stopping_statistic() {
        let data: Vec<f64> = (0..25).map(|i| 0.2 + 0.03 * (i % 7) as f64).collect();
        let img = ImageGrid::new(5, 5, data).unwrap();
        let cfg = SolverConfig { n_classes: 2, ..Default::default() };
        let s0 = initialize(&img, &cfg).unwrap();
        let s1 = step(&img, s0.clone(), &cfg).unwrap();
        let mask = img.effective_mask();
        let total = bias_residual(&s1.bias, &s0.bias, &mask).unwrap();
        let ms = s1.bias_change_trace[0];
        assert!((total - ms * mask.count() as f64).abs() <= 1e-15 * total.max(1.0));
    }
}
