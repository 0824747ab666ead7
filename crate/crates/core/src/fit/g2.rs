//! Fit of the jitter-convolved three-level g² to a normalized histogram.
//!
//! The detector width is held fixed; it is measured independently and
//! leaving it free makes it degenerate with τ₁.

use super::engine::{nlls_minimize, Bounds, Model, SolverOptions};
use super::{Derived, FitError, FitResult};
use crate::correlator::{CorrelationHistogram, Stage};
use crate::emitter::{g2_convolved, DeviceResponse, G2Coefficients};
use crate::special::{smeared_exponential, smeared_exponential_d_decay};

/// `g²(τ; τ₁, τ₂, a)` convolved with a fixed Gaussian of width `w`.
#[derive(Debug, Clone, Copy)]
pub struct G2Model {
    pub w: f64,
}

impl Model for G2Model {
    fn param_names(&self) -> Vec<String> {
        vec!["tau1".into(), "tau2".into(), "a".into()]
    }

    fn value(&self, x: f64, p: &[f64]) -> f64 {
        1.0 - (1.0 + p[2]) * smeared_exponential(x, p[0], self.w) + p[2] * smeared_exponential(x, p[1], self.w)
    }

    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        let (t1, t2, a) = (p[0], p[1], p[2]);
        grad[0] = -(1.0 + a) * smeared_exponential_d_decay(x, t1, self.w);
        grad[1] = a * smeared_exponential_d_decay(x, t2, self.w);
        grad[2] = smeared_exponential(x, t2, self.w) - smeared_exponential(x, t1, self.w);
    }
}

/// Lower bound for the time constants, ns.
const MIN_TIME: f64 = 1e-6;
const REWEIGHT_PASSES: usize = 5;

/// Per-bin σ from the raw coincidences the model predicts, floored at one count.
fn expected_sigma(h: &CorrelationHistogram, model: &G2Model, p: &[f64]) -> Vec<f64> {
    let meta = h.meta();
    let offset = match (h.stage(), meta.rho) {
        (Stage::BackgroundCorrected, Some(rho)) => (1.0 - rho * rho) / (rho * rho),
        _ => 0.0,
    };
    h.bin_centers().iter().map(|&t| ((model.value(t, p) + offset) / meta.scale).max(1.0).sqrt() * meta.scale).collect()
}

fn moving_average(v: &[f64], half_window: usize) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_window);
            let hi = (i + half_window + 1).min(n);
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Starting values read off the histogram shape.
///
/// τ₁ from the half-depth width of the dip, τ₂ from the 1/e decay of the
/// bunching excess beyond its maximum, `a` from the excess extrapolated to
/// τ = 0. Deterministic in the data.
pub fn initial_guess(h: &CorrelationHistogram) -> G2Coefficients {
    let centers = h.bin_centers();
    let values = h.values();
    let mid = h.center_index();
    let bin = h.meta().bin_width;
    // Fold ±τ together.
    let folded: Vec<f64> = (0..=mid).map(|k| 0.5 * (values[mid + k] + values[mid - k])).collect();
    let tau: Vec<f64> = (0..=mid).map(|k| centers[mid + k]).collect();
    let fine = moving_average(&folded, 1);
    let coarse = moving_average(&folded, (mid / 100).max(2));

    let (k_peak, peak) =
        coarse.iter().enumerate().fold((0, f64::MIN), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
    let dip = fine[..=k_peak.max(1).min(mid)].iter().cloned().fold(f64::MAX, f64::min);
    let half_level = 0.5 * (dip + peak.max(1.0));
    let k_half = fine.iter().position(|&v| v >= half_level).unwrap_or(1).max(1);
    let tau1 = (tau[k_half] / std::f64::consts::LN_2).max(bin);

    let excess = peak - 1.0;
    let (tau2, a) = if excess > 0.01 && k_peak < mid {
        let target = excess / std::f64::consts::E;
        let k_e = (k_peak..=mid).find(|&k| coarse[k] - 1.0 <= target).unwrap_or(mid);
        let tau2 = (tau[k_e] - tau[k_peak]).max(2.0 * tau1);
        (tau2, excess * (tau[k_peak] / tau2).exp())
    } else {
        (10.0 * tau1, 0.01)
    };
    G2Coefficients::new(tau1, tau2.max(tau1), a).expect("heuristics produce ordered positive times")
}

/// Fits τ₁, τ₂ and a with the detector width `drf_width` (ns) held fixed.
///
/// Adds derived quantities `g2_0` (fitted curve at τ = 0), `g2_0_measured`
/// (the central bin) and `g2_0_deviation` (fit minus measured).
pub fn fit_g2(h: &CorrelationHistogram, drf_width: f64, init: Option<G2Coefficients>) -> Result<FitResult, FitError> {
    if h.stage() == Stage::Raw {
        return Err(FitError::WrongStage(h.stage().as_str()));
    }
    if !(drf_width >= 0.0 && drf_width.is_finite()) {
        return Err(FitError::InvalidInput(format!("device response width {drf_width} must be >= 0")));
    }
    let guess = init.unwrap_or_else(|| initial_guess(h));

    let model = G2Model { w: drf_width };
    let bounds = Bounds { lower: vec![MIN_TIME, MIN_TIME, 0.0], upper: vec![f64::INFINITY; 3] };
    let start = [guess.tau1().max(MIN_TIME), guess.tau2().max(MIN_TIME), guess.a().max(0.0)];
    let fit_with = |sigma: &[f64], start: &[f64]| {
        nlls_minimize(&model, h.bin_centers(), h.values(), sigma, start, Some(&bounds), SolverOptions::default())
    };
    let mut result = fit_with(&h.fit_sigma(), &start)?;
    // Observed-count weights favour bins that fluctuated low. Re-weighting
    // with the fitted expectation converges to the Poisson likelihood optimum.
    for _ in 0..REWEIGHT_PASSES {
        let previous = result.params.clone();
        result = fit_with(&expected_sigma(h, &model, &previous), &previous)?;
        let moved =
            result.params.iter().zip(&previous).map(|(p, q)| (p - q).abs() / q.abs().max(MIN_TIME)).fold(0.0, f64::max);
        if moved < 1e-9 {
            break;
        }
    }

    // The dip must be sampled by enough bins for τ₁ to mean anything.
    let reach = 5.0 * result.params[0];
    let inside = h.bin_centers().iter().filter(|t| t.abs() < reach).count();
    if inside < 8 {
        return Err(FitError::HistogramTooCoarse(inside));
    }

    let p = result.params.clone();
    let g0 = model.value(0.0, &p);
    let mut grad = [0.0; 3];
    model.gradient(0.0, &p, &mut grad);
    result.push_derived("g2_0", g0, Some(&grad));
    let measured = h.values()[h.center_index()];
    result.derived.push(Derived {
        name: "g2_0_measured".into(),
        value: measured,
        stderr: Some(h.sigma()[h.center_index()]),
    });
    result.push_derived("g2_0_deviation", g0 - measured, None);
    Ok(result)
}

/// Fitted coefficients as a [`G2Coefficients`], if they satisfy its invariants.
pub fn coefficients(result: &FitResult) -> Option<G2Coefficients> {
    G2Coefficients::new(result.param("tau1")?, result.param("tau2")?, result.param("a")?).ok()
}

/// Convenience: fitted curve at delay `tau`.
pub fn fitted_curve(result: &FitResult, drf_width: f64, tau: f64) -> Option<f64> {
    let c = coefficients(result)?;
    Some(g2_convolved(&c, &DeviceResponse { w: drf_width }, tau))
}
