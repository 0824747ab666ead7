use super::engine::{nlls_minimize, Model, SolverOptions};
use super::{FitError, FitResult};
use crate::emitter::normalize_angle;
use crate::sim::SeriesPoint;

/// `I_min + (I_max − I_min)·cos²(θ − θ₀)` with parameters
/// `[i_max, i_min, theta0]`, angles in degrees.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolarizationFitModel;

impl Model for PolarizationFitModel {
    fn param_names(&self) -> Vec<String> {
        vec!["i_max".into(), "i_min".into(), "theta0".into()]
    }

    fn value(&self, x: f64, p: &[f64]) -> f64 {
        let c = (x - p[2]).to_radians().cos();
        p[1] + (p[0] - p[1]) * c * c
    }

    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        let phi = (x - p[2]).to_radians();
        let c2 = phi.cos().powi(2);
        grad[0] = c2;
        grad[1] = 1.0 - c2;
        // d/dθ₀ cos²(θ − θ₀) = sin(2(θ − θ₀)) · π/180
        grad[2] = (p[0] - p[1]) * (2.0 * phi).sin() * std::f64::consts::PI / 180.0;
    }
}

/// Same curve with θ₀ frozen, for data without modulation.
struct FixedPhase(f64);

impl Model for FixedPhase {
    fn param_names(&self) -> Vec<String> {
        vec!["i_max".into(), "i_min".into()]
    }
    fn value(&self, x: f64, p: &[f64]) -> f64 {
        PolarizationFitModel.value(x, &[p[0], p[1], self.0])
    }
    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        let mut g = [0.0; 3];
        PolarizationFitModel.gradient(x, &[p[0], p[1], self.0], &mut g);
        grad.copy_from_slice(&g[..2]);
    }
}

/// Covered part of the 180° period: the period minus the largest gap.
pub fn angular_coverage(angles: &[f64]) -> f64 {
    let mut folded: Vec<f64> = angles.iter().map(|&a| normalize_angle(a)).collect();
    folded.sort_by(f64::total_cmp);
    folded.dedup();
    if folded.len() < 2 {
        return 0.0;
    }
    let mut gap = folded[0] + 180.0 - folded[folded.len() - 1];
    for w in folded.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    180.0 - gap
}

/// Weighted linear fit of `c0 + c1·cos2θ + c2·sin2θ`.
fn harmonic_fit(series: &[SeriesPoint]) -> Option<[f64; 3]> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for p in series {
        let t = (2.0 * p.x).to_radians();
        let row = nalgebra::Vector3::new(1.0, t.cos(), t.sin());
        let w = 1.0 / (p.sigma * p.sigma);
        ata += row * row.transpose() * w;
        atb += row * (p.y * w);
    }
    let sol = ata.cholesky()?.solve(&atb);
    Some([sol[0], sol[1], sol[2]])
}

/// Uncertainty assigned to θ₀ when the data carry no modulation: the
/// standard deviation of a uniform angle over the period.
const UNRESOLVED_PHASE_STDERR: f64 = 51.961_524_227_066_32;

/// Fits the polarization response; adds the derived `visibility`.
pub fn fit_polarization(series: &[SeriesPoint]) -> Result<FitResult, FitError> {
    if series.is_empty() {
        return Err(FitError::EmptyData);
    }
    let coverage = angular_coverage(&series.iter().map(|p| p.x).collect::<Vec<_>>());
    if coverage < 120.0 {
        return Err(FitError::InsufficientCoverage(coverage));
    }
    let x: Vec<f64> = series.iter().map(|p| p.x).collect();
    let y: Vec<f64> = series.iter().map(|p| p.y).collect();
    let sigma: Vec<f64> = series.iter().map(|p| p.sigma).collect();
    let [c0, c1, c2] = harmonic_fit(series).ok_or(FitError::SingularJacobian)?;
    let amplitude = c1.hypot(c2);

    let mut result = if amplitude <= 1e-9 * c0.abs().max(f64::MIN_POSITIVE) {
        let mut r = nlls_minimize(&FixedPhase(0.0), &x, &y, &sigma, &[c0, c0], None, SolverOptions::default())?;
        r.names.push("theta0".into());
        r.params.push(0.0);
        if let Some(s) = r.stderr.as_mut() {
            s.push(UNRESOLVED_PHASE_STDERR);
        }
        if let Some(cov) = r.covariance.as_mut() {
            cov.iter_mut().for_each(|row| row.push(0.0));
            cov.push(vec![0.0, 0.0, UNRESOLVED_PHASE_STDERR * UNRESOLVED_PHASE_STDERR]);
        }
        r
    } else {
        let theta0 = normalize_angle(c2.atan2(c1).to_degrees() / 2.0);
        let init = [c0 + amplitude, c0 - amplitude, theta0];
        nlls_minimize(&PolarizationFitModel, &x, &y, &sigma, &init, None, SolverOptions::default())?
    };

    if result.params[0] < result.params[1] {
        // Equivalent curve with the extrema exchanged.
        result.params.swap(0, 1);
        result.params[2] += 90.0;
        if let Some(s) = result.stderr.as_mut() {
            s.swap(0, 1);
        }
        if let Some(cov) = result.covariance.as_mut() {
            cov.swap(0, 1);
            cov.iter_mut().for_each(|row| row.swap(0, 1));
        }
    }
    result.params[2] = normalize_angle(result.params[2]);

    let (i_max, i_min) = (result.params[0], result.params[1]);
    let sum = i_max + i_min;
    if sum > 0.0 {
        let v = (i_max - i_min) / sum;
        let grad = [2.0 * i_min / (sum * sum), -2.0 * i_max / (sum * sum), 0.0];
        result.push_derived("visibility", v, Some(&grad));
    }
    Ok(result)
}
