use super::engine::{nlls_minimize, Bounds, Model, SolverOptions};
use super::{FitError, FitResult};
use crate::sim::SeriesPoint;

/// `R∞ · P / (P + P_sat)` with parameters `[r_inf, p_sat]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaturationFitModel;

impl Model for SaturationFitModel {
    fn param_names(&self) -> Vec<String> {
        vec!["r_inf".into(), "p_sat".into()]
    }

    fn value(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * x / (x + p[1])
    }

    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        let d = x + p[1];
        grad[0] = x / d;
        grad[1] = -p[0] * x / (d * d);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits the saturation curve to `(power mW, rate counts/s, σ)` points.
pub fn fit_saturation(series: &[SeriesPoint]) -> Result<FitResult, FitError> {
    let mut distinct: Vec<f64> = series.iter().map(|p| p.x).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(FitError::DegeneratePowers(distinct.len()));
    }
    let x: Vec<f64> = series.iter().map(|p| p.x).collect();
    let y: Vec<f64> = series.iter().map(|p| p.y).collect();
    let sigma: Vec<f64> = series.iter().map(|p| p.sigma).collect();

    let max_rate = y.iter().cloned().fold(f64::MIN, f64::max);
    let positive: Vec<f64> = x.iter().cloned().filter(|&p| p > 0.0).collect();
    if !(max_rate > 0.0) || positive.is_empty() {
        return Err(FitError::InvalidInput("saturation data needs positive powers and rates".into()));
    }
    let init = [1.5 * max_rate, median(positive)];
    let tiny = f64::MIN_POSITIVE.sqrt();
    let bounds = Bounds { lower: vec![tiny, tiny], upper: vec![f64::INFINITY; 2] };
    nlls_minimize(&SaturationFitModel, &x, &y, &sigma, &init, Some(&bounds), SolverOptions::default())
}
