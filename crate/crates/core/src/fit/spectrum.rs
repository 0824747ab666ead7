//! Sum-of-Lorentzians line-shape fits with a constant baseline.

use serde::{Deserialize, Serialize};

use super::engine::{nlls_minimize, Bounds, Model, SolverOptions};
use super::{FitError, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianPeak {
    /// Center wavelength, nm.
    pub center: f64,
    /// Full width at half maximum, nm.
    pub fwhm: f64,
    /// Peak height above baseline.
    pub amplitude: f64,
}

impl LorentzianPeak {
    pub fn new(center: f64, fwhm: f64, amplitude: f64) -> Result<Self, FitError> {
        if !(center.is_finite() && fwhm > 0.0 && fwhm.is_finite() && amplitude > 0.0 && amplitude.is_finite()) {
            return Err(FitError::InvalidInput(format!(
                "peak needs finite center, fwhm > 0 and amplitude > 0 (got {center}, {fwhm}, {amplitude})"
            )));
        }
        Ok(Self { center, fwhm, amplitude })
    }

    pub fn value(&self, wavelength: f64) -> f64 {
        let x = 2.0 * (wavelength - self.center) / self.fwhm;
        self.amplitude / (1.0 + x * x)
    }
}

pub fn lorentzian_sum(peaks: &[LorentzianPeak], wavelength: f64) -> f64 {
    peaks.iter().map(|p| p.value(wavelength)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavelengths: Vec<f64>,
    intensities: Vec<f64>,
    sigma: Option<Vec<f64>>,
    /// Nominal constant offset; the starting value of the fitted baseline.
    pub baseline: f64,
}

impl Spectrum {
    pub fn new(
        wavelengths: Vec<f64>,
        intensities: Vec<f64>,
        sigma: Option<Vec<f64>>,
        baseline: f64,
    ) -> Result<Self, FitError> {
        if wavelengths.len() != intensities.len() || sigma.as_ref().is_some_and(|s| s.len() != wavelengths.len()) {
            return Err(FitError::LengthMismatch(
                wavelengths.len(),
                intensities.len(),
                sigma.as_ref().map_or(wavelengths.len(), Vec::len),
            ));
        }
        if let Some(i) = wavelengths.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FitError::InvalidInput(format!("wavelengths not strictly increasing at row {}", i + 1)));
        }
        Ok(Self { wavelengths, intensities, sigma, baseline })
    }

    /// Spectrum whose nominal baseline is the 10th percentile of intensities.
    pub fn with_estimated_baseline(
        wavelengths: Vec<f64>,
        intensities: Vec<f64>,
        sigma: Option<Vec<f64>>,
    ) -> Result<Self, FitError> {
        let mut sorted = intensities.clone();
        sorted.sort_by(f64::total_cmp);
        let baseline = sorted.get(sorted.len() / 10).copied().unwrap_or(0.0);
        Self::new(wavelengths, intensities, sigma, baseline)
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }
    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }
    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }
    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }
    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }
}

/// Baseline plus `n` Lorentzians. Parameters are
/// `[center_1, fwhm_1, amplitude_1, …, center_n, fwhm_n, amplitude_n, baseline]`.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumModel {
    pub n_peaks: usize,
}

impl Model for SpectrumModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(3 * self.n_peaks + 1);
        for k in 1..=self.n_peaks {
            names.push(format!("center_{k}"));
            names.push(format!("fwhm_{k}"));
            names.push(format!("amplitude_{k}"));
        }
        names.push("baseline".into());
        names
    }

    fn value(&self, x: f64, p: &[f64]) -> f64 {
        let mut v = p[3 * self.n_peaks];
        for k in 0..self.n_peaks {
            let (c, g, a) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
            let u = 2.0 * (x - c) / g;
            v += a / (1.0 + u * u);
        }
        v
    }

    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        for k in 0..self.n_peaks {
            let (c, g, a) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
            let u = 2.0 * (x - c) / g;
            let l = 1.0 / (1.0 + u * u);
            grad[3 * k] = 4.0 * a * u * l * l / g;
            grad[3 * k + 1] = 2.0 * a * u * u * l * l / g;
            grad[3 * k + 2] = l;
        }
        grad[3 * self.n_peaks] = 1.0;
    }
}

/// Greedy peak picking: the tallest remaining maximum, its half-height
/// width, then subtraction before the next pick.
pub fn detect_peaks(s: &Spectrum, n_peaks: usize) -> Vec<LorentzianPeak> {
    let x = s.wavelengths();
    let spacing = (x[x.len() - 1] - x[0]) / (x.len().max(2) - 1) as f64;
    let mut residual: Vec<f64> = s.intensities().iter().map(|v| v - s.baseline).collect();
    let mut peaks = Vec::with_capacity(n_peaks);
    for _ in 0..n_peaks {
        let smooth: Vec<f64> = (0..residual.len())
            .map(|i| {
                let lo = i.saturating_sub(2);
                let hi = (i + 3).min(residual.len());
                residual[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        let (i_max, amp) = smooth.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let amp = amp.max(f64::MIN_POSITIVE);
        let half = 0.5 * amp;
        let left = (0..i_max).rev().find(|&i| smooth[i] < half).map_or(x[0], |i| x[i]);
        let right = (i_max + 1..smooth.len()).find(|&i| smooth[i] < half).map_or(x[x.len() - 1], |i| x[i]);
        let fwhm = (right - left).max(2.0 * spacing);
        let peak = LorentzianPeak { center: x[i_max], fwhm, amplitude: amp };
        for (r, &xi) in residual.iter_mut().zip(x) {
            *r -= peak.value(xi);
        }
        peaks.push(peak);
    }
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    peaks
}

/// Fits baseline plus `n_peaks` Lorentzians; peaks are returned sorted by
/// center wavelength.
pub fn fit_spectrum(s: &Spectrum, n_peaks: usize, init: Option<&[LorentzianPeak]>) -> Result<FitResult, FitError> {
    if n_peaks == 0 {
        return Err(FitError::InvalidInput("need at least one peak".into()));
    }
    let n_params = 3 * n_peaks + 1;
    if n_params >= s.len() {
        return Err(FitError::PeaksExceedData { params: n_params, samples: s.len() });
    }
    let peaks = match init {
        Some(p) if p.len() == n_peaks => p.to_vec(),
        Some(p) => {
            return Err(FitError::InvalidInput(format!("{} initial peaks for n_peaks = {n_peaks}", p.len())));
        }
        None => detect_peaks(s, n_peaks),
    };
    let mut start = Vec::with_capacity(n_params);
    let mut lower = Vec::with_capacity(n_params);
    let tiny = f64::MIN_POSITIVE.sqrt();
    for p in &peaks {
        start.extend([p.center, p.fwhm, p.amplitude]);
        lower.extend([f64::NEG_INFINITY, tiny, tiny]);
    }
    start.push(s.baseline);
    lower.push(f64::NEG_INFINITY);
    let bounds = Bounds { lower, upper: vec![f64::INFINITY; n_params] };
    let unit;
    let sigma = match s.sigma() {
        Some(sig) => sig,
        None => {
            unit = vec![1.0; s.len()];
            &unit
        }
    };
    let model = SpectrumModel { n_peaks };
    let mut result = nlls_minimize(
        &model,
        s.wavelengths(),
        s.intensities(),
        sigma,
        &start,
        Some(&bounds),
        SolverOptions::default(),
    )?;
    sort_peaks(&mut result, n_peaks);
    Ok(result)
}

/// Reorders peak parameter triples (and their covariance) by center.
fn sort_peaks(result: &mut FitResult, n_peaks: usize) {
    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| result.params[3 * a].total_cmp(&result.params[3 * b]));
    if order.iter().enumerate().all(|(i, &k)| i == k) {
        return;
    }
    let mut perm: Vec<usize> = order.iter().flat_map(|&k| [3 * k, 3 * k + 1, 3 * k + 2]).collect();
    perm.push(3 * n_peaks);
    result.params = perm.iter().map(|&i| result.params[i]).collect();
    if let Some(s) = result.stderr.as_mut() {
        *s = perm.iter().map(|&i| s[i]).collect();
    }
    if let Some(cov) = result.covariance.as_mut() {
        *cov = perm.iter().map(|&i| perm.iter().map(|&j| cov[i][j]).collect()).collect();
    }
}

/// Fitted peaks in center order.
pub fn peaks(result: &FitResult) -> Vec<LorentzianPeak> {
    let n = (result.params.len() - 1) / 3;
    (0..n)
        .map(|k| LorentzianPeak {
            center: result.params[3 * k],
            fwhm: result.params[3 * k + 1],
            amplitude: result.params[3 * k + 2],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..1251).map(|i| 760.0 + 0.02 * i as f64).collect()
    }

    #[test]
    fn single_noiseless_peak() {
        let truth = LorentzianPeak::new(772.3, 1.9, 40.0).unwrap();
        let x = grid();
        let y: Vec<f64> = x.iter().map(|&l| 3.0 + truth.value(l)).collect();
        let s = Spectrum::with_estimated_baseline(x, y, None).unwrap();
        let r = fit_spectrum(&s, 1, None).unwrap();
        let p = peaks(&r)[0];
        assert!((p.center - 772.3).abs() < 1e-9);
        assert!((p.fwhm - 1.9).abs() < 1e-9);
        assert!((p.amplitude - 40.0).abs() < 1e-8);
        assert!((r.param("baseline").unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let model = SpectrumModel { n_peaks: 2 };
        let p = [770.0, 1.36, 1.0, 773.6, 2.7, 0.7, 0.05];
        for &x in &[765.0, 769.5, 770.0, 772.0, 775.3] {
            let mut g = [0.0; 7];
            let mut fd = [0.0; 7];
            model.gradient(x, &p, &mut g);
            // Absolute steps: a relative step on a 770 nm center would
            // exceed the line width.
            for j in 0..7 {
                let h = 1e-5;
                let mut q = p;
                q[j] = p[j] + h;
                let up = model.value(x, &q);
                q[j] = p[j] - h;
                fd[j] = (up - model.value(x, &q)) / (2.0 * h);
            }
            for j in 0..7 {
                assert!((g[j] - fd[j]).abs() <= 1e-6 * g[j].abs().max(1e-6), "x={x} j={j}");
            }
        }
    }

    #[test]
    fn too_many_peaks() {
        let s = Spectrum::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4], None, 0.0).unwrap();
        assert_eq!(fit_spectrum(&s, 1, None), Err(FitError::PeaksExceedData { params: 4, samples: 4 }));
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![1.0, 1.0], vec![0.0; 2], None, 0.0).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![0.0; 3], None, 0.0).is_err());
        assert!(LorentzianPeak::new(770.0, 0.0, 1.0).is_err());
    }
}
