use photonstat::correlator::{
    cross_correlate, normalize, CorrelationConfig, CorrelationHistogram, HistogramMeta, Stage,
};
use photonstat::emitter::*;
use photonstat::fit::spectrum::peaks;
use photonstat::fit::*;
use photonstat::selftest::{reference_spectrum_peaks, REFERENCE_SPECTRUM_BASELINE};
use photonstat::sim::*;
use photonstat::validation::ridders_derivative;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use statrs::distribution::{Binomial, DiscreteCDF};

/// Largest relative mismatch between the analytic gradient and Ridders
/// derivatives started from `steps`, relative to `|∂f| + floor`.
fn jacobian_mismatch<M: Model>(model: &M, x: f64, p: &[f64], steps: &[f64], floor: f64) -> f64 {
    let mut grad = vec![0.0; p.len()];
    model.gradient(x, p, &mut grad);
    (0..p.len())
        .map(|j| {
            let (fd, _) = ridders_derivative(
                |v| {
                    let mut q = p.to_vec();
                    q[j] = v;
                    model.value(x, &q)
                },
                p[j],
                steps[j],
            );
            (grad[j] - fd).abs() / (grad[j].abs() + floor)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn g2_gradient(l1 in -1.5f64..0.5, ratio in 0.3f64..2.0, a in 0.0f64..2.0, w in 0.0f64..1.0, t in -5.0f64..5.0) {
        let (t1, t2) = (10f64.powf(l1), 10f64.powf(l1 + ratio));
        let worst = jacobian_mismatch(&G2Model { w }, t * t2, &[t1, t2, a], &[0.05 * t1, 0.05 * t2, 0.05], 1e-6);
        prop_assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn saturation_gradient(r in 1e3f64..1e6, ps in 0.05f64..10.0, p in 0.0f64..20.0) {
        let worst = jacobian_mismatch(&SaturationFitModel, p, &[r, ps], &[0.05 * r, 0.05 * ps], 1e-6 * r);
        prop_assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn polarization_gradient(lo in 0.0f64..1e4, extra in 1.0f64..1e4, th0 in 0.0f64..180.0, th in 0.0f64..360.0) {
        let worst = jacobian_mismatch(&PolarizationFitModel, th, &[lo + extra, lo, th0], &[0.05 * (lo + extra), 0.05 * (lo + extra), 2.0], 1e-6 * (lo + extra));
        prop_assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn spectrum_gradient(c1 in 765.0f64..775.0, gap in 1.0f64..5.0, g1 in 0.3f64..3.0, g2 in 0.3f64..3.0, x in 760.0f64..785.0) {
        let p = [c1, g1, 1.0, c1 + gap, g2, 0.6, 0.05];
        let steps = [0.05 * g1, 0.05 * g1, 0.05, 0.05 * g2, 0.05 * g2, 0.05, 0.05];
        let worst = jacobian_mismatch(&SpectrumModel { n_peaks: 2 }, x, &p, &steps, 1e-6);
        prop_assert!(worst <= 1e-6, "{worst}");
    }
}

const BIN: f64 = 0.2;
const HALF_BINS: usize = 750;

/// Normalized histogram whose counts are Poisson draws around `expected ×
/// g²`, or exact (unrounded) model values when `rng` is `None`.
fn synthetic_histogram(
    c: &G2Coefficients,
    w: f64,
    expected: f64,
    rng: Option<&mut ChaCha20Rng>,
) -> CorrelationHistogram {
    let drf = DeviceResponse::new(w).unwrap();
    let centers: Vec<f64> = (0..2 * HALF_BINS + 1).map(|k| (k as f64 - HALF_BINS as f64) * BIN).collect();
    let truth: Vec<f64> = centers.iter().map(|&t| g2_convolved(c, &drf, t)).collect();
    let (counts, values): (Vec<u64>, Vec<f64>) = match rng {
        Some(rng) => truth
            .iter()
            .map(|&g| {
                let n = Poisson::new(expected * g).unwrap().sample(rng) as u64;
                (n, n as f64 / expected)
            })
            .unzip(),
        None => truth.iter().map(|&g| ((expected * g).round() as u64, g)).unzip(),
    };
    // Any rates with n1·n2·w·T = expected describe the same normalization.
    let duration = expected / (1e5 * 1e5 * BIN * 1e-9);
    let meta = HistogramMeta { n1: 1e5, n2: 1e5, duration, bin_width: BIN, rho: None, scale: 1.0 / expected };
    CorrelationHistogram::from_parts(centers, counts, values, Stage::Normalized, meta).unwrap()
}

fn saturation_powers() -> Vec<f64> {
    (0..40).map(|i| 0.05 * 1.15f64.powi(i)).collect()
}

fn polarization_angles() -> Vec<f64> {
    (0..36).map(|i| 10.0 * i as f64).collect()
}

fn spectrum_grid() -> Vec<f64> {
    (0..=500).map(|i| 760.0 + 0.05 * i as f64).collect()
}

fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

#[test]
fn noiseless_data_recovers_parameters() {
    let close = |got: f64, want: f64, label: &str| {
        assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{label}: {got} vs {want}");
    };

    let c = G2Coefficients::REFERENCE;
    let fit = fit_g2(&synthetic_histogram(&c, 0.354, 1e4, None), 0.354, None).unwrap();
    close(fit.params[0], c.tau1(), "tau1");
    close(fit.params[1], c.tau2(), "tau2");
    close(fit.params[2], c.a(), "a");

    let m = SaturationModel::new(77.8e3, 1.17).unwrap();
    let series = generate_saturation_series(&m, &saturation_powers(), SeriesNoise::None, 0).unwrap();
    let fit = fit_saturation(&series).unwrap();
    close(fit.params[0], m.r_inf, "r_inf");
    close(fit.params[1], m.p_sat, "p_sat");

    let m = PolarizationModel::new(2.0e4, 0.5e4, 37.0).unwrap();
    let series = generate_polarization_series(&m, &polarization_angles(), SeriesNoise::None, 0).unwrap();
    let fit = fit_polarization(&series).unwrap();
    close(fit.params[0], m.i_max, "i_max");
    close(fit.params[1], m.i_min, "i_min");
    assert!(angle_difference(fit.params[2], m.theta0) <= 1e-6, "theta0 {}", fit.params[2]);

    let truth = reference_spectrum_peaks();
    let s = generate_spectrum(&truth, REFERENCE_SPECTRUM_BASELINE, &spectrum_grid(), 0.0, 0).unwrap();
    let fit = fit_spectrum(&s, 2, None).unwrap();
    for (g, t) in peaks(&fit).iter().zip(&truth) {
        close(g.center, t.center, "center");
        close(g.fwhm, t.fwhm, "fwhm");
        close(g.amplitude, t.amplitude, "amplitude");
    }
    close(fit.params[6], REFERENCE_SPECTRUM_BASELINE, "baseline");
}

const REALIZATIONS: u64 = 200;

/// Tallies how often `|fit − truth| ≤ stderr` per parameter.
struct Coverage {
    names: Vec<&'static str>,
    hits: Vec<u64>,
    trials: u64,
}

impl Coverage {
    fn new(names: &[&'static str]) -> Self {
        Self { names: names.to_vec(), hits: vec![0; names.len()], trials: 0 }
    }

    fn record(&mut self, errors: &[f64], stderr: &[f64]) {
        self.trials += 1;
        for (h, (e, s)) in self.hits.iter_mut().zip(errors.iter().zip(stderr)) {
            if e.abs() <= *s {
                *h += 1;
            }
        }
    }

    /// Two-sided binomial test of each hit count against the normal 1σ
    /// probability at the 1% level.
    fn check(&self, family: &str) {
        let p = libm::erf(std::f64::consts::FRAC_1_SQRT_2);
        let dist = Binomial::new(p, self.trials).unwrap();
        for (name, &k) in self.names.iter().zip(&self.hits) {
            let lower = dist.cdf(k);
            let upper = if k == 0 { 1.0 } else { 1.0 - dist.cdf(k - 1) };
            let p_value = (2.0 * lower.min(upper)).min(1.0);
            println!("{family} {name}: {k}/{} within 1 sigma (p = {p_value:.3})", self.trials);
            assert!(p_value >= 0.01, "{family} {name}: coverage {k}/{} (p = {p_value:.4})", self.trials);
        }
    }
}

#[test]
fn g2_uncertainties_cover_truth() {
    let c = G2Coefficients::REFERENCE;
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut cov = Coverage::new(&["tau1", "tau2", "a"]);
    for _ in 0..REALIZATIONS {
        let fit = fit_g2(&synthetic_histogram(&c, 0.354, 400.0, Some(&mut rng)), 0.354, None).unwrap();
        let errors = [fit.params[0] - c.tau1(), fit.params[1] - c.tau2(), fit.params[2] - c.a()];
        cov.record(&errors, fit.stderr.as_ref().unwrap());
    }
    cov.check("g2");
}

#[test]
fn saturation_uncertainties_cover_truth() {
    let m = SaturationModel::new(77.8e3, 1.17).unwrap();
    let mut cov = Coverage::new(&["r_inf", "p_sat"]);
    for seed in 0..REALIZATIONS {
        let noise = SeriesNoise::Relative { fraction: 0.02 };
        let series = generate_saturation_series(&m, &saturation_powers(), noise, seed).unwrap();
        let fit = fit_saturation(&series).unwrap();
        cov.record(&[fit.params[0] - m.r_inf, fit.params[1] - m.p_sat], fit.stderr.as_ref().unwrap());
    }
    cov.check("saturation");
}

#[test]
fn polarization_uncertainties_cover_truth() {
    let m = PolarizationModel::new(2.0e4, 0.5e4, 37.0).unwrap();
    let mut cov = Coverage::new(&["i_max", "i_min", "theta0"]);
    for seed in 0..REALIZATIONS {
        let noise = SeriesNoise::Shot { integration_s: 0.1 };
        let series = generate_polarization_series(&m, &polarization_angles(), noise, seed).unwrap();
        let fit = fit_polarization(&series).unwrap();
        let errors = [fit.params[0] - m.i_max, fit.params[1] - m.i_min, angle_difference(fit.params[2], m.theta0)];
        cov.record(&errors, fit.stderr.as_ref().unwrap());
    }
    cov.check("polarization");
}

#[test]
fn spectrum_uncertainties_cover_truth() {
    let truth = reference_spectrum_peaks();
    let mut want: Vec<f64> = truth.iter().flat_map(|p| [p.center, p.fwhm, p.amplitude]).collect();
    want.push(REFERENCE_SPECTRUM_BASELINE);
    let mut cov =
        Coverage::new(&["center_1", "fwhm_1", "amplitude_1", "center_2", "fwhm_2", "amplitude_2", "baseline"]);
    for seed in 0..REALIZATIONS {
        let s = generate_spectrum(&truth, REFERENCE_SPECTRUM_BASELINE, &spectrum_grid(), 0.02, seed).unwrap();
        let fit = fit_spectrum(&s, 2, None).unwrap();
        let errors: Vec<f64> = fit.params.iter().zip(&want).map(|(g, t)| g - t).collect();
        cov.record(&errors, fit.stderr.as_ref().unwrap());
    }
    cov.check("spectrum");
}

#[test]
fn zero_width_fit_agrees_with_convolved_fit() {
    let simulate = |w: f64, seed: u64| {
        let rates = rates_from_coefficients(&G2Coefficients::REFERENCE, 0.3).unwrap();
        let detector = DetectorConfig::new(0.5, w, 0.0, 0.0).unwrap();
        let (a, b) = simulate_plan(&SimulationPlan { rates, detector, duration: 0.02, seed }).unwrap();
        let cfg = CorrelationConfig::new(0.1, 250.0).unwrap();
        normalize(&cross_correlate(&a, &b, &cfg).unwrap()).unwrap()
    };
    let ideal = fit_g2(&simulate(0.0, 61), 0.0, None).unwrap();
    let smeared = fit_g2(&simulate(0.354, 62), 0.354, None).unwrap();
    for name in ["tau1", "tau2", "a"] {
        let (x, sx) = (ideal.param(name).unwrap(), ideal.param_stderr(name).unwrap());
        let (y, sy) = (smeared.param(name).unwrap(), smeared.param_stderr(name).unwrap());
        let z = (x - y).abs() / (sx * sx + sy * sy).sqrt();
        assert!(z <= 3.0, "{name}: {x} ± {sx} (w = 0) vs {y} ± {sy} (w = 0.354), {z:.2} sigma");
    }
}
