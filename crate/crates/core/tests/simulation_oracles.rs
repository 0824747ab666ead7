use photonstat::correlator::{cross_correlate, normalize, CorrelationConfig, CorrelationHistogram};
use photonstat::emitter::*;
use photonstat::fit::{fit_g2, FitResult};
use photonstat::sim::*;
use photonstat::validation::adaptive_simpson;

fn reference_rates() -> TransitionRates {
    rates_from_coefficients(&G2Coefficients::REFERENCE, 0.3).unwrap()
}

fn plan(eta: f64, jitter: f64, background: f64, duration: f64, seed: u64) -> SimulationPlan {
    SimulationPlan {
        rates: reference_rates(),
        detector: DetectorConfig::new(eta, jitter, background, 0.0).unwrap(),
        duration,
        seed,
    }
}

fn histogram(a: &TimestampStream, b: &TimestampStream, bin: f64, tau_max: f64) -> CorrelationHistogram {
    let cfg = CorrelationConfig::new(bin, tau_max).unwrap();
    normalize(&cross_correlate(a, b, &cfg).unwrap()).unwrap()
}

fn mean_and_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Reduced χ² of the histogram against `model`, skipping empty bins.
fn reduced_chi2(h: &CorrelationHistogram, model: impl Fn(f64) -> f64) -> f64 {
    let sigma = h.sigma();
    let mut chi2 = 0.0;
    let mut n = 0usize;
    for ((&t, &v), &s) in h.bin_centers().iter().zip(h.values()).zip(&sigma) {
        if s > 0.0 {
            chi2 += ((v - model(t)) / s).powi(2);
            n += 1;
        }
    }
    chi2 / n as f64
}

fn assert_consistent(label: &str, x: f64, sx: f64, y: f64, sy: f64) {
    let z = (x - y).abs() / (sx * sx + sy * sy).sqrt();
    assert!(z <= 3.0, "{label}: {x} ± {sx} vs {y} ± {sy} ({z:.2} sigma)");
}

fn param(fit: &FitResult, name: &str) -> (f64, f64) {
    (fit.param(name).unwrap(), fit.param_stderr(name).unwrap())
}

#[test]
fn same_seed_same_streams() {
    let p = plan(0.5, 0.354, 2e5, 2e-3, 77);
    let first = simulate_plan(&p).unwrap();
    assert_eq!(first, simulate_plan(&p).unwrap());
    let other = simulate_plan(&SimulationPlan { seed: 78, ..p }).unwrap();
    assert_ne!(first.0.timestamps(), other.0.timestamps());
}

#[test]
fn emission_rate_and_occupancy_match_steady_state() {
    let r = reference_rates();
    let (p1, p2, p3) = steady_state_populations(&r);
    let duration = 2e-3;
    let runs: Vec<([f64; 3], u64)> = (0..24).map(|s| simulate_occupancy(&r, duration, 1_000 + s)).collect();

    let rates: Vec<f64> = runs.iter().map(|(_, n)| *n as f64 / (duration * 1e9)).collect();
    let (mean, sem) = mean_and_sem(&rates);
    let expected = r.r21() * p2;
    assert!((mean - expected).abs() <= 3.0 * sem, "emission rate {mean} ± {sem} vs {expected} /ns");

    for (level, want) in [p1, p2, p3].into_iter().enumerate() {
        let fractions: Vec<f64> = runs.iter().map(|(occ, _)| occ[level]).collect();
        let (mean, sem) = mean_and_sem(&fractions);
        assert!((mean - want).abs() <= 3.0 * sem, "level {}: {mean} ± {sem} vs {want}", level + 1);
    }
}

#[test]
fn count_rate_is_stationary() {
    let (a, _) = simulate_plan(&plan(1.0, 0.0, 0.0, 0.02, 5)).unwrap();
    let windows = 20u64;
    let width = a.duration_ps() / windows;
    let mut counts = vec![0.0; windows as usize];
    for &t in a.timestamps() {
        counts[((t / width).min(windows - 1)) as usize] += 1.0;
    }
    let (first, s1) = mean_and_sem(&counts[..10]);
    let (second, s2) = mean_and_sem(&counts[10..]);
    assert_consistent("first vs second half", first, s1, second, s2);
}

#[test]
fn ideal_detector_histogram_follows_closed_form() {
    let (a, b) = simulate_plan(&plan(1.0, 0.0, 0.0, 0.01, 11)).unwrap();
    let bin = 0.1;
    let h = histogram(&a, &b, bin, 150.0);
    let c = G2Coefficients::REFERENCE;
    // Average over each bin; the kink at zero makes the centre value biased.
    let chi2 = reduced_chi2(&h, |t| adaptive_simpson(|s| g2_ideal(&c, s), t - bin / 2.0, t + bin / 2.0, 1e-12) / bin);
    assert!((chi2 - 1.0).abs() < 0.15, "reduced chi2 = {chi2}");
}

#[test]
fn background_dilutes_correlations_as_a_mixture() {
    let eta = 0.5;
    let signal = 0.5 * mean_count_rate(&reference_rates(), &DetectionChain::new(eta).unwrap());
    let background = signal / 3.0;
    let (a, b) = simulate_plan(&plan(eta, 0.354, background, 0.02, 23)).unwrap();
    let h = histogram(&a, &b, 0.1, 150.0);
    let rho = signal / (signal + background);
    let drf = DeviceResponse::new(0.354).unwrap();
    let c = G2Coefficients::REFERENCE;
    let chi2 = reduced_chi2(&h, |t| 1.0 - rho * rho + rho * rho * g2_convolved(&c, &drf, t));
    assert!((chi2 - 1.0).abs() < 0.15, "reduced chi2 = {chi2}");
}

#[test]
fn detection_efficiency_does_not_change_coefficients() {
    // Coincidences scale as η², so durations scale as 1/η² for equal statistics.
    let fits: Vec<(f64, FitResult)> = [(1.0, 0.005), (0.5, 0.02), (0.1, 0.5)]
        .into_iter()
        .enumerate()
        .map(|(i, (eta, duration))| {
            let (a, b) = simulate_plan(&plan(eta, 0.354, 0.0, duration, 300 + i as u64)).unwrap();
            (eta, fit_g2(&histogram(&a, &b, 0.1, 250.0), 0.354, None).unwrap())
        })
        .collect();
    for name in ["tau1", "tau2", "a"] {
        for i in 0..fits.len() {
            for j in i + 1..fits.len() {
                let (x, sx) = param(&fits[i].1, name);
                let (y, sy) = param(&fits[j].1, name);
                assert_consistent(&format!("{name} at eta {} vs {}", fits[i].0, fits[j].0), x, sx, y, sy);
            }
        }
    }
}

#[test]
fn jitter_adds_in_quadrature() {
    let (w1, w2) = (0.25f64, 0.25f64);
    let combined = (w1 * w1 + w2 * w2).sqrt();
    let (a, b) = simulate_plan(&plan(0.5, w1, 0.0, 0.02, 41)).unwrap();
    let per_channel = w2 / std::f64::consts::SQRT_2;
    let a = apply_jitter(&a, per_channel, 42).unwrap();
    let b = apply_jitter(&b, per_channel, 43).unwrap();
    let layered = fit_g2(&histogram(&a, &b, 0.1, 250.0), combined, None).unwrap();

    let (a, b) = simulate_plan(&plan(0.5, combined, 0.0, 0.02, 44)).unwrap();
    let direct = fit_g2(&histogram(&a, &b, 0.1, 250.0), combined, None).unwrap();

    for name in ["tau1", "tau2", "a"] {
        let (x, sx) = param(&layered, name);
        let (y, sy) = param(&direct, name);
        assert_consistent(name, x, sx, y, sy);
    }
    let (g_l, g_d) = (layered.derived("g2_0").unwrap(), direct.derived("g2_0").unwrap());
    assert_consistent("g2(0)", g_l.value, g_l.stderr.unwrap(), g_d.value, g_d.stderr.unwrap());
}

#[test]
fn no_pumping_no_photons() {
    let rates = TransitionRates::new(0.0, 1.2, 0.01, 0.02).unwrap();
    let p = SimulationPlan { rates, detector: DetectorConfig::ideal(), duration: 1e-3, seed: 3 };
    let (a, b) = simulate_plan(&p).unwrap();
    assert!(a.is_empty() && b.is_empty());
    assert_eq!(a.duration_ps(), seconds_to_ps(1e-3));
}
