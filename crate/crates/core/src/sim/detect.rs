use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, Normal};

use super::chain::run_chain;
use super::{
    rng_for, seconds_to_ps, DetectorConfig, SimulationPlan, StreamError, TimestampStream, PS_PER_NS, PS_PER_S,
    STREAM_BACKGROUND_A, STREAM_BACKGROUND_B, STREAM_CHAIN, STREAM_DETECT,
};

/// Beam splitter plus two lossy, jittery detectors.
struct Splitter {
    eta: f64,
    jitter: Option<Normal<f64>>,
    duration_ps: u64,
    rng: ChaCha20Rng,
    channels: [Vec<u64>; 2],
}

impl Splitter {
    fn new(detector: &DetectorConfig, duration_ps: u64, seed: u64) -> Self {
        let sigma = detector.per_channel_jitter();
        Self {
            eta: detector.eta,
            jitter: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite jitter")),
            duration_ps,
            rng: rng_for(seed, STREAM_DETECT),
            channels: [Vec::new(), Vec::new()],
        }
    }

    fn photon(&mut self, t_ns: f64) {
        let detected = self.rng.random::<f64>() < self.eta;
        if !detected {
            return;
        }
        let channel = self.rng.random::<bool>() as usize;
        let shift = match &self.jitter {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        };
        let ps = clamp_ps((t_ns + shift) * PS_PER_NS, self.duration_ps);
        self.channels[channel].push(ps);
    }

    fn finish(self, detector: &DetectorConfig, seed: u64) -> Result<(TimestampStream, TimestampStream), StreamError> {
        let [a, b] = self.channels;
        let dead_ps = (detector.dead_time * PS_PER_NS).round() as u64;
        let bg_a = poisson_times(detector.background_rate, self.duration_ps, &mut rng_for(seed, STREAM_BACKGROUND_A));
        let bg_b = poisson_times(detector.background_rate, self.duration_ps, &mut rng_for(seed, STREAM_BACKGROUND_B));
        Ok((assemble(a, bg_a, dead_ps, self.duration_ps, "A"), assemble(b, bg_b, dead_ps, self.duration_ps, "B")))
    }
}

fn clamp_ps(ps: f64, duration_ps: u64) -> u64 {
    if ps <= 0.0 {
        0
    } else {
        (ps.round() as u64).min(duration_ps)
    }
}

fn assemble(
    mut signal: Vec<u64>,
    background: Vec<u64>,
    dead_ps: u64,
    duration_ps: u64,
    label: &str,
) -> TimestampStream {
    signal.extend(background);
    signal.sort_unstable();
    if dead_ps > 0 {
        let mut last: Option<u64> = None;
        signal.retain(|&t| match last {
            Some(prev) if t - prev < dead_ps => false,
            _ => {
                last = Some(t);
                true
            }
        });
    }
    TimestampStream::from_sorted(signal, duration_ps, label)
}

/// Homogeneous Poisson arrivals (integer ps) over `[0, duration_ps)`.
fn poisson_times<R: Rng>(rate: f64, duration_ps: u64, rng: &mut R) -> Vec<u64> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let end = duration_ps as f64;
    let mean_gap_ps = PS_PER_S / rate;
    let mut out = Vec::with_capacity((end / mean_gap_ps * 1.01) as usize + 16);
    let mut t = 0.0;
    loop {
        t += rng.sample::<f64, _>(Exp1) * mean_gap_ps;
        if t >= end {
            break;
        }
        out.push(t as u64);
    }
    out
}

/// Routes emission times (ns) through the 50/50 splitter and the detector
/// pair, adds per-channel background and applies dead time.
pub fn apply_detection(
    emissions: &[f64],
    duration: f64,
    detector: &DetectorConfig,
    seed: u64,
) -> Result<(TimestampStream, TimestampStream), StreamError> {
    detector.validate()?;
    let mut splitter = Splitter::new(detector, seconds_to_ps(duration), seed);
    for &t in emissions {
        splitter.photon(t);
    }
    splitter.finish(detector, seed)
}

/// Emission and detection in one pass, without materializing the emission list.
///
/// Identical output to `apply_detection(&simulate_emission_times(..), ..)`
/// with the same seed.
pub fn simulate_plan(plan: &SimulationPlan) -> Result<(TimestampStream, TimestampStream), StreamError> {
    plan.validate()?;
    let duration_ps = seconds_to_ps(plan.duration);
    let mut splitter = Splitter::new(&plan.detector, duration_ps, plan.seed);
    let mut chain_rng = rng_for(plan.seed, STREAM_CHAIN);
    run_chain(&plan.rates, plan.duration * 1e9, &mut chain_rng, |t| splitter.photon(t));
    splitter.finish(&plan.detector, plan.seed)
}

/// Uncorrelated Poisson stream of `rate` counts/s over `duration` s.
pub fn simulate_poisson_stream(rate: f64, duration: f64, seed: u64) -> Result<TimestampStream, StreamError> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(StreamError::InvalidParameter { name: "rate", value: rate, reason: "must be >= 0" });
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(StreamError::InvalidParameter { name: "duration", value: duration, reason: "must be > 0" });
    }
    let duration_ps = seconds_to_ps(duration);
    let times = poisson_times(rate, duration_ps, &mut rng_for(seed, STREAM_CHAIN));
    Ok(TimestampStream::from_sorted(times, duration_ps, "poisson"))
}

/// Adds independent Gaussian delays of standard deviation `sigma` ns to every
/// event and re-sorts.
pub fn apply_jitter(stream: &TimestampStream, sigma: f64, seed: u64) -> Result<TimestampStream, StreamError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(StreamError::InvalidParameter { name: "sigma", value: sigma, reason: "must be >= 0" });
    }
    if sigma == 0.0 {
        return Ok(stream.clone());
    }
    let normal = Normal::new(0.0, sigma * PS_PER_NS).expect("finite sigma");
    let mut rng = rng_for(seed, STREAM_DETECT);
    let dur = stream.duration_ps();
    let mut out: Vec<u64> =
        stream.timestamps().iter().map(|&t| clamp_ps(t as f64 + normal.sample(&mut rng), dur)).collect();
    out.sort_unstable();
    Ok(TimestampStream::from_sorted(out, dur, stream.channel()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emitter::TransitionRates;
    use crate::sim::simulate_emission_times;

    fn rates() -> TransitionRates {
        TransitionRates::new(0.3, 0.9, 0.01, 0.02).unwrap()
    }

    #[test]
    fn blind_detector_sees_nothing() {
        let em = simulate_emission_times(&rates(), 1e-4, 1);
        let det = DetectorConfig::new(0.0, 0.354, 0.0, 0.0).unwrap();
        let (a, b) = apply_detection(&em, 1e-4, &det, 2).unwrap();
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn lossless_split_preserves_emissions() {
        let em = simulate_emission_times(&rates(), 1e-4, 1);
        let (a, b) = apply_detection(&em, 1e-4, &DetectorConfig::ideal(), 2).unwrap();
        assert!(!a.is_empty() && !b.is_empty());
        let mut union: Vec<u64> = a.timestamps().iter().chain(b.timestamps()).copied().collect();
        union.sort_unstable();
        let expected: Vec<u64> = em.iter().map(|t| (t * PS_PER_NS).round() as u64).collect();
        assert_eq!(union, expected);
    }

    #[test]
    fn fused_plan_matches_two_step_route() {
        let det = DetectorConfig::new(0.4, 0.354, 2e5, 1.0).unwrap();
        let plan = SimulationPlan { rates: rates(), detector: det, duration: 2e-4, seed: 99 };
        let fused = simulate_plan(&plan).unwrap();
        let em = simulate_emission_times(&plan.rates, plan.duration, plan.seed);
        let two_step = apply_detection(&em, plan.duration, &det, plan.seed).unwrap();
        assert_eq!(fused, two_step);
        assert_eq!(fused, simulate_plan(&plan).unwrap());
    }

    #[test]
    fn dead_time_enforced() {
        let det = DetectorConfig::new(1.0, 0.0, 0.0, 50.0).unwrap();
        let em = simulate_emission_times(&rates(), 1e-4, 5);
        let (a, _) = apply_detection(&em, 1e-4, &det, 6).unwrap();
        assert!(a.timestamps().windows(2).all(|w| w[1] - w[0] >= 50_000));
    }

    #[test]
    fn poisson_counts_concentrate() {
        assert!(simulate_poisson_stream(0.0, 1.0, 3).unwrap().is_empty());
        let (rate, dur) = (2e5, 0.5);
        let s = simulate_poisson_stream(rate, dur, 3).unwrap();
        let mean = rate * dur;
        assert!((s.len() as f64 - mean).abs() <= 4.0 * mean.sqrt());
        assert!(*s.timestamps().last().unwrap() < s.duration_ps());
    }

    #[test]
    fn jitter_keeps_streams_sorted_and_in_range() {
        let s = simulate_poisson_stream(1e6, 1e-3, 3).unwrap();
        let j = apply_jitter(&s, 5.0, 4).unwrap();
        assert_eq!(j.len(), s.len());
        assert!(j.timestamps().windows(2).all(|w| w[0] <= w[1]));
        assert!(*j.timestamps().last().unwrap() <= j.duration_ps());
    }
}
