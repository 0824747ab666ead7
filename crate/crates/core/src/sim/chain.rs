use rand::Rng;
use rand_distr::Exp1;

use super::{rng_for, STREAM_CHAIN};
use crate::emitter::TransitionRates;

/// Runs the emitter's continuous-time Markov chain from the ground state for
/// `duration_ns`, calling `on_emit` at every radiative 2→1 jump.
///
/// Competing exponential clocks, no time discretization. Returns the time
/// spent in each level.
pub(crate) fn run_chain<R: Rng, F: FnMut(f64)>(
    rates: &TransitionRates,
    duration_ns: f64,
    rng: &mut R,
    mut on_emit: F,
) -> [f64; 3] {
    let mut occupancy = [0.0; 3];
    let mut t = 0.0;
    let mut level = 0usize;
    let leave_excited = rates.r21() + rates.r23();
    let p_radiative = rates.r21() / leave_excited;
    loop {
        let out_rate = match level {
            0 => rates.r12(),
            1 => leave_excited,
            _ => rates.r31(),
        };
        if out_rate == 0.0 {
            occupancy[level] += duration_ns - t;
            break;
        }
        let dwell: f64 = rng.sample::<f64, _>(Exp1) / out_rate;
        if t + dwell >= duration_ns {
            occupancy[level] += duration_ns - t;
            break;
        }
        occupancy[level] += dwell;
        t += dwell;
        level = match level {
            0 => 1,
            1 => {
                if rng.random::<f64>() < p_radiative {
                    on_emit(t);
                    0
                } else {
                    2
                }
            }
            _ => 0,
        };
    }
    occupancy
}

/// Times (ns) of all photon emissions in `[0, duration)` seconds.
pub fn simulate_emission_times(rates: &TransitionRates, duration: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, STREAM_CHAIN);
    let mut out = Vec::new();
    run_chain(rates, duration * 1e9, &mut rng, |t| out.push(t));
    out
}

/// Fraction of time spent in levels 1, 2, 3 and the number of emissions.
pub fn simulate_occupancy(rates: &TransitionRates, duration: f64, seed: u64) -> ([f64; 3], u64) {
    let mut rng = rng_for(seed, STREAM_CHAIN);
    let duration_ns = duration * 1e9;
    let mut emitted = 0u64;
    let occ = run_chain(rates, duration_ns, &mut rng, |_| emitted += 1);
    (occ.map(|o| o / duration_ns), emitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emitter::steady_state_populations;

    #[test]
    fn no_pump_no_photons() {
        let r = TransitionRates::new(0.0, 1.0, 0.1, 0.1).unwrap();
        assert!(simulate_emission_times(&r, 1e-3, 7).is_empty());
        let (occ, n) = simulate_occupancy(&r, 1e-3, 7);
        assert_eq!((occ, n), ([1.0, 0.0, 0.0], 0));
    }

    #[test]
    fn deterministic_and_ordered() {
        let r = TransitionRates::new(0.3, 0.9, 0.01, 0.02).unwrap();
        let a = simulate_emission_times(&r, 1e-4, 11);
        let b = simulate_emission_times(&r, 1e-4, 11);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(*a.last().unwrap() < 1e5);
        assert_ne!(a, simulate_emission_times(&r, 1e-4, 12));
    }

    #[test]
    fn occupancy_matches_steady_state() {
        let r = TransitionRates::new(0.4, 0.7, 0.05, 0.1).unwrap();
        let (occ, _) = simulate_occupancy(&r, 2e-3, 3);
        let (p1, p2, p3) = steady_state_populations(&r);
        // Correlated samples; 2 ms covers ~1e5 shelving cycles.
        for (o, p) in occ.iter().zip([p1, p2, p3]) {
            assert!((o - p).abs() < 0.01, "{o} vs {p}");
        }
    }
}
