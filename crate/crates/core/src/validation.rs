//! Reference implementations used to cross-check the fast paths.
//!
//! Everything here is deliberately naive: direct numerical quadrature of the
//! convolution integral, an all-pairs correlator and a Runge-Kutta
//! integration of the rate equations. None of it shares code with the
//! routines it checks.

use crate::correlator::CorrelationConfig;
use crate::emitter::{G2Coefficients, TransitionRates};
use crate::sim::TimestampStream;

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // Start from a few panels so narrow features are not stepped over.
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let m = 0.5 * (x0 + x1);
            let (f0, f1, fm) = (f(x0), f(x1), f(m));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_step(&f, x0, f0, x1, f1, m, fm, whole, tol / PANELS as f64, 40)
        })
        .sum()
}

/// Ideal three-level g² written out from its definition.
fn g2_direct(c: &G2Coefficients, tau: f64) -> f64 {
    let t = tau.abs();
    1.0 - (1.0 + c.a()) * (-t / c.tau1()).exp() + c.a() * (-t / c.tau2()).exp()
}

/// `∫ g²(τ') · N(τ − τ'; 0, w) dτ'` by quadrature.
///
/// Outside `τ ± 20w` the kernel is below 1e-87 and g² is bounded, so the
/// integral is truncated there; the kink of g² at τ' = 0 is used as a
/// panel boundary.
pub fn convolved_g2_quadrature(c: &G2Coefficients, w: f64, tau: f64) -> f64 {
    if w == 0.0 {
        return g2_direct(c, tau);
    }
    let norm = 1.0 / (w * (2.0 * std::f64::consts::PI).sqrt());
    let integrand = |s: f64| {
        let u = (tau - s) / w;
        g2_direct(c, s) * norm * (-0.5 * u * u).exp()
    };
    let (lo, hi) = (tau - 20.0 * w, tau + 20.0 * w);
    let tol = 1e-13;
    if lo < 0.0 && hi > 0.0 {
        adaptive_simpson(integrand, lo, 0.0, tol) + adaptive_simpson(integrand, 0.0, hi, tol)
    } else {
        adaptive_simpson(integrand, lo, hi, tol)
    }
}

/// All-pairs delay histogram with bins `k·w − w/2 ≤ δ < k·w + w/2`,
/// `|k| ≤ half`, where `(w, half)` come from the config layout.
pub fn brute_force_histogram(a: &TimestampStream, b: &TimestampStream, cfg: &CorrelationConfig) -> Vec<u64> {
    let (w, half) = cfg.layout().expect("valid config");
    let (w, half) = (w as i128, half as i128);
    let mut counts = vec![0u64; (2 * half + 1) as usize];
    for &ta in a.timestamps() {
        for &tb in b.timestamps() {
            let delta = tb as i128 - ta as i128;
            // Bin index k = floor((2δ + w) / 2w).
            let k = (2 * delta + w).div_euclid(2 * w);
            if k.abs() <= half {
                counts[(k + half) as usize] += 1;
            }
        }
    }
    counts
}

/// dp/dt for populations `(p1, p2, p3)`.
fn rate_equations(r: &TransitionRates, p: [f64; 3]) -> [f64; 3] {
    [
        -r.r12() * p[0] + r.r21() * p[1] + r.r31() * p[2],
        r.r12() * p[0] - (r.r21() + r.r23()) * p[1],
        r.r23() * p[1] - r.r31() * p[2],
    ]
}

/// Excited-state population at `tau` after starting in the ground state,
/// by fixed-step RK4 with `steps` steps.
pub fn excited_population_rk4(r: &TransitionRates, tau: f64, steps: usize) -> f64 {
    let h = tau / steps as f64;
    let mut p = [1.0, 0.0, 0.0];
    let add = |p: [f64; 3], k: [f64; 3], s: f64| [p[0] + s * k[0], p[1] + s * k[1], p[2] + s * k[2]];
    for _ in 0..steps {
        let k1 = rate_equations(r, p);
        let k2 = rate_equations(r, add(p, k1, 0.5 * h));
        let k3 = rate_equations(r, add(p, k2, 0.5 * h));
        let k4 = rate_equations(r, add(p, k3, h));
        for i in 0..3 {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p[1]
}

/// g²(τ) as `p₂(τ)/p₂(∞)` from integrating the rate equations; `p₂(∞)` is
/// found by integrating until the population stops changing.
pub fn g2_from_rate_equations(r: &TransitionRates, tau: f64) -> f64 {
    let fastest = r.r12() + r.r21() + r.r23() + r.r31();
    let steps_for = |t: f64| ((t * fastest * 50.0).ceil() as usize).max(200);
    let mut t = 10.0 / fastest;
    let mut p_inf = excited_population_rk4(r, t, steps_for(t));
    loop {
        t *= 2.0;
        let next = excited_population_rk4(r, t, steps_for(t));
        let settled = (next - p_inf).abs() <= 1e-14 * next.abs();
        p_inf = next;
        if settled || t > 1e9 / fastest {
            break;
        }
    }
    excited_population_rk4(r, tau.abs(), steps_for(tau.abs())) / p_inf
}

/// Derivative of `f` at `x` by Ridders' extrapolation of central
/// differences. Returns `(derivative, error estimate)`.
///
/// The tableau is started from `h0`, `h0/4` and `h0/16` and the run with
/// the smallest error estimate wins; a single start can stop early on a
/// spuriously converged column when `h0` is large.
pub fn ridders_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h0: f64) -> (f64, f64) {
    [h0, 0.25 * h0, 0.0625 * h0]
        .into_iter()
        .map(|h| ridders_single(&f, x, h))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three starts")
}

fn ridders_single<F: Fn(f64) -> f64>(f: &F, x: f64, h0: f64) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const N: usize = 12;
    let mut table = [[0.0f64; N]; N];
    let mut h = h0;
    table[0][0] = (f(x + h) - f(x - h)) / (2.0 * h);
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..N {
        h /= SHRINK;
        table[0][i] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}
