//! Scaled complementary error function and the Gaussian-smeared two-sided
//! exponential built on it.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `exp(x^2) * erfc(x)`, stable for large positive `x`.
pub fn erfcx(x: f64) -> f64 {
    if x < 20.0 {
        if x < -26.0 {
            // erfc saturates at 2 and exp(x^2) overflows; the product is +inf anyway.
            return f64::INFINITY;
        }
        return (x * x).exp() * libm::erfc(x);
    }
    // Asymptotic expansion 1/(x sqrt(pi)) * sum (-1)^n (2n-1)!! / (2x^2)^n.
    let inv2x2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=8 {
        term *= -((2 * n - 1) as f64) * inv2x2;
        sum += term;
    }
    sum / (x * PI.sqrt())
}

/// Convolution of `exp(-|t|/decay)` with a unit-area Gaussian of standard
/// deviation `width`, evaluated at delay `tau`.
///
/// `width == 0` returns the bare exponential.
pub fn smeared_exponential(tau: f64, decay: f64, width: f64) -> f64 {
    if width == 0.0 {
        return (-tau.abs() / decay).exp();
    }
    0.5 * (branch(tau, decay, width) + branch(-tau, decay, width))
}

/// Derivative of [`smeared_exponential`] with respect to `decay`.
pub fn smeared_exponential_d_decay(tau: f64, decay: f64, width: f64) -> f64 {
    if width == 0.0 {
        let x = tau.abs();
        return x / (decay * decay) * (-x / decay).exp();
    }
    let w2 = width * width;
    let t2 = decay * decay;
    let t3 = t2 * decay;
    let plus = branch(tau, decay, width);
    let minus = branch(-tau, decay, width);
    let gauss = (-tau * tau / (2.0 * w2)).exp();
    0.5 * (plus * (tau / t2 - w2 / t3) + minus * (-tau / t2 - w2 / t3)) + (2.0 / PI).sqrt() * width / t2 * gauss
}

/// `exp(w^2/(2T^2) - tau/T) * erfc((w/T - tau/w)/sqrt 2)` without overflow.
fn branch(tau: f64, decay: f64, width: f64) -> f64 {
    let u = (width / decay - tau / width) * FRAC_1_SQRT_2;
    let gauss_exponent = -tau * tau / (2.0 * width * width);
    if u >= 0.0 {
        gauss_exponent.exp() * erfcx(u)
    } else {
        // erfc(u) = 2 - erfc(-u) for the negative half-line.
        let direct = width * width / (2.0 * decay * decay) - tau / decay;
        2.0 * direct.exp() - gauss_exponent.exp() * erfcx(-u)
    }
}
