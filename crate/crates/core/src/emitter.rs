//! Analytic photophysics of a three-level emitter with a shelving state.
//!
//! Levels: 1 (ground), 2 (excited), 3 (shelving). Transitions 1→2 (pump),
//! 2→1 (radiative), 2→3 (intersystem crossing) and 3→1 (non-radiative
//! deshelving). All times are nanoseconds and all rates are 1/ns; powers are
//! mW and count rates counts/s.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::smeared_exponential;

/// Combined timing-jitter width (half 1/√e-width) of the reference HBT setup, ns.
pub const REFERENCE_DRF_WIDTH_NS: f64 = 0.354;

/// Total detection efficiency estimated for the reference confocal setup.
pub const REFERENCE_DETECTION_EFFICIENCY: f64 = 0.022;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmitterError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("rate discriminant A^2 - 4B = {0} is negative; g2 is not a sum of real exponentials")]
    DiscriminantNegative(f64),
    #[error("division by zero while deriving coefficients: {0}")]
    DivisionByZero(&'static str),
    #[error("no non-negative rate set reproduces the coefficients: {0}")]
    Infeasible(String),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), EmitterError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(EmitterError::InvalidParameter { name, value, reason })
    }
}

/// The four transition rates of the three-level system (1/ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRates", into = "RawRates")]
pub struct TransitionRates {
    r12: f64,
    r21: f64,
    r23: f64,
    r31: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRates {
    r12: f64,
    r21: f64,
    r23: f64,
    r31: f64,
}

impl TryFrom<RawRates> for TransitionRates {
    type Error = EmitterError;
    fn try_from(r: RawRates) -> Result<Self, Self::Error> {
        Self::new(r.r12, r.r21, r.r23, r.r31)
    }
}

impl From<TransitionRates> for RawRates {
    fn from(r: TransitionRates) -> Self {
        RawRates { r12: r.r12, r21: r.r21, r23: r.r23, r31: r.r31 }
    }
}

impl TransitionRates {
    pub fn new(r12: f64, r21: f64, r23: f64, r31: f64) -> Result<Self, EmitterError> {
        check("r12", r12, r12 >= 0.0, "must be >= 0")?;
        check("r21", r21, r21 > 0.0, "must be > 0")?;
        check("r23", r23, r23 >= 0.0, "must be >= 0")?;
        check("r31", r31, r31 >= 0.0, "must be >= 0")?;
        let rates = Self { r12, r21, r23, r31 };
        let disc = rates.discriminant();
        if disc < 0.0 {
            return Err(EmitterError::DiscriminantNegative(disc));
        }
        Ok(rates)
    }

    pub fn r12(&self) -> f64 {
        self.r12
    }
    pub fn r21(&self) -> f64 {
        self.r21
    }
    pub fn r23(&self) -> f64 {
        self.r23
    }
    pub fn r31(&self) -> f64 {
        self.r31
    }

    /// Trace invariant of the rate matrix: sum of all four rates.
    pub fn a_sum(&self) -> f64 {
        self.r12 + self.r21 + self.r23 + self.r31
    }

    /// Second invariant of the rate matrix (sum of its principal 2×2 minors).
    ///
    /// Includes the `r23·r31` term; without it the relaxation constants no
    /// longer match the eigenvalues of the level dynamics.
    pub fn b_product(&self) -> f64 {
        self.r12 * self.r23 + self.r12 * self.r31 + self.r21 * self.r31 + self.r23 * self.r31
    }

    pub fn discriminant(&self) -> f64 {
        let a = self.a_sum();
        a * a - 4.0 * self.b_product()
    }
}

/// Analytic g² parameters: antibunching time, bunching time, bunching amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoefficients", into = "RawCoefficients")]
pub struct G2Coefficients {
    tau1: f64,
    tau2: f64,
    a: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCoefficients {
    tau1: f64,
    tau2: f64,
    a: f64,
}

impl TryFrom<RawCoefficients> for G2Coefficients {
    type Error = EmitterError;
    fn try_from(c: RawCoefficients) -> Result<Self, Self::Error> {
        Self::new(c.tau1, c.tau2, c.a)
    }
}

impl From<G2Coefficients> for RawCoefficients {
    fn from(c: G2Coefficients) -> Self {
        RawCoefficients { tau1: c.tau1, tau2: c.tau2, a: c.a }
    }
}

impl G2Coefficients {
    /// Coefficients fitted for the reference Ni/Si emitter: 0.83 ns, 42.2 ns, 0.16.
    pub const REFERENCE: G2Coefficients = G2Coefficients { tau1: 0.83, tau2: 42.2, a: 0.16 };

    pub fn new(tau1: f64, tau2: f64, a: f64) -> Result<Self, EmitterError> {
        check("tau1", tau1, tau1 > 0.0, "must be > 0")?;
        check("tau2", tau2, tau2 > 0.0, "must be > 0")?;
        check("tau2", tau2, tau1 <= tau2, "must be >= tau1")?;
        check("a", a, true, "must be finite")?;
        Ok(Self { tau1, tau2, a })
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }
    pub fn tau2(&self) -> f64 {
        self.tau2
    }
    pub fn a(&self) -> f64 {
        self.a
    }
}

/// Gaussian timing-jitter kernel of the detector pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceResponse {
    /// Half 1/√e-width (standard deviation) in ns; 0 is an ideal detector.
    pub w: f64,
}

impl DeviceResponse {
    pub const IDEAL: DeviceResponse = DeviceResponse { w: 0.0 };

    pub fn new(w: f64) -> Result<Self, EmitterError> {
        check("w", w, w >= 0.0, "must be >= 0")?;
        Ok(Self { w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationModel {
    /// Saturation count rate, counts/s.
    pub r_inf: f64,
    /// Saturation power, mW.
    pub p_sat: f64,
}

impl SaturationModel {
    pub fn new(r_inf: f64, p_sat: f64) -> Result<Self, EmitterError> {
        check("r_inf", r_inf, r_inf > 0.0, "must be > 0")?;
        check("p_sat", p_sat, p_sat > 0.0, "must be > 0")?;
        Ok(Self { r_inf, p_sat })
    }

    pub fn rate(&self, power: f64) -> f64 {
        saturation_rate(power, self)
    }
}

/// Polarization-dependent excitation response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationModel {
    pub i_max: f64,
    pub i_min: f64,
    /// Angle of maximum response in degrees, in [0, 180).
    pub theta0: f64,
}

impl PolarizationModel {
    pub fn new(i_max: f64, i_min: f64, theta0: f64) -> Result<Self, EmitterError> {
        check("i_min", i_min, i_min >= 0.0, "must be >= 0")?;
        check("i_max", i_max, i_max >= i_min, "must be >= i_min")?;
        check("theta0", theta0, true, "must be finite")?;
        Ok(Self { i_max, i_min, theta0: normalize_angle(theta0) })
    }

    pub fn visibility(&self) -> Result<f64, EmitterError> {
        visibility(self.i_max, self.i_min)
    }
}

/// Folds an angle in degrees into the dipole period [0, 180).
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(180.0);
    // rem_euclid can round up to exactly the modulus for tiny negative inputs.
    if t >= 180.0 {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub eta: f64,
}

impl DetectionChain {
    pub fn new(eta: f64) -> Result<Self, EmitterError> {
        check("eta", eta, eta > 0.0 && eta <= 1.0, "must be in (0, 1]")?;
        Ok(Self { eta })
    }
}

/// Maps transition rates to the g² relaxation constants and bunching amplitude.
pub fn derive_coefficients(rates: &TransitionRates) -> Result<G2Coefficients, EmitterError> {
    let a_sum = rates.a_sum();
    let b = rates.b_product();
    let disc = a_sum * a_sum - 4.0 * b;
    if disc < 0.0 {
        return Err(EmitterError::DiscriminantNegative(disc));
    }
    let root = disc.sqrt();
    if b == 0.0 || a_sum - root <= 0.0 {
        return Err(EmitterError::DivisionByZero("slow relaxation rate is zero"));
    }
    // 2/(A - sqrt) is evaluated as (A + sqrt)/(2B) to avoid cancellation.
    let tau1 = 2.0 / (a_sum + root);
    let tau2 = (a_sum + root) / (2.0 * b);
    if rates.r31 == 0.0 {
        return Err(EmitterError::DivisionByZero("r31 = 0"));
    }
    if tau2 == tau1 {
        return Err(EmitterError::DivisionByZero("tau1 = tau2"));
    }
    let a = (1.0 - rates.r31 * tau2) / (rates.r31 * (tau2 - tau1));
    G2Coefficients::new(tau1, tau2, a)
}

/// Inverse of [`derive_coefficients`] for a chosen pump rate `r12` (1/ns).
///
/// Three coefficients cannot pin down four rates, so `r12` is supplied by the
/// caller; the remaining rates are then unique.
pub fn rates_from_coefficients(coeffs: &G2Coefficients, r12: f64) -> Result<TransitionRates, EmitterError> {
    check("r12", r12, r12 > 0.0, "must be > 0")?;
    let (t1, t2, a) = (coeffs.tau1, coeffs.tau2, coeffs.a);
    let denom = t2 + a * (t2 - t1);
    if denom <= 0.0 {
        return Err(EmitterError::Infeasible(format!("bunching amplitude {a} implies a non-positive deshelving rate")));
    }
    let r31 = 1.0 / denom;
    let a_sum = 1.0 / t1 + 1.0 / t2;
    let b = 1.0 / (t1 * t2);
    // Characteristic polynomial at r31 equals r12·r23.
    let mut r23 = (r31 * r31 - a_sum * r31 + b) / r12;
    let r21_plus_r23 = a_sum - r12 - r31;
    let scale = a_sum.max(r12);
    if r23 < 0.0 {
        if r23 > -1e-12 * scale {
            r23 = 0.0;
        } else {
            return Err(EmitterError::Infeasible(format!("shelving rate r23 = {r23} is negative for r12 = {r12}")));
        }
    }
    let r21 = r21_plus_r23 - r23;
    if r21 <= 0.0 {
        return Err(EmitterError::Infeasible(format!(
            "radiative rate r21 = {r21} is not positive for r12 = {r12}; lower the pump rate"
        )));
    }
    TransitionRates::new(r12, r21, r23, r31)
}

/// Ideal three-level g²: `1 − (1+a)·e^(−|τ|/τ₁) + a·e^(−|τ|/τ₂)`.
pub fn g2_ideal(coeffs: &G2Coefficients, tau: f64) -> f64 {
    let x = tau.abs();
    1.0 - (1.0 + coeffs.a) * (-x / coeffs.tau1).exp() + coeffs.a * (-x / coeffs.tau2).exp()
}

/// g² smeared by the Gaussian device response, in closed form.
pub fn g2_convolved(coeffs: &G2Coefficients, drf: &DeviceResponse, tau: f64) -> f64 {
    if drf.w == 0.0 {
        return g2_ideal(coeffs, tau);
    }
    1.0 - (1.0 + coeffs.a) * smeared_exponential(tau, coeffs.tau1, drf.w)
        + coeffs.a * smeared_exponential(tau, coeffs.tau2, drf.w)
}

/// Stationary occupation probabilities `(p1, p2, p3)`.
pub fn steady_state_populations(rates: &TransitionRates) -> (f64, f64, f64) {
    let TransitionRates { r12, r21, r23, r31 } = *rates;
    let q1 = r31 * (r21 + r23);
    let q2 = r12 * r31;
    let q3 = r12 * r23;
    let total = q1 + q2 + q3;
    if total == 0.0 {
        // r12 = 0 keeps the system in the ground state; r31 = 0 with pumping
        // traps it in the shelving state.
        return if r12 == 0.0 {
            (1.0, 0.0, 0.0)
        } else if r23 > 0.0 {
            (0.0, 0.0, 1.0)
        } else {
            (1.0, 0.0, 0.0)
        };
    }
    (q1 / total, q2 / total, q3 / total)
}

/// Time derivative of the populations under the rate equations.
pub fn population_drift(rates: &TransitionRates, p: (f64, f64, f64)) -> (f64, f64, f64) {
    let TransitionRates { r12, r21, r23, r31 } = *rates;
    let (p1, p2, p3) = p;
    (-r12 * p1 + r21 * p2 + r31 * p3, r12 * p1 - (r21 + r23) * p2, r23 * p2 - r31 * p3)
}

/// Detected photon rate in counts/s: `η · r21 · p2`.
pub fn mean_count_rate(rates: &TransitionRates, chain: &DetectionChain) -> f64 {
    let (_, p2, _) = steady_state_populations(rates);
    chain.eta * rates.r21 * p2 * 1e9
}

/// `R∞ · P / (P + P_sat)`.
pub fn saturation_rate(power: f64, model: &SaturationModel) -> f64 {
    if power.is_infinite() {
        return model.r_inf;
    }
    model.r_inf * power / (power + model.p_sat)
}

/// Radiative lifetime estimate `τ₁ · (1 + P/P_sat)` (two-level correction).
pub fn corrected_lifetime(tau1: f64, power: f64, p_sat: f64) -> f64 {
    tau1 * (1.0 + power / p_sat)
}

/// Peak intensity (kW/cm²) of a Gaussian focus carrying `p_sat` mW.
///
/// `focus_half_width` (nm) is the half 1/√e-width σ of the intensity profile,
/// so the peak intensity is `P / (2π σ²)`.
pub fn saturation_intensity(p_sat: f64, focus_half_width: f64) -> f64 {
    let power_kw = p_sat * 1e-6;
    let sigma_cm = focus_half_width * 1e-7;
    power_kw / (2.0 * std::f64::consts::PI * sigma_cm * sigma_cm)
}

/// `I_min + (I_max − I_min)·cos²(θ − θ₀)`, angles in degrees.
pub fn polarization_intensity(theta: f64, model: &PolarizationModel) -> f64 {
    let c = (theta - model.theta0).to_radians().cos();
    model.i_min + (model.i_max - model.i_min) * c * c
}

/// `(I_max − I_min) / (I_max + I_min)`.
pub fn visibility(i_max: f64, i_min: f64) -> Result<f64, EmitterError> {
    if !(i_max.is_finite() && i_min.is_finite()) || i_min < 0.0 || i_max < i_min {
        return Err(EmitterError::InvalidParameter {
            name: "i_max/i_min",
            value: i_max,
            reason: "requires i_max >= i_min >= 0",
        });
    }
    let sum = i_max + i_min;
    if sum == 0.0 {
        return Err(EmitterError::Degenerate("i_max + i_min = 0"));
    }
    Ok((i_max - i_min) / sum)
}
