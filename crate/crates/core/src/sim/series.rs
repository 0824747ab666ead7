use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rng_for, StreamError, STREAM_SERIES};
use crate::emitter::{polarization_intensity, saturation_rate, PolarizationModel, SaturationModel};
use crate::fit::spectrum::{lorentzian_sum, LorentzianPeak, Spectrum};

/// One `(x, y, σ)` sample of a measured series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// Noise model for synthetic series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeriesNoise {
    /// Exact model values, unit weights.
    None,
    /// Poisson counting noise over `integration_s` seconds per point.
    Shot { integration_s: f64 },
    /// Gaussian noise with standard deviation `fraction × model value`.
    Relative { fraction: f64 },
}

impl SeriesNoise {
    fn apply<R: Rng>(&self, truth: f64, rng: &mut R) -> Result<(f64, f64), StreamError> {
        match *self {
            SeriesNoise::None => Ok((truth, 1.0)),
            SeriesNoise::Shot { integration_s } => {
                if !(integration_s > 0.0) {
                    return Err(StreamError::InvalidParameter {
                        name: "integration_s",
                        value: integration_s,
                        reason: "must be > 0",
                    });
                }
                let mean = truth * integration_s;
                let counts = if mean > 0.0 { Poisson::new(mean).expect("positive mean").sample(rng) } else { 0.0 };
                Ok((counts / integration_s, counts.max(1.0).sqrt() / integration_s))
            }
            SeriesNoise::Relative { fraction } => {
                let sigma = fraction * truth;
                let z: f64 = rng.sample(StandardNormal);
                Ok((truth + sigma * z, if sigma > 0.0 { sigma } else { 1.0 }))
            }
        }
    }
}

fn nonempty(len: usize, name: &'static str) -> Result<(), StreamError> {
    if len == 0 {
        return Err(StreamError::InvalidParameter { name, value: 0.0, reason: "must be nonempty" });
    }
    Ok(())
}

/// Count rate versus excitation power (mW) drawn from the saturation law.
pub fn generate_saturation_series(
    model: &SaturationModel,
    powers: &[f64],
    noise: SeriesNoise,
    seed: u64,
) -> Result<Vec<SeriesPoint>, StreamError> {
    nonempty(powers.len(), "powers")?;
    let mut rng = rng_for(seed, STREAM_SERIES);
    powers
        .iter()
        .map(|&p| {
            if !(p >= 0.0) {
                return Err(StreamError::InvalidParameter { name: "power", value: p, reason: "must be >= 0" });
            }
            let (y, sigma) = noise.apply(saturation_rate(p, model), &mut rng)?;
            Ok(SeriesPoint { x: p, y, sigma })
        })
        .collect()
}

/// Count rate versus excitation polarization angle (degrees).
pub fn generate_polarization_series(
    model: &PolarizationModel,
    angles: &[f64],
    noise: SeriesNoise,
    seed: u64,
) -> Result<Vec<SeriesPoint>, StreamError> {
    nonempty(angles.len(), "angles")?;
    let mut rng = rng_for(seed, STREAM_SERIES);
    angles
        .iter()
        .map(|&theta| {
            let (y, sigma) = noise.apply(polarization_intensity(theta, model), &mut rng)?;
            Ok(SeriesPoint { x: theta, y, sigma })
        })
        .collect()
}

/// Baseline plus Lorentzian lines on the given wavelength grid, with Gaussian
/// noise of standard deviation `noise_fraction ×` each noiseless sample.
pub fn generate_spectrum(
    peaks: &[LorentzianPeak],
    baseline: f64,
    wavelengths: &[f64],
    noise_fraction: f64,
    seed: u64,
) -> Result<Spectrum, StreamError> {
    nonempty(wavelengths.len(), "wavelengths")?;
    let clean: Vec<f64> = wavelengths.iter().map(|&l| baseline + lorentzian_sum(peaks, l)).collect();
    let (intensities, sigmas) = if noise_fraction > 0.0 {
        let mut rng = rng_for(seed, STREAM_SERIES);
        let sigmas: Vec<f64> = clean.iter().map(|v| noise_fraction * v.abs()).collect();
        let noisy = clean.iter().zip(&sigmas).map(|(&v, &s)| v + s * rng.sample::<f64, _>(StandardNormal)).collect();
        (noisy, Some(sigmas))
    } else {
        (clean, None)
    };
    Spectrum::new(wavelengths.to_vec(), intensities, sigmas, baseline).map_err(|_| StreamError::InvalidParameter {
        name: "wavelengths",
        value: f64::NAN,
        reason: "must be strictly increasing",
    })
}
