//! Synthetic photon streams: exact three-level emitter trajectories, a
//! two-detector HBT chain and noisy series generators for fit validation.
//!
//! All randomness comes from `ChaCha20Rng` (rand_chacha 0.9) seeded with
//! `seed_from_u64`. Independent phases of one simulation draw from distinct
//! ChaCha stream ids of the same seed, so every phase is reproducible on its
//! own and the fused [`simulate_plan`] matches the two-step route
//! [`simulate_emission_times`] + [`apply_detection`] bit for bit.

mod chain;
mod detect;
mod series;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emitter::{DeviceResponse, TransitionRates};

pub use chain::{simulate_emission_times, simulate_occupancy};
pub use detect::{apply_detection, apply_jitter, simulate_plan, simulate_poisson_stream};
pub use series::{
    generate_polarization_series, generate_saturation_series, generate_spectrum, SeriesNoise, SeriesPoint,
};

pub const PS_PER_NS: f64 = 1e3;
pub const PS_PER_S: f64 = 1e12;

const STREAM_CHAIN: u64 = 0;
const STREAM_DETECT: u64 = 1;
const STREAM_BACKGROUND_A: u64 = 2;
const STREAM_BACKGROUND_B: u64 = 3;
const STREAM_SERIES: u64 = 4;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("timestamp {index} ({value} ps) is earlier than its predecessor")]
    Unsorted { index: usize, value: u64 },
    #[error("timestamp {index} ({value} ps) lies outside the acquisition [0, {duration} ps]")]
    OutOfRange { index: usize, value: u64, duration: u64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), StreamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(StreamError::InvalidParameter { name, value, reason })
    }
}

/// Photon arrival times of one detector channel, in integer picoseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampStream {
    timestamps: Vec<u64>,
    duration_ps: u64,
    channel: String,
}

impl TimestampStream {
    /// Validates ordering and range; the first offending index is reported.
    pub fn new(timestamps: Vec<u64>, duration_ps: u64, channel: impl Into<String>) -> Result<Self, StreamError> {
        let mut prev = 0u64;
        for (index, &value) in timestamps.iter().enumerate() {
            if value > duration_ps {
                return Err(StreamError::OutOfRange { index, value, duration: duration_ps });
            }
            if value < prev {
                return Err(StreamError::Unsorted { index, value });
            }
            prev = value;
        }
        Ok(Self { timestamps, duration_ps, channel: channel.into() })
    }

    pub(crate) fn from_sorted(timestamps: Vec<u64>, duration_ps: u64, channel: impl Into<String>) -> Self {
        debug_assert!(timestamps.windows(2).all(|w| w[0] <= w[1]));
        Self { timestamps, duration_ps, channel: channel.into() }
    }

    pub fn empty(duration_ps: u64, channel: impl Into<String>) -> Self {
        Self::from_sorted(Vec::new(), duration_ps, channel)
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn into_timestamps(self) -> Vec<u64> {
        self.timestamps
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_S
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn set_channel(&mut self, channel: impl Into<String>) {
        self.channel = channel.into();
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Mean count rate in counts/s.
    pub fn rate(&self) -> f64 {
        if self.duration_ps == 0 {
            return 0.0;
        }
        self.len() as f64 / self.duration_s()
    }
}

/// Converts seconds to whole picoseconds.
pub fn seconds_to_ps(seconds: f64) -> u64 {
    (seconds * PS_PER_S).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Per-photon detection probability.
    pub eta: f64,
    /// Combined two-detector jitter; each channel jitters with `w/√2`.
    pub jitter: DeviceResponse,
    /// Uncorrelated background per channel, counts/s.
    pub background_rate: f64,
    /// Minimum separation of accepted events on one channel, ns.
    #[serde(default)]
    pub dead_time: f64,
}

impl DetectorConfig {
    pub fn new(eta: f64, jitter_w: f64, background_rate: f64, dead_time: f64) -> Result<Self, StreamError> {
        let cfg = Self { eta, jitter: DeviceResponse { w: jitter_w }, background_rate, dead_time };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lossless detector: every photon detected, no jitter, no background.
    pub fn ideal() -> Self {
        Self { eta: 1.0, jitter: DeviceResponse::IDEAL, background_rate: 0.0, dead_time: 0.0 }
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        check("eta", self.eta, (0.0..=1.0).contains(&self.eta), "must be in [0, 1]")?;
        check("jitter.w", self.jitter.w, self.jitter.w >= 0.0, "must be >= 0")?;
        check("background_rate", self.background_rate, self.background_rate >= 0.0, "must be >= 0")?;
        check("dead_time", self.dead_time, self.dead_time >= 0.0, "must be >= 0")
    }

    pub fn per_channel_jitter(&self) -> f64 {
        self.jitter.w / std::f64::consts::SQRT_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub rates: TransitionRates,
    pub detector: DetectorConfig,
    /// Acquisition time, s.
    pub duration: f64,
    pub seed: u64,
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<(), StreamError> {
        check("duration", self.duration, self.duration > 0.0, "must be > 0")?;
        self.detector.validate()
    }
}
