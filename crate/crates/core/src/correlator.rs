//! Start-multistop delay histograms between two timestamp channels,
//! Poissonian normalization and background correction.
//!
//! Bin `k` (center `k·w`) holds delays `δ = t_b − t_a` with
//! `k·w − w/2 ≤ δ < k·w + w/2`. The bin count is odd so one bin sits on τ = 0.
//! Delays are integer picoseconds and the bin width must be a whole number
//! of picoseconds, which keeps bin assignment exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{TimestampStream, PS_PER_NS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("invalid correlation config: {0}")]
    InvalidConfig(String),
    #[error("streams have different durations ({0} ps vs {1} ps)")]
    DurationMismatch(u64, u64),
    #[error("channel {channel} is not sorted at index {index}")]
    Unsorted { channel: &'static str, index: usize },
    #[error("histogram is at stage {found:?}, expected {expected:?}")]
    Stage { expected: Stage, found: Stage },
    #[error("histogram metadata incomplete: {0}")]
    MissingMetadata(&'static str),
    #[error("signal fraction rho = {0} outside (0, 1]")]
    RhoOutOfRange(f64),
    #[error("signal-to-background ratio {0} must be > 0")]
    InvalidSnr(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Bin width, ns.
    pub bin_width: f64,
    /// Histogram half-range, ns.
    pub tau_max: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self { bin_width: 0.1, tau_max: 100.0 }
    }
}

impl CorrelationConfig {
    pub fn new(bin_width: f64, tau_max: f64) -> Result<Self, CorrelationError> {
        let cfg = Self { bin_width, tau_max };
        cfg.layout()?;
        Ok(cfg)
    }

    /// Bin width in ps and number of bins on each side of zero.
    pub fn layout(&self) -> Result<(u64, usize), CorrelationError> {
        let w = self.bin_width;
        if !(w > 0.0 && w.is_finite()) {
            return Err(CorrelationError::InvalidConfig(format!("bin width {w} ns must be > 0")));
        }
        if !(self.tau_max >= w && self.tau_max.is_finite()) {
            return Err(CorrelationError::InvalidConfig(format!(
                "tau_max {} ns must be >= bin width {w} ns",
                self.tau_max
            )));
        }
        let w_ps = (w * PS_PER_NS).round();
        if (w * PS_PER_NS - w_ps).abs() > 1e-6 || w_ps < 1.0 {
            return Err(CorrelationError::InvalidConfig(format!(
                "bin width {w} ns is not a whole number of picoseconds"
            )));
        }
        let half = (self.tau_max / w + 1e-9).floor() as usize;
        Ok((w_ps as u64, half))
    }

    pub fn n_bins(&self) -> Result<usize, CorrelationError> {
        Ok(2 * self.layout()?.1 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Normalized,
    BackgroundCorrected,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Normalized => "normalized",
            Stage::BackgroundCorrected => "background_corrected",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "raw" => Some(Stage::Raw),
            "normalized" => Some(Stage::Normalized),
            "background_corrected" => Some(Stage::BackgroundCorrected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    /// Mean count rates of the two channels, counts/s.
    pub n1: f64,
    pub n2: f64,
    /// Acquisition time, s.
    pub duration: f64,
    /// Bin width, ns.
    pub bin_width: f64,
    /// Signal fraction used for background correction.
    pub rho: Option<f64>,
    /// Factor converting raw counts into the current `values`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    bin_centers: Vec<f64>,
    counts: Vec<u64>,
    values: Vec<f64>,
    stage: Stage,
    meta: HistogramMeta,
}

impl CorrelationHistogram {
    /// Reassembles a histogram from stored columns; the bin layout must be
    /// symmetric with an odd number of bins.
    pub fn from_parts(
        bin_centers: Vec<f64>,
        counts: Vec<u64>,
        values: Vec<f64>,
        stage: Stage,
        meta: HistogramMeta,
    ) -> Result<Self, CorrelationError> {
        let n = bin_centers.len();
        if n == 0 || n.is_multiple_of(2) || counts.len() != n || values.len() != n {
            return Err(CorrelationError::InvalidConfig(format!(
                "need an odd, equal number of centers/counts/values (got {n}/{}/{})",
                counts.len(),
                values.len()
            )));
        }
        let half = n / 2;
        let tol = 1e-9 * meta.bin_width.max(1.0);
        for (k, &center) in bin_centers.iter().enumerate() {
            let expected = (k as f64 - half as f64) * meta.bin_width;
            if (center - expected).abs() > tol * (1.0 + k as f64) {
                return Err(CorrelationError::InvalidConfig(format!(
                    "bin center {center} at row {k} breaks the symmetric layout"
                )));
            }
        }
        Ok(Self { bin_centers, counts, values, stage, meta })
    }

    pub fn bin_centers(&self) -> &[f64] {
        &self.bin_centers
    }
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn stage(&self) -> Stage {
        self.stage
    }
    pub fn meta(&self) -> &HistogramMeta {
        &self.meta
    }
    pub fn len(&self) -> usize {
        self.counts.len()
    }
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
    pub fn center_index(&self) -> usize {
        self.counts.len() / 2
    }

    /// Per-bin standard error: `√counts` propagated through the stage factors.
    pub fn sigma(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).sqrt() * self.meta.scale).collect()
    }

    /// Fit weights: like [`sigma`](Self::sigma) but empty bins count as one.
    pub fn fit_sigma(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c.max(1) as f64).sqrt() * self.meta.scale).collect()
    }

    /// Expected raw coincidences per bin for uncorrelated streams, `N1·N2·w·T`.
    pub fn poisson_expectation(&self) -> f64 {
        let m = &self.meta;
        m.n1 * m.n2 * m.bin_width * 1e-9 * m.duration
    }

    /// Histogram with the channels swapped (τ → −τ).
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.counts.reverse();
        out.values.reverse();
        std::mem::swap(&mut out.meta.n1, &mut out.meta.n2);
        out
    }
}

fn check_sorted(stream: &TimestampStream, channel: &'static str) -> Result<(), CorrelationError> {
    match stream.timestamps().windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(CorrelationError::Unsorted { channel, index: i + 1 }),
        None => Ok(()),
    }
}

/// Events of channel A per parallel work item.
const CHUNK: usize = 1 << 15;

/// Raw delay histogram of all pairs `(t_a, t_b)` within the window.
///
/// Sliding two-pointer sweep, O(N_a + N_b + pairs). Channel A is split into
/// chunks that are correlated in parallel and merged bin-wise.
pub fn cross_correlate(
    a: &TimestampStream,
    b: &TimestampStream,
    cfg: &CorrelationConfig,
) -> Result<CorrelationHistogram, CorrelationError> {
    let (w_ps, half) = cfg.layout()?;
    if a.duration_ps() != b.duration_ps() {
        return Err(CorrelationError::DurationMismatch(a.duration_ps(), b.duration_ps()));
    }
    check_sorted(a, "A")?;
    check_sorted(b, "B")?;

    let n_bins = 2 * half + 1;
    let span = n_bins as i64 * w_ps as i64;
    // Window: -span/2 <= δ < span/2 with δ integral.
    let lo = -(span / 2);
    let hi = (span - 1) / 2;
    let ta = a.timestamps();
    let tb = b.timestamps();

    let counts = ta
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut local = vec![0u64; n_bins];
            let first = chunk[0] as i64;
            let mut start = tb.partition_point(|&t| (t as i64) - first < lo);
            for &t in chunk {
                let t = t as i64;
                while start < tb.len() && (tb[start] as i64) - t < lo {
                    start += 1;
                }
                for &u in &tb[start..] {
                    let delta = u as i64 - t;
                    if delta > hi {
                        break;
                    }
                    let idx = (2 * delta + span).div_euclid(2 * w_ps as i64) as usize;
                    local[idx] += 1;
                }
            }
            local
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut acc, part| {
                acc.iter_mut().zip(part).for_each(|(x, y)| *x += y);
                acc
            },
        );

    let duration = a.duration_s();
    let rate = |n: usize| {
        if duration > 0.0 {
            n as f64 / duration
        } else {
            0.0
        }
    };
    let bin_width = w_ps as f64 / PS_PER_NS;
    Ok(CorrelationHistogram {
        bin_centers: (0..n_bins).map(|k| (k as f64 - half as f64) * bin_width).collect(),
        values: counts.iter().map(|&c| c as f64).collect(),
        counts,
        stage: Stage::Raw,
        meta: HistogramMeta { n1: rate(a.len()), n2: rate(b.len()), duration, bin_width, rho: None, scale: 1.0 },
    })
}

/// Scales raw counts by `1/(N1·N2·w·T)` so uncorrelated light reads 1.
pub fn normalize(h: &CorrelationHistogram) -> Result<CorrelationHistogram, CorrelationError> {
    if h.stage != Stage::Raw {
        return Err(CorrelationError::Stage { expected: Stage::Raw, found: h.stage });
    }
    let m = &h.meta;
    for (ok, what) in [
        (m.n1 > 0.0, "channel A rate N1 is zero"),
        (m.n2 > 0.0, "channel B rate N2 is zero"),
        (m.duration > 0.0, "duration T is zero"),
        (m.bin_width > 0.0, "bin width is zero"),
    ] {
        if !ok {
            return Err(CorrelationError::MissingMetadata(what));
        }
    }
    let factor = 1.0 / h.poisson_expectation();
    let mut out = h.clone();
    out.values = h.counts.iter().map(|&c| c as f64 * factor).collect();
    out.meta.scale = factor;
    out.stage = Stage::Normalized;
    Ok(out)
}

/// Signal fraction `S/(S+B)` from a signal-to-background ratio.
pub fn snr_to_rho(snr: f64) -> Result<f64, CorrelationError> {
    if !(snr > 0.0) {
        return Err(CorrelationError::InvalidSnr(snr));
    }
    if snr.is_infinite() {
        return Ok(1.0);
    }
    Ok(snr / (snr + 1.0))
}

/// Removes uncorrelated-background coincidences:
/// `g² = (c − (1 − ρ²)) / ρ²` per bin.
pub fn background_correct(h: &CorrelationHistogram, rho: f64) -> Result<CorrelationHistogram, CorrelationError> {
    if h.stage != Stage::Normalized {
        return Err(CorrelationError::Stage { expected: Stage::Normalized, found: h.stage });
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(CorrelationError::RhoOutOfRange(rho));
    }
    let rho2 = rho * rho;
    let offset = 1.0 - rho2;
    let mut out = h.clone();
    out.values = h.values.iter().map(|&v| (v - offset) / rho2).collect();
    out.meta.scale = h.meta.scale / rho2;
    out.meta.rho = Some(rho);
    out.stage = Stage::BackgroundCorrected;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(ts: &[u64], dur: u64) -> TimestampStream {
        TimestampStream::new(ts.to_vec(), dur, "x").unwrap()
    }

    #[test]
    fn config_layout() {
        let cfg = CorrelationConfig::new(0.1, 1.0).unwrap();
        assert_eq!(cfg.layout().unwrap(), (100, 10));
        assert_eq!(cfg.n_bins().unwrap(), 21);
        assert!(CorrelationConfig::new(0.1, 0.05).is_err());
        assert!(CorrelationConfig::new(0.0, 1.0).is_err());
        assert!(CorrelationConfig::new(0.1005, 1.0).is_err());
    }

    #[test]
    fn empty_channel_gives_zero_histogram() {
        let cfg = CorrelationConfig::new(0.1, 1.0).unwrap();
        let h = cross_correlate(&stream(&[], 10_000), &stream(&[5, 500], 10_000), &cfg).unwrap();
        assert!(h.counts().iter().all(|&c| c == 0));
        assert_eq!(h.len(), 21);
        assert!(matches!(normalize(&h), Err(CorrelationError::MissingMetadata(_))));
    }

    #[test]
    fn single_pair_lands_in_its_bin() {
        let cfg = CorrelationConfig::new(0.1, 1.0).unwrap();
        // δ = 349 ps → bin center 0.3 ns; δ = 350 ps → 0.4 ns; δ = -50 ps → 0.
        for (delta, center) in [(349i64, 0.3), (350, 0.4), (-50, 0.0), (49, 0.0), (-51, -0.1)] {
            let t = 5_000u64;
            let h =
                cross_correlate(&stream(&[t], 20_000), &stream(&[(t as i64 + delta) as u64], 20_000), &cfg).unwrap();
            let k = h.counts().iter().position(|&c| c == 1).unwrap();
            assert!((h.bin_centers()[k] - center).abs() < 1e-12, "δ={delta}");
            assert_eq!(h.counts().iter().sum::<u64>(), 1);
        }
        // Window edges: -1050 inside, 1050 outside.
        let h = cross_correlate(&stream(&[5_000], 20_000), &stream(&[3_950, 6_050], 20_000), &cfg).unwrap();
        assert_eq!(h.counts()[0], 1);
        assert_eq!(h.counts().iter().sum::<u64>(), 1);
    }

    #[test]
    fn input_errors() {
        let cfg = CorrelationConfig::new(0.1, 1.0).unwrap();
        assert_eq!(
            cross_correlate(&stream(&[1], 10), &stream(&[1], 11), &cfg),
            Err(CorrelationError::DurationMismatch(10, 11))
        );
    }

    #[test]
    fn stage_order_enforced() {
        let cfg = CorrelationConfig::new(0.1, 1.0).unwrap();
        let h = cross_correlate(&stream(&[100, 900], 1_000_000), &stream(&[150], 1_000_000), &cfg).unwrap();
        assert!(background_correct(&h, 0.5).is_err());
        let n = normalize(&h).unwrap();
        assert!(normalize(&n).is_err());
        assert!(matches!(background_correct(&n, 0.0), Err(CorrelationError::RhoOutOfRange(_))));
        assert!(matches!(background_correct(&n, 1.2), Err(CorrelationError::RhoOutOfRange(_))));
        let c = background_correct(&n, 1.0).unwrap();
        assert_eq!(c.values(), n.values());
        assert_eq!(c.counts(), n.counts());
        assert_eq!(c.stage(), Stage::BackgroundCorrected);
    }

    #[test]
    fn correction_fixed_point() {
        let h = CorrelationHistogram::from_parts(
            vec![-0.1, 0.0, 0.1],
            vec![10, 10, 10],
            vec![1.0, 0.2, 1.0],
            Stage::Normalized,
            HistogramMeta { n1: 1.0, n2: 1.0, duration: 1.0, bin_width: 0.1, rho: None, scale: 0.1 },
        )
        .unwrap();
        let c = background_correct(&h, 0.6).unwrap();
        assert!((c.values()[0] - 1.0).abs() < 1e-15);
        assert!((c.values()[1] - (0.2 - 0.64) / 0.36).abs() < 1e-15);
        assert_eq!(c.meta().rho, Some(0.6));
    }

    #[test]
    fn snr_mapping() {
        assert!((snr_to_rho(6.0).unwrap() - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(snr_to_rho(1.0).unwrap(), 0.5);
        assert_eq!(snr_to_rho(f64::INFINITY).unwrap(), 1.0);
        assert!(snr_to_rho(0.0).is_err());
    }
}
