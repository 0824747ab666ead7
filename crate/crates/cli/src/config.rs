//! Pipeline config for `simulate`.
//!
//! Rates are in 1/ns, times in ns, durations in s, background in counts/s.
//! Output paths are relative to the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use photonstat::correlator::{snr_to_rho, CorrelationConfig};
use photonstat::emitter::{
    mean_count_rate, rates_from_coefficients, DetectionChain, G2Coefficients, TransitionRates, REFERENCE_DRF_WIDTH_NS,
};
use photonstat::sim::{DetectorConfig, SimulationPlan, StreamError};
use serde::{Deserialize, Serialize};

use crate::error::{Failure, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub emitter: EmitterSection,
    pub detector: DetectorSection,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_g2: Option<G2FitSection>,
    pub outputs: Outputs,
}

/// Either explicit rates, or g² coefficients plus the pump rate r12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<TransitionRates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<G2Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub eta: f64,
    /// Combined two-detector jitter, ns.
    #[serde(default)]
    pub jitter_w: f64,
    /// Background per channel, counts/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_rate: Option<f64>,
    /// Alternatively, per-channel signal-to-background ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default)]
    pub dead_time_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSection {
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
}

fn default_bin_width() -> f64 {
    CorrelationConfig::default().bin_width
}
fn default_tau_max() -> f64 {
    CorrelationConfig::default().tau_max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2FitSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drf_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub channel_a: PathBuf,
    pub channel_b: PathBuf,
    pub manifest: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// Everything `simulate` needs, validated and with paths resolved.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub plan: SimulationPlan,
    pub correlation: Option<(CorrelationConfig, Option<f64>)>,
    pub fit: Option<G2Fit>,
    pub outputs: ResolvedOutputs,
}

#[derive(Debug, Clone, Copy)]
pub struct G2Fit {
    pub drf_width: f64,
    pub lifetime: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ResolvedOutputs {
    pub channel_a: PathBuf,
    pub channel_b: PathBuf,
    pub manifest: PathBuf,
    pub histogram: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

fn field(name: &str, message: impl std::fmt::Display) -> Failure {
    Failure::config(format!("field `{name}`: {message}"))
}

fn stream_field(section: &str, e: StreamError) -> Failure {
    match e {
        StreamError::InvalidParameter { name, value, reason } => {
            field(&format!("{section}.{name}"), format!("{value} {reason}"))
        }
        other => field(section, other),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field(name, format!("{v} must be > 0")))
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig =
            serde_path_to_error::deserialize(de).map_err(|e| field(&e.path().to_string(), e.inner()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn rates(&self) -> Result<TransitionRates> {
        match (&self.emitter.rates, &self.emitter.coefficients, self.emitter.pump_rate) {
            (Some(r), None, None) => Ok(*r),
            (None, Some(c), Some(r12)) => {
                rates_from_coefficients(c, positive("emitter.pump_rate", r12)?).map_err(|e| field("emitter", e))
            }
            (None, Some(_), None) => Err(field("emitter.pump_rate", "required together with `coefficients`")),
            _ => Err(field("emitter", "give either `rates`, or `coefficients` with `pump_rate`")),
        }
    }

    /// Validates all sections and resolves output paths against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Pipeline> {
        let rates = self.rates()?;
        let d = &self.detector;
        let signal = 0.5 * mean_count_rate(&rates, &DetectionChain { eta: d.eta });
        let background = match (d.background_rate, d.snr) {
            (Some(_), Some(_)) => return Err(field("detector", "give at most one of `background_rate` and `snr`")),
            (Some(b), None) => b,
            (None, Some(snr)) => signal / positive("detector.snr", snr)?,
            (None, None) => 0.0,
        };
        let detector = DetectorConfig::new(d.eta, d.jitter_w, background, d.dead_time_ns)
            .map_err(|e| stream_field("detector", e))?;
        let plan =
            SimulationPlan { rates, detector, duration: positive("duration_s", self.duration_s)?, seed: self.seed };

        let correlation = match &self.correlation {
            None => None,
            Some(c) => {
                let cfg = CorrelationConfig::new(c.bin_width, c.tau_max).map_err(|e| field("correlation", e))?;
                let rho = match (c.rho, c.snr) {
                    (Some(_), Some(_)) => return Err(field("correlation", "give at most one of `rho` and `snr`")),
                    (Some(rho), None) if rho > 0.0 && rho <= 1.0 => Some(rho),
                    (Some(rho), None) => return Err(field("correlation.rho", format!("{rho} must be in (0, 1]"))),
                    (None, Some(snr)) => Some(snr_to_rho(snr).map_err(|e| field("correlation.snr", e))?),
                    (None, None) => None,
                };
                Some((cfg, rho))
            }
        };

        let fit = match &self.fit_g2 {
            None => None,
            Some(f) => {
                let drf_width =
                    f.drf_width.unwrap_or(if d.jitter_w > 0.0 { d.jitter_w } else { REFERENCE_DRF_WIDTH_NS });
                if !(drf_width >= 0.0 && drf_width.is_finite()) {
                    return Err(field("fit_g2.drf_width", format!("{drf_width} must be >= 0")));
                }
                let lifetime = match (f.power, f.psat) {
                    (Some(p), Some(s)) => Some((positive("fit_g2.power", p)?, positive("fit_g2.psat", s)?)),
                    (None, None) => None,
                    _ => return Err(field("fit_g2", "`power` and `psat` go together")),
                };
                if self.correlation.is_none() {
                    return Err(field("fit_g2", "needs a `correlation` section"));
                }
                Some(G2Fit { drf_width, lifetime })
            }
        };

        let o = &self.outputs;
        if o.histogram.is_some() && self.correlation.is_none() {
            return Err(field("outputs.histogram", "needs a `correlation` section"));
        }
        if o.report.is_some() && self.fit_g2.is_none() {
            return Err(field("outputs.report", "needs a `fit_g2` section"));
        }
        let outputs = ResolvedOutputs {
            channel_a: base.join(&o.channel_a),
            channel_b: base.join(&o.channel_b),
            manifest: base.join(&o.manifest),
            histogram: o.histogram.as_ref().map(|p| base.join(p)),
            report: o.report.as_ref().map(|p| base.join(p)),
        };
        outputs.check_distinct()?;
        Ok(Pipeline { plan, correlation, fit, outputs })
    }
}

impl ResolvedOutputs {
    pub fn all(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> =
            vec![("channel_a", &self.channel_a), ("channel_b", &self.channel_b), ("manifest", &self.manifest)];
        v.extend(self.histogram.as_deref().map(|p| ("histogram", p)));
        v.extend(self.report.as_deref().map(|p| ("report", p)));
        v
    }

    fn check_distinct(&self) -> Result<()> {
        let all = self.all();
        for (i, (name_i, p)) in all.iter().enumerate() {
            let pi = crate::manifest::relative_to(p, Path::new("/")).map_err(|e| Failure::io(p, e))?;
            for (name_j, q) in &all[..i] {
                let qj = crate::manifest::relative_to(q, Path::new("/")).map_err(|e| Failure::io(q, e))?;
                if pi == qj {
                    return Err(field(&format!("outputs.{name_i}"), format!("same path as `outputs.{name_j}`")));
                }
            }
        }
        Ok(())
    }
}

/// Reads a config; returns it with the directory its paths are relative to.
pub fn load(path: &Path) -> Result<(PipelineConfig, PathBuf)> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let cfg = PipelineConfig::from_json(&text)
        .map_err(|f| Failure::new(f.kind, format!("{}: {}", path.display(), f.message)))?;
    Ok((cfg, crate::manifest::manifest_dir(path)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Kind;

    const BASE: &str = r#"{
  "schema_version": 1,
  "emitter": { "coefficients": { "tau1": 0.83, "tau2": 42.2, "a": 0.16 }, "pump_rate": 0.3 },
  "detector": { "eta": 0.5, "jitter_w": 0.354, "snr": 6.0 },
  "duration_s": 0.01,
  "seed": 7,
  "correlation": { "bin_width": 0.1, "tau_max": 100.0, "snr": 6.0 },
  "fit_g2": { "power": 0.39, "psat": 1.17 },
  "outputs": { "channel_a": "a.pstm", "channel_b": "b.pstm", "manifest": "m.json", "histogram": "h.csv", "report": "r.json" }
}"#;

    fn with(find: &str, replace: &str) -> String {
        assert!(BASE.contains(find), "{find}");
        BASE.replace(find, replace)
    }

    fn error_of(text: &str) -> Failure {
        PipelineConfig::from_json(text).and_then(|c| c.resolve(Path::new("/tmp/x"))).unwrap_err()
    }

    #[test]
    fn reference_config_resolves() {
        let p = PipelineConfig::from_json(BASE).unwrap().resolve(Path::new("/tmp/x")).unwrap();
        let signal = 0.5 * mean_count_rate(&p.plan.rates, &DetectionChain { eta: 0.5 });
        assert!((p.plan.detector.background_rate - signal / 6.0).abs() < 1e-9 * signal);
        assert_eq!(p.correlation.unwrap().1, Some(6.0 / 7.0));
        let fit = p.fit.unwrap();
        assert_eq!(fit.drf_width, 0.354);
        assert_eq!(fit.lifetime, Some((0.39, 1.17)));
        assert_eq!(p.outputs.histogram.unwrap(), PathBuf::from("/tmp/x/h.csv"));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let cases = [
            (with(r#""eta": 0.5"#, r#""eta": 1.5"#), "detector.eta"),
            (with(r#""eta": 0.5"#, r#""eta": "high""#), "detector.eta"),
            (with(r#""tau2": 42.2"#, r#""tau2": 0.1"#), "emitter.coefficients"),
            (with(r#""seed": 7"#, r#""seed": 7, "sed": 1"#), "sed"),
            (with(r#""duration_s": 0.01"#, r#""duration_s": 0"#), "duration_s"),
            (with(r#""h.csv""#, r#""a.pstm""#), "outputs.histogram"),
            (with(r#""pump_rate": 0.3"#, r#""pump_rate": 5.0"#), "emitter"),
            (with(r#""schema_version": 1"#, r#""schema_version": 2"#), "schema_version"),
            (with(r#""tau_max": 100.0, "snr": 6.0"#, r#""tau_max": 100.0, "snr": 6.0, "rho": 0.5"#), "correlation"),
        ];
        for (text, name) in cases {
            let e = error_of(&text);
            assert_eq!(e.kind, Kind::Config);
            assert!(e.message.contains(name), "{name}: {}", e.message);
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let e = error_of(&with(r#""seed": 7,"#, r#""seed": 7,,"#));
        assert!(e.message.contains("line 6"), "{}", e.message);
    }

    #[test]
    fn explicit_rates_and_no_background() {
        let text = with(
            r#""coefficients": { "tau1": 0.83, "tau2": 42.2, "a": 0.16 }, "pump_rate": 0.3"#,
            r#""rates": { "r12": 0.0, "r21": 1.2, "r23": 0.01, "r31": 0.02 }"#,
        )
        .replace(r#", "snr": 6.0 },"#, " },");
        let p = PipelineConfig::from_json(&text).unwrap().resolve(Path::new(".")).unwrap();
        assert_eq!(p.plan.rates.r12(), 0.0);
        assert_eq!(p.plan.detector.background_rate, 0.0);
    }
}
