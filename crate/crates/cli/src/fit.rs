use std::path::Path;

use photonstat::correlator::{normalize, CorrelationHistogram, Stage};
use photonstat::emitter::{corrected_lifetime, saturation_intensity, REFERENCE_DRF_WIDTH_NS};
use photonstat::fit::spectrum::peaks;
use photonstat::fit::{
    fit_g2, fit_polarization, fit_saturation, fit_spectrum, Derived, FitError, FitResult, LorentzianPeak,
};
use photonstat::io::{load_histogram, load_series, load_spectrum, FormatError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::{FitArgs, FitKind};
use crate::error::{Failure, Kind, Result};
use crate::files::write_json;
use crate::manifest::Outcome;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: FitKind,
    /// File name of the fitted data.
    pub input: String,
    pub options: serde_json::Value,
    pub converged: bool,
    pub iterations: usize,
    pub points: usize,
    pub dof: i64,
    pub residual_norm: f64,
    pub parameters: Vec<Parameter>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub derived: Vec<Derived>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peaks: Option<Vec<LorentzianPeak>>,
}

fn fit_failure(e: FitError) -> Failure {
    let kind = match e {
        FitError::SingularJacobian => Kind::NoConvergence,
        _ => Kind::Data,
    };
    Failure::new(kind, format!("fit failed: {e}"))
}

fn read_failure(path: &Path, kind: FitKind, e: FormatError) -> Failure {
    let expected = match kind {
        FitKind::G2 => "histogram",
        FitKind::Saturation | FitKind::Polarization => "series",
        FitKind::Spectrum => "spectrum",
    };
    let f = Failure::format(path, e);
    Failure::new(f.kind, format!("{} (`fit {}` expects a {expected} file)", f.message, kind.name()))
}

fn build(kind: FitKind, input: &Path, options: serde_json::Value, points: usize, fit: FitResult) -> Report {
    let parameters = fit
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| Parameter {
            name: name.clone(),
            value: fit.params[i],
            stderr: fit.stderr.as_ref().map(|s| s[i]),
        })
        .collect();
    Report {
        schema_version: SCHEMA_VERSION,
        kind,
        input: input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        options,
        converged: fit.converged,
        iterations: fit.iterations,
        points,
        dof: points as i64 - fit.params.len() as i64,
        residual_norm: fit.residual_norm,
        parameters,
        covariance: fit.covariance,
        derived: fit.derived,
        peaks: None,
    }
}

/// Fits a g² histogram; raw histograms are normalized first. `lifetime`
/// holds `(power, p_sat)` in mW for the corrected lifetime.
pub fn g2_report(
    h: &CorrelationHistogram,
    input: &Path,
    drf_width: f64,
    lifetime: Option<(f64, f64)>,
) -> Result<Report> {
    let normalized;
    let h = if h.stage() == Stage::Raw {
        normalized = normalize(h).map_err(|e| Failure::data(e.to_string()))?;
        &normalized
    } else {
        h
    };
    let mut fit = fit_g2(h, drf_width, None).map_err(fit_failure)?;
    if let Some((power, psat)) = lifetime {
        let tau1 = fit.param("tau1").expect("g2 fit has tau1");
        let stderr = fit.param_stderr("tau1").map(|s| corrected_lifetime(s, power, psat));
        fit.derived.push(Derived {
            name: "corrected_lifetime".into(),
            value: corrected_lifetime(tau1, power, psat),
            stderr,
        });
    }
    let mut options = json!({ "drf_width": drf_width });
    if let Some((power, psat)) = lifetime {
        options["power"] = json!(power);
        options["psat"] = json!(psat);
    }
    Ok(build(FitKind::G2, input, options, h.len(), fit))
}

fn reject_options(args: &FitArgs) -> Result<()> {
    let given = [
        ("--drf-width", args.drf_width.is_some(), FitKind::G2),
        ("--power", args.power.is_some(), FitKind::G2),
        ("--psat", args.psat.is_some(), FitKind::G2),
        ("--focus-width", args.focus_width.is_some(), FitKind::Saturation),
        ("--npeaks", args.npeaks.is_some(), FitKind::Spectrum),
    ];
    for (flag, present, kind) in given {
        if present && kind != args.kind {
            return Err(Failure::config(format!("{flag} does not apply to `fit {}`", args.kind.name())));
        }
    }
    let positive = [("--power", args.power), ("--psat", args.psat), ("--focus-width", args.focus_width)];
    for (flag, v) in positive {
        if let Some(v) = v.filter(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Failure::config(format!("{flag} must be > 0, got {v}")));
        }
    }
    if let Some(w) = args.drf_width.filter(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Failure::config(format!("--drf-width must be >= 0, got {w}")));
    }
    if args.npeaks == Some(0) {
        return Err(Failure::config("--npeaks must be at least 1"));
    }
    Ok(())
}

pub fn report_for(args: &FitArgs) -> Result<Report> {
    reject_options(args)?;
    let path = args.data.as_path();
    match args.kind {
        FitKind::G2 => {
            let h = load_histogram(path).map_err(|e| read_failure(path, args.kind, e))?;
            let lifetime = args.power.zip(args.psat);
            g2_report(&h, path, args.drf_width.unwrap_or(REFERENCE_DRF_WIDTH_NS), lifetime)
        }
        FitKind::Saturation => {
            let (series, _) = load_series(path).map_err(|e| read_failure(path, args.kind, e))?;
            let mut fit = fit_saturation(&series).map_err(fit_failure)?;
            let mut options = json!({});
            if let Some(w) = args.focus_width {
                let p_sat = fit.param("p_sat").expect("saturation fit has p_sat");
                let stderr = fit.param_stderr("p_sat").map(|s| saturation_intensity(s, w));
                fit.derived.push(Derived {
                    name: "saturation_intensity".into(),
                    value: saturation_intensity(p_sat, w),
                    stderr,
                });
                options["focus_width"] = json!(w);
            }
            Ok(build(args.kind, path, options, series.len(), fit))
        }
        FitKind::Polarization => {
            let (series, _) = load_series(path).map_err(|e| read_failure(path, args.kind, e))?;
            let fit = fit_polarization(&series).map_err(fit_failure)?;
            Ok(build(args.kind, path, json!({}), series.len(), fit))
        }
        FitKind::Spectrum => {
            let s = load_spectrum(path).map_err(|e| read_failure(path, args.kind, e))?;
            let n = args.npeaks.unwrap_or(1);
            let fit = fit_spectrum(&s, n, None).map_err(fit_failure)?;
            let lines = peaks(&fit);
            let mut report = build(args.kind, path, json!({ "npeaks": n }), s.len(), fit);
            report.peaks = Some(lines);
            Ok(report)
        }
    }
}

/// Six significant digits, switching to exponent form for extreme magnitudes.
fn sig(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        format!("{v:.5}")
    } else if (1e-3..1e7).contains(&a) {
        let decimals = (5 - a.log10().floor() as i32).clamp(0, 8) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

pub fn print_summary(report: &Report) {
    let chi2 = if report.dof > 0 { report.residual_norm / report.dof as f64 } else { f64::NAN };
    println!(
        "{} fit: {} after {} iterations, chi2/dof = {:.4} ({} dof)",
        report.kind.name(),
        if report.converged { "converged" } else { "NOT converged" },
        report.iterations,
        chi2,
        report.dof
    );
    let line = |name: &str, value: f64, stderr: Option<f64>| match stderr {
        Some(s) => println!("  {name:<22} = {} ± {}", sig(value), sig(s)),
        None => println!("  {name:<22} = {}", sig(value)),
    };
    for p in &report.parameters {
        line(&p.name, p.value, p.stderr);
    }
    for d in &report.derived {
        line(&d.name, d.value, d.stderr);
    }
}

pub fn check_converged(report: &Report) -> Result<()> {
    if report.converged {
        return Ok(());
    }
    Err(Failure::new(
        Kind::NoConvergence,
        format!(
            "{} fit did not converge after {} iterations (residual norm {})",
            report.kind.name(),
            report.iterations,
            report.residual_norm
        ),
    ))
}

pub fn run(args: &FitArgs) -> Result<Outcome> {
    let report = report_for(args)?;
    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            print_summary(&report);
        }
        None => println!("{}", serde_json::to_string_pretty(&report).expect("serializable")),
    }
    check_converged(&report)?;
    Ok(Outcome {
        inputs: vec![args.data.clone()],
        outputs: args.out.iter().cloned().collect(),
        manifest: args.manifest.clone(),
        ..Outcome::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(0.815793), "0.815793");
        assert_eq!(sig(78030.21345), "78030.2");
        assert_eq!(sig(1.10666667), "1.10667");
        assert_eq!(sig(0.0), "0.00000");
        assert_eq!(sig(2.5e-7), "2.50000e-7");
    }

    #[test]
    fn options_must_match_kind() {
        let args = FitArgs {
            kind: FitKind::Spectrum,
            data: "x.csv".into(),
            drf_width: None,
            power: Some(0.39),
            psat: Some(1.17),
            focus_width: None,
            npeaks: None,
            out: None,
            manifest: None,
        };
        let e = report_for(&args).unwrap_err();
        assert_eq!(e.kind, Kind::Config);
        assert!(e.message.contains("--power"), "{}", e.message);
    }
}
