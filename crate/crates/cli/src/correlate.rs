use photonstat::correlator::{
    background_correct, cross_correlate, normalize, snr_to_rho, CorrelationConfig, CorrelationError,
    CorrelationHistogram,
};
use photonstat::io::save_histogram;
use photonstat::sim::TimestampStream;

use crate::cli::CorrelateArgs;
use crate::error::{Failure, Result};
use crate::files::load_stream;
use crate::manifest::Outcome;

fn correlation_failure(e: CorrelationError) -> Failure {
    match e {
        CorrelationError::InvalidConfig(_) | CorrelationError::RhoOutOfRange(_) | CorrelationError::InvalidSnr(_) => {
            Failure::config(e.to_string())
        }
        _ => Failure::data(e.to_string()),
    }
}

/// Correlates, normalizes and optionally background-corrects; prints the
/// N1, N2, T summary and returns the final histogram.
pub fn correlate_streams(
    a: &TimestampStream,
    b: &TimestampStream,
    cfg: &CorrelationConfig,
    rho: Option<f64>,
) -> Result<CorrelationHistogram> {
    let raw = cross_correlate(a, b, cfg).map_err(correlation_failure)?;
    let norm = normalize(&raw).map_err(correlation_failure)?;
    let m = norm.meta();
    println!("N1 = {:.6e} counts/s ({} events)", m.n1, a.len());
    println!("N2 = {:.6e} counts/s ({} events)", m.n2, b.len());
    println!("T  = {} s", m.duration);
    let pairs: u64 = raw.counts().iter().sum();
    println!("bins = {} x {} ns, pairs in window = {pairs}", raw.len(), m.bin_width);
    let n = norm.len() as f64;
    let mean = norm.values().iter().sum::<f64>() / n;
    let sigma = (pairs as f64).sqrt() * m.scale / n;
    println!("mean normalized g2 = {mean:.5} ± {sigma:.5}");
    match rho {
        None => Ok(norm),
        Some(rho) => {
            println!("background corrected with rho = {rho:.6}");
            background_correct(&norm, rho).map_err(correlation_failure)
        }
    }
}

pub fn rho_from(rho: Option<f64>, snr: Option<f64>) -> Result<Option<f64>> {
    match (rho, snr) {
        (Some(r), _) if !(r > 0.0 && r <= 1.0) => Err(correlation_failure(CorrelationError::RhoOutOfRange(r))),
        (Some(r), _) => Ok(Some(r)),
        (None, Some(s)) => snr_to_rho(s).map(Some).map_err(correlation_failure),
        (None, None) => Ok(None),
    }
}

pub fn run(args: &CorrelateArgs) -> Result<Outcome> {
    let cfg = CorrelationConfig::new(args.bin_width, args.tau_max).map_err(correlation_failure)?;
    let rho = rho_from(args.rho, args.snr)?;
    let a = load_stream(&args.a)?;
    let b = load_stream(&args.b)?;
    let h = correlate_streams(&a, &b, &cfg, rho)?;
    save_histogram(&args.out, &h).map_err(|e| Failure::io(&args.out, e))?;
    Ok(Outcome {
        inputs: vec![args.a.clone(), args.b.clone()],
        outputs: vec![args.out.clone()],
        manifest: args.manifest.clone(),
        ..Outcome::default()
    })
}
