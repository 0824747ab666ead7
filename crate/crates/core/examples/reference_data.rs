//! Writes the synthetic reference spectrum and series used by the CLI tests.
//!
//! Usage: `cargo run -p photonstat --example reference_data -- <out-dir>`

use std::path::PathBuf;

use photonstat::emitter::{PolarizationModel, SaturationModel};
use photonstat::io::{save_series, save_spectrum};
use photonstat::selftest::{reference_spectrum_peaks, reference_wavelengths, REFERENCE_SPECTRUM_BASELINE};
use photonstat::sim::{generate_polarization_series, generate_saturation_series, generate_spectrum, SeriesNoise};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;

    let spectrum =
        generate_spectrum(&reference_spectrum_peaks(), REFERENCE_SPECTRUM_BASELINE, &reference_wavelengths(), 0.02, 8)?;
    save_spectrum(&dir.join("reference_spectrum.csv"), &spectrum)?;

    let saturation = SaturationModel::new(77.8e3, 1.17)?;
    let powers: Vec<f64> = (1..=40).map(|i| 0.125 * i as f64).collect();
    let points = generate_saturation_series(&saturation, &powers, SeriesNoise::Relative { fraction: 0.02 }, 6)?;
    save_series(
        &dir.join("reference_saturation.csv"),
        &points,
        &[("kind", "saturation".into()), ("x_unit", "mW".into()), ("y_unit", "counts/s".into())],
    )?;

    let polarization = PolarizationModel::new(33e3, 7e3, 30.0)?;
    let angles: Vec<f64> = (0..36).map(|k| 5.0 * k as f64).collect();
    let points = generate_polarization_series(&polarization, &angles, SeriesNoise::Shot { integration_s: 1.0 }, 7)?;
    save_series(
        &dir.join("reference_polarization.csv"),
        &points,
        &[("kind", "polarization".into()), ("x_unit", "deg".into()), ("y_unit", "counts/s".into())],
    )?;
    Ok(())
}
