use photonstat::emitter::derive_coefficients;
use photonstat::io::save_histogram;
use photonstat::sim::simulate_plan;
use serde_json::json;

use crate::cli::SimulateArgs;
use crate::config;
use crate::correlate::correlate_streams;
use crate::error::{Failure, Result};
use crate::files::{save_stream, write_json};
use crate::fit::{check_converged, g2_report, print_summary};
use crate::manifest::Outcome;

pub fn run(args: &SimulateArgs) -> Result<Outcome> {
    let (cfg, base) = config::load(&args.config)?;
    let pipeline =
        cfg.resolve(&base).map_err(|f| Failure::new(f.kind, format!("{}: {}", args.config.display(), f.message)))?;
    let plan = &pipeline.plan;
    let out = &pipeline.outputs;
    for (_, path) in out.all() {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        }
    }

    let (a, b) = simulate_plan(plan).map_err(|e| Failure::config(e.to_string()))?;
    save_stream(&out.channel_a, &a)?;
    save_stream(&out.channel_b, &b)?;
    println!("channel A: {} events -> {}", a.len(), out.channel_a.display());
    println!("channel B: {} events -> {}", b.len(), out.channel_b.display());
    let mut outputs = vec![out.channel_a.clone(), out.channel_b.clone()];

    if let Some((corr, rho)) = pipeline.correlation {
        let h = correlate_streams(&a, &b, &corr, rho)?;
        if let Some(path) = &out.histogram {
            save_histogram(path, &h).map_err(|e| Failure::io(path, e))?;
            outputs.push(path.clone());
        }
        if let Some(fit) = pipeline.fit {
            let input = out.histogram.clone().unwrap_or_default();
            let report = g2_report(&h, &input, fit.drf_width, fit.lifetime)?;
            if let Some(path) = &out.report {
                write_json(path, &report)?;
                outputs.push(path.clone());
            }
            print_summary(&report);
            check_converged(&report)?;
        }
    }

    let coefficients = derive_coefficients(&plan.rates).ok();
    Ok(Outcome {
        inputs: vec![args.config.clone()],
        outputs,
        seed: Some(plan.seed),
        parameters: Some(json!({
            "rates": plan.rates,
            "coefficients": coefficients,
            "detector": plan.detector,
            "duration_s": plan.duration,
            "correlation": pipeline.correlation.map(|(c, rho)| json!({ "config": c, "rho": rho })),
        })),
        manifest: Some(out.manifest.clone()),
    })
}
