mod cli;
mod config;
mod correlate;
mod error;
mod files;
mod fit;
mod manifest;
mod simulate;

use std::process::ExitCode;

use clap::Parser;
use photonstat::selftest;
use photonstat::sim::simulate_poisson_stream;

use cli::{Cli, Command, ConvertArgs, PoissonArgs, Recorded, ReplayArgs, SelftestArgs};
use error::{Failure, Kind, Result};
use files::{load_stream, save_stream};
use manifest::Outcome;

fn poisson(args: &PoissonArgs) -> Result<Outcome> {
    let mut stream =
        simulate_poisson_stream(args.rate, args.duration, args.seed).map_err(|e| Failure::config(e.to_string()))?;
    if let Some(stem) = args.out.file_stem() {
        stream.set_channel(stem.to_string_lossy());
    }
    save_stream(&args.out, &stream)?;
    println!("{} events over {} s -> {}", stream.len(), args.duration, args.out.display());
    Ok(Outcome {
        outputs: vec![args.out.clone()],
        seed: Some(args.seed),
        manifest: args.manifest.clone(),
        ..Outcome::default()
    })
}

fn convert(args: &ConvertArgs) -> Result<Outcome> {
    let stream = load_stream(&args.input)?;
    save_stream(&args.output, &stream)?;
    println!("{} events -> {}", stream.len(), args.output.display());
    Ok(Outcome {
        inputs: vec![args.input.clone()],
        outputs: vec![args.output.clone()],
        manifest: args.manifest.clone(),
        ..Outcome::default()
    })
}

fn execute(command: &Recorded) -> Result<Outcome> {
    match command {
        Recorded::Simulate(a) => simulate::run(a),
        Recorded::Correlate(a) => correlate::run(a),
        Recorded::Fit(a) => fit::run(a),
        Recorded::Poisson(a) => poisson(a),
        Recorded::Convert(a) => convert(a),
    }
}

fn execute_and_record(command: Recorded) -> Result<()> {
    let outcome = execute(&command)?;
    if let Some(path) = &outcome.manifest {
        manifest::write(path, &command, &outcome)?;
        println!("manifest -> {}", path.display());
    }
    Ok(())
}

fn selftest(args: &SelftestArgs) -> Result<()> {
    let reports = match args.criterion {
        Some(id) => selftest::run_criterion(id).into_iter().collect(),
        None => selftest::run_all(),
    };
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::new(Kind::CheckFailed, format!("{failed} of {} checks failed", reports.len())));
    }
    Ok(())
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let recorded = manifest::read(&args.manifest)?;
    let base = manifest::manifest_dir(&args.manifest);
    let changed = manifest::verify(&recorded.inputs, &base);
    if !changed.is_empty() {
        return Err(manifest::mismatch("inputs", changed));
    }
    execute(&manifest::resolved_command(&recorded, &args.manifest))?;
    let differing = manifest::verify(&recorded.outputs, &base);
    if !differing.is_empty() {
        return Err(manifest::mismatch("outputs", differing));
    }
    println!("replay reproduced {} output file(s) with identical checksums", recorded.outputs.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => execute_and_record(Recorded::Simulate(a)),
        Command::Correlate(a) => execute_and_record(Recorded::Correlate(a)),
        Command::Fit(a) => execute_and_record(Recorded::Fit(a)),
        Command::Poisson(a) => execute_and_record(Recorded::Poisson(a)),
        Command::Convert(a) => execute_and_record(Recorded::Convert(a)),
        Command::Selftest(a) => selftest(&a),
        Command::Replay(a) => replay(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
