mod args;
mod commands;
mod manifest;

use args::{Cli, Command};
use clap::Parser;
use freedenoise_core::{Error, Result};
use manifest::{Manifest, Run};
use serde_json::json;
use std::io::Write;
use std::process::ExitCode;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

enum Failure {
    Error(Error),
    Mismatch,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn execute(command: &Command, run: &mut Run) -> Result<()> {
    match command {
        Command::Convolve(a) => commands::convolve(a, run),
        Command::Denoise(a) => commands::denoise(a, run),
        Command::Overlap(a) => commands::overlap(a, run),
        Command::Transform(a) => commands::transform(a, run),
        Command::Simulate(a) => commands::simulate(a, run),
        Command::Replay(_) => unreachable!("replay is dispatched separately"),
    }
}

fn replay(a: &args::ReplayArgs) -> std::result::Result<(), Failure> {
    let original = manifest::load(&a.manifest)?;
    let mut command = original.command.clone();
    if matches!(command, Command::Replay(_)) {
        return Err(Error::InvalidInput("cannot replay a replay manifest".into()).into());
    }
    command.set_out(a.out.clone());
    let mut run = Run::new(&a.out, Some(original.inputs.clone()))?;
    execute(&command, &mut run)?;
    let replayed = run.finish(command)?;
    let read = |p: &std::path::Path| std::fs::read(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())));
    let same_manifest = read(&a.manifest)? == read(&a.out.join(manifest::FILE))?;
    let report = compare(&original, &replayed, same_manifest);
    // a closed pipe must not turn a verdict into a panic
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    if report["identical"] == json!(true) {
        Ok(())
    } else {
        Err(Failure::Mismatch)
    }
}

fn compare(original: &Manifest, replayed: &Manifest, same_manifest: bool) -> serde_json::Value {
    let outputs: Vec<_> = original
        .outputs
        .iter()
        .map(|o| {
            let again = replayed.outputs.iter().find(|r| r.file == o.file);
            json!({
                "file": o.file,
                "expected": o.sha256,
                "actual": again.map(|r| r.sha256.clone()),
                "identical": again.is_some_and(|r| r.sha256 == o.sha256),
            })
        })
        .collect();
    let extra: Vec<_> =
        replayed.outputs.iter().filter(|r| !original.outputs.iter().any(|o| o.file == r.file)).map(|r| &r.file).collect();
    let same_outputs = outputs.iter().all(|o| o["identical"] == json!(true)) && extra.is_empty();
    json!({
        "identical": same_outputs && same_manifest,
        "manifest_identical": same_manifest,
        "outputs": outputs,
        "unexpected_outputs": extra,
    })
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    log::info!("freedenoise {}", cli.command.name());
    if let Command::Replay(a) = &cli.command {
        return replay(a);
    }
    let mut run = Run::new(cli.command.out(), None)?;
    execute(&cli.command, &mut run)?;
    run.finish(cli.command)?;
    Ok(())
}

fn report(code: &str, message: String, exit: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": code, "message": message, "exit_code": exit }));
    ExitCode::from(exit)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help, --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("ArgumentError", e.to_string().trim_end().into(), EXIT_INPUT),
    };
    if let Ok(v) = std::env::var("FREEDENOISE_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("thread pool: {e}");
                }
            }
            _ => return report("InvalidInput", format!("FREEDENOISE_THREADS={v:?} is not a positive integer"), EXIT_INPUT),
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            let exit = if e.is_numerical() { EXIT_NUMERIC } else { EXIT_INPUT };
            report(e.code(), e.to_string(), exit)
        }
        Err(Failure::Mismatch) => report("ReplayMismatch", "replayed outputs differ from the manifest".into(), EXIT_NUMERIC),
    }
}
