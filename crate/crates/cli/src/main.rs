//! `speclab`: command-line front end of the spectral laboratory.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "speclab", version, about = "Laplacian-Dirichlet spectral laboratory")]
struct Cli {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPECLAB_THREADS")]
    threads: Option<usize>,

    /// Leave the wall-clock timestamp out of output documents.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and eigenfunctions (closed form or finite elements).
    Spectrum(RunConfig),
    /// Mesh-refinement study against a closed-form reference.
    Converge(RunConfig),
    /// Deform a meshed domain by the flow of a vector field.
    Deform(RunConfig),
    /// Follow eigenvalue curves along a deformation path.
    Track(RunConfig),
    /// Check that the first n eigenvalues are simple.
    CheckSimplicity(RunConfig),
    /// Check linear independence of the squared eigenfunctions.
    CheckIndependence(RunConfig),
    /// Search integer relations among the first n eigenvalues.
    CheckResonance(RunConfig),
    /// Hadamard derivative for a moving orthotope face, optionally checked by finite differences.
    ShapeDerivative(RunConfig),
    /// Eigenvalue derivative under a potential perturbation.
    PotentialDerivative(RunConfig),
    /// Optimal relaxed damping placement.
    OptimizeDamping(RunConfig),
    /// Decay rate of the modal truncation of the damped wave equation.
    DecayRate(RunConfig),
    /// Controllability precheck for the bilinear Schrödinger equation.
    SchrodingerCheck(RunConfig),
}

impl Command {
    fn split(self) -> (&'static str, RunConfig) {
        match self {
            Command::Spectrum(c) => ("spectrum", c),
            Command::Converge(c) => ("converge", c),
            Command::Deform(c) => ("deform", c),
            Command::Track(c) => ("track", c),
            Command::CheckSimplicity(c) => ("check-simplicity", c),
            Command::CheckIndependence(c) => ("check-independence", c),
            Command::CheckResonance(c) => ("check-resonance", c),
            Command::ShapeDerivative(c) => ("shape-derivative", c),
            Command::PotentialDerivative(c) => ("potential-derivative", c),
            Command::OptimizeDamping(c) => ("optimize-damping", c),
            Command::DecayRate(c) => ("decay-rate", c),
            Command::SchrodingerCheck(c) => ("schrodinger-check", c),
        }
    }
}

fn execute(id: &str, cfg: &RunConfig) -> Result<commands::Outcome, CliError> {
    match id {
        "spectrum" => commands::spectrum(cfg),
        "converge" => commands::converge(cfg),
        "deform" => commands::deform(cfg),
        "track" => commands::track(cfg),
        "check-simplicity" => commands::check_simplicity_cmd(cfg),
        "check-independence" => commands::check_independence(cfg),
        "check-resonance" => commands::check_resonance(cfg),
        "shape-derivative" => commands::shape_derivative(cfg),
        "potential-derivative" => commands::potential_derivative_cmd(cfg),
        "optimize-damping" => commands::optimize_damping(cfg),
        "decay-rate" => commands::decay_rate(cfg),
        "schrodinger-check" => commands::schrodinger_check(cfg),
        other => unreachable!("unknown command {other}"),
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let (id, flags) = cli.command.split();
    let base = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &base.command {
        if c != id {
            return Err(CliError::Config(format!("config is for command {c:?}, not {id:?}")));
        }
    }
    let mut cfg = RunConfig::merged(base, flags)?.validate()?;
    cfg.command = Some(id.to_string());

    let outcome = execute(id, &cfg)?;
    // where the files go is not part of the experiment
    let recorded = RunConfig { out: None, csv: None, ..cfg.clone() };
    let mut doc = json!({
        "command": id,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": recorded,
        "result": outcome.result,
    });
    if !cli.no_timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc["timestamp_unix"] = json!(secs);
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Config(e.to_string()))? + "\n";

    let Some(dir) = &cfg.out else {
        print!("{text}");
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let json_path = dir.join(format!("{id}.json"));
    write_atomic(&json_path, text.as_bytes())?;
    outputs.push(json_path.display().to_string());
    if let (Some(csv), Some(true)) = (&outcome.csv, cfg.csv) {
        let csv_path = dir.join(format!("{id}.csv"));
        write_atomic(&csv_path, csv.as_bytes())?;
        outputs.push(csv_path.display().to_string());
    }
    let summary = json!({ "command": id, "status": "ok", "outputs": outputs, "summary": outcome.summary });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            println!("{}", json!({ "status": "error", "exit_code": code, "message": e.to_string() }));
            ExitCode::from(code as u8)
        }
    }
}
