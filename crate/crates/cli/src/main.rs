use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ilac_cli::config::{ExperimentConfig, ExperimentKind};
use ilac_cli::{run_experiment, RunError, EXIT_VERIFICATION_FAILED};

/// Spectral statistics of disordered lattice Hamiltonian pairs H± = Δ ± V:
/// density of states, correlation measure, interband absorption curves,
/// band-rectangle geometry and tail exponent fits.
#[derive(Parser)]
#[command(name = "ilac-lab", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for the disorder realizations.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; never changes any output byte.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for data files and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Density of states of H+ and H-, merged over realizations.
    Dos,
    /// Interband absorption curve (distribution of λ⁺ + λ⁻).
    Ilac,
    /// Correlation measure on the plane, one atom per eigenvalue pair.
    Rho,
    /// Good-corner classification, strip covers and corner bound tables.
    Corners,
    /// Tail profiles and exponent fits near band edges.
    Tails,
    /// Edge-window inequality tables at the spectral extremes.
    Verify21,
    /// Two-band tail report with corner certificates.
    Verify31,
    /// Covariance trace identities on the finite torus.
    Covariance,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Dos => ExperimentKind::Dos,
            Command::Ilac => ExperimentKind::Ilac,
            Command::Rho => ExperimentKind::Rho,
            Command::Corners => ExperimentKind::Corners,
            Command::Tails => ExperimentKind::Tails,
            Command::Verify21 => ExperimentKind::Verify21,
            Command::Verify31 => ExperimentKind::Verify31,
            Command::Covariance => ExperimentKind::Covariance,
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let kind = cli.command.kind();
    if let Some(file_kind) = config.kind {
        if file_kind != kind {
            return Err(RunError::Config(format!(
                "config file is for kind '{file_kind}' but the subcommand is '{kind}'"
            )));
        }
    }
    config.kind = Some(kind);
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = Some(workers);
    }
    if let Some(out) = &cli.out {
        config.out_dir = Some(out.clone());
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run_experiment(&config) {
        Ok(manifest) => {
            let out_dir = config
                .out_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| ".".into());
            println!(
                "{}: wrote {} data file(s) to {} in {} ms",
                manifest.kind,
                manifest.outputs.len(),
                out_dir,
                manifest.timing_ms
            );
            for output in &manifest.outputs {
                println!("  {}  {}", &output.sha256[..16], output.path);
            }
            if manifest.leakage.excluded_realizations > 0 {
                println!(
                    "  excluded {} of {} realizations (out-of-band eigenvalues)",
                    manifest.leakage.excluded_realizations, manifest.leakage.realizations
                );
            }
            if manifest.verification_failed {
                eprintln!("verification failed: an expected inequality did not hold");
                ExitCode::from(EXIT_VERIFICATION_FAILED as u8)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
