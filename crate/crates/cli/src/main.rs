use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use specfield::priors::DiffBackend;
use specfield_cli::commands::{self, FitMode, Overrides};
use specfield_cli::{thread_cap, CliResult, RunManifest};

#[derive(Parser)]
#[command(name = "specfield", version, about = "Spectral density inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Perfect,
    Marginal,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Fd,
    Fourier,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a field, masked noisy data and the true spectrum.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Derive field, noise and mask seeds from this base value.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// MAP estimate of the spectrum with Laplace uncertainties.
    Fit {
        bundle: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        /// Take hyper-parameters and solver settings from this config instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        dense_cap: Option<usize>,
        #[arg(long)]
        probes: Option<usize>,
    },
    /// Wiener reconstruction of the bundle data at a fitted spectrum.
    Reconstruct {
        bundle: PathBuf,
        fit: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dense_cap: Option<usize>,
        #[arg(long)]
        probes: Option<usize>,
    },
    /// CSV of a cell field at a fixed index of one axis.
    Slice {
        field: PathBuf,
        #[arg(long)]
        axis: usize,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV of a mode file with harmonic coordinates.
    SpectrumDump {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: String, out: Option<PathBuf>) -> CliResult<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report(m: &RunManifest) {
    if let Some(c) = &m.convergence {
        log::info!("{}: {c}", m.command);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = thread_cap(std::env::var("SPECFIELD_THREADS").ok().as_deref())?;
    specfield::set_parallelism(threads);
    match cli.command {
        Command::Synth {
            config,
            out,
            seed_override,
        } => report(&commands::synth(&config, &out, seed_override)?),
        Command::Fit {
            bundle,
            mode,
            out,
            config,
            backend,
            dense_cap,
            probes,
        } => {
            let mode = match mode {
                ModeArg::Perfect => FitMode::Perfect,
                ModeArg::Marginal => FitMode::Marginal,
            };
            let overrides = Overrides {
                backend: backend.map(|b| match b {
                    BackendArg::Fd => DiffBackend::FiniteDifference,
                    BackendArg::Fourier => DiffBackend::Fourier,
                }),
                dense_cap,
                probes,
            };
            report(&commands::fit(&bundle, mode, &out, config.as_deref(), &overrides)?);
        }
        Command::Reconstruct {
            bundle,
            fit,
            out,
            dense_cap,
            probes,
        } => {
            let overrides = Overrides {
                backend: None,
                dense_cap,
                probes,
            };
            report(&commands::reconstruct(&bundle, &fit, &out, &overrides)?);
        }
        Command::Slice {
            field,
            axis,
            index,
            out,
        } => emit(commands::slice_file(&field, axis, index)?, out)?,
        Command::SpectrumDump { file, out } => emit(commands::spectrum_dump(&file)?, out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
