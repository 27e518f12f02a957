use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fock_spectra::config::parse_config;
use fock_spectra::pipeline::{render_csv, render_json, run_pipeline, write_report, Format, Stage};
use fock_spectra::Error;

#[derive(Parser)]
#[command(name = "fock-spectra", version, about = "Spectral analysis of a lattice Fock-space Hamiltonian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    /// Omit the timing block so repeated runs are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the threshold at the bottom of the essential spectrum.
    Classify,
    /// Essential spectrum bands.
    EssSpectrum,
    /// Fiber bound states along the diagonal, with the bands.
    BoundStates,
    /// Discrete eigenvalue counts N(z).
    Count {
        /// Comma-separated z values; overrides `bs.z_list`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z: Option<Vec<f64>>,
    },
    /// Compare N(z) against direct counting on the discrete Fock matrix.
    FockOracle,
    /// Efimov coefficient U(1).
    EfimovCoef,
    /// Convergence of the truncated spherical operator count to the Efimov coefficient.
    SrConvergence,
    /// Everything above.
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidModel(_) => 2,
        Error::Io(_) => 4,
        Error::Numerical { .. } | Error::PreconditionViolation(_) | Error::EllMaxTooSmall { .. } => 3,
    }
}

fn init_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("FOCK_SPECTRA_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("FOCK_SPECTRA_THREADS = {v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads()?;
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    let stage = match cli.command {
        Command::Classify => Stage::Classify,
        Command::EssSpectrum => Stage::EssSpectrum,
        Command::BoundStates => Stage::BoundStates,
        Command::Count { z } => {
            if let Some(z) = z {
                cfg.bs.z_list = z;
                cfg.validate()?;
            }
            Stage::Count
        }
        Command::FockOracle => Stage::FockOracle,
        Command::EfimovCoef => Stage::EfimovCoef,
        Command::SrConvergence => Stage::SrConvergence,
        Command::Report => Stage::Report,
    };
    let format = match cli.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
    };
    let mut report = run_pipeline(&cfg, stage)?;
    if cli.deterministic {
        report.timing = None;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match cli.out {
        Some(out) => write_report(&report, format, &out),
        None => {
            let text = match format {
                Format::Json => render_json(&report),
                Format::Csv => render_csv(&report)?,
            };
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
