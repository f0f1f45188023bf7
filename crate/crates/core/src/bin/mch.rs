use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mchamiltonian::config::{Pipeline, RunConfig};
use mchamiltonian::{pipeline, Error};

/// Monte Carlo Hamiltonian batch driver.
#[derive(Parser)]
#[command(name = "mch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Endpoint ensemble, basis, transition matrix and effective spectrum.
    Spectrum(Common),
    /// Thermodynamics over the beta grid from a spectrum file.
    Thermo {
        #[command(flatten)]
        common: Common,
        /// Spectrum file (overrides input.spectrum).
        spectrum: Option<PathBuf>,
        /// Spectrum at one extra site, for the pressure.
        #[arg(long)]
        spectrum_dv: Option<PathBuf>,
    },
    /// Lagrangian lattice thermodynamics, one simulation per beta.
    Lattice(Common),
    /// Compare two thermo tables point by point.
    Compare {
        #[command(flatten)]
        common: Common,
        table_a: Option<PathBuf>,
        table_b: Option<PathBuf>,
    },
    /// Exact grid diagonalization for one or two sites.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Extra configuration entries, e.g. `--set model.lambda=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build(common: &Common, pipeline: Pipeline) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.pipeline = pipeline;
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn config_for(cmd: &Command) -> Result<RunConfig, Error> {
    Ok(match cmd {
        Command::Spectrum(c) => build(c, Pipeline::Spectrum)?,
        Command::Lattice(c) => build(c, Pipeline::Lattice)?,
        Command::Oracle(c) => build(c, Pipeline::Oracle)?,
        Command::Thermo { common, spectrum, spectrum_dv } => {
            let mut cfg = build(common, Pipeline::Thermo)?;
            if spectrum.is_some() {
                cfg.spectrum_file = spectrum.clone();
            }
            if spectrum_dv.is_some() {
                cfg.spectrum_file_dv = spectrum_dv.clone();
            }
            cfg
        }
        Command::Compare { common, table_a, table_b } => {
            let mut cfg = build(common, Pipeline::Compare)?;
            if table_a.is_some() {
                cfg.table_a = table_a.clone();
            }
            if table_b.is_some() {
                cfg.table_b = table_b.clone();
            }
            cfg
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match config_for(&cli.command).and_then(|cfg| pipeline::run(&cfg)) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
