use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use jacobi_det::harness::{run_experiment, write_report, ExperimentConfig, ExperimentKind, Format};

#[derive(Parser)]
#[command(name = "jacobi-det", version, about = "Determinant, scattering and transfer-matrix experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cyclic and whole-line determinant identities
    Identities(Args),
    /// Agreement of the three routes to a(z) and real-band scattering facts
    Routes(Args),
    /// Entropy of the spectral density over the band partition
    Entropy(Args),
    /// Block transfer matrix diagnostics
    Transfer(Args),
    /// Spectral density samples
    Density(Args),
}

#[derive(ValueEnum, Clone, Copy)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct Args {
    /// JSON experiment configuration; missing fields take the defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
    /// Worker threads (0 uses all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn run(kind: ExperimentKind, args: Args) -> jacobi_det::Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_for(kind),
    };
    if cfg.kind != kind {
        return Err(jacobi_det::Error::Config(format!(
            "config is for `{}`, not `{}`",
            cfg.kind.subcommand(),
            kind.subcommand()
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| jacobi_det::Error::Config(e.to_string()))?;
    let report = pool.install(|| run_experiment(&cfg))?;
    let format = match args.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
    };
    let out = cfg.output.clone().filter(|_| args.out.as_os_str() == "out").unwrap_or(args.out);
    for path in write_report(&report, &out, format)? {
        eprintln!("wrote {}", path.display());
    }
    for c in &report.checks {
        let value = c.value.map_or("-".to_string(), |v| format!("{v:.3e}"));
        eprintln!("{} {} = {} (threshold {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, value, c.threshold);
    }
    for f in &report.failures {
        eprintln!("FAIL {}: {}", f.cell, f.error);
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Identities(a) => (ExperimentKind::IdentitySuite, a),
        Command::Routes(a) => (ExperimentKind::RouteAgreement, a),
        Command::Entropy(a) => (ExperimentKind::EntropyScan, a),
        Command::Transfer(a) => (ExperimentKind::TransferDiag, a),
        Command::Density(a) => (ExperimentKind::Density, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
