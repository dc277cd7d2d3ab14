use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use spatial_lrd_cli::{load_config, CliError, Command, Run};

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    /// sigma_n^2 over the inflation grid and its growth exponent
    Scan,
    /// interior, exterior and boundary-shell parts of sigma_n^2
    Decompose,
    /// limiting variance of the dependence regime
    Limits,
    /// Monte Carlo normality check at the largest inflation factor
    Mc,
    /// all of the above plus a summary
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Scan => Command::Scan,
            Cmd::Decompose => Command::Decompose,
            Cmd::Limits => Command::Limits,
            Cmd::Mc => Command::Mc,
            Cmd::Report => Command::Report,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "spatial-lrd",
    version,
    about = "Variance growth and normality of sums of spatial linear processes"
)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides `experiment.output`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// base seed (overrides `experiment.seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads; defaults to all cores
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::field("threads", e.to_string()))?;
    }
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.experiment.seed = seed;
    }
    let run = Run::new(
        args.command.into(),
        config,
        args.config.parent(),
        args.out.clone(),
    )?;
    let outcome = run.execute()?;
    if let Some(pass) = outcome.pass {
        println!(
            "normality at level 0.01: {}",
            if pass { "pass" } else { "fail" }
        );
    }
    Ok(outcome.files)
}

/// `experiment.output` of a config that may not validate.
fn configured_output(path: &std::path::Path) -> Option<PathBuf> {
    let text = std::fs::read_to_string(path).ok()?;
    let value: toml::Table = text.parse().ok()?;
    let out = value
        .get("experiment")?
        .get("output")
        .and_then(|v| v.as_str())
        .unwrap_or("out");
    Some(PathBuf::from(out))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let out = args.out.clone().or_else(|| configured_output(&args.config));
            if let Some(p) = Run::write_error(&out.unwrap_or_else(|| PathBuf::from(".")), &e) {
                eprintln!("details in {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
