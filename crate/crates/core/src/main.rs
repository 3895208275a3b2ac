use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xychain::runner::{
    run_experiment, run_rg, validate_config, ExperimentConfig, ExperimentKind, RunOutcome, EXIT_CONFIG, EXIT_IO,
};

#[derive(Parser)]
#[command(name = "xychain", version, about = "Block entanglement of inhomogeneous XY spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Parse and check a config file, then print the resolved config.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Compare free-fermion results with exact diagonalization.
    OracleCompare(RunArgs),
    /// Strong-disorder decimation of the configured chain or ensemble.
    Rg(RunArgs),
    /// List the experiment presets, or print one resolved preset.
    Presets {
        #[arg(value_name = "KIND")]
        kind: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config. Without it the subcommand's preset is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Mantissa bits; 53 selects f64.
    #[arg(long, value_name = "BITS")]
    precision: Option<u32>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Failure { code: EXIT_CONFIG, message: message.to_string() }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    validate_config(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn resolve(args: &RunArgs, default: Option<ExperimentKind>) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut config = match (&args.config, default) {
        (Some(path), _) => load(path)?,
        (None, Some(kind)) => ExperimentConfig::preset(kind).map_err(Failure::config)?,
        (None, None) => return Err(Failure::config("--config is required")),
    };
    if let Some(kind) = default {
        if args.config.is_some() && config.experiment != kind {
            return Err(Failure::config(format!(
                "experiment: expected \"{kind}\" for this subcommand, found \"{}\"",
                config.experiment
            )));
        }
    }
    if let Some(bits) = args.precision {
        config = config.with_precision(bits).map_err(Failure::config)?;
    }
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", config.experiment)));
    Ok((config, out))
}

fn report(outcome: &RunOutcome, out: &Path) -> i32 {
    let m = &outcome.manifest;
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    for f in &m.files {
        println!("{}  {}", f.sha256, out.join(&f.path).display());
    }
    for (k, v) in &m.metrics {
        println!("{k} = {v:.16e}");
    }
    for (k, v) in &m.labels {
        println!("{k} = {v}");
    }
    for c in m.checks.iter().filter(|c| !c.passed) {
        eprintln!("invariant violated: {} {}", c.name, c.detail);
    }
    if let Some(e) = &outcome.error {
        eprintln!("error in stage {}: {e}", m.failed_stage.as_deref().unwrap_or("?"));
    }
    outcome.exit_code()
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Run(args) => {
            let (config, out) = resolve(&args, None)?;
            Ok(report(&run_experiment(&config, &out), &out))
        }
        Command::OracleCompare(args) => {
            let (config, out) = resolve(&args, Some(ExperimentKind::OracleCompare))?;
            Ok(report(&run_experiment(&config, &out), &out))
        }
        Command::Rg(args) => {
            let (config, out) = resolve(&args, None)?;
            Ok(report(&run_rg(&config, &out), &out))
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(0)
        }
        Command::Presets { kind: None } => {
            for k in ExperimentKind::ALL {
                println!("{:<20} {}", k.name(), k.describe());
            }
            Ok(0)
        }
        Command::Presets { kind: Some(name) } => {
            let kind = ExperimentKind::ALL
                .iter()
                .copied()
                .find(|k| k.name() == name)
                .ok_or_else(|| Failure::config(format!("unknown experiment \"{name}\"")))?;
            let cfg = ExperimentConfig::preset(kind).map_err(Failure::config)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
