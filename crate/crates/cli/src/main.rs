use clap::Parser;
use exfree_cli::{dispatch, load_config_with, CliError, Experiment, Overrides};
use exfree_core::Method;
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate exchange-free state transfer through a squeezing-coupled bus.
#[derive(Parser, Debug)]
#[command(name = "exfree-qst", version)]
struct Args {
    /// qst, purified-qst, hom, binomial, calibrate-g, calibrate-delta0,
    /// budget, compare-bs or sweep
    experiment: String,
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `out_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// exact, trotter or lindblad
    #[arg(long)]
    method: Option<String>,
    /// Fock levels per mode, e.g. 6,5,6
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

fn run(args: Args) -> Result<(), CliError> {
    let experiment: Experiment = args.experiment.parse()?;
    let method = args
        .method
        .as_deref()
        .map(|m| {
            m.parse::<Method>()
                .map_err(|e| CliError::Config(format!("--method: {e}")))
        })
        .transpose()?;
    let overrides = Overrides {
        experiment: Some(experiment),
        out_dir: args.out,
        method,
        dims: args.dims,
    };
    let cfg = load_config_with(&args.config, &overrides)?;
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    let report = dispatch(&cfg)?;
    for line in report.lines {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
