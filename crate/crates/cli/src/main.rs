use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coopfdtd_cli::analyze::cmd_analyze;
use coopfdtd_cli::commands::{cmd_run, cmd_sweep};
use coopfdtd_cli::config::RunConfig;
use coopfdtd_cli::selfcheck::seed_check;
use coopfdtd_cli::{CliError, CliResult};

/// Cooperative decay spectra from FDTD runs.
#[derive(Parser)]
#[command(name = "coopfdtd", version)]
struct Cli {
    #[command(subcommand)]
    verb: Option<Verb>,
    /// Run the invariant suite and exit.
    #[arg(long)]
    seed_check: bool,
    /// Worker threads for the field updates (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Vacuum reference, A, B and AB runs for one configuration.
    Run(Common),
    /// One run per value of the swept parameter plus an aggregate table.
    Sweep(Common),
    /// Resonance fit, pole search or amplitude traces from a spectrum table.
    Analyze {
        /// Spectrum table written by `run` or `sweep`.
        #[arg(long)]
        table: PathBuf,
        /// resonance, poles or dynamics
        #[arg(long)]
        mode: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the step cap of every run.
    #[arg(long)]
    max_steps: Option<usize>,
}

fn load(common: &Common) -> CliResult<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(n) = common.max_steps {
        cfg.analysis.stop.max_steps = Some(n);
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    if cli.seed_check {
        return seed_check();
    }
    match cli.verb {
        None => Err(CliError::config("no verb given (run, sweep, analyze or --seed-check)")),
        Some(Verb::Run(common)) => {
            let (cfg, out) = load(&common)?;
            let manifest = cmd_run(&cfg, &out)?;
            println!("wrote {}", manifest.outputs.join(", "));
            Ok(())
        }
        Some(Verb::Sweep(common)) => {
            let (cfg, out) = load(&common)?;
            let manifest = cmd_sweep(&cfg, &out)?;
            println!("{} points, {} reference runs", manifest.points.len(), manifest.reference_runs);
            Ok(())
        }
        Some(Verb::Analyze {
            table,
            mode,
            config,
            out,
        }) => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let report = cmd_analyze(&table, &mode, cfg.as_ref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
