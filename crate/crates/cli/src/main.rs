use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use oppcomp::sim::PolicySpec;
use oppcomp_cli::commands::{cmd_compare, cmd_rank_eval, cmd_simulate, cmd_trace_stats, cmd_validate, Bundle, CliError, BIAS_FILE};
use oppcomp_cli::config::{ExperimentConfig, Overrides, TraceSource};
use oppcomp_cli::validate::{ClosedForms, GridSpec};

/// Service composition experiments over opportunistic contact traces.
#[derive(Parser)]
#[command(name = "oppcomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured policies once per seed.
    Simulate(RunArgs),
    /// Run a policy set on identical request streams and compare per request.
    Compare(RunArgs),
    /// Follow each of the model's top-k plans and score the ranking.
    RankEval(RunArgs),
    /// Check the closed forms against Monte-Carlo oracles.
    Validate(ValidateArgs),
    /// Describe a contact trace.
    TraceStats(TraceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configured seeds. Repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    /// Replaces the configured policies. Repeatable.
    #[arg(long)]
    policy: Vec<PolicySpec>,
    /// Input and output parameter size in bytes.
    #[arg(long)]
    io_size: Option<f64>,
    #[arg(long)]
    cpu_max: Option<u32>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = GridSpec::default().points)]
    points: usize,
    #[arg(long, default_value_t = GridSpec::default().trials)]
    trials: u64,
    #[arg(long, default_value_t = GridSpec::default().seed)]
    seed: u64,
    /// Grid points that also get the approximate-form bias run.
    #[arg(long, default_value_t = GridSpec::default().approx_points)]
    approx_points: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Scale the case-2C output time by this factor to exercise the gate.
    #[arg(long, hide = true)]
    fault_injection: Option<f64>,
}

#[derive(Args)]
struct TraceArgs {
    /// Contact trace CSV.
    #[arg(long, conflicts_with = "config")]
    trace: Option<PathBuf>,
    /// Describe the trace this config produces.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the trace as CSV.
    #[arg(long)]
    emit: Option<PathBuf>,
}

static FAULT: std::sync::OnceLock<f64> = std::sync::OnceLock::new();

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides { seeds: args.seed.clone(), policies: args.policy.clone(), io_size: args.io_size, cpu_max: args.cpu_max });
    cfg.validate()?;
    Ok(cfg)
}

fn print_bundle(b: &Bundle) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(&b.summary).expect("summary serialises"));
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => print_bundle(&cmd_simulate(&load(&a)?, &a.out_dir)?),
        Command::Compare(a) => print_bundle(&cmd_compare(&load(&a)?, &a.out_dir)?),
        Command::RankEval(a) => print_bundle(&cmd_rank_eval(&load(&a)?, &a.out_dir)?),
        Command::Validate(a) => {
            let grid = GridSpec { points: a.points, trials: a.trials, seed: a.seed, approx_points: a.approx_points, ..GridSpec::default() };
            let mut forms = ClosedForms::default();
            if let Some(f) = a.fault_injection {
                FAULT.set(f).expect("set once");
                forms.theta_2c = |l, s| FAULT.get().copied().unwrap_or(1.0) * oppcomp::model::expected_theta_case2c(l, s);
            }
            let report = cmd_validate(&grid, &forms, &a.out_dir)?;
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serialises"));
            info!("bias report written to {}", a.out_dir.join(BIAS_FILE).display());
            match report.gated_failures() {
                0 => Ok(()),
                n => Err(CliError::ValidationFailed(n)),
            }
        }
        Command::TraceStats(a) => {
            let cfg = match (&a.trace, &a.config) {
                (Some(path), _) => ExperimentConfig { trace: TraceSource::File { path: path.clone(), n_nodes: None }, ..ExperimentConfig::default() },
                (None, Some(p)) => ExperimentConfig::load(p)?,
                (None, None) => ExperimentConfig::default(),
            };
            let s = cmd_trace_stats(&cfg, a.seed, a.emit.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serialises"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
