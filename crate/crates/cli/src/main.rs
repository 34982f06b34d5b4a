use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isasgd::importance::BalanceMode;
use isasgd::RmseMode;
use isasgd_cli::{output_dir, prepare, speedup, sweep, train_command, CliError, ExperimentConfig, Overrides, DEFAULT_LEVELS};

#[derive(Parser)]
#[command(name = "isasgd", version, about = "Lock-free asynchronous SGD with importance sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute importances, psi/rho, the sample ordering and partition sums
    Prepare(RunArgs),
    /// Train one configuration and write trace.csv and model.txt
    Train(RunArgs),
    /// Compare two traces by time to reach error-rate levels
    Speedup {
        /// Trace of the candidate run
        trace_a: PathBuf,
        /// Trace of the baseline run
        trace_b: PathBuf,
        /// Descending error-rate levels, comma separated
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Directory for speedup.csv; prints to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every combination of the list-valued config keys
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value experiment config
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (num_T)
    #[arg(long)]
    threads: Option<usize>,
    /// auto, always or never
    #[arg(long)]
    balance: Option<BalanceMode>,
    /// per_sample or sqrt_objective
    #[arg(long)]
    rmse: Option<RmseMode>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        Overrides { seed: self.seed, threads: self.threads, balance: self.balance, rmse: self.rmse }.apply(&mut cfg);
        Ok((cfg, output_dir(self.out)))
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Prepare(args) => {
            let (cfg, out) = args.load()?;
            print!("{}", prepare(&cfg, &out)?);
        }
        Command::Train(args) => {
            let (cfg, out) = args.load()?;
            println!("{}", train_command(&cfg, &out)?);
        }
        Command::Sweep(args) => {
            let (cfg, out) = args.load()?;
            for line in sweep(&cfg, &out)? {
                println!("{line}");
            }
        }
        Command::Speedup { trace_a, trace_b, levels, out } => {
            let levels = levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
            let report = speedup(&trace_a, &trace_b, &levels, out.as_deref())?;
            if out.is_none() {
                report.write_csv(std::io::stdout().lock()).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            if let Some(diagnostic) = &report.diagnostic {
                eprintln!("{diagnostic}");
            }
            if let Some(mean) = report.mean_speedup() {
                eprintln!("mean speedup over {} levels: {mean:.4}", report.slices.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
