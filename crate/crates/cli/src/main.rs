use clap::{Parser, Subcommand, ValueEnum};
use sagin::fading::{default_models, per_curve};
use sagin::harness::{aggregate, run, to_csv, trace, ExperimentConfig, HarnessError, RunOutput, TraceProblem};
use sagin::scenario::ScenarioSpec;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sagin", version, about = "Space-air-ground content delivery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config and write its CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's `output` field.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write mean and standard error per sweep point and scheme.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write PER upper-bound curves for the built-in fading models.
    Per {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
    /// Write the solver convergence trace for one slot.
    Trace {
        #[arg(long, value_enum)]
        problem: Problem,
        #[arg(long)]
        out: PathBuf,
        /// Experiment config whose scenario is used; the default scenario
        /// otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Cached,
    Noncached,
}

fn write(path: &PathBuf, text: String) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out, summary } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.or_else(|| cfg.output.clone()).ok_or_else(|| HarnessError::Config {
                field: "output".into(),
                message: "no output path in the config or on the command line".into(),
            })?;
            let result = run(&cfg)?;
            result.write(&out)?;
            if let (Some(path), RunOutput::Delays(rows)) = (summary, &result) {
                write(&path, to_csv(&aggregate(rows)?)?)?;
            }
            log::info!("wrote {}", out.display());
            Ok(())
        }
        Command::Per { out, from, to, step } => {
            if !(step > 0.0) || !(to >= from) {
                return Err(HarnessError::Config {
                    field: "step".into(),
                    message: "need step > 0 and to >= from".into(),
                });
            }
            let n = ((to - from) / step + 1e-9).floor() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| from + i as f64 * step).collect();
            write(&out, to_csv(&per_curve(&default_models(), &grid)?)?)
        }
        Command::Trace { problem, out, config } => {
            let (spec, stride) = match config {
                Some(path) => {
                    let cfg = ExperimentConfig::load(&path)?;
                    cfg.scenario.validate()?;
                    (cfg.scenario, cfg.slot_stride)
                }
                None => (ScenarioSpec::default(), 1),
            };
            let problem = match problem {
                Problem::Cached => TraceProblem::Cached,
                Problem::Noncached => TraceProblem::NonCached,
            };
            write(&out, to_csv(&trace(&spec, problem, 0, stride)?)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
