use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddrsim::config::{resolve, RunConfig, Sources};
use ddrsim::experiments::Experiment;
use ddrsim::{run_experiment, CliError};

#[derive(Parser)]
#[command(name = "ddrsim", version, about = "Two-transmon tunable-coupler simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment and write its artifacts.
    Run {
        experiment: Experiment,
        #[command(flatten)]
        source: SourceArgs,
        /// Artifact directory, default out/<experiment>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads, default all cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a configuration without running anything.
    Validate {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Print the default configuration.
    Defaults,
}

#[derive(Args)]
struct SourceArgs {
    /// Device preset name or TOML file.
    #[arg(long, default_value = "paper_device")]
    device: String,
    /// TOML file with settings to merge over the defaults.
    #[arg(long)]
    config: Option<String>,
    /// Override one key, e.g. --set device.q1.t1=20 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl SourceArgs {
    fn sources(&self, seed: Option<u64>) -> Sources {
        Sources { device: Some(self.device.clone()), config: self.config.clone(), sets: self.sets.clone(), seed }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run { experiment, source, out, seed, jobs } => {
            let (cfg, problems) = resolve(&source.sources(seed))?;
            if !problems.is_empty() {
                return Err(CliError::Config(problems.join("; ")));
            }
            let cfg = cfg.expect("config present when there are no problems");
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
            let m = run_experiment(experiment, &cfg, &out, jobs)?;
            println!("{}", serde_json::to_string_pretty(&m.summary).unwrap_or_default());
            println!("artifacts in {} ({:.1} s)", out.display(), m.wall_time_s);
            Ok(0)
        }
        Command::Validate { source } => {
            let (_, problems) = resolve(&source.sources(None))?;
            if problems.is_empty() {
                println!("ok");
                Ok(0)
            } else {
                for p in &problems {
                    println!("{p}");
                }
                Ok(1)
            }
        }
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml());
            Ok(0)
        }
    }
}
