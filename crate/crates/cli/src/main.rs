use anyhow::Context;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tunekit::bench::{bench_csv, run_bench, summarize, summary_table, BenchError};
use tunekit::config::{base_dir, write_outputs, BenchConfig, RunConfig, Scenario};
use tunekit::format::float;

#[derive(Parser)]
#[command(name = "tunekit", version, about = "Derivative-free hyperparameter tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one tuning job
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's `seed`
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare solver setups over several seeds
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        /// Output directory; overrides the config's `output`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a worker grid between training and tuning parallelism
    SimulateAllocation {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// Exit code 1 for bad input, 2 for failures while running.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> Self {
        Failure::Config(e.into())
    }

    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }
}

fn output_dir(flag: Option<PathBuf>, config_path: &Path, configured: &Path) -> PathBuf {
    flag.unwrap_or_else(|| base_dir(config_path).join(configured))
}

fn tune(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(config).map_err(Failure::config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = output_dir(out, config, &cfg.output);
    let job = cfg.prepare(&base_dir(config)).map_err(Failure::config)?;
    let (space, history) = job.run().map_err(Failure::runtime)?;
    let summary = write_outputs(&dir, &space, &history)
        .with_context(|| format!("writing results to {}", dir.display()))
        .map_err(Failure::Runtime)?;
    match (&summary.best_point, summary.best_objective) {
        (Some(point), Some(best)) => {
            let params: Vec<String> = point.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("best objective {} at {}", float(best), params.join(" "));
        }
        _ => println!("no successful evaluation"),
    }
    println!(
        "{} evaluations ({} ok, {} failed), results in {}",
        summary.total,
        summary.ok,
        summary.failed,
        dir.display()
    );
    Ok(())
}

fn bench(config: &Path, seeds: u64, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = BenchConfig::load(config).map_err(Failure::config)?;
    if seeds == 0 {
        return Err(Failure::Config(anyhow::anyhow!("--seeds must be at least 1")));
    }
    let dir = output_dir(out, config, &cfg.output);
    let rows = run_bench(&cfg, &base_dir(config), seeds).map_err(|e| match e {
        BenchError::Config(c) => Failure::config(c),
        BenchError::Run(r) => Failure::runtime(r),
    })?;
    let table = summary_table(&summarize(&rows));
    std::fs::create_dir_all(&dir)
        .and_then(|()| std::fs::write(dir.join("bench.csv"), bench_csv(&rows)))
        .and_then(|()| std::fs::write(dir.join("bench_summary.txt"), &table))
        .with_context(|| format!("writing bench results to {}", dir.display()))
        .map_err(Failure::Runtime)?;
    print!("{table}");
    Ok(())
}

fn simulate(scenario: &Path) -> Result<(), Failure> {
    let s = Scenario::load(scenario).map_err(Failure::config)?;
    print!("{}", s.render().map_err(Failure::config)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tune { config, out, seed } => tune(&config, out, seed),
        Command::Bench { config, seeds, out } => bench(&config, seeds, out),
        Command::SimulateAllocation { scenario } => simulate(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
