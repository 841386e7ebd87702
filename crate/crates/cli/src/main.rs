//! `archipel`: researcher, worker, local runner and benchmark harness.
//!
//! Log verbosity follows `RUST_LOG` (default `info`).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use archipel::bench::{run_paper_bench, BenchSettings};
use archipel::jobshop::{parse_instance, JobShopInstance};
use archipel::roles::{local_run, researcher_run, worker_run, ExperimentConfig, RetryPolicy, RunReport};
use archipel::seeded_rng;

/// Default benchmark instance, shipped in the repository.
const FT10: &str = include_str!("../../../instances/ft10.txt");

#[derive(Debug, Parser)]
#[command(name = "archipel", version, about = "Island-model genetic algorithm for job-shop scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Host a run: register workers, serve the migration board, collect reports.
    Researcher {
        /// Address to listen on, e.g. 0.0.0.0:7001.
        #[arg(long)]
        listen: String,
        #[arg(long)]
        experiment: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run islands assigned by a researcher.
    Worker {
        /// Researcher address, e.g. host:7001.
        #[arg(long)]
        connect: String,
        #[arg(long, default_value = "worker")]
        name: String,
        /// Connection attempts before giving up.
        #[arg(long, default_value_t = 5)]
        retries: u32,
    },
    /// Run every island of an experiment in this process.
    Local {
        #[arg(long)]
        experiment: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        /// Run islands concurrently instead of interleaving them.
        #[arg(long)]
        parallel: bool,
    },
    /// Migration-interval experiments plus the evaluation-matched single island.
    BenchPaper(BenchArgs),
    /// Write a random instance file.
    GenInstance {
        #[arg(long)]
        jobs: usize,
        #[arg(long)]
        machines: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        min_duration: u64,
        #[arg(long, default_value_t = 99)]
        max_duration: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Instance file; defaults to the shipped ft10.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Use a random 20-job, 15-machine instance when no --instance is given.
    #[arg(long)]
    swv_scale: bool,
    #[arg(long, default_value_t = 1000)]
    generations: u64,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 4)]
    islands: usize,
    #[arg(long, default_value_t = 100)]
    population: usize,
    /// Migration intervals, comma separated. A no-migration test always runs.
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    intervals: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Interleave islands deterministically instead of running them concurrently.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Researcher { listen, experiment, out } => {
            let cfg = load_experiment(&experiment, out)?;
            let report = researcher_run(&cfg, listen.as_str())?;
            print_report(&report);
        }
        Command::Worker { connect, name, retries } => {
            let retry = RetryPolicy { attempts: retries, ..RetryPolicy::default() };
            let summary = worker_run(&connect, &name, &retry)?;
            println!("worker {name}: {} repetitions, best {:?}", summary.repetitions, summary.best_fitness);
        }
        Command::Local { experiment, out, parallel } => {
            let cfg = load_experiment(&experiment, out)?;
            let report = local_run(&cfg, parallel)?;
            print_report(&report);
        }
        Command::BenchPaper(args) => bench_paper(args)?,
        Command::GenInstance { jobs, machines, seed, min_duration, max_duration, out } => {
            if jobs == 0 || machines == 0 || min_duration > max_duration {
                bail!("need positive --jobs/--machines and --min-duration <= --max-duration");
            }
            let inst = JobShopInstance::random(jobs, machines, min_duration..=max_duration, &mut seeded_rng(seed))?;
            let text = format!("# random {jobs}x{machines} instance, seed {seed}\n{}", inst.to_text());
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn load_experiment(path: &PathBuf, out: PathBuf) -> anyhow::Result<ExperimentConfig> {
    let mut cfg =
        ExperimentConfig::load(path).with_context(|| format!("loading experiment {}", path.display()))?;
    cfg.output = Some(out);
    Ok(cfg)
}

fn print_report(report: &RunReport) {
    let s = report.summary();
    println!(
        "{} repetitions: mean best {:.2}, min best {}, mean wall {:.0} ms, mean evaluations {:.0}",
        s.repetitions, s.mean_best, s.min_best, s.mean_wall_ms, s.mean_total_evaluations
    );
}

fn bench_paper(args: BenchArgs) -> anyhow::Result<()> {
    let instance = match (&args.instance, args.swv_scale) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_instance(&text)?
        }
        (None, true) => JobShopInstance::random(20, 15, 1..=99, &mut seeded_rng(args.seed))?,
        (None, false) => parse_instance(FT10)?,
    };
    log::info!(
        "instance: {} jobs x {} machines, lower bound {}",
        instance.n_jobs(),
        instance.n_machines(),
        instance.lower_bound()
    );
    let settings = BenchSettings {
        n_islands: args.islands,
        population_size: args.population,
        generations: args.generations,
        repetitions: args.repetitions,
        intervals: args.intervals,
        base_seed: args.seed,
        parallel: !args.sequential,
        ..BenchSettings::default()
    };
    let started = std::time::Instant::now();
    let results = run_paper_bench(&settings, &instance)?;
    results.write(&args.out)?;

    println!("{:<16} {:>7} {:>12} {:>10} {:>14} {:>14} {:>12}", "test", "islands", "mean_best", "min_best", "final_dev", "evaluations", "wall_ms");
    for row in results.summary_rows() {
        println!(
            "{:<16} {:>7} {:>12.2} {:>10} {:>14.3} {:>14.0} {:>12.0}",
            row.test, row.islands, row.mean_best, row.min_best, row.mean_final_deviation, row.mean_total_evaluations, row.mean_wall_ms
        );
    }
    println!("single-island evaluation limit: {}", results.evaluation_limit);
    println!("results written to {} in {:.1?}", args.out.display(), round(started.elapsed()));
    Ok(())
}

fn round(d: Duration) -> Duration {
    Duration::from_millis(d.as_millis() as u64)
}
