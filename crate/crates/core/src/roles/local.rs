//! All islands in one process over an in-process [`MemoryBoard`].
//!
//! Two schedules are available:
//!
//! - round-robin (`parallel = false`): every island advances one generation,
//!   then every island posts its emigrants, then every island takes its
//!   immigrants. Fully deterministic for a fixed `base_seed`.
//! - parallel (`parallel = true`): each island runs to completion on its own
//!   rayon task and migrates without waiting for peers, so the generation at
//!   which packets arrive depends on thread timing. Without the `parallel`
//!   feature this falls back to round-robin.

use std::time::Instant;

use crate::ea::{Island, Problem};
use crate::exchange::MemoryBoard;
use crate::migration::Topology;
use crate::{IslandId, Result};

use super::report::{GenerationRow, MigrationEvent, RunReport};
use super::{BoardHook, ExperimentConfig, HookRecord};

/// Runs the experiment on the instance named in `cfg`, writing the report to
/// `cfg.output` when set.
pub fn local_run(cfg: &ExperimentConfig, parallel: bool) -> Result<RunReport> {
    cfg.validate()?;
    let instance = cfg.load_instance()?;
    let report = local_run_instance(cfg, &instance, parallel)?;
    if let Some(dir) = &cfg.output {
        report.write(dir)?;
    }
    Ok(report)
}

/// Runs the experiment against an already loaded problem. `cfg.instance` and
/// `cfg.output` are ignored.
pub fn local_run_instance<P: Problem>(cfg: &ExperimentConfig, problem: &P, parallel: bool) -> Result<RunReport> {
    cfg.validate()?;
    let topology = cfg.topology()?;
    let mut report = RunReport::default();
    for repetition in 0..cfg.repetitions {
        let started = Instant::now();
        let board = MemoryBoard::with_topology(topology).open_all();
        let runs = if parallel {
            run_parallel(cfg, problem, &topology, &board, repetition, started)?
        } else {
            run_round_robin(cfg, problem, &topology, &board, repetition, started)?
        };
        let wall_ms = if cfg.wall_clock { started.elapsed().as_millis() as u64 } else { 0 };
        let dropped = board.drain_undelivered();
        if dropped > 0 {
            log::debug!("repetition {repetition}: dropped {dropped} undelivered packets");
        }
        for (island, (records, events)) in runs.into_iter().enumerate() {
            report.rows.extend(records.iter().map(|r| row(repetition, island, r)));
            report.migrations.extend(events.into_iter().map(|e| MigrationEvent { repetition, ..e }));
        }
        let summary = report.summarize_repetition(repetition, wall_ms, Vec::new(), Vec::new())?;
        log::info!(
            "repetition {repetition}: best {} on island {} after {} evaluations in {wall_ms} ms",
            summary.best_fitness,
            summary.best_island,
            summary.total_evaluations
        );
        report.repetitions.push(summary);
    }
    report.verify()?;
    Ok(report)
}

type IslandRun = (Vec<HookRecord>, Vec<MigrationEvent>);

fn row(repetition: usize, island: IslandId, r: &HookRecord) -> GenerationRow {
    GenerationRow {
        repetition,
        island,
        generation: r.stats.generation,
        best: r.stats.best_fitness,
        avg: r.stats.average_fitness,
        dev: r.stats.deviation,
        evaluations: r.stats.evaluations,
        migrated_in: r.migrated_in,
        wall_ms: r.wall_ms,
    }
}

fn hook<'b, P: Problem>(
    cfg: &ExperimentConfig,
    problem: &P,
    topology: &Topology,
    board: &'b MemoryBoard,
    island: IslandId,
    started: Instant,
) -> Result<BoardHook<&'b MemoryBoard>> {
    Ok(BoardHook::new(island, topology, cfg.policy, problem.genome_shape(), board, started)?
        .with_wall_clock(cfg.wall_clock))
}

fn run_round_robin<P: Problem>(
    cfg: &ExperimentConfig,
    problem: &P,
    topology: &Topology,
    board: &MemoryBoard,
    repetition: usize,
    started: Instant,
) -> Result<Vec<IslandRun>> {
    let n = cfg.n_islands;
    let mut islands = (0..n)
        .map(|id| Island::new(cfg.island_ga(id, repetition), problem))
        .collect::<Result<Vec<_>>>()?;
    let mut hooks = (0..n)
        .map(|id| hook(cfg, problem, topology, board, id, started))
        .collect::<Result<Vec<_>>>()?;

    let mut active: Vec<IslandId> = (0..n).collect();
    loop {
        for &i in &active {
            let (stats, population, rng) = islands[i].parts_mut();
            hooks[i].emigrate(stats, population, rng)?;
        }
        for &i in &active {
            let (stats, population, rng) = islands[i].parts_mut();
            hooks[i].immigrate(stats, population, rng)?;
        }
        active.retain(|&i| !islands[i].is_finished());
        if active.is_empty() {
            break;
        }
        for &i in &active {
            islands[i].step()?;
        }
    }
    Ok(hooks.into_iter().map(BoardHook::into_parts).collect())
}

#[cfg(feature = "parallel")]
fn run_parallel<P: Problem>(
    cfg: &ExperimentConfig,
    problem: &P,
    topology: &Topology,
    board: &MemoryBoard,
    repetition: usize,
    started: Instant,
) -> Result<Vec<IslandRun>> {
    use rayon::prelude::*;

    (0..cfg.n_islands)
        .into_par_iter()
        .map(|id| {
            let mut hook = hook(cfg, problem, topology, board, id, started)?;
            crate::ea::run_island(&cfg.island_ga(id, repetition), problem, &mut hook)?;
            Ok(hook.into_parts())
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<P: Problem>(
    cfg: &ExperimentConfig,
    problem: &P,
    topology: &Topology,
    board: &MemoryBoard,
    repetition: usize,
    started: Instant,
) -> Result<Vec<IslandRun>> {
    log::debug!("built without the `parallel` feature; interleaving islands round-robin");
    run_round_robin(cfg, problem, topology, board, repetition, started)
}

/// Runs a single island with no migration, as a baseline for the
/// distributed runs. Shares the report schema with [`local_run_instance`].
pub fn single_island_run<P: Problem>(cfg: &ExperimentConfig, problem: &P) -> Result<RunReport> {
    let single = ExperimentConfig { n_islands: 1, policy: crate::migration::MigrationPolicy::never(), ..cfg.clone() };
    local_run_instance(&single, problem, false)
}
