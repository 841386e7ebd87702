//! The worker: runs the island the researcher assigns, streaming STATS every
//! generation and migrating through the researcher's board.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use crate::ea::{run_island, IslandStats, MigrationHook, Population};
use crate::exchange::remote::RemoteBoard;
use crate::exchange::wire::{Channel, IslandAssignment, WireMessage};
use crate::jobshop::parse_instance;
use crate::migration::Topology;
use crate::{Error, IslandId, IslandRng, Result};

use super::BoardHook;

/// Connection attempts with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 5, initial_backoff: Duration::from_millis(200), max_backoff: Duration::from_secs(2) }
    }
}

/// What a worker did before the researcher shut it down.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSummary {
    pub island: Option<IslandId>,
    pub repetitions: usize,
    pub best_fitness: Vec<f64>,
}

pub fn connect_with_retry(addr: &str, retry: &RetryPolicy) -> Result<TcpStream> {
    let mut backoff = retry.initial_backoff;
    let mut last_error = None;
    for attempt in 1..=retry.attempts.max(1) {
        match TcpStream::connect(addr) {
            Ok(stream) => return Ok(stream),
            Err(e) => {
                log::warn!("connect to {addr} failed (attempt {attempt}/{}): {e}", retry.attempts);
                last_error = Some(e);
            }
        }
        if attempt < retry.attempts {
            std::thread::sleep(backoff);
            backoff = (backoff * 2).min(retry.max_backoff);
        }
    }
    Err(last_error.map_or_else(|| Error::Protocol(format!("cannot connect to {addr}")), Error::Io))
}

/// Registers with the researcher at `addr` and runs assignments until told
/// to shut down.
pub fn worker_run(addr: &str, name: &str, retry: &RetryPolicy) -> Result<WorkerSummary> {
    let stream = connect_with_retry(addr, retry)?;
    let board = RemoteBoard::new(Channel::new(stream)?);
    board.send(&WireMessage::Register { worker_name: name.to_owned() })?;

    let mut summary = WorkerSummary { island: None, repetitions: 0, best_fitness: Vec::new() };
    loop {
        match board.recv()? {
            Some(WireMessage::Config(assignment)) => {
                summary.island = Some(assignment.island_id);
                let best = run_assignment(&board, &assignment)?;
                summary.repetitions += 1;
                summary.best_fitness.push(best);
            }
            Some(WireMessage::Shutdown) => return Ok(summary),
            None if summary.repetitions > 0 => return Ok(summary),
            None => return Err(Error::Protocol("researcher closed the connection before any CONFIG".into())),
            Some(WireMessage::Error { code, message }) => {
                return Err(Error::Protocol(format!("researcher error {code}: {message}")))
            }
            Some(other) => return Err(Error::Protocol(format!("unexpected {} while idle", other.kind()))),
        }
    }
}

fn run_assignment(board: &RemoteBoard, a: &IslandAssignment) -> Result<f64> {
    let instance = parse_instance(&a.instance_text)?;
    let topology = Topology::new(a.topology, a.n_islands)?;
    let ga = a.ga.with_seed(a.seed);
    ga.validate()?;
    a.policy.validate(ga.population_size)?;
    let started = Instant::now();
    let inner = BoardHook::new(a.island_id, &topology, a.policy, instance.shape(), board, started)?;
    let mut hook = StreamingHook { island: a.island_id, inner };
    let outcome = run_island(&ga, &instance, &mut hook)?;
    let best_fitness = outcome.best.fitness()?;
    board.send(&WireMessage::Done {
        island_id: a.island_id,
        best_genome: outcome.best.genome,
        best_fitness,
        wall_ms: started.elapsed().as_millis() as u64,
    })?;
    log::info!("island {} finished: best {best_fitness}", a.island_id);
    Ok(best_fitness)
}

/// Sends STATS for every generation, then migrates.
struct StreamingHook<'b> {
    island: IslandId,
    inner: BoardHook<&'b RemoteBoard>,
}

impl MigrationHook for StreamingHook<'_> {
    fn after_generation(&mut self, stats: &IslandStats, population: &mut Population, rng: &mut IslandRng) -> Result<()> {
        self.inner.board().send(&WireMessage::Stats {
            island_id: self.island,
            generation: stats.generation,
            best: stats.best_fitness,
            avg: stats.average_fitness,
            dev: stats.deviation,
            evaluations: stats.evaluations,
        })?;
        self.inner.after_generation(stats, population, rng)
    }
}
