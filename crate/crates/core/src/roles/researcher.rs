//! The researcher: registers workers, hands each an island, hosts the
//! migration board and collects statistics into a [`RunReport`].

use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Instant;

use crate::exchange::remote::handle_board_request;
use crate::exchange::wire::{Channel, IslandAssignment, WireMessage};
use crate::exchange::MemoryBoard;
use crate::{Error, IslandId, Result};

use super::report::{GenerationRow, MigrationEvent, RunReport};
use super::ExperimentConfig;

/// Binds `listen_addr` and runs `cfg` with remote workers.
pub fn researcher_run(cfg: &ExperimentConfig, listen_addr: impl ToSocketAddrs) -> Result<RunReport> {
    Researcher::bind(listen_addr)?.run(cfg)
}

pub struct Researcher {
    listener: TcpListener,
}

struct Worker {
    island: IslandId,
    name: String,
    channel: Channel,
}

/// How a worker's repetition ended.
enum Ending {
    Done { saw_stats: bool },
    Failed(String),
}

#[derive(Default)]
struct Collected {
    rows: Vec<GenerationRow>,
    events: Vec<MigrationEvent>,
}

impl Researcher {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)? })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Waits for `cfg.n_islands` workers, then runs every repetition in turn.
    /// The report is also written to `cfg.output` when set.
    pub fn run(&self, cfg: &ExperimentConfig) -> Result<RunReport> {
        cfg.validate()?;
        let instance = cfg.load_instance()?;
        let instance_text = instance.to_text();
        let topology = cfg.topology()?;

        let mut workers = self.register(cfg.n_islands)?;
        let mut report = RunReport::default();
        for repetition in 0..cfg.repetitions {
            if workers.is_empty() {
                return Err(Error::Protocol(format!("no workers left for repetition {repetition}")));
            }
            let board = MemoryBoard::with_topology(topology).open_all();
            let started = Instant::now();
            let mut failed = Vec::new();
            let mut flags = Vec::new();
            let mut live = Vec::with_capacity(workers.len());
            for mut w in workers.drain(..) {
                let assignment = IslandAssignment {
                    island_id: w.island,
                    n_islands: cfg.n_islands,
                    topology: cfg.topology,
                    ga: cfg.island_ga(w.island, repetition),
                    policy: cfg.policy,
                    instance_text: instance_text.clone(),
                    seed: cfg.island_seed(w.island, repetition),
                };
                match w.channel.send(&WireMessage::Config(assignment)) {
                    Ok(()) => live.push(w),
                    Err(e) => {
                        log::warn!("island {} ({}): cannot send CONFIG: {e}", w.island, w.name);
                        failed.push(w.island);
                    }
                }
            }

            let sink = Mutex::new(Collected::default());
            let endings: Vec<Ending> = std::thread::scope(|scope| {
                let handles: Vec<_> = live
                    .iter_mut()
                    .map(|w| {
                        let (board, sink) = (&board, &sink);
                        let wall_clock = cfg.wall_clock;
                        scope.spawn(move || serve_worker(w, board, sink, started, wall_clock))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Ending::Failed("handler panicked".into())))
                    .collect()
            });
            let wall_ms = if cfg.wall_clock { started.elapsed().as_millis() as u64 } else { 0 };
            let dropped = board.drain_undelivered();
            if dropped > 0 {
                log::debug!("repetition {repetition}: dropped {dropped} undelivered packets");
            }

            for (w, ending) in live.into_iter().zip(endings) {
                match ending {
                    Ending::Done { saw_stats } => {
                        if !saw_stats {
                            flags.push(format!("island {}: DONE without STATS", w.island));
                        }
                        workers.push(w);
                    }
                    Ending::Failed(reason) => {
                        log::warn!("island {} ({}) failed: {reason}", w.island, w.name);
                        failed.push(w.island);
                        flags.push(format!("island {}: {reason}", w.island));
                    }
                }
            }
            failed.sort_unstable();

            let Collected { mut rows, mut events } = sink.into_inner().unwrap_or_else(|e| e.into_inner());
            rows.sort_by_key(|r| (r.island, r.generation));
            events.sort_by_key(|e| (e.destination, e.generation, e.source, e.epoch));
            for r in &mut rows {
                r.repetition = repetition;
                r.migrated_in = events
                    .iter()
                    .filter(|e| e.destination == r.island && e.generation == r.generation)
                    .map(|e| e.immigrants)
                    .sum();
            }
            report.rows.extend(rows);
            report.migrations.extend(events.into_iter().map(|e| MigrationEvent { repetition, ..e }));
            let summary = report.summarize_repetition(repetition, wall_ms, failed, flags)?;
            log::info!(
                "repetition {repetition}: best {} on island {} ({} failed islands)",
                summary.best_fitness,
                summary.best_island,
                summary.failed_islands.len()
            );
            report.repetitions.push(summary);
        }

        for w in &mut workers {
            let _ = w.channel.send(&WireMessage::Shutdown);
            w.channel.shutdown();
        }
        report.verify()?;
        if let Some(dir) = &cfg.output {
            report.write(dir)?;
        }
        Ok(report)
    }

    /// Accepts connections until `n` workers registered. Island ids follow
    /// registration order.
    fn register(&self, n: usize) -> Result<Vec<Worker>> {
        let mut workers = Vec::with_capacity(n);
        while workers.len() < n {
            let (stream, peer) = self.listener.accept()?;
            let mut channel = Channel::new(stream)?;
            match channel.recv() {
                Ok(Some(WireMessage::Register { worker_name })) => {
                    let island = workers.len();
                    log::info!("worker {worker_name:?} at {peer} registered as island {island}");
                    workers.push(Worker { island, name: worker_name, channel });
                }
                Ok(Some(other)) => {
                    let _ = channel.send(&WireMessage::error(
                        "not_registered",
                        format!("expected REGISTER, got {}", other.kind()),
                    ));
                }
                Ok(None) => {}
                Err(e) => {
                    let _ = channel.send(&WireMessage::error("bad_message", e.to_string()));
                }
            }
        }
        Ok(workers)
    }
}

fn serve_worker(
    worker: &mut Worker,
    board: &MemoryBoard,
    sink: &Mutex<Collected>,
    started: Instant,
    wall_clock: bool,
) -> Ending {
    let island = worker.island;
    let mut last_generation: Option<u64> = None;
    loop {
        let msg = match worker.channel.recv() {
            Ok(Some(msg)) => msg,
            Ok(None) => return Ending::Failed("disconnected".into()),
            Err(Error::Wire(e)) => {
                let _ = worker.channel.send(&WireMessage::error("bad_message", e.to_string()));
                continue;
            }
            Err(e) => return Ending::Failed(e.to_string()),
        };
        let reply = match msg {
            WireMessage::Stats { island_id, generation, best, avg, dev, evaluations } if island_id == island => {
                last_generation = Some(generation);
                let wall_ms = if wall_clock { started.elapsed().as_millis() as u64 } else { 0 };
                lock(sink).rows.push(GenerationRow {
                    repetition: 0,
                    island,
                    generation,
                    best,
                    avg,
                    dev,
                    evaluations,
                    migrated_in: 0,
                    wall_ms,
                });
                None
            }
            WireMessage::Done { island_id, best_fitness, wall_ms, .. } if island_id == island => {
                log::debug!("island {island} done: best {best_fitness} after {wall_ms} ms");
                return Ending::Done { saw_stats: last_generation.is_some() };
            }
            msg @ (WireMessage::Post { .. } | WireMessage::Take { .. }) => {
                let reply = handle_board_request(board, &msg, Some(island));
                if let Some(WireMessage::Packets { packets }) = &reply {
                    let generation = last_generation.unwrap_or(0);
                    lock(sink).events.extend(packets.iter().map(|p| MigrationEvent {
                        repetition: 0,
                        destination: island,
                        generation,
                        source: p.source_island,
                        epoch: p.epoch,
                        immigrants: p.chromosomes.len(),
                    }));
                }
                reply
            }
            other => Some(WireMessage::error(
                "unexpected",
                format!("island {island} sent unexpected {}", other.kind()),
            )),
        };
        if let Some(reply) = reply {
            if let Err(e) = worker.channel.send(&reply) {
                return Ending::Failed(e.to_string());
            }
        }
    }
}

fn lock(sink: &Mutex<Collected>) -> std::sync::MutexGuard<'_, Collected> {
    sink.lock().unwrap_or_else(|e| e.into_inner())
}
