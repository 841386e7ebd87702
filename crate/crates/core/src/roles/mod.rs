//! Runtime roles: the researcher configures a run, hosts the migration board
//! and collects statistics; each worker executes one island. [`local_run`]
//! runs every island inside one process instead.

pub mod local;
pub mod report;
pub mod researcher;
pub mod worker;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ea::{GaConfig, GenomeShape, IslandStats, MigrationHook, Population};
use crate::exchange::Board;
use crate::jobshop::{parse_instance, JobShopInstance};
use crate::migration::{
    integrate_immigrants, neighbors, select_emigrants, should_migrate, MigrantPacket, MigrationPolicy, Topology,
    TopologyKind,
};
use crate::{Error, IslandId, IslandRng, Result};

pub use local::{local_run, local_run_instance};
pub use report::{GenerationRow, MigrationEvent, RepetitionSummary, RunReport, Summary};
pub use researcher::{researcher_run, Researcher};
pub use worker::{worker_run, RetryPolicy};

/// A complete experiment: islands, GA settings, migration and repetitions.
///
/// Loaded from TOML; see `experiments/` for examples. `ga.seed` is ignored,
/// each island gets a seed derived from `base_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_islands: usize,
    pub ga: GaConfig,
    pub policy: MigrationPolicy,
    #[serde(default)]
    pub topology: TopologyKind,
    /// Instance file; relative paths resolve against the config file.
    pub instance: PathBuf,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub base_seed: u64,
    /// When false every `wall_ms` field is written as 0, making reports of
    /// deterministic runs byte-for-byte reproducible.
    #[serde(default = "yes")]
    pub wall_clock: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(n_islands: usize, ga: GaConfig, policy: MigrationPolicy, instance: impl Into<PathBuf>) -> Self {
        Self {
            n_islands,
            ga,
            policy,
            topology: TopologyKind::Unrestricted,
            instance: instance.into(),
            repetitions: 1,
            output: None,
            base_seed: 0,
            wall_clock: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML experiment file, resolving `instance` and `output`
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.instance.is_relative() {
            cfg.instance = base.join(&cfg.instance);
        }
        if let Some(out) = cfg.output.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_islands == 0 {
            return Err(Error::Config("n_islands must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        self.ga.validate()?;
        self.policy.validate(self.ga.population_size)
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(self.topology, self.n_islands)
    }

    /// `base_seed + island + repetition * n_islands`.
    pub fn island_seed(&self, island: IslandId, repetition: usize) -> u64 {
        self.base_seed
            .wrapping_add(island as u64)
            .wrapping_add((repetition as u64).wrapping_mul(self.n_islands as u64))
    }

    pub fn island_ga(&self, island: IslandId, repetition: usize) -> GaConfig {
        self.ga.with_seed(self.island_seed(island, repetition))
    }

    pub fn load_instance(&self) -> Result<JobShopInstance> {
        let text = std::fs::read_to_string(&self.instance)
            .map_err(|e| Error::Config(format!("cannot read instance {}: {e}", self.instance.display())))?;
        Ok(parse_instance(&text)?)
    }
}

/// Per-generation record kept by a [`BoardHook`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HookRecord {
    pub stats: IslandStats,
    pub wall_ms: u64,
    pub migrated_in: usize,
}

/// Migration through a [`Board`]: posts emigrants to the island's neighbors
/// when the policy fires, then takes and integrates whatever is queued.
///
/// Under a `Never` policy the board is never touched.
pub struct BoardHook<B> {
    island: IslandId,
    policy: MigrationPolicy,
    destinations: Vec<IslandId>,
    shape: GenomeShape,
    board: B,
    started: Instant,
    wall_clock: bool,
    records: Vec<HookRecord>,
    events: Vec<MigrationEvent>,
}

impl<B: Board> BoardHook<B> {
    pub fn new(
        island: IslandId,
        topology: &Topology,
        policy: MigrationPolicy,
        shape: GenomeShape,
        board: B,
        started: Instant,
    ) -> Result<Self> {
        Ok(Self {
            island,
            policy,
            destinations: neighbors(topology, island)?,
            shape,
            board,
            started,
            wall_clock: true,
            records: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn with_wall_clock(mut self, enabled: bool) -> Self {
        self.wall_clock = enabled;
        self
    }

    pub fn destinations(&self) -> &[IslandId] {
        &self.destinations
    }

    pub fn board(&self) -> &B {
        &self.board
    }

    pub fn records(&self) -> &[HookRecord] {
        &self.records
    }

    pub fn events(&self) -> &[MigrationEvent] {
        &self.events
    }

    pub fn into_parts(self) -> (Vec<HookRecord>, Vec<MigrationEvent>) {
        (self.records, self.events)
    }

    /// Records `stats` and posts emigrants if the policy fires.
    pub fn emigrate(&mut self, stats: &IslandStats, population: &Population, rng: &mut IslandRng) -> Result<()> {
        let wall_ms = if self.wall_clock { self.started.elapsed().as_millis() as u64 } else { 0 };
        self.records.push(HookRecord { stats: *stats, wall_ms, migrated_in: 0 });
        if should_migrate(stats, &self.policy) && !self.destinations.is_empty() {
            let emigrants = select_emigrants(population, self.policy.emigrant_count, self.policy.selection, rng)?;
            let packet = MigrantPacket::new(self.island, stats.generation, &emigrants)?;
            self.board.post(&packet, &self.destinations)?;
        }
        Ok(())
    }

    /// Takes queued packets and integrates them into `population`.
    pub fn immigrate(&mut self, stats: &IslandStats, population: &mut Population, rng: &mut IslandRng) -> Result<()> {
        if self.policy.is_never() {
            return Ok(());
        }
        let packets = self.board.take(self.island)?;
        if packets.is_empty() {
            return Ok(());
        }
        let outcome = integrate_immigrants(population, packets, self.policy.integration, self.shape, rng)?;
        for &(source, epoch, immigrants) in &outcome.accepted {
            self.events.push(MigrationEvent {
                repetition: 0,
                destination: self.island,
                generation: stats.generation,
                source,
                epoch,
                immigrants,
            });
        }
        if let Some(last) = self.records.last_mut() {
            last.migrated_in += outcome.immigrants();
        }
        Ok(())
    }
}

impl<B: Board> MigrationHook for BoardHook<B> {
    fn after_generation(&mut self, stats: &IslandStats, population: &mut Population, rng: &mut IslandRng) -> Result<()> {
        self.emigrate(stats, population, rng)?;
        self.immigrate(stats, population, rng)
    }
}
