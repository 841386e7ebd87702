//! Migration policies and topologies: when islands migrate, which
//! individuals leave, how immigrants are absorbed and who may talk to whom.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ea::{Chromosome, Gene, GenomeShape, IslandStats, Population};
use crate::{Error, IslandId, IslandRng, Result};

/// Default threshold for [`Trigger::DeviationBelow`]. Integer makespans give
/// exactly zero deviation once a population has fully converged.
pub const DEFAULT_DEVIATION_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Every `n` generations, never at generation 0.
    Interval(u64),
    /// Whenever the population deviation is at most epsilon.
    DeviationBelow(f64),
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Random,
    #[default]
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    #[default]
    ReplaceWorst,
    ReplaceRandom,
}

/// Emigrants are always copies; the source population keeps them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopyMode {
    #[default]
    Copy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationPolicy {
    pub trigger: Trigger,
    #[serde(default = "default_emigrant_count")]
    pub emigrant_count: usize,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default)]
    pub copy_mode: CopyMode,
}

fn default_emigrant_count() -> usize {
    1
}

impl MigrationPolicy {
    pub fn new(trigger: Trigger) -> Self {
        Self {
            trigger,
            emigrant_count: default_emigrant_count(),
            selection: Selection::default(),
            integration: Integration::default(),
            copy_mode: CopyMode::Copy,
        }
    }

    pub fn never() -> Self {
        Self::new(Trigger::Never)
    }

    pub fn is_never(&self) -> bool {
        matches!(self.trigger, Trigger::Never)
    }

    pub fn validate(&self, population_size: usize) -> Result<()> {
        if self.emigrant_count == 0 || self.emigrant_count >= population_size {
            return Err(Error::Config(format!(
                "emigrant_count must be in 1..{population_size}, got {}",
                self.emigrant_count
            )));
        }
        match self.trigger {
            Trigger::Interval(0) => Err(Error::Config("migration interval must be positive".into())),
            Trigger::DeviationBelow(eps) if eps.is_nan() || eps < 0.0 => {
                Err(Error::Config(format!("deviation epsilon must be non-negative, got {eps}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// Every island may exchange with every other island.
    #[default]
    Unrestricted,
    /// Island i exchanges only with i-1 and i+1 (mod n).
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    pub n_islands: usize,
}

impl Topology {
    pub fn new(kind: TopologyKind, n_islands: usize) -> Result<Self> {
        if n_islands == 0 {
            return Err(Error::Config("a topology needs at least one island".into()));
        }
        Ok(Self { kind, n_islands })
    }

    /// Whether `source` may send to `destination`.
    pub fn allows(&self, source: IslandId, destination: IslandId) -> bool {
        neighbors(self, source).is_ok_and(|n| n.contains(&destination))
    }
}

/// Islands that `island` may send migrants to, in ascending order.
pub fn neighbors(topology: &Topology, island: IslandId) -> Result<Vec<IslandId>> {
    let n = topology.n_islands;
    if island >= n {
        return Err(Error::Argument(format!("island {island} out of range 0..{n}")));
    }
    let mut out: Vec<IslandId> = match topology.kind {
        TopologyKind::Unrestricted => (0..n).filter(|&i| i != island).collect(),
        TopologyKind::Ring => vec![(island + n - 1) % n, (island + 1) % n],
    };
    out.sort_unstable();
    out.dedup();
    out.retain(|&i| i != island);
    Ok(out)
}

/// A chromosome in transit: genome plus its (mandatory) fitness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Migrant {
    pub genome: Vec<Gene>,
    pub fitness: f64,
}

impl TryFrom<&Chromosome> for Migrant {
    type Error = Error;

    fn try_from(c: &Chromosome) -> Result<Self> {
        Ok(Self { genome: c.genome.clone(), fitness: c.fitness()? })
    }
}

impl From<Migrant> for Chromosome {
    fn from(m: Migrant) -> Self {
        Chromosome::evaluated(m.genome, m.fitness)
    }
}

/// The unit written to and taken from the migration board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrantPacket {
    pub source_island: IslandId,
    /// Source generation at emission.
    pub epoch: u64,
    pub chromosomes: Vec<Migrant>,
}

impl MigrantPacket {
    pub fn new(source_island: IslandId, epoch: u64, emigrants: &[Chromosome]) -> Result<Self> {
        if emigrants.is_empty() {
            return Err(Error::Argument("a migrant packet needs at least one chromosome".into()));
        }
        let chromosomes = emigrants.iter().map(Migrant::try_from).collect::<Result<_>>()?;
        Ok(Self { source_island, epoch, chromosomes })
    }
}

pub fn should_migrate(stats: &IslandStats, policy: &MigrationPolicy) -> bool {
    match policy.trigger {
        Trigger::Interval(n) => n > 0 && stats.generation > 0 && stats.generation.is_multiple_of(n),
        Trigger::DeviationBelow(eps) => stats.deviation <= eps,
        Trigger::Never => false,
    }
}

/// Copies `k` individuals out of `population`.
///
/// `Best` takes the k lowest-fitness members (lower index wins ties);
/// `Random` takes k distinct uniform picks.
pub fn select_emigrants(
    population: &Population,
    k: usize,
    selection: Selection,
    rng: &mut IslandRng,
) -> Result<Vec<Chromosome>> {
    let n = population.len();
    if k >= n {
        return Err(Error::Argument(format!("cannot select {k} emigrants from a population of {n}")));
    }
    let members = population.members();
    let picked: Vec<usize> = match selection {
        Selection::Best => {
            let fitness = population.fitnesses()?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
            order.truncate(k);
            order
        }
        Selection::Random => {
            if !population.is_evaluated() {
                return Err(Error::State("emigrants must come from an evaluated population".into()));
            }
            index::sample(rng, n, k).into_vec()
        }
    };
    Ok(picked.into_iter().map(|i| members[i].clone()).collect())
}

/// A packet that could not be absorbed by the local island.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedPacket {
    pub source_island: IslandId,
    pub epoch: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntegrationOutcome {
    /// `(source_island, epoch, immigrants)` for each absorbed packet.
    pub accepted: Vec<(IslandId, u64, usize)>,
    pub rejected: Vec<RejectedPacket>,
}

impl IntegrationOutcome {
    pub fn immigrants(&self) -> usize {
        self.accepted.iter().map(|&(_, _, n)| n).sum()
    }
}

/// Writes immigrants over local individuals in packet order.
///
/// A packet whose chromosomes do not fit the local genome shape is rejected
/// as a whole, logged, and skipped.
pub fn integrate_immigrants(
    population: &mut Population,
    packets: Vec<MigrantPacket>,
    integration: Integration,
    shape: GenomeShape,
    rng: &mut IslandRng,
) -> Result<IntegrationOutcome> {
    if population.is_empty() {
        return Err(Error::State("cannot integrate into an empty population".into()));
    }
    let mut outcome = IntegrationOutcome::default();
    for packet in packets {
        if let Err(e) = check_packet(&packet, shape) {
            let rejected = RejectedPacket {
                source_island: packet.source_island,
                epoch: packet.epoch,
                reason: Error::Integration(e.to_string()).to_string(),
            };
            log::warn!(
                "rejected packet from island {} epoch {}: {}",
                rejected.source_island,
                rejected.epoch,
                rejected.reason
            );
            outcome.rejected.push(rejected);
            continue;
        }
        let count = packet.chromosomes.len();
        for migrant in packet.chromosomes {
            let slot = match integration {
                Integration::ReplaceWorst => population.worst_index()?,
                Integration::ReplaceRandom => rng.gen_range(0..population.len()),
            };
            population.members_mut()[slot] = migrant.into();
        }
        outcome.accepted.push((packet.source_island, packet.epoch, count));
    }
    Ok(outcome)
}

fn check_packet(packet: &MigrantPacket, shape: GenomeShape) -> Result<()> {
    for m in &packet.chromosomes {
        shape.check(&m.genome)?;
        if !m.fitness.is_finite() || m.fitness < 0.0 {
            return Err(Error::Argument(format!("invalid immigrant fitness {}", m.fitness)));
        }
    }
    Ok(())
}
