//! Coarse-grained (island model) genetic algorithms.
//!
//! Each island evolves its own population with a generational GA; islands
//! exchange copies of chromosomes through a migration [`exchange::Board`]
//! according to a [`migration::MigrationPolicy`] and a [`migration::Topology`].
//! Islands can run in one process ([`roles::local_run`]) or as networked
//! workers under a researcher that hosts the board ([`roles::researcher`],
//! [`roles::worker`]).
//!
//! The bundled workload is job-shop scheduling with makespan minimization
//! ([`jobshop`]).

pub mod bench;
pub mod ea;
pub mod error;
pub mod exchange;
pub mod jobshop;
pub mod migration;
pub mod roles;

pub use error::{Error, Result};

/// Random number generator used by every island. A fixed algorithm keeps
/// seeded runs reproducible across platforms and crate upgrades.
pub type IslandRng = rand_chacha::ChaCha8Rng;

/// Creates an island generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> IslandRng {
    use rand::SeedableRng;
    IslandRng::seed_from_u64(seed)
}

/// Identifier of an island within a run, `0..n_islands`.
pub type IslandId = usize;
