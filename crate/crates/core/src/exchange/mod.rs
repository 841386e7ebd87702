//! The migration board: a tuple-space-like store where islands post migrant
//! packets for named destinations and take the packets addressed to them.
//!
//! [`MemoryBoard`] serves islands inside one process and, hosted by the
//! researcher, networked workers. [`remote::RemoteBoard`] is the worker-side
//! client speaking the [`wire`] protocol. Both implement [`Board`].

pub mod remote;
pub mod wire;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::migration::{MigrantPacket, Topology};
use crate::IslandId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoardError {
    #[error("unknown island {island} (run has {n_islands} islands)")]
    UnknownIsland { island: IslandId, n_islands: usize },
    #[error("island {destination} is not a neighbor of island {sender}")]
    NotNeighbor { sender: IslandId, destination: IslandId },
    #[error("island {0} is not registered with the board")]
    Unregistered(IslandId),
    #[error("board is shut down")]
    Closed,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("remote error {code}: {message}")]
    Remote { code: String, message: String },
}

impl BoardError {
    /// Stable code carried in wire `ERROR` messages.
    pub fn code(&self) -> &str {
        match self {
            BoardError::UnknownIsland { .. } => "unknown_island",
            BoardError::NotNeighbor { .. } => "not_neighbor",
            BoardError::Unregistered(_) => "unregistered",
            BoardError::Closed => "closed",
            BoardError::Transport(_) => "transport",
            BoardError::Remote { code, .. } => code,
        }
    }
}

/// Post/take contract shared by every board.
///
/// A posted packet is delivered to each named destination exactly once,
/// `take` only returns packets addressed to the caller, and packets from one
/// source arrive at a destination in posting order. `take` never blocks
/// waiting for packets.
pub trait Board: Send + Sync {
    fn post(&self, packet: &MigrantPacket, destinations: &[IslandId]) -> Result<(), BoardError>;

    fn take(&self, island: IslandId) -> Result<Vec<MigrantPacket>, BoardError>;
}

#[derive(Debug, Default)]
struct Queue {
    registered: bool,
    packets: VecDeque<MigrantPacket>,
}

/// In-process board with one FIFO queue per island.
#[derive(Debug)]
pub struct MemoryBoard {
    topology: Option<Topology>,
    queues: Vec<Mutex<Queue>>,
    closed: AtomicBool,
}

impl MemoryBoard {
    /// A board for `n_islands` islands, none registered yet, that accepts any
    /// in-range destination.
    pub fn new(n_islands: usize) -> Self {
        Self {
            topology: None,
            queues: (0..n_islands).map(|_| Mutex::default()).collect(),
            closed: AtomicBool::new(false),
        }
    }

    /// A board that also rejects posts to islands that are not topology
    /// neighbors of the packet source.
    pub fn with_topology(topology: Topology) -> Self {
        Self { topology: Some(topology), ..Self::new(topology.n_islands) }
    }

    /// Registers every island.
    pub fn open_all(self) -> Self {
        for q in &self.queues {
            q.lock().expect("board queue poisoned").registered = true;
        }
        self
    }

    pub fn n_islands(&self) -> usize {
        self.queues.len()
    }

    pub fn topology(&self) -> Option<&Topology> {
        self.topology.as_ref()
    }

    pub fn register(&self, island: IslandId) -> Result<(), BoardError> {
        self.queue(island)?.lock().expect("board queue poisoned").registered = true;
        Ok(())
    }

    /// Rejects every further post and take.
    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }

    /// Packets still queued for `island`, without removing them.
    pub fn pending(&self, island: IslandId) -> Result<usize, BoardError> {
        Ok(self.queue(island)?.lock().expect("board queue poisoned").packets.len())
    }

    /// Drops everything still queued; returns how many packets were dropped.
    pub fn drain_undelivered(&self) -> usize {
        self.queues
            .iter()
            .map(|q| std::mem::take(&mut q.lock().expect("board queue poisoned").packets).len())
            .sum()
    }

    fn queue(&self, island: IslandId) -> Result<&Mutex<Queue>, BoardError> {
        self.queues.get(island).ok_or(BoardError::UnknownIsland { island, n_islands: self.queues.len() })
    }

    fn check_open(&self) -> Result<(), BoardError> {
        if self.closed.load(Ordering::SeqCst) {
            Err(BoardError::Closed)
        } else {
            Ok(())
        }
    }
}

impl Board for MemoryBoard {
    fn post(&self, packet: &MigrantPacket, destinations: &[IslandId]) -> Result<(), BoardError> {
        self.check_open()?;
        let mut targets = destinations.to_vec();
        targets.sort_unstable();
        targets.dedup();
        for &destination in &targets {
            self.queue(destination)?;
            if let Some(topology) = &self.topology {
                if !topology.allows(packet.source_island, destination) {
                    return Err(BoardError::NotNeighbor { sender: packet.source_island, destination });
                }
            }
        }
        for destination in targets {
            self.queues[destination].lock().expect("board queue poisoned").packets.push_back(packet.clone());
        }
        Ok(())
    }

    fn take(&self, island: IslandId) -> Result<Vec<MigrantPacket>, BoardError> {
        self.check_open()?;
        let mut queue = self.queue(island)?.lock().expect("board queue poisoned");
        if !queue.registered {
            return Err(BoardError::Unregistered(island));
        }
        Ok(queue.packets.drain(..).collect())
    }
}

impl<B: Board + ?Sized> Board for std::sync::Arc<B> {
    fn post(&self, packet: &MigrantPacket, destinations: &[IslandId]) -> Result<(), BoardError> {
        (**self).post(packet, destinations)
    }

    fn take(&self, island: IslandId) -> Result<Vec<MigrantPacket>, BoardError> {
        (**self).take(island)
    }
}

impl<B: Board + ?Sized> Board for &B {
    fn post(&self, packet: &MigrantPacket, destinations: &[IslandId]) -> Result<(), BoardError> {
        (**self).post(packet, destinations)
    }

    fn take(&self, island: IslandId) -> Result<Vec<MigrantPacket>, BoardError> {
        (**self).take(island)
    }
}
