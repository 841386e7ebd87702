//! Newline-delimited JSON messages exchanged between researcher and workers.
//!
//! Every message is one UTF-8 line holding a JSON object whose `"type"` field
//! names the message kind.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ea::{GaConfig, Gene};
use crate::migration::{Migrant, MigrantPacket, MigrationPolicy, TopologyKind};
use crate::IslandId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot decode message {line:?}: {reason}")]
pub struct WireError {
    pub line: String,
    pub reason: String,
}

/// Everything a worker needs to run one island for one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandAssignment {
    pub island_id: IslandId,
    pub n_islands: usize,
    pub topology: TopologyKind,
    pub ga: GaConfig,
    pub policy: MigrationPolicy,
    pub instance_text: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireMessage {
    Register {
        worker_name: String,
    },
    Config(IslandAssignment),
    Post {
        source_island: IslandId,
        epoch: u64,
        chromosomes: Vec<Migrant>,
        /// Explicit destinations; when absent the researcher delivers to every
        /// topology neighbor of the source.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        destinations: Option<Vec<IslandId>>,
    },
    Take {
        island_id: IslandId,
    },
    Packets {
        packets: Vec<MigrantPacket>,
    },
    Stats {
        island_id: IslandId,
        generation: u64,
        best: f64,
        avg: f64,
        dev: f64,
        evaluations: u64,
    },
    Done {
        island_id: IslandId,
        best_genome: Vec<Gene>,
        best_fitness: f64,
        wall_ms: u64,
    },
    /// Successful reply to `POST`.
    Ack,
    /// Sent by the researcher after the last repetition.
    Shutdown,
    Error {
        code: String,
        message: String,
    },
}

impl WireMessage {
    pub fn error(code: impl Into<String>, message: impl Into<String>) -> Self {
        WireMessage::Error { code: code.into(), message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Register { .. } => "REGISTER",
            WireMessage::Config(_) => "CONFIG",
            WireMessage::Post { .. } => "POST",
            WireMessage::Take { .. } => "TAKE",
            WireMessage::Packets { .. } => "PACKETS",
            WireMessage::Stats { .. } => "STATS",
            WireMessage::Done { .. } => "DONE",
            WireMessage::Ack => "ACK",
            WireMessage::Shutdown => "SHUTDOWN",
            WireMessage::Error { .. } => "ERROR",
        }
    }

    pub fn post(packet: &MigrantPacket, destinations: Option<&[IslandId]>) -> Self {
        WireMessage::Post {
            source_island: packet.source_island,
            epoch: packet.epoch,
            chromosomes: packet.chromosomes.clone(),
            destinations: destinations.map(<[IslandId]>::to_vec),
        }
    }
}

/// Encodes `msg` as a single newline-terminated line.
pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    // Non-finite floats have no JSON form; they never occur in valid messages.
    let mut bytes = serde_json::to_vec(msg).expect("wire messages always serialize");
    bytes.push(b'\n');
    bytes
}

/// Decodes one line (with or without its trailing newline).
pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let text = std::str::from_utf8(bytes).map_err(|e| WireError {
        line: String::from_utf8_lossy(bytes).into_owned(),
        reason: e.to_string(),
    })?;
    let line = text.strip_suffix('\n').unwrap_or(text);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.contains('\n') {
        return Err(WireError { line: line.to_owned(), reason: "embedded newline".into() });
    }
    serde_json::from_str(line).map_err(|e| WireError { line: line.to_owned(), reason: e.to_string() })
}

/// A line-framed message channel over a TCP stream.
pub struct Channel {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    buf: Vec<u8>,
}

impl Channel {
    pub fn new(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self { reader: BufReader::new(stream), writer, buf: Vec::new() })
    }

    pub fn send(&mut self, msg: &WireMessage) -> std::io::Result<()> {
        self.writer.write_all(&encode_message(msg))?;
        self.writer.flush()
    }

    /// Next message, `Ok(None)` on a clean end of stream.
    pub fn recv(&mut self) -> crate::Result<Option<WireMessage>> {
        self.buf.clear();
        let n = self.reader.read_until(b'\n', &mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        if self.buf.last() != Some(&b'\n') {
            return Err(WireError {
                line: String::from_utf8_lossy(&self.buf).into_owned(),
                reason: "truncated line".into(),
            }
            .into());
        }
        Ok(Some(decode_message(&self.buf)?))
    }

    pub fn peer_addr(&self) -> std::io::Result<std::net::SocketAddr> {
        self.writer.peer_addr()
    }

    pub fn shutdown(&self) {
        let _ = self.writer.shutdown(std::net::Shutdown::Both);
    }
}
