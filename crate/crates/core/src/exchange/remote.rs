//! Board access over TCP: the worker-side client and the request handler the
//! researcher uses to serve a [`MemoryBoard`].

use std::net::{TcpListener, ToSocketAddrs};
use std::sync::Mutex;
use std::thread;

use super::wire::{Channel, WireMessage};
use super::{Board, BoardError, MemoryBoard};
use crate::migration::{neighbors, MigrantPacket};
use crate::IslandId;

/// A board reached through a researcher connection.
pub struct RemoteBoard {
    channel: Mutex<Channel>,
}

impl RemoteBoard {
    pub fn new(channel: Channel) -> Self {
        Self { channel: Mutex::new(channel) }
    }

    pub fn connect(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        let stream = std::net::TcpStream::connect(addr)?;
        Ok(Self::new(Channel::new(stream)?))
    }

    /// Sends a message that expects no reply.
    pub fn send(&self, msg: &WireMessage) -> Result<(), BoardError> {
        self.lock().send(msg).map_err(|e| BoardError::Transport(e.to_string()))
    }

    /// Sends a message and waits for its reply.
    pub fn request(&self, msg: &WireMessage) -> Result<WireMessage, BoardError> {
        let mut channel = self.lock();
        channel.send(msg).map_err(|e| BoardError::Transport(e.to_string()))?;
        match channel.recv() {
            Ok(Some(WireMessage::Error { code, message })) => Err(BoardError::Remote { code, message }),
            Ok(Some(reply)) => Ok(reply),
            Ok(None) => Err(BoardError::Transport("connection closed by peer".into())),
            Err(e) => Err(BoardError::Transport(e.to_string())),
        }
    }

    /// Waits for the next unsolicited message.
    pub fn recv(&self) -> Result<Option<WireMessage>, BoardError> {
        self.lock().recv().map_err(|e| BoardError::Transport(e.to_string()))
    }

    pub fn into_channel(self) -> Channel {
        self.channel.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Channel> {
        self.channel.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Board for RemoteBoard {
    fn post(&self, packet: &MigrantPacket, destinations: &[IslandId]) -> Result<(), BoardError> {
        match self.request(&WireMessage::post(packet, Some(destinations)))? {
            WireMessage::Ack => Ok(()),
            other => Err(BoardError::Transport(format!("expected ACK, got {}", other.kind()))),
        }
    }

    fn take(&self, island: IslandId) -> Result<Vec<MigrantPacket>, BoardError> {
        match self.request(&WireMessage::Take { island_id: island })? {
            WireMessage::Packets { packets } => Ok(packets),
            other => Err(BoardError::Transport(format!("expected PACKETS, got {}", other.kind()))),
        }
    }
}

fn board_error(e: &BoardError) -> WireMessage {
    WireMessage::error(e.code(), e.to_string())
}

/// Applies a `POST` or `TAKE` to `board` and returns the reply.
///
/// `caller` is the island bound to the connection, if any; a bound caller may
/// only post as itself and take its own packets. Returns `None` for messages
/// that are not board requests.
pub fn handle_board_request(
    board: &MemoryBoard,
    msg: &WireMessage,
    caller: Option<IslandId>,
) -> Option<WireMessage> {
    match msg {
        WireMessage::Post { source_island, epoch, chromosomes, destinations } => {
            if caller.is_some_and(|c| c != *source_island) {
                return Some(WireMessage::error(
                    "source_mismatch",
                    format!("connection is island {} but posted as {source_island}", caller.unwrap_or_default()),
                ));
            }
            let packet = MigrantPacket { source_island: *source_island, epoch: *epoch, chromosomes: chromosomes.clone() };
            if packet.chromosomes.is_empty() {
                return Some(WireMessage::error("empty_packet", "a packet needs at least one chromosome"));
            }
            let targets = match destinations {
                Some(d) => d.clone(),
                None => match board.topology() {
                    Some(t) => match neighbors(t, *source_island) {
                        Ok(n) => n,
                        Err(_) => {
                            return Some(board_error(&BoardError::UnknownIsland {
                                island: *source_island,
                                n_islands: board.n_islands(),
                            }))
                        }
                    },
                    None => (0..board.n_islands()).filter(|i| i != source_island).collect(),
                },
            };
            Some(match board.post(&packet, &targets) {
                Ok(()) => WireMessage::Ack,
                Err(e) => board_error(&e),
            })
        }
        WireMessage::Take { island_id } => {
            if caller.is_some_and(|c| c != *island_id) {
                return Some(WireMessage::error(
                    "island_mismatch",
                    format!("connection is island {} but took for {island_id}", caller.unwrap_or_default()),
                ));
            }
            Some(match board.take(*island_id) {
                Ok(packets) => WireMessage::Packets { packets },
                Err(e) => board_error(&e),
            })
        }
        _ => None,
    }
}

/// Serves `board` to every connection on `listener` until the listener
/// fails. Connections are not bound to an island. Each connection gets its
/// own thread; non-board messages are answered with `ERROR`.
pub fn serve_board(listener: TcpListener, board: std::sync::Arc<MemoryBoard>) {
    for stream in listener.incoming() {
        let Ok(stream) = stream else { break };
        let board = board.clone();
        thread::spawn(move || {
            let Ok(mut channel) = Channel::new(stream) else { return };
            loop {
                let reply = match channel.recv() {
                    Ok(Some(msg)) => handle_board_request(&board, &msg, None).unwrap_or_else(|| {
                        WireMessage::error("unexpected", format!("{} is not a board request", msg.kind()))
                    }),
                    Ok(None) => return,
                    Err(e) => WireMessage::error("bad_message", e.to_string()),
                };
                if channel.send(&reply).is_err() {
                    return;
                }
            }
        });
    }
}
