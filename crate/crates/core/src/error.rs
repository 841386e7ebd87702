use thiserror::Error;

use crate::exchange::wire::WireError;
use crate::exchange::BoardError;
use crate::jobshop::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("immigrant rejected: {0}")]
    Integration(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
