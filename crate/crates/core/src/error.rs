use std::path::PathBuf;

use thiserror::Error;

use crate::sensors::SensorId;
use crate::world::ActorId;

pub type SimResult<T> = Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("map not found: {0}")]
    MapNotFound(String),
    #[error("actor not found: {0}")]
    ActorNotFound(ActorId),
    #[error("sensor not found: {0}")]
    SensorNotFound(SensorId),
    #[error("spawn location overlaps actor {0}")]
    SpawnCollision(ActorId),
    #[error("spawn location overlaps map obstacle {0}")]
    SpawnBlocked(usize),
    #[error("weather preset not found: {0}")]
    WeatherNotFound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("api control is not enabled for actor {0}")]
    ControlNotEnabled(ActorId),
    #[error("velocity command magnitude {magnitude} exceeds limit {limit}")]
    CommandOutOfRange { magnitude: f64, limit: f64 },
    #[error("route exhausted")]
    RouteExhausted,
    #[error("actor {0} is not a {1}")]
    WrongKind(ActorId, &'static str),
    #[error("failed to write {path}: {source}")]
    WriteError {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SimError::InvalidInput(msg.into())
    }
}
