//! Cross-domain workflows driven entirely through the ground and aerial
//! RPC APIs: cooperative landing, multi-modal dataset capture, cross-view
//! consistency checks, and a cooperative RL environment.

use std::path::Path;

use airground_core::SimError;
use airground_rpc::ClientError;
use serde::Serialize;
use thiserror::Error;

pub mod common;
pub mod crossview;
pub mod dataset;
pub mod landing;
pub mod rl;

pub use crossview::{cross_view_check, CrossViewConfig, CrossViewReport, WeatherCheck};
pub use dataset::{collect_dataset, DatasetConfig, DatasetManifest};
pub use landing::{descent_profile, landing_step, run_landing, LandingConfig, LandingPhase, LandingReport};
pub use rl::{rl_soak, tracking_action, CoopEnv, Observation, RlConfig, SoakReport, StepResult};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Rpc(#[from] ClientError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("episode is over; call reset")]
    EpisodeDone,
    #[error("no episode; call reset")]
    NoEpisode,
}

pub type WorkflowResult<T> = Result<T, WorkflowError>;

/// Pretty JSON, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> WorkflowResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, bytes)?;
    Ok(())
}
