//! Air-ground co-simulation kernel.
//!
//! One [`WorldState`] owns every actor. Ground vehicles and pedestrians step
//! once per render tick; multirotors integrate a fixed number of physics
//! substeps inside the same tick; every attached sensor is captured from the
//! resulting state before the tick is published.

pub mod aerial;
pub mod error;
pub mod frames;
pub mod ground;
pub mod map;
pub mod math;
pub mod sensors;
pub mod weather;
pub mod world;

pub use error::{SimError, SimResult};
pub use frames::{OriginOffset, PoseNed, PoseUe};
pub use math::{Quat, Vec3};
pub use weather::WeatherPreset;
pub use world::{
    Actor, ActorId, ActorKind, Command, CommandOutput, SpawnParams, WorldConfig, WorldSnapshot,
    WorldState,
};
