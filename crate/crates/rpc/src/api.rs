//! Parameter and result shapes of the ground and aerial methods.

use airground_core::math::{from_array, to_array};
use airground_core::sensors::{Modality, SensorId, SensorRequest};
use airground_core::world::MultirotorReport;
use airground_core::{ActorId, ActorKind, PoseUe, Quat, SimResult, SpawnParams, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Api {
    Ground,
    Aerial,
}

impl Api {
    pub fn as_str(&self) -> &'static str {
        match self {
            Api::Ground => "ground",
            Api::Aerial => "aerial",
        }
    }
}

pub const GROUND_METHODS: &[&str] = &[
    "world_snapshot",
    "actor_transform",
    "spawn_actor",
    "destroy_actor",
    "set_autopilot",
    "set_weather",
    "tick",
    "set_synchronous_mode",
    "attach_sensor",
    "detach_sensor",
    "sensor_data",
    "start_recording",
    "stop_recording",
    "ping",
];

pub const AERIAL_METHODS: &[&str] = &[
    "multirotor_state",
    "capture_image",
    "set_velocity",
    "enable_api_control",
    "takeoff_to",
    "attach_sensor",
    "detach_sensor",
    "sensor_data",
    "ping",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorIdParam {
    pub id: ActorId,
}

/// Either an explicit pose or `random: true` for a free road waypoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpawnRequest {
    pub kind: Option<ActorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Quat>,
    #[serde(default)]
    pub random: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default)]
    pub wrap: bool,
}

impl SpawnRequest {
    pub fn at(kind: ActorKind, location: Vec3) -> Self {
        Self {
            kind: Some(kind),
            location: Some(to_array(&location)),
            ..Default::default()
        }
    }

    pub fn random(kind: ActorKind) -> Self {
        Self {
            kind: Some(kind),
            random: true,
            ..Default::default()
        }
    }

    pub fn pose(&self) -> Option<PoseUe> {
        self.location.map(|l| {
            PoseUe::new(from_array(l), self.rotation.unwrap_or(Quat::IDENTITY))
        })
    }

    pub fn params(&self) -> SpawnParams {
        SpawnParams {
            bbox: self.bbox.map(from_array),
            path: self.path.iter().copied().map(from_array).collect(),
            speed: self.speed,
            wrap: self.wrap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spawned {
    pub id: ActorId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTransform {
    pub id: ActorId,
    pub kind: ActorKind,
    pub tick: u64,
    /// cm, world frame.
    pub location: [f64; 3],
    pub rotation: Quat,
    /// cm/s, world frame.
    pub velocity: [f64; 3],
    pub bbox: [f64; 3],
}

impl ActorTransform {
    pub fn pose(&self) -> PoseUe {
        PoseUe::new(from_array(self.location), self.rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutopilotParams {
    pub id: ActorId,
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cruise_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherParams {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickInfo {
    pub tick: u64,
    pub sim_time: f64,
    /// Time spent writing this tick's record, when recording.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncParams {
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachParams {
    pub parent: ActorId,
    pub modality: Modality,
    #[serde(default)]
    pub width: u32,
    #[serde(default)]
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mount: Option<PoseUe>,
}

impl AttachParams {
    pub fn request(&self, default_mount: PoseUe) -> SensorRequest {
        SensorRequest {
            parent: self.parent,
            modality: self.modality,
            width: self.width,
            height: self.height,
            mount: self.mount.unwrap_or(default_mount),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorIdParam {
    pub id: SensorId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorAttached {
    pub id: SensorId,
}

/// One sensor payload: `data` is base64 of the stream encoding
/// (16-byte header plus little-endian elements).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPayload {
    pub tick: u64,
    pub modality: Modality,
    pub dtype: String,
    pub width: u32,
    pub height: u32,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingParams {
    pub dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroneParam {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone: Option<ActorId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone: Option<ActorId>,
    /// m/s, the drone's NED frame.
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApiControlParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone: Option<ActorId>,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TakeoffParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone: Option<ActorId>,
    /// m above the drone's spawn point.
    pub altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone: Option<ActorId>,
    pub modality: Modality,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mount: Option<PoseUe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pong {
    pub tick: u64,
}

pub type MultirotorStateReply = MultirotorReport;

/// Decodes a base64 sensor payload back to its header fields and element
/// bytes.
pub fn decode_payload(p: &SensorPayload) -> SimResult<(u32, u32, Vec<u8>)> {
    use base64::Engine;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(&p.data)
        .map_err(|e| airground_core::SimError::InvalidInput(format!("bad base64: {e}")))?;
    let (w, h, data) = airground_core::sensors::decode_stream(&bytes)?;
    Ok((w, h, data.to_vec()))
}
