//! Synthetic sensors captured at tick boundaries.
//!
//! Image modalities cast one ray per pixel through a 90 degree pinhole
//! camera against the ground plane and every actor's oriented bounding box.
//! IMU and GNSS are ideal (noise-free).

mod record;
mod render;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::frames::PoseUe;
use crate::math::{vec3, wrap_angle, Quat, Vec3};
use crate::world::ActorId;

pub use record::{
    alignment_deviation, read_meta, record_dir_name, write_record, PlatformMeta, PlatformPose,
    RecordMeta, StreamMeta, StreamSample, TickRecord,
};
pub use render::{
    cast_ray, render_depth, render_lidar, render_rgb_proxy, render_semantic, shading, Camera,
    Hit, Scene, SceneBox, ALBEDO, HFOV, LIDAR_MAX_RANGE, LIDAR_RAYS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensorId(pub u64);

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    RgbProxy,
    Depth,
    Semantic,
    LidarProxy,
    Imu,
    Gnss,
}

impl Modality {
    pub fn parse(s: &str) -> SimResult<Self> {
        Ok(match s {
            "rgb_proxy" | "rgb" => Modality::RgbProxy,
            "depth" => Modality::Depth,
            "semantic" => Modality::Semantic,
            "lidar_proxy" | "lidar" => Modality::LidarProxy,
            "imu" => Modality::Imu,
            "gnss" => Modality::Gnss,
            other => return Err(SimError::invalid(format!("unknown modality {other}"))),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::RgbProxy => "rgb_proxy",
            Modality::Depth => "depth",
            Modality::Semantic => "semantic",
            Modality::LidarProxy => "lidar_proxy",
            Modality::Imu => "imu",
            Modality::Gnss => "gnss",
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, Modality::RgbProxy | Modality::Depth | Modality::Semantic)
    }
}

/// Semantic class ids written by the segmentation camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    Sky = 0,
    Ground = 1,
    Vehicle = 2,
    Pedestrian = 3,
    Drone = 4,
    Static = 5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub id: SensorId,
    pub parent: ActorId,
    pub modality: Modality,
    pub width: u32,
    pub height: u32,
    /// Relative to the parent actor's pose.
    pub mount: PoseUe,
}

/// Attachment request; the world assigns the id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRequest {
    pub parent: ActorId,
    pub modality: Modality,
    pub width: u32,
    pub height: u32,
    pub mount: PoseUe,
}

impl SensorRequest {
    pub fn validate(&self) -> SimResult<()> {
        if self.modality.is_image() && (self.width == 0 || self.height == 0) {
            return Err(SimError::invalid("image resolution must be positive"));
        }
        self.mount.validate()
    }
}

/// Standard mount orientations.
pub mod mount {
    use super::*;

    /// Camera X axis pointing straight down; image up is the parent's forward.
    pub fn down(offset: Vec3) -> PoseUe {
        PoseUe::new(offset, Quat::from_axis_angle(Vec3::y(), std::f64::consts::FRAC_PI_2))
    }

    pub fn forward(offset: Vec3) -> PoseUe {
        PoseUe::new(offset, Quat::IDENTITY)
    }

    pub fn yawed(offset: Vec3, yaw: f64) -> PoseUe {
        PoseUe::new(offset, Quat::from_yaw(yaw))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: u32,
    pub height: u32,
    pub data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn get(&self, col: u32, row: u32) -> T {
        self.data[(row * self.width + col) as usize]
    }
}

impl Grid<u8> {
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn histogram(&self) -> [usize; 256] {
        let mut h = [0usize; 256];
        for &v in &self.data {
            h[v as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    /// m/s^2, NED axes.
    pub specific_force: Vec3,
    /// rad/s about NED axes.
    pub angular_rate: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssReading {
    /// Local tangent plane, shared NED frame (m).
    pub position: Vec3,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Depth(Grid<f32>),
    Semantic(Grid<u8>),
    Rgb(Grid<u8>),
    Lidar(Grid<f32>),
    Imu(ImuReading),
    Gnss(GnssReading),
}

pub const STREAM_MAGIC: &[u8; 4] = b"AGSR";
pub const STREAM_VERSION: u32 = 1;
pub const STREAM_HEADER_LEN: usize = 16;

impl Payload {
    pub fn dims(&self) -> (u32, u32) {
        match self {
            Payload::Depth(g) | Payload::Lidar(g) => (g.width, g.height),
            Payload::Semantic(g) | Payload::Rgb(g) => (g.width, g.height),
            Payload::Imu(_) => (6, 1),
            Payload::Gnss(_) => (3, 1),
        }
    }

    pub fn dtype(&self) -> &'static str {
        match self {
            Payload::Depth(_) | Payload::Lidar(_) => "f32",
            Payload::Semantic(_) | Payload::Rgb(_) => "u8",
            Payload::Imu(_) | Payload::Gnss(_) => "f64",
        }
    }

    /// Little-endian element bytes without the header.
    pub fn data_bytes(&self) -> Vec<u8> {
        match self {
            Payload::Depth(g) | Payload::Lidar(g) => {
                g.data.iter().flat_map(|v| v.to_le_bytes()).collect()
            }
            Payload::Semantic(g) | Payload::Rgb(g) => g.data.clone(),
            Payload::Imu(r) => [r.specific_force, r.angular_rate]
                .iter()
                .flat_map(|v| v.iter().copied())
                .flat_map(f64::to_le_bytes)
                .collect(),
            Payload::Gnss(r) => r.position.iter().copied().flat_map(f64::to_le_bytes).collect(),
        }
    }

    /// Header (`AGSR`, version, width, height as u32 LE) followed by data.
    pub fn encode(&self) -> Vec<u8> {
        let (w, h) = self.dims();
        let data = self.data_bytes();
        let mut out = Vec::with_capacity(STREAM_HEADER_LEN + data.len());
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
        out.extend_from_slice(&h.to_le_bytes());
        out.extend_from_slice(&data);
        out
    }
}

/// Parsed stream header plus a view of the element bytes.
pub fn decode_stream(bytes: &[u8]) -> SimResult<(u32, u32, &[u8])> {
    if bytes.len() < STREAM_HEADER_LEN || &bytes[..4] != STREAM_MAGIC {
        return Err(SimError::invalid("not an AGSR stream"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != STREAM_VERSION {
        return Err(SimError::invalid(format!("unsupported stream version {}", word(4))));
    }
    Ok((word(8), word(12), &bytes[STREAM_HEADER_LEN..]))
}

pub fn decode_f32(data: &[u8]) -> Vec<f32> {
    data.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn decode_f64(data: &[u8]) -> Vec<f64> {
    data.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// World-frame (cm/s) velocity as NED m/s.
pub fn ue_velocity_to_ned(v: &Vec3) -> Vec3 {
    vec3(v.x / 100.0, v.y / 100.0, -v.z / 100.0)
}

/// Ideal IMU: finite difference of the last two tick-boundary velocities
/// minus gravity, both in NED.
pub fn sample_imu(
    velocity_ned: &Vec3,
    prev_velocity_ned: &Vec3,
    yaw: f64,
    prev_yaw: f64,
    dt: f64,
    gravity: f64,
) -> ImuReading {
    let accel = (velocity_ned - prev_velocity_ned) / dt;
    ImuReading {
        specific_force: accel - vec3(0.0, 0.0, gravity),
        // World yaw is right-positive, matching rotation about NED down.
        angular_rate: vec3(0.0, 0.0, wrap_angle(yaw - prev_yaw) / dt),
    }
}

pub fn sample_gnss(position_shared_ned: Vec3, tick: u64) -> GnssReading {
    GnssReading {
        position: position_shared_ned,
        tick,
    }
}

/// Payload handle shared between the record and the published snapshot.
pub type SharedPayload = Arc<Payload>;
