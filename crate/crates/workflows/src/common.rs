//! Platform observations through the public APIs, and small helpers the
//! workflows share.

use std::time::Instant;

use airground_bench::stats;
use airground_core::frames::{co_register, ue_to_ned_position, CM_PER_M};
use airground_core::math::from_array;
use airground_core::sensors::ue_velocity_to_ned;
use airground_core::{ActorId, OriginOffset, PoseNed, Vec3};
use airground_rpc::{AerialClient, ClientError, ClientResult, GroundClient};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::WorkflowResult;

/// A ground vehicle as the ground API reports it, in the shared NED frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleObs {
    pub id: ActorId,
    pub tick: u64,
    /// Box center, m.
    pub position: Vec3,
    /// m/s.
    pub velocity: Vec3,
    pub yaw: f64,
    /// Half extents, cm, actor frame.
    pub half_extents: Vec3,
}

impl VehicleObs {
    /// Roof center, shared NED.
    pub fn roof(&self) -> Vec3 {
        self.position - Vec3::new(0.0, 0.0, self.half_extents.z / CM_PER_M)
    }
}

/// A multirotor as the aerial API reports it.
#[derive(Debug, Clone, PartialEq)]
pub struct DroneObs {
    pub id: ActorId,
    pub tick: u64,
    /// In the drone's own NED frame.
    pub local: PoseNed,
    pub velocity: Vec3,
    pub offset: OriginOffset,
    pub saturated: bool,
}

impl DroneObs {
    pub fn shared_position(&self) -> Vec3 {
        co_register(&self.local.position, &self.offset)
    }
}

/// Height above the z = 0 ground plane of a shared NED point, m.
pub fn altitude_m(shared: &Vec3, origin_cm: &Vec3) -> f64 {
    origin_cm.z / CM_PER_M - shared.z
}

/// Shared NED z of a height above the ground plane.
pub fn ned_z_of_altitude(alt_m: f64, origin_cm: &Vec3) -> f64 {
    origin_cm.z / CM_PER_M - alt_m
}

pub fn world_origin(ground: &mut GroundClient) -> ClientResult<Vec3> {
    Ok(from_array(ground.world_snapshot()?.world_origin))
}

pub fn observe_vehicle(ground: &mut GroundClient, id: ActorId, origin: &Vec3) -> WorkflowResult<VehicleObs> {
    let t = ground.actor_transform(id)?;
    Ok(VehicleObs {
        id,
        tick: t.tick,
        position: ue_to_ned_position(&from_array(t.location), origin)?,
        velocity: ue_velocity_to_ned(&from_array(t.velocity)),
        yaw: t.rotation.yaw(),
        half_extents: from_array(t.bbox),
    })
}

pub fn observe_drone(aerial: &mut AerialClient, id: ActorId) -> ClientResult<DroneObs> {
    let r = aerial.multirotor_state(Some(id))?;
    Ok(DroneObs {
        id: r.id,
        tick: r.tick,
        local: r.state.pose_ned,
        velocity: r.state.velocity_ned,
        offset: r.offset,
        saturated: r.state.saturated,
    })
}

/// Scales `v` down to magnitude `limit` if it is longer.
pub fn clamp_speed(v: Vec3, limit: f64) -> Vec3 {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}

pub fn decode<T: DeserializeOwned>(r: ClientResult<Value>) -> ClientResult<T> {
    serde_json::from_value(r?).map_err(|e| ClientError::Decode(e.to_string()))
}

/// The first error among a step's command results.
pub fn all_ok(results: Vec<ClientResult<Value>>) -> ClientResult<Vec<Value>> {
    results.into_iter().collect()
}

/// Per-tick wall-clock rates for a harmonic-mean frame rate.
#[derive(Debug, Default)]
pub struct RateMeter {
    rates: Vec<f64>,
}

impl RateMeter {
    pub fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        let s = t0.elapsed().as_secs_f64();
        if s > 0.0 {
            self.rates.push(1.0 / s);
        }
        out
    }

    pub fn harmonic_fps(&self) -> Option<f64> {
        stats::harmonic_mean(&self.rates).ok().map(|h| h.harmonic_mean)
    }
}
