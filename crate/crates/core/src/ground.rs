//! Kinematic ground agents.
//!
//! Vehicles follow a kinematic bicycle model driven by a pure-pursuit
//! autopilot. Pedestrians walk their scripted path at constant speed. Both
//! step once per render tick and never leave the ground plane.
//!
//! Steering is left-positive. World yaw is right-positive (X turns toward Y),
//! so a positive steering angle decreases yaw.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::frames::PoseUe;
use crate::math::{vec3, wrap_angle, Quat, Vec3};

pub const MAX_STEERING: f64 = 0.6;
/// 5 m/s, the default autopilot cruise speed (cm/s).
pub const CRUISE_SPEED: f64 = 500.0;
pub const DEFAULT_WHEELBASE: f64 = 290.0;
pub const DEFAULT_MAX_SPEED: f64 = 1_500.0;
pub const WAYPOINT_REACHED: f64 = 200.0;
pub const MIN_LOOKAHEAD: f64 = 400.0;

pub const PEDESTRIAN_MAX_SPEED: f64 = 250.0;
pub const PEDESTRIAN_DEFAULT_SPEED: f64 = 140.0;
pub const PATH_POINT_REACHED: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Center of the bounding box (cm).
    pub position: Vec3,
    /// World yaw, radians.
    pub yaw: f64,
    /// cm/s, in [0, max_speed].
    pub speed: f64,
    /// Radians, left-positive, |steering| <= MAX_STEERING.
    pub steering: f64,
    pub wheelbase: f64,
    pub max_speed: f64,
    pub cruise_speed: f64,
    pub autopilot: bool,
    pub route: VecDeque<Vec3>,
}

impl VehicleState {
    pub fn new(pose: &PoseUe) -> Self {
        Self {
            position: pose.position,
            yaw: pose.orientation.yaw(),
            speed: 0.0,
            steering: 0.0,
            wheelbase: DEFAULT_WHEELBASE,
            max_speed: DEFAULT_MAX_SPEED,
            cruise_speed: CRUISE_SPEED,
            autopilot: false,
            route: VecDeque::new(),
        }
    }

    pub fn pose(&self) -> PoseUe {
        PoseUe::new(self.position, Quat::from_yaw(self.yaw))
    }

    /// cm/s in the world frame.
    pub fn velocity(&self) -> Vec3 {
        vec3(self.yaw.cos(), self.yaw.sin(), 0.0) * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveCommand {
    pub steering: f64,
    pub speed: f64,
}

/// One kinematic bicycle update. Applies the clamps on speed and steering.
pub fn step_vehicle(v: &VehicleState, dt: f64) -> VehicleState {
    let mut next = v.clone();
    next.speed = v.speed.clamp(0.0, v.max_speed);
    next.steering = v.steering.clamp(-MAX_STEERING, MAX_STEERING);
    if next.speed == 0.0 {
        return next;
    }
    let dist = next.speed * dt;
    next.position.x += dist * v.yaw.cos();
    next.position.y += dist * v.yaw.sin();
    let yaw_rate = -(next.speed / v.wheelbase) * next.steering.tan();
    next.yaw = wrap_angle(v.yaw + yaw_rate * dt);
    next
}

fn lookahead(speed: f64) -> f64 {
    MIN_LOOKAHEAD.max(0.5 * speed * 1.0)
}

/// Pure-pursuit command toward the route. Pops reached waypoints to the back
/// of the route, so the route loops forever.
pub fn autopilot_step(v: &mut VehicleState) -> SimResult<DriveCommand> {
    if v.route.is_empty() {
        return Err(SimError::RouteExhausted);
    }
    let here = v.position.xy();
    // Bounded so a degenerate route where every point is "reached" terminates.
    for _ in 0..v.route.len() {
        let front = v.route[0].xy();
        if (front - here).norm() >= WAYPOINT_REACHED {
            break;
        }
        v.route.rotate_left(1);
    }

    let ld = lookahead(v.speed);
    let target = v
        .route
        .iter()
        .find(|w| (w.xy() - here).norm() >= ld)
        .or_else(|| v.route.back())
        .copied()
        .ok_or(SimError::RouteExhausted)?;

    let d = target.xy() - here;
    let (s, c) = v.yaw.sin_cos();
    let forward = d.x * c + d.y * s;
    let right = -d.x * s + d.y * c;
    let alpha = (-right).atan2(forward);
    let dist = d.norm().max(1e-9);
    let steering = (2.0 * v.wheelbase * alpha.sin() / dist)
        .atan()
        .clamp(-MAX_STEERING, MAX_STEERING);
    Ok(DriveCommand {
        steering,
        speed: v.max_speed.min(v.cruise_speed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub position: Vec3,
    pub yaw: f64,
    /// cm/s, at most PEDESTRIAN_MAX_SPEED.
    pub speed: f64,
    pub path: VecDeque<Vec3>,
    /// Reached points go to the back of the path instead of being dropped.
    pub wrap: bool,
    /// Last per-tick displacement divided by dt (cm/s).
    pub velocity: Vec3,
}

impl PedestrianState {
    pub fn new(pose: &PoseUe, speed: f64, path: Vec<Vec3>, wrap: bool) -> Self {
        Self {
            position: pose.position,
            yaw: pose.orientation.yaw(),
            speed: speed.clamp(0.0, PEDESTRIAN_MAX_SPEED),
            path: path.into(),
            wrap,
            velocity: Vec3::zeros(),
        }
    }

    pub fn pose(&self) -> PoseUe {
        PoseUe::new(self.position, Quat::from_yaw(self.yaw))
    }
}

fn pop_point(p: &mut PedestrianState) {
    if let Some(pt) = p.path.pop_front() {
        if p.wrap {
            p.path.push_back(pt);
        }
    }
}

fn skip_near_points(p: &mut PedestrianState) {
    for _ in 0..p.path.len() {
        match p.path.front() {
            Some(pt) if (pt.xy() - p.position.xy()).norm() < PATH_POINT_REACHED => pop_point(p),
            _ => break,
        }
    }
}

/// Walks `speed * dt` along the path. Distance left over after reaching a
/// point carries on toward the next one.
pub fn step_pedestrian(p: &PedestrianState, dt: f64) -> PedestrianState {
    let mut next = p.clone();
    next.speed = p.speed.clamp(0.0, PEDESTRIAN_MAX_SPEED);
    let start = next.position;
    // Only a pedestrian standing on a vertex skips near points; one already
    // walking a segment keeps to it so corners are not cut.
    if p.velocity == Vec3::zeros() {
        skip_near_points(&mut next);
    }
    let mut budget = next.speed * dt;
    let mut guard = next.path.len() + 1;
    while budget > 0.0 && guard > 0 {
        let Some(target) = next.path.front().copied() else {
            break;
        };
        let delta = vec3(target.x - next.position.x, target.y - next.position.y, 0.0);
        let dist = delta.norm();
        if dist <= budget {
            next.position.x = target.x;
            next.position.y = target.y;
            budget -= dist;
            pop_point(&mut next);
            skip_near_points(&mut next);
            guard -= 1;
        } else {
            next.position += delta * (budget / dist);
            budget = 0.0;
        }
        if dist > 0.0 {
            next.yaw = delta.y.atan2(delta.x);
        }
    }
    next.velocity = (next.position - start) / dt;
    next
}
