//! Point-mass multirotor with a per-axis velocity PID.
//!
//! Thrust is abstracted as hover-compensated: gravity never enters the
//! integration, so a zero velocity command holds position. Each render tick
//! runs an integer number of fixed physics substeps (semi-implicit Euler:
//! velocity first, then position).

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::frames::PoseNed;
use crate::math::{is_finite, Vec3};
use crate::world::ActorId;

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_V_MAX: f64 = 10.0;
/// States beyond `v_max * SATURATION_FACTOR` are clamped.
pub const SATURATION_FACTOR: f64 = 1.5;
pub const DEFAULT_DRAG: f64 = 0.05;
pub const DEFAULT_MASS: f64 = 1.0;

const TAKEOFF_GAIN: f64 = 1.0;
const TAKEOFF_MAX_RATE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 2.0,
            ki: 0.1,
            kd: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    pub dt_phys: f64,
    /// m/s^2, along +Z NED.
    pub gravity: f64,
    pub gains: PidGains,
    pub v_max: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            dt_phys: 0.001,
            gravity: GRAVITY,
            gains: PidGains::default(),
            v_max: DEFAULT_V_MAX,
        }
    }
}

/// Number of substeps per render tick; the ratio must be integral.
pub fn substeps_per_tick(dt_render: f64, dt_phys: f64) -> SimResult<u32> {
    if !(dt_render > 0.0 && dt_phys > 0.0) || !dt_render.is_finite() || !dt_phys.is_finite() {
        return Err(SimError::ConfigError(format!(
            "time steps must be positive (dt_render={dt_render}, dt_phys={dt_phys})"
        )));
    }
    let ratio = dt_render / dt_phys;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
        return Err(SimError::ConfigError(format!(
            "dt_render {dt_render} is not an integer multiple of dt_phys {dt_phys}"
        )));
    }
    Ok(n as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    /// Pose in the multirotor's own NED frame (origin at its spawn point).
    pub pose_ned: PoseNed,
    pub velocity_ned: Vec3,
    pub commanded_velocity: Vec3,
    pub mass: f64,
    pub drag_coeff: f64,
    pub api_control_enabled: bool,
    /// Set when any substep of the last batch hit the velocity clamp.
    pub saturated: bool,
    /// Local NED z of the ground; the drone cannot sink below it.
    pub floor_z: f64,
    /// Altitude hold target (local NED z) set by a takeoff request.
    pub hold_z: Option<f64>,
    integral: Vec3,
    prev_velocity: Vec3,
    pub substeps: u64,
}

impl DroneState {
    pub fn new(pose_ned: PoseNed, floor_z: f64) -> Self {
        Self {
            pose_ned,
            velocity_ned: Vec3::zeros(),
            commanded_velocity: Vec3::zeros(),
            mass: DEFAULT_MASS,
            drag_coeff: DEFAULT_DRAG,
            api_control_enabled: false,
            saturated: false,
            floor_z,
            hold_z: None,
            integral: Vec3::zeros(),
            prev_velocity: Vec3::zeros(),
            substeps: 0,
        }
    }
}

/// One physics substep.
pub fn physics_substep(d: &DroneState, cfg: &PhysicsConfig) -> DroneState {
    let dt = cfg.dt_phys;
    let g = cfg.gains;
    let mut next = d.clone();

    let mut command = d.commanded_velocity;
    if let Some(z) = d.hold_z {
        command.z = (TAKEOFF_GAIN * (z - d.pose_ned.position.z))
            .clamp(-TAKEOFF_MAX_RATE, TAKEOFF_MAX_RATE);
    }

    let error = command - d.velocity_ned;
    next.integral = d.integral + error * dt;
    // Derivative on measurement: no kick when the command steps.
    let measured_rate = (d.velocity_ned - d.prev_velocity) / dt;
    let accel = error * g.kp + next.integral * g.ki - measured_rate * g.kd
        - d.velocity_ned * d.drag_coeff;

    next.prev_velocity = d.velocity_ned;
    next.velocity_ned = d.velocity_ned + accel * dt;

    let limit = cfg.v_max * SATURATION_FACTOR;
    let speed = next.velocity_ned.norm();
    next.saturated = speed > limit;
    if next.saturated {
        next.velocity_ned *= limit / speed;
    }

    next.pose_ned.position = d.pose_ned.position + next.velocity_ned * dt;
    if next.pose_ned.position.z > d.floor_z {
        next.pose_ned.position.z = d.floor_z;
        if next.velocity_ned.z > 0.0 {
            next.velocity_ned.z = 0.0;
        }
        next.integral.z = next.integral.z.min(0.0);
    }
    next.substeps = d.substeps + 1;
    next
}

/// Runs exactly `substeps` physics steps; see [`substeps_per_tick`].
pub fn integrate_over_tick(d: &DroneState, cfg: &PhysicsConfig, substeps: u32) -> DroneState {
    let mut s = d.clone();
    let mut saturated = false;
    for _ in 0..substeps {
        s = physics_substep(&s, cfg);
        saturated |= s.saturated;
    }
    s.saturated = saturated;
    s
}

pub fn enable_api_control(d: &mut DroneState, enabled: bool) {
    d.api_control_enabled = enabled;
    if !enabled {
        d.commanded_velocity = Vec3::zeros();
        d.hold_z = None;
    }
}

pub fn set_velocity_command(
    id: ActorId,
    d: &mut DroneState,
    v_cmd: Vec3,
    cfg: &PhysicsConfig,
) -> SimResult<()> {
    if !d.api_control_enabled {
        return Err(SimError::ControlNotEnabled(id));
    }
    if !is_finite(&v_cmd) {
        return Err(SimError::invalid("velocity command is not finite"));
    }
    let magnitude = v_cmd.norm();
    if magnitude > cfg.v_max {
        return Err(SimError::CommandOutOfRange {
            magnitude,
            limit: cfg.v_max,
        });
    }
    d.commanded_velocity = v_cmd;
    d.hold_z = None;
    Ok(())
}

/// Climbs (or descends) to `altitude` meters above the spawn point and holds.
pub fn takeoff_to(id: ActorId, d: &mut DroneState, altitude: f64) -> SimResult<()> {
    if !d.api_control_enabled {
        return Err(SimError::ControlNotEnabled(id));
    }
    if !altitude.is_finite() {
        return Err(SimError::invalid("altitude is not finite"));
    }
    d.commanded_velocity = Vec3::zeros();
    d.hold_z = Some(-altitude);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultirotorState {
    pub pose_ned: PoseNed,
    pub velocity_ned: Vec3,
    pub commanded_velocity: Vec3,
    pub saturated: bool,
    pub api_control_enabled: bool,
}

pub fn multirotor_state(d: &DroneState) -> MultirotorState {
    MultirotorState {
        pose_ned: d.pose_ned,
        velocity_ned: d.velocity_ned,
        commanded_velocity: d.commanded_velocity,
        saturated: d.saturated,
        api_control_enabled: d.api_control_enabled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;
    use proptest::prelude::*;

    fn hovering() -> DroneState {
        let mut d = DroneState::new(PoseNed::origin(), 100.0);
        d.api_control_enabled = true;
        d
    }

    fn run(d: &DroneState, cfg: &PhysicsConfig, steps: usize) -> DroneState {
        let mut s = d.clone();
        for _ in 0..steps {
            s = physics_substep(&s, cfg);
        }
        s
    }

    #[test]
    fn hover_is_fixed_point() {
        let d = hovering();
        let cfg = PhysicsConfig::default();
        let n = physics_substep(&d, &cfg);
        assert_eq!(n.pose_ned, d.pose_ned);
        assert_eq!(n.velocity_ned, Vec3::zeros());
        let long = run(&d, &cfg, 10_000);
        assert!(long.pose_ned.position.norm() < 1e-9);
    }

    #[test]
    fn step_response_monotone_bounded() {
        let cfg = PhysicsConfig::default();
        let mut d = hovering();
        set_velocity_command(ActorId(1), &mut d, vec3(1.0, 0.0, 0.0), &cfg).unwrap();
        let mut prev = 0.0;
        let mut peak: f64 = 0.0;
        for i in 0..3000 {
            d = physics_substep(&d, &cfg);
            let vx = d.velocity_ned.x;
            if i < 2000 {
                assert!(vx > prev, "not increasing at substep {i}");
            }
            peak = peak.max(vx);
            prev = vx;
        }
        assert!(peak <= 1.2, "overshoot {peak}");
        assert!(prev > 0.95);
    }

    #[test]
    fn step_size_refinement() {
        // Oracle: the same motion at a 10x finer step.
        let coarse = PhysicsConfig::default();
        let fine = PhysicsConfig {
            dt_phys: 0.0001,
            ..coarse
        };
        let mut d = hovering();
        set_velocity_command(ActorId(1), &mut d, vec3(1.0, -0.5, 0.2), &coarse).unwrap();
        let a = run(&d, &coarse, 1_000);
        let b = run(&d, &fine, 10_000);
        let err = (a.pose_ned.position - b.pose_ned.position).norm();
        assert!(err < 1e-3, "position error {err}");
    }

    #[test]
    fn substep_ratios() {
        assert_eq!(substeps_per_tick(0.05, 0.001).unwrap(), 50);
        assert_eq!(substeps_per_tick(0.05, 0.05).unwrap(), 1);
        assert!(matches!(
            substeps_per_tick(0.05, 0.0007),
            Err(SimError::ConfigError(_))
        ));
        assert!(substeps_per_tick(0.05, 0.1).is_err());
        assert!(substeps_per_tick(0.0, 0.001).is_err());
    }

    #[test]
    fn integrate_counts_substeps() {
        let cfg = PhysicsConfig::default();
        let d = integrate_over_tick(&hovering(), &cfg, 50);
        assert_eq!(d.substeps, 50);
    }

    #[test]
    fn command_requires_control() {
        let cfg = PhysicsConfig::default();
        let mut d = DroneState::new(PoseNed::origin(), 0.0);
        assert!(matches!(
            set_velocity_command(ActorId(3), &mut d, vec3(0.0, 0.0, -1.0), &cfg),
            Err(SimError::ControlNotEnabled(ActorId(3)))
        ));
        enable_api_control(&mut d, true);
        assert!(matches!(
            set_velocity_command(ActorId(3), &mut d, vec3(99.0, 0.0, 0.0), &cfg),
            Err(SimError::CommandOutOfRange { .. })
        ));
    }

    #[test]
    fn negative_z_command_climbs() {
        let cfg = PhysicsConfig::default();
        let mut d = hovering();
        set_velocity_command(ActorId(1), &mut d, vec3(0.0, 0.0, -1.0), &cfg).unwrap();
        let d = integrate_over_tick(&d, &cfg, 50);
        assert!(d.pose_ned.position.z < 0.0);
    }

    #[test]
    fn floor_blocks_descent() {
        let cfg = PhysicsConfig::default();
        let mut d = DroneState::new(PoseNed::origin(), 0.0);
        enable_api_control(&mut d, true);
        set_velocity_command(ActorId(1), &mut d, vec3(0.0, 0.0, 2.0), &cfg).unwrap();
        let d = integrate_over_tick(&d, &cfg, 500);
        assert_eq!(d.pose_ned.position.z, 0.0);
        assert!(d.velocity_ned.z <= 0.0);
    }

    #[test]
    fn takeoff_reaches_altitude() {
        let cfg = PhysicsConfig::default();
        let mut d = DroneState::new(PoseNed::origin(), 0.0);
        enable_api_control(&mut d, true);
        takeoff_to(ActorId(1), &mut d, 10.0).unwrap();
        let d = integrate_over_tick(&d, &cfg, 15_000);
        assert!((d.pose_ned.position.z + 10.0).abs() < 0.05);
    }

    #[test]
    fn saturation_flag() {
        let cfg = PhysicsConfig::default();
        let mut d = hovering();
        d.velocity_ned = vec3(40.0, 0.0, 0.0);
        d.prev_velocity = d.velocity_ned;
        let n = integrate_over_tick(&d, &cfg, 5);
        assert!(n.saturated);
        assert!(n.velocity_ned.norm() <= cfg.v_max * SATURATION_FACTOR + 1e-12);
    }

    #[test]
    fn state_query_is_pure() {
        let d = hovering();
        assert_eq!(multirotor_state(&d), multirotor_state(&d));
        assert_eq!(multirotor_state(&d).pose_ned.position, Vec3::zeros());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn converges_within_three_seconds(
            vx in -1.0..1.0f64, vy in -1.0..1.0f64, vz in -1.0..1.0f64, scale in 0.1..10.0f64,
        ) {
            let cfg = PhysicsConfig::default();
            let dir = vec3(vx, vy, vz);
            prop_assume!(dir.norm() > 1e-3);
            let cmd = dir.normalize() * scale;
            let mut d = hovering();
            set_velocity_command(ActorId(1), &mut d, cmd, &cfg).unwrap();
            let d = run(&d, &cfg, 3_000);
            prop_assert!((d.velocity_ned - cmd).norm() < 0.05 * cmd.norm());
        }
    }
}
