//! Cooperative landing of a multirotor on a moving ground vehicle.
//!
//! The vehicle is read only through the ground API and the drone only
//! through the aerial API; the two meet in the shared NED frame via the
//! drone's origin offset `d`. Each tick the drone is commanded toward the
//! vehicle's roof in its own frame, with the vehicle's velocity and the
//! descent rate as feedforward.

use std::f64::consts::PI;
use std::path::Path;

use airground_core::aerial::DEFAULT_V_MAX;
use airground_core::math::{to_array, vec3};
use airground_core::{ActorId, ActorKind, OriginOffset, Vec3};
use airground_rpc::api::{ActorIdParam, ApiControlParams, AutopilotParams, Spawned, SpawnRequest};
use airground_rpc::{Pending, Session};
use serde::{Deserialize, Serialize};

use crate::common::{
    all_ok, altitude_m, clamp_speed, decode, ned_z_of_altitude, observe_drone, observe_vehicle,
    world_origin, RateMeter,
};
use crate::{WorkflowError, WorkflowResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandingPhase {
    Approach,
    Descent,
    Touchdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingConfig {
    /// Vehicle spawn, cm, world frame; it drives along +X from here.
    pub vehicle_start_cm: [f64; 3],
    pub vehicle_speed_cms: f64,
    /// Drone spawn relative to the vehicle center, cm.
    pub drone_offset_cm: [f64; 3],
    /// Horizontal error that ends the approach and counts as landed, m.
    pub tolerance_m: f64,
    /// Proportional gain on position error, 1/s.
    pub gain: f64,
    /// Duration of the descent from the initial clearance to the roof, s.
    pub descent_s: f64,
    /// Height above the roof that counts as touching down, m.
    pub touchdown_band_m: f64,
    /// Consecutive ticks inside the band and tolerance before touchdown.
    pub touchdown_ticks: u32,
    pub timeout_s: f64,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self {
            vehicle_start_cm: [-10_000.0, 0.0, 75.0],
            vehicle_speed_cms: 500.0,
            drone_offset_cm: [0.0, 600.0, 1_125.0],
            tolerance_m: 0.5,
            gain: 1.0,
            descent_s: 20.0,
            touchdown_band_m: 0.3,
            touchdown_ticks: 5,
            timeout_s: 40.0,
        }
    }
}

impl LandingConfig {
    pub fn validate(&self) -> WorkflowResult<()> {
        let positive = [
            ("tolerance_m", self.tolerance_m),
            ("gain", self.gain),
            ("descent_s", self.descent_s),
            ("touchdown_band_m", self.touchdown_band_m),
            ("timeout_s", self.timeout_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(WorkflowError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.vehicle_speed_cms.is_finite() && self.vehicle_speed_cms >= 0.0) {
            return Err(WorkflowError::Config("vehicle speed must be non-negative".into()));
        }
        if self.touchdown_ticks == 0 {
            return Err(WorkflowError::Config("touchdown_ticks must be positive".into()));
        }
        if self.drone_offset_cm[2] <= 0.0 {
            return Err(WorkflowError::Config("drone must start above the vehicle".into()));
        }
        Ok(())
    }
}

/// Height above the landing surface at time `t` for a descent from `z0`
/// lasting `duration`: a half-cosine from `z0` at t = 0 to 0 at
/// t = duration, held at 0 afterwards.
pub fn descent_profile(t: f64, z0: f64, duration: f64) -> WorkflowResult<f64> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(WorkflowError::Config(format!("descent duration must be positive, got {duration}")));
    }
    if !(t.is_finite() && t >= 0.0) || !z0.is_finite() {
        return Err(WorkflowError::InvalidInput(format!("bad descent time {t} or height {z0}")));
    }
    let s = t.min(duration) / duration;
    Ok(z0 * (1.0 + (PI * s).cos()) / 2.0)
}

/// d/dt of [`descent_profile`].
fn descent_rate(t: f64, z0: f64, duration: f64) -> f64 {
    if t >= duration {
        return 0.0;
    }
    -z0 * PI / (2.0 * duration) * (PI * t / duration).sin()
}

/// Position target in the drone's own NED frame for a shared-frame landing
/// point `q`, with `z_ref` the shared-frame NED height to hold.
pub fn landing_step(q: &Vec3, d: &OriginOffset, z_ref: f64) -> Vec3 {
    vec3(q.x, q.y, z_ref) - d.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingSample {
    pub tick: u64,
    pub t: f64,
    pub phase: LandingPhase,
    /// Shared NED, m.
    pub drone_x: f64,
    pub drone_y: f64,
    pub drone_alt: f64,
    pub vehicle_x: f64,
    pub vehicle_y: f64,
    pub roof_alt: f64,
    pub target_alt: f64,
    pub horizontal_error: f64,
    /// Commanded velocity, drone NED, m/s.
    pub cmd_x: f64,
    pub cmd_y: f64,
    pub cmd_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingReport {
    pub config: LandingConfig,
    pub landed: bool,
    pub ticks: u64,
    pub touchdown_s: Option<f64>,
    pub approach_end_s: Option<f64>,
    pub initial_horizontal_error_m: f64,
    pub final_horizontal_error_m: f64,
    /// Largest |altitude - profile| once descending, m.
    pub max_altitude_tracking_error_m: f64,
    /// Largest rise of the horizontal error above its running minimum after
    /// the approach, m.
    pub max_error_rebound_m: f64,
    pub monotone: bool,
    /// Drone origin offset as the aerial API reported it, m.
    pub offset_d: [f64; 3],
    pub fps: Option<f64>,
    pub trajectory: Vec<LandingSample>,
}

struct Actors {
    vehicle: Option<ActorId>,
    drone: Option<ActorId>,
}

fn setup(session: &mut Session, cfg: &LandingConfig, actors: &mut Actors) -> WorkflowResult<()> {
    let v = cfg.vehicle_start_cm;
    let o = cfg.drone_offset_cm;
    let (_, r) = session.step(&[
        Pending::ground("spawn_actor", SpawnRequest::at(ActorKind::Vehicle, vec3(v[0], v[1], v[2]))),
        Pending::ground(
            "spawn_actor",
            SpawnRequest::at(ActorKind::Drone, vec3(v[0] + o[0], v[1] + o[1], v[2] + o[2])),
        ),
    ])?;
    let mut r = r.into_iter();
    let vehicle = decode::<Spawned>(r.next().expect("two results"));
    let drone = decode::<Spawned>(r.next().expect("two results"));
    actors.vehicle = vehicle.as_ref().ok().map(|s| s.id);
    actors.drone = drone.as_ref().ok().map(|s| s.id);
    let (vehicle, drone) = (vehicle?.id, drone?.id);
    let (_, r) = session.step(&[
        Pending::ground(
            "set_autopilot",
            AutopilotParams {
                id: vehicle,
                enabled: true,
                cruise_speed: Some(cfg.vehicle_speed_cms),
            },
        ),
        Pending::aerial(
            "enable_api_control",
            ApiControlParams {
                drone: Some(drone),
                enabled: true,
            },
        ),
    ])?;
    all_ok(r)?;
    Ok(())
}

fn teardown(session: &mut Session, actors: &Actors) -> WorkflowResult<()> {
    let cmds: Vec<Pending> = [actors.vehicle, actors.drone]
        .into_iter()
        .flatten()
        .map(|id| Pending::ground("destroy_actor", ActorIdParam { id }))
        .collect();
    if !cmds.is_empty() {
        all_ok(session.step(&cmds)?.1)?;
    }
    Ok(())
}

/// Spawns the vehicle and drone, flies the landing, and destroys both.
/// Switches the kernel to synchronous mode.
pub fn run_landing(session: &mut Session, cfg: &LandingConfig) -> WorkflowResult<LandingReport> {
    cfg.validate()?;
    session.ground.set_synchronous_mode(true)?;
    let mut actors = Actors {
        vehicle: None,
        drone: None,
    };
    let r = setup(session, cfg, &mut actors).and_then(|_| fly(session, cfg, &actors));
    let t = teardown(session, &actors);
    let report = r?;
    t?;
    Ok(report)
}

fn fly(session: &mut Session, cfg: &LandingConfig, actors: &Actors) -> WorkflowResult<LandingReport> {
    let (vehicle, drone) = (actors.vehicle.expect("spawned"), actors.drone.expect("spawned"));
    let origin = world_origin(&mut session.ground)?;
    let v_limit = DEFAULT_V_MAX * (1.0 - 1e-9);

    let mut trajectory = Vec::new();
    let mut meter = RateMeter::default();
    let mut phase = LandingPhase::Approach;
    let mut approach_end_s = None;
    let mut touchdown_s = None;
    let mut in_band = 0;
    let mut clearance0 = None;
    let mut running_min = f64::INFINITY;
    let mut max_rebound: f64 = 0.0;
    let mut max_alt_err: f64 = 0.0;
    let mut offset_d;
    let mut sim_t0 = None;
    let mut sim_t = 0.0;
    let mut ticks = 0;

    loop {
        let v = observe_vehicle(&mut session.ground, vehicle, &origin)?;
        let d = observe_drone(&mut session.aerial, drone)?;
        offset_d = to_array(&d.offset.0);
        let t = sim_t - *sim_t0.get_or_insert(sim_t);
        let q = v.roof();
        let p = d.shared_position();
        let e = (q.xy() - p.xy()).norm();
        let alt = altitude_m(&p, &origin);
        let roof_alt = altitude_m(&q, &origin);
        let z0 = *clearance0.get_or_insert(alt - roof_alt);
        let target_alt = roof_alt + descent_profile(t, z0, cfg.descent_s)?;

        if phase == LandingPhase::Approach && e < cfg.tolerance_m {
            phase = LandingPhase::Descent;
            approach_end_s = Some(t);
        }
        if phase != LandingPhase::Approach {
            max_alt_err = max_alt_err.max((alt - target_alt).abs());
            running_min = running_min.min(e);
            max_rebound = max_rebound.max(e - running_min);
            if (alt - roof_alt).abs() <= cfg.touchdown_band_m && e < cfg.tolerance_m {
                in_band += 1;
            } else {
                in_band = 0;
            }
            if in_band >= cfg.touchdown_ticks {
                phase = LandingPhase::Touchdown;
                touchdown_s = Some(t);
            }
        }

        let z_ref = ned_z_of_altitude(target_alt, &origin);
        let target = landing_step(&q, &d.offset, z_ref);
        let feedforward = vec3(v.velocity.x, v.velocity.y, -descent_rate(t, z0, cfg.descent_s));
        let cmd = clamp_speed(feedforward + (target - d.local.position) * cfg.gain, v_limit);
        trajectory.push(LandingSample {
            tick: d.tick,
            t,
            phase,
            drone_x: p.x,
            drone_y: p.y,
            drone_alt: alt,
            vehicle_x: q.x,
            vehicle_y: q.y,
            roof_alt,
            target_alt,
            horizontal_error: e,
            cmd_x: cmd.x,
            cmd_y: cmd.y,
            cmd_z: cmd.z,
        });
        if phase == LandingPhase::Touchdown || t >= cfg.timeout_s {
            break;
        }
        let (info, r) = meter.time(|| session.step(&[Pending::set_velocity(Some(drone), cmd)]))?;
        all_ok(r)?;
        sim_t = info.sim_time;
        ticks += 1;
    }

    let first = trajectory.first().expect("at least one sample");
    let last = trajectory.last().expect("at least one sample");
    Ok(LandingReport {
        config: cfg.clone(),
        landed: touchdown_s.is_some() && last.horizontal_error < cfg.tolerance_m,
        ticks,
        touchdown_s,
        approach_end_s,
        initial_horizontal_error_m: first.horizontal_error,
        final_horizontal_error_m: last.horizontal_error,
        max_altitude_tracking_error_m: max_alt_err,
        max_error_rebound_m: max_rebound,
        monotone: approach_end_s.is_some() && max_rebound <= cfg.tolerance_m,
        offset_d,
        fps: meter.harmonic_fps(),
        trajectory,
    })
}

pub fn write_trajectory_csv(path: &Path, report: &LandingReport) -> WorkflowResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for s in &report.trajectory {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
