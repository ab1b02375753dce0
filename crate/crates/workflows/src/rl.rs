//! A cooperative air-ground RL environment: a drone learns to shadow an
//! autopiloted ego vehicle through background traffic.
//!
//! Episode actors are placed client-side from a seeded RNG over the map's
//! road waypoints, so a seed fixes the initial scene. The environment only
//! talks to the simulator through the two RPC APIs.

use airground_core::aerial::DEFAULT_V_MAX;
use airground_core::frames::{ue_to_ned_position, CM_PER_M};
use airground_core::map::FlatMap;
use airground_core::math::{from_array, to_array, vec3};
use airground_core::world::{boxes_overlap, ActorSnapshot, WorldSnapshot};
use airground_core::{ActorId, ActorKind, Vec3};
use airground_rpc::api::{ActorIdParam, ApiControlParams, AutopilotParams, Spawned, SpawnRequest};
use airground_rpc::{Pending, Session};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::common::{all_ok, altitude_m, clamp_speed, decode, observe_drone, observe_vehicle, world_origin};
use crate::{WorkflowError, WorkflowResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub seed: u64,
    pub map: String,
    pub background_vehicles: usize,
    pub target_altitude_m: f64,
    pub max_steps: u32,
    /// Radius of the traffic count around the ego vehicle, m.
    pub traffic_radius_m: f64,
    /// Nearest-traffic distance reported when there is none closer, m.
    pub nearest_cap_m: f64,
    pub altitude_weight: f64,
    pub collision_penalty: f64,
    /// Largest horizontal drone spawn offset from the vehicle, m.
    pub spawn_offset_max_m: f64,
    /// Minimum spacing between spawn waypoints, in waypoint indices.
    pub spawn_spacing: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            map: airground_core::map::FLAT_TOWN.to_string(),
            background_vehicles: 4,
            target_altitude_m: 10.0,
            max_steps: 400,
            traffic_radius_m: 30.0,
            nearest_cap_m: 100.0,
            altitude_weight: 0.5,
            collision_penalty: 10.0,
            spawn_offset_max_m: 5.0,
            spawn_spacing: 3,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> WorkflowResult<()> {
        if self.max_steps == 0 {
            return Err(WorkflowError::Config("max_steps must be positive".into()));
        }
        let positive = [
            ("target_altitude_m", self.target_altitude_m),
            ("traffic_radius_m", self.traffic_radius_m),
            ("nearest_cap_m", self.nearest_cap_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(WorkflowError::Config(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("altitude_weight", self.altitude_weight),
            ("collision_penalty", self.collision_penalty),
            ("spawn_offset_max_m", self.spawn_offset_max_m),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(WorkflowError::Config(format!("{name} must be non-negative")));
            }
        }
        if self.spawn_spacing == 0 {
            return Err(WorkflowError::Config("spawn_spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Everything in the shared NED frame, m and m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub drone_position: [f64; 3],
    pub drone_velocity: [f64; 3],
    pub drone_altitude: f64,
    pub vehicle_position: [f64; 3],
    pub vehicle_velocity: [f64; 3],
    /// Vehicle minus drone.
    pub relative: [f64; 3],
    pub traffic_count: u32,
    pub nearest_traffic_m: f64,
}

impl Observation {
    pub const DIM: usize = 18;

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        v.extend(self.drone_position);
        v.extend(self.drone_velocity);
        v.push(self.drone_altitude);
        v.extend(self.vehicle_position);
        v.extend(self.vehicle_velocity);
        v.extend(self.relative);
        v.push(self.traffic_count as f64);
        v.push(self.nearest_traffic_m);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub collision: bool,
    /// Ended by the step limit.
    pub truncated: bool,
    pub tick: u64,
}

#[derive(Debug, Clone)]
struct Episode {
    vehicle: ActorId,
    drone: ActorId,
    actors: Vec<ActorId>,
    steps: u32,
    done: bool,
}

pub struct CoopEnv {
    session: Session,
    cfg: RlConfig,
    map: FlatMap,
    origin: Vec3,
    rng: ChaCha8Rng,
    episode: Option<Episode>,
}

/// Cyclic index distance on a loop of `n` waypoints.
fn ring_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

fn world_half_extents(a: &ActorSnapshot) -> Vec3 {
    let r = a.rotation.to_unit().to_rotation_matrix();
    r.matrix().abs() * from_array(a.bbox)
}

impl CoopEnv {
    /// Takes over `session` and switches the kernel to synchronous mode.
    pub fn new(mut session: Session, cfg: RlConfig) -> WorkflowResult<Self> {
        cfg.validate()?;
        let map = FlatMap::load(&cfg.map)?;
        session.ground.set_synchronous_mode(true)?;
        let origin = world_origin(&mut session.ground)?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            session,
            cfg,
            map,
            origin,
            episode: None,
        })
    }

    pub fn config(&self) -> &RlConfig {
        &self.cfg
    }

    pub fn session(&mut self) -> &mut Session {
        &mut self.session
    }

    /// Destroys the current episode's actors and hands the session back.
    pub fn into_session(mut self) -> WorkflowResult<Session> {
        self.close()?;
        Ok(self.session)
    }

    /// Destroys the current episode's actors, if any.
    pub fn close(&mut self) -> WorkflowResult<()> {
        let Some(ep) = self.episode.take() else {
            return Ok(());
        };
        let cmds: Vec<Pending> = ep
            .actors
            .iter()
            .map(|&id| Pending::ground("destroy_actor", ActorIdParam { id }))
            .collect();
        all_ok(self.session.step(&cmds)?.1)?;
        Ok(())
    }

    /// Starts a new episode; `seed` reseeds the placement RNG.
    pub fn reset(&mut self, seed: Option<u64>) -> WorkflowResult<Observation> {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        self.close()?;
        let n = self.map.road_loop.len();
        let spacing = self.cfg.spawn_spacing;
        let ego = self.rng.gen_range(0..n);
        let mut candidates: Vec<usize> = (0..n).filter(|&i| ring_distance(i, ego, n) >= spacing).collect();
        candidates.shuffle(&mut self.rng);
        let mut background = Vec::with_capacity(self.cfg.background_vehicles);
        for i in candidates {
            if background.len() == self.cfg.background_vehicles {
                break;
            }
            if background.iter().all(|&j| ring_distance(i, j, n) >= spacing) {
                background.push(i);
            }
        }
        if background.len() < self.cfg.background_vehicles {
            return Err(WorkflowError::Config(format!(
                "room for only {} background vehicles at spacing {spacing}",
                background.len()
            )));
        }
        let m = self.cfg.spawn_offset_max_m * CM_PER_M;
        let offset = vec3(self.rng.gen_range(-m..=m), self.rng.gen_range(-m..=m), 0.0);

        let height = ActorKind::Vehicle.default_bbox().z;
        let vehicle_at = |i: usize| {
            let p = self.map.spawn_point(i, height);
            SpawnRequest {
                rotation: Some(p.orientation),
                ..SpawnRequest::at(ActorKind::Vehicle, p.position)
            }
        };
        let ego_pose = self.map.spawn_point(ego, height);
        let drone_at = vec3(
            ego_pose.position.x + offset.x,
            ego_pose.position.y + offset.y,
            self.cfg.target_altitude_m * CM_PER_M,
        );
        let mut cmds = vec![
            Pending::ground("spawn_actor", vehicle_at(ego)),
            Pending::ground("spawn_actor", SpawnRequest::at(ActorKind::Drone, drone_at)),
        ];
        cmds.extend(background.iter().map(|&i| Pending::ground("spawn_actor", vehicle_at(i))));
        let (_, results) = self.session.step(&cmds)?;
        let spawned: Vec<_> = results.into_iter().map(decode::<Spawned>).collect();
        let actors: Vec<ActorId> = spawned.iter().flatten().map(|s| s.id).collect();
        if let Some(Err(e)) = spawned.into_iter().find(|r| r.is_err()) {
            self.episode = Some(Episode {
                vehicle: ActorId(0),
                drone: ActorId(0),
                actors,
                steps: 0,
                done: true,
            });
            let _ = self.close();
            return Err(e.into());
        }
        let (vehicle, drone) = (actors[0], actors[1]);
        self.episode = Some(Episode {
            vehicle,
            drone,
            actors: actors.clone(),
            steps: 0,
            done: false,
        });

        let mut cmds: Vec<Pending> = actors
            .iter()
            .filter(|&&id| id != drone)
            .map(|&id| {
                Pending::ground(
                    "set_autopilot",
                    AutopilotParams {
                        id,
                        enabled: true,
                        cruise_speed: None,
                    },
                )
            })
            .collect();
        cmds.push(Pending::aerial(
            "enable_api_control",
            ApiControlParams {
                drone: Some(drone),
                enabled: true,
            },
        ));
        all_ok(self.session.step(&cmds)?.1)?;
        let (obs, _) = self.observe()?;
        Ok(obs)
    }

    fn observe(&mut self) -> WorkflowResult<(Observation, WorldSnapshot)> {
        let ep = self.episode.as_ref().ok_or(WorkflowError::NoEpisode)?;
        let (vehicle, drone) = (ep.vehicle, ep.drone);
        let v = observe_vehicle(&mut self.session.ground, vehicle, &self.origin)?;
        let d = observe_drone(&mut self.session.aerial, drone)?;
        let snap = self.session.ground.world_snapshot()?;
        let p = d.shared_position();
        let mut count = 0;
        let mut nearest = self.cfg.nearest_cap_m;
        for a in &snap.actors {
            if a.kind != ActorKind::Vehicle || a.id == vehicle {
                continue;
            }
            let q = ue_to_ned_position(&from_array(a.location), &self.origin)?;
            let dist = (q - v.position).norm();
            if dist <= self.cfg.traffic_radius_m {
                count += 1;
            }
            nearest = nearest.min(dist);
        }
        let obs = Observation {
            drone_position: to_array(&p),
            drone_velocity: to_array(&d.velocity),
            drone_altitude: altitude_m(&p, &self.origin),
            vehicle_position: to_array(&v.position),
            vehicle_velocity: to_array(&v.velocity),
            relative: to_array(&(v.position - p)),
            traffic_count: count,
            nearest_traffic_m: nearest,
        };
        Ok((obs, snap))
    }

    /// Whether the drone's box overlaps another actor, a map obstacle, or
    /// the ground.
    fn collided(&self, drone: ActorId, snap: &WorldSnapshot) -> bool {
        let Some(me) = snap.actors.iter().find(|a| a.id == drone) else {
            return false;
        };
        let c = from_array(me.location);
        let h = world_half_extents(me);
        if c.z - h.z <= 0.0 {
            return true;
        }
        let hit_actor = snap
            .actors
            .iter()
            .filter(|a| a.id != drone)
            .any(|a| boxes_overlap(&c, &h, &from_array(a.location), &world_half_extents(a)));
        hit_actor
            || self
                .map
                .obstacles
                .iter()
                .any(|o| boxes_overlap(&c, &h, &o.center, &o.half_extents))
    }

    pub fn reward(&self, obs: &Observation, collision: bool) -> f64 {
        let lateral = (obs.relative[0].powi(2) + obs.relative[1].powi(2)).sqrt();
        let alt = (obs.drone_altitude - self.cfg.target_altitude_m).abs();
        -lateral - self.cfg.altitude_weight * alt - if collision { self.cfg.collision_penalty } else { 0.0 }
    }

    /// Applies a velocity command (drone NED, m/s) for one tick.
    pub fn step(&mut self, action: [f64; 3]) -> WorkflowResult<StepResult> {
        let ep = self.episode.as_ref().ok_or(WorkflowError::NoEpisode)?;
        if ep.done {
            return Err(WorkflowError::EpisodeDone);
        }
        let drone = ep.drone;
        let (info, r) = self
            .session
            .step(&[Pending::set_velocity(Some(drone), from_array(action))])?;
        all_ok(r)?;
        let (obs, snap) = self.observe()?;
        let collision = self.collided(drone, &snap);
        let reward = self.reward(&obs, collision);
        let ep = self.episode.as_mut().expect("checked above");
        ep.steps += 1;
        let truncated = ep.steps >= self.cfg.max_steps;
        ep.done = collision || truncated;
        Ok(StepResult {
            observation: obs,
            reward,
            done: ep.done,
            collision,
            truncated: truncated && !collision,
            tick: info.tick,
        })
    }
}

/// Follows the vehicle with velocity feedforward and proportional
/// correction, holding the target altitude.
pub fn tracking_action(obs: &Observation, target_altitude_m: f64) -> [f64; 3] {
    let v = vec3(
        obs.vehicle_velocity[0] + obs.relative[0],
        obs.vehicle_velocity[1] + obs.relative[1],
        obs.drone_altitude - target_altitude_m,
    );
    to_array(&clamp_speed(v, DEFAULT_V_MAX * (1.0 - 1e-9)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoakReport {
    pub cycles: usize,
    pub steps: u64,
    pub errors: u64,
    pub registry_failures: usize,
    pub mean_return: Option<f64>,
    pub error_log: Vec<String>,
}

fn registry(s: &WorldSnapshot) -> (Vec<ActorId>, usize) {
    let mut ids: Vec<ActorId> = s.actors.iter().map(|a| a.id).collect();
    ids.sort();
    (ids, s.sensor_count)
}

/// Repeated reset/run/close cycles under the tracking policy, checking
/// after each that the world's registries are back to where they started.
pub fn rl_soak(session: Session, cfg: &RlConfig, cycles: usize, steps_per_cycle: u32) -> WorkflowResult<(SoakReport, Session)> {
    let mut env = CoopEnv::new(session, cfg.clone())?;
    let baseline = registry(&env.session().ground.world_snapshot()?);
    let mut report = SoakReport {
        cycles: 0,
        steps: 0,
        errors: 0,
        registry_failures: 0,
        mean_return: None,
        error_log: Vec::new(),
    };
    let mut returns = Vec::with_capacity(cycles);
    let log = |report: &mut SoakReport, msg: String| {
        report.errors += 1;
        if report.error_log.len() < 100 {
            report.error_log.push(msg);
        }
    };
    for c in 0..cycles {
        let seed = cfg.seed.wrapping_add(c as u64);
        match env.reset(Some(seed)) {
            Ok(mut obs) => {
                let mut ret = 0.0;
                for _ in 0..steps_per_cycle {
                    match env.step(tracking_action(&obs, cfg.target_altitude_m)) {
                        Ok(s) => {
                            report.steps += 1;
                            ret += s.reward;
                            obs = s.observation;
                            if s.done {
                                break;
                            }
                        }
                        Err(e) => {
                            log(&mut report, format!("cycle {c} step: {e}"));
                            break;
                        }
                    }
                }
                returns.push(ret);
            }
            Err(e) => log(&mut report, format!("cycle {c} reset: {e}")),
        }
        if let Err(e) = env.close() {
            log(&mut report, format!("cycle {c} close: {e}"));
        }
        match env.session().ground.world_snapshot() {
            Ok(s) if registry(&s) == baseline => {}
            Ok(_) => report.registry_failures += 1,
            Err(e) => {
                report.registry_failures += 1;
                log(&mut report, format!("cycle {c} snapshot: {e}"));
            }
        }
        report.cycles += 1;
    }
    report.mean_return = airground_bench::stats::mean(&returns).ok();
    Ok((report, env.into_session()?))
}
