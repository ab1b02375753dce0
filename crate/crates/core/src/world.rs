//! The single authoritative world and its fixed tick.
//!
//! All mutation goes through [`WorldState::advance_tick`], which applies the
//! queued commands in order, steps ground agents once, integrates every
//! multirotor through its fixed substeps, bumps the tick, and captures every
//! attached sensor from the result.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aerial::{self, DroneState, MultirotorState, PhysicsConfig};
use crate::error::{SimError, SimResult};
use crate::frames::{self, OriginOffset, PoseNed, PoseUe};
use crate::ground::{self, PedestrianState, VehicleState};
use crate::map::FlatMap;
use crate::math::{is_finite, to_array, vec3, Quat, Vec3};
use crate::sensors::{
    self, mount, Camera, Modality, Payload, PlatformPose, Scene, SceneBox, SemanticClass,
    SensorId, SensorRequest, SensorSpec, StreamSample, TickRecord,
};
use crate::weather::WeatherPreset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub u64);

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Vehicle,
    Pedestrian,
    Drone,
    Static,
}

impl ActorKind {
    pub fn parse(s: &str) -> SimResult<Self> {
        Ok(match s {
            "vehicle" => ActorKind::Vehicle,
            "pedestrian" | "walker" => ActorKind::Pedestrian,
            "drone" | "multirotor" => ActorKind::Drone,
            "static" => ActorKind::Static,
            other => return Err(SimError::invalid(format!("unknown actor kind {other}"))),
        })
    }

    /// Default half extents, cm.
    pub fn default_bbox(&self) -> Vec3 {
        match self {
            ActorKind::Vehicle => vec3(235.0, 95.0, 75.0),
            ActorKind::Pedestrian => vec3(25.0, 25.0, 90.0),
            ActorKind::Drone => vec3(30.0, 30.0, 10.0),
            ActorKind::Static => vec3(100.0, 100.0, 100.0),
        }
    }

    pub fn semantic_class(&self) -> SemanticClass {
        match self {
            ActorKind::Vehicle => SemanticClass::Vehicle,
            ActorKind::Pedestrian => SemanticClass::Pedestrian,
            ActorKind::Drone => SemanticClass::Drone,
            ActorKind::Static => SemanticClass::Static,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneBody {
    pub state: DroneState,
    pub spawn: PoseUe,
    /// Maps the drone's own NED frame into the shared NED frame.
    pub offset: OriginOffset,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Vehicle(VehicleState),
    Pedestrian(PedestrianState),
    Drone(Box<DroneBody>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub id: ActorId,
    pub kind: ActorKind,
    pub pose: PoseUe,
    /// cm/s, world frame.
    pub velocity: Vec3,
    /// Half extents in the actor's own frame, cm.
    pub bbox: Vec3,
    pub controller: Option<Controller>,
    prev_velocity: Vec3,
    prev_yaw: f64,
}

impl Actor {
    pub fn drone(&self) -> Option<&DroneBody> {
        match &self.controller {
            Some(Controller::Drone(d)) => Some(d),
            _ => None,
        }
    }

    /// Half extents of the world-axis-aligned box enclosing the actor.
    pub fn world_half_extents(&self) -> Vec3 {
        enclosing_half_extents(&self.bbox, &self.orientation())
    }

    fn orientation(&self) -> Quat {
        self.pose.orientation
    }
}

fn enclosing_half_extents(half: &Vec3, q: &Quat) -> Vec3 {
    let r = q.to_unit().to_rotation_matrix();
    r.matrix().abs() * half
}

/// Strict overlap of two boxes' world-aligned enclosures (touching is fine).
pub fn boxes_overlap(a_center: &Vec3, a_half: &Vec3, b_center: &Vec3, b_half: &Vec3) -> bool {
    (0..3).all(|i| (a_center[i] - b_center[i]).abs() < a_half[i] + b_half[i])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpawnParams {
    /// Overrides the kind's default half extents (cm).
    pub bbox: Option<Vec3>,
    /// Pedestrian path (cm).
    pub path: Vec<Vec3>,
    /// Pedestrian walking speed or vehicle cruise speed (cm/s).
    pub speed: Option<f64>,
    /// Pedestrian path loops.
    pub wrap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub dt_render: f64,
    pub seed: u64,
    pub map_name: String,
    /// Shared origin `o` of the world-to-NED mapping (cm).
    pub world_origin: Vec3,
    pub physics: PhysicsConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt_render: 0.05,
            seed: 0,
            map_name: crate::map::FLAT_TOWN.to_string(),
            world_origin: Vec3::zeros(),
            physics: PhysicsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    SpawnActor {
        kind: ActorKind,
        pose: PoseUe,
        params: SpawnParams,
    },
    /// Spawn on a free road waypoint chosen with the world RNG.
    SpawnRandom {
        kind: ActorKind,
        params: SpawnParams,
    },
    DestroyActor(ActorId),
    SetAutopilot {
        id: ActorId,
        enabled: bool,
        cruise_speed: Option<f64>,
    },
    SetWeather(String),
    AttachSensor(SensorRequest),
    DetachSensor(SensorId),
    EnableApiControl {
        drone: Option<ActorId>,
        enabled: bool,
    },
    SetVelocity {
        drone: Option<ActorId>,
        velocity: Vec3,
    },
    TakeoffTo {
        drone: Option<ActorId>,
        altitude: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CommandOutput {
    Spawned(ActorId),
    SensorAttached(SensorId),
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSnapshot {
    pub id: ActorId,
    pub kind: ActorKind,
    /// cm, world frame.
    pub location: [f64; 3],
    pub rotation: Quat,
    /// cm/s, world frame.
    pub velocity: [f64; 3],
    pub bbox: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub tick: u64,
    pub sim_time: f64,
    pub weather: String,
    /// Shared NED origin, cm, world frame.
    pub world_origin: [f64; 3],
    pub actors: Vec<ActorSnapshot>,
    pub sensor_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultirotorReport {
    pub id: ActorId,
    pub tick: u64,
    #[serde(flatten)]
    pub state: MultirotorState,
    pub offset: OriginOffset,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    tick: u64,
    dt_render: f64,
    substeps_per_tick: u32,
    physics: PhysicsConfig,
    map: Arc<FlatMap>,
    actors: BTreeMap<ActorId, Actor>,
    sensors: BTreeMap<SensorId, SensorSpec>,
    weather: WeatherPreset,
    world_origin: Vec3,
    rng_seed: u64,
    rng: ChaCha8Rng,
    next_actor: u64,
    next_sensor: u64,
    aerial_substeps: u64,
    last_record: Arc<TickRecord>,
}

const RANDOM_SPAWN_ATTEMPTS: usize = 64;

impl WorldState {
    pub fn create(cfg: WorldConfig) -> SimResult<Self> {
        if !(cfg.dt_render > 0.0) {
            return Err(SimError::ConfigError("dt_render must be positive".into()));
        }
        if !is_finite(&cfg.world_origin) {
            return Err(SimError::ConfigError("world origin must be finite".into()));
        }
        let substeps = aerial::substeps_per_tick(cfg.dt_render, cfg.physics.dt_phys)?;
        let map = FlatMap::load(&cfg.map_name)?;
        Ok(Self {
            tick: 0,
            dt_render: cfg.dt_render,
            substeps_per_tick: substeps,
            physics: cfg.physics,
            map: Arc::new(map),
            actors: BTreeMap::new(),
            sensors: BTreeMap::new(),
            weather: WeatherPreset::clear_noon(),
            world_origin: cfg.world_origin,
            rng_seed: cfg.seed,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            next_actor: 1,
            next_sensor: 1,
            aerial_substeps: 0,
            last_record: Arc::new(TickRecord::default()),
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Always `tick * dt_render`, never an accumulated sum.
    pub fn sim_time(&self) -> f64 {
        self.tick as f64 * self.dt_render
    }

    pub fn dt_render(&self) -> f64 {
        self.dt_render
    }

    pub fn substeps_per_tick(&self) -> u32 {
        self.substeps_per_tick
    }

    /// Total aerial substeps executed across all drones and ticks.
    pub fn aerial_substeps(&self) -> u64 {
        self.aerial_substeps
    }

    pub fn physics(&self) -> &PhysicsConfig {
        &self.physics
    }

    pub fn map(&self) -> &FlatMap {
        &self.map
    }

    pub fn weather(&self) -> &WeatherPreset {
        &self.weather
    }

    pub fn world_origin(&self) -> Vec3 {
        self.world_origin
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn actors(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values()
    }

    pub fn actor(&self, id: ActorId) -> SimResult<&Actor> {
        self.actors.get(&id).ok_or(SimError::ActorNotFound(id))
    }

    pub fn actor_count(&self) -> usize {
        self.actors.len()
    }

    pub fn sensors(&self) -> impl Iterator<Item = &SensorSpec> {
        self.sensors.values()
    }

    pub fn sensor(&self, id: SensorId) -> SimResult<&SensorSpec> {
        self.sensors.get(&id).ok_or(SimError::SensorNotFound(id))
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn last_record(&self) -> &Arc<TickRecord> {
        &self.last_record
    }

    /// Next id that would be handed out; ids below it are taken or retired.
    pub fn next_actor_id(&self) -> ActorId {
        ActorId(self.next_actor)
    }

    fn check_free(&self, center: &Vec3, half: &Vec3) -> SimResult<()> {
        for a in self.actors.values() {
            if boxes_overlap(center, half, &a.pose.position, &a.world_half_extents()) {
                return Err(SimError::SpawnCollision(a.id));
            }
        }
        for (i, o) in self.map.obstacles.iter().enumerate() {
            if boxes_overlap(center, half, &o.center, &o.half_extents) {
                return Err(SimError::SpawnBlocked(i));
            }
        }
        Ok(())
    }

    pub fn spawn_actor(
        &mut self,
        kind: ActorKind,
        pose: PoseUe,
        params: SpawnParams,
    ) -> SimResult<ActorId> {
        pose.validate()?;
        let bbox = params.bbox.unwrap_or_else(|| kind.default_bbox());
        if !bbox.iter().all(|h| h.is_finite() && *h > 0.0) {
            return Err(SimError::invalid("bounding box half extents must be positive"));
        }
        if let Some(s) = params.speed {
            if !(s.is_finite() && s >= 0.0) {
                return Err(SimError::invalid("speed must be finite and non-negative"));
            }
        }
        if !params.path.iter().all(is_finite) {
            return Err(SimError::invalid("path points must be finite"));
        }
        self.check_free(&pose.position, &enclosing_half_extents(&bbox, &pose.orientation))?;

        let id = ActorId(self.next_actor);
        let controller = match kind {
            ActorKind::Vehicle => {
                let mut v = VehicleState::new(&pose);
                if let Some(s) = params.speed {
                    v.cruise_speed = s.min(v.max_speed);
                }
                Some(Controller::Vehicle(v))
            }
            ActorKind::Pedestrian => Some(Controller::Pedestrian(PedestrianState::new(
                &pose,
                params.speed.unwrap_or(ground::PEDESTRIAN_DEFAULT_SPEED),
                params.path.clone(),
                params.wrap,
            ))),
            ActorKind::Drone => {
                let o = self.world_origin;
                let spawn_ned = PoseNed::new(Vec3::zeros(), frames::ue_to_ned_quat(&pose.orientation)?);
                let offset = frames::compute_origin_offset(&pose, &spawn_ned, &o)?;
                // Shared-frame NED z of the ground plane, moved into the local frame.
                let ground_z = frames::ue_to_ned_position(&vec3(0.0, 0.0, 0.0), &o)?.z;
                let floor_z = ground_z - offset.vector().z;
                Some(Controller::Drone(Box::new(DroneBody {
                    state: DroneState::new(spawn_ned, floor_z),
                    spawn: pose,
                    offset,
                })))
            }
            ActorKind::Static => None,
        };
        self.next_actor += 1;
        self.actors.insert(
            id,
            Actor {
                id,
                kind,
                pose,
                velocity: Vec3::zeros(),
                bbox,
                controller,
                prev_velocity: Vec3::zeros(),
                prev_yaw: pose.orientation.yaw(),
            },
        );
        Ok(id)
    }

    pub fn spawn_random(&mut self, kind: ActorKind, params: SpawnParams) -> SimResult<ActorId> {
        let n = self.map.road_loop.len();
        let half_z = params.bbox.unwrap_or_else(|| kind.default_bbox()).z;
        let mut last = None;
        for _ in 0..RANDOM_SPAWN_ATTEMPTS {
            let i = self.rng.gen_range(0..n);
            let pose = self.map.spawn_point(i, half_z);
            match self.spawn_actor(kind, pose, params.clone()) {
                Ok(id) => return Ok(id),
                Err(e @ (SimError::SpawnCollision(_) | SimError::SpawnBlocked(_))) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or(SimError::invalid("no spawn point available")))
    }

    pub fn destroy_actor(&mut self, id: ActorId) -> SimResult<()> {
        self.actors.remove(&id).ok_or(SimError::ActorNotFound(id))?;
        self.sensors.retain(|_, s| s.parent != id);
        Ok(())
    }

    pub fn set_weather(&mut self, name: &str) -> SimResult<()> {
        self.weather = WeatherPreset::by_name(name)?;
        Ok(())
    }

    pub fn set_autopilot(
        &mut self,
        id: ActorId,
        enabled: bool,
        cruise_speed: Option<f64>,
    ) -> SimResult<()> {
        let map = Arc::clone(&self.map);
        let actor = self.actors.get_mut(&id).ok_or(SimError::ActorNotFound(id))?;
        let Some(Controller::Vehicle(v)) = actor.controller.as_mut() else {
            return Err(SimError::WrongKind(id, "vehicle"));
        };
        if let Some(c) = cruise_speed {
            if !(c.is_finite() && c > 0.0) {
                return Err(SimError::invalid("cruise speed must be positive"));
            }
            v.cruise_speed = c.min(v.max_speed);
        }
        v.autopilot = enabled;
        if enabled {
            if v.route.is_empty() {
                v.route = map.route_from(&v.position, v.yaw);
            }
        } else {
            v.speed = 0.0;
            v.steering = 0.0;
        }
        Ok(())
    }

    pub fn attach_sensor(&mut self, req: SensorRequest) -> SimResult<SensorId> {
        req.validate()?;
        self.actor(req.parent)?;
        let (width, height) = match req.modality {
            Modality::LidarProxy => (sensors::LIDAR_RAYS, 1),
            Modality::Imu => (6, 1),
            Modality::Gnss => (3, 1),
            _ => (req.width, req.height),
        };
        let id = SensorId(self.next_sensor);
        self.next_sensor += 1;
        self.sensors.insert(
            id,
            SensorSpec {
                id,
                parent: req.parent,
                modality: req.modality,
                width,
                height,
                mount: req.mount,
            },
        );
        Ok(id)
    }

    pub fn detach_sensor(&mut self, id: SensorId) -> SimResult<()> {
        self.sensors
            .remove(&id)
            .map(|_| ())
            .ok_or(SimError::SensorNotFound(id))
    }

    /// Resolves an explicit drone id, or the lowest-id drone when `None`.
    pub fn resolve_drone(&self, id: Option<ActorId>) -> SimResult<ActorId> {
        match id {
            Some(id) => {
                let a = self.actor(id)?;
                if a.kind != ActorKind::Drone {
                    return Err(SimError::WrongKind(id, "drone"));
                }
                Ok(id)
            }
            None => self
                .actors
                .values()
                .find(|a| a.kind == ActorKind::Drone)
                .map(|a| a.id)
                .ok_or(SimError::ActorNotFound(ActorId(0))),
        }
    }

    fn drone_mut(&mut self, id: Option<ActorId>) -> SimResult<(ActorId, &mut DroneBody)> {
        let id = self.resolve_drone(id)?;
        match self.actors.get_mut(&id).and_then(|a| a.controller.as_mut()) {
            Some(Controller::Drone(d)) => Ok((id, d)),
            _ => Err(SimError::WrongKind(id, "drone")),
        }
    }

    pub fn apply(&mut self, cmd: Command) -> SimResult<CommandOutput> {
        let physics = self.physics;
        match cmd {
            Command::SpawnActor { kind, pose, params } => {
                self.spawn_actor(kind, pose, params).map(CommandOutput::Spawned)
            }
            Command::SpawnRandom { kind, params } => {
                self.spawn_random(kind, params).map(CommandOutput::Spawned)
            }
            Command::DestroyActor(id) => self.destroy_actor(id).map(|_| CommandOutput::Done),
            Command::SetAutopilot {
                id,
                enabled,
                cruise_speed,
            } => self
                .set_autopilot(id, enabled, cruise_speed)
                .map(|_| CommandOutput::Done),
            Command::SetWeather(name) => self.set_weather(&name).map(|_| CommandOutput::Done),
            Command::AttachSensor(req) => self.attach_sensor(req).map(CommandOutput::SensorAttached),
            Command::DetachSensor(id) => self.detach_sensor(id).map(|_| CommandOutput::Done),
            Command::EnableApiControl { drone, enabled } => {
                let (_, d) = self.drone_mut(drone)?;
                aerial::enable_api_control(&mut d.state, enabled);
                Ok(CommandOutput::Done)
            }
            Command::SetVelocity { drone, velocity } => {
                let (id, d) = self.drone_mut(drone)?;
                aerial::set_velocity_command(id, &mut d.state, velocity, &physics)?;
                Ok(CommandOutput::Done)
            }
            Command::TakeoffTo { drone, altitude } => {
                let (id, d) = self.drone_mut(drone)?;
                aerial::takeoff_to(id, &mut d.state, altitude)?;
                Ok(CommandOutput::Done)
            }
        }
    }

    /// Advances exactly one tick. Each command's outcome is returned in
    /// order; a failing command never stops the tick.
    pub fn advance_tick(&mut self, commands: Vec<Command>) -> Vec<SimResult<CommandOutput>> {
        for a in self.actors.values_mut() {
            a.prev_velocity = a.velocity;
            a.prev_yaw = a.pose.orientation.yaw();
        }
        let results: Vec<_> = commands.into_iter().map(|c| self.apply(c)).collect();

        let dt = self.dt_render;
        let o = self.world_origin;
        let physics = self.physics;
        let substeps = self.substeps_per_tick;
        let mut drones_stepped = 0u64;
        for a in self.actors.values_mut() {
            match a.controller.as_mut() {
                Some(Controller::Vehicle(v)) => {
                    if v.autopilot {
                        if let Ok(cmd) = ground::autopilot_step(v) {
                            v.steering = cmd.steering;
                            v.speed = cmd.speed;
                        } else {
                            v.speed = 0.0;
                        }
                    }
                    *v = ground::step_vehicle(v, dt);
                    a.pose = v.pose();
                    a.velocity = v.velocity();
                }
                Some(Controller::Pedestrian(p)) => {
                    *p = ground::step_pedestrian(p, dt);
                    a.pose = p.pose();
                    a.velocity = p.velocity;
                }
                Some(Controller::Drone(d)) => {
                    d.state = aerial::integrate_over_tick(&d.state, &physics, substeps);
                    drones_stepped += 1;
                    let shared = frames::co_register(&d.state.pose_ned.position, &d.offset);
                    // Inputs are finite by construction; the transforms cannot fail.
                    a.pose = frames::ned_to_ue_pose(&PoseNed::new(shared, d.state.pose_ned.orientation), &o)
                        .expect("drone pose stays finite and unit");
                    let v = d.state.velocity_ned;
                    a.velocity = vec3(v.x, v.y, -v.z) * frames::CM_PER_M;
                }
                None => {}
            }
        }
        self.aerial_substeps += drones_stepped * substeps as u64;
        self.tick += 1;
        self.last_record = Arc::new(self.capture_all());
        results
    }

    pub fn world_snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            tick: self.tick,
            sim_time: self.sim_time(),
            weather: self.weather.name.to_string(),
            world_origin: to_array(&self.world_origin),
            actors: self
                .actors
                .values()
                .map(|a| ActorSnapshot {
                    id: a.id,
                    kind: a.kind,
                    location: to_array(&a.pose.position),
                    rotation: a.pose.orientation,
                    velocity: to_array(&a.velocity),
                    bbox: to_array(&a.bbox),
                })
                .collect(),
            sensor_count: self.sensors.len(),
        }
    }

    /// Shared-frame NED pose of an actor.
    pub fn shared_pose(&self, id: ActorId) -> SimResult<PoseNed> {
        frames::ue_to_ned_pose(&self.actor(id)?.pose, &self.world_origin)
    }

    pub fn multirotor_state(&self, id: Option<ActorId>) -> SimResult<MultirotorReport> {
        let id = self.resolve_drone(id)?;
        let body = self.actor(id)?.drone().ok_or(SimError::WrongKind(id, "drone"))?;
        Ok(MultirotorReport {
            id,
            tick: self.tick,
            state: aerial::multirotor_state(&body.state),
            offset: body.offset,
        })
    }

    pub fn scene(&self) -> Scene {
        let mut boxes: Vec<SceneBox> = self
            .map
            .obstacles
            .iter()
            .map(|o| SceneBox {
                actor: None,
                class: SemanticClass::Static,
                center: o.center,
                half_extents: o.half_extents,
                orientation: Quat::IDENTITY,
            })
            .collect();
        boxes.extend(self.actors.values().map(|a| SceneBox {
            actor: Some(a.id),
            class: a.kind.semantic_class(),
            center: a.pose.position,
            half_extents: a.bbox,
            orientation: a.pose.orientation,
        }));
        Scene {
            ground_half_extent: self.map.half_extent,
            boxes,
        }
    }

    /// A camera carried by `parent` at `mount`.
    pub fn camera_on(&self, parent: ActorId, mount: &PoseUe, width: u32, height: u32) -> SimResult<Camera> {
        let a = self.actor(parent)?;
        Ok(Camera::new(a.pose.compose(mount), width, height))
    }

    /// Renders an image modality from an ad hoc camera on `parent`.
    pub fn render_image(
        &self,
        parent: ActorId,
        modality: Modality,
        mount: &PoseUe,
        width: u32,
        height: u32,
    ) -> SimResult<Payload> {
        if width == 0 || height == 0 {
            return Err(SimError::invalid("image resolution must be positive"));
        }
        let cam = self.camera_on(parent, mount, width, height)?;
        self.render_payload(&self.scene(), parent, modality, &cam)
    }

    fn render_payload(
        &self,
        scene: &Scene,
        parent: ActorId,
        modality: Modality,
        cam: &Camera,
    ) -> SimResult<Payload> {
        let exclude = Some(parent);
        Ok(match modality {
            Modality::Depth => Payload::Depth(sensors::render_depth(cam, scene, exclude)),
            Modality::Semantic => Payload::Semantic(sensors::render_semantic(cam, scene, exclude)),
            Modality::RgbProxy => {
                Payload::Rgb(sensors::render_rgb_proxy(cam, scene, exclude, &self.weather))
            }
            other => {
                return Err(SimError::invalid(format!(
                    "{} is not an image modality",
                    other.as_str()
                )))
            }
        })
    }

    fn sample_sensor(&self, scene: &Scene, spec: &SensorSpec) -> Payload {
        let parent = &self.actors[&spec.parent];
        let pose = parent.pose.compose(&spec.mount);
        match spec.modality {
            Modality::LidarProxy => {
                Payload::Lidar(sensors::render_lidar(&pose, scene, Some(parent.id)))
            }
            Modality::Imu => Payload::Imu(sensors::sample_imu(
                &sensors::ue_velocity_to_ned(&parent.velocity),
                &sensors::ue_velocity_to_ned(&parent.prev_velocity),
                parent.pose.orientation.yaw(),
                parent.prev_yaw,
                self.dt_render,
                self.physics.gravity,
            )),
            Modality::Gnss => {
                let p = frames::ue_to_ned_position(&parent.pose.position, &self.world_origin)
                    .expect("actor positions are finite");
                Payload::Gnss(sensors::sample_gnss(p, self.tick))
            }
            image => {
                let cam = Camera::new(pose, spec.width, spec.height);
                self.render_payload(scene, parent.id, image, &cam)
                    .expect("image modality")
            }
        }
    }

    /// Samples every attached sensor from the current state. All streams
    /// carry the current tick.
    pub fn capture_all(&self) -> TickRecord {
        let scene = self.scene();
        let specs: Vec<&SensorSpec> = self.sensors.values().collect();
        let payloads: Vec<Payload> = specs
            .par_iter()
            .map(|spec| self.sample_sensor(&scene, spec))
            .collect();
        let mut record = TickRecord {
            tick: self.tick,
            ..Default::default()
        };
        for (spec, payload) in specs.into_iter().zip(payloads) {
            record.streams.insert(
                spec.id,
                StreamSample {
                    sensor_id: spec.id,
                    parent: spec.parent,
                    modality: spec.modality,
                    tick: self.tick,
                    payload: Arc::new(payload),
                },
            );
            if let Ok(pose) = self.shared_pose(spec.parent) {
                record.platforms.insert(
                    spec.parent,
                    PlatformPose {
                        kind: self.actors[&spec.parent].kind,
                        pose,
                    },
                );
            }
        }
        record
    }
}

/// Default downward camera mount for drones (just below the body).
pub fn drone_camera_mount() -> PoseUe {
    mount::down(vec3(0.0, 0.0, -15.0))
}
