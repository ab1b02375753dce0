//! Method tables for the two APIs.

use std::path::PathBuf;
use std::sync::mpsc::Sender;

use airground_core::math::from_array;
use airground_core::world::drone_camera_mount;
use airground_core::{Command, CommandOutput, PoseUe, SimResult, WorldState};
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::api::*;
use crate::kernel::KernelHandle;
use crate::server::Handler;
use crate::wire::{Request, Response, RpcError, METHOD_NOT_FOUND};

/// Routes one API's requests into the shared kernel.
pub struct ApiHandler {
    pub api: Api,
    pub kernel: KernelHandle,
}

fn params<T: DeserializeOwned>(v: &Value) -> Result<T, RpcError> {
    let v = if v.is_null() { json!({}) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| RpcError::invalid_params(e.to_string()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reply serializes")
}

fn encode_payload(tick: u64, modality: airground_core::sensors::Modality, p: &airground_core::sensors::Payload) -> SensorPayload {
    let (width, height) = p.dims();
    SensorPayload {
        tick,
        modality,
        dtype: p.dtype().to_string(),
        width,
        height,
        data: base64::engine::general_purpose::STANDARD.encode(p.encode()),
    }
}

fn actor_transform(world: &WorldState, p: &Value) -> Result<Value, RpcError> {
    let ActorIdParam { id } = params(p)?;
    let a = world.actor(id)?;
    Ok(to_value(&ActorTransform {
        id,
        kind: a.kind,
        tick: world.tick(),
        location: airground_core::math::to_array(&a.pose.position),
        rotation: a.pose.orientation,
        velocity: airground_core::math::to_array(&a.velocity),
        bbox: airground_core::math::to_array(&a.bbox),
    }))
}

fn sensor_data(world: &WorldState, p: &Value) -> Result<Value, RpcError> {
    let SensorIdParam { id } = params(p)?;
    let spec = world.sensor(id)?;
    let rec = world.last_record();
    let sample = rec.streams.get(&id).ok_or_else(|| {
        RpcError::new(
            crate::wire::SENSOR_NOT_FOUND,
            format!("sensor {id} has no capture yet; advance one tick"),
        )
    })?;
    Ok(to_value(&encode_payload(sample.tick, spec.modality, &sample.payload)))
}

fn capture_image(world: &WorldState, p: &Value) -> Result<Value, RpcError> {
    let c: CaptureParams = params(p)?;
    let drone = world.resolve_drone(c.drone)?;
    let mount = c.mount.unwrap_or_else(drone_camera_mount);
    let payload = world.render_image(drone, c.modality, &mount, c.width, c.height)?;
    Ok(to_value(&encode_payload(world.tick(), c.modality, &payload)))
}

fn read_only(api: Api, method: &str, world: &WorldState, p: &Value) -> Option<Result<Value, RpcError>> {
    let r = match (api, method) {
        (_, "ping") => Ok(to_value(&Pong { tick: world.tick() })),
        (_, "sensor_data") => sensor_data(world, p),
        (Api::Ground, "world_snapshot") => Ok(to_value(&world.world_snapshot())),
        (Api::Ground, "actor_transform") => actor_transform(world, p),
        (Api::Aerial, "multirotor_state") => params::<DroneParam>(p)
            .and_then(|d| world.multirotor_state(d.drone).map_err(RpcError::from))
            .map(|r| to_value(&r)),
        (Api::Aerial, "capture_image") => capture_image(world, p),
        _ => return None,
    };
    Some(r)
}

fn command_for(api: Api, method: &str, p: &Value) -> Option<Result<Command, RpcError>> {
    let c = match (api, method) {
        (_, "attach_sensor") => params::<AttachParams>(p).map(|a| {
            let default_mount = match a.modality {
                m if m.is_image() && api == Api::Aerial => drone_camera_mount(),
                _ => PoseUe::at(airground_core::Vec3::zeros()),
            };
            Command::AttachSensor(a.request(default_mount))
        }),
        (_, "detach_sensor") => params::<SensorIdParam>(p).map(|s| Command::DetachSensor(s.id)),
        (Api::Ground, "spawn_actor") => params::<SpawnRequest>(p).and_then(|s| {
            let kind = s.kind.ok_or_else(|| RpcError::invalid_params("missing kind"))?;
            match (s.random, s.pose()) {
                (true, _) => Ok(Command::SpawnRandom {
                    kind,
                    params: s.params(),
                }),
                (false, Some(pose)) => Ok(Command::SpawnActor {
                    kind,
                    pose,
                    params: s.params(),
                }),
                (false, None) => Err(RpcError::invalid_params("location or random required")),
            }
        }),
        (Api::Ground, "destroy_actor") => params::<ActorIdParam>(p).map(|a| Command::DestroyActor(a.id)),
        (Api::Ground, "set_autopilot") => params::<AutopilotParams>(p).map(|a| Command::SetAutopilot {
            id: a.id,
            enabled: a.enabled,
            cruise_speed: a.cruise_speed,
        }),
        (Api::Ground, "set_weather") => params::<WeatherParams>(p).map(|w| Command::SetWeather(w.name)),
        (Api::Aerial, "set_velocity") => params::<VelocityParams>(p).map(|v| Command::SetVelocity {
            drone: v.drone,
            velocity: from_array(v.velocity),
        }),
        (Api::Aerial, "enable_api_control") => {
            params::<ApiControlParams>(p).map(|c| Command::EnableApiControl {
                drone: c.drone,
                enabled: c.enabled,
            })
        }
        (Api::Aerial, "takeoff_to") => params::<TakeoffParams>(p).map(|t| Command::TakeoffTo {
            drone: t.drone,
            altitude: t.altitude,
        }),
        _ => return None,
    };
    Some(c)
}

fn output_value(out: CommandOutput) -> Value {
    match out {
        CommandOutput::Spawned(id) => to_value(&Spawned { id }),
        CommandOutput::SensorAttached(id) => to_value(&SensorAttached { id }),
        CommandOutput::Done => json!({}),
    }
}

impl Handler for ApiHandler {
    fn handle(&self, req: Request, out: &Sender<Response>) {
        let id = req.id;
        let send = |r: Result<Value, RpcError>| {
            let _ = out.send(Response::from_result(id, r));
        };
        let world = self.kernel.latest();
        if let Some(r) = read_only(self.api, &req.method, &world, &req.params) {
            return send(r);
        }
        drop(world);
        if let Some(cmd) = command_for(self.api, &req.method, &req.params) {
            match cmd {
                Ok(cmd) => {
                    let out = out.clone();
                    self.kernel.submit(
                        self.api,
                        cmd,
                        Box::new(move |r: SimResult<CommandOutput>| {
                            let r = r.map(output_value).map_err(RpcError::from);
                            let _ = out.send(Response::from_result(id, r));
                        }),
                    );
                }
                Err(e) => send(Err(e)),
            }
            return;
        }
        let out = out.clone();
        let done = move |r: Result<Value, RpcError>| {
            let _ = out.send(Response::from_result(id, r));
        };
        match (self.api, req.method.as_str()) {
            (Api::Ground, "tick") => self
                .kernel
                .request_tick(Box::new(move |r| done(r.map(|t| to_value(&t))))),
            (Api::Ground, "set_synchronous_mode") => match params::<SyncParams>(&req.params) {
                Ok(s) => self
                    .kernel
                    .set_synchronous(s.enabled, Box::new(move |_| done(Ok(json!({}))))),
                Err(e) => done(Err(e)),
            },
            (Api::Ground, "start_recording") => match params::<RecordingParams>(&req.params) {
                Ok(r) => self
                    .kernel
                    .start_recording(PathBuf::from(r.dir), Box::new(move |_| done(Ok(json!({}))))),
                Err(e) => done(Err(e)),
            },
            (Api::Ground, "stop_recording") => {
                self.kernel.stop_recording(Box::new(move |_| done(Ok(json!({})))))
            }
            (api, m) => done(Err(RpcError::new(
                METHOD_NOT_FOUND,
                format!("unknown {} method {m}", api.as_str()),
            ))),
        }
    }
}
