//! Blocking clients. Requests can be pipelined: `send` returns the id and
//! `wait` collects that id's response, stashing any others that arrive
//! first.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use airground_core::sensors::{Modality, SensorId};
use airground_core::world::{MultirotorReport, WorldSnapshot};
use airground_core::{ActorId, PoseUe, Vec3};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::api::*;
use crate::wire::{read_frame, write_frame, ProtocolError, Request, Response, RpcError};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connect failed: {0}")]
    Connect(#[source] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server closed the connection")]
    Closed,
    #[error("rpc error {0}")]
    Rpc(RpcError),
    #[error("unexpected reply shape: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn code(&self) -> Option<i64> {
        match self {
            ClientError::Rpc(e) => Some(e.code),
            _ => None,
        }
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    next_id: u64,
    stash: HashMap<u64, Response>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> ClientResult<Self> {
        let stream = TcpStream::connect(addr).map_err(ClientError::Connect)?;
        stream.set_nodelay(true).map_err(ClientError::Connect)?;
        let read_half = stream.try_clone().map_err(ClientError::Connect)?;
        Ok(Self {
            reader: BufReader::new(read_half),
            writer: BufWriter::new(stream),
            next_id: 1,
            stash: HashMap::new(),
        })
    }

    pub fn send(&mut self, method: &str, params: impl Serialize) -> ClientResult<u64> {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request {
            id,
            method: method.to_string(),
            params: serde_json::to_value(params).map_err(|e| ClientError::Decode(e.to_string()))?,
        };
        let bytes = serde_json::to_vec(&req).map_err(|e| ClientError::Decode(e.to_string()))?;
        write_frame(&mut self.writer, &bytes)?;
        Ok(id)
    }

    /// Sends raw bytes as one frame; for protocol tests.
    pub fn send_raw(&mut self, payload: &[u8]) -> ClientResult<()> {
        write_frame(&mut self.writer, payload)?;
        Ok(())
    }

    pub fn read_response(&mut self) -> ClientResult<Response> {
        let frame = read_frame(&mut self.reader)?.ok_or(ClientError::Closed)?;
        serde_json::from_slice(&frame)
            .map_err(|e| ClientError::Protocol(ProtocolError::Malformed(e.to_string())))
    }

    pub fn wait(&mut self, id: u64) -> ClientResult<Value> {
        let resp = match self.stash.remove(&id) {
            Some(r) => r,
            None => loop {
                let r = self.read_response()?;
                match r.id {
                    Some(rid) if rid == id => break r,
                    Some(rid) => {
                        self.stash.insert(rid, r);
                    }
                    None => {
                        let e = r.error.map(|e| e.message).unwrap_or_default();
                        return Err(ProtocolError::Malformed(e).into());
                    }
                }
            },
        };
        match (resp.result, resp.error) {
            (_, Some(e)) => Err(ClientError::Rpc(e)),
            (Some(v), None) => Ok(v),
            (None, None) => Ok(Value::Null),
        }
    }

    pub fn wait_as<T: DeserializeOwned>(&mut self, id: u64) -> ClientResult<T> {
        let v = self.wait(id)?;
        serde_json::from_value(v).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn call(&mut self, method: &str, params: impl Serialize) -> ClientResult<Value> {
        let id = self.send(method, params)?;
        self.wait(id)
    }

    pub fn call_as<T: DeserializeOwned>(&mut self, method: &str, params: impl Serialize) -> ClientResult<T> {
        let id = self.send(method, params)?;
        self.wait_as(id)
    }

    /// Returns once every request sent before it has been read by the
    /// server, so their commands are queued ahead of anything sent later on
    /// another connection.
    pub fn barrier(&mut self) -> ClientResult<u64> {
        Ok(self.call_as::<Pong>("ping", json!({}))?.tick)
    }
}

pub struct GroundClient(pub Client);

impl GroundClient {
    pub fn connect(addr: impl ToSocketAddrs) -> ClientResult<Self> {
        Client::connect(addr).map(Self)
    }

    pub fn world_snapshot(&mut self) -> ClientResult<WorldSnapshot> {
        self.0.call_as("world_snapshot", json!({}))
    }

    pub fn actor_transform(&mut self, id: ActorId) -> ClientResult<ActorTransform> {
        self.0.call_as("actor_transform", ActorIdParam { id })
    }

    /// In synchronous mode the reply arrives only after the next `tick`;
    /// use [`Client::send`] and [`Session::step`] to pipeline.
    pub fn spawn_actor(&mut self, req: &SpawnRequest) -> ClientResult<ActorId> {
        Ok(self.0.call_as::<Spawned>("spawn_actor", req)?.id)
    }

    pub fn destroy_actor(&mut self, id: ActorId) -> ClientResult<()> {
        self.0.call("destroy_actor", ActorIdParam { id }).map(drop)
    }

    pub fn tick(&mut self) -> ClientResult<TickInfo> {
        self.0.call_as("tick", json!({}))
    }

    pub fn set_synchronous_mode(&mut self, enabled: bool) -> ClientResult<()> {
        self.0.call("set_synchronous_mode", SyncParams { enabled }).map(drop)
    }

    pub fn start_recording(&mut self, dir: &str) -> ClientResult<()> {
        self.0
            .call("start_recording", RecordingParams { dir: dir.to_string() })
            .map(drop)
    }

    pub fn stop_recording(&mut self) -> ClientResult<()> {
        self.0.call("stop_recording", json!({})).map(drop)
    }

    pub fn sensor_data(&mut self, id: SensorId) -> ClientResult<SensorPayload> {
        self.0.call_as("sensor_data", SensorIdParam { id })
    }
}

pub struct AerialClient(pub Client);

impl AerialClient {
    pub fn connect(addr: impl ToSocketAddrs) -> ClientResult<Self> {
        Client::connect(addr).map(Self)
    }

    pub fn multirotor_state(&mut self, drone: Option<ActorId>) -> ClientResult<MultirotorReport> {
        self.0.call_as("multirotor_state", DroneParam { drone })
    }

    pub fn capture_image(
        &mut self,
        drone: Option<ActorId>,
        modality: Modality,
        width: u32,
        height: u32,
        mount: Option<PoseUe>,
    ) -> ClientResult<SensorPayload> {
        self.0.call_as(
            "capture_image",
            CaptureParams {
                drone,
                modality,
                width,
                height,
                mount,
            },
        )
    }

    pub fn sensor_data(&mut self, id: SensorId) -> ClientResult<SensorPayload> {
        self.0.call_as("sensor_data", SensorIdParam { id })
    }
}

/// A mutating request to pipeline into the next tick.
#[derive(Debug, Clone)]
pub struct Pending {
    pub api: Api,
    pub method: &'static str,
    pub params: Value,
}

impl Pending {
    pub fn ground(method: &'static str, params: impl Serialize) -> Self {
        Self {
            api: Api::Ground,
            method,
            params: serde_json::to_value(params).expect("params serialize"),
        }
    }

    pub fn aerial(method: &'static str, params: impl Serialize) -> Self {
        Self {
            api: Api::Aerial,
            method,
            params: serde_json::to_value(params).expect("params serialize"),
        }
    }

    pub fn set_velocity(drone: Option<ActorId>, v: Vec3) -> Self {
        Self::aerial(
            "set_velocity",
            VelocityParams {
                drone,
                velocity: [v.x, v.y, v.z],
            },
        )
    }
}

/// A ground and an aerial connection driven together in synchronous mode.
pub struct Session {
    pub ground: GroundClient,
    pub aerial: AerialClient,
}

impl Session {
    pub fn connect(ground: impl ToSocketAddrs, aerial: impl ToSocketAddrs) -> ClientResult<Self> {
        Ok(Self {
            ground: GroundClient::connect(ground)?,
            aerial: AerialClient::connect(aerial)?,
        })
    }

    /// Queues `cmds` (ground ones first, in order), advances one tick, and
    /// returns the tick info with each command's result.
    pub fn step(&mut self, cmds: &[Pending]) -> ClientResult<(TickInfo, Vec<ClientResult<Value>>)> {
        let (info, results) = self.submit(cmds)?;
        match info {
            Ok(info) => Ok((info, results)),
            Err(e) => Err(ClientError::Rpc(e)),
        }
    }

    /// Like [`Session::step`] but also works when the kernel is free-running:
    /// the `tick` then fails with a mode error and the commands are applied
    /// by the loop on its own.
    pub fn submit(
        &mut self,
        cmds: &[Pending],
    ) -> ClientResult<(Result<TickInfo, RpcError>, Vec<ClientResult<Value>>)> {
        let mut ids = Vec::with_capacity(cmds.len());
        let mut aerial_sent = false;
        for c in cmds {
            let client = match c.api {
                Api::Ground => &mut self.ground.0,
                Api::Aerial => {
                    aerial_sent = true;
                    &mut self.aerial.0
                }
            };
            ids.push((c.api, client.send(c.method, &c.params)?));
        }
        if aerial_sent {
            self.aerial.0.barrier()?;
        }
        let tick_id = self.ground.0.send("tick", json!({}))?;
        let info = match self.ground.0.wait_as::<TickInfo>(tick_id) {
            Ok(info) => Ok(info),
            Err(ClientError::Rpc(e)) if e.code == crate::wire::MODE_ERROR => Err(e),
            Err(e) => return Err(e),
        };
        let results = ids
            .into_iter()
            .map(|(api, id)| match api {
                Api::Ground => self.ground.0.wait(id),
                Api::Aerial => self.aerial.0.wait(id),
            })
            .collect();
        Ok((info, results))
    }

    /// One command applied in its own tick; its error is returned.
    pub fn apply(&mut self, cmd: Pending) -> ClientResult<Value> {
        let (_, mut r) = self.step(std::slice::from_ref(&cmd))?;
        r.pop().expect("one result")
    }

    pub fn spawn(&mut self, req: &SpawnRequest) -> ClientResult<ActorId> {
        let v = self.apply(Pending::ground("spawn_actor", req))?;
        let s: Spawned = serde_json::from_value(v).map_err(|e| ClientError::Decode(e.to_string()))?;
        Ok(s.id)
    }

    pub fn attach(&mut self, api: Api, params: &AttachParams) -> ClientResult<SensorId> {
        let p = match api {
            Api::Ground => Pending::ground("attach_sensor", params),
            Api::Aerial => Pending::aerial("attach_sensor", params),
        };
        let v = self.apply(p)?;
        let s: SensorAttached = serde_json::from_value(v).map_err(|e| ClientError::Decode(e.to_string()))?;
        Ok(s.id)
    }
}
