//! Round-trip latency of single API calls, and a fixed-delay endpoint to
//! calibrate the measurement against.

use std::fmt;
use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use airground_core::sensors::Modality;
use airground_core::{ActorId, ActorKind, Vec3};
use airground_rpc::api::{ActorIdParam, ApiControlParams, CaptureParams, Pong, Spawned, SpawnRequest, VelocityParams};
use airground_rpc::wire::{parse_request, read_frame, write_message};
use airground_rpc::{Client, ClientResult, Response, Session};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::stats::{self, SpreadSummary};
use crate::workload::{DRONE_SPAWN, GROUND_CAMERA};
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyCall {
    WorldSnapshot,
    ActorTransform,
    /// Timed spawn, each followed by an untimed destroy.
    SpawnActor,
    /// Untimed spawn, then a timed destroy.
    DestroyActor,
    MultirotorState,
    CaptureImage,
    SetVelocity,
    Ping,
}

impl LatencyCall {
    pub const ALL: [LatencyCall; 8] = [
        LatencyCall::WorldSnapshot,
        LatencyCall::ActorTransform,
        LatencyCall::SpawnActor,
        LatencyCall::DestroyActor,
        LatencyCall::MultirotorState,
        LatencyCall::CaptureImage,
        LatencyCall::SetVelocity,
        LatencyCall::Ping,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LatencyCall::WorldSnapshot => "world_snapshot",
            LatencyCall::ActorTransform => "actor_transform",
            LatencyCall::SpawnActor => "spawn_actor",
            LatencyCall::DestroyActor => "destroy_actor",
            LatencyCall::MultirotorState => "multirotor_state",
            LatencyCall::CaptureImage => "capture_image",
            LatencyCall::SetVelocity => "set_velocity",
            LatencyCall::Ping => "ping",
        }
    }

    fn needs_drone(&self) -> bool {
        matches!(
            self,
            LatencyCall::MultirotorState | LatencyCall::CaptureImage | LatencyCall::SetVelocity
        )
    }
}

impl fmt::Display for LatencyCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatencyCall {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LatencyCall::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown call {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyConfig {
    pub warmup: usize,
    pub calls: usize,
    /// Resolution of `capture_image` requests.
    pub capture_resolution: (u32, u32),
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            warmup: 500,
            calls: 5000,
            capture_resolution: GROUND_CAMERA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub call: String,
    /// Successful timed calls, microseconds, in issue order.
    pub samples_us: Vec<f64>,
    pub summary: Option<SpreadSummary>,
    pub failures: usize,
    pub failure_log: Vec<String>,
    /// Actor counts around the timed calls (excluding fixtures); equal when
    /// spawns were paired with destroys.
    pub actors_before: Option<usize>,
    pub actors_after: Option<usize>,
}

/// `warmup` discarded calls, then `calls` timed ones. `op` returns the
/// duration of the part it wants timed. Failed calls are logged and
/// excluded; a lost connection ends the run early.
pub fn measure(
    warmup: usize,
    calls: usize,
    mut op: impl FnMut() -> ClientResult<Duration>,
) -> (Vec<f64>, usize, Vec<String>) {
    let mut samples = Vec::with_capacity(calls);
    let mut failures = 0;
    let mut log = Vec::new();
    for i in 0..warmup + calls {
        match op() {
            Ok(d) if i >= warmup => samples.push(d.as_secs_f64() * 1e6),
            Ok(_) => {}
            Err(e) => {
                failures += 1;
                if log.len() < 100 {
                    log.push(format!("call {i}: {e}"));
                }
                if crate::harness::is_crash(&e) {
                    break;
                }
            }
        }
    }
    (samples, failures, log)
}

fn timed(f: impl FnOnce() -> ClientResult<Value>) -> ClientResult<Duration> {
    let t0 = Instant::now();
    f()?;
    Ok(t0.elapsed())
}

fn report(call: &str, (samples, failures, log): (Vec<f64>, usize, Vec<String>)) -> LatencyReport {
    LatencyReport {
        call: call.to_string(),
        summary: stats::spread(&samples).ok(),
        samples_us: samples,
        failures,
        failure_log: log,
        actors_before: None,
        actors_after: None,
    }
}

/// Times one method with fixed params against any endpoint speaking the
/// wire protocol.
pub fn latency_probe(client: &mut Client, method: &str, params: &Value, cfg: &LatencyConfig) -> LatencyReport {
    let r = measure(cfg.warmup, cfg.calls, || timed(|| client.call(method, params)));
    report(method, r)
}

fn spawn(session: &mut Session, req: &SpawnRequest) -> ClientResult<ActorId> {
    Ok(session.ground.0.call_as::<Spawned>("spawn_actor", req)?.id)
}

fn actor_count(session: &mut Session) -> ClientResult<usize> {
    Ok(session.ground.world_snapshot()?.actors.len())
}

/// Benchmarks `call` against a live simulator. Switches the kernel to
/// free-running mode so mutating calls are applied without a driving
/// client; fixtures (a vehicle, a drone) are spawned before and destroyed
/// after the run.
pub fn latency_bench(session: &mut Session, call: LatencyCall, cfg: &LatencyConfig) -> Result<LatencyReport, BenchError> {
    if cfg.calls == 0 || cfg.warmup == 0 {
        return Err(BenchError::Config("latency warm-up and call counts must be positive".into()));
    }
    session.ground.set_synchronous_mode(false).map_err(BenchError::Setup)?;
    let mut fixtures = Vec::new();
    let vehicle = match call {
        LatencyCall::ActorTransform => {
            let id = spawn(session, &SpawnRequest::random(ActorKind::Vehicle)).map_err(BenchError::Setup)?;
            fixtures.push(id);
            Some(id)
        }
        _ => None,
    };
    let drone = if call.needs_drone() {
        let at = Vec3::new(DRONE_SPAWN[0], DRONE_SPAWN[1], DRONE_SPAWN[2]);
        let id = spawn(session, &SpawnRequest::at(ActorKind::Drone, at)).map_err(BenchError::Setup)?;
        fixtures.push(id);
        session
            .aerial
            .0
            .call("enable_api_control", ApiControlParams { drone: Some(id), enabled: true })
            .map_err(BenchError::Setup)?;
        Some(id)
    } else {
        None
    };

    let before = actor_count(session).map_err(BenchError::Setup)?;
    let (w, h) = cfg.capture_resolution;
    let r = {
        let s = &mut *session;
        measure(cfg.warmup, cfg.calls, || match call {
            LatencyCall::WorldSnapshot => timed(|| s.ground.0.call("world_snapshot", json!({}))),
            LatencyCall::Ping => timed(|| s.ground.0.call("ping", json!({}))),
            LatencyCall::ActorTransform => timed(|| {
                s.ground
                    .0
                    .call("actor_transform", ActorIdParam { id: vehicle.expect("fixture") })
            }),
            LatencyCall::SpawnActor => {
                let t0 = Instant::now();
                let id = spawn(s, &SpawnRequest::random(ActorKind::Vehicle))?;
                let d = t0.elapsed();
                s.ground.destroy_actor(id)?;
                Ok(d)
            }
            LatencyCall::DestroyActor => {
                let id = spawn(s, &SpawnRequest::random(ActorKind::Vehicle))?;
                timed(|| s.ground.0.call("destroy_actor", ActorIdParam { id }))
            }
            LatencyCall::MultirotorState => timed(|| s.aerial.0.call("multirotor_state", json!({ "drone": drone }))),
            LatencyCall::CaptureImage => timed(|| {
                s.aerial.0.call(
                    "capture_image",
                    CaptureParams {
                        drone,
                        modality: Modality::RgbProxy,
                        width: w,
                        height: h,
                        mount: None,
                    },
                )
            }),
            LatencyCall::SetVelocity => timed(|| {
                s.aerial.0.call(
                    "set_velocity",
                    VelocityParams {
                        drone,
                        velocity: [0.0, 0.0, 0.0],
                    },
                )
            }),
        })
    };
    let after = actor_count(session).ok();
    for id in fixtures {
        let _ = session.ground.destroy_actor(id);
    }
    let mut rep = report(call.as_str(), r);
    rep.actors_before = Some(before);
    rep.actors_after = after;
    Ok(rep)
}

/// Answers every request with `{"tick": 0}` after spinning for a fixed
/// service time. Each connection is served on one thread with no hand-off,
/// so round trips are the delay plus loopback cost.
pub struct DelayServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

fn spin(d: Duration) {
    let t0 = Instant::now();
    while t0.elapsed() < d {
        std::hint::spin_loop();
    }
}

fn serve_delayed(stream: TcpStream, delay: Duration) {
    let Ok(w) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::new(w);
    while let Ok(Some(frame)) = read_frame(&mut reader) {
        let resp = match parse_request(&frame) {
            Ok(req) => {
                spin(delay);
                Response::ok(req.id, serde_json::to_value(Pong { tick: 0 }).expect("pong"))
            }
            Err((id, e)) => Response::err(id, e),
        };
        if write_message(&mut writer, &resp).is_err() {
            break;
        }
    }
}

impl DelayServer {
    pub fn start(delay: Duration) -> std::io::Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", 0))?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let accept = thread::spawn(move || {
            for s in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(s) = s {
                    let _ = s.set_nodelay(true);
                    thread::spawn(move || serve_delayed(s, delay));
                }
            }
        });
        Ok(Self {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for DelayServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Ok(s) = TcpStream::connect(self.addr) {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}
