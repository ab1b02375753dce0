//! Multi-modal dataset capture: a populated town, an instrumented ego
//! vehicle and drone, and one aligned record per tick on disk.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use airground_bench::stats;
use airground_bench::workload::DRONE_SPAWN;
use airground_core::math::vec3;
use airground_core::sensors::{mount, read_meta, record_dir_name, Modality, SensorId};
use airground_core::{ActorId, ActorKind, PoseUe, Vec3};
use airground_rpc::api::{
    ActorIdParam, ApiControlParams, AttachParams, AutopilotParams, SensorAttached, Spawned, SpawnRequest,
    TakeoffParams,
};
use airground_rpc::{Api, Pending, Session};
use serde::{Deserialize, Serialize};

use crate::common::{all_ok, decode, RateMeter};
use crate::{write_json, WorkflowError, WorkflowResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub out_dir: PathBuf,
    pub ticks: u64,
    /// Including the ego vehicle.
    pub vehicles: usize,
    pub pedestrians: usize,
    /// Every camera's resolution.
    pub resolution: (u32, u32),
    pub drone_altitude_m: f64,
    /// Leave the spawned actors in the world afterwards.
    pub keep_actors: bool,
}

impl DatasetConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            ticks: 1000,
            vehicles: 30,
            pedestrians: 10,
            resolution: (64, 64),
            drone_altitude_m: 20.0,
            keep_actors: false,
        }
    }

    pub fn validate(&self) -> WorkflowResult<()> {
        if self.ticks == 0 {
            return Err(WorkflowError::Config("ticks must be positive".into()));
        }
        if self.vehicles == 0 {
            return Err(WorkflowError::Config("need at least the ego vehicle".into()));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(WorkflowError::Config("resolution must be positive".into()));
        }
        if !(self.drone_altitude_m.is_finite() && self.drone_altitude_m > 0.0) {
            return Err(WorkflowError::Config("drone altitude must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorEntry {
    pub id: SensorId,
    pub parent: ActorId,
    pub api: Api,
    pub modality: Modality,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WriteLatency {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub sensors: Vec<SensorEntry>,
    pub ego_vehicle: Option<ActorId>,
    pub drone: Option<ActorId>,
    pub first_tick: Option<u64>,
    pub last_tick: Option<u64>,
    /// Record directories found on disk for the recorded ticks.
    pub records: usize,
    /// Records missing any of the attached streams.
    pub incomplete_records: usize,
    /// Largest |stream tick - record tick| over all records.
    pub max_alignment_deviation: u64,
    pub write_latency: Option<WriteLatency>,
    pub fps: Option<f64>,
    pub rpc_errors: u64,
    pub errors: Vec<String>,
    /// The run stopped before all ticks were recorded.
    pub partial: bool,
}

impl DatasetManifest {
    pub fn aligned(&self) -> bool {
        !self.partial
            && self.records as u64 == self.config.ticks
            && self.incomplete_records == 0
            && self.max_alignment_deviation == 0
    }
}

struct Rig {
    actors: Vec<ActorId>,
    ego: Option<ActorId>,
    drone: Option<ActorId>,
    sensors: Vec<SensorEntry>,
}

/// Ground sensors on the ego vehicle: (label, modality, mount).
fn ground_rig() -> Vec<(&'static str, Modality, PoseUe)> {
    let roof = vec3(0.0, 0.0, 100.0);
    vec![
        ("front_rgb", Modality::RgbProxy, mount::forward(roof)),
        ("front_semantic", Modality::Semantic, mount::forward(roof)),
        ("front_depth", Modality::Depth, mount::forward(roof)),
        ("lidar", Modality::LidarProxy, mount::forward(vec3(0.0, 0.0, 120.0))),
        ("gnss", Modality::Gnss, mount::forward(Vec3::zeros())),
        ("imu", Modality::Imu, mount::forward(Vec3::zeros())),
        ("rear_rgb", Modality::RgbProxy, mount::yawed(roof, std::f64::consts::PI)),
        ("rear_semantic", Modality::Semantic, mount::yawed(roof, std::f64::consts::PI)),
    ]
}

/// Aerial sensors; `None` takes the API's default mount.
fn aerial_rig() -> Vec<(&'static str, Modality)> {
    vec![
        ("aerial_rgb", Modality::RgbProxy),
        ("aerial_depth", Modality::Depth),
        ("aerial_imu", Modality::Imu),
        ("aerial_gnss", Modality::Gnss),
    ]
}

/// Walking paths on a line inside the loop, clear of the road and the
/// static boxes.
fn pedestrian_request(i: usize) -> SpawnRequest {
    let x = -12_000.0 + (i % 10) as f64 * 2_600.0;
    let y = 800.0 + (i / 10) as f64 * 600.0;
    let z = ActorKind::Pedestrian.default_bbox().z;
    SpawnRequest {
        path: vec![[x, y, z], [x + 1_500.0, y, z]],
        wrap: true,
        ..SpawnRequest::at(ActorKind::Pedestrian, vec3(x, y, z))
    }
}

fn deploy(session: &mut Session, cfg: &DatasetConfig, rig: &mut Rig) -> WorkflowResult<()> {
    let mut cmds = Vec::new();
    for _ in 0..cfg.vehicles {
        cmds.push(Pending::ground("spawn_actor", SpawnRequest::random(ActorKind::Vehicle)));
    }
    for i in 0..cfg.pedestrians {
        cmds.push(Pending::ground("spawn_actor", pedestrian_request(i)));
    }
    let d = DRONE_SPAWN;
    cmds.push(Pending::ground("spawn_actor", SpawnRequest::at(ActorKind::Drone, vec3(d[0], d[1], d[2]))));
    let (_, results) = session.step(&cmds)?;
    let mut first_err = None;
    let mut ids = Vec::with_capacity(results.len());
    for r in results {
        match decode::<Spawned>(r) {
            Ok(s) => {
                ids.push(Some(s.id));
                rig.actors.push(s.id);
            }
            Err(e) => {
                ids.push(None);
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e.into());
    }
    let ego = ids[0].expect("checked");
    let drone = ids[ids.len() - 1].expect("checked");
    rig.ego = Some(ego);
    rig.drone = Some(drone);

    let (w, h) = cfg.resolution;
    let mut cmds = Vec::new();
    let mut pending = Vec::new();
    for (label, modality, m) in ground_rig() {
        let p = AttachParams {
            parent: ego,
            modality,
            width: w,
            height: h,
            mount: Some(m),
        };
        cmds.push(Pending::ground("attach_sensor", p));
        pending.push((label, modality, ego, Api::Ground));
    }
    for (label, modality) in aerial_rig() {
        let p = AttachParams {
            parent: drone,
            modality,
            width: w,
            height: h,
            mount: None,
        };
        cmds.push(Pending::aerial("attach_sensor", p));
        pending.push((label, modality, drone, Api::Aerial));
    }
    for id in ids[..cfg.vehicles].iter().flatten() {
        cmds.push(Pending::ground(
            "set_autopilot",
            AutopilotParams {
                id: *id,
                enabled: true,
                cruise_speed: None,
            },
        ));
    }
    cmds.push(Pending::aerial(
        "enable_api_control",
        ApiControlParams {
            drone: Some(drone),
            enabled: true,
        },
    ));
    cmds.push(Pending::aerial(
        "takeoff_to",
        TakeoffParams {
            drone: Some(drone),
            altitude: cfg.drone_altitude_m,
        },
    ));
    let (_, results) = session.step(&cmds)?;
    let mut results = results.into_iter();
    for (label, modality, parent, api) in pending {
        let s = decode::<SensorAttached>(results.next().expect("one result per command"))?;
        rig.sensors.push(SensorEntry {
            id: s.id,
            parent,
            api,
            modality,
            label: label.to_string(),
        });
    }
    all_ok(results.collect())?;
    Ok(())
}

fn teardown(session: &mut Session, rig: &Rig) -> WorkflowResult<()> {
    let cmds: Vec<Pending> = rig
        .actors
        .iter()
        .map(|&id| Pending::ground("destroy_actor", ActorIdParam { id }))
        .collect();
    if !cmds.is_empty() {
        all_ok(session.step(&cmds)?.1)?;
    }
    Ok(())
}

fn has_records(dir: &Path) -> bool {
    std::fs::read_dir(dir).is_ok_and(|entries| {
        entries
            .flatten()
            .any(|e| e.file_name().to_string_lossy().starts_with("tick_"))
    })
}

/// Spawns the scene, records `cfg.ticks` ticks into `cfg.out_dir`, checks
/// every record on disk, and writes `manifest.json` next to the records.
/// A run cut short by an RPC failure still writes its manifest, marked
/// partial.
pub fn collect_dataset(session: &mut Session, cfg: &DatasetConfig) -> WorkflowResult<DatasetManifest> {
    cfg.validate()?;
    if has_records(&cfg.out_dir) {
        return Err(WorkflowError::Config(format!(
            "{} already holds records",
            cfg.out_dir.display()
        )));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    session.ground.set_synchronous_mode(true)?;
    let mut rig = Rig {
        actors: Vec::new(),
        ego: None,
        drone: None,
        sensors: Vec::new(),
    };
    if let Err(e) = deploy(session, cfg, &mut rig) {
        let _ = teardown(session, &rig);
        return Err(e);
    }

    let mut errors = Vec::new();
    let mut rpc_errors = 0;
    let mut partial = false;
    let mut recorded = BTreeSet::new();
    let mut write_ms = Vec::new();
    let mut meter = RateMeter::default();
    let dir = cfg.out_dir.to_string_lossy().into_owned();
    match session.ground.start_recording(&dir) {
        Ok(()) => {
            for _ in 0..cfg.ticks {
                match meter.time(|| session.ground.tick()) {
                    Ok(info) => {
                        if let Some(us) = info.write_us {
                            recorded.insert(info.tick);
                            write_ms.push(us / 1e3);
                        }
                        if let Some(e) = info.record_error {
                            errors.push(format!("tick {}: {e}", info.tick));
                        }
                    }
                    Err(e) => {
                        rpc_errors += 1;
                        errors.push(format!("tick: {e}"));
                        partial = true;
                        break;
                    }
                }
            }
            if let Err(e) = session.ground.stop_recording() {
                rpc_errors += 1;
                errors.push(format!("stop_recording: {e}"));
            }
        }
        Err(e) => {
            rpc_errors += 1;
            errors.push(format!("start_recording: {e}"));
            partial = true;
        }
    }

    let expected = rig.sensors.len();
    let mut records = 0;
    let mut incomplete = 0;
    let mut max_dev = 0;
    for &tick in &recorded {
        match read_meta(&cfg.out_dir.join(record_dir_name(tick))) {
            Ok(meta) => {
                records += 1;
                if meta.streams.len() != expected {
                    incomplete += 1;
                }
                for s in &meta.streams {
                    max_dev = max_dev.max(s.tick.abs_diff(meta.tick));
                }
            }
            Err(e) => errors.push(format!("tick {tick}: {e}")),
        }
    }
    if !cfg.keep_actors {
        if let Err(e) = teardown(session, &rig) {
            rpc_errors += 1;
            errors.push(format!("teardown: {e}"));
        }
    }

    let write_latency = match (stats::mean(&write_ms), stats::median(&write_ms)) {
        (Ok(mean_ms), Ok(median_ms)) => Some(WriteLatency {
            mean_ms,
            std_ms: stats::std_dev(&write_ms).unwrap_or(0.0),
            median_ms,
            n: write_ms.len(),
        }),
        _ => None,
    };
    let manifest = DatasetManifest {
        config: cfg.clone(),
        sensors: rig.sensors,
        ego_vehicle: rig.ego,
        drone: rig.drone,
        first_tick: recorded.first().copied(),
        last_tick: recorded.last().copied(),
        records,
        incomplete_records: incomplete,
        max_alignment_deviation: max_dev,
        write_latency,
        fps: meter.harmonic_fps(),
        rpc_errors,
        errors,
        partial: partial || (recorded.len() as u64) < cfg.ticks,
    };
    write_json(&cfg.out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
