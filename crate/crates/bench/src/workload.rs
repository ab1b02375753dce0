//! Named workload profiles and their spawn/teardown over RPC.

use std::fmt;
use std::str::FromStr;

use airground_core::sensors::{Modality, SensorId};
use airground_core::{ActorId, ActorKind, Vec3};
use airground_rpc::api::{ActorIdParam, AttachParams, AutopilotParams, SensorAttached, Spawned, SpawnRequest, TakeoffParams, ApiControlParams};
use airground_rpc::{Api, ClientError, ClientResult, Pending, Session};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Idle,
    GroundOnly,
    ModerateJoint,
    Surveillance,
    Endurance,
}

impl Profile {
    pub const ALL: [Profile; 5] = [
        Profile::Idle,
        Profile::GroundOnly,
        Profile::ModerateJoint,
        Profile::Surveillance,
        Profile::Endurance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Idle => "idle",
            Profile::GroundOnly => "ground_only",
            Profile::ModerateJoint => "moderate_joint",
            Profile::Surveillance => "surveillance",
            Profile::Endurance => "endurance",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| format!("unknown profile {s}"))
    }
}

/// One sensor in a workload, attached to the `parent`-th spawned vehicle
/// or to the drone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSlot {
    pub parent: Parent,
    pub modality: Modality,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parent {
    Vehicle(usize),
    Drone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub vehicles: usize,
    pub autopilot: bool,
    pub pedestrians: usize,
    pub drone: bool,
    pub sensors: Vec<SensorSlot>,
}

pub const GROUND_CAMERA: (u32, u32) = (1280, 720);
pub const AERIAL_CAMERA: (u32, u32) = (1920, 1080);

/// Hover point of the workload drone, inside the road loop and clear of
/// the static boxes (cm).
pub const DRONE_SPAWN: [f64; 3] = [0.0, 5_000.0, 0.0];
pub const DRONE_ALTITUDE_M: f64 = 10.0;

impl WorkloadSpec {
    /// The profile at its nominal camera resolutions.
    pub fn for_profile(profile: Profile) -> Self {
        let cam = |parent, modality| SensorSlot {
            parent,
            modality,
            width: GROUND_CAMERA.0,
            height: GROUND_CAMERA.1,
        };
        let ground_rig = || {
            let mut s = Vec::new();
            for v in 0..2 {
                for m in [Modality::RgbProxy, Modality::Depth, Modality::Semantic] {
                    s.push(cam(Parent::Vehicle(v), m));
                }
            }
            s.push(cam(Parent::Vehicle(2), Modality::LidarProxy));
            s.push(cam(Parent::Vehicle(2), Modality::Gnss));
            s
        };
        match profile {
            Profile::Idle => Self {
                vehicles: 0,
                autopilot: false,
                pedestrians: 0,
                drone: false,
                sensors: Vec::new(),
            },
            Profile::GroundOnly => Self {
                vehicles: 3,
                autopilot: true,
                pedestrians: 2,
                drone: false,
                sensors: ground_rig(),
            },
            Profile::ModerateJoint | Profile::Endurance => Self {
                drone: true,
                ..Self::for_profile(Profile::GroundOnly)
            },
            Profile::Surveillance => Self {
                vehicles: 8,
                autopilot: true,
                pedestrians: 0,
                drone: true,
                sensors: vec![SensorSlot {
                    parent: Parent::Drone,
                    modality: Modality::RgbProxy,
                    width: AERIAL_CAMERA.0,
                    height: AERIAL_CAMERA.1,
                }],
            },
        }
    }

    /// Replaces every camera resolution; for desk-scale and test runs.
    pub fn with_resolution(mut self, width: u32, height: u32) -> Self {
        for s in &mut self.sensors {
            if s.modality.is_image() {
                s.width = width;
                s.height = height;
            }
        }
        self
    }
}

/// What a deployment created, in spawn order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Deployed {
    pub vehicles: Vec<ActorId>,
    pub pedestrians: Vec<ActorId>,
    pub drone: Option<ActorId>,
    pub sensors: Vec<SensorId>,
}

impl Deployed {
    pub fn actors(&self) -> impl Iterator<Item = ActorId> + '_ {
        self.vehicles
            .iter()
            .chain(&self.pedestrians)
            .copied()
            .chain(self.drone)
    }
}

fn decode<T: serde::de::DeserializeOwned>(r: ClientResult<serde_json::Value>) -> ClientResult<T> {
    serde_json::from_value(r?).map_err(|e| ClientError::Decode(e.to_string()))
}

fn submit_all(session: &mut Session, cmds: &[Pending]) -> ClientResult<Vec<ClientResult<serde_json::Value>>> {
    Ok(session.submit(cmds)?.1)
}

/// Spawns actors, then sensors, then starts autopilot and drone takeoff.
/// Works in either kernel mode. On error, whatever was spawned is torn
/// down before returning.
pub fn deploy(session: &mut Session, spec: &WorkloadSpec) -> ClientResult<Deployed> {
    let mut d = Deployed::default();
    let r = deploy_into(session, spec, &mut d);
    if let Err(e) = r {
        let _ = teardown(session, &d);
        return Err(e);
    }
    Ok(d)
}

fn deploy_into(session: &mut Session, spec: &WorkloadSpec, d: &mut Deployed) -> ClientResult<()> {
    let mut cmds = Vec::new();
    for _ in 0..spec.vehicles {
        cmds.push(Pending::ground("spawn_actor", SpawnRequest::random(ActorKind::Vehicle)));
    }
    for _ in 0..spec.pedestrians {
        cmds.push(Pending::ground("spawn_actor", SpawnRequest::random(ActorKind::Pedestrian)));
    }
    if spec.drone {
        let at = Vec3::new(DRONE_SPAWN[0], DRONE_SPAWN[1], DRONE_SPAWN[2]);
        cmds.push(Pending::ground("spawn_actor", SpawnRequest::at(ActorKind::Drone, at)));
    }
    if cmds.is_empty() {
        return Ok(());
    }
    let mut spawned = Vec::new();
    let mut first_err = None;
    for r in submit_all(session, &cmds)? {
        match decode::<Spawned>(r) {
            Ok(s) => spawned.push(s.id),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if first_err.is_none() {
        d.vehicles = spawned[..spec.vehicles].to_vec();
        d.pedestrians = spawned[spec.vehicles..spec.vehicles + spec.pedestrians].to_vec();
        d.drone = spec.drone.then(|| spawned[spawned.len() - 1]);
    } else {
        // Ids are all we need to clean up.
        d.vehicles = spawned;
    }
    if let Some(e) = first_err {
        return Err(e);
    }

    let mut cmds = Vec::new();
    for s in &spec.sensors {
        let (api, parent) = match s.parent {
            Parent::Vehicle(i) => (Api::Ground, d.vehicles[i]),
            Parent::Drone => (Api::Aerial, d.drone.expect("drone sensor needs a drone")),
        };
        let p = AttachParams {
            parent,
            modality: s.modality,
            width: s.width,
            height: s.height,
            mount: None,
        };
        cmds.push(match api {
            Api::Ground => Pending::ground("attach_sensor", p),
            Api::Aerial => Pending::aerial("attach_sensor", p),
        });
    }
    if spec.autopilot {
        for &id in &d.vehicles {
            cmds.push(Pending::ground(
                "set_autopilot",
                AutopilotParams {
                    id,
                    enabled: true,
                    cruise_speed: None,
                },
            ));
        }
    }
    if let Some(drone) = d.drone {
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
                altitude: DRONE_ALTITUDE_M,
            },
        ));
    }
    if cmds.is_empty() {
        return Ok(());
    }
    let n_sensors = spec.sensors.len();
    let results = submit_all(session, &cmds)?;
    let mut first_err = None;
    for (i, r) in results.into_iter().enumerate() {
        if i < n_sensors {
            match decode::<SensorAttached>(r) {
                Ok(s) => d.sensors.push(s.id),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        } else if let Err(e) = r {
            first_err.get_or_insert(e);
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Destroys every deployed actor (their sensors go with them). Returns the
/// number of destroy calls that failed.
pub fn teardown(session: &mut Session, d: &Deployed) -> ClientResult<usize> {
    let cmds: Vec<Pending> = d
        .actors()
        .map(|id| Pending::ground("destroy_actor", ActorIdParam { id }))
        .collect();
    if cmds.is_empty() {
        return Ok(0);
    }
    Ok(submit_all(session, &cmds)?.into_iter().filter(|r| r.is_err()).count())
}
