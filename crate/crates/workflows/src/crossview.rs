//! Cross-view consistency between the ground and aerial APIs: paired
//! observations share a tick, the aerial depth image agrees with the
//! vehicle pose reported by the ground API, and weather changes show up in
//! the aerial view.

use airground_core::frames::{ned_to_ue_position, ned_to_ue_quat, CM_PER_M};
use airground_core::math::{from_array, to_array, vec3};
use airground_core::sensors::{decode_f32, mount, Camera, Modality, SensorId};
use airground_core::weather::{illumination_changing, PRESETS};
use airground_core::world::drone_camera_mount;
use airground_core::{ActorId, ActorKind, PoseUe, WeatherPreset};
use airground_rpc::api::{
    decode_payload, ActorIdParam, ApiControlParams, AttachParams, AutopilotParams, SensorAttached, Spawned,
    SpawnRequest, TakeoffParams, WeatherParams,
};
use airground_rpc::{Pending, Session};
use serde::{Deserialize, Serialize};

use crate::common::{all_ok, decode, observe_drone, world_origin, RateMeter};
use crate::{WorkflowError, WorkflowResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossViewConfig {
    /// Ground/aerial observation pairs to collect, one per tick.
    pub pairs: usize,
    pub resolution: (u32, u32),
    pub drone_altitude_m: f64,
    /// Ego vehicle spawn, cm; it drives along +X under the drone.
    pub vehicle_start_cm: [f64; 3],
    pub vehicle_speed_cms: f64,
    /// Largest range disagreement at the projected roof pixel, cm.
    pub range_tolerance_cm: f64,
    pub weather_sweep: bool,
}

impl Default for CrossViewConfig {
    fn default() -> Self {
        Self {
            pairs: 500,
            resolution: (64, 64),
            drone_altitude_m: 20.0,
            vehicle_start_cm: [-6_000.0, 0.0, 75.0],
            vehicle_speed_cms: 500.0,
            range_tolerance_cm: 1.0,
            weather_sweep: true,
        }
    }
}

impl CrossViewConfig {
    pub fn validate(&self) -> WorkflowResult<()> {
        if self.pairs == 0 {
            return Err(WorkflowError::Config("pairs must be positive".into()));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(WorkflowError::Config("resolution must be positive".into()));
        }
        if !(self.drone_altitude_m.is_finite() && self.drone_altitude_m > 0.0) {
            return Err(WorkflowError::Config("drone altitude must be positive".into()));
        }
        if !(self.range_tolerance_cm.is_finite() && self.range_tolerance_cm > 0.0) {
            return Err(WorkflowError::Config("range tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherCheck {
    pub preset: String,
    pub previous: String,
    pub illumination_changing: bool,
    pub mean_intensity: f64,
    pub previous_mean: f64,
    pub relative_shift: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossViewReport {
    pub config: CrossViewConfig,
    pub pairs: usize,
    /// Pairs whose ground and aerial ticks differ.
    pub misaligned_pairs: usize,
    pub max_epsilon: u64,
    /// Ticks on which the vehicle roof was inside the aerial image.
    pub projection_checks: usize,
    pub projection_failures: usize,
    pub max_range_error_cm: f64,
    /// Drone origin offset reported by the aerial API, m.
    pub offset_d: [f64; 3],
    pub weather: Vec<WeatherCheck>,
    pub fps: Option<f64>,
    pub failures: Vec<String>,
}

impl CrossViewReport {
    pub fn weather_passed(&self) -> usize {
        self.weather.iter().filter(|w| w.passed).count()
    }

    pub fn passed(&self) -> bool {
        self.pairs == self.config.pairs
            && self.misaligned_pairs == 0
            && self.projection_checks > 0
            && self.projection_failures == 0
            && self.weather_passed() == self.weather.len()
    }
}

struct Setup {
    vehicle: ActorId,
    drone: ActorId,
    ground_sensor: SensorId,
    aerial_sensor: SensorId,
}

fn setup(session: &mut Session, cfg: &CrossViewConfig, actors: &mut Vec<ActorId>) -> WorkflowResult<Setup> {
    let origin = world_origin(&mut session.ground)?;
    let v = cfg.vehicle_start_cm;
    let (_, r) = session.step(&[
        Pending::ground("spawn_actor", SpawnRequest::at(ActorKind::Drone, origin)),
        Pending::ground("spawn_actor", SpawnRequest::at(ActorKind::Vehicle, vec3(v[0], v[1], v[2]))),
    ])?;
    let ids: Vec<_> = r.into_iter().map(decode::<Spawned>).collect();
    actors.extend(ids.iter().flatten().map(|s| s.id));
    let mut ids = ids.into_iter();
    let drone = ids.next().expect("two results")?.id;
    let vehicle = ids.next().expect("two results")?.id;

    let (w, h) = cfg.resolution;
    let (_, r) = session.step(&[
        Pending::aerial(
            "attach_sensor",
            AttachParams {
                parent: drone,
                modality: Modality::Depth,
                width: w,
                height: h,
                mount: None,
            },
        ),
        Pending::ground(
            "attach_sensor",
            AttachParams {
                parent: vehicle,
                modality: Modality::Semantic,
                width: w,
                height: h,
                mount: Some(mount::forward(vec3(0.0, 0.0, 100.0))),
            },
        ),
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
        Pending::aerial(
            "takeoff_to",
            TakeoffParams {
                drone: Some(drone),
                altitude: cfg.drone_altitude_m,
            },
        ),
    ])?;
    let mut r = r.into_iter();
    let aerial_sensor = decode::<SensorAttached>(r.next().expect("result"))?.id;
    let ground_sensor = decode::<SensorAttached>(r.next().expect("result"))?.id;
    all_ok(r.collect())?;
    Ok(Setup {
        vehicle,
        drone,
        ground_sensor,
        aerial_sensor,
    })
}

/// Checks the aerial depth image against the vehicle pose at the pixel
/// where the vehicle's roof center projects. Returns None when the roof is
/// out of view, else the range disagreement in cm.
fn roof_range_error(
    session: &mut Session,
    s: &Setup,
    cfg: &CrossViewConfig,
    origin: &airground_core::Vec3,
    depth: &[f32],
) -> WorkflowResult<Option<f64>> {
    let t = session.ground.actor_transform(s.vehicle)?;
    let roof = from_array(t.location) + vec3(0.0, 0.0, t.bbox[2]);
    let d = observe_drone(&mut session.aerial, s.drone)?;
    let body = PoseUe::new(
        ned_to_ue_position(&d.shared_position(), origin)?,
        ned_to_ue_quat(&d.local.orientation)?,
    );
    let cam = Camera::new(body.compose(&drone_camera_mount()), cfg.resolution.0, cfg.resolution.1);
    let Some((col, row)) = cam.pixel_of(&roof) else {
        return Ok(None);
    };
    let ray = cam.ray(col, row);
    if ray.z >= 0.0 {
        return Ok(None);
    }
    // Where this pixel's ray meets the roof plane.
    let expected_cm = (roof.z - cam.pose.position.z) / ray.z;
    let measured = depth[(row * cfg.resolution.0 + col) as usize] as f64;
    Ok(Some((measured * CM_PER_M - expected_cm).abs()))
}

fn mean_rgb(session: &mut Session, drone: ActorId, cfg: &CrossViewConfig) -> WorkflowResult<f64> {
    let p = session
        .aerial
        .capture_image(Some(drone), Modality::RgbProxy, cfg.resolution.0, cfg.resolution.1, None)?;
    let (_, _, data) = decode_payload(&p)?;
    Ok(data.iter().map(|&v| v as f64).sum::<f64>() / data.len().max(1) as f64)
}

fn weather_sweep(session: &mut Session, drone: ActorId, cfg: &CrossViewConfig) -> WorkflowResult<Vec<WeatherCheck>> {
    let mut prev = WeatherPreset::by_name(&session.ground.world_snapshot()?.weather)?;
    let mut prev_mean = mean_rgb(session, drone, cfg)?;
    let mut out = Vec::with_capacity(PRESETS.len());
    for next in PRESETS {
        let (_, r) = session.step(&[Pending::ground(
            "set_weather",
            WeatherParams {
                name: next.name.to_string(),
            },
        )])?;
        all_ok(r)?;
        let m = mean_rgb(session, drone, cfg)?;
        let changing = illumination_changing(&prev, &next);
        let shift = if prev_mean > 0.0 {
            (m - prev_mean).abs() / prev_mean
        } else {
            f64::INFINITY
        };
        out.push(WeatherCheck {
            preset: next.name.to_string(),
            previous: prev.name.to_string(),
            illumination_changing: changing,
            mean_intensity: m,
            previous_mean: prev_mean,
            relative_shift: shift,
            passed: !changing || shift > airground_core::weather::ILLUMINATION_SHIFT,
        });
        prev = next;
        prev_mean = m;
    }
    Ok(out)
}

/// Runs the pairing and projection checks, then the weather sweep.
/// Switches the kernel to synchronous mode; spawned actors are destroyed
/// at the end.
pub fn cross_view_check(session: &mut Session, cfg: &CrossViewConfig) -> WorkflowResult<CrossViewReport> {
    cfg.validate()?;
    session.ground.set_synchronous_mode(true)?;
    let mut actors = Vec::new();
    let r = setup(session, cfg, &mut actors).and_then(|s| run(session, cfg, &s));
    let cmds: Vec<Pending> = actors
        .iter()
        .map(|&id| Pending::ground("destroy_actor", ActorIdParam { id }))
        .collect();
    let t = if cmds.is_empty() {
        Ok(())
    } else {
        session.step(&cmds).map_err(WorkflowError::from).and_then(|(_, r)| Ok(all_ok(r).map(|_| ())?))
    };
    let report = r?;
    t?;
    Ok(report)
}

fn run(session: &mut Session, cfg: &CrossViewConfig, s: &Setup) -> WorkflowResult<CrossViewReport> {
    let origin = world_origin(&mut session.ground)?;
    let mut meter = RateMeter::default();
    let mut pairs = 0;
    let mut misaligned = 0;
    let mut max_eps = 0;
    let mut checks = 0;
    let mut proj_failures = 0;
    let mut max_range_err: f64 = 0.0;
    let mut failures = Vec::new();
    for _ in 0..cfg.pairs {
        meter.time(|| session.step(&[]))?;
        let g = session.ground.sensor_data(s.ground_sensor)?;
        let a = session.aerial.sensor_data(s.aerial_sensor)?;
        pairs += 1;
        let eps = g.tick.abs_diff(a.tick);
        max_eps = max_eps.max(eps);
        if eps != 0 {
            misaligned += 1;
            if failures.len() < 100 {
                failures.push(format!("ground tick {} vs aerial tick {}", g.tick, a.tick));
            }
        }
        let (_, _, bytes) = decode_payload(&a)?;
        let depth = decode_f32(&bytes);
        if let Some(err) = roof_range_error(session, s, cfg, &origin, &depth)? {
            checks += 1;
            max_range_err = max_range_err.max(err);
            if !(err <= cfg.range_tolerance_cm) {
                proj_failures += 1;
                if failures.len() < 100 {
                    failures.push(format!("tick {}: roof range off by {err:.2} cm", a.tick));
                }
            }
        }
    }
    let offset_d = to_array(&observe_drone(&mut session.aerial, s.drone)?.offset.0);
    let weather = if cfg.weather_sweep {
        weather_sweep(session, s.drone, cfg)?
    } else {
        Vec::new()
    };
    Ok(CrossViewReport {
        config: cfg.clone(),
        pairs,
        misaligned_pairs: misaligned,
        max_epsilon: max_eps,
        projection_checks: checks,
        projection_failures: proj_failures,
        max_range_error_cm: max_range_err,
        offset_d,
        weather,
        fps: meter.harmonic_fps(),
        failures,
    })
}
