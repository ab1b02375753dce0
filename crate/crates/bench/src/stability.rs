//! Repeated spawn/run/destroy cycles with per-cycle memory sampling and a
//! leak regression over the cycles.

use std::net::SocketAddr;
use std::time::Instant;

use airground_core::ActorId;
use airground_core::world::WorldSnapshot;
use airground_rpc::Session;
use serde::{Deserialize, Serialize};

use crate::harness::ErrorTally;
use crate::memory::MemoryProbe;
use crate::stats::{self, Regression};
use crate::workload::{deploy, teardown, Profile, WorkloadSpec};
use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub cycles: usize,
    pub ticks_per_cycle: u64,
    pub profile: Profile,
    pub resolution: Option<(u32, u32)>,
    /// Leak verdict threshold on the regression slope, MiB per cycle.
    pub slope_threshold_mib: f64,
    /// Cycles averaged for the early and late frame-rate figures.
    pub window: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            cycles: 357,
            ticks_per_cycle: 20,
            profile: Profile::ModerateJoint,
            resolution: None,
            slope_threshold_mib: 1.0,
            window: 30,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.cycles < 3 {
            return Err(BenchError::Config("need at least 3 cycles for a regression".into()));
        }
        if self.ticks_per_cycle == 0 || self.window == 0 {
            return Err(BenchError::Config("ticks per cycle and window must be positive".into()));
        }
        if !(self.slope_threshold_mib.is_finite() && self.slope_threshold_mib > 0.0) {
            return Err(BenchError::Config("slope threshold must be positive".into()));
        }
        Ok(())
    }

    fn workload(&self) -> WorkloadSpec {
        let spec = WorkloadSpec::for_profile(self.profile);
        match self.resolution {
            Some((w, h)) => spec.with_resolution(w, h),
            None => spec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Sampled after teardown.
    pub memory_mib: f64,
    /// Harmonic mean over the cycle's ticks; None if no tick succeeded.
    pub fps: Option<f64>,
    pub registry_restored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub config: StabilityConfig,
    pub cycles: Vec<CycleRecord>,
    pub memory_mib: Vec<f64>,
    pub regression: Option<Regression>,
    pub errors: u64,
    pub crashes: u64,
    pub registry_failures: usize,
    pub error_log: Vec<String>,
    /// Mean of per-cycle frame rates over the first and last `window`
    /// cycles.
    pub early_fps: Option<f64>,
    pub late_fps: Option<f64>,
    pub wall_seconds: f64,
    pub verdict: Verdict,
}

fn registry(s: &WorldSnapshot) -> (Vec<ActorId>, usize) {
    let mut ids: Vec<ActorId> = s.actors.iter().map(|a| a.id).collect();
    ids.sort();
    (ids, s.sensor_count)
}

fn window_mean(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    stats::mean(&v).ok()
}

/// Verdict rule: no API errors, no crashes, every cycle restored the
/// registries, and the memory slope is below the threshold.
pub fn verdict(
    errors: u64,
    crashes: u64,
    registry_failures: usize,
    regression: Option<&Regression>,
    threshold: f64,
) -> Verdict {
    let slope_ok = regression.is_some_and(|r| r.slope < threshold);
    if errors == 0 && crashes == 0 && registry_failures == 0 && slope_ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

pub fn stability_run(
    ground: SocketAddr,
    aerial: SocketAddr,
    cfg: &StabilityConfig,
    probe: &mut dyn MemoryProbe,
) -> Result<StabilityReport, BenchError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut session = Session::connect(ground, aerial).map_err(BenchError::Connect)?;
    let baseline = registry(&session.ground.world_snapshot().map_err(BenchError::Connect)?);
    session.ground.set_synchronous_mode(true).map_err(BenchError::Setup)?;
    let spec = cfg.workload();

    let mut tally = ErrorTally::new();
    let mut cycles = Vec::with_capacity(cfg.cycles);
    let mut registry_failures = 0;
    'cycles: for cycle in 1..=cfg.cycles {
        let deployed = match deploy(&mut session, &spec) {
            Ok(d) => d,
            Err(e) => {
                if tally.record(&format!("cycle {cycle} spawn"), &e) {
                    break;
                }
                continue;
            }
        };
        let mut rates = Vec::with_capacity(cfg.ticks_per_cycle as usize);
        for _ in 0..cfg.ticks_per_cycle {
            let t0 = Instant::now();
            match session.ground.tick() {
                Ok(_) => rates.push(1.0 / t0.elapsed().as_secs_f64()),
                Err(e) => {
                    if tally.record(&format!("cycle {cycle} tick"), &e) {
                        break 'cycles;
                    }
                }
            }
        }
        match teardown(&mut session, &deployed) {
            Ok(failed) => tally.errors += failed as u64,
            Err(e) => {
                if tally.record(&format!("cycle {cycle} destroy"), &e) {
                    break;
                }
            }
        }
        let restored = match session.ground.world_snapshot() {
            Ok(s) => registry(&s) == baseline,
            Err(e) => {
                if tally.record(&format!("cycle {cycle} snapshot"), &e) {
                    break;
                }
                false
            }
        };
        if !restored {
            registry_failures += 1;
        }
        cycles.push(CycleRecord {
            cycle,
            memory_mib: probe.sample_mib(),
            fps: stats::harmonic_mean(&rates).ok().map(|h| h.harmonic_mean),
            registry_restored: restored,
        });
    }
    if let Err(e) = session.ground.set_synchronous_mode(false) {
        tally.record("disable sync", &e);
    }

    let memory_mib: Vec<f64> = cycles.iter().map(|c| c.memory_mib).collect();
    let regression = stats::leak_regression(&memory_mib).ok();
    let fps: Vec<Option<f64>> = cycles.iter().map(|c| c.fps).collect();
    let w = cfg.window.min(fps.len());
    let early_fps = window_mean(&fps[..w]);
    let late_fps = window_mean(&fps[fps.len() - w..]);
    let crashes = tally.crashes;
    Ok(StabilityReport {
        config: cfg.clone(),
        verdict: verdict(
            tally.errors,
            crashes,
            registry_failures,
            regression.as_ref(),
            cfg.slope_threshold_mib,
        ),
        cycles,
        memory_mib,
        regression,
        errors: tally.errors,
        crashes,
        registry_failures,
        error_log: tally.log,
        early_fps,
        late_fps,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
