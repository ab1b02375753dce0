//! The frame-rate harness: warm-up, measurement, periodic memory and
//! latency samples, teardown.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use airground_rpc::{ClientError, Session};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::memory::{process_cpu_seconds, MemoryProbe};
use crate::stats::{self, HarmonicSummary, Regression, SpreadSummary};
use crate::workload::{deploy, teardown, Profile, WorkloadSpec};
use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub warmup_ticks: u64,
    pub measure_ticks: u64,
    /// Wall-clock spacing of memory and latency samples.
    pub mem_sample_interval: Duration,
    pub latency_warmup: usize,
    pub latency_calls: usize,
    pub profile: Profile,
    /// Overrides every camera resolution of the profile.
    pub resolution: Option<(u32, u32)>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup_ticks: 200,
            measure_ticks: 2000,
            mem_sample_interval: Duration::from_secs(60),
            latency_warmup: 500,
            latency_calls: 5000,
            profile: Profile::Idle,
            resolution: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let counts = [
            ("warmup_ticks", self.warmup_ticks as usize),
            ("measure_ticks", self.measure_ticks as usize),
            ("latency_warmup", self.latency_warmup),
            ("latency_calls", self.latency_calls),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(BenchError::Config(format!("{name} must be positive")));
            }
        }
        if self.mem_sample_interval.is_zero() {
            return Err(BenchError::Config("mem_sample_interval must be positive".into()));
        }
        if let Some((w, h)) = self.resolution {
            if w == 0 || h == 0 {
                return Err(BenchError::Config("resolution must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn workload(&self) -> WorkloadSpec {
        let spec = WorkloadSpec::for_profile(self.profile);
        match self.resolution {
            Some((w, h)) => spec.with_resolution(w, h),
            None => spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedStats {
    pub frame_rate: HarmonicSummary,
    pub frame_rate_median: f64,
    pub frame_rate_iqr: f64,
    /// Present with at least three memory samples.
    pub memory_trend: Option<Regression>,
    pub latency_us: BTreeMap<String, SpreadSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub profile: Profile,
    pub config: BenchConfig,
    /// Per measured tick, Hz.
    pub frame_rate_hz: Vec<f64>,
    /// Resident set of the sampled process, MiB. Stands in for GPU memory.
    pub memory_mib: Vec<f64>,
    pub latency_us: BTreeMap<String, Vec<f64>>,
    pub stats: Option<DerivedStats>,
    pub errors: u64,
    pub crashes: u64,
    pub error_log: Vec<String>,
    /// CPU time of this process over the measurement phase relative to wall
    /// time, in percent of one core. Covers the simulator only when it runs
    /// in-process.
    pub process_cpu_percent: Option<f64>,
    pub actors_before: usize,
    /// None when the connection was lost before teardown.
    pub actors_after: Option<usize>,
    pub sensors_before: usize,
    pub sensors_after: Option<usize>,
}

impl BenchReport {
    pub fn harmonic_fps(&self) -> Option<f64> {
        self.stats.as_ref().map(|s| s.frame_rate.harmonic_mean)
    }
}

/// Lost connections count as crashes; everything else as an API error.
pub(crate) fn is_crash(e: &ClientError) -> bool {
    matches!(e, ClientError::Closed | ClientError::Protocol(_) | ClientError::Connect(_))
}

pub(crate) struct ErrorTally {
    pub errors: u64,
    pub crashes: u64,
    pub log: Vec<String>,
}

impl ErrorTally {
    pub fn new() -> Self {
        Self {
            errors: 0,
            crashes: 0,
            log: Vec::new(),
        }
    }

    const LOG_LIMIT: usize = 100;

    /// Records `e`; returns true when the connection is gone.
    pub fn record(&mut self, context: &str, e: &ClientError) -> bool {
        let crash = is_crash(e);
        if crash {
            self.crashes += 1;
        } else {
            self.errors += 1;
        }
        if self.log.len() < Self::LOG_LIMIT {
            self.log.push(format!("{context}: {e}"));
        }
        crash
    }
}

fn sample_latency(session: &mut Session, has_drone: bool, out: &mut BTreeMap<String, Vec<f64>>) -> Result<(), ClientError> {
    let t0 = Instant::now();
    session.ground.0.call("world_snapshot", json!({}))?;
    out.entry("world_snapshot".into())
        .or_default()
        .push(t0.elapsed().as_secs_f64() * 1e6);
    if has_drone {
        let t0 = Instant::now();
        session.aerial.0.call("multirotor_state", json!({}))?;
        out.entry("multirotor_state".into())
            .or_default()
            .push(t0.elapsed().as_secs_f64() * 1e6);
    }
    Ok(())
}

/// Runs one profile against live ground and aerial endpoints.
pub fn run_harness(
    ground: SocketAddr,
    aerial: SocketAddr,
    cfg: &BenchConfig,
    probe: &mut dyn MemoryProbe,
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut session = Session::connect(ground, aerial).map_err(BenchError::Connect)?;
    let before = session.ground.world_snapshot().map_err(BenchError::Connect)?;

    let spec = cfg.workload();
    let deployed = deploy(&mut session, &spec).map_err(BenchError::Setup)?;
    session.ground.set_synchronous_mode(true).map_err(BenchError::Setup)?;

    let mut tally = ErrorTally::new();
    let mut alive = true;
    for _ in 0..cfg.warmup_ticks {
        if let Err(e) = session.ground.tick() {
            if tally.record("warm-up tick", &e) {
                alive = false;
                break;
            }
        }
    }

    let mut frame_rate_hz = Vec::with_capacity(cfg.measure_ticks as usize);
    let mut memory_mib = Vec::new();
    let mut latency_us = BTreeMap::new();
    let cpu0 = process_cpu_seconds();
    let wall0 = Instant::now();
    let mut next_sample = wall0;
    if alive {
        for _ in 0..cfg.measure_ticks {
            let t0 = Instant::now();
            match session.ground.tick() {
                Ok(_) => frame_rate_hz.push(1.0 / t0.elapsed().as_secs_f64()),
                Err(e) => {
                    if tally.record("measured tick", &e) {
                        alive = false;
                        break;
                    }
                    continue;
                }
            }
            if Instant::now() >= next_sample {
                memory_mib.push(probe.sample_mib());
                if let Err(e) = sample_latency(&mut session, deployed.drone.is_some(), &mut latency_us) {
                    if tally.record("latency sample", &e) {
                        alive = false;
                        break;
                    }
                }
                next_sample = Instant::now() + cfg.mem_sample_interval;
            }
        }
    }
    let wall = wall0.elapsed().as_secs_f64();
    let process_cpu_percent = match (cpu0, process_cpu_seconds()) {
        (Some(a), Some(b)) if wall > 0.0 => Some(100.0 * (b - a) / wall),
        _ => None,
    };

    let mut after = None;
    if alive {
        match teardown(&mut session, &deployed) {
            Ok(failed) => tally.errors += failed as u64,
            Err(e) => {
                tally.record("teardown", &e);
            }
        }
        if let Err(e) = session.ground.set_synchronous_mode(false) {
            tally.record("disable sync", &e);
        }
        after = session.ground.world_snapshot().ok();
    }

    let stats = derive_stats(&frame_rate_hz, &memory_mib, &latency_us);
    Ok(BenchReport {
        profile: cfg.profile,
        config: cfg.clone(),
        frame_rate_hz,
        memory_mib,
        latency_us,
        stats,
        errors: tally.errors,
        crashes: tally.crashes,
        error_log: tally.log,
        process_cpu_percent,
        actors_before: before.actors.len(),
        actors_after: after.as_ref().map(|s| s.actors.len()),
        sensors_before: before.sensor_count,
        sensors_after: after.as_ref().map(|s| s.sensor_count),
    })
}

pub(crate) fn derive_stats(
    frame_rate_hz: &[f64],
    memory_mib: &[f64],
    latency_us: &BTreeMap<String, Vec<f64>>,
) -> Option<DerivedStats> {
    let frame_rate = stats::harmonic_mean(frame_rate_hz).ok()?;
    Some(DerivedStats {
        frame_rate,
        frame_rate_median: stats::median(frame_rate_hz).ok()?,
        frame_rate_iqr: stats::iqr(frame_rate_hz).ok()?,
        memory_trend: stats::leak_regression(memory_mib).ok(),
        latency_us: latency_us
            .iter()
            .filter_map(|(k, v)| Some((k.clone(), stats::spread(v).ok()?)))
            .collect(),
    })
}
