//! The `airground` command line: run the simulator, benchmark it, and run
//! the cross-domain workflows against it.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use airground_bench::bridge::relay_main;
use airground_bench::memory::ProcessRss;
use airground_bench::report::{write_json, write_series_csv};
use airground_bench::{
    bridge_compare, latency_bench, run_harness, stability_run, BenchConfig, BridgeConfig, LatencyCall,
    LatencyConfig, Profile, StabilityConfig, Verdict,
};
use airground_core::aerial::PhysicsConfig;
use airground_core::map::FLAT_TOWN;
use airground_core::{WorldConfig, WorldState};
use airground_rpc::server::{DEFAULT_AERIAL_PORT, DEFAULT_GROUND_PORT};
use airground_rpc::{spawn_kernel, EndpointConfig, KernelOptions, Servers, Session};
use airground_workflows::landing::write_trajectory_csv;
use airground_workflows::{
    collect_dataset, cross_view_check, run_landing, tracking_action, CoopEnv, CrossViewConfig, DatasetConfig,
    LandingConfig, RlConfig,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "airground", version, about = "Air-ground co-simulation kernel")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulator with its ground and aerial RPC endpoints.
    Serve(ServeArgs),
    /// Frame-rate, latency, bridge and stability benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Landing, dataset, cross-view and RL workflows.
    #[command(subcommand)]
    Workflow(WorkflowCommand),
    /// Payload sink for `bench bridge`.
    #[command(hide = true)]
    Relay { addr: String },
}

/// Image resolution as `WIDTHxHEIGHT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution(pub u32, pub u32);

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s}"))?;
        let w: u32 = w.trim().parse().map_err(|e| format!("width: {e}"))?;
        let h: u32 = h.trim().parse().map_err(|e| format!("height: {e}"))?;
        if w == 0 || h == 0 {
            return Err("resolution must be positive".into());
        }
        Ok(Resolution(w, h))
    }
}

#[derive(Debug, Clone, Args)]
pub struct WorldArgs {
    /// Render tick, seconds.
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Multirotor physics step, seconds; must divide the render tick.
    #[arg(long, default_value_t = 0.001)]
    pub physics_dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = FLAT_TOWN)]
    pub map: String,
}

impl WorldArgs {
    fn world(&self) -> Result<WorldState> {
        let cfg = WorldConfig {
            dt_render: self.dt,
            seed: self.seed,
            map_name: self.map.clone(),
            physics: PhysicsConfig {
                dt_phys: self.physics_dt,
                ..Default::default()
            },
            ..Default::default()
        };
        Ok(WorldState::create(cfg)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value_t = DEFAULT_GROUND_PORT)]
    pub ground_port: u16,
    #[arg(long, default_value_t = DEFAULT_AERIAL_PORT)]
    pub aerial_port: u16,
    #[command(flatten)]
    pub world: WorldArgs,
    /// Write one record per tick here.
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
    /// Start in synchronous mode: the world advances only on `tick`.
    #[arg(long)]
    pub sync: bool,
}

/// Where to find the simulator. Without `--ground`, one is started inside
/// this process.
#[derive(Debug, Clone, Args)]
pub struct Target {
    #[arg(long, requires = "aerial")]
    pub ground: Option<SocketAddr>,
    #[arg(long, requires = "ground")]
    pub aerial: Option<SocketAddr>,
    /// Seed of the in-process simulator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

enum Endpoints {
    Remote(SocketAddr, SocketAddr),
    Local(Servers),
}

impl Endpoints {
    fn addrs(&self) -> (SocketAddr, SocketAddr) {
        match self {
            Endpoints::Remote(g, a) => (*g, *a),
            Endpoints::Local(s) => (s.ground_addr(), s.aerial_addr()),
        }
    }

    fn session(&self) -> Result<Session> {
        let (g, a) = self.addrs();
        Session::connect(g, a).with_context(|| format!("connecting to {g} and {a}"))
    }
}

impl Target {
    fn endpoints(&self) -> Result<Endpoints> {
        match (self.ground, self.aerial) {
            (Some(g), Some(a)) => Ok(Endpoints::Remote(g, a)),
            _ => {
                let world = WorldState::create(WorldConfig {
                    seed: self.seed,
                    ..Default::default()
                })?;
                let kernel = spawn_kernel(world, KernelOptions::default());
                let s = Servers::start(&EndpointConfig::ephemeral(), kernel)?;
                log::info!("in-process simulator on {} / {}", s.ground_addr(), s.aerial_addr());
                Ok(Endpoints::Local(s))
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        match &self.out {
            Some(p) => {
                write_json(p, value).with_context(|| format!("writing {}", p.display()))?;
                log::info!("wrote {}", p.display());
            }
            None => println!("{}", serde_json::to_string_pretty(value)?),
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Frame rate, memory and call latency under a workload profile.
    Run {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "idle")]
        profile: Profile,
        #[arg(long, default_value_t = 200)]
        warmup: u64,
        #[arg(long, default_value_t = 2000)]
        ticks: u64,
        /// Seconds between memory and latency samples.
        #[arg(long, default_value_t = 60.0)]
        mem_interval: f64,
        /// Overrides every camera resolution of the profile.
        #[arg(long)]
        resolution: Option<Resolution>,
        /// Sample the resident set of this process instead of our own.
        #[arg(long)]
        server_pid: Option<u32>,
        /// Long-format CSV of the per-tick and per-sample series.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Round-trip latency of one API call.
    Latency {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "world_snapshot")]
        call: LatencyCall,
        #[arg(long, default_value_t = 500)]
        warmup: usize,
        #[arg(long, default_value_t = 5000)]
        calls: usize,
        #[arg(long, default_value = "1280x720")]
        resolution: Resolution,
        #[command(flatten)]
        output: Output,
    },
    /// In-process versus cross-process payload hand-off.
    Bridge {
        #[arg(long, value_delimiter = ',', default_value = "1,4,8,12,16")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long, default_value = "1280x720")]
        resolution: Resolution,
        #[command(flatten)]
        output: Output,
    },
    /// Repeated spawn/run/destroy cycles with a memory-leak verdict.
    Stability {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 357)]
        cycles: usize,
        #[arg(long, default_value_t = 20)]
        ticks_per_cycle: u64,
        #[arg(long, default_value = "moderate_joint")]
        profile: Profile,
        #[arg(long)]
        resolution: Option<Resolution>,
        #[arg(long)]
        server_pid: Option<u32>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Subcommand)]
pub enum WorkflowCommand {
    /// Land a drone on a moving vehicle.
    Landing {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 20.0)]
        descent_s: f64,
        #[arg(long, default_value_t = 0.5)]
        tolerance: f64,
        /// Per-tick trajectory CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Record an aligned multi-modal dataset.
    Dataset {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        ticks: u64,
        #[arg(long, default_value_t = 30)]
        vehicles: usize,
        #[arg(long, default_value_t = 10)]
        pedestrians: usize,
        #[arg(long, default_value = "64x64")]
        resolution: Resolution,
    },
    /// Ground/aerial pairing, projection and weather checks.
    Crossview {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        #[arg(long, default_value = "64x64")]
        resolution: Resolution,
        #[command(flatten)]
        output: Output,
    },
    /// Run episodes of the cooperative RL environment with a tracking policy.
    RlDemo {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 3)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        env_seed: u64,
        #[arg(long, default_value_t = 400)]
        max_steps: u32,
        #[command(flatten)]
        output: Output,
    },
}

fn probe(pid: Option<u32>) -> ProcessRss {
    match pid {
        Some(p) => ProcessRss::pid(p),
        None => ProcessRss::current(),
    }
}

fn serve(args: &ServeArgs) -> Result<()> {
    let world = args.world.world()?;
    let kernel = spawn_kernel(
        world,
        KernelOptions {
            synchronous: args.sync,
            record_dir: args.record_dir.clone(),
        },
    );
    let cfg = EndpointConfig {
        bind: args.bind,
        ground_port: args.ground_port,
        aerial_port: args.aerial_port,
    };
    let servers = Servers::start(&cfg, kernel)?;
    log::info!(
        "ground API on {}, aerial API on {} ({} mode)",
        servers.ground_addr(),
        servers.aerial_addr(),
        if args.sync { "synchronous" } else { "asynchronous" }
    );
    loop {
        std::thread::park();
    }
}

fn bench(cmd: BenchCommand) -> Result<()> {
    match cmd {
        BenchCommand::Run {
            target,
            profile,
            warmup,
            ticks,
            mem_interval,
            resolution,
            server_pid,
            csv,
            output,
        } => {
            if !(mem_interval.is_finite() && mem_interval > 0.0) {
                bail!("--mem-interval must be positive");
            }
            let cfg = BenchConfig {
                warmup_ticks: warmup,
                measure_ticks: ticks,
                mem_sample_interval: Duration::from_secs_f64(mem_interval),
                profile,
                resolution: resolution.map(|r| (r.0, r.1)),
                ..Default::default()
            };
            cfg.validate()?;
            let ep = target.endpoints()?;
            let (g, a) = ep.addrs();
            let report = run_harness(g, a, &cfg, &mut probe(server_pid))?;
            if let Some(p) = csv {
                write_series_csv(&p, &report)?;
            }
            if let Some(fps) = report.harmonic_fps() {
                log::info!("{}: harmonic mean {fps:.1} FPS", profile);
            }
            output.emit(&report)
        }
        BenchCommand::Latency {
            target,
            call,
            warmup,
            calls,
            resolution,
            output,
        } => {
            let ep = target.endpoints()?;
            let mut session = ep.session()?;
            let cfg = LatencyConfig {
                warmup,
                calls,
                capture_resolution: (resolution.0, resolution.1),
            };
            output.emit(&latency_bench(&mut session, call, &cfg)?)
        }
        BenchCommand::Bridge {
            counts,
            frames,
            resolution,
            output,
        } => {
            let exe = std::env::current_exe().context("locating the relay executable")?;
            let cfg = BridgeConfig {
                counts,
                frames,
                width: resolution.0,
                height: resolution.1,
                relay_args: vec!["relay".into()],
                ..BridgeConfig::new(exe)
            };
            output.emit(&bridge_compare(&cfg)?)
        }
        BenchCommand::Stability {
            target,
            cycles,
            ticks_per_cycle,
            profile,
            resolution,
            server_pid,
            output,
        } => {
            let cfg = StabilityConfig {
                cycles,
                ticks_per_cycle,
                profile,
                resolution: resolution.map(|r| (r.0, r.1)),
                ..Default::default()
            };
            let ep = target.endpoints()?;
            let (g, a) = ep.addrs();
            let report = stability_run(g, a, &cfg, &mut probe(server_pid))?;
            log::info!("stability verdict: {:?}", report.verdict);
            output.emit(&report)?;
            if report.verdict == Verdict::Fail {
                bail!("stability run failed");
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EpisodeSummary {
    episode: u64,
    steps: u32,
    total_reward: f64,
    collision: bool,
}

fn workflow(cmd: WorkflowCommand) -> Result<()> {
    match cmd {
        WorkflowCommand::Landing {
            target,
            descent_s,
            tolerance,
            trajectory,
            output,
        } => {
            let ep = target.endpoints()?;
            let mut session = ep.session()?;
            let cfg = LandingConfig {
                descent_s,
                tolerance_m: tolerance,
                ..Default::default()
            };
            let report = run_landing(&mut session, &cfg)?;
            if let Some(p) = trajectory {
                write_trajectory_csv(&p, &report)?;
            }
            log::info!(
                "landed: {}, final horizontal error {:.3} m",
                report.landed,
                report.final_horizontal_error_m
            );
            output.emit(&report)
        }
        WorkflowCommand::Dataset {
            target,
            dir,
            ticks,
            vehicles,
            pedestrians,
            resolution,
        } => {
            let ep = target.endpoints()?;
            let mut session = ep.session()?;
            let cfg = DatasetConfig {
                ticks,
                vehicles,
                pedestrians,
                resolution: (resolution.0, resolution.1),
                ..DatasetConfig::new(&dir)
            };
            let m = collect_dataset(&mut session, &cfg)?;
            log::info!(
                "{} records in {}, max alignment deviation {}",
                m.records,
                dir.display(),
                m.max_alignment_deviation
            );
            if !m.aligned() {
                bail!("dataset incomplete or misaligned; see {}", dir.join("manifest.json").display());
            }
            Ok(())
        }
        WorkflowCommand::Crossview {
            target,
            pairs,
            resolution,
            output,
        } => {
            let ep = target.endpoints()?;
            let mut session = ep.session()?;
            let cfg = CrossViewConfig {
                pairs,
                resolution: (resolution.0, resolution.1),
                ..Default::default()
            };
            let report = cross_view_check(&mut session, &cfg)?;
            output.emit(&report)?;
            if !report.passed() {
                bail!("cross-view checks failed");
            }
            Ok(())
        }
        WorkflowCommand::RlDemo {
            target,
            episodes,
            env_seed,
            max_steps,
            output,
        } => {
            let ep = target.endpoints()?;
            let cfg = RlConfig {
                seed: env_seed,
                max_steps,
                ..Default::default()
            };
            let target_alt = cfg.target_altitude_m;
            let mut env = CoopEnv::new(ep.session()?, cfg)?;
            let mut out = Vec::new();
            for e in 0..episodes {
                let mut obs = env.reset(Some(env_seed.wrapping_add(e)))?;
                let mut s = EpisodeSummary {
                    episode: e,
                    steps: 0,
                    total_reward: 0.0,
                    collision: false,
                };
                loop {
                    let r = env.step(tracking_action(&obs, target_alt))?;
                    s.steps += 1;
                    s.total_reward += r.reward;
                    s.collision |= r.collision;
                    obs = r.observation;
                    if r.done {
                        break;
                    }
                }
                out.push(s);
            }
            env.close()?;
            output.emit(&out)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(args) => serve(&args),
        Command::Bench(cmd) => bench(cmd),
        Command::Workflow(cmd) => workflow(cmd),
        Command::Relay { addr } => Ok(relay_main(&addr)?),
    }
}

