//! The tick loop: sole owner of the world.
//!
//! RPC handlers read the latest published snapshot and push mutations onto
//! one queue. The loop drains the queue at each tick boundary, ordering
//! ground commands before aerial ones, each API in queue order, and
//! completes their replies once the tick that applied them is published.
//! Ordering by API rather than by arrival keeps a batch sent over both
//! connections deterministic (e.g. sensor id assignment).

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use airground_core::sensors::write_record;
use airground_core::{Command, CommandOutput, SimResult, WorldState};

use crate::api::{Api, TickInfo};
use crate::wire::RpcError;

pub type Reply<T> = Box<dyn FnOnce(T) + Send>;

struct Job {
    command: Command,
    api: Api,
    reply: Reply<SimResult<CommandOutput>>,
}

enum Msg {
    Job(Job),
    Tick(Reply<Result<TickInfo, RpcError>>),
    SetSync(bool, Reply<()>),
    StartRecording(PathBuf, Reply<()>),
    StopRecording(Reply<()>),
    Shutdown,
}

#[derive(Debug, Clone, Default)]
pub struct KernelOptions {
    /// Start in synchronous mode: the world advances only on `tick`.
    pub synchronous: bool,
    pub record_dir: Option<PathBuf>,
}

#[derive(Debug, Default)]
pub struct KernelStats {
    pub ticks: AtomicU64,
    pub command_errors: AtomicU64,
    pub write_errors: AtomicU64,
    pub synchronous: AtomicBool,
}

#[derive(Clone)]
pub struct KernelHandle {
    tx: Sender<Msg>,
    published: Arc<RwLock<Arc<WorldState>>>,
    stats: Arc<KernelStats>,
    thread: Arc<Mutex<Option<JoinHandle<()>>>>,
}

/// Starts the tick loop on its own thread.
pub fn spawn_kernel(world: WorldState, opts: KernelOptions) -> KernelHandle {
    let (tx, rx) = mpsc::channel();
    let published = Arc::new(RwLock::new(Arc::new(world.clone())));
    let stats = Arc::new(KernelStats::default());
    stats.synchronous.store(opts.synchronous, Ordering::SeqCst);
    let kernel = Kernel {
        world,
        rx,
        pending: Vec::new(),
        published: Arc::clone(&published),
        stats: Arc::clone(&stats),
        synchronous: opts.synchronous,
        record_dir: opts.record_dir,
    };
    let thread = thread::Builder::new()
        .name("tick-loop".into())
        .spawn(move || kernel.run())
        .expect("spawn tick loop");
    KernelHandle {
        tx,
        published,
        stats,
        thread: Arc::new(Mutex::new(Some(thread))),
    }
}

fn stopped() -> RpcError {
    RpcError::new(crate::wire::INTERNAL_ERROR, "kernel stopped")
}

impl KernelHandle {
    /// The most recently published world; never blocks on the tick loop.
    pub fn latest(&self) -> Arc<WorldState> {
        Arc::clone(&self.published.read().expect("snapshot lock"))
    }

    pub fn stats(&self) -> &KernelStats {
        &self.stats
    }

    pub fn is_synchronous(&self) -> bool {
        self.stats.synchronous.load(Ordering::SeqCst)
    }

    /// Queues a mutation. `reply` runs on the tick loop after the tick that
    /// applied it is published.
    pub fn submit(&self, api: Api, command: Command, reply: Reply<SimResult<CommandOutput>>) {
        let job = Job {
            command,
            api,
            reply,
        };
        if let Err(mpsc::SendError(Msg::Job(job))) = self.tx.send(Msg::Job(job)) {
            (job.reply)(Err(airground_core::SimError::InvalidInput("kernel stopped".into())));
        }
    }

    pub fn request_tick(&self, reply: Reply<Result<TickInfo, RpcError>>) {
        if let Err(mpsc::SendError(Msg::Tick(reply))) = self.tx.send(Msg::Tick(reply)) {
            reply(Err(stopped()));
        }
    }

    pub fn set_synchronous(&self, enabled: bool, reply: Reply<()>) {
        if let Err(mpsc::SendError(Msg::SetSync(_, reply))) = self.tx.send(Msg::SetSync(enabled, reply)) {
            reply(());
        }
    }

    pub fn start_recording(&self, dir: PathBuf, reply: Reply<()>) {
        if let Err(mpsc::SendError(Msg::StartRecording(_, reply))) =
            self.tx.send(Msg::StartRecording(dir, reply))
        {
            reply(());
        }
    }

    pub fn stop_recording(&self, reply: Reply<()>) {
        if let Err(mpsc::SendError(Msg::StopRecording(reply))) = self.tx.send(Msg::StopRecording(reply)) {
            reply(());
        }
    }

    /// Blocking helpers for in-process callers.
    pub fn apply_blocking(&self, api: Api, command: Command) -> SimResult<CommandOutput> {
        let (tx, rx) = mpsc::channel();
        self.submit(api, command, Box::new(move |r| {
            let _ = tx.send(r);
        }));
        rx.recv()
            .unwrap_or_else(|_| Err(airground_core::SimError::InvalidInput("kernel stopped".into())))
    }

    pub fn tick_blocking(&self) -> Result<TickInfo, RpcError> {
        let (tx, rx) = mpsc::channel();
        self.request_tick(Box::new(move |r| {
            let _ = tx.send(r);
        }));
        rx.recv().unwrap_or_else(|_| Err(stopped()))
    }

    pub fn set_synchronous_blocking(&self, enabled: bool) {
        let (tx, rx) = mpsc::channel();
        self.set_synchronous(enabled, Box::new(move |_| {
            let _ = tx.send(());
        }));
        let _ = rx.recv();
    }

    /// Stops the loop and joins it. Queued commands fail.
    pub fn shutdown(&self) {
        let _ = self.tx.send(Msg::Shutdown);
        if let Some(t) = self.thread.lock().expect("kernel thread lock").take() {
            let _ = t.join();
        }
    }
}

struct Kernel {
    world: WorldState,
    rx: Receiver<Msg>,
    pending: Vec<Job>,
    published: Arc<RwLock<Arc<WorldState>>>,
    stats: Arc<KernelStats>,
    synchronous: bool,
    record_dir: Option<PathBuf>,
}

impl Kernel {
    fn run(mut self) {
        let dt = Duration::from_secs_f64(self.world.dt_render());
        let mut deadline = Instant::now() + dt;
        loop {
            let msg = if self.synchronous {
                match self.rx.recv() {
                    Ok(m) => m,
                    Err(_) => break,
                }
            } else {
                let wait = deadline.saturating_duration_since(Instant::now());
                match self.rx.recv_timeout(wait) {
                    Ok(m) => m,
                    Err(RecvTimeoutError::Timeout) => {
                        self.advance();
                        deadline += dt;
                        // Never try to catch up on missed ticks.
                        let now = Instant::now();
                        if deadline < now {
                            deadline = now + dt;
                        }
                        continue;
                    }
                    Err(RecvTimeoutError::Disconnected) => break,
                }
            };
            match msg {
                Msg::Job(job) => {
                    self.pending.push(job);
                    if !self.synchronous {
                        // Free-running: pick up everything already queued and
                        // apply it now rather than waiting for the deadline.
                        while let Ok(m) = self.rx.try_recv() {
                            if !self.handle_side(m) {
                                self.fail_pending();
                                return;
                            }
                        }
                        self.advance();
                        deadline = Instant::now() + dt;
                    }
                }
                other => {
                    if !self.handle_side(other) {
                        break;
                    }
                    if !self.synchronous && !self.pending.is_empty() {
                        self.advance();
                        deadline = Instant::now() + dt;
                    }
                }
            }
        }
        self.fail_pending();
    }

    /// Handles a non-job message, or queues a job. Returns false on shutdown.
    fn handle_side(&mut self, msg: Msg) -> bool {
        match msg {
            Msg::Job(job) => self.pending.push(job),
            Msg::Tick(reply) => {
                if self.synchronous {
                    let info = self.advance();
                    reply(Ok(info));
                } else {
                    reply(Err(RpcError::mode("tick is only valid in synchronous mode")));
                }
            }
            Msg::SetSync(enabled, reply) => {
                self.synchronous = enabled;
                self.stats.synchronous.store(enabled, Ordering::SeqCst);
                reply(());
            }
            Msg::StartRecording(dir, reply) => {
                self.record_dir = Some(dir);
                reply(());
            }
            Msg::StopRecording(reply) => {
                self.record_dir = None;
                reply(());
            }
            Msg::Shutdown => return false,
        }
        true
    }

    fn fail_pending(&mut self) {
        for job in self.pending.drain(..) {
            (job.reply)(Err(airground_core::SimError::InvalidInput("kernel stopped".into())));
        }
        while let Ok(m) = self.rx.try_recv() {
            match m {
                Msg::Job(job) => {
                    (job.reply)(Err(airground_core::SimError::InvalidInput("kernel stopped".into())))
                }
                Msg::Tick(reply) => reply(Err(stopped())),
                Msg::SetSync(_, r) | Msg::StartRecording(_, r) | Msg::StopRecording(r) => r(()),
                Msg::Shutdown => {}
            }
        }
    }

    fn advance(&mut self) -> TickInfo {
        let mut jobs = std::mem::take(&mut self.pending);
        // Stable: queue order is kept within each API.
        jobs.sort_by_key(|j| j.api);
        let (commands, replies): (Vec<_>, Vec<_>) =
            jobs.into_iter().map(|j| (j.command, j.reply)).unzip();
        let results = self.world.advance_tick(commands);

        let mut info = TickInfo {
            tick: self.world.tick(),
            sim_time: self.world.sim_time(),
            write_us: None,
            record_error: None,
        };
        if let Some(dir) = &self.record_dir {
            let t0 = Instant::now();
            match write_record(self.world.last_record(), dir) {
                Ok(_) => info.write_us = Some(t0.elapsed().as_secs_f64() * 1e6),
                Err(e) => {
                    self.stats.write_errors.fetch_add(1, Ordering::Relaxed);
                    log::warn!("record write failed: {e}");
                    info.record_error = Some(e.to_string());
                }
            }
        }
        *self.published.write().expect("snapshot lock") = Arc::new(self.world.clone());
        self.stats.ticks.fetch_add(1, Ordering::Relaxed);
        for (r, reply) in results.into_iter().zip(replies) {
            if r.is_err() {
                self.stats.command_errors.fetch_add(1, Ordering::Relaxed);
            }
            reply(r);
        }
        info
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use airground_core::math::vec3;
    use airground_core::{ActorKind, PoseUe, SpawnParams, WorldConfig};

    fn kernel(sync: bool) -> KernelHandle {
        let world = WorldState::create(WorldConfig::default()).unwrap();
        spawn_kernel(
            world,
            KernelOptions {
                synchronous: sync,
                record_dir: None,
            },
        )
    }

    #[test]
    fn sync_mode_frozen_until_tick() {
        let k = kernel(true);
        std::thread::sleep(Duration::from_millis(120));
        assert_eq!(k.latest().tick(), 0);
        let info = k.tick_blocking().unwrap();
        assert_eq!(info.tick, 1);
        assert_eq!(k.latest().tick(), 1);
        k.shutdown();
    }

    #[test]
    fn commands_reply_after_their_tick() {
        let k = kernel(true);
        let (tx, rx) = mpsc::channel();
        k.submit(
            Api::Ground,
            Command::SpawnActor {
                kind: ActorKind::Static,
                pose: PoseUe::at(vec3(0.0, -3_000.0, 100.0)),
                params: SpawnParams::default(),
            },
            Box::new(move |r| tx.send(r).unwrap()),
        );
        assert!(rx.recv_timeout(Duration::from_millis(100)).is_err());
        k.tick_blocking().unwrap();
        let out = rx.recv().unwrap().unwrap();
        assert!(matches!(out, CommandOutput::Spawned(_)));
        assert_eq!(k.latest().actor_count(), 1);
        k.shutdown();
    }

    #[test]
    fn async_mode_runs_free_and_rejects_tick() {
        let k = kernel(false);
        let err = k.tick_blocking().unwrap_err();
        assert_eq!(err.code, crate::wire::MODE_ERROR);
        std::thread::sleep(Duration::from_millis(300));
        assert!(k.latest().tick() >= 2);
        let before = k.latest().tick();
        let t0 = Instant::now();
        k.apply_blocking(Api::Ground, Command::SetWeather("WetNoon".into())).unwrap();
        assert!(t0.elapsed() < Duration::from_millis(45));
        assert!(k.latest().tick() > before);
        k.shutdown();
    }

    #[test]
    fn shutdown_fails_queued_commands() {
        let k = kernel(true);
        let (tx, rx) = mpsc::channel();
        k.submit(
            Api::Aerial,
            Command::SetWeather("WetNoon".into()),
            Box::new(move |r| tx.send(r).unwrap()),
        );
        k.shutdown();
        assert!(rx.recv().unwrap().is_err());
    }
}
