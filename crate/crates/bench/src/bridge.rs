//! Per-frame cost of moving sensor payloads to a consumer: by reference
//! inside the process, or serialized over loopback to a relay process.
//!
//! Relay protocol, per frame: a u32 big-endian payload count, then each
//! payload as a u32 big-endian length and its bytes. The relay answers
//! every complete frame with a single byte. A count of zero ends the
//! session.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::GROUND_CAMERA;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot start relay {exe}: {source}")]
    Spawn {
        exe: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("relay i/o: {0}")]
    Io(#[from] io::Error),
    #[error("relay did not connect within {0:?}")]
    Timeout(Duration),
    #[error("invalid bridge config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub counts: Vec<usize>,
    pub frames: usize,
    /// Untimed frames sent first at each count.
    pub warmup_frames: usize,
    /// Each payload is `width * height` bytes (one channel).
    pub width: u32,
    pub height: u32,
    pub relay_exe: PathBuf,
    /// Extra leading arguments for the relay executable, e.g. a subcommand.
    pub relay_args: Vec<String>,
}

impl BridgeConfig {
    pub fn new(relay_exe: PathBuf) -> Self {
        Self {
            counts: vec![1, 4, 8, 12, 16],
            frames: 200,
            warmup_frames: 10,
            width: GROUND_CAMERA.0,
            height: GROUND_CAMERA.1,
            relay_exe,
            relay_args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgePoint {
    pub sensors: usize,
    /// Mean per-frame hand-off, milliseconds.
    pub in_process_ms: f64,
    pub cross_process_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub payload_bytes: usize,
    pub frames: usize,
    pub points: Vec<BridgePoint>,
}

impl BridgeReport {
    pub fn cross_strictly_increasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].cross_process_ms > w[0].cross_process_ms)
    }
}

type Frame = Vec<Arc<Vec<u8>>>;

fn make_payloads(n: usize, bytes: usize) -> Frame {
    (0..n)
        .map(|k| Arc::new((0..bytes).map(|i| (i.wrapping_mul(31) ^ k) as u8).collect()))
        .collect()
}

/// Mean time to hand `n` shared buffers to a consumer thread and receive
/// its acknowledgement.
fn in_process_ms(payloads: &Frame, warmup: usize, frames: usize) -> f64 {
    let (tx, rx) = mpsc::channel::<Frame>();
    let (ack_tx, ack_rx) = mpsc::channel::<u8>();
    let consumer = thread::spawn(move || {
        for f in rx {
            // Touch each buffer as a real consumer would look at it.
            let b = f.iter().fold(0u8, |acc, p| acc ^ p[p.len() / 2]);
            if ack_tx.send(b).is_err() {
                break;
            }
        }
    });
    let mut total = Duration::ZERO;
    for i in 0..warmup + frames {
        let t0 = Instant::now();
        tx.send(payloads.clone()).expect("consumer alive");
        ack_rx.recv().expect("consumer ack");
        if i >= warmup {
            total += t0.elapsed();
        }
    }
    drop(tx);
    let _ = consumer.join();
    total.as_secs_f64() * 1e3 / frames as f64
}

fn write_frame(w: &mut impl Write, payloads: &Frame) -> io::Result<()> {
    w.write_all(&(payloads.len() as u32).to_be_bytes())?;
    for p in payloads {
        w.write_all(&(p.len() as u32).to_be_bytes())?;
        w.write_all(p)?;
    }
    w.flush()
}

fn cross_process_ms(stream: &TcpStream, payloads: &Frame, warmup: usize, frames: usize) -> io::Result<f64> {
    let mut w = BufWriter::with_capacity(1 << 20, stream.try_clone()?);
    let mut r = stream.try_clone()?;
    let mut ack = [0u8; 1];
    let mut total = Duration::ZERO;
    for i in 0..warmup + frames {
        let t0 = Instant::now();
        write_frame(&mut w, payloads)?;
        r.read_exact(&mut ack)?;
        if i >= warmup {
            total += t0.elapsed();
        }
    }
    Ok(total.as_secs_f64() * 1e3 / frames as f64)
}

struct Relay {
    child: Child,
    stream: TcpStream,
}

const RELAY_CONNECT_TIMEOUT: Duration = Duration::from_secs(10);

fn start_relay(cfg: &BridgeConfig) -> Result<Relay, BridgeError> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let addr = listener.local_addr()?;
    let mut child = Command::new(&cfg.relay_exe)
        .args(&cfg.relay_args)
        .arg(addr.to_string())
        .stdin(Stdio::null())
        .spawn()
        .map_err(|source| BridgeError::Spawn {
            exe: cfg.relay_exe.clone(),
            source,
        })?;
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + RELAY_CONNECT_TIMEOUT;
    let stream = loop {
        match listener.accept() {
            Ok((s, _)) => break s,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if let Some(status) = child.try_wait()? {
                    return Err(BridgeError::Spawn {
                        exe: cfg.relay_exe.clone(),
                        source: io::Error::other(format!("relay exited early with {status}")),
                    });
                }
                if Instant::now() > deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(BridgeError::Timeout(RELAY_CONNECT_TIMEOUT));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    };
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    Ok(Relay { child, stream })
}

impl Relay {
    fn finish(mut self) -> Result<(), BridgeError> {
        let _ = (&self.stream).write_all(&0u32.to_be_bytes());
        let status = self.child.wait()?;
        if !status.success() {
            log::warn!("relay exited with {status}");
        }
        Ok(())
    }
}

impl Drop for Relay {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

pub fn bridge_compare(cfg: &BridgeConfig) -> Result<BridgeReport, BridgeError> {
    if cfg.counts.is_empty() || cfg.counts.contains(&0) || cfg.frames == 0 {
        return Err(BridgeError::Config("counts and frames must be positive".into()));
    }
    if cfg.width == 0 || cfg.height == 0 {
        return Err(BridgeError::Config("payload resolution must be positive".into()));
    }
    let bytes = cfg.width as usize * cfg.height as usize;
    let max = *cfg.counts.iter().max().expect("non-empty");
    let all = make_payloads(max, bytes);
    let relay = start_relay(cfg)?;
    let mut points = Vec::with_capacity(cfg.counts.len());
    for &n in &cfg.counts {
        let frame: Frame = all[..n].to_vec();
        let in_process_ms = in_process_ms(&frame, cfg.warmup_frames, cfg.frames);
        let cross_process_ms = cross_process_ms(&relay.stream, &frame, cfg.warmup_frames, cfg.frames)?;
        points.push(BridgePoint {
            sensors: n,
            in_process_ms,
            cross_process_ms,
        });
    }
    relay.finish()?;
    Ok(BridgeReport {
        payload_bytes: bytes,
        frames: cfg.frames,
        points,
    })
}

/// The relay side: connects to `addr`, reads frames fully, acknowledges
/// each one. Returns at a zero-count frame or when the peer closes.
pub fn relay_main(addr: &str) -> io::Result<()> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut w = stream.try_clone()?;
    let mut r = BufReader::with_capacity(1 << 20, stream);
    let mut buf = Vec::new();
    let mut word = [0u8; 4];
    loop {
        if r.read_exact(&mut word).is_err() {
            return Ok(());
        }
        let n = u32::from_be_bytes(word);
        if n == 0 {
            return Ok(());
        }
        let mut check = 0u8;
        for _ in 0..n {
            r.read_exact(&mut word)?;
            let len = u32::from_be_bytes(word) as usize;
            buf.resize(len, 0);
            r.read_exact(&mut buf)?;
            check ^= buf.get(len / 2).copied().unwrap_or(0);
        }
        w.write_all(&[check])?;
    }
}
