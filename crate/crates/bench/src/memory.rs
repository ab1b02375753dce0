//! Process-resident memory, standing in for GPU memory.

use std::fs;

pub trait MemoryProbe {
    /// Current resident set, MiB.
    fn sample_mib(&mut self) -> f64;
}

/// Reads `VmRSS` from `/proc/<pid>/status`. Reports 0 where procfs is
/// unavailable.
#[derive(Debug, Clone)]
pub struct ProcessRss {
    path: String,
}

impl ProcessRss {
    pub fn current() -> Self {
        Self {
            path: "/proc/self/status".into(),
        }
    }

    pub fn pid(pid: u32) -> Self {
        Self {
            path: format!("/proc/{pid}/status"),
        }
    }
}

pub fn parse_vm_rss_kib(status: &str) -> Option<u64> {
    status
        .lines()
        .find(|l| l.starts_with("VmRSS:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

impl MemoryProbe for ProcessRss {
    fn sample_mib(&mut self) -> f64 {
        fs::read_to_string(&self.path)
            .ok()
            .and_then(|s| parse_vm_rss_kib(&s))
            .map(|kib| kib as f64 / 1024.0)
            .unwrap_or(0.0)
    }
}

/// Wraps a probe and adds a fixed growth per sample; a fault-injection
/// double for leak detection.
pub struct InjectedLeak<P> {
    pub inner: P,
    pub mib_per_sample: f64,
    samples: u64,
}

impl<P> InjectedLeak<P> {
    pub fn new(inner: P, mib_per_sample: f64) -> Self {
        Self {
            inner,
            mib_per_sample,
            samples: 0,
        }
    }
}

impl<P: MemoryProbe> MemoryProbe for InjectedLeak<P> {
    fn sample_mib(&mut self) -> f64 {
        let v = self.inner.sample_mib() + self.mib_per_sample * self.samples as f64;
        self.samples += 1;
        v
    }
}

/// User plus system CPU time of this process in seconds, from
/// `/proc/self/stat`.
pub fn process_cpu_seconds() -> Option<f64> {
    let stat = fs::read_to_string("/proc/self/stat").ok()?;
    // Fields after the parenthesised command name; utime and stime are the
    // 14th and 15th fields overall.
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: f64 = fields.get(11)?.parse().ok()?;
    let stime: f64 = fields.get(12)?.parse().ok()?;
    Some((utime + stime) / clock_ticks_per_second())
}

fn clock_ticks_per_second() -> f64 {
    // USER_HZ is 100 on every mainstream Linux configuration.
    100.0
}
