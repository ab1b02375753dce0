//! Benchmark harness: frame rate under named workloads, call latency,
//! payload transfer in and across processes, and lifecycle stability.
//!
//! Memory figures come from the process resident set; there is no GPU.

pub mod bridge;
pub mod harness;
pub mod latency;
pub mod memory;
pub mod report;
pub mod stability;
pub mod stats;
pub mod workload;

use airground_rpc::ClientError;
use thiserror::Error;

pub use bridge::{bridge_compare, BridgeConfig, BridgeError, BridgeReport};
pub use harness::{run_harness, BenchConfig, BenchReport};
pub use latency::{latency_bench, latency_probe, DelayServer, LatencyCall, LatencyConfig, LatencyReport};
pub use memory::{InjectedLeak, MemoryProbe, ProcessRss};
pub use stability::{stability_run, StabilityConfig, StabilityReport, Verdict};
pub use workload::{Profile, WorkloadSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot reach simulator: {0}")]
    Connect(#[source] ClientError),
    #[error("workload setup failed: {0}")]
    Setup(#[source] ClientError),
}
