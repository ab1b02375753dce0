//! JSON and CSV output of bench reports.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::harness::BenchReport;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    series: &'a str,
    index: usize,
    value: f64,
}

/// Raw series as long-format rows: `series,index,value`. Latency series are
/// named `latency_us.<method>`.
pub fn write_series_csv(path: &Path, report: &BenchReport) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut put = |series: &str, xs: &[f64]| -> io::Result<()> {
        for (index, &value) in xs.iter().enumerate() {
            w.serialize(SeriesRow { series, index, value })?;
        }
        Ok(())
    };
    put("frame_rate_hz", &report.frame_rate_hz)?;
    put("memory_mib", &report.memory_mib)?;
    for (k, v) in &report.latency_us {
        put(&format!("latency_us.{k}"), v)?;
    }
    w.flush()
}
