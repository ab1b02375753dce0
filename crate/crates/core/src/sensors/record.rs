//! Per-tick records and the on-disk dataset layout.
//!
//! ```text
//! <record_dir>/tick_00000007/
//!     meta.json
//!     s0003_depth.bin     # 16-byte AGSR header + little-endian grid
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Modality, Payload, SensorId};
use crate::error::{SimError, SimResult};
use crate::frames::PoseNed;
use crate::world::{ActorId, ActorKind};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub sensor_id: SensorId,
    pub parent: ActorId,
    pub modality: Modality,
    pub tick: u64,
    pub payload: Arc<Payload>,
}

impl StreamSample {
    pub fn file_name(&self) -> String {
        format!("s{:04}_{}.bin", self.sensor_id.0, self.modality.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformPose {
    pub kind: ActorKind,
    /// Shared NED frame.
    pub pose: PoseNed,
}

/// Every attached sensor's observation for one tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickRecord {
    pub tick: u64,
    pub streams: BTreeMap<SensorId, StreamSample>,
    /// Poses of every sensor-carrying actor (vehicle and drone platforms).
    pub platforms: BTreeMap<ActorId, PlatformPose>,
}

/// Largest difference between a stream's tick and the record's tick.
pub fn alignment_deviation(record: &TickRecord) -> u64 {
    record
        .streams
        .values()
        .map(|s| s.tick.abs_diff(record.tick))
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub sensor_id: SensorId,
    pub parent: ActorId,
    pub modality: Modality,
    pub dtype: String,
    pub width: u32,
    pub height: u32,
    pub tick: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformMeta {
    pub actor: ActorId,
    pub kind: ActorKind,
    pub pose: PoseNed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub tick: u64,
    pub platforms: Vec<PlatformMeta>,
    pub streams: Vec<StreamMeta>,
}

impl RecordMeta {
    pub fn from_record(record: &TickRecord) -> Self {
        Self {
            tick: record.tick,
            platforms: record
                .platforms
                .iter()
                .map(|(id, p)| PlatformMeta {
                    actor: *id,
                    kind: p.kind,
                    pose: p.pose,
                })
                .collect(),
            streams: record
                .streams
                .values()
                .map(|s| {
                    let (width, height) = s.payload.dims();
                    StreamMeta {
                        sensor_id: s.sensor_id,
                        parent: s.parent,
                        modality: s.modality,
                        dtype: s.payload.dtype().to_string(),
                        width,
                        height,
                        tick: s.tick,
                        file: s.file_name(),
                    }
                })
                .collect(),
        }
    }
}

pub fn record_dir_name(tick: u64) -> String {
    format!("tick_{tick:08}")
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::WriteError {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one record, replacing any previous contents of its directory.
pub fn write_record(record: &TickRecord, record_dir: &Path) -> SimResult<Vec<PathBuf>> {
    let dir = record_dir.join(record_dir_name(record.tick));
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(write_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(write_err(&dir))?;
    let mut written = Vec::with_capacity(record.streams.len() + 1);
    for s in record.streams.values() {
        let path = dir.join(s.file_name());
        fs::write(&path, s.payload.encode()).map_err(write_err(&path))?;
        written.push(path);
    }
    let meta_path = dir.join("meta.json");
    let meta = serde_json::to_vec_pretty(&RecordMeta::from_record(record))
        .expect("record metadata serializes");
    fs::write(&meta_path, meta).map_err(write_err(&meta_path))?;
    written.push(meta_path);
    Ok(written)
}

pub fn read_meta(tick_dir: &Path) -> SimResult<RecordMeta> {
    let path = tick_dir.join("meta.json");
    let bytes = fs::read(&path).map_err(write_err(&path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| SimError::invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;
    use crate::sensors::{decode_stream, GnssReading, Grid};

    fn sample_record(tick: u64) -> TickRecord {
        let mut r = TickRecord {
            tick,
            ..Default::default()
        };
        r.streams.insert(
            SensorId(3),
            StreamSample {
                sensor_id: SensorId(3),
                parent: ActorId(1),
                modality: Modality::Depth,
                tick,
                payload: Arc::new(Payload::Depth(Grid {
                    width: 2,
                    height: 2,
                    data: vec![1.0, 2.0, f32::INFINITY, 4.0],
                })),
            },
        );
        r.streams.insert(
            SensorId(4),
            StreamSample {
                sensor_id: SensorId(4),
                parent: ActorId(2),
                modality: Modality::Gnss,
                tick,
                payload: Arc::new(Payload::Gnss(GnssReading {
                    position: vec3(1.0, 2.0, -3.0),
                    tick,
                })),
            },
        );
        r.platforms.insert(
            ActorId(1),
            PlatformPose {
                kind: ActorKind::Vehicle,
                pose: PoseNed::origin(),
            },
        );
        r
    }

    #[test]
    fn writes_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let rec = sample_record(7);
        let paths = write_record(&rec, tmp.path()).unwrap();
        let dir = tmp.path().join("tick_00000007");
        assert!(dir.is_dir());
        assert_eq!(paths.len(), 3);
        assert!(dir.join("meta.json").is_file());
        let bytes = fs::read(dir.join("s0003_depth.bin")).unwrap();
        let (w, h, data) = decode_stream(&bytes).unwrap();
        assert_eq!((w, h, data.len()), (2, 2, 16));
    }

    #[test]
    fn meta_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let rec = sample_record(12);
        write_record(&rec, tmp.path()).unwrap();
        let meta = read_meta(&tmp.path().join(record_dir_name(12))).unwrap();
        assert_eq!(meta, RecordMeta::from_record(&rec));
        assert_eq!(meta.streams.len(), 2);
        assert!(meta.streams.iter().all(|s| s.tick == 12));
    }

    #[test]
    fn overwrite_is_idempotent() {
        let tmp = tempfile::tempdir().unwrap();
        let rec = sample_record(1);
        write_record(&rec, tmp.path()).unwrap();
        let first = fs::read(tmp.path().join("tick_00000001/meta.json")).unwrap();
        write_record(&rec, tmp.path()).unwrap();
        let second = fs::read(tmp.path().join("tick_00000001/meta.json")).unwrap();
        assert_eq!(first, second);
        assert_eq!(fs::read_dir(tmp.path().join("tick_00000001")).unwrap().count(), 3);
    }

    #[test]
    fn unwritable_dir_reports_path() {
        let tmp = tempfile::tempdir().unwrap();
        let blocker = tmp.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = write_record(&sample_record(1), &blocker).unwrap_err();
        assert!(matches!(err, SimError::WriteError { .. }));
    }

    #[test]
    fn alignment_of_record() {
        let mut rec = sample_record(5);
        assert_eq!(alignment_deviation(&rec), 0);
        rec.streams.get_mut(&SensorId(3)).unwrap().tick = 4;
        assert_eq!(alignment_deviation(&rec), 1);
    }
}
