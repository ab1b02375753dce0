//! Length-prefixed JSON framing shared by both APIs.
//!
//! Each frame is a 4-byte big-endian payload length followed by that many
//! bytes of UTF-8 JSON.

use std::io::{self, Read, Write};

use airground_core::SimError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const MAX_FRAME: usize = 64 * 1024 * 1024;

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

pub const ACTOR_NOT_FOUND: i64 = 1;
pub const SPAWN_COLLISION: i64 = 2;
pub const CONTROL_NOT_ENABLED: i64 = 3;
pub const COMMAND_OUT_OF_RANGE: i64 = 4;
pub const WEATHER_NOT_FOUND: i64 = 5;
pub const MODE_ERROR: i64 = 6;
pub const SENSOR_NOT_FOUND: i64 = 7;
pub const WRITE_ERROR: i64 = 8;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte limit")]
    Oversized(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub method: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn invalid_params(message: impl Into<String>) -> Self {
        Self::new(INVALID_PARAMS, message)
    }

    pub fn mode(message: impl Into<String>) -> Self {
        Self::new(MODE_ERROR, message)
    }
}

impl std::fmt::Display for RpcError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

impl From<SimError> for RpcError {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::ActorNotFound(_) => ACTOR_NOT_FOUND,
            SimError::SpawnCollision(_) | SimError::SpawnBlocked(_) => SPAWN_COLLISION,
            SimError::ControlNotEnabled(_) => CONTROL_NOT_ENABLED,
            SimError::CommandOutOfRange { .. } => COMMAND_OUT_OF_RANGE,
            SimError::WeatherNotFound(_) => WEATHER_NOT_FOUND,
            SimError::SensorNotFound(_) => SENSOR_NOT_FOUND,
            SimError::WriteError { .. } => WRITE_ERROR,
            SimError::InvalidInput(_) | SimError::WrongKind(..) | SimError::ConfigError(_) => {
                INVALID_PARAMS
            }
            SimError::MapNotFound(_) | SimError::RouteExhausted => INTERNAL_ERROR,
        };
        RpcError::new(code, e.to_string())
    }
}

/// `id` is `None` only when the request could not be parsed far enough to
/// recover one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RpcError>,
}

impl Response {
    pub fn ok(id: u64, result: Value) -> Self {
        Self {
            id: Some(id),
            result: Some(result),
            error: None,
        }
    }

    pub fn err(id: Option<u64>, error: RpcError) -> Self {
        Self {
            id,
            result: None,
            error: Some(error),
        }
    }

    pub fn from_result(id: u64, r: Result<Value, RpcError>) -> Self {
        match r {
            Ok(v) => Self::ok(id, v),
            Err(e) => Self::err(Some(id), e),
        }
    }
}

/// Reads one frame. `Ok(None)` means the peer closed cleanly between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Malformed("truncated length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(ProtocolError::Oversized(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Malformed("truncated payload".into()),
        _ => ProtocolError::Io(e),
    })?;
    Ok(Some(buf))
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<(), ProtocolError> {
    if payload.len() > MAX_FRAME {
        return Err(ProtocolError::Oversized(payload.len()));
    }
    let mut buf = Vec::with_capacity(payload.len() + 4);
    buf.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn write_message<T: Serialize>(w: &mut impl Write, msg: &T) -> Result<(), ProtocolError> {
    let bytes = serde_json::to_vec(msg).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    write_frame(w, &bytes)
}

/// Parses a request payload. On failure returns the id if one could be
/// recovered, and the error to send back.
pub fn parse_request(payload: &[u8]) -> Result<Request, (Option<u64>, RpcError)> {
    let value: Value = serde_json::from_slice(payload)
        .map_err(|e| (None, RpcError::new(PARSE_ERROR, format!("invalid JSON: {e}"))))?;
    let id = value.get("id").and_then(Value::as_u64);
    if !value.is_object() {
        return Err((id, RpcError::new(INVALID_REQUEST, "request must be an object")));
    }
    serde_json::from_value(value).map_err(|e| (id, RpcError::new(INVALID_REQUEST, e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::io::Cursor;

    #[test]
    fn frame_layout_is_big_endian_prefix() {
        let mut out = Vec::new();
        write_frame(&mut out, b"{}").unwrap();
        assert_eq!(out, [0, 0, 0, 2, b'{', b'}']);
        let mut r = Cursor::new(out);
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"{}");
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn oversized_prefix_rejected_before_allocation() {
        let mut r = Cursor::new(((MAX_FRAME + 1) as u32).to_be_bytes().to_vec());
        assert!(matches!(read_frame(&mut r), Err(ProtocolError::Oversized(_))));
    }

    #[test]
    fn truncated_frames() {
        let mut r = Cursor::new(vec![0, 0]);
        assert!(matches!(read_frame(&mut r), Err(ProtocolError::Malformed(_))));
        let mut r = Cursor::new(vec![0, 0, 0, 9, b'{']);
        assert!(matches!(read_frame(&mut r), Err(ProtocolError::Malformed(_))));
    }

    #[test]
    fn request_parsing() {
        let req = parse_request(br#"{"id":1,"method":"world_snapshot","params":{}}"#).unwrap();
        assert_eq!(req.id, 1);
        assert_eq!(req.method, "world_snapshot");
        let req = parse_request(br#"{"id":2,"method":"ping"}"#).unwrap();
        assert_eq!(req.params, Value::Null);
        let (id, e) = parse_request(b"{nope").unwrap_err();
        assert_eq!((id, e.code), (None, PARSE_ERROR));
        let (id, e) = parse_request(br#"{"id":5}"#).unwrap_err();
        assert_eq!((id, e.code), (Some(5), INVALID_REQUEST));
        let (_, e) = parse_request(b"[1]").unwrap_err();
        assert_eq!(e.code, INVALID_REQUEST);
    }

    #[test]
    fn response_shapes() {
        let ok = serde_json::to_value(Response::ok(3, json!({"tick": 1}))).unwrap();
        assert_eq!(ok, json!({"id": 3, "result": {"tick": 1}}));
        let err = serde_json::to_value(Response::err(Some(4), RpcError::new(METHOD_NOT_FOUND, "x")))
            .unwrap();
        assert_eq!(err, json!({"id": 4, "error": {"code": -32601, "message": "x"}}));
    }

    #[test]
    fn domain_codes() {
        use airground_core::ActorId;
        assert_eq!(RpcError::from(SimError::ActorNotFound(ActorId(1))).code, 1);
        assert_eq!(RpcError::from(SimError::SpawnCollision(ActorId(1))).code, 2);
        assert_eq!(RpcError::from(SimError::ControlNotEnabled(ActorId(1))).code, 3);
        let e = SimError::CommandOutOfRange {
            magnitude: 99.0,
            limit: 10.0,
        };
        assert_eq!(RpcError::from(e).code, 4);
        assert_eq!(RpcError::from(SimError::WeatherNotFound("x".into())).code, 5);
    }
}
