//! Ground and aerial RPC servers over one shared world.
//!
//! Both APIs speak the same framing: a 4-byte big-endian length and a JSON
//! request `{id, method, params}` answered by `{id, result}` or
//! `{id, error: {code, message}}`. Read-only methods are answered from the
//! latest published tick; mutating methods are queued to the tick loop and
//! answered after the tick that applied them.

pub mod api;
pub mod client;
pub mod dispatch;
pub mod kernel;
pub mod server;
pub mod wire;

pub use api::{Api, TickInfo};
pub use client::{AerialClient, Client, ClientError, ClientResult, GroundClient, Pending, Session};
pub use kernel::{spawn_kernel, KernelHandle, KernelOptions};
pub use server::{EndpointConfig, Handler, Listener, ServerError, Servers};
pub use wire::{Request, Response, RpcError};
