//! TCP listeners. Every connection gets a reader thread that dispatches
//! requests and a writer thread that serializes responses, so replies
//! completed later by the tick loop never block the reader.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use thiserror::Error;

use crate::api::Api;
use crate::dispatch::ApiHandler;
use crate::kernel::KernelHandle;
use crate::wire::{
    parse_request, read_frame, write_message, ProtocolError, Request, Response, RpcError,
    INVALID_REQUEST,
};

pub const DEFAULT_GROUND_PORT: u16 = 2000;
pub const DEFAULT_AERIAL_PORT: u16 = 41451;

pub trait Handler: Send + Sync + 'static {
    /// Answers `req` now or later by sending exactly one response on `out`.
    fn handle(&self, req: Request, out: &Sender<Response>);
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("ground and aerial ports must differ (both {0})")]
    SamePort(u16),
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointConfig {
    pub bind: IpAddr,
    pub ground_port: u16,
    pub aerial_port: u16,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            ground_port: DEFAULT_GROUND_PORT,
            aerial_port: DEFAULT_AERIAL_PORT,
        }
    }
}

impl EndpointConfig {
    /// Both listeners on OS-assigned loopback ports.
    pub fn ephemeral() -> Self {
        Self {
            ground_port: 0,
            aerial_port: 0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.ground_port != 0 && self.ground_port == self.aerial_port {
            return Err(ServerError::SamePort(self.ground_port));
        }
        Ok(())
    }
}

/// One accepting socket and its live connections.
pub struct Listener {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<HashMap<u64, TcpStream>>>,
    accept: Option<JoinHandle<()>>,
}

impl Listener {
    pub fn bind(addr: SocketAddr, handler: Arc<dyn Handler>) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(addr).map_err(|source| ServerError::Bind {
            port: addr.port(),
            source,
        })?;
        let addr = listener.local_addr().map_err(|source| ServerError::Bind {
            port: addr.port(),
            source,
        })?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns = Arc::new(Mutex::new(HashMap::new()));
        let accept = {
            let (stop, conns) = (Arc::clone(&stop), Arc::clone(&conns));
            thread::Builder::new()
                .name(format!("accept-{}", addr.port()))
                .spawn(move || accept_loop(listener, handler, stop, conns))
                .expect("spawn accept thread")
        };
        Ok(Self {
            addr,
            stop,
            conns,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn connection_count(&self) -> usize {
        self.conns.lock().expect("conns lock").len()
    }

    /// Stops accepting and closes every open connection.
    pub fn stop(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        for c in self.conns.lock().expect("conns lock").values() {
            let _ = c.shutdown(Shutdown::Both);
        }
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(
    listener: TcpListener,
    handler: Arc<dyn Handler>,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<HashMap<u64, TcpStream>>>,
) {
    let next = AtomicU64::new(0);
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        let id = next.fetch_add(1, Ordering::Relaxed);
        if let Ok(c) = stream.try_clone() {
            conns.lock().expect("conns lock").insert(id, c);
        }
        let (handler, conns) = (Arc::clone(&handler), Arc::clone(&conns));
        let spawned = thread::Builder::new()
            .name(format!("conn-{id}"))
            .spawn(move || {
                serve_connection(stream, handler);
                conns.lock().expect("conns lock").remove(&id);
            });
        if let Err(e) = spawned {
            log::error!("cannot spawn connection thread: {e}");
        }
    }
}

fn serve_connection(stream: TcpStream, handler: Arc<dyn Handler>) {
    let peer = stream.peer_addr().ok();
    let Ok(write_half) = stream.try_clone() else {
        return;
    };
    let (tx, rx) = mpsc::channel::<Response>();
    let writer = thread::spawn(move || {
        let mut w = BufWriter::new(write_half);
        for resp in rx {
            if write_message(&mut w, &resp).is_err() {
                break;
            }
        }
        let _ = w.get_ref().shutdown(Shutdown::Write);
    });

    let mut reader = BufReader::new(&stream);
    loop {
        let payload = match read_frame(&mut reader) {
            Ok(Some(p)) => p,
            Ok(None) => break,
            Err(ProtocolError::Io(_)) => break,
            Err(e) => {
                log::debug!("closing {peer:?}: {e}");
                let _ = tx.send(Response::err(None, RpcError::new(INVALID_REQUEST, e.to_string())));
                break;
            }
        };
        match parse_request(&payload) {
            Ok(req) => handler.handle(req, &tx),
            Err((Some(id), err)) => {
                let _ = tx.send(Response::err(Some(id), err));
            }
            Err((None, err)) => {
                log::debug!("closing {peer:?}: {}", err.message);
                let _ = tx.send(Response::err(None, err));
                break;
            }
        }
    }
    let _ = stream.shutdown(Shutdown::Read);
    drop(tx);
    let _ = writer.join();
}

/// Both APIs over one kernel.
pub struct Servers {
    pub ground: Listener,
    pub aerial: Listener,
    pub kernel: KernelHandle,
}

impl Servers {
    pub fn start(cfg: &EndpointConfig, kernel: KernelHandle) -> Result<Self, ServerError> {
        cfg.validate()?;
        let ground = Listener::bind(
            SocketAddr::new(cfg.bind, cfg.ground_port),
            Arc::new(ApiHandler {
                api: Api::Ground,
                kernel: kernel.clone(),
            }),
        )?;
        let aerial = Listener::bind(
            SocketAddr::new(cfg.bind, cfg.aerial_port),
            Arc::new(ApiHandler {
                api: Api::Aerial,
                kernel: kernel.clone(),
            }),
        )?;
        Ok(Self {
            ground,
            aerial,
            kernel,
        })
    }

    pub fn ground_addr(&self) -> SocketAddr {
        self.ground.local_addr()
    }

    pub fn aerial_addr(&self) -> SocketAddr {
        self.aerial.local_addr()
    }

    pub fn shutdown(mut self) {
        self.ground.stop();
        self.aerial.stop();
        self.kernel.shutdown();
    }
}
