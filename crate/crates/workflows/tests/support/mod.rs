#![allow(dead_code)]

use airground_core::{WorldConfig, WorldState};
use airground_rpc::{spawn_kernel, EndpointConfig, KernelOptions, Servers, Session};

pub fn start(seed: u64) -> Servers {
    let world = WorldState::create(WorldConfig {
        seed,
        ..Default::default()
    })
    .unwrap();
    let kernel = spawn_kernel(
        world,
        KernelOptions {
            synchronous: true,
            record_dir: None,
        },
    );
    Servers::start(&EndpointConfig::ephemeral(), kernel).unwrap()
}

pub fn session(s: &Servers) -> Session {
    Session::connect(s.ground_addr(), s.aerial_addr()).unwrap()
}
