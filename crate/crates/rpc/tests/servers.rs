use std::io::{Read, Write};
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use airground_core::aerial::{self, DroneState};
use airground_core::frames::{self, PoseNed};
use airground_core::math::{from_array, vec3};
use airground_core::sensors::{decode_f32, Modality};
use airground_core::{ActorKind, Vec3, WorldConfig, WorldState};
use airground_rpc::api::{decode_payload, SpawnRequest, TakeoffParams};
use airground_rpc::wire::{self, MAX_FRAME};
use airground_rpc::{
    spawn_kernel, Client, ClientError, EndpointConfig, KernelOptions, Pending, ServerError,
    Servers, Session,
};
use serde_json::json;

fn start(sync: bool) -> Servers {
    let world = WorldState::create(WorldConfig {
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let kernel = spawn_kernel(
        world,
        KernelOptions {
            synchronous: sync,
            record_dir: None,
        },
    );
    Servers::start(&EndpointConfig::ephemeral(), kernel).unwrap()
}

fn session(s: &Servers) -> Session {
    Session::connect(s.ground_addr(), s.aerial_addr()).unwrap()
}

#[test]
fn echo_id_and_unknown_method() {
    let s = start(true);
    let mut c = Client::connect(s.ground_addr()).unwrap();
    c.send_raw(br#"{"id":1,"method":"world_snapshot","params":{}}"#).unwrap();
    let r = c.read_response().unwrap();
    assert_eq!(r.id, Some(1));
    let snap = r.result.unwrap();
    assert_eq!(snap["tick"], 0);
    assert!(snap["actors"].as_array().unwrap().is_empty());

    let err = c.call("fly_to_moon", json!({})).unwrap_err();
    assert_eq!(err.code(), Some(wire::METHOD_NOT_FOUND));
    // Aerial methods are not served on the ground port.
    let err = c.call("multirotor_state", json!({})).unwrap_err();
    assert_eq!(err.code(), Some(wire::METHOD_NOT_FOUND));
    let err = c.call("actor_transform", json!({"id": "x"})).unwrap_err();
    assert_eq!(err.code(), Some(wire::INVALID_PARAMS));
    s.shutdown();
}

#[test]
fn malformed_frame_closes_connection() {
    let s = start(true);
    let mut c = Client::connect(s.ground_addr()).unwrap();
    c.send_raw(b"not json").unwrap();
    let r = c.read_response().unwrap();
    assert_eq!(r.id, None);
    assert_eq!(r.error.unwrap().code, wire::PARSE_ERROR);
    assert!(matches!(c.read_response(), Err(ClientError::Closed)));

    // A length prefix over the limit is refused without reading the body.
    let mut raw = TcpStream::connect(s.ground_addr()).unwrap();
    raw.write_all(&((MAX_FRAME as u32) + 1).to_be_bytes()).unwrap();
    let mut len = [0u8; 4];
    raw.read_exact(&mut len).unwrap();
    let mut body = vec![0u8; u32::from_be_bytes(len) as usize];
    raw.read_exact(&mut body).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"]["code"], wire::INVALID_REQUEST);
    let mut rest = Vec::new();
    raw.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    assert_eq!(raw.read_to_end(&mut rest).unwrap(), 0);

    // The server keeps serving other connections.
    let mut ok = Client::connect(s.ground_addr()).unwrap();
    ok.barrier().unwrap();
    s.shutdown();
}

#[test]
fn equal_ports_rejected() {
    let world = WorldState::create(WorldConfig::default()).unwrap();
    let kernel = spawn_kernel(world, KernelOptions::default());
    let cfg = EndpointConfig {
        ground_port: 40555,
        aerial_port: 40555,
        ..Default::default()
    };
    assert!(matches!(Servers::start(&cfg, kernel.clone()), Err(ServerError::SamePort(40555))));
    kernel.shutdown();
}

#[test]
fn port_in_use_names_port() {
    let s = start(true);
    let taken = s.ground_addr().port();
    let world = WorldState::create(WorldConfig::default()).unwrap();
    let kernel = spawn_kernel(world, KernelOptions::default());
    let cfg = EndpointConfig {
        ground_port: taken,
        aerial_port: 0,
        ..Default::default()
    };
    match Servers::start(&cfg, kernel.clone()) {
        Err(e @ ServerError::Bind { .. }) => assert!(e.to_string().contains(&taken.to_string())),
        other => panic!("expected bind error, got {:?}", other.err()),
    }
    kernel.shutdown();
    s.shutdown();
}

#[test]
fn concurrent_clients_get_their_own_ids() {
    let s = start(false);
    let addr = s.ground_addr();
    let workers: Vec<_> = (0..4)
        .map(|_| {
            thread::spawn(move || {
                let mut c = Client::connect(addr).unwrap();
                let ids: Vec<u64> = (0..50).map(|_| c.send("world_snapshot", json!({})).unwrap()).collect();
                for id in ids.iter().rev() {
                    c.wait(*id).unwrap();
                }
                let mut last = 0;
                for _ in 0..50 {
                    let id = c.send("ping", json!({})).unwrap();
                    assert!(id > last);
                    last = id;
                    let r = c.read_response().unwrap();
                    assert_eq!(r.id, Some(id));
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    s.shutdown();
}

#[test]
fn sync_gate_freezes_world() {
    let s = start(true);
    let mut sess = session(&s);
    let a = sess.ground.world_snapshot().unwrap();
    thread::sleep(Duration::from_millis(150));
    let b = sess.ground.world_snapshot().unwrap();
    assert_eq!(a, b);
    assert_eq!(sess.ground.tick().unwrap().tick, 1);
    assert_eq!(sess.ground.world_snapshot().unwrap().tick, 1);
    s.shutdown();
}

#[test]
fn tick_in_async_mode_is_mode_error() {
    let s = start(false);
    let mut sess = session(&s);
    let err = sess.ground.tick().unwrap_err();
    assert_eq!(err.code(), Some(wire::MODE_ERROR));
    sess.ground.set_synchronous_mode(true).unwrap();
    let t = sess.ground.world_snapshot().unwrap().tick;
    assert_eq!(sess.ground.tick().unwrap().tick, t + 1);
    s.shutdown();
}

#[test]
fn velocity_then_tick_matches_direct_integration() {
    let s = start(true);
    let mut sess = session(&s);
    let drone = sess.spawn(&SpawnRequest::at(ActorKind::Drone, Vec3::zeros())).unwrap();
    sess.apply(Pending::aerial("enable_api_control", json!({"enabled": true}))).unwrap();
    let before = sess.aerial.multirotor_state(Some(drone)).unwrap();

    let cmd = vec3(1.5, -0.5, -1.0);
    let (info, results) = sess.step(&[Pending::set_velocity(Some(drone), cmd)]).unwrap();
    assert!(results[0].is_ok());
    let after = sess.aerial.multirotor_state(Some(drone)).unwrap();
    assert_eq!(after.tick, info.tick);

    // Oracle: the same command integrated directly over one tick.
    let cfg = aerial::PhysicsConfig::default();
    // Spawned on the ground at the origin: the floor is at local z = 0.
    let mut d = DroneState::new(PoseNed::new(Vec3::zeros(), before.state.pose_ned.orientation), 0.0);
    aerial::enable_api_control(&mut d, true);
    aerial::set_velocity_command(drone, &mut d, cmd, &cfg).unwrap();
    let expect = aerial::integrate_over_tick(&d, &cfg, 50);
    assert!((after.state.pose_ned.position - expect.pose_ned.position).norm() < 1e-12);
    assert!((after.state.velocity_ned - expect.velocity_ned).norm() < 1e-12);
    s.shutdown();
}

#[test]
fn cross_api_coherence() {
    let s = start(true);
    let mut sess = session(&s);
    let drone = sess.spawn(&SpawnRequest::at(ActorKind::Drone, Vec3::zeros())).unwrap();
    sess.step(&[
        Pending::aerial("enable_api_control", json!({"enabled": true})),
        Pending::aerial("takeoff_to", TakeoffParams { drone: None, altitude: 6.0 }),
    ])
    .unwrap();
    for k in 0..80 {
        let cmds = if k == 40 {
            vec![Pending::set_velocity(None, vec3(2.0, 1.0, 0.0))]
        } else {
            vec![]
        };
        sess.step(&cmds).unwrap();
        let t = sess.ground.actor_transform(drone).unwrap();
        let m = sess.aerial.multirotor_state(Some(drone)).unwrap();
        assert_eq!(t.tick, m.tick);
        let from_ground = frames::ue_to_ned_pose(&t.pose(), &Vec3::zeros()).unwrap();
        let shared = frames::co_register(&m.state.pose_ned.position, &m.offset);
        assert!((from_ground.position - shared).norm() < 1e-6);
        let (a, b) = (from_ground.orientation, m.state.pose_ned.orientation);
        for (x, y) in [(a.w, b.w), (a.x, b.x), (a.y, b.y), (a.z, b.z)] {
            assert!((x - y).abs() < 1e-6);
        }
    }
    s.shutdown();
}

#[test]
fn destroyed_actor_transform_errors() {
    let s = start(true);
    let mut sess = session(&s);
    let id = sess.spawn(&SpawnRequest::at(ActorKind::Vehicle, vec3(0.0, 0.0, 75.0))).unwrap();
    sess.ground.actor_transform(id).unwrap();
    sess.apply(Pending::ground("destroy_actor", json!({"id": id}))).unwrap();
    let err = sess.ground.actor_transform(id).unwrap_err();
    assert_eq!(err.code(), Some(wire::ACTOR_NOT_FOUND));
    let err = sess.apply(Pending::ground("destroy_actor", json!({"id": id}))).unwrap_err();
    assert_eq!(err.code(), Some(wire::ACTOR_NOT_FOUND));
    s.shutdown();
}

#[test]
fn domain_errors_over_the_wire() {
    let s = start(true);
    let mut sess = session(&s);
    sess.spawn(&SpawnRequest::at(ActorKind::Drone, Vec3::zeros())).unwrap();
    let err = sess.apply(Pending::set_velocity(None, vec3(1.0, 0.0, 0.0))).unwrap_err();
    assert_eq!(err.code(), Some(wire::CONTROL_NOT_ENABLED));
    sess.apply(Pending::aerial("enable_api_control", json!({"enabled": true}))).unwrap();
    let err = sess.apply(Pending::set_velocity(None, vec3(99.0, 0.0, 0.0))).unwrap_err();
    assert_eq!(err.code(), Some(wire::COMMAND_OUT_OF_RANGE));
    let err = sess.apply(Pending::ground("set_weather", json!({"name": "nosuch"}))).unwrap_err();
    assert_eq!(err.code(), Some(wire::WEATHER_NOT_FOUND));
    let err = sess
        .apply(Pending::ground("spawn_actor", SpawnRequest::at(ActorKind::Vehicle, vec3(0.0, 0.0, 50.0))))
        .unwrap_err();
    assert_eq!(err.code(), Some(wire::SPAWN_COLLISION));
    s.shutdown();
}

#[test]
fn capture_image_depth_matches_geometry() {
    let s = start(true);
    let mut sess = session(&s);
    // 10 m above the ground plane; the default camera sits 15 cm below the body.
    let drone = sess.spawn(&SpawnRequest::at(ActorKind::Drone, vec3(0.0, 0.0, 1_000.0))).unwrap();
    let img = sess.aerial.capture_image(Some(drone), Modality::Depth, 64, 64, None).unwrap();
    let (w, h, data) = decode_payload(&img).unwrap();
    assert_eq!((w, h, img.dtype.as_str()), (64, 64, "f32"));
    let depth = decode_f32(&data);
    assert!((depth[32 * 64 + 32] as f64 - 9.85).abs() < 1e-6);

    let cam_mount = airground_core::sensors::mount::down(Vec3::zeros());
    let img = sess.aerial.capture_image(Some(drone), Modality::Depth, 64, 64, Some(cam_mount)).unwrap();
    let depth = decode_f32(&decode_payload(&img).unwrap().2);
    assert_eq!(depth[32 * 64 + 32], 10.0);
    s.shutdown();
}

#[test]
fn attached_sensor_streams_over_rpc() {
    let s = start(true);
    let mut sess = session(&s);
    let car = sess.spawn(&SpawnRequest::at(ActorKind::Vehicle, vec3(-2_000.0, 0.0, 75.0))).unwrap();
    let gnss = sess
        .attach(
            airground_rpc::Api::Ground,
            &airground_rpc::api::AttachParams {
                parent: car,
                modality: Modality::Gnss,
                width: 0,
                height: 0,
                mount: None,
            },
        )
        .unwrap();
    // The tick that applied the attachment already captured it.
    let attached_at = sess.ground.world_snapshot().unwrap().tick;
    assert_eq!(sess.ground.sensor_data(gnss).unwrap().tick, attached_at);
    let info = sess.step(&[]).unwrap().0;
    let p = sess.ground.sensor_data(gnss).unwrap();
    assert_eq!(p.tick, info.tick);
    let pos = airground_core::sensors::decode_f64(&decode_payload(&p).unwrap().2);
    assert_eq!(from_array([pos[0], pos[1], pos[2]]), vec3(-20.0, 0.0, -0.75));
    s.shutdown();
}

#[test]
fn servers_are_independent() {
    let mut s = start(true);
    let mut sess = session(&s);
    sess.spawn(&SpawnRequest::at(ActorKind::Drone, Vec3::zeros())).unwrap();
    let mut extra = Client::connect(s.aerial_addr()).unwrap();
    extra.barrier().unwrap();
    drop(extra);
    s.aerial.stop();
    assert!(matches!(sess.aerial.multirotor_state(None), Err(_)));
    for _ in 0..3 {
        sess.ground.tick().unwrap();
        sess.ground.world_snapshot().unwrap();
    }
    assert!(Client::connect(s.aerial_addr()).is_err());

    // And the other way round.
    let mut s2 = start(true);
    let mut sess2 = session(&s2);
    sess2.spawn(&SpawnRequest::at(ActorKind::Drone, Vec3::zeros())).unwrap();
    s2.ground.stop();
    assert!(sess2.ground.world_snapshot().is_err());
    for _ in 0..3 {
        sess2.aerial.multirotor_state(None).unwrap();
    }
    s.shutdown();
    s2.shutdown();
}

#[test]
fn recording_writes_tick_dirs() {
    let s = start(true);
    let mut sess = session(&s);
    let tmp = tempfile::tempdir().unwrap();
    let drone = sess.spawn(&SpawnRequest::at(ActorKind::Drone, vec3(0.0, 0.0, 1_000.0))).unwrap();
    sess.attach(
        airground_rpc::Api::Aerial,
        &airground_rpc::api::AttachParams {
            parent: drone,
            modality: Modality::Depth,
            width: 8,
            height: 8,
            mount: None,
        },
    )
    .unwrap();
    sess.ground.start_recording(tmp.path().to_str().unwrap()).unwrap();
    for _ in 0..3 {
        let info = sess.ground.tick().unwrap();
        assert!(info.write_us.is_some());
    }
    sess.ground.stop_recording().unwrap();
    assert!(sess.ground.tick().unwrap().write_us.is_none());
    let dirs = std::fs::read_dir(tmp.path()).unwrap().count();
    assert_eq!(dirs, 3);
    s.shutdown();
}

#[test]
fn mixed_batch_applies_ground_before_aerial() {
    use airground_rpc::api::{AttachParams, SensorAttached};
    let s = start(true);
    let mut sess = session(&s);
    let drone = sess.spawn(&SpawnRequest::at(ActorKind::Drone, Vec3::zeros())).unwrap();
    let attach = |modality| AttachParams {
        parent: drone,
        modality,
        width: 1,
        height: 1,
        mount: None,
    };
    for _ in 0..20 {
        // Aerial first in send order; the ground attach still gets the lower id.
        let (_, r) = sess
            .step(&[
                Pending::aerial("attach_sensor", attach(Modality::Gnss)),
                Pending::ground("attach_sensor", attach(Modality::Imu)),
            ])
            .unwrap();
        let ids: Vec<SensorAttached> = r
            .into_iter()
            .map(|v| serde_json::from_value(v.unwrap()).unwrap())
            .collect();
        assert!(ids[1].id < ids[0].id, "{ids:?}");
        for a in &ids {
            sess.apply(Pending::ground("detach_sensor", json!({"id": a.id}))).unwrap();
        }
    }
    s.shutdown();
}
