//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each criterion also has a wall-clock budget.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use airground_bench::memory::ProcessRss;
use airground_bench::stats::{harmonic_mean, iqr, leak_regression, median, ols};
use airground_bench::{
    bridge_compare, latency_bench, latency_probe, stability_run, BridgeConfig, DelayServer, LatencyCall,
    LatencyConfig, StabilityConfig, Verdict,
};
use airground_core::frames::{
    co_register, compute_origin_offset, ned_to_ue_position, ned_to_ue_quat, ue_to_ned_position, ue_to_ned_quat,
};
use airground_core::math::vec3;
use airground_core::{ActorKind, OriginOffset, PoseNed, PoseUe, Quat, Vec3, WorldConfig, WorldState};
use airground_rpc::{spawn_kernel, Client, EndpointConfig, KernelOptions, Servers, Session};
use airground_workflows::{collect_dataset, cross_view_check, run_landing, CrossViewConfig, DatasetConfig, LandingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn servers(seed: u64, synchronous: bool) -> Servers {
    let world = WorldState::create(WorldConfig {
        seed,
        ..Default::default()
    })
    .expect("world");
    let kernel = spawn_kernel(
        world,
        KernelOptions {
            synchronous,
            record_dir: None,
        },
    );
    Servers::start(&EndpointConfig::ephemeral(), kernel).expect("servers")
}

fn session(s: &Servers) -> Result<Session, String> {
    Session::connect(s.ground_addr(), s.aerial_addr()).map_err(|e| e.to_string())
}

fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quat {
    loop {
        let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return Quat::new(c[0] / n, c[1] / n, c[2] / n, c[3] / n);
        }
    }
}

fn coordinates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst_m = 0.0f64;
    for i in 0..10_000 {
        let p: Vec3 = vec3(
            rng.gen_range(-1e6..1e6),
            rng.gen_range(-1e6..1e6),
            rng.gen_range(-1e5..1e5),
        );
        let o: Vec3 = vec3(rng.gen_range(-1e4..1e4), rng.gen_range(-1e4..1e4), rng.gen_range(-1e3..1e3));
        let ned = ue_to_ned_position(&p, &o).map_err(|e| e.to_string())?;
        // Hand-written forward map as the oracle.
        let want = [(p.x - o.x) / 100.0, (p.y - o.y) / 100.0, -(p.z - o.z) / 100.0];
        check(ned.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0)), || {
            format!("pose {i}: forward map {ned:?} vs {want:?}")
        })?;
        let back = ned_to_ue_position(&ned, &o).map_err(|e| e.to_string())?;
        let err_m = (back - p).amax() / 100.0;
        worst_m = worst_m.max(err_m);
        check(err_m <= 1e-9, || format!("pose {i}: round trip off by {err_m} m"))?;

        let q = random_unit_quat(&mut rng);
        let qn = ue_to_ned_quat(&q).map_err(|e| e.to_string())?;
        check(qn.norm() == q.norm(), || format!("pose {i}: norm {} vs {}", qn.norm(), q.norm()))?;
        check((qn.w, qn.x, qn.y, qn.z) == (q.w, q.x, q.y, -q.z), || format!("pose {i}: {qn:?}"))?;
        let qb = ned_to_ue_quat(&qn).map_err(|e| e.to_string())?;
        check(qb == q, || format!("pose {i}: quaternion round trip {qb:?} vs {q:?}"))?;
    }

    let zero = Vec3::zeros();
    let fwd = ue_to_ned_position(&vec3(250.0, -200.0, 500.0), &zero).map_err(|e| e.to_string())?;
    check(fwd == vec3(2.5, -2.0, -5.0), || format!("forward example gave {fwd:?}"))?;
    let inv = ned_to_ue_position(&vec3(1.0, 2.0, 3.0), &zero).map_err(|e| e.to_string())?;
    check(inv == vec3(100.0, 200.0, -300.0), || format!("inverse example gave {inv:?}"))?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let yaw = ue_to_ned_quat(&Quat::new(h, 0.0, 0.0, h)).map_err(|e| e.to_string())?;
    check(yaw == Quat::new(h, 0.0, 0.0, -h), || format!("yaw example gave {yaw:?}"))?;

    // Drone spawned at the world origin: its frame is the shared one.
    let o = vec3(1234.0, -567.0, 89.0);
    let d = compute_origin_offset(&PoseUe::at(o), &PoseNed::origin(), &o).map_err(|e| e.to_string())?;
    check(d == OriginOffset::zero(), || format!("origin spawn gave d = {d:?}"))?;
    let q = vec3(10.0, 5.0, -2.0);
    check(co_register(&q, &d) == q, || "d = 0 is not the identity".into())?;
    Ok(format!("10000 poses, worst round trip {worst_m:.1e} m"))
}

fn tick_reconciliation() -> Outcome {
    let cfg = WorldConfig::default();
    check(cfg.dt_render == 0.05 && cfg.physics.dt_phys == 0.001, || {
        format!("dt_render {} dt_phys {}", cfg.dt_render, cfg.physics.dt_phys)
    })?;
    let mut w = WorldState::create(cfg).map_err(|e| e.to_string())?;
    w.spawn_actor(ActorKind::Drone, PoseUe::at(Vec3::zeros()), Default::default())
        .map_err(|e| e.to_string())?;
    let mut prev = w.aerial_substeps();
    for k in 1..=1000u64 {
        w.advance_tick(vec![]);
        let n = w.aerial_substeps();
        check(n - prev == 50, || format!("tick {k}: {} substeps", n - prev))?;
        prev = n;
    }
    check(prev == 50_000, || format!("{prev} substeps in total"))?;
    Ok("50 substeps on each of 1000 ticks".into())
}

/// Every file under the tick directories, by relative path.
fn tick_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(root).into_iter().flatten().flatten() {
        let name = e.file_name().to_string_lossy().into_owned();
        if !name.starts_with("tick_") {
            continue;
        }
        for f in fs::read_dir(e.path()).into_iter().flatten().flatten() {
            let rel = format!("{name}/{}", f.file_name().to_string_lossy());
            out.insert(rel, fs::read(f.path()).unwrap_or_default());
        }
    }
    out
}

fn alignment() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for run in 0..2 {
        let dir = tmp.path().join(format!("run{run}"));
        let s = servers(7, true);
        let mut sess = session(&s)?;
        let cfg = DatasetConfig {
            ticks: 1000,
            resolution: (64, 64),
            ..DatasetConfig::new(&dir)
        };
        let m = collect_dataset(&mut sess, &cfg).map_err(|e| e.to_string())?;
        check(m.sensors.len() == 12, || format!("{} streams", m.sensors.len()))?;
        check(m.records == 1000, || format!("{} records", m.records))?;
        check(m.max_alignment_deviation == 0, || {
            format!("alignment deviation {} ticks", m.max_alignment_deviation)
        })?;
        check(m.aligned() && m.rpc_errors == 0, || format!("run {run}: {:?}", m.errors))?;
        drop(sess);
        s.shutdown();
        runs.push(tick_files(&dir));
    }
    check(runs[0].len() == 1000 * 13, || format!("{} files on disk", runs[0].len()))?;
    check(runs[0] == runs[1], || "reruns differ".into())?;
    Ok("1000 records x 12 streams, deviation 0, rerun byte-identical".into())
}

fn landing() -> Outcome {
    let s = servers(1, true);
    let mut sess = session(&s)?;
    let cfg = LandingConfig::default();
    check(cfg.vehicle_speed_cms == 500.0, || format!("vehicle speed {} cm/s", cfg.vehicle_speed_cms))?;
    let r = run_landing(&mut sess, &cfg).map_err(|e| e.to_string())?;
    drop(sess);
    s.shutdown();
    check((r.initial_horizontal_error_m - 6.0).abs() < 0.5, || {
        format!("initial offset {} m", r.initial_horizontal_error_m)
    })?;
    check(r.landed && r.final_horizontal_error_m < 0.5, || {
        format!("final error {} m, landed {}", r.final_horizontal_error_m, r.landed)
    })?;
    check(r.monotone, || format!("error rebounds by {} m", r.max_error_rebound_m))?;
    Ok(format!(
        "final error {:.3} m, touchdown at {:.2} s",
        r.final_horizontal_error_m,
        r.touchdown_s.unwrap_or(f64::NAN)
    ))
}

fn weather() -> Outcome {
    let s = servers(4, true);
    let mut sess = session(&s)?;
    let r = cross_view_check(&mut sess, &CrossViewConfig::default()).map_err(|e| e.to_string())?;
    drop(sess);
    s.shutdown();
    check(r.weather.len() == 14 && r.weather_passed() == 14, || {
        format!("{}/{} presets", r.weather_passed(), r.weather.len())
    })?;
    check(r.pairs == 500 && r.max_epsilon == 0 && r.misaligned_pairs == 0, || {
        format!("{} pairs, max epsilon {}", r.pairs, r.max_epsilon)
    })?;
    check(r.offset_d == [0.0; 3], || format!("offset {:?}", r.offset_d))?;
    check(r.passed(), || format!("{:?}", r.failures))?;
    Ok(format!(
        "14/14 presets, 500 pairs with epsilon 0, {} roof projections",
        r.projection_checks
    ))
}

/// A known line plus noise that is centered, orthogonal to the cycle index
/// and scaled to the target R².
fn synthetic_leak(n: usize, slope: f64, r2: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let mx = x.iter().sum::<f64>() / n as f64;
    let mut e: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let me = e.iter().sum::<f64>() / n as f64;
    e.iter_mut().for_each(|v| *v -= me);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxe: f64 = x.iter().zip(&e).map(|(a, v)| (a - mx) * v).sum();
    for (v, a) in e.iter_mut().zip(&x) {
        *v -= sxe / sxx * (a - mx);
    }
    let want_res = slope * slope * sxx * (1.0 - r2) / r2;
    let k = (want_res / e.iter().map(|v| v * v).sum::<f64>()).sqrt();
    x.iter().zip(&e).map(|(a, v)| 2048.0 + slope * a + k * v).collect()
}

fn stability() -> Outcome {
    let s = servers(3, false);
    let cfg = StabilityConfig {
        resolution: Some((64, 64)),
        ..Default::default()
    };
    let r = stability_run(s.ground_addr(), s.aerial_addr(), &cfg, &mut ProcessRss::current())
        .map_err(|e| e.to_string())?;
    s.shutdown();
    check(r.cycles.len() == 357, || format!("{} cycles", r.cycles.len()))?;
    check(r.errors == 0 && r.crashes == 0, || {
        format!("{} errors, {} crashes: {:?}", r.errors, r.crashes, r.error_log)
    })?;
    check(r.registry_failures == 0, || format!("{} cycles left residue", r.registry_failures))?;
    let slope = r.regression.as_ref().map_or(f64::NAN, |g| g.slope);
    check(slope < 1.0, || format!("leak slope {slope} MiB/cycle"))?;
    check(r.verdict == Verdict::Pass, || "verdict FAIL".into())?;

    for seed in 0..10 {
        let g = leak_regression(&synthetic_leak(357, 0.49, 0.11, seed)).map_err(|e| e.to_string())?;
        check((g.slope - 0.49).abs() <= 0.05 * 0.49 && (g.r_squared - 0.11).abs() <= 0.05 * 0.11, || {
            format!("synthetic series {seed}: slope {} R2 {}", g.slope, g.r_squared)
        })?;
    }
    Ok(format!("357 cycles clean, slope {slope:.4} MiB/cycle, synthetic leak recovered"))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn brute_harmonic(xs: &[f64]) -> f64 {
    xs.len() as f64 / xs.iter().map(|x| 1.0 / x).sum::<f64>()
}

/// k-th smallest element (0-based) by rank counting.
fn order_stat(xs: &[f64], k: usize) -> f64 {
    for &v in xs {
        let below = xs.iter().filter(|&&y| y < v).count();
        let at_or_below = xs.iter().filter(|&&y| y <= v).count();
        if below <= k && k < at_or_below {
            return v;
        }
    }
    unreachable!("every rank has an element")
}

fn brute_quantile(xs: &[f64], q: f64) -> f64 {
    let pos = q * (xs.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let (a, b) = (order_stat(xs, lo), order_stat(xs, hi));
    a + (b - a) * (pos - lo as f64)
}

/// Slope from raw sums, R² from residuals of the fitted line.
fn brute_ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let my = sy / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        ss_res += (b - (intercept + slope * a)).powi(2);
        ss_tot += (b - my).powi(2);
    }
    (slope, 1.0 - ss_res / ss_tot)
}

fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..1000 {
        let n = rng.gen_range(3..200);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..120.0)).collect();
        let h = harmonic_mean(&xs).map_err(|e| e.to_string())?.harmonic_mean;
        check(rel_close(h, brute_harmonic(&xs), 1e-9), || format!("series {i}: harmonic {h}"))?;
        let m = median(&xs).map_err(|e| e.to_string())?;
        check(rel_close(m, brute_quantile(&xs, 0.5), 1e-9), || format!("series {i}: median {m}"))?;
        let q = iqr(&xs).map_err(|e| e.to_string())?;
        let bq = brute_quantile(&xs, 0.75) - brute_quantile(&xs, 0.25);
        check(rel_close(q, bq, 1e-9), || format!("series {i}: iqr {q} vs {bq}"))?;

        let slope = rng.gen_range(-2.0..2.0);
        let x: Vec<f64> = (1..=n).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|a| 50.0 + slope * a + rng.gen_range(-20.0..20.0)).collect();
        let g = ols(&x, &y).map_err(|e| e.to_string())?;
        let (bs, br2) = brute_ols(&x, &y);
        check(rel_close(g.slope, bs, 1e-9), || format!("series {i}: slope {} vs {bs}", g.slope))?;
        check(rel_close(g.r_squared, br2, 1e-9), || format!("series {i}: R2 {} vs {br2}", g.r_squared))?;
    }
    let h = harmonic_mean(&[20.0, 20.0, 10.0]).map_err(|e| e.to_string())?.harmonic_mean;
    check(h == 15.0, || format!("[20, 20, 10] gave {h}"))?;
    Ok("1000 series match reference, [20, 20, 10] -> 15".into())
}

fn bridge() -> Outcome {
    let cfg = BridgeConfig {
        relay_args: vec!["relay".into()],
        ..BridgeConfig::new(PathBuf::from(env!("CARGO_BIN_EXE_airground")))
    };
    let r = bridge_compare(&cfg).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = r.points.iter().map(|p| p.sensors).collect();
    check(counts == [1, 4, 8, 12, 16], || format!("counts {counts:?}"))?;
    check(r.cross_strictly_increasing(), || format!("{:?}", r.points))?;
    let (first, last) = (r.points[0], r.points[4]);
    check(last.cross_process_ms >= 3.0 * last.in_process_ms, || format!("{last:?}"))?;
    check(last.in_process_ms <= 3.0 * first.in_process_ms, || format!("{first:?} {last:?}"))?;
    Ok(format!(
        "at 16: cross {:.3} ms vs in-process {:.4} ms; in-process at 1: {:.4} ms",
        last.cross_process_ms, last.in_process_ms, first.in_process_ms
    ))
}

fn latency() -> Outcome {
    let server = DelayServer::start(Duration::from_micros(100)).map_err(|e| e.to_string())?;
    let mut c = Client::connect(server.addr()).map_err(|e| e.to_string())?;
    let cfg = LatencyConfig::default();
    check(cfg.warmup == 500 && cfg.calls == 5000, || format!("{cfg:?}"))?;
    let r = latency_probe(&mut c, "ping", &json!({}), &cfg);
    check(r.samples_us.len() == 5000 && r.failures == 0, || {
        format!("{} samples, {} failures", r.samples_us.len(), r.failures)
    })?;
    let m = r.summary.map_or(f64::NAN, |s| s.median);
    check((m - 100.0).abs() <= 50.0, || format!("median {m} us"))?;
    drop(c);
    drop(server);

    let s = servers(9, false);
    let mut sess = session(&s)?;
    for call in [LatencyCall::SpawnActor, LatencyCall::DestroyActor] {
        let r = latency_bench(&mut sess, call, &cfg).map_err(|e| e.to_string())?;
        check(r.samples_us.len() == 5000, || format!("{call}: {:?}", r.failure_log))?;
        check(r.actors_before.is_some() && r.actors_after == r.actors_before, || {
            format!("{call}: actors {:?} -> {:?}", r.actors_before, r.actors_after)
        })?;
    }
    drop(sess);
    s.shutdown();
    Ok(format!("delay endpoint median {m:.1} us over 5000 samples, spawn counts unchanged"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("coordinate transforms", Duration::from_secs(1), coordinates),
        ("tick reconciliation", Duration::from_secs(10), tick_reconciliation),
        ("alignment", Duration::from_secs(300), alignment),
        ("landing", Duration::from_secs(60), landing),
        ("weather sweep", Duration::from_secs(180), weather),
        ("stability", Duration::from_secs(600), stability),
        ("statistics oracles", Duration::MAX, statistics),
        ("bridge contrast", Duration::from_secs(120), bridge),
        ("latency harness", Duration::MAX, latency),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let t0 = Instant::now();
        let outcome = f();
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > budget => Err(format!("{msg}; took {took:.1?}, budget {budget:.0?}")),
            o => o,
        };
        match outcome {
            Ok(msg) => println!("PASS  {name}: {msg} ({:.2} s)", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} ({:.2} s)", took.as_secs_f64());
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
