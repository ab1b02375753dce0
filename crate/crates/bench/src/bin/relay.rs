//! Relay end of the bridge benchmark: `airground-relay <host:port>`.

fn main() {
    let Some(addr) = std::env::args().nth(1) else {
        eprintln!("usage: airground-relay <host:port>");
        std::process::exit(2);
    };
    if let Err(e) = airground_bench::bridge::relay_main(&addr) {
        eprintln!("relay: {e}");
        std::process::exit(1);
    }
}
