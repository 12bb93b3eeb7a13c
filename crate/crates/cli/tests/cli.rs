use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

const SMALL: &str = r#"
name = "small"
seed = 2

[environment]
seed = 2
grid_dims = [12, 12]
cell_size = 1.0
fill_prob = 0.0
pillar_height_range = [10.0, 10.0]
bounds = { min = [0.0, 0.0, -10.0], max = [12.0, 12.0, 0.0] }

[[robots]]
name = "solo"
start = [3.0, 3.0, -5.0, 0.0]
"#;

#[test]
fn headless_run_reports_summary() {
    let path = scenarios().join("two_robots.toml");
    let out = sim(&["run", path.to_str().unwrap(), "--headless", "--duration", "2", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["metrics"]["ticks"], 100);
    assert_eq!(v["sim_time"], 2.0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL.replace("seed = 2\n\n[environment]", "seed = 2\nwarp = 9\n\n[environment]")).unwrap();
    for args in [
        vec!["run", "/nonexistent.toml", "--headless"],
        vec!["run", bad.to_str().unwrap(), "--headless"],
        vec!["run", bad.to_str().unwrap(), "--transport", "carrier-pigeon"],
    ] {
        assert_eq!(sim(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn port_conflict_is_runtime_fault() {
    let holder = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("udp.toml");
    let text = SMALL.replace("seed = 2\n\n", &format!("seed = 2\ntransport = \"udp\"\nport_base = {port}\n\n"));
    std::fs::write(&p, text).unwrap();
    let out = sim(&["run", p.to_str().unwrap(), "--headless", "--duration", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dump_grid_prints_the_world() {
    let path = scenarios().join("two_robots.toml");
    let out = sim(&["dump-grid", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 24);
    assert_eq!(text, String::from_utf8(sim(&["dump-grid", path.to_str().unwrap()]).stdout).unwrap());
}

#[test]
fn bench_writes_csv_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("b.toml");
    std::fs::write(
        &file,
        r#"
name = "tiny"
max_iterations = 20000

[environment]
seed = 1
grid_dims = [12, 12]
cell_size = 1.0
fill_prob = 0.0
pillar_height_range = [10.0, 10.0]
bounds = { min = [0.0, 0.0, -10.0], max = [12.0, 12.0, 0.0] }

[[robots]]
name = "solo"
start = [3.0, 3.0, -5.0, 0.0]
goal = [5.0, 3.0, -5.0, 0.0]
"#,
    )
    .unwrap();
    let out_csv = dir.path().join("report.csv");
    let f = file.to_str().unwrap();
    let out = bench(&["run", f, "--planners", "rrtc,prm", "--seeds", "0..1", "--out", out_csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(dir.path().join("report.summary.csv").exists());

    let out_json = dir.path().join("report.json");
    let out = bench(&["run", f, "--planners", "prm", "--seeds", "3", "--out", out_json.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 1);

    for args in [
        vec!["run", f, "--seeds", "9..2", "--planners", "prm", "--out", out_csv.to_str().unwrap()],
        vec!["run", f, "--seeds", "0", "--planners", "astar", "--out", out_csv.to_str().unwrap()],
        vec!["run", f, "--seeds", "0", "--planners", "prm", "--out", "report.txt"],
        vec!["run", "/nonexistent.toml", "--planners", "prm", "--out", out_csv.to_str().unwrap()],
    ] {
        assert_eq!(bench(&args).status.code(), Some(2), "{args:?}");
    }
}
