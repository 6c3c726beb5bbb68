//! End-to-end tests of the `conic-nav` binary.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_conic-nav");

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn load(name: &str) -> Value {
    let text = std::fs::read_to_string(scenarios_dir().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn write(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env("RUST_LOG", "error").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn reference_path() -> String {
    scenarios_dir().join("reference.json").to_string_lossy().into_owned()
}

/// Reads a CSV by header name.
fn read_columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["validate", "--scenario", &reference_path()], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("validation: PASS"));

    let mut overlap = load("reference.json");
    overlap["constraints"][3]["axis"] = json!([1.0, 0.1, 0.0]);
    let p = write(&dir, "overlap.json", &overlap);
    let o = run(&["validate", "--scenario", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("item 2: cones 1 and 3"), "{out}");

    let p = dir.path().join("broken.json");
    std::fs::write(&p, "{ \"dimension\": 2, ").unwrap();
    assert_eq!(code(&run(&["validate", "--scenario", p.to_str().unwrap()], dir.path())), 2);
    assert_eq!(code(&run(&["validate", "--scenario", "/nonexistent.json"], dir.path())), 2);
    assert_eq!(code(&run(&["validate"], dir.path())), 2);

    let mut wide = load("reference.json");
    wide["constraints"][1]["angle_rad"] = json!(2.0);
    let p = write(&dir, "wide.json", &wide);
    assert_eq!(code(&run(&["validate", "--scenario", p.to_str().unwrap()], dir.path())), 1);
}

fn parse_world(out: &str) -> (f64, Vec<(Vec<f64>, f64)>) {
    let mut radius = f64::NAN;
    let mut obstacles = Vec::new();
    for line in out.lines() {
        if let Some(v) = line.strip_prefix("workspace radius: ") {
            radius = v.parse().unwrap();
        }
        if line.starts_with("obstacle ") {
            let inner = &line[line.find('(').unwrap() + 1..line.find(')').unwrap()];
            let center = inner.split(", ").map(|c| c.parse().unwrap()).collect();
            let r = line.rsplit(' ').next().unwrap().parse().unwrap();
            obstacles.push((center, r));
        }
    }
    (radius, obstacles)
}

#[test]
fn world_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let o = run(&["world", "--scenario", &reference_path()], dir.path());
    assert_eq!(code(&o), 0);
    let (radius, obstacles) = parse_world(&stdout(&o));
    assert!((radius - 1.0 / (PI / 14.0).tan()).abs() < 1e-6);
    assert_eq!(obstacles.len(), 4);
    // a₁ = e₁ is orthogonal to a₀ = e₃: c = e₁/cos θ, r = tan θ.
    let theta = PI / 8.0;
    assert!((obstacles[0].0[0] - 1.0 / theta.cos()).abs() < 1e-6);
    assert!(obstacles[0].0[1].abs() < 1e-6);
    assert!((obstacles[0].1 - theta.tan()).abs() < 1e-6);
    assert!(stdout(&o).contains("center (1.082392, 0.000000) radius 0.414214"));

    let single = scenarios_dir().join("single_cone.json");
    let o = run(&["world", "--scenario", single.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("obstacles: 0"));
}

#[test]
fn world_is_rotation_invariant() {
    let dir = TempDir::new().unwrap();
    let base = load("reference.json");
    // Cyclic permutation (x, y, z) -> (z, x, y) takes a₀ = e₃ to e₁.
    let permute = |v: &Value| {
        let a: Vec<f64> = serde_json::from_value(v.clone()).unwrap();
        json!([a[2], a[0], a[1]])
    };
    let mut rotated = base.clone();
    for c in rotated["constraints"].as_array_mut().unwrap() {
        c["axis"] = permute(&c["axis"]);
    }
    rotated["start"] = permute(&base["start"]);
    rotated["target"] = permute(&base["target"]);
    assert_eq!(rotated["constraints"][0]["axis"], json!([1.0, 0.0, 0.0]));
    let p = write(&dir, "rotated.json", &rotated);

    let a = parse_world(&stdout(&run(&["world", "--scenario", &reference_path()], dir.path())));
    let b = parse_world(&stdout(&run(&["world", "--scenario", p.to_str().unwrap()], dir.path())));
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.len(), b.1.len());
    for (oa, ob) in a.1.iter().zip(&b.1) {
        assert!((oa.1 - ob.1).abs() <= 1e-6);
        let na = oa.0.iter().map(|c| c * c).sum::<f64>().sqrt();
        let nb = ob.0.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((na - nb).abs() <= 2e-6);
    }
}

#[test]
fn simulate_reference_writes_safe_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("traj.csv");
    let o = run(&["simulate", "--scenario", &reference_path(), "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("converged: true"));
    let (header, rows) = read_columns(&out);
    assert_eq!(
        header.join(","),
        "t,x_0,x_1,x_2,xi_0,xi_1,u_0,u_1,u_2,phi,min_margin"
    );
    assert!(rows.len() > 10);
    for r in &rows {
        assert_eq!(r.len(), header.len());
        assert!(*r.last().unwrap() >= -1e-9);
        let norm = (r[1] * r[1] + r[2] * r[2] + r[3] * r[3]).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
    // 17 significant digits.
    let text = std::fs::read_to_string(&out).unwrap();
    let second = text.lines().nth(1).unwrap();
    let x0 = second.split(',').nth(1).unwrap();
    assert_eq!(x0.split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17);
}

#[test]
fn simulate_uses_file_output_and_json_format() {
    let dir = TempDir::new().unwrap();
    let mut s = load("single_cone.json");
    s["output"] = json!({"path": "out/traj.json", "format": "json"});
    let p = write(&dir, "s.json", &s);
    let o = run(&["simulate", "--scenario", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/traj.json")).unwrap()).unwrap();
    assert_eq!(v["summary"]["converged"], json!(true));
    assert!(v["samples"][0].get("phi").is_none());
}

#[test]
fn simulate_refuses_target_in_cone() {
    let dir = TempDir::new().unwrap();
    let mut s = load("reference.json");
    s["target"] = json!([1.0, 0.0, 0.0]);
    let p = write(&dir, "bad.json", &s);
    let o = run(&["simulate", "--scenario", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("item 4"));
}

#[test]
fn simulate_non_convergence_and_safety_codes() {
    let dir = TempDir::new().unwrap();
    let mut s = load("reference.json");
    s["integration"]["t_end"] = json!(0.5);
    let p = write(&dir, "short.json", &s);
    let out = dir.path().join("a.csv");
    assert_eq!(code(&run(&["simulate", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path())), 1);

    // A step far outside the stability region of RK4 throws the state into a cone.
    s["integration"]["t_end"] = json!(20.0);
    s["integration"]["dt"] = json!(2.0);
    let p = write(&dir, "coarse.json", &s);
    let o = run(&["simulate", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3, "{}", stdout(&o));
    assert!(stdout(&o).contains("safety violation"));
}

#[test]
fn single_cone_distance_decays_exponentially() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("single.csv");
    let path = scenarios_dir().join("single_cone.json");
    let o = run(&["simulate", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let (header, rows) = read_columns(&out);
    assert!(!header.contains(&"phi".to_string()));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (t, a, b) = (col("t"), col("xi_0"), col("xi_1"));
    // xd = (1, 2, -2)/3 projects to (0.2, 0.4).
    let dist = |r: &Vec<f64>| ((r[a] - 0.2).powi(2) + (r[b] - 0.4).powi(2)).sqrt();
    let d0 = dist(&rows[0]);
    for r in &rows {
        let expected = d0 * (-5.0 * r[t]).exp();
        assert!((dist(r) - expected).abs() <= 1e-6 * expected, "t = {}", r[t]);
    }
}

#[test]
fn selfcheck_codes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["selfcheck", "--samples", "500"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("selfcheck: PASS"));

    let o = run(&["selfcheck", "--samples", "200", "--perturb"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));

    let o = run(&["selfcheck", "--n-list", "1", "--samples", "500", "--seed", "7"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).lines().filter(|l| l.contains("n=1")).count() >= 7);

    let a = stdout(&run(&["selfcheck", "--samples", "100", "--seed", "3"], dir.path()));
    let b = stdout(&run(&["selfcheck", "--samples", "100", "--seed", "3"], dir.path()));
    assert_eq!(a, b);
}

#[test]
fn basin_single_start_matches_simulate() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("basin.json");
    let o = run(
        &["basin", "--scenario", &reference_path(), "--starts", "1", "--jobs", "1", "--out", report.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["starts"], json!(1));
    assert_eq!(v["converged"], json!(1));
    assert_eq!(v["violations"], json!(0));
}

#[test]
fn basin_single_cone_converges_everywhere() {
    let dir = TempDir::new().unwrap();
    let path = scenarios_dir().join("single_cone.json");
    let o = run(&["basin", "--scenario", path.to_str().unwrap(), "--grid-density", "60", "--jobs", "2"], dir.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("converged: 60 (1.0000)"), "{out}");
    assert!(out.contains("safety violations: 0"));
}
