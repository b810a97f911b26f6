use std::path::Path;
use std::process::{Command, Output};

use darcy_jko::grids::io::{format_field, read_field};
use darcy_jko::grids::{FieldRole, Grid, ScalarField};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darcy-jko")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn bump(n: usize) -> String {
    let g = Grid::line(n, 1.0).unwrap();
    let f = ScalarField::from_fn(g, FieldRole::Density, |x| 0.2 + (1.0 - 50.0 * (x[0] - 0.4).powi(2)).max(0.0)).unwrap();
    format_field(&f)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn step_keeps_a_stationary_barrier() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::line(32, 1.0).unwrap();
    let w = ScalarField::from_fn(g, FieldRole::Pressure, |x| 1.0 + 0.5 * (5.0 * x[0]).sin()).unwrap();
    write(dir.path(), "weight.csv", &format_field(&w));
    let cfg = write(
        dir.path(),
        "run.cfg",
        "domain.n = 32\nenergy.kind = entropy\nenergy.weight_field = weight.csv\ncost.tau = 0.01\nbarrier.lambda = 0.8\n",
    );
    let bdir = dir.path().join("barrier");
    let o = run(&["barrier", "--config", &cfg, "--out", s(&bdir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sdir = dir.path().join("step");
    let input = bdir.join("barrier.csv");
    let o = run(&["step", "--config", &cfg, "--in", s(&input), "--out", s(&sdir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let before = read_field(&input, FieldRole::Density).unwrap();
    let after = read_field(&sdir.join("rho_star.csv"), FieldRole::Density).unwrap();
    assert!(before.l1_distance(&after) <= 1e-6);
    let ledger = std::fs::read_to_string(sdir.join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 2);
}

#[test]
fn malformed_header_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "# dim=1 n=abc extent=1\n0.5\n");
    let out = dir.path().join("out");
    let o = run(&["step", "--in", &input, "--out", s(&out)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert!(!out.exists());
}

#[test]
fn missing_input_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.csv");
    let o = run(&["step", "--in", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 4);
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "cost.tau = 0.01\nsolver.gap_toll = 1e-8\n");
    let input = write(dir.path(), "rho.csv", &bump(16));
    let o = run(&["step", "--config", &cfg, "--in", &input, "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("gap_toll"), "{err}");
}

#[test]
fn zero_time_flow_keeps_only_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "cost.tau = 0.01\nflow.T = 0\n");
    let text = bump(16);
    let input = write(dir.path(), "rho.csv", &text);
    let out = dir.path().join("flow");
    let o = run(&["flow", "--config", &cfg, "--in", &input, "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let snaps: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.starts_with("snap_"))
        .collect();
    assert_eq!(snaps, vec!["snap_0.csv".to_string()]);
    let again = read_field(&out.join("snap_0.csv"), FieldRole::Density).unwrap();
    let orig = read_field(Path::new(&input), FieldRole::Density).unwrap();
    assert_eq!(again.values(), orig.values());
}

#[test]
fn flow_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "cost.tau = 0.002\nflow.T = 0.01\nflow.snapshot_every = 2\n");
    let input = write(dir.path(), "rho.csv", &bump(32));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["--threads", "2", "flow", "--config", &cfg, "--in", &input, "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["ledger.csv", "snap_0.csv", "snap_2.csv", "snap_5.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn uncertified_step_aborts_with_partial_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "cost.tau = 0.01\nflow.T = 0.05\nsolver.max_iters = 1\nsolver.gap_tol = 1e-300\n");
    let input = write(dir.path(), "rho.csv", &bump(32));
    let out = dir.path().join("flow");
    let o = run(&["flow", "--config", &cfg, "--in", &input, "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    let ledger = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 3, "header, initial row and the failed step");
}

#[test]
fn contraction_suite_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "domain.n = 32\ncost.tau = 0.001\nverify.trials = 4\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["--seed", "11", "--threads", threads, "verify", "--suite", "contraction", "--config", &cfg, "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    }
    let x = std::fs::read(a.join("contraction.csv")).unwrap();
    assert_eq!(x, std::fs::read(b.join("contraction.csv")).unwrap());
    assert_eq!(String::from_utf8(x).unwrap().lines().count(), 5);
}

#[test]
fn barenblatt_suite_reports_three_levels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "energy.kind = power\nenergy.m = 2\nverify.levels = 64:4e-3, 96:2.5e-3, 128:2e-3\n");
    let out = dir.path().join("b");
    let o = run(&["verify", "--suite", "barenblatt", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(out.join("barenblatt.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = run(&["verify", "--suite", "nonsense"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn ctransform_modes() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(1, &[3], &[-0.25], &[1.5]).unwrap();
    let p = ScalarField::new(g, vec![0.0, 1.0, 0.0], FieldRole::Pressure).unwrap();
    let input = write(dir.path(), "p.csv", &format_field(&p));
    let out = dir.path().join("pc.csv");
    let o = run(&["ctransform", "c", "--tau", "0.5", "--in", &input, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_field(&out, FieldRole::Pressure).unwrap().values(), &[0.0, 0.25, 0.0]);

    let g = Grid::line(24, 1.0).unwrap();
    let p = ScalarField::from_fn(g, FieldRole::Pressure, |x| (9.0 * x[0]).sin()).unwrap();
    let input = write(dir.path(), "wave.csv", &format_field(&p));
    let once = dir.path().join("once.csv");
    let twice = dir.path().join("twice.csv");
    assert_eq!(code(&run(&["ctransform", "concavify", "--tau", "0.01", "--in", &input, "--out", s(&once)])), 0);
    assert_eq!(code(&run(&["ctransform", "concavify", "--tau", "0.01", "--in", s(&once), "--out", s(&twice)])), 0);
    let a = read_field(&once, FieldRole::Pressure).unwrap();
    let b = read_field(&twice, FieldRole::Pressure).unwrap();
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= 1e-12));

    let zero = write(dir.path(), "zero.csv", &format_field(&ScalarField::new(g, vec![0.0; 24], FieldRole::Pressure).unwrap()));
    let zout = dir.path().join("zc.csv");
    for mode in ["c", "cbar", "concavify"] {
        assert_eq!(code(&run(&["ctransform", mode, "--tau", "0.01", "--in", &zero, "--out", s(&zout)])), 0);
        assert!(read_field(&zout, FieldRole::Pressure).unwrap().values().iter().all(|&v| v == 0.0));
    }
}
