use std::path::Path;
use std::process::{Command, Output};

use bsa_core::ActuatorParams;

fn bsa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

const FAST: &str = "[collocation]\nsegments_per_phase = 15\nstarts = 2\n";

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsa(dir.path(), &["simulate", "--out", "run", "--dt", "1e-3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["trajectory.csv", "trajectory_events.csv", "manifest.toml"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let rows = csv_rows(&dir.path().join("run/trajectory.csv"));
    // BRK 0.7 s then SEA 0.3 s at 1 ms
    assert!((rows.len() as i64 - 1001).abs() <= 2, "{}", rows.len());
    let events = csv_rows(&dir.path().join("run/trajectory_events.csv"));
    assert_eq!(events.len(), 1);
    assert_eq!(&events[0][1], "BRK");
    assert_eq!(&events[0][2], "SEA");
}

#[test]
fn malformed_parameters_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let good = ActuatorParams::default().to_toml_string();
    write(dir.path(), "typo.toml", &good.replace("stiffness = 15.0", "stiffness = \"fifteen\""));
    let o = bsa(dir.path(), &["simulate", "--params", "typo.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stiffness"), "{}", stderr(&o));

    write(dir.path(), "neg.toml", &good.replace("j_q = 0.52", "j_q = -0.52"));
    let o = bsa(dir.path(), &["simulate", "--params", "neg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("j_q"), "{}", stderr(&o));

    let o = bsa(dir.path(), &["simulate", "--params", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn nonpositive_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for dt in ["0", "-1e-4"] {
        let o = bsa(dir.path(), &["simulate", &format!("--dt={dt}")]);
        assert_eq!(o.status.code(), Some(2), "dt {dt}");
        assert!(stderr(&o).contains("dt"));
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[fidelity]\nstep = 1e-3\n");
    let o = bsa(dir.path(), &["simulate", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step"));
}

#[test]
fn infeasible_optimization_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        &format!("{FAST}[optimize]\nfinal_time = 0.3\n[[optimize.terminal]]\ncomponent = \"q_dot\"\nlo = 10.0\n"),
    );
    let o = bsa(dir.path(), &["optimize", "--config", "c.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    // the manifest still records what happened
    let m = std::fs::read_to_string(dir.path().join("o/manifest.toml")).unwrap();
    assert!(m.contains("status"));
}

#[test]
fn optimize_reports_plan_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", FAST);
    let o = bsa(dir.path(), &["optimize", "--config", "c.toml", "--modes", "BRK,SEA", "--tf", "0.5", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: toml::Table = toml::from_str(&std::fs::read_to_string(dir.path().join("o/manifest.toml")).unwrap()).unwrap();
    let r = m["results"].as_table().unwrap();
    let d: Vec<f64> = r["durations"].as_array().unwrap().iter().map(|v| v.as_float().unwrap()).collect();
    assert_eq!(d.len(), 2);
    assert!((d.iter().sum::<f64>() - 0.5).abs() < 1e-9);
    let speed = r["final_speed"].as_float().unwrap();
    let replay = r["replay_final_speed"].as_float().unwrap();
    assert!(speed > 0.0);
    assert!((speed - replay).abs() < 0.05 * speed, "{speed} vs {replay}");
}

#[test]
fn manifest_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", FAST);
    let args = |out: &'static str| ["optimize", "--config", "c.toml", "--tf", "0.4", "--seed", "7", "--out", out];
    assert!(bsa(dir.path(), &args("a")).status.success());
    assert!(bsa(dir.path(), &args("b")).status.success());
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/manifest.toml"), read("b/manifest.toml"));
    assert_eq!(read("a/solution.csv"), read("b/solution.csv"));

    assert!(bsa(dir.path(), &["optimize", "--config", "c.toml", "--tf", "0.4", "--seed", "8", "--out", "c"])
        .status
        .success());
    let hash = |p: &str| {
        let m: toml::Table = toml::from_str(&String::from_utf8(read(p)).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_ne!(hash("a/manifest.toml"), hash("c/manifest.toml"));
}

#[test]
fn final_time_sweep_has_a_row_per_point_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", &format!("{FAST}[sweep]\nfinal_times = [0.3, 0.5, 0.8]\nfit_degree = 2\n"));
    let o = bsa(dir.path(), &["sweep-tf", "--config", "c.toml", "--repetitions", "2", "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("s/summary.csv"));
    assert_eq!(rows.len(), 3 * 2);
    assert_eq!(csv_rows(&dir.path().join("s/runs.csv")).len(), 3 * 2 * 2);
    assert!(dir.path().join("s/points/BSA_02.csv").exists());
    assert!(dir.path().join("s/points/SEA_00.csv").exists());
}

#[test]
fn initial_angle_sweep_covers_the_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", FAST);
    let o = bsa(dir.path(), &["sweep-q0", "--config", "c.toml", "--repetitions", "1", "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("s/summary.csv"));
    assert_eq!(rows.len(), 5 * 2);
    let first: f64 = rows[0][0].parse().unwrap();
    assert!((first - 10f64.to_radians()).abs() < 1e-12);
}

#[test]
fn identify_recovers_the_spring() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[identify]\nset_points = [2.0]\ncycles = 4\n[fidelity]\ndt = 2e-4\n");
    let o = bsa(dir.path(), &["identify", "--config", "c.toml", "--out", "i"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = ActuatorParams::default();
    let report: toml::Table = toml::from_str(&std::fs::read_to_string(dir.path().join("i/report.toml")).unwrap()).unwrap();
    let fit = report["fits"].as_array().unwrap()[0].as_table().unwrap();
    let close = |key: &str, want: f64| {
        let got = fit[key].as_float().unwrap();
        assert!((got - want).abs() <= 0.05 * want.abs(), "{key}: {got} vs {want}");
    };
    close("stiffness", p.stiffness);
    close("alpha", p.alpha);
    close("beta", p.beta);
    close("gamma", p.gamma);
    // DEC to BRK closes both bits; the slower one sets the response
    let delay = report["delay"]["delay"].as_float().unwrap();
    assert!((delay - p.delay_brake.max(p.delay_clutch)).abs() <= 2e-4 + 1e-12, "{delay}");
    assert!(dir.path().join("i/cycles_2.csv").exists());
}

#[test]
fn identify_reads_logged_cycles() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.toml", "[identify]\nset_points = [3.0]\ncycles = 4\n");
    assert!(bsa(dir.path(), &["identify", "--config", "a.toml", "--out", "gen"]).status.success());
    write(
        dir.path(),
        "b.toml",
        "[identify]\ndata = [\"gen/cycles_3.csv\"]\ndelay_log = \"gen/delay_log.csv\"\n",
    );
    let o = bsa(dir.path(), &["identify", "--config", "b.toml", "--out", "fit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read_to_string(dir.path().join("gen/report.toml")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("fit/report.toml")).unwrap();
    let k = |s: &str| {
        let t: toml::Table = toml::from_str(s).unwrap();
        t["fits"].as_array().unwrap()[0]["stiffness"].as_float().unwrap()
    };
    // CSV text round trip loses at most the last digit
    assert!((k(&a) - k(&b)).abs() < 1e-6);
}

#[test]
fn energy_writes_one_trace_per_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", &format!("{FAST}[energy]\nfinal_times = [0.4]\n"));
    let o = bsa(dir.path(), &["energy", "--config", "c.toml", "--out", "e"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for plan in ["BSA", "SEA"] {
        let rows = csv_rows(&dir.path().join(format!("e/energy_{plan}_tf0.4.csv")));
        assert!(rows.len() > 100);
    }
}
