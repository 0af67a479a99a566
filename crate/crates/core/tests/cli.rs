use std::path::Path;
use std::process::{Command, Output};

fn vbcap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vbcap"))
        .args(args)
        .current_dir(dir)
        .env_remove("VBCAP_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn frontier_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = vbcap(&["frontier", "--c", "1", "--n", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "c,w_bar,w_under");
    let parsed: Vec<Vec<f64>> = rows[1..]
        .iter()
        .map(|r| r.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(parsed, vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.5, 0.5], vec![1.0, 1.0, 0.0]]);
}

#[test]
fn frontier_rejects_bad_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let o = vbcap(&["frontier", "--c", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error"));
}

#[test]
fn envelope_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = vbcap(&["envelope", "--load", "1,1,2", "--n", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sigma,x_upper,x_lower,x_nominal"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[3] && v[3] <= v[1], "{line}");
    }
}

#[test]
fn alloc_out_of_range_chi() {
    let dir = tempfile::tempdir().unwrap();
    let ok = vbcap(&["alloc", "--load", "1,1,2", "--chi", "0"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let bad = vbcap(&["alloc", "--load", "1,1,2", "--chi", "0.3"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("0.3"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = vbcap(&["verify", "--load", "1,1,2", "--normalized", "1,1,1"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("violates_necessary"));
    let good = vbcap(&["verify", "--load", "1,1,2", "--normalized", "0.5,0.5,0.5"], dir.path());
    assert_eq!(good.status.code(), Some(0));
    assert!(stdout(&good).contains("not_excluded"));
    let oversized = vbcap(&["verify", "--load", "1,1,2", "--battery", "0.5,2,1"], dir.path());
    assert_eq!(oversized.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vbcap(&["bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn simulate_writes_manifest_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.cfg"),
        "[load]\nenergy = 1\nwindow = 1\nmax_power = 2\n[sim]\ninitial_profile = charge_equalized(0)\n\
         [battery]\nnormalized = 1, 1, 0\n[run]\ntrajectory = probe:charge_full\n",
    )
    .unwrap();
    let first = vbcap(&["simulate", "--config", "run.cfg", "--out-dir", "a", "--quiet"], d);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let manifest = d.join("a/manifest.txt");
    assert!(manifest.exists());
    let replay = vbcap(&["simulate", "--config", manifest.to_str().unwrap(), "--out-dir", "b", "--quiet"], d);
    assert_eq!(replay.status.code(), Some(0), "{}", stderr(&replay));
    for entry in std::fs::read_dir(d.join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "manifest.txt" {
            continue;
        }
        assert_eq!(
            std::fs::read(d.join("a").join(&name)).unwrap(),
            std::fs::read(d.join("b").join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn simulate_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.cfg"),
        "[load]\nenergy = 1\nwindow = 1\nmax_power = 2\n[battery]\nnormalized = 1, 1, 1\n\
         [run]\ntrajectory = probe:charge_then_discharge\n",
    )
    .unwrap();
    let o = vbcap(&["simulate", "--config", "run.cfg", "--out-dir", "out", "--quiet"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(d.join("out/manifest.txt").exists());
}

#[test]
fn malformed_config_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "[load]\nenergy = 1\nwindow = 1\nmax_power = 2\n[sim]\nlamda = 5\n").unwrap();
    let o = vbcap(&["simulate", "--config", "run.cfg", "--trajectory", "suite", "--out-dir", "out"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"));
    assert!(!d.join("out").exists());
}

#[test]
fn probe_is_a_member() {
    let dir = tempfile::tempdir().unwrap();
    let o = vbcap(&["probe", "--battery", "0.5,1,1", "--random-walk", "0.1", "--project", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let traj = vbcap::signals::Trajectory::from_csv(&stdout(&o)).unwrap();
    let spec = vbcap::BatterySpec::new(0.5, 1.0, 1.0).unwrap();
    assert!(vbcap::signals::membership_check(&traj, &spec).is_member());
}
