use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn gokart(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gokart")).arg("--out-dir").arg(out).args(args).output().expect("binary runs")
}

fn fx(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Parses a headed CSV into (columns, rows of f64).
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn optimize_reduces_curvature_on_circle() {
    let out = tempfile::tempdir().unwrap();
    let o = gokart(out.path(), &["optimize-raceline", &fx("circle.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("optimize_report.json")).unwrap()).unwrap();
    let (c, opt) = (report["centerline_sum_k2"].as_f64().unwrap(), report["optimized_sum_k2"].as_f64().unwrap());
    assert!(opt < c, "{opt} >= {c}");
    assert!(report["est_lap_time_s"].as_f64().unwrap() > 0.0);
    let (h, rows) = read_table(&out.path().join("raceline.csv"));
    let (x, y) = (column(&h, "x_m"), column(&h, "y_m"));
    for r in &rows {
        // every raceline point stays inside the drivable annulus
        let radius = r[x].hypot(r[y]);
        assert!((18.5 - 1e-6..=21.5 + 1e-6).contains(&radius), "radius {radius}");
    }
}

#[test]
fn straight_raceline_is_the_centerline() {
    let out = tempfile::tempdir().unwrap();
    let o = gokart(out.path(), &["optimize-raceline", &fx("straight.csv"), "--set", "track.closed=false"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_table(&out.path().join("raceline.csv"));
    let y = column(&h, "y_m");
    assert!(rows.len() > 10);
    for r in &rows {
        assert!(r[y].abs() < 1e-3, "lateral {}", r[y]);
    }
}

#[test]
fn missing_column_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x_m,y_m,w_left_m\n0,0,1\n1,0,1\n2,0,1\n3,0,1\n").unwrap();
    let o = gokart(dir.path(), &["optimize-raceline", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("w_right_m"), "{}", stderr(&o));
}

#[test]
fn localize_noiseless_straight_log() {
    let out = tempfile::tempdir().unwrap();
    let o = gokart(out.path(), &["localize", &fx("replay_straight.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_table(&out.path().join("poses.csv"));
    let (t, x, y) = (column(&h, "t_s"), column(&h, "x_m"), column(&h, "y_m"));
    assert!(rows.len() > 100);
    for r in &rows {
        let (ex, ey) = (5.0 * r[t] * 0.3f64.cos(), 5.0 * r[t] * 0.3f64.sin());
        assert!((r[x] - ex).hypot(r[y] - ey) < 1e-6, "t {} error {}", r[t], (r[x] - ex).hypot(r[y] - ey));
    }
}

#[test]
fn localize_through_dropout_is_continuous() {
    let out = tempfile::tempdir().unwrap();
    let o = gokart(out.path(), &["localize", &fx("replay_dropout.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_table(&out.path().join("poses.csv"));
    let (t, x, y, cxx) = (column(&h, "t_s"), column(&h, "x_m"), column(&h, "y_m"), column(&h, "cov_xx"));
    let input = fs::read_to_string(fixture("replay_dropout.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows.len(), input);
    for w in rows.windows(2) {
        assert!((w[1][x] - w[0][x]).hypot(w[1][y] - w[0][y]) < 0.1);
    }
    let in_gap = rows.iter().find(|r| r[t] > 5.9 && r[t] < 6.0).unwrap();
    let before = rows.iter().find(|r| r[t] > 3.9 && r[t] < 4.0).unwrap();
    assert!(in_gap[cxx] > before[cxx]);
}

#[test]
fn localize_rejects_bad_logs() {
    let dir = tempfile::tempdir().unwrap();
    let header = fs::read_to_string(fixture("replay_straight.csv")).unwrap().lines().next().unwrap().to_owned();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("{header}\n")).unwrap();
    let o = gokart(dir.path(), &["localize", empty.to_str().unwrap()]);
    assert!(!o.status.success());

    let backwards = dir.path().join("backwards.csv");
    fs::write(&backwards, format!("{header}\n0.1,0.7,-1.5,1,0.0001,0,0.0001,1,0\n0.05,0.7,-1.5,1,0.0001,0,0.0001,1,0\n")).unwrap();
    let o = gokart(dir.path(), &["localize", backwards.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn perceive_writes_full_scan() {
    let out = tempfile::tempdir().unwrap();
    let o = gokart(out.path(), &["perceive", &fx("scene_circle.ppm"), &fx("camera.h"), "--debug"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_table(&out.path().join("scan.csv"));
    assert_eq!(rows.len(), 361);
    let d = column(&h, "distance_m");
    assert!(rows.iter().all(|r| (0.0..=10.0).contains(&r[d])));
    assert!(rows.iter().any(|r| r[d] < 10.0));
    assert!(out.path().join("mask.pgm").exists() && out.path().join("bev.pgm").exists());
}

#[test]
fn perceive_all_track_image_sees_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("gray.ppm");
    let mut bytes = b"P6\n320 240\n255\n".to_vec();
    bytes.extend(std::iter::repeat_n([120u8, 120, 120], 320 * 240).flatten());
    fs::write(&img, bytes).unwrap();
    let o = gokart(dir.path(), &["perceive", img.to_str().unwrap(), &fx("camera.h")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_table(&dir.path().join("scan.csv"));
    let d = column(&h, "distance_m");
    assert!(rows.iter().all(|r| r[d] == 10.0));
}

#[test]
fn simulate_pursuit_oval() {
    let out = tempfile::tempdir().unwrap();
    let o = gokart(out.path(), &["simulate", &fx("pursuit_oval.cfg")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["boundary_violations"], 0);
    assert!(report["max_cross_track_error"].as_f64().unwrap() <= 0.5);
    for f in ["trajectory.csv", "poses.csv", "commands.csv", "frames.csv"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
}

#[test]
fn simulate_ftg_corridor() {
    let out = tempfile::tempdir().unwrap();
    let o = gokart(out.path(), &["simulate", &fx("ftg_corridor.cfg"), "--set", "duration_s=15"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["safety_stops"], 0);
    assert!(out.path().join("scans.csv").exists());
}

#[test]
fn simulate_rejects_missing_track_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(&cfg, "track = nowhere.csv\nmode = pursuit\n").unwrap();
    assert_eq!(gokart(dir.path(), &["simulate", cfg.to_str().unwrap()]).status.code(), Some(2));
    let o = gokart(dir.path(), &["simulate", &fx("pursuit_oval.cfg"), "--set", "pursuit.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pursuit.bogus"));
}

#[test]
fn written_raceline_reads_back() {
    let out = tempfile::tempdir().unwrap();
    assert!(gokart(out.path(), &["optimize-raceline", &fx("oval.csv")]).status.success());
    let path = out.path().join("raceline.csv");
    let rl = gokart::io::read_raceline_csv(&path, true).unwrap();
    let copy = out.path().join("copy.csv");
    gokart::io::write_raceline_csv(&copy, &rl).unwrap();
    assert_eq!(gokart::io::read_raceline_csv(&copy, true).unwrap(), rl);
}
