//! Regenerates the files under `fixtures/`.
//!
//! cargo run -p gokart-core --example make_fixtures -- fixtures

use std::path::{Path, PathBuf};

use gokart::config::Scenario;
use gokart::io::{write_csv, write_homography, write_ppm, write_track_csv, REPLAY_COLUMNS};
use gokart::localization::{local_to_geo, ReplayRow, EARTH_RADIUS_M};
use gokart::perception::CameraModel;
use gokart::sim::{render_scene, TrackGeometry, VehicleState};
use gokart::track::shapes::{circle, lobed, oval, straight};
use gokart::{GeoFix, LocalPoint, Track};

fn save(dir: &Path, name: &str, track: &Track) {
    write_track_csv(&dir.join(name), track.points()).expect("write track");
}

/// Straight drive at 5 m/s, 100 Hz, exact measurements.
fn replay(dropout: Option<(f64, f64)>) -> Vec<ReplayRow> {
    let s = Scenario::default();
    let origin = GeoFix::new(s.origin_lat, s.origin_lon, 0.0);
    let (v, psi) = (5.0f64, 0.3f64);
    (0..=1000)
        .map(|k| {
            let t = k as f64 * 0.01;
            let p = LocalPoint::new(v * t * psi.cos(), v * t * psi.sin());
            let fix = local_to_geo(&p, &origin, EARTH_RADIUS_M, 1e-4);
            let valid = dropout.is_none_or(|(a, b)| t < a || t >= b);
            ReplayRow {
                t_s: t,
                lat_rad: fix.lat,
                lon_rad: fix.lon,
                gnss_valid: valid as u8,
                gnss_var_m2: 1e-4,
                imu_yaw_rad: psi,
                imu_yaw_var_rad2: 1e-4,
                v_mps: v,
                omega_radps: 0.0,
            }
        })
        .collect()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).expect("create fixture dir");

    let ring = circle(20.0, 80, 2.0, 0.5, true);
    save(&dir, "circle.csv", &ring);
    save(&dir, "oval.csv", &oval(30.0, 20.0, 1.0, 2.0, 0.5));
    save(&dir, "corridor.csv", &oval(30.0, 15.0, 1.0, 2.0, 0.5));
    save(&dir, "lobed.csv", &lobed(25.0, 2.0, 4, 120, 2.5, 0.5));
    save(&dir, "straight.csv", &straight(50.0, 26, 2.0, 0.5));

    let s = Scenario::default();
    let camera = CameraModel::covering(&s.bev, s.camera_width, s.camera_height);
    write_homography(&dir.join("camera.h"), &camera.homography).expect("write homography");
    let geom = TrackGeometry::from_track(&ring, 0.25).expect("geometry");
    let a = 0.4f64;
    let pose = VehicleState { x: 20.5 * a.cos(), y: 20.5 * a.sin(), psi: a + std::f64::consts::FRAC_PI_2 + 0.1, v: 0.0 };
    write_ppm(&dir.join("scene_circle.ppm"), &render_scene(&geom, &pose, &camera, &s.bev)).expect("write scene");

    write_csv(&dir.join("replay_straight.csv"), &replay(None), REPLAY_COLUMNS).expect("write replay");
    write_csv(&dir.join("replay_dropout.csv"), &replay(Some((4.0, 6.0))), REPLAY_COLUMNS).expect("write replay");
}
