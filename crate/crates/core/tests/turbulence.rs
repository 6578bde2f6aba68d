use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};

use oamqkd::turbulence::{initial_screen, PhaseScreen, ScreenDump, ScreenParams, StreamKey};
use oamqkd::Grid64;
use proptest::prelude::*;

fn grid() -> Grid64 {
    Grid64::new(64, 0.01).unwrap()
}

fn screen(speed: f64, theta: f64, key: StreamKey) -> PhaseScreen<f64> {
    initial_screen(&ScreenParams::new(0.05, 10.0).with_wind(speed, theta), &grid(), key).unwrap()
}

#[test]
fn long_run_drift_matches_wind_rate() {
    // v sinθ / pitch = 1.3 · 0.8 / 0.01 = 104 px/s horizontally
    let theta = 0.8f64.asin();
    let mut s = screen(1.3, theta, StreamKey::new(3, 0, 0));
    let dt = 1e-3;
    let steps = 3000;
    for _ in 0..steps {
        s.advance(dt).unwrap();
    }
    let elapsed = steps as f64 * dt;
    let (mx, my) = s.moved();
    let rate_x = mx as f64 / elapsed;
    let rate_y = my as f64 / elapsed;
    assert!((rate_x / 104.0 - 1.0).abs() < 0.01, "horizontal {rate_x} px/s");
    assert!((rate_y / 78.0 - 1.0).abs() < 0.01, "vertical {rate_y} px/s");
}

#[test]
fn sideways_wind_never_moves_rows() {
    let mut s = screen(7.0, FRAC_PI_2, StreamKey::new(3, 0, 0));
    for _ in 0..200 {
        s.advance(1e-3).unwrap();
    }
    assert_eq!(s.moved().1, 0);
    assert_eq!(s.residuals().1, 0.0);
    assert!(s.moved().0 > 0);
}

// Content moves with the wind: after whole-pixel steps (kx, ky) the old
// screen reappears shifted by (kx, ky) in the direction of (sinθ, cosθ).
fn assert_drift(theta: f64, speed: f64) {
    let mut s = screen(speed, theta, StreamKey::new(5, 1, 0));
    let before = s.phase().to_vec();
    for _ in 0..4 {
        s.advance(1e-3).unwrap();
    }
    let (kx, ky) = s.moved();
    assert!(kx + ky > 0);
    let sx: i64 = if theta.sin() > 0.0 { kx as i64 } else { -(kx as i64) };
    let sy: i64 = if theta.cos() > 0.0 { ky as i64 } else { -(ky as i64) };
    let n = 64i64;
    let mut checked = 0;
    for iy in 0..n {
        for ix in 0..n {
            let (ox, oy) = (ix - sx, iy - sy);
            if (0..n).contains(&ox) && (0..n).contains(&oy) {
                assert_eq!(s.phase()[(iy * n + ix) as usize], before[(oy * n + ox) as usize]);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn oblique_winds_drift_in_their_stated_directions() {
    assert_drift(FRAC_PI_8, 10.0);
    assert_drift(3.0 * PI / 4.0, 5.0);
}

#[test]
fn same_key_gives_identical_screens_and_streams() {
    let mut a = screen(3.0, 1.0, StreamKey::new(9, 4, 2));
    let mut b = screen(3.0, 1.0, StreamKey::new(9, 4, 2));
    for _ in 0..30 {
        a.advance(1e-3).unwrap();
        b.advance(1e-3).unwrap();
    }
    assert_eq!(a.phase(), b.phase());
    let c = screen(3.0, 1.0, StreamKey::new(9, 5, 2));
    let d = screen(3.0, 1.0, StreamKey::new(9, 4, 3));
    assert_ne!(screen(3.0, 1.0, StreamKey::new(9, 4, 2)).phase(), c.phase());
    assert_ne!(c.phase(), d.phase());
}

#[test]
fn ensemble_mean_is_zero() {
    let seeds = 200;
    let means: Vec<f64> = (0..seeds)
        .map(|k| {
            let s = screen(0.0, 0.0, StreamKey::new(k, 0, 0));
            s.phase().iter().sum::<f64>() / s.phase().len() as f64
        })
        .collect();
    let m = means.iter().sum::<f64>() / seeds as f64;
    let sd = (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (seeds as f64 - 1.0)).sqrt();
    assert!(m.abs() < 3.0 * sd / (seeds as f64).sqrt(), "mean {m}, sd {sd}");
}

#[test]
fn dump_survives_a_file_round_trip() {
    let s = screen(0.0, 0.0, StreamKey::new(21, 0, 0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("screen.bin");
    s.dump().write_to(std::fs::File::create(&path).unwrap()).unwrap();
    let back = ScreenDump::read_from(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, s.dump());
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 40 + 8 * 64 * 64);
}

#[test]
fn under_resolved_grid_is_rejected() {
    let coarse = Grid64::new(64, 0.04).unwrap();
    assert!(initial_screen(&ScreenParams::new(0.05, 10.0), &coarse, StreamKey::new(1, 0, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn advance_keeps_size_and_residuals_in_unit_interval(
        speed in 0.0..12.0f64,
        theta in -PI..PI,
        dts in proptest::collection::vec(1e-4..3e-3f64, 1..25),
    ) {
        let mut s = screen(speed, theta, StreamKey::new(17, 0, 0));
        for dt in dts {
            s.advance(dt).unwrap();
            let (rx, ry) = s.residuals();
            prop_assert!((0.0..1.0).contains(&rx) && (0.0..1.0).contains(&ry));
            prop_assert_eq!(s.phase().len(), 64 * 64);
            prop_assert!(s.phase().iter().all(|v| v.is_finite()));
        }
    }
}
