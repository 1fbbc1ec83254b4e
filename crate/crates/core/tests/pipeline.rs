use std::f64::consts::PI;

use z2meson::analysis::{self, AnalysisWindow};
use z2meson::cli::{self, RunConfig};
use z2meson::dynamics::{initial_theta_state, occupation_grid};
use z2meson::theory;

fn config(sites: usize, h: f64, t_max: f64) -> RunConfig {
    RunConfig { sites, h, t_max, ..RunConfig::default() }
}

#[test]
fn strong_field_size_and_frequency() {
    let (h, j) = (5.0, 1.0);
    let cfg = config(60, h, 60.0);
    let solved = cli::solve(cfg.sites, j, h).unwrap();
    let p = cli::run_point(&cfg, &solved, 0.0).unwrap();
    assert!(p.reflection_time.is_none());
    let s = p.summary.as_ref().unwrap();
    let mean = theory::ravg_large_h_mean(h, j);
    assert!((s.r_prime_avg / mean - 1.0).abs() < 0.1, "{} vs {mean}", s.r_prime_avg);
    // the hard wall at r = 1 shifts the breathing frequency to 2h + J^2/h
    let omega = s.omega.unwrap();
    let shifted = 2.0 * h + j * j / h;
    assert!((omega / shifted - 1.0).abs() < 0.02, "omega = {omega}");
    assert!(omega > theory::breathing_frequency(h));
}

#[test]
fn longer_mesons_are_slower() {
    let cfg = config(60, 1.1, 30.0);
    let solved = cli::solve(cfg.sites, cfg.j, cfg.h).unwrap();
    let short = cli::run_point(&cfg, &solved, 0.0).unwrap();
    let long = cli::run_point(&cfg, &solved, 3.0 * PI / 4.0).unwrap();
    assert!(short.v() > long.v(), "{} vs {}", short.v(), long.v());
    assert!(short.speed_r_squared() > 0.95 && long.speed_r_squared() > 0.95);
}

#[test]
fn conservation_along_trajectory() {
    let cfg = config(30, 0.7, 20.0);
    let solved = cli::solve(cfg.sites, cfg.j, cfg.h).unwrap();
    let p = cli::run_point(&cfg, &solved, PI / 3.0).unwrap();
    let e0 = p.series.energy[0];
    assert!((e0 - theory::theta_energy(PI / 3.0, cfg.h, cfg.j)).abs() < 1e-12);
    assert!(p.series.energy.iter().all(|e| (e - e0).abs() < 1e-10));
    assert!(p.series.norm_error.iter().all(|e| *e < 1e-10));
}

#[test]
fn initial_state_profile() {
    let cfg = config(20, 1.1, 0.0);
    let solved = cli::solve(cfg.sites, cfg.j, cfg.h).unwrap();
    let psi = initial_theta_state(&solved.basis, 0.0).unwrap();
    let prof = analysis::size_filtering_profile(&occupation_grid(&psi), &(1..20).collect::<Vec<_>>());
    assert_eq!(prof, vec![(1, 0.0)]);
}

#[test]
fn headline_window_clips_at_guard() {
    let cfg = config(24, 1.1, 40.0);
    let solved = cli::solve(cfg.sites, cfg.j, cfg.h).unwrap();
    let p = cli::run_point(&cfg, &solved, 0.0).unwrap();
    let t_refl = p.reflection_time.expect("a short chain reflects");
    let w = AnalysisWindow::new(5.0, 40.0).unwrap().guarded(&p.series).unwrap();
    assert!(w.clipped_by_reflection && w.t_end < t_refl);
}
