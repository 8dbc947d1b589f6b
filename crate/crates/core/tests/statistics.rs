//! Monte Carlo and optimizer invariants with empirically recorded constants.

use hypotube::control_metric::{dc_estimate, dc_refine, gap_tolerance, norm_13, shoot, DcOptions};
use hypotube::mc::{tube_probabilities, wilson_interval, SimConfig};
use hypotube::model::{asian, builtin, BUILTIN_MODELS};
use hypotube::norms::frame_bar;
use hypotube::skeleton::{energy, solve_skeleton, Control};
use hypotube::taylor::{decompose_control, theta_of_control};
use hypotube::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_control(rng: &mut ChaCha8Rng, delta: f64, max_energy: f64) -> Control {
    let pieces = rng.gen_range(1..6);
    let mut pairs: Vec<(f64, f64)> = (0..pieces)
        .map(|i| (delta * i as f64 / pieces as f64, rng.gen_range(-1.0..1.0)))
        .collect();
    let phi = Control::from_pairs(&pairs, delta).unwrap();
    let e = energy(&phi, 0.0, delta).unwrap();
    let target = rng.gen_range(0.0..max_energy);
    if e > 0.0 {
        for p in pairs.iter_mut() {
            p.1 *= target / e;
        }
    }
    Control::from_pairs(&pairs, delta).unwrap()
}

fn reference_point(rng: &mut ChaCha8Rng, m: &hypotube::model::DiffusionModel) -> Point2 {
    let r = m.reference_region();
    Point2::new(rng.gen_range(r.lo.x1..r.hi.x1), rng.gen_range(r.lo.x2..r.hi.x2))
}

#[test]
fn wilson_interval_covers_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let reps = 1000;
    let covered = (0..reps)
        .filter(|_| {
            let k = (0..200).filter(|_| rng.gen_bool(0.5)).count();
            let (lo, hi) = wilson_interval(k, 200);
            lo <= 0.5 && 0.5 <= hi
        })
        .count();
    assert!(covered as f64 >= 0.93 * reps as f64, "coverage {covered}/{reps}");
}

#[test]
fn short_moves_and_deterministic_remainder() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut c_move: f64 = 0.0;
    let mut c_rem: f64 = 0.0;
    let mut c_theta: f64 = 0.0;
    for trial in 0..1000 {
        let m = builtin(BUILTIN_MODELS[trial % BUILTIN_MODELS.len()].name, None).unwrap();
        let x0 = reference_point(&mut rng, &m);
        let delta = rng.gen_range(1e-3..0.05);
        let phi = random_control(&mut rng, delta, 0.2);
        let eps = energy(&phi, 0.0, delta).unwrap();
        let end = solve_skeleton(&m, x0, &phi, 8).unwrap().end();
        let x_hat = x0 + m.drift(x0).unwrap() * delta;
        let fb = frame_bar(&m, x0, delta).unwrap();
        c_move = c_move.max(fb.norm(end - x_hat) / eps.max(delta.sqrt()));
        let d = decompose_control(&m, x0, delta, &phi, 8).unwrap();
        c_rem = c_rem.max(d.remainder.norm() / delta.sqrt());
        if eps > 0.0 {
            c_theta = c_theta.max(theta_of_control(&phi, delta).norm() / eps);
        }
    }
    println!("short-move C_emp = {c_move:.4}, remainder C_emp = {c_rem:.4}, |Θ_φ|/ε max = {c_theta:.4}");
    assert!(c_move <= 10.0, "short-move constant {c_move}");
    assert!(c_rem <= 10.0, "remainder constant {c_rem}");
    assert!(c_theta <= 2.0 + 1e-12, "|Θ_φ| / ε = {c_theta}");
}

#[test]
fn tube_results_do_not_depend_on_thread_count() {
    let m = asian();
    let phi = Control::sine(0.4, 1.0, 3.0, 10).unwrap();
    let radii = [0.5, 0.3, 0.1];
    let run = |t: usize| {
        let cfg = SimConfig::new(2e-3, 2000, 99, 0.4).with_threads(t);
        tube_probabilities(&m, Point2::new(1.0, 0.0), &phi, &radii, &cfg).unwrap()
    };
    let one = run(1);
    assert_eq!(run(4), one);
    assert_eq!(run(8), one);
}

#[test]
fn dc_is_a_certified_upper_bound_and_refines_monotonically() {
    let m = asian();
    let x = Point2::new(1.0, 1.0);
    let opts = DcOptions { intervals: 8, ..DcOptions::default() };
    for y in [Point2::new(1.05, 1.0), Point2::new(1.0, 1.01), Point2::new(1.02, 1.003)] {
        let coarse = dc_estimate(&m, x, y, &opts).unwrap();
        assert!(coarse.upper_bound >= norm_13(&coarse.control));
        let end = shoot(&m, x, &coarse.control, opts.steps).unwrap();
        assert!((end - y).norm() <= gap_tolerance(x, y));
        assert!(coarse.endpoint_gap <= gap_tolerance(x, y));
        let fine = dc_refine(&m, x, y, &opts, &coarse).unwrap();
        assert_eq!(fine.control.intervals(), 16);
        assert!(
            fine.upper_bound <= coarse.upper_bound + 1e-6,
            "{} -> {}",
            coarse.upper_bound,
            fine.upper_bound
        );
    }
}
