//! Values with an independent closed form, computed here in exact rational arithmetic.

use hypotube::bounds::{rate_f, rate_g, tube_lower_bound, tube_upper_bound, BoundConstants, Profiles};
use hypotube::model::{asian, counterexample, kolmogorov};
use hypotube::norms::{frame, frame_bar, quasi_distance};
use hypotube::skeleton::Control;
use hypotube::taylor::{principal_part, theta_of_control, ThetaVector};
use hypotube::Point2;
use num_rational::Ratio;

type Q = Ratio<i64>;

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

fn to_f64(r: Q) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * b.abs().max(1.0)
}

/// Asian at (1,1): κ = 1, ∂_σκ = 0, ∂_bσ = 0, so `G = θ + (η(√δθ₁)/√δ, 0)` with
/// `η(u) = u²/2 + u³/6`.
fn asian_g(theta: (Q, Q), sqrt_delta: Q) -> (Q, Q) {
    let u = sqrt_delta * theta.0;
    let eta = u * u / 2 + u * u * u / 6;
    (theta.0 + eta / sqrt_delta, theta.1)
}

#[test]
fn principal_part_matches_rational_arithmetic() {
    let m = asian();
    let x = Point2::new(1.0, 1.0);
    let (g1, g2) = asian_g((q(1, 1), q(0, 1)), q(1, 10));
    assert_eq!((g1, g2), (q(631, 600), q(0, 1)));
    for theta in [(q(1, 1), q(0, 1)), (q(2, 1), q(-1, 1)), (q(-3, 2), q(5, 4)), (q(7, 3), q(2, 9))] {
        for sd in [q(1, 10), q(1, 5), q(1, 20)] {
            let (e1, e2) = asian_g(theta, sd);
            let delta = to_f64(sd * sd);
            let g = principal_part(
                &m,
                x,
                delta,
                ThetaVector { theta1: to_f64(theta.0), theta2: to_f64(theta.1) },
            )
            .unwrap();
            assert!(close(g.x1, to_f64(e1)) && close(g.x2, to_f64(e2)), "{g:?} vs ({e1}, {e2})");
        }
    }
}

#[test]
fn principal_part_is_theta_when_sigma_is_constant() {
    let theta = ThetaVector { theta1: 0.7, theta2: -1.3 };
    let g = principal_part(&kolmogorov(), Point2::new(0.2, 0.4), 0.04, theta).unwrap();
    assert_eq!(g, theta.to_point());
}

#[test]
fn theta_of_piecewise_control() {
    // φ = 2 on [0, δ/2), −1 on [δ/2, δ] with δ = 1/4:
    // θ₁ = δ^{-1/2}(2·δ/2 − δ/2) = δ^{1/2}/2
    // θ₂ = δ^{-3/2}(2·3δ²/8 − δ²/8) = (5/8)δ^{1/2}
    let delta = q(1, 4);
    let phi = Control::from_pairs(&[(0.0, 2.0), (to_f64(delta / 2), -1.0)], to_f64(delta)).unwrap();
    let t = theta_of_control(&phi, to_f64(delta));
    let sd = q(1, 2);
    assert!(close(t.theta1, to_f64(sd / 2)));
    assert!(close(t.theta2, to_f64(q(5, 8) * sd)));
    // |Θ_φ| ≤ 2ε
    let eps = (to_f64(q(4, 1) * delta / 2 + delta / 2)).sqrt();
    assert!(t.norm() <= 2.0 * eps);
}

#[test]
fn counterexample_ellipse_stays_above_zero() {
    let m = counterexample();
    let delta = q(1, 100);
    let x = Point2::new(1.0, 0.0);
    let a = frame(&m, x, to_f64(delta)).unwrap().matrix;
    // columns δ^{1/2}(1, 0) and δ^{3/2}(0, 2)
    assert!(close(a.get(0, 0), 0.1) && close(a.get(1, 1), 2e-3));
    assert_eq!((a.get(1, 0), a.get(0, 1)), (0.0, 0.0));
    let min_y2 = delta - q(2, 1000);
    assert_eq!(min_y2, q(8, 1000));
    assert!(close(to_f64(delta) - a.get(1, 1), to_f64(min_y2)));
    // Ā adds δ∂_bσ = 0 for a constant σ
    assert_eq!(frame_bar(&m, x, 0.01).unwrap().matrix, a);
}

#[test]
fn quasi_distance_on_identity_frame() {
    let m = kolmogorov();
    let x = Point2::new(0.0, 0.0);
    for (y, d) in [(Point2::new(0.25, 0.0), 0.25), (Point2::new(0.0, 0.001), 0.1), (Point2::new(0.0, 0.125), 0.5)] {
        let got = quasi_distance(&m, x, y, 1e-13).unwrap();
        assert!(!got.saturated && (got.d - d).abs() < 1e-11, "{y:?}: {}", got.d);
    }
}

#[test]
fn bound_formulas_by_hand() {
    // n = 3, λ = 1, μ = 2, K = q = 1, h = 1/2, R = 1/10, φ = 1: f = 6·(2 + 10 + 1) = 78
    let c = BoundConstants { k: 1.0, q: 1.0, mu: 2.0, h: 0.5 };
    let p = Profiles::constant(1.0, 3.0, 1.0, 1.0).unwrap();
    assert!(close(rate_f(&c, 0.1, &p, 0.5), 78.0));
    let p0 = Profiles::constant(1.0, 3.0, 1.0, 0.0).unwrap();
    assert!(close(rate_g(&c, 0.1, &p0, 0.5), to_f64(q(5, 3))));
    let ones = BoundConstants::default();
    let unit = Profiles::constant(1.0, 1.0, 1.0, 0.0).unwrap();
    assert!(close(tube_lower_bound(&ones, 1.0, &unit, 1.0).unwrap(), (-2.0f64).exp()));
    assert!(close(tube_upper_bound(&ones, 1.0, &unit, 1.0, 1.0).unwrap(), (-1.0f64).exp()));
    assert_eq!(tube_lower_bound(&ones, 1.0, &unit, 0.0).unwrap(), 1.0);
}
