//! Short-time expansion `X_δ = x̂ + Ā_δ(G + R̃_δ)` with `x̂ = x + δb(x)`,
//! `G = Θ + Ā_δ⁻¹η(δ^{1/2}Θ₁)` and its deterministic analogue for controls.

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::DiffusionModel;
use crate::norms::{frame_bar, NormFrame};
use crate::skeleton::{solve_skeleton, Control};

/// Brownian increments on `[0, δ]` over a uniform step `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianSegment {
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl BrownianSegment {
    pub fn new(dt: f64, increments: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || increments.is_empty() {
            return Err(Error::Config("segment needs dt > 0 and at least one increment".into()));
        }
        Ok(Self { dt, increments })
    }

    pub fn delta(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }
}

/// `Θ = (δ^{-1/2}W_δ, δ^{-3/2}∫₀^δ(δ−s)dW_s)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ThetaVector {
    pub theta1: f64,
    pub theta2: f64,
}

impl ThetaVector {
    pub fn to_point(self) -> Point2 {
        Point2::new(self.theta1, self.theta2)
    }

    pub fn norm(self) -> f64 {
        self.to_point().norm()
    }
}

/// Left-endpoint sums for both components.
pub fn theta_from_segment(seg: &BrownianSegment) -> ThetaVector {
    let delta = seg.delta();
    let mut w = 0.0;
    let mut weighted = 0.0;
    for (i, &dw) in seg.increments.iter().enumerate() {
        w += dw;
        weighted += (delta - i as f64 * seg.dt) * dw;
    }
    ThetaVector {
        theta1: w / delta.sqrt(),
        theta2: weighted / delta.powf(1.5),
    }
}

/// `η(u) = (κ/2·u² + (∂_σκ + κ²)/6·u³)σ(x)`.
pub fn eta(model: &DiffusionModel, x: Point2, u: f64) -> Result<Point2> {
    let k = model
        .kappa(x)?
        .ok_or_else(|| Error::H3Violated { points: vec![x] })?;
    let coef = 0.5 * k.value * u * u + (k.along_sigma + k.value * k.value) / 6.0 * u * u * u;
    Ok(model.sigma(x)? * coef)
}

fn principal_in_frame(
    model: &DiffusionModel,
    x: Point2,
    delta: f64,
    frame: &NormFrame,
    theta: ThetaVector,
) -> Result<Point2> {
    let correction = eta(model, x, delta.sqrt() * theta.theta1)?;
    Ok(theta.to_point() + frame.coordinates(correction))
}

/// `G = θ + Ā_δ⁻¹η(δ^{1/2}θ₁)`.
pub fn principal_part(
    model: &DiffusionModel,
    x: Point2,
    delta: f64,
    theta: ThetaVector,
) -> Result<Point2> {
    let frame = frame_bar(model, x, delta)?;
    principal_in_frame(model, x, delta, &frame, theta)
}

/// All pieces of `X_δ = x̂ + Ā_δ(G + R̃_δ)` for one path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorDecomposition {
    pub x_hat: Point2,
    pub frame: NormFrame,
    pub theta: ThetaVector,
    pub principal: Point2,
    pub remainder: Point2,
}

impl TaylorDecomposition {
    /// `x̂ + Ā_δ(G + R̃_δ)`.
    pub fn reconstruct(&self) -> Point2 {
        self.x_hat + self.frame.matrix.mul_vec(self.principal + self.remainder)
    }

    /// `F = Ā_δ⁻¹(X_δ − x̂) = G + R̃_δ`.
    pub fn rescaled(&self) -> Point2 {
        self.principal + self.remainder
    }
}

fn assemble(
    model: &DiffusionModel,
    x: Point2,
    delta: f64,
    theta: ThetaVector,
    end: Point2,
) -> Result<TaylorDecomposition> {
    let frame = frame_bar(model, x, delta)?;
    let x_hat = x + model.drift(x)? * delta;
    let principal = principal_in_frame(model, x, delta, &frame, theta)?;
    let remainder = frame.coordinates(end - x_hat) - principal;
    Ok(TaylorDecomposition {
        x_hat,
        frame,
        theta,
        principal,
        remainder,
    })
}

/// Splits a simulated endpoint `X_δ` (driven by `seg`) into principal part and remainder.
pub fn decompose(
    model: &DiffusionModel,
    x: Point2,
    seg: &BrownianSegment,
    x_delta: Point2,
) -> Result<TaylorDecomposition> {
    assemble(model, x, seg.delta(), theta_from_segment(seg), x_delta)
}

/// `Θ_φ = (δ^{-1/2}∫₀^δφ, δ^{-3/2}∫₀^δ(δ−s)φ_s ds)`, exact for piecewise-constant `φ`.
pub fn theta_of_control(phi: &Control, delta: f64) -> ThetaVector {
    ThetaVector {
        theta1: phi.integrate_with(0.0, delta, |v| v) / delta.sqrt(),
        theta2: phi.integrate_weighted(0.0, delta, delta) / delta.powf(1.5),
    }
}

/// Deterministic decomposition of the skeleton endpoint `x_δ(φ)`.
pub fn decompose_control(
    model: &DiffusionModel,
    x: Point2,
    delta: f64,
    phi: &Control,
    steps_per_knot: usize,
) -> Result<TaylorDecomposition> {
    if phi.horizon() < delta * (1.0 - 1e-12) {
        return Err(Error::Range(format!(
            "control horizon {} shorter than δ = {delta}",
            phi.horizon()
        )));
    }
    let truncated = truncate(phi, delta)?;
    let end = solve_skeleton(model, x, &truncated, steps_per_knot)?.end();
    assemble(model, x, delta, theta_of_control(phi, delta), end)
}

fn truncate(phi: &Control, horizon: f64) -> Result<Control> {
    let mut knots = Vec::new();
    let mut values = Vec::new();
    for (i, &v) in phi.values().iter().enumerate() {
        let a = phi.knots()[i];
        if a >= horizon {
            break;
        }
        knots.push(a);
        values.push(v);
    }
    knots.push(horizon);
    Control::new(knots, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{asian, counterexample, kolmogorov};

    #[test]
    fn theta_of_zero_path() {
        let seg = BrownianSegment::new(0.01, vec![0.0; 10]).unwrap();
        assert_eq!(theta_from_segment(&seg), ThetaVector::default());
    }

    #[test]
    fn theta_of_unit_slope_path() {
        let delta = 0.04;
        let n = 100_000;
        let dt = delta / n as f64;
        let seg = BrownianSegment::new(dt, vec![dt; n]).unwrap();
        let th = theta_from_segment(&seg);
        assert!((th.theta1 - delta.sqrt()).abs() < 1e-12);
        assert!((th.theta2 - 0.5 * delta.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn eta_examples() {
        let m = asian();
        let x = Point2::new(1.0, 0.0);
        assert_eq!(eta(&m, x, 0.0).unwrap(), Point2::ZERO);
        let e = eta(&m, x, 1.0).unwrap();
        assert!((e - Point2::new(2.0 / 3.0, 0.0)).norm() < 1e-15);
        assert_eq!(eta(&counterexample(), Point2::new(1.0, 0.0), 0.7).unwrap(), Point2::ZERO);
    }

    #[test]
    fn principal_part_examples() {
        let m = asian();
        let x = Point2::new(1.0, 1.0);
        assert_eq!(principal_part(&m, x, 0.01, ThetaVector::default()).unwrap(), Point2::ZERO);
        let th = ThetaVector { theta1: 0.3, theta2: -1.2 };
        let g = principal_part(&kolmogorov(), x, 0.05, th).unwrap();
        assert_eq!(g, th.to_point());
    }

    #[test]
    fn zero_noise_asian_has_no_remainder() {
        let m = asian();
        let x = Point2::new(1.0, 0.0);
        let delta = 0.01;
        let seg = BrownianSegment::new(delta / 10.0, vec![0.0; 10]).unwrap();
        let d = decompose(&m, x, &seg, Point2::new(1.0, delta)).unwrap();
        assert!(d.principal.norm() < 1e-15);
        assert!(d.remainder.norm() < 1e-12);
    }

    #[test]
    fn reconstruction_identity() {
        let m = asian();
        let x = Point2::new(1.2, -0.3);
        let seg = BrownianSegment::new(0.001, vec![0.02, -0.05, 0.01, 0.03]).unwrap();
        let end = Point2::new(1.23, -0.297);
        let d = decompose(&m, x, &seg, end).unwrap();
        assert!((d.reconstruct() - end).norm() < 1e-12);
    }

    #[test]
    fn control_theta_examples() {
        let c = 1.7;
        let delta = 0.09;
        let phi = Control::constant(1.0, c).unwrap();
        let th = theta_of_control(&phi, delta);
        assert!((th.theta1 - c * delta.sqrt()).abs() < 1e-14);
        assert!((th.theta2 - 0.5 * c * delta.sqrt()).abs() < 1e-14);

        let m = asian();
        let x = Point2::new(1.0, 1.0);
        let d = decompose_control(&m, x, delta, &Control::zero(1.0).unwrap(), 4).unwrap();
        assert_eq!(d.principal, Point2::ZERO);
        let end = solve_skeleton(&m, x, &Control::zero(delta).unwrap(), 4).unwrap().end();
        assert!((d.remainder - d.frame.coordinates(end - d.x_hat)).norm() < 1e-15);
    }
}
