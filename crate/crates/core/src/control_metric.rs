//! The control distance `d_c(x, y) = inf ‖φ‖_{(1,3)}` over controls steering
//! `dv = A(v)φ ds` from `x` to `y` in unit time, the constant-control gauge `ρ₂`, and the
//! comparison with the quasi-distance `d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Matrix2, Point2};
use crate::model::{lie_bracket, DiffusionModel};
use crate::norms::{quasi_distance, SINGULAR_RATIO};
use crate::parallel::map_indexed;

/// Piecewise-constant pair `(φ¹, φ²)` on a uniform grid of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Control2 {
    pub values: Vec<Point2>,
}

impl Control2 {
    pub fn new(values: Vec<Point2>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("control needs at least one finite value".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, value: Point2) -> Self {
        Self {
            values: vec![value; n.max(1)],
        }
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    /// Same control on a grid twice as fine.
    pub fn refined(&self) -> Self {
        Self {
            values: self.values.iter().flat_map(|&v| [v, v]).collect(),
        }
    }
}

/// `‖(|φ¹|, |φ²|^{1/3})‖_{L²(0,1)}`.
pub fn norm_13(phi: &Control2) -> f64 {
    let dt = 1.0 / phi.intervals() as f64;
    phi.values
        .iter()
        .map(|v| v.x1 * v.x1 + v.x2.abs().powf(2.0 / 3.0))
        .sum::<f64>()
        .sqrt()
        * dt.sqrt()
}

fn field(model: &DiffusionModel, v: Point2, phi: Point2) -> Point2 {
    let sigma = model.sigma_field();
    sigma.value(v) * phi.x1 + lie_bracket(model.drift_field(), sigma, v) * phi.x2
}

fn check_frame(model: &DiffusionModel, v: Point2) -> Result<()> {
    let sigma = model.sigma_field();
    let a = Matrix2::from_columns(sigma.value(v), lie_bracket(model.drift_field(), sigma, v));
    let det = a.det();
    if !det.is_finite() || det == 0.0 || det.abs() < SINGULAR_RATIO * a.frobenius_sq() {
        return Err(Error::SingularFrame { point: v, det });
    }
    Ok(())
}

/// `v₁` for `dv = σ(v)φ¹ + [b,σ](v)φ²`, `v₀ = x`, by RK4 with `steps` substeps per interval.
pub fn shoot(model: &DiffusionModel, x: Point2, phi: &Control2, steps: usize) -> Result<Point2> {
    model.check_point(x)?;
    let steps = steps.max(1);
    let n = phi.intervals();
    let h = 1.0 / (n * steps) as f64;
    let mut v = x;
    for (i, &p) in phi.values.iter().enumerate() {
        for s in 0..steps {
            let k1 = field(model, v, p);
            let k2 = field(model, v + k1 * (0.5 * h), p);
            let k3 = field(model, v + k2 * (0.5 * h), p);
            let k4 = field(model, v + k3 * h, p);
            v = v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if !model.domain().contains(v) || !v.is_finite() {
                return Err(Error::DomainExit((i * steps + s + 1) as f64 * h));
            }
        }
        check_frame(model, v)?;
    }
    Ok(v)
}

/// Tuning of [`dc_estimate`].
#[derive(Clone, Debug, PartialEq)]
pub struct DcOptions {
    pub intervals: usize,
    /// Seeded random restarts on top of the deterministic ones.
    pub restarts: usize,
    pub penalty_schedule: Vec<f64>,
    /// RK4 substeps per control interval.
    pub steps: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Compass sweeps per penalty level.
    pub max_sweeps: usize,
}

impl Default for DcOptions {
    fn default() -> Self {
        Self {
            intervals: 16,
            restarts: 2,
            penalty_schedule: vec![1e2, 1e4, 1e6],
            steps: 4,
            seed: 0,
            threads: None,
            max_sweeps: 40,
        }
    }
}

/// A feasible control and its `(1,3)`-norm, an upper bound for `d_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct DcResult {
    pub upper_bound: f64,
    /// `|v₁ − y|` for the returned control.
    pub endpoint_gap: f64,
    pub control: Control2,
    pub restarts_used: usize,
    /// Restart that produced the returned control.
    pub winner: usize,
}

/// Endpoint tolerance `1e-6·(1 + |y − x|)`.
pub fn gap_tolerance(x: Point2, y: Point2) -> f64 {
    1e-6 * (1.0 + (y - x).norm())
}

struct Problem<'a> {
    model: &'a DiffusionModel,
    x: Point2,
    y: Point2,
    steps: usize,
    scale: f64,
}

impl Problem<'_> {
    fn gap(&self, phi: &Control2) -> Option<f64> {
        shoot(self.model, self.x, phi, self.steps)
            .ok()
            .map(|v| (v - self.y).norm())
    }

    fn objective(&self, phi: &Control2, w: f64) -> f64 {
        match self.gap(phi) {
            Some(g) => {
                let rel = g / self.scale;
                let n = norm_13(phi);
                n * n + w * rel * rel
            }
            None => f64::INFINITY,
        }
    }

    /// Compass search on all `2N` coordinates; one step per component, halved after a
    /// sweep without improvement.
    fn compass(&self, phi: &mut Control2, w: f64, steps: Point2, max_sweeps: usize) {
        let mut best = self.objective(phi, w);
        let mut s = steps;
        let floor = steps * 1e-8;
        for _ in 0..max_sweeps {
            let mut improved = false;
            for i in 0..phi.intervals() {
                for comp in 0..2 {
                    for sign in [1.0, -1.0] {
                        let mut trial = phi.clone();
                        if comp == 0 {
                            trial.values[i].x1 += sign * s.x1;
                        } else {
                            trial.values[i].x2 += sign * s.x2;
                        }
                        let f = self.objective(&trial, w);
                        if f < best {
                            best = f;
                            *phi = trial;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                s = s * 0.5;
                if s.x1 < floor.x1 && s.x2 < floor.x2 {
                    break;
                }
            }
        }
    }

    /// Newton correction in `(c₁, c₂)`: `c₁` added to every `φ¹`, `c₂` to the `φ²` value of
    /// the interval where `|φ²|` is largest.
    fn project(&self, phi: &Control2) -> Option<(Control2, f64)> {
        let k = phi
            .values
            .iter()
            .enumerate()
            .fold((phi.intervals() / 2, -1.0), |acc, (i, v)| {
                if v.x2.abs() > acc.1 {
                    (i, v.x2.abs())
                } else {
                    acc
                }
            })
            .0;
        let apply = |c: Point2| {
            let mut p = phi.clone();
            for v in p.values.iter_mut() {
                v.x1 += c.x1;
            }
            p.values[k].x2 += c.x2;
            p
        };
        let residual = |c: Point2| -> Option<Point2> {
            shoot(self.model, self.x, &apply(c), self.steps)
                .ok()
                .map(|v| v - self.y)
        };
        let target = 1e-14 * (1.0 + self.y.norm());
        let mut c = Point2::ZERO;
        let mut f = residual(c)?;
        for _ in 0..60 {
            if f.norm() <= target {
                break;
            }
            let h1 = 1e-7 * (1.0 + c.x1.abs());
            let h2 = 1e-7 * (1.0 + c.x2.abs());
            let j1 = (residual(c + Point2::new(h1, 0.0))? - f) * (1.0 / h1);
            let j2 = (residual(c + Point2::new(0.0, h2))? - f) * (1.0 / h2);
            let jac = Matrix2::from_columns(j1, j2);
            let step = jac.inverse()?.mul_vec(f);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-6 {
                let trial = c - step * t;
                if let Some(ft) = residual(trial) {
                    if ft.norm() < f.norm() {
                        c = trial;
                        f = ft;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Some((apply(c), f.norm()))
    }
}

/// Deterministic starting controls, followed by seeded perturbations.
fn initial_guesses(
    model: &DiffusionModel,
    x: Point2,
    y: Point2,
    opts: &DcOptions,
) -> Result<Vec<Control2>> {
    let n = opts.intervals.max(1);
    let lin = model
        .a_matrix(x)?
        .inverse()
        .ok_or(Error::SingularFrame {
            point: x,
            det: model.a_matrix(x)?.det(),
        })?
        .mul_vec(y - x);
    let newton = rho2_constant(model, x, y, opts.steps).ok();
    let mut out = vec![
        Control2::constant(n, lin),
        Control2::constant(n, Point2::new(lin.x1, 0.0)),
        Control2::constant(n, Point2::new(0.0, lin.x2)),
    ];
    let base = newton.unwrap_or(lin);
    if let Some(theta) = newton {
        out.push(Control2::constant(n, theta));
    }
    // φ² concentrated on a single interval costs N^{-1/6} of the spread-out control
    for k in [0, n / 2, n - 1] {
        let mut c = Control2::constant(n, Point2::new(base.x1, 0.0));
        c.values[k].x2 = base.x2 * n as f64;
        out.push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let mut c = Control2::constant(n, base);
        for v in c.values.iter_mut() {
            v.x1 *= 1.0 + 0.5 * rng.gen_range(-1.0..1.0);
            v.x2 *= 1.0 + 0.5 * rng.gen_range(-1.0..1.0);
        }
        out.push(c);
    }
    Ok(out)
}

/// Upper bound for `d_c(x, y)` from a penalized compass search over `N`-interval controls.
pub fn dc_estimate(model: &DiffusionModel, x: Point2, y: Point2, opts: &DcOptions) -> Result<DcResult> {
    dc_estimate_from(model, x, y, opts, None)
}

/// Re-solves on `2N` intervals with `previous.control`, refined, as an extra start.
///
/// The refined control is the same function of time, so the bound can only grow by the
/// small change in its projection.
pub fn dc_refine(
    model: &DiffusionModel,
    x: Point2,
    y: Point2,
    opts: &DcOptions,
    previous: &DcResult,
) -> Result<DcResult> {
    let fine = DcOptions {
        intervals: 2 * previous.control.intervals(),
        ..opts.clone()
    };
    dc_estimate_from(model, x, y, &fine, Some(previous.control.refined()))
}

fn dc_estimate_from(
    model: &DiffusionModel,
    x: Point2,
    y: Point2,
    opts: &DcOptions,
    warm: Option<Control2>,
) -> Result<DcResult> {
    model.check_point(x)?;
    model.check_point(y)?;
    let n = opts.intervals.max(1);
    if y == x {
        return Ok(DcResult {
            upper_bound: 0.0,
            endpoint_gap: 0.0,
            control: Control2::constant(n, Point2::ZERO),
            restarts_used: 0,
            winner: 0,
        });
    }
    let mut guesses = initial_guesses(model, x, y, opts)?;
    guesses.extend(warm);
    let problem = Problem {
        model,
        x,
        y,
        steps: opts.steps,
        scale: (y - x).norm(),
    };
    let tol = gap_tolerance(x, y);
    let runs: Vec<Option<(f64, f64, Control2)>> = map_indexed(opts.threads, guesses.len(), |i| {
        let start = &guesses[i];
        let mut candidates = Vec::new();
        if let Some((p, g)) = problem.project(start) {
            candidates.push((p, g));
        }
        let typical = start.values.iter().fold(Point2::ZERO, |m, v| {
            Point2::new(m.x1.max(v.x1.abs()), m.x2.max(v.x2.abs()))
        });
        let lin_scale = problem.scale;
        let steps = Point2::new(
            0.5 * typical.x1.max(1e-3 * lin_scale),
            0.5 * typical.x2.max(1e-3 * lin_scale),
        );
        let mut phi = start.clone();
        for &w in &opts.penalty_schedule {
            problem.compass(&mut phi, w, steps, opts.max_sweeps);
        }
        if let Some((p, g)) = problem.project(&phi) {
            candidates.push((p, g));
        }
        candidates
            .into_iter()
            .map(|(p, g)| (norm_13(&p), g, p))
            .filter(|c| c.1 <= tol)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .or_else(|| {
                // keep the best gap for the error report
                problem.gap(start).map(|g| (f64::INFINITY, g, start.clone()))
            })
    });

    let mut best: Option<(f64, f64, Control2, usize)> = None;
    let mut best_gap = f64::INFINITY;
    for (i, r) in runs.into_iter().enumerate() {
        let Some((cost, gap, ctrl)) = r else { continue };
        best_gap = best_gap.min(gap);
        if !cost.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, gap, ctrl, i));
        }
    }
    match best {
        Some((cost, gap, control, winner)) => Ok(DcResult {
            upper_bound: cost,
            endpoint_gap: gap,
            control,
            restarts_used: guesses.len(),
            winner,
        }),
        None => Err(Error::Unreachable { best_gap }),
    }
}

/// Constant `θ` with `shoot(x, θ) = y`, by damped Newton with a finite-difference Jacobian.
pub fn rho2_constant(model: &DiffusionModel, x: Point2, y: Point2, steps: usize) -> Result<Point2> {
    const MAX_ITER: usize = 100;
    let a = model.a_matrix(x)?;
    let mut theta = a
        .inverse()
        .ok_or(Error::SingularFrame { point: x, det: a.det() })?
        .mul_vec(y - x);
    let map = |t: Point2| shoot(model, x, &Control2::constant(1, t), steps.max(1) * 16).map(|v| v - y);
    let target = 1e-14 * (1.0 + y.norm());
    let mut f = map(theta)?;
    for _ in 0..MAX_ITER {
        if f.norm() <= target {
            return Ok(theta);
        }
        let h1 = 1e-7 * (1.0 + theta.x1.abs());
        let h2 = 1e-7 * (1.0 + theta.x2.abs());
        let j1 = (map(theta + Point2::new(h1, 0.0))? - f) * (1.0 / h1);
        let j2 = (map(theta + Point2::new(0.0, h2))? - f) * (1.0 / h2);
        let Some(inv) = Matrix2::from_columns(j1, j2).inverse() else { break };
        let step = inv.mul_vec(f);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-8 {
            let trial = theta - step * t;
            if let Ok(ft) = map(trial) {
                if ft.norm() < f.norm() {
                    theta = trial;
                    f = ft;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if f.norm() <= 1e-10 * (1.0 + (y - x).norm()) {
        return Ok(theta);
    }
    Err(Error::NewtonFailure {
        iterations: MAX_ITER,
        residual: f.norm(),
    })
}

/// `ρ₂(x, y) = max(|θ¹|, |θ²|^{1/3})` for the constant control reaching `y`.
pub fn rho2_estimate(model: &DiffusionModel, x: Point2, y: Point2) -> Result<f64> {
    if y == x {
        return Ok(0.0);
    }
    let t = rho2_constant(model, x, y, DcOptions::default().steps)?;
    Ok(t.x1.abs().max(t.x2.abs().cbrt()))
}

/// Unit directions `A(x)(cos θ_k, sin θ_k)/|·|` for `θ_k = 2πk/count`, so that index 0
/// follows `σ` and index `count/4` follows `[b,σ]`.
pub fn frame_directions(model: &DiffusionModel, x: Point2, count: usize) -> Result<Vec<Point2>> {
    let a = model.a_matrix(x)?;
    Ok((0..count)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / count as f64;
            let v = a.mul_vec(Point2::new(t.cos(), t.sin()));
            v * (1.0 / v.norm())
        })
        .collect())
}

/// One row of the `d` versus `d_c` comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalenceRow {
    pub direction: usize,
    pub radius: f64,
    pub d: f64,
    pub d_c_upper: f64,
    pub rho2: f64,
}

impl EquivalenceRow {
    pub fn d_over_dc(&self) -> f64 {
        self.d / self.d_c_upper
    }

    pub fn rho2_over_d(&self) -> f64 {
        self.rho2 / self.d
    }
}

/// `d`, `d_c` and `ρ₂` at `y = x + r·direction` for every direction and radius.
pub fn equivalence_report(
    model: &DiffusionModel,
    x: Point2,
    directions: &[Point2],
    radii: &[f64],
    opts: &DcOptions,
) -> Result<Vec<EquivalenceRow>> {
    let mut rows = Vec::with_capacity(directions.len() * radii.len());
    for (k, &dir) in directions.iter().enumerate() {
        for &r in radii {
            let y = x + dir * r;
            let d = quasi_distance(model, x, y, 1e-12)?.d;
            let dc = dc_estimate(model, x, y, opts)?;
            let rho2 = rho2_estimate(model, x, y)?;
            rows.push(EquivalenceRow {
                direction: k,
                radius: r,
                d,
                d_c_upper: dc.upper_bound,
                rho2,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{asian, kolmogorov};

    #[test]
    fn norm_13_examples() {
        assert_eq!(norm_13(&Control2::constant(4, Point2::ZERO)), 0.0);
        assert!((norm_13(&Control2::constant(4, Point2::new(1.0, 1.0))) - 2f64.sqrt()).abs() < 1e-15);
        assert!((norm_13(&Control2::constant(3, Point2::new(0.0, 8.0))) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn shoot_examples() {
        let m = kolmogorov();
        let x = Point2::new(0.2, -0.1);
        assert_eq!(shoot(&m, x, &Control2::constant(4, Point2::ZERO), 4).unwrap(), x);
        let v = shoot(&m, x, &Control2::constant(4, Point2::new(0.3, -0.7)), 4).unwrap();
        assert!((v - Point2::new(0.5, -0.8)).norm() < 1e-14);
        let v = shoot(&asian(), Point2::new(1.0, 0.0), &Control2::constant(8, Point2::new(1.0, 0.0)), 16)
            .unwrap();
        assert!((v - Point2::new(std::f64::consts::E, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn dc_identity_frame() {
        let m = kolmogorov();
        let x = Point2::new(0.0, 0.0);
        let opts = DcOptions::default();
        assert_eq!(dc_estimate(&m, x, x, &opts).unwrap().upper_bound, 0.0);
        let r = dc_estimate(&m, x, Point2::new(0.3, 0.0), &opts).unwrap();
        assert!(r.upper_bound <= 0.3 + 1e-4, "{}", r.upper_bound);
        let r = dc_estimate(&m, x, Point2::new(0.0, 0.001), &opts).unwrap();
        assert!(r.upper_bound <= 0.1 + 1e-3, "{}", r.upper_bound);
        assert!(r.endpoint_gap <= gap_tolerance(x, Point2::new(0.0, 0.001)));
    }

    #[test]
    fn rho2_identity_frame() {
        let m = kolmogorov();
        let x = Point2::new(0.1, 0.1);
        assert_eq!(rho2_estimate(&m, x, x).unwrap(), 0.0);
        let got = rho2_estimate(&m, x, x + Point2::new(0.02, 0.008)).unwrap();
        assert!((got - 0.2).abs() < 1e-9, "{got}");
    }
}
