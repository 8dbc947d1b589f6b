//! Controls, the deterministic skeleton `dx = σ(x)φ dt + b(x) dt`, control energy and
//! the growth-class and `R_*` functionals.

use crate::bounds::BoundConstants;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::DiffusionModel;

/// Right-continuous piecewise-constant function on `[0, T]`.
///
/// Used for scalar controls `φ` and for the `n_t`, `λ_t` profiles along a skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    knots: Vec<f64>,
    values: Vec<f64>,
}

/// Scalar control `φ` on `[0, T]`.
pub type Control = PiecewiseConstant;
/// Time profile of a bound (`n_t` or `λ_t`).
pub type Profile = PiecewiseConstant;

const KNOT_EPS: f64 = 1e-12;

impl PiecewiseConstant {
    /// `knots` are `0 = t₀ < t₁ < … < t_m = T`, `values[i]` applies on `[t_i, t_{i+1})`.
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::Config(format!(
                "need one more knot than values (got {} knots, {} values)",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::Config("first knot must be 0".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Config("knots must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("values must be finite".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn constant(horizon: f64, value: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value])
    }

    pub fn zero(horizon: f64) -> Result<Self> {
        Self::constant(horizon, 0.0)
    }

    /// Midpoint samples of `a·sin(ωt)` on `intervals` equal pieces.
    pub fn sine(horizon: f64, amplitude: f64, omega: f64, intervals: usize) -> Result<Self> {
        let n = intervals.max(1);
        let h = horizon / n as f64;
        let knots = (0..=n).map(|i| i as f64 * h).collect();
        let values = (0..n)
            .map(|i| amplitude * (omega * (i as f64 + 0.5) * h).sin())
            .collect();
        Self::new(knots, values)
    }

    /// `(start, value)` pairs; the last piece runs to `horizon`.
    pub fn from_pairs(pairs: &[(f64, f64)], horizon: f64) -> Result<Self> {
        let mut knots: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        knots.push(horizon);
        Self::new(knots, pairs.iter().map(|p| p.1).collect())
    }

    /// Named presets: `zero`, `constant:c`, `sine:a,ω`.
    pub fn preset(spec: &str, horizon: f64) -> Result<Self> {
        let spec = spec.trim();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{s}' in control preset '{spec}'")))
        };
        if spec == "zero" {
            return Self::zero(horizon);
        }
        if let Some(rest) = spec.strip_prefix("constant:") {
            return Self::constant(horizon, num(rest)?);
        }
        if let Some(rest) = spec.strip_prefix("sine:") {
            let parts: Vec<_> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::Config(format!("sine preset needs 'a,omega': '{spec}'")));
            }
            return Self::sine(horizon, num(parts[0])?, num(parts[1])?, 200);
        }
        Err(Error::Config(format!("unknown control preset '{spec}'")))
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn piece(&self, t: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= t);
        i.saturating_sub(1).min(self.values.len() - 1)
    }

    /// Value at `t` (the last piece extends to `T` inclusive).
    pub fn at(&self, t: f64) -> f64 {
        self.values[self.piece(t)]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Exact `∫_{t0}^{t1} g(f(s)) ds`.
    pub fn integrate_with(&self, t0: f64, t1: f64, g: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            let a = self.knots[i].max(t0);
            let b = self.knots[i + 1].min(t1);
            if b > a {
                total += g(v) * (b - a);
            }
        }
        total
    }

    /// Exact `∫_{t0}^{t1} f(s)(c − s) ds`.
    pub fn integrate_weighted(&self, t0: f64, t1: f64, c: f64) -> f64 {
        let mut total = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            let a = self.knots[i].max(t0);
            let b = self.knots[i + 1].min(t1);
            if b > a {
                total += v * 0.5 * ((c - a).powi(2) - (c - b).powi(2));
            }
        }
        total
    }

    /// Union of the knots of two functions.
    pub fn merged_knots(&self, other: &Self) -> Vec<f64> {
        let mut k: Vec<f64> = self.knots.iter().chain(other.knots.iter()).cloned().collect();
        k.sort_by(f64::total_cmp);
        k.dedup_by(|a, b| (*a - *b).abs() <= KNOT_EPS);
        k
    }
}

/// `ε = (∫_t^{t+δ}|φ_s|² ds)^{1/2}`.
pub fn energy(phi: &Control, t: f64, delta: f64) -> Result<f64> {
    let horizon = phi.horizon();
    if t < -KNOT_EPS || delta < 0.0 || t + delta > horizon * (1.0 + KNOT_EPS) + KNOT_EPS {
        return Err(Error::Range(format!(
            "[{t}, {}] is not inside [0, {horizon}]",
            t + delta
        )));
    }
    Ok(phi.integrate_with(t, t + delta, |v| v * v).sqrt())
}

/// Skeleton trajectory sampled at the integration nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonPath {
    pub times: Vec<f64>,
    pub points: Vec<Point2>,
}

impl SkeletonPath {
    pub fn end(&self) -> Point2 {
        *self.points.last().unwrap()
    }
}

fn rk4_step(model: &DiffusionModel, x: Point2, phi: f64, h: f64) -> Point2 {
    let f = |p: Point2| model.sigma_field().value(p) * phi + model.drift_field().value(p);
    let k1 = f(x);
    let k2 = f(x + k1 * (0.5 * h));
    let k3 = f(x + k2 * (0.5 * h));
    let k4 = f(x + k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn rk4_run(
    model: &DiffusionModel,
    x0: Point2,
    phi: f64,
    t0: f64,
    t1: f64,
    steps: usize,
    out: Option<(&mut Vec<f64>, &mut Vec<Point2>)>,
) -> Result<Point2> {
    let h = (t1 - t0) / steps as f64;
    let mut x = x0;
    let mut sink = out;
    for i in 0..steps {
        x = rk4_step(model, x, phi, h);
        let t = t0 + (i + 1) as f64 * h;
        if !model.domain().contains(x) {
            return Err(Error::DomainExit(t));
        }
        if let Some((ts, ps)) = sink.as_mut() {
            ts.push(t);
            ps.push(x);
        }
    }
    Ok(x)
}

/// Step-halving acceptance threshold for [`solve_skeleton`].
pub const HALVING_TOL: f64 = 1e-6;
const MAX_HALVINGS: u32 = 16;

/// Classical RK4 on each knot interval, refining by step halving until two successive
/// resolutions agree to [`HALVING_TOL`] (relative).
pub fn solve_skeleton(
    model: &DiffusionModel,
    x0: Point2,
    phi: &Control,
    steps_per_knot: usize,
) -> Result<SkeletonPath> {
    if steps_per_knot == 0 {
        return Err(Error::Config("steps_per_knot must be at least 1".into()));
    }
    model.check_point(x0)?;
    let mut times = vec![0.0];
    let mut points = vec![x0];
    let mut x = x0;
    for (i, &v) in phi.values().iter().enumerate() {
        let (a, b) = (phi.knots()[i], phi.knots()[i + 1]);
        let mut n = steps_per_knot;
        let mut coarse = rk4_run(model, x, v, a, b, n, None)?;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let fine = rk4_run(model, x, v, a, b, 2 * n, None)?;
            let scale = fine.norm().max(f64::MIN_POSITIVE);
            if (fine - coarse).norm() <= HALVING_TOL * scale {
                accepted = true;
                break;
            }
            coarse = fine;
            n *= 2;
        }
        if !accepted {
            return Err(Error::StepFailure { t0: a, t1: b });
        }
        x = rk4_run(model, x, v, a, b, 2 * n, Some((&mut times, &mut points)))?;
    }
    Ok(SkeletonPath { times, points })
}

/// Skeleton values at the given increasing times (starting at 0), one RK4 step per grid
/// interval, split at control knots.
pub fn skeleton_on_grid(
    model: &DiffusionModel,
    x0: Point2,
    phi: &Control,
    times: &[f64],
) -> Result<Vec<Point2>> {
    model.check_point(x0)?;
    let mut out = Vec::with_capacity(times.len());
    let mut x = x0;
    out.push(x);
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mut a = t0;
        for &k in phi.knots().iter().filter(|&&k| k > t0 && k < t1) {
            x = rk4_step(model, x, phi.at(0.5 * (a + k)), k - a);
            a = k;
        }
        x = rk4_step(model, x, phi.at(0.5 * (a + t1)), t1 - a);
        if !model.domain().contains(x) {
            return Err(Error::DomainExit(t1));
        }
        out.push(x);
    }
    Ok(out)
}

/// Pair of sample times breaking `f(t) ≤ μ f(s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthWitness {
    /// Time of the smaller value.
    pub s: f64,
    /// Time of the larger value.
    pub t: f64,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthCheck {
    pub passed: bool,
    /// Worst pair found (present whenever some pair has a ratio above 1).
    pub witness: Option<GrowthWitness>,
}

const GROWTH_TOL: f64 = 1e-12;

/// Checks membership of uniformly sampled `f ≥ 0` in `L(μ, h)`: `f(t) ≤ μ f(s)` for
/// `|t − s| ≤ h`.
pub fn growth_class_check(samples: &[f64], spacing: f64, mu: f64, h: f64) -> Result<GrowthCheck> {
    if mu < 1.0 || h <= 0.0 || spacing <= 0.0 {
        return Err(Error::Range(format!("need μ ≥ 1, h > 0, spacing > 0 (μ={mu}, h={h})")));
    }
    if spacing > 0.25 * h * (1.0 + GROWTH_TOL) {
        return Err(Error::GridTooCoarse {
            spacing,
            limit: 0.25 * h,
        });
    }
    let reach = ((h / spacing) * (1.0 + GROWTH_TOL)).floor() as usize;
    let mut worst: Option<GrowthWitness> = None;
    let mut passed = true;
    for (i, &fi) in samples.iter().enumerate() {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(samples.len() - 1);
        for (j, &fj) in samples.iter().enumerate().take(hi + 1).skip(lo) {
            if fi <= fj {
                continue;
            }
            let ratio = if fj > 0.0 { fi / fj } else { f64::INFINITY };
            if fi > mu * fj * (1.0 + GROWTH_TOL) {
                passed = false;
            }
            if worst.is_none_or(|w| ratio > w.ratio * (1.0 + GROWTH_TOL)) {
                worst = Some(GrowthWitness {
                    s: j as f64 * spacing,
                    t: i as f64 * spacing,
                    ratio,
                });
            }
        }
    }
    Ok(GrowthCheck {
        passed,
        witness: worst,
    })
}

/// Shortest window `δ` with `∫_t^{t+δ}|φ|² ≥ 1` for some `t`, or `+∞`.
pub fn unit_energy_window(phi: &Control) -> f64 {
    let knots = phi.knots();
    let sq: Vec<f64> = phi.values().iter().map(|v| v * v).collect();
    let mut cum = vec![0.0];
    for (i, s) in sq.iter().enumerate() {
        cum.push(cum[i] + s * (knots[i + 1] - knots[i]));
    }
    let total = *cum.last().unwrap();
    if total < 1.0 {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    // the optimal window has one endpoint on a knot
    for i in 0..knots.len() {
        let target = cum[i] + 1.0;
        let j = cum.partition_point(|&c| c < target);
        if j < cum.len() && j > 0 {
            let end = knots[j - 1] + (target - cum[j - 1]) / sq[j - 1];
            best = best.min(end - knots[i]);
        }
        let target = cum[i] - 1.0;
        if target >= 0.0 {
            // largest p with cum[p] ≤ target
            let p = cum.partition_point(|&c| c <= target) - 1;
            if p < sq.len() && sq[p] > 0.0 {
                let start = knots[p] + (target - cum[p]) / sq[p];
                best = best.min(knots[i] - start);
            }
        }
    }
    best
}

/// `R_*(φ) = inf_t (λ_t/(Kμn_t))^q · (h ∧ unit-energy window)`.
pub fn r_star(phi: &Control, n: &Profile, lambda: &Profile, c: &BoundConstants) -> f64 {
    let knots = n.merged_knots(lambda);
    let factor = knots
        .windows(2)
        .map(|w| {
            let t = 0.5 * (w[0] + w[1]);
            (lambda.at(t) / (c.k * c.mu * n.at(t))).powf(c.q)
        })
        .fold(f64::INFINITY, f64::min);
    factor * c.h.min(unit_energy_window(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{asian, kolmogorov, DiffusionModel, Domain, Monomial, PolyField, Polynomial};
    use std::sync::Arc;

    fn consts(k: f64, q: f64, mu: f64, h: f64) -> BoundConstants {
        BoundConstants { k, q, mu, h }
    }

    #[test]
    fn zero_control_linear_flow() {
        let m = kolmogorov();
        let x0 = Point2::new(1.0, 0.0);
        let p = solve_skeleton(&m, x0, &Control::zero(2.0).unwrap(), 4).unwrap();
        for (t, x) in p.times.iter().zip(&p.points) {
            assert!((x.x1 - 1.0).abs() < 1e-14 && (x.x2 - t).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_translation() {
        let sigma = PolyField::new(Polynomial::new(vec![Monomial::new(1.0, 0, 0)]), Polynomial::zero());
        let m = DiffusionModel::new(
            "translate",
            Arc::new(sigma),
            Arc::new(PolyField::default()),
            Domain::new((-10.0, 10.0), (-10.0, 10.0)),
        );
        let x0 = Point2::new(0.5, -1.0);
        let p = solve_skeleton(&m, x0, &Control::constant(1.5, 2.0).unwrap(), 3).unwrap();
        assert!((p.end() - Point2::new(3.5, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn asian_unit_control_has_exponential_solution() {
        let m = asian();
        let p = solve_skeleton(&m, Point2::new(1.0, 0.0), &Control::constant(1.0, 1.0).unwrap(), 8)
            .unwrap();
        let e = std::f64::consts::E;
        let want = Point2::new(e, e - 1.0);
        assert!((p.end() - want).norm() / want.norm() < 1e-6);
    }

    #[test]
    fn step_halving_consistency() {
        let m = asian();
        let phi = Control::sine(1.0, 1.5, 6.0, 20).unwrap();
        let a = solve_skeleton(&m, Point2::new(1.0, 0.0), &phi, 4).unwrap().end();
        let b = solve_skeleton(&m, Point2::new(1.0, 0.0), &phi, 8).unwrap().end();
        assert!((a - b).norm() / b.norm() < 1e-6);
    }

    #[test]
    fn skeleton_domain_exit() {
        let m = asian();
        // x₁ grows like e^{10t}
        let err = solve_skeleton(&m, Point2::new(1.0, 0.0), &Control::constant(1.0, 10.0).unwrap(), 4)
            .unwrap_err();
        assert!(matches!(err, Error::DomainExit(_)));
    }

    #[test]
    fn grid_skeleton_matches_adaptive() {
        let m = asian();
        let phi = Control::from_pairs(&[(0.0, 1.0), (0.33, -0.5), (0.71, 2.0)], 1.0).unwrap();
        let x0 = Point2::new(1.0, 1.0);
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 1e-3).collect();
        let grid = skeleton_on_grid(&m, x0, &phi, &times).unwrap();
        let adaptive = solve_skeleton(&m, x0, &phi, 8).unwrap().end();
        assert!((*grid.last().unwrap() - adaptive).norm() < 1e-6 * adaptive.norm());
    }

    #[test]
    fn energy_examples() {
        let phi = Control::constant(0.25, 2.0).unwrap();
        assert!((energy(&phi, 0.0, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(energy(&Control::zero(1.0).unwrap(), 0.0, 1.0).unwrap(), 0.0);
        let phi = Control::from_pairs(&[(0.0, 1.0), (0.5, 3.0)], 1.0).unwrap();
        assert!((energy(&phi, 0.0, 1.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(energy(&phi, 0.5, 0.6), Err(Error::Range(_))));
    }

    #[test]
    fn presets_parse() {
        assert_eq!(Control::preset("zero", 1.0).unwrap().values(), &[0.0]);
        assert_eq!(Control::preset("constant:2.5", 1.0).unwrap().at(0.3), 2.5);
        let s = Control::preset("sine:2,3.14159", 1.0).unwrap();
        assert_eq!(s.values().len(), 200);
        assert!(Control::preset("ramp:1", 1.0).is_err());
        assert!(Control::preset("constant:x", 1.0).is_err());
    }

    #[test]
    fn growth_constant_passes() {
        let f = vec![2.0; 101];
        let r = growth_class_check(&f, 0.01, 1.0, 0.1).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn growth_exponential_boundary() {
        let spacing = 0.0025;
        let f: Vec<f64> = (0..=400).map(|i| (i as f64 * spacing).exp()).collect();
        let r = growth_class_check(&f, spacing, 0.1f64.exp(), 0.1).unwrap();
        assert!(r.passed, "{r:?}");
        let r = growth_class_check(&f, spacing, 1.05, 0.1).unwrap();
        assert!(!r.passed);
        let w = r.witness.unwrap();
        assert!(w.s.abs() < 1e-12 && (w.t - 0.1).abs() < 1e-9, "{w:?}");
        assert!((w.ratio - 0.1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn growth_coarse_grid_rejected() {
        let f = vec![1.0; 10];
        assert!(matches!(
            growth_class_check(&f, 0.05, 1.0, 0.1),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn unit_window_examples() {
        assert_eq!(unit_energy_window(&Control::zero(5.0).unwrap()), f64::INFINITY);
        assert!((unit_energy_window(&Control::constant(2.0, 2.0).unwrap()) - 0.25).abs() < 1e-15);
        // 1 on [0,1), 3 on [1,2): best window sits inside the second piece
        let phi = Control::from_pairs(&[(0.0, 1.0), (1.0, 3.0)], 2.0).unwrap();
        assert!((unit_energy_window(&phi) - 1.0 / 9.0).abs() < 1e-15);
        // best window ends at 1.7: 0.4 from the last piece, 0.6 from φ = 1.5
        let phi = Control::from_pairs(&[(0.0, 0.0), (1.0, 1.5), (1.6, 2.0), (1.7, 0.0)], 3.0).unwrap();
        assert!((unit_energy_window(&phi) - (0.1 + 0.6 / 2.25)).abs() < 1e-12);
    }

    #[test]
    fn r_star_examples() {
        let n = Profile::constant(1.0, 3.0).unwrap();
        let l = Profile::constant(1.0, 0.5).unwrap();
        let c = consts(2.0, 1.5, 1.2, 0.4);
        let zero = Control::zero(1.0).unwrap();
        let want = (0.5f64 / (2.0 * 1.2 * 3.0)).powf(1.5) * 0.4;
        assert!((r_star(&zero, &n, &l, &c) - want).abs() < 1e-15);
        let one = Profile::constant(1.0, 1.0).unwrap();
        assert!((r_star(&zero, &one, &one, &consts(1.0, 1.0, 1.0, 0.3)) - 0.3).abs() < 1e-15);
        let two = Control::constant(1.0, 2.0).unwrap();
        assert!((r_star(&two, &one, &one, &consts(1.0, 1.0, 1.0, 1.0)) - 0.25).abs() < 1e-15);
    }
}
