//! Rate functions `f_R`, `g_R`, the unit-integral time grid and the two exponential
//! tube bounds.

use quadrature::double_exponential;
use roots::{find_root_brent, SimpleConvergency};

use crate::error::{Error, Result};
use crate::model::{hypothesis_profile, DiffusionModel};
use crate::skeleton::{Control, PiecewiseConstant, Profile, SkeletonPath};

/// User-facing constants of the tube bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub k: f64,
    pub q: f64,
    pub mu: f64,
    pub h: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            k: 1.0,
            q: 1.0,
            mu: 1.0,
            h: 1.0,
        }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1.0 && self.q >= 1.0 && self.mu >= 1.0 && self.h > 0.0 && self.h.is_finite())
        {
            return Err(Error::Config(format!(
                "bound constants need K, q, μ ≥ 1 and h > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// `H = K(μn/λ)^q`.
    pub fn weight(&self, n: f64, lambda: f64) -> f64 {
        self.k * (self.mu * n / lambda).powf(self.q)
    }

    /// `(1/K)(λ/(μn))^q`.
    pub fn inverse_weight(&self, n: f64, lambda: f64) -> f64 {
        (lambda / (self.mu * n)).powf(self.q) / self.k
    }
}

/// The `n_t`, `λ_t` and `φ_t` profiles along a skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct Profiles {
    pub n: Profile,
    pub lambda: Profile,
    pub phi: Control,
}

impl Profiles {
    pub fn constant(horizon: f64, n: f64, lambda: f64, phi: f64) -> Result<Self> {
        Ok(Self {
            n: Profile::constant(horizon, n)?,
            lambda: Profile::constant(horizon, lambda)?,
            phi: Control::constant(horizon, phi)?,
        })
    }

    /// Step profiles on the skeleton nodes: each interval takes the larger `n` and the
    /// smaller `λ` of its two endpoints.
    pub fn along_skeleton(model: &DiffusionModel, path: &SkeletonPath, phi: &Control) -> Result<Self> {
        let prof = hypothesis_profile(model, &path.points)?;
        let knots = path.times.clone();
        let n = prof.windows(2).map(|w| w[0].n_max.max(w[1].n_max)).collect();
        let lambda = prof
            .windows(2)
            .map(|w| w[0].lambda_min.min(w[1].lambda_min))
            .collect();
        Ok(Self {
            n: PiecewiseConstant::new(knots.clone(), n)?,
            lambda: PiecewiseConstant::new(knots, lambda)?,
            phi: phi.clone(),
        })
    }

    /// Breakpoints of all three profiles inside `[0, horizon]`, endpoints included.
    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        let mut k = self.n.merged_knots(&self.lambda);
        k.extend_from_slice(self.phi.knots());
        k.push(0.0);
        k.push(horizon);
        k.retain(|&t| (0.0..=horizon).contains(&t));
        k.sort_by(f64::total_cmp);
        k.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * horizon.max(1.0));
        k
    }
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::Range(format!("R must lie in (0, 1], got {r}")))
    }
}

/// `f_R(t) = K(μn_t/λ_t)^q(1/h + 1/R + |φ_t|²)`.
pub fn rate_f(c: &BoundConstants, r: f64, p: &Profiles, t: f64) -> f64 {
    let phi = p.phi.at(t);
    c.weight(p.n.at(t), p.lambda.at(t)) * (1.0 / c.h + 1.0 / r + phi * phi)
}

/// `g_R(t) = (1/K)(λ_t/(μn_t))^q(1/R + |φ_t|²)`.
pub fn rate_g(c: &BoundConstants, r: f64, p: &Profiles, t: f64) -> f64 {
    let phi = p.phi.at(t);
    c.inverse_weight(p.n.at(t), p.lambda.at(t)) * (1.0 / r + phi * phi)
}

/// Knots `t₀ = 0 < t₁ < …` with unit rate integral on each complete interval.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    /// Knots including `0`; ends with `T` when the last interval is incomplete.
    pub knots: Vec<f64>,
    /// Rate integral on each interval (1 except possibly the last).
    pub integrals: Vec<f64>,
    /// `N(T)`: number of complete intervals.
    pub complete: usize,
    /// Whether an incomplete tail interval `[t_N, T]` was appended.
    pub has_tail: bool,
}

impl GridSpec {
    /// Interval count with the tail convention `t_{N(T)} = T`.
    pub fn count_with_tail(&self) -> usize {
        self.complete + usize::from(self.has_tail)
    }

    pub fn total_integral(&self) -> f64 {
        self.integrals.iter().sum()
    }
}

/// Target accuracy of grid integrals and knot positions.
pub const GRID_TOL: f64 = 1e-10;

fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    if b <= a {
        return 0.0;
    }
    let whole = double_exponential::integrate(f, a, b, tol).integral;
    if depth == 0 {
        return whole;
    }
    let m = 0.5 * (a + b);
    let left = double_exponential::integrate(f, a, m, 0.5 * tol).integral;
    let right = double_exponential::integrate(f, m, b, 0.5 * tol).integral;
    if (left + right - whole).abs() <= tol {
        left + right
    } else {
        integrate_adaptive(f, a, m, 0.5 * tol, depth - 1)
            + integrate_adaptive(f, m, b, 0.5 * tol, depth - 1)
    }
}

const QUAD_TOL: f64 = 1e-13;
// an interval whose mass is within this of 1 counts as complete
const UNIT_SLACK: f64 = 1e-11;
const QUAD_DEPTH: u32 = 24;

/// Builds the unit-integral grid of a nonnegative rate on `[0, horizon]`.
///
/// `breakpoints` should list the discontinuities of `rate`; integration never crosses
/// them.
pub fn build_grid(
    rate: &dyn Fn(f64) -> f64,
    horizon: f64,
    breakpoints: &[f64],
) -> Result<GridSpec> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Range(format!("horizon must be finite and ≥ 0, got {horizon}")));
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .cloned()
        .filter(|&t| t > 0.0 && t < horizon)
        .collect();
    cuts.push(0.0);
    cuts.push(horizon);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces: Vec<f64> = cuts
        .windows(2)
        .map(|w| integrate_adaptive(rate, w[0], w[1], QUAD_TOL, QUAD_DEPTH))
        .collect();

    // zero mass on a trailing run of pieces means the grid can never reach T
    let mut zero_from = None;
    for i in (0..pieces.len()).rev() {
        if pieces[i] > 0.0 {
            break;
        }
        zero_from = Some(cuts[i]);
    }
    if let Some(from) = zero_from {
        return Err(Error::DegenerateRate { from });
    }

    let mut knots = vec![0.0];
    let mut integrals = Vec::new();
    let mut piece = 0;
    let mut t = 0.0;
    loop {
        // accumulate whole pieces from t until the unit is crossed
        let mut acc = 0.0;
        let mut p = piece;
        let mut start = t;
        let mut hit = None;
        while p < pieces.len() {
            let end = cuts[p + 1];
            let mass = if start == cuts[p] {
                pieces[p]
            } else {
                integrate_adaptive(rate, start, end, QUAD_TOL, QUAD_DEPTH)
            };
            if acc + mass >= 1.0 - UNIT_SLACK {
                let need = 1.0 - acc;
                let (a, b) = (start, end);
                let g = |s: f64| integrate_adaptive(rate, a, s, QUAD_TOL, QUAD_DEPTH) - need;
                let mut conv = SimpleConvergency {
                    eps: 1e-13,
                    max_iter: 400,
                };
                let s = if mass <= need + UNIT_SLACK {
                    b
                } else {
                    find_root_brent(a, b, g, &mut conv)
                        .map_err(|_| Error::StepFailure { t0: a, t1: b })?
                };
                hit = Some((s, p));
                break;
            }
            acc += mass;
            p += 1;
            if p < pieces.len() {
                start = cuts[p];
            }
        }
        match hit {
            Some((s, p)) => {
                knots.push(s);
                integrals.push(1.0);
                t = s;
                piece = if s >= cuts[p + 1] { p + 1 } else { p };
                if piece >= pieces.len() {
                    return Ok(GridSpec {
                        complete: integrals.len(),
                        knots,
                        integrals,
                        has_tail: false,
                    });
                }
            }
            None => {
                let has_tail = t < horizon;
                if has_tail {
                    knots.push(horizon);
                    integrals.push(acc);
                }
                let complete = integrals.len() - usize::from(has_tail);
                return Ok(GridSpec {
                    knots,
                    integrals,
                    complete,
                    has_tail,
                });
            }
        }
    }
}

fn exponent(p: &Profiles, horizon: f64, pointwise: impl Fn(f64) -> f64) -> Result<f64> {
    if !(horizon >= 0.0) {
        return Err(Error::Range(format!("horizon must be ≥ 0, got {horizon}")));
    }
    for prof in [&p.n, &p.lambda, &p.phi] {
        if prof.horizon() < horizon * (1.0 - 1e-12) {
            return Err(Error::Range(format!(
                "profile covers [0, {}] but the horizon is {horizon}",
                prof.horizon()
            )));
        }
    }
    let k = p.breakpoints(horizon);
    Ok(k.windows(2)
        .map(|w| pointwise(0.5 * (w[0] + w[1])) * (w[1] - w[0]))
        .sum())
}

/// `∫₀^T f_R`.
pub fn lower_exponent(c: &BoundConstants, r: f64, p: &Profiles, horizon: f64) -> Result<f64> {
    check_r(r)?;
    exponent(p, horizon, |t| rate_f(c, r, p, t))
}

/// `∫₀^T g_R`.
pub fn upper_exponent(c: &BoundConstants, r: f64, p: &Profiles, horizon: f64) -> Result<f64> {
    check_r(r)?;
    exponent(p, horizon, |t| rate_g(c, r, p, t))
}

/// `exp(−∫₀^T f_R)`.
pub fn tube_lower_bound(c: &BoundConstants, r: f64, p: &Profiles, horizon: f64) -> Result<f64> {
    Ok((-lower_exponent(c, r, p, horizon)?).exp())
}

/// `exp(−∫₀^T g_R)`, valid only for `R ≤ R_*`.
pub fn tube_upper_bound(
    c: &BoundConstants,
    r: f64,
    p: &Profiles,
    horizon: f64,
    r_star: f64,
) -> Result<f64> {
    if r > r_star {
        return Err(Error::Validity { r, r_star });
    }
    Ok((-upper_exponent(c, r, p, horizon)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones() -> (BoundConstants, Profiles) {
        (BoundConstants::default(), Profiles::constant(1.0, 1.0, 1.0, 0.0).unwrap())
    }

    #[test]
    fn rate_examples() {
        let (c, p) = ones();
        assert_eq!(rate_f(&c, 1.0, &p, 0.3), 2.0);
        assert_eq!(rate_g(&c, 1.0, &p, 0.3), 1.0);
        let c2 = BoundConstants { mu: 2.0, q: 2.0, ..c };
        assert!((rate_f(&c2, 1.0, &p, 0.3) - 8.0).abs() < 1e-15);

        let c = BoundConstants { k: 1.0, q: 1.0, mu: 2.0, h: 0.5 };
        let p = Profiles::constant(1.0, 3.0, 1.0, 1.0).unwrap();
        assert!((rate_f(&c, 0.1, &p, 0.5) - 78.0).abs() < 1e-12);
        let p0 = Profiles::constant(1.0, 3.0, 1.0, 0.0).unwrap();
        assert!((rate_g(&c, 0.1, &p0, 0.5) - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn g_has_no_h_term() {
        let p = Profiles::constant(1.0, 2.0, 0.5, 1.5).unwrap();
        let a = BoundConstants { h: 0.01, ..BoundConstants::default() };
        let b = BoundConstants { h: 100.0, ..BoundConstants::default() };
        assert_eq!(rate_g(&a, 0.3, &p, 0.2), rate_g(&b, 0.3, &p, 0.2));
        assert_ne!(rate_f(&a, 0.3, &p, 0.2), rate_f(&b, 0.3, &p, 0.2));
    }

    #[test]
    fn constant_rate_grid() {
        let g = build_grid(&|_| 4.0, 2.3, &[]).unwrap();
        assert_eq!(g.complete, 9);
        assert!(g.has_tail);
        for (i, k) in g.knots.iter().take(10).enumerate() {
            assert!((k - 0.25 * i as f64).abs() < 1e-10);
        }
        assert!((g.total_integral() - 9.2).abs() < 1e-9);
    }

    #[test]
    fn linear_rate_first_knot() {
        let g = build_grid(&|t| t, 2.0, &[]).unwrap();
        assert!((g.knots[1] - 2f64.sqrt()).abs() < 1e-10);
        assert_eq!(g.complete, 2);
        assert!(!g.has_tail);
    }

    #[test]
    fn spike_clusters_knots() {
        let rate = |t: f64| 2.0 + 200.0 * (-((t - 0.5) / 0.02).powi(2)).exp();
        let g = build_grid(&rate, 1.0, &[0.5]).unwrap();
        let spacing: Vec<(f64, f64)> = g.knots.windows(2).map(|w| (0.5 * (w[0] + w[1]), w[1] - w[0])).collect();
        let near = spacing.iter().filter(|(m, _)| (m - 0.5).abs() < 0.02).map(|s| s.1).fold(f64::MAX, f64::min);
        let far = spacing.iter().filter(|(m, _)| (m - 0.5).abs() > 0.2).map(|s| s.1).fold(0.0, f64::max);
        assert!(near * 10.0 < far);
        // interior integrals recomputed by a much finer midpoint rule
        for w in g.knots.windows(2).take(g.complete) {
            let n = 200_000;
            let h = (w[1] - w[0]) / n as f64;
            let s: f64 = (0..n).map(|i| rate(w[0] + (i as f64 + 0.5) * h)).sum::<f64>() * h;
            assert!((s - 1.0).abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn zero_suffix_is_degenerate() {
        let rate = |t: f64| if t < 1.5 { 1.0 } else { 0.0 };
        assert!(matches!(
            build_grid(&rate, 3.0, &[1.5]),
            Err(Error::DegenerateRate { from }) if (from - 1.5).abs() < 1e-12
        ));
    }

    #[test]
    fn bound_examples() {
        let (c, p) = ones();
        assert!((tube_lower_bound(&c, 1.0, &p, 1.0).unwrap() - (-2f64).exp()).abs() < 1e-15);
        assert!((tube_upper_bound(&c, 1.0, &p, 1.0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(tube_lower_bound(&c, 0.5, &p, 0.0).unwrap(), 1.0);
        assert!(matches!(
            tube_upper_bound(&c, 0.5, &p, 1.0, 0.2),
            Err(Error::Validity { .. })
        ));
        let lo = tube_lower_bound(&c, 0.2, &p, 1.0).unwrap();
        let hi = tube_lower_bound(&c, 0.4, &p, 1.0).unwrap();
        assert!(lo < hi);
    }
}
