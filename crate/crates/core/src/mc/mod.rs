//! Euler simulation of the Stratonovich equation in Itô form, tube probabilities,
//! rescaled short-time samples and the short-time escape estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Matrix2, Point2};
use crate::model::DiffusionModel;
use crate::norms::frame;
use crate::parallel::map_indexed;
use crate::skeleton::{skeleton_on_grid, Control};
use crate::taylor::{decompose, theta_from_segment, BrownianSegment, TaylorDecomposition, ThetaVector};

pub mod density;

pub use density::{density_fit, BandwidthFit, DensityFit};

/// Simulation parameters shared by every Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// `T` for tube runs, `δ` for short-time runs.
    pub horizon: f64,
    /// Worker threads; `None` uses the machine's parallelism.
    pub threads: Option<usize>,
}

/// Largest `dt/δ` accepted by the short-time estimators.
pub const SHORT_TIME_DT_RATIO: f64 = 1.0 / 50.0;

impl SimConfig {
    pub fn new(dt: f64, n_paths: usize, master_seed: u64, horizon: f64) -> Self {
        Self {
            dt,
            n_paths,
            master_seed,
            horizon,
            threads: None,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    fn validate_short_time(&self) -> Result<()> {
        self.validate()?;
        if self.horizon > 1.0 {
            return Err(Error::Config(format!("δ = {} exceeds 1", self.horizon)));
        }
        if self.dt > self.horizon * SHORT_TIME_DT_RATIO * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {} must not exceed δ/50 = {}",
                self.dt,
                self.horizon * SHORT_TIME_DT_RATIO
            )));
        }
        Ok(())
    }

    /// Number of Euler steps; the effective step is `horizon / steps ≤ dt`.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn effective_dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }
}

/// Independent stream for one path, keyed by `(master_seed, path_index)`.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Runs the Euler scheme, calling `visit(k, X_{t_k}, ΔW_{k-1})` after each step
/// `k = 1..=steps`. Stops early when `visit` returns `false`. Returns the exit time if the
/// path left the domain.
fn drive(
    model: &DiffusionModel,
    x0: Point2,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
    mut visit: impl FnMut(usize, Point2, f64) -> bool,
) -> Option<f64> {
    let sq = dt.sqrt();
    let sigma = model.sigma_field();
    let mut x = x0;
    for k in 1..=steps {
        let z: f64 = StandardNormal.sample(rng);
        let dw = sq * z;
        x = x + model.ito_drift_unchecked(x) * dt + sigma.value(x) * dw;
        if !model.domain().contains(x) || !x.is_finite() {
            return Some(k as f64 * dt);
        }
        if !visit(k, x, dw) {
            break;
        }
    }
    None
}

/// One simulated path with the Brownian increments that drove it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimPath {
    /// `X_{t_k}` for `t_k = k·dt`, starting at `x0`; truncated at a domain exit.
    pub points: Vec<Point2>,
    pub segment: BrownianSegment,
    pub exit_time: Option<f64>,
}

impl SimPath {
    pub fn end(&self) -> Point2 {
        *self.points.last().unwrap()
    }
}

/// Itô-corrected Euler–Maruyama path number `path_index`.
pub fn simulate_path(
    model: &DiffusionModel,
    x0: Point2,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<SimPath> {
    cfg.validate()?;
    model.check_point(x0)?;
    let steps = cfg.steps();
    let dt = cfg.effective_dt();
    let mut rng = path_rng(cfg.master_seed, path_index);
    let mut points = Vec::with_capacity(steps + 1);
    let mut inc = Vec::with_capacity(steps);
    points.push(x0);
    let exit_time = drive(model, x0, dt, steps, &mut rng, |_, x, dw| {
        points.push(x);
        inc.push(dw);
        true
    });
    if inc.is_empty() {
        inc.push(0.0);
    }
    Ok(SimPath {
        points,
        segment: BrownianSegment::new(dt, inc)?,
        exit_time,
    })
}

/// `n` independent `Θ` draws over `[0, δ]` with step `δ/steps`; draw `i` uses stream `i`.
pub fn theta_draws(
    delta: f64,
    steps: usize,
    n: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<ThetaVector>> {
    if !(delta > 0.0) || steps == 0 {
        return Err(Error::Config(format!("need δ > 0 and steps ≥ 1 (δ = {delta}, steps = {steps})")));
    }
    let dt = delta / steps as f64;
    let sq = dt.sqrt();
    map_indexed(threads, n, |i| {
        let mut rng = path_rng(master_seed, i as u64);
        let inc = (0..steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sq * z
            })
            .collect();
        BrownianSegment::new(dt, inc).map(|seg| theta_from_segment(&seg))
    })
    .into_iter()
    .collect()
}

/// Unbiased sample covariance.
pub fn sample_covariance(points: &[Point2]) -> Matrix2 {
    let n = points.len() as f64;
    let mean = points.iter().fold(Point2::ZERO, |a, &p| a + p) * (1.0 / n);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - mean;
        a += d.x1 * d.x1;
        b += d.x1 * d.x2;
        c += d.x2 * d.x2;
    }
    let k = 1.0 / (n - 1.0);
    Matrix2::from_rows(a * k, b * k, b * k, c * k)
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// Bins of the exit-time histogram.
pub const EXIT_BINS: usize = 20;

/// Monte Carlo estimate of the tube probability at one radius.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeResult {
    pub r: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// First-crossing times in [`EXIT_BINS`] equal bins over `[0, T]`.
    pub exit_time_histogram: Vec<u64>,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Config("at least one tube radius is required".into()));
    }
    for &r in radii {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Range(format!("tube radius must lie in (0, 1], got {r}")));
        }
    }
    Ok(())
}

/// Tube probabilities for several radii from one set of paths (common random numbers).
pub fn tube_probabilities(
    model: &DiffusionModel,
    x0: Point2,
    phi: &Control,
    radii: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<TubeResult>> {
    cfg.validate()?;
    check_radii(radii)?;
    let horizon = cfg.horizon;
    if phi.horizon() < horizon * (1.0 - 1e-12) {
        return Err(Error::Range(format!(
            "control horizon {} is shorter than T = {horizon}",
            phi.horizon()
        )));
    }
    let steps = cfg.steps();
    let dt = cfg.effective_dt();
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let skeleton = skeleton_on_grid(model, x0, phi, &times)?;
    let inverses: Vec<Matrix2> = skeleton
        .iter()
        .map(|&p| frame(model, p, 1.0).map(|f| f.inverse))
        .collect::<Result<_>>()?;
    let scales: Vec<(f64, f64)> = radii.iter().map(|&r| (1.0 / r, 1.0 / (r * r * r))).collect();

    let outcomes: Vec<Vec<Option<f64>>> = map_indexed(cfg.threads, cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.master_seed, i as u64);
        let mut first: Vec<Option<f64>> = vec![None; radii.len()];
        let mut alive = radii.len();
        let exit = drive(model, x0, dt, steps, &mut rng, |k, x, _| {
            let u = inverses[k].mul_vec(x - skeleton[k]);
            let (a, b) = (u.x1 * u.x1, u.x2 * u.x2);
            for (j, &(s1, s3)) in scales.iter().enumerate() {
                if first[j].is_none() && a * s1 + b * s3 > 1.0 {
                    first[j] = Some(times[k]);
                    alive -= 1;
                }
            }
            alive > 0
        });
        if let Some(t) = exit {
            for f in first.iter_mut().filter(|f| f.is_none()) {
                *f = Some(t);
            }
        }
        first
    });

    Ok(radii
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let mut hist = vec![0u64; EXIT_BINS];
            let mut inside = 0usize;
            for o in &outcomes {
                match o[j] {
                    None => inside += 1,
                    Some(t) => {
                        let b = ((t / horizon) * EXIT_BINS as f64) as usize;
                        hist[b.min(EXIT_BINS - 1)] += 1;
                    }
                }
            }
            let (ci_low, ci_high) = wilson_interval(inside, cfg.n_paths);
            TubeResult {
                r,
                p_hat: inside as f64 / cfg.n_paths as f64,
                ci_low,
                ci_high,
                n_paths: cfg.n_paths,
                seed: cfg.master_seed,
                exit_time_histogram: hist,
            }
        })
        .collect())
}

/// `P(sup_{t≤T}|X_t − x_t(φ)|_{A_R(x_t(φ))} ≤ 1)`, monitored at every step.
pub fn tube_probability(
    model: &DiffusionModel,
    x0: Point2,
    phi: &Control,
    r: f64,
    cfg: &SimConfig,
) -> Result<TubeResult> {
    Ok(tube_probabilities(model, x0, phi, &[r], cfg)?.remove(0))
}

/// Short-time samples of `F = Ā_δ⁻¹(X_δ − x̂)` and of the principal part `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledSamples {
    pub f: Vec<Point2>,
    pub g: Vec<Point2>,
    pub remainder: Vec<Point2>,
    /// Paths dropped because they left the domain before `δ`.
    pub exits: usize,
}

/// Draws `n_paths` decompositions at `δ = cfg.horizon`.
pub fn short_time_decompositions(
    model: &DiffusionModel,
    x: Point2,
    cfg: &SimConfig,
) -> Result<Vec<Option<TaylorDecomposition>>> {
    cfg.validate_short_time()?;
    model.check_point(x)?;
    let steps = cfg.steps();
    let dt = cfg.effective_dt();
    // fail early on a singular frame
    crate::norms::frame_bar(model, x, cfg.horizon)?;
    let out: Vec<Result<Option<TaylorDecomposition>>> = map_indexed(cfg.threads, cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.master_seed, i as u64);
        let mut inc = Vec::with_capacity(steps);
        let mut end = x;
        let exit = drive(model, x, dt, steps, &mut rng, |_, p, dw| {
            inc.push(dw);
            end = p;
            true
        });
        if exit.is_some() {
            return Ok(None);
        }
        let seg = BrownianSegment::new(dt, inc)?;
        decompose(model, x, &seg, end).map(Some)
    });
    out.into_iter().collect()
}

/// Samples of `F`, `G` and `R̃_δ` at `δ = cfg.horizon`.
pub fn rescaled_samples(model: &DiffusionModel, x: Point2, cfg: &SimConfig) -> Result<RescaledSamples> {
    let decs = short_time_decompositions(model, x, cfg)?;
    let mut s = RescaledSamples {
        f: Vec::with_capacity(decs.len()),
        g: Vec::with_capacity(decs.len()),
        remainder: Vec::with_capacity(decs.len()),
        exits: 0,
    };
    for d in decs {
        match d {
            Some(d) => {
                s.f.push(d.rescaled());
                s.g.push(d.principal);
                s.remainder.push(d.remainder);
            }
            None => s.exits += 1,
        }
    }
    Ok(s)
}

/// Escape probability estimate with its Wilson interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EscapeResult {
    pub r: f64,
    pub threshold: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
}

/// `P(sup_{t≤δ}|X_t − (x + b(x)t)|_{A_R(x)} ≥ threshold)` with `δ = cfg.horizon`.
pub fn short_time_escape(
    model: &DiffusionModel,
    x: Point2,
    r: f64,
    threshold: f64,
    cfg: &SimConfig,
) -> Result<EscapeResult> {
    cfg.validate_short_time()?;
    let delta = cfg.horizon;
    if r < delta || r > 1.0 {
        return Err(Error::Range(format!("need δ ≤ R ≤ 1 (R = {r}, δ = {delta})")));
    }
    if threshold.is_infinite() && threshold > 0.0 {
        return Ok(EscapeResult {
            r,
            threshold,
            p_hat: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            n_paths: cfg.n_paths,
        });
    }
    let fr = frame(model, x, r)?;
    let b = model.drift(x)?;
    let steps = cfg.steps();
    let dt = cfg.effective_dt();
    let escaped: Vec<bool> = map_indexed(cfg.threads, cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.master_seed, i as u64);
        let mut hit = false;
        let exit = drive(model, x, dt, steps, &mut rng, |k, p, _| {
            let centre = x + b * (k as f64 * dt);
            hit = fr.norm(p - centre) >= threshold;
            !hit
        });
        hit || exit.is_some()
    });
    let k = escaped.iter().filter(|&&e| e).count();
    let (ci_low, ci_high) = wilson_interval(k, cfg.n_paths);
    Ok(EscapeResult {
        r,
        threshold,
        p_hat: k as f64 / cfg.n_paths as f64,
        ci_low,
        ci_high,
        n_paths: cfg.n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{asian, DiffusionModel, Domain, Monomial, PolyField, Polynomial};
    use crate::skeleton::solve_skeleton;
    use std::sync::Arc;

    #[test]
    fn zero_noise_follows_drift_flow() {
        let drift = PolyField::new(Polynomial::zero(), Polynomial::new(vec![Monomial::new(1.0, 1, 0)]));
        let m = DiffusionModel::new(
            "quiet",
            Arc::new(PolyField::default()),
            Arc::new(drift),
            Domain::new((-10.0, 10.0), (-10.0, 10.0)),
        );
        let cfg = SimConfig::new(1e-3, 1, 5, 1.0);
        let x0 = Point2::new(1.0, 0.0);
        let p = simulate_path(&m, x0, &cfg, 0).unwrap();
        let s = solve_skeleton(&m, x0, &Control::zero(1.0).unwrap(), 4).unwrap();
        assert!((p.end() - s.end()).norm() < 1e-3);
    }

    #[test]
    fn paths_are_reproducible() {
        let m = asian();
        let cfg = SimConfig::new(1e-3, 1, 42, 0.5);
        let a = simulate_path(&m, Point2::new(1.0, 0.0), &cfg, 7).unwrap();
        let b = simulate_path(&m, Point2::new(1.0, 0.0), &cfg, 7).unwrap();
        let c = simulate_path(&m, Point2::new(1.0, 0.0), &cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.end(), c.end());
    }

    #[test]
    fn zero_paths_is_config_error() {
        let m = asian();
        let cfg = SimConfig::new(1e-3, 0, 1, 1.0);
        let phi = Control::zero(1.0).unwrap();
        assert!(matches!(
            tube_probability(&m, Point2::new(1.0, 0.0), &phi, 0.4, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn wilson_brackets_estimate() {
        for (k, n) in [(0, 10), (5, 10), (10, 10), (3, 1000)] {
            let (lo, hi) = wilson_interval(k, n);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi);
        }
    }

    #[test]
    fn escape_infinite_threshold() {
        let m = asian();
        let cfg = SimConfig::new(1e-4, 10, 1, 0.01);
        let e = short_time_escape(&m, Point2::new(1.0, 1.0), 0.1, f64::INFINITY, &cfg).unwrap();
        assert_eq!(e.p_hat, 0.0);
    }

    #[test]
    fn short_time_requires_fine_step() {
        let m = asian();
        let cfg = SimConfig::new(1e-3, 10, 1, 0.01);
        assert!(matches!(
            rescaled_samples(&m, Point2::new(1.0, 1.0), &cfg),
            Err(Error::Config(_))
        ));
    }
}
