//! Randomized checks of the matrix-norm inequalities used by the tube argument.
//!
//! Each suite draws its cases from a seeded ChaCha stream over the model's reference
//! region and reports the number of violations and the worst empirical constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::Point2;
use crate::model::DiffusionModel;
use crate::norms::{eig_bounds, frame, frame_bar};

/// Relative slack for floating-point comparisons in the suites.
const SLACK: f64 = 1e-10;

/// Outcome of one randomized inequality suite.
#[derive(Clone, Debug, PartialEq)]
pub struct LemmaReport {
    pub name: &'static str,
    pub cases: usize,
    pub violations: usize,
    /// Worst observed constant (meaning depends on the suite).
    pub worst: f64,
    /// Bound the constant is compared against.
    pub limit: f64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Parameters of the base-point stability suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalityParams {
    pub delta_star: f64,
    pub rho: f64,
}

impl Default for LocalityParams {
    fn default() -> Self {
        Self {
            delta_star: 0.1,
            rho: 0.5,
        }
    }
}

/// Largest `δ` used by the frame comparison suite.
pub const FRAME_DELTA_MAX: f64 = 0.1;
/// Constant the frame comparison must stay under.
pub const FRAME_CONSTANT_LIMIT: f64 = 8.0;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn random_point(rng: &mut ChaCha8Rng, model: &DiffusionModel) -> Point2 {
    let r = model.reference_region();
    Point2::new(
        rng.gen_range(r.lo.x1..=r.hi.x1),
        rng.gen_range(r.lo.x2..=r.hi.x2),
    )
}

fn random_vector(rng: &mut ChaCha8Rng) -> Point2 {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let mag = log_uniform(rng, 1e-4, 1e2);
    Point2::new(angle.cos(), angle.sin()) * mag
}

/// `(R/R')^{3/2}|ξ|_{A_R} ≤ |ξ|_{A_{R'}} ≤ (R/R')^{1/2}|ξ|_{A_R}` for `R ≤ R'`.
pub fn scaling_sandwich(model: &DiffusionModel, cases: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let x = random_point(&mut rng, model);
        let (a, b) = (log_uniform(&mut rng, 1e-4, 1.0), log_uniform(&mut rng, 1e-4, 1.0));
        let (r, r2) = (a.min(b), a.max(b));
        let xi = random_vector(&mut rng);
        let n_r = frame(model, x, r)?.norm(xi);
        let n_r2 = frame(model, x, r2)?.norm(xi);
        let q = r / r2;
        let lower = q.powf(1.5) * n_r;
        let upper = q.sqrt() * n_r;
        if n_r2 < lower * (1.0 - SLACK) || n_r2 > upper * (1.0 + SLACK) {
            violations += 1;
        }
        // how far inside the sandwich the value sits, as a ratio ≥ 1 when valid
        worst = worst.max(n_r2 / upper).max(lower / n_r2);
    }
    Ok(LemmaReport {
        name: "scaling-sandwich",
        cases,
        violations,
        worst,
        limit: 1.0,
    })
}

/// `|ξ|/(R^{1/2}λ^*(A)^{1/2}) ≤ |ξ|_{A_R} ≤ |ξ|/(R^{3/2}λ_*(A)^{1/2})`.
pub fn euclidean_comparison(
    model: &DiffusionModel,
    cases: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let x = random_point(&mut rng, model);
        let r = log_uniform(&mut rng, 1e-4, 1.0);
        let xi = random_vector(&mut rng);
        let (lo, hi) = eig_bounds(&model.a_matrix(x)?);
        let n = frame(model, x, r)?.norm(xi);
        let lower = xi.norm() / (r.sqrt() * hi.sqrt());
        let upper = xi.norm() / (r.powf(1.5) * lo.sqrt());
        if n < lower * (1.0 - SLACK) || n > upper * (1.0 + SLACK) {
            violations += 1;
        }
        worst = worst.max(n / upper).max(lower / n);
    }
    Ok(LemmaReport {
        name: "euclidean-comparison",
        cases,
        violations,
        worst,
        limit: 1.0,
    })
}

/// Norms under `A_δ(x)`, `Ā_δ(x)` and `A_δ(x̂)` agree within a factor `C ≤ 8` for `δ ≤ 0.1`.
pub fn frame_comparison(model: &DiffusionModel, cases: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 1.0f64;
    let mut violations = 0;
    for _ in 0..cases {
        let x = random_point(&mut rng, model);
        let d = log_uniform(&mut rng, 1e-4, FRAME_DELTA_MAX);
        let xi = random_vector(&mut rng);
        let xhat = x + model.drift(x)? * d;
        let norms = [
            frame(model, x, d)?.norm(xi),
            frame_bar(model, x, d)?.norm(xi),
            frame(model, xhat, d)?.norm(xi),
        ];
        let hi = norms.iter().cloned().fold(f64::MIN, f64::max);
        let lo = norms.iter().cloned().fold(f64::MAX, f64::min);
        let c = hi / lo;
        if c > FRAME_CONSTANT_LIMIT {
            violations += 1;
        }
        worst = worst.max(c);
    }
    Ok(LemmaReport {
        name: "frame-comparison",
        cases,
        violations,
        worst,
        limit: FRAME_CONSTANT_LIMIT,
    })
}

/// `¼|ξ|_{A_δ(x)} ≤ |ξ|_{A_δ(y)} ≤ 4|ξ|_{A_δ(x)}` whenever `|x − y|_{A_δ(x)} ≤ ρ`, `δ ≤ δ*`.
pub fn base_point_stability(
    model: &DiffusionModel,
    cases: usize,
    seed: u64,
    params: LocalityParams,
) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 1.0f64;
    let mut violations = 0;
    let mut done = 0;
    while done < cases {
        let x = random_point(&mut rng, model);
        let d = log_uniform(&mut rng, 1e-4, params.delta_star);
        let fx = frame(model, x, d)?;
        // y = x + A_δ(x)u with |u| ≤ ρ
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let radius = params.rho * rng.gen::<f64>().sqrt();
        let u = Point2::new(angle.cos(), angle.sin()) * radius;
        let y = x + fx.matrix.mul_vec(u);
        if !model.domain().contains(y) {
            continue;
        }
        let xi = random_vector(&mut rng);
        let ratio = frame(model, y, d)?.norm(xi) / fx.norm(xi);
        if !(0.25..=4.0).contains(&ratio) {
            violations += 1;
        }
        worst = worst.max(ratio).max(1.0 / ratio);
        done += 1;
    }
    Ok(LemmaReport {
        name: "base-point-stability",
        cases,
        violations,
        worst,
        limit: 4.0,
    })
}

/// All four suites with the same case count; seeds are derived from `seed`.
pub fn run_all(
    model: &DiffusionModel,
    cases: usize,
    seed: u64,
    params: LocalityParams,
) -> Result<Vec<LemmaReport>> {
    Ok(vec![
        scaling_sandwich(model, cases, seed)?,
        euclidean_comparison(model, cases, seed.wrapping_add(1))?,
        frame_comparison(model, cases, seed.wrapping_add(2))?,
        base_point_stability(model, cases, seed.wrapping_add(3), params)?,
    ])
}
