//! Diffusion coefficients, Lie brackets and the hypothesis checks.
//!
//! A [`DiffusionModel`] carries the noise field `σ`, the drift `b`, the bound functions
//! `n(x)` and `λ(x)` and an axis-aligned box of validity. Every model evaluation that takes
//! a point checks it against the box; the free functions [`directional_derivative`] and
//! [`lie_bracket`] work on bare fields and do not.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
pub use crate::geometry::{apply_bilinear, Bilinear2, Matrix2, Point2, Trilinear2};

/// A smooth vector field on the plane with analytic derivatives.
pub trait VectorField: Send + Sync {
    fn value(&self, x: Point2) -> Point2;

    /// `J[k][i] = ∂_i f^k`, i.e. row = component, column = variable.
    fn jacobian(&self, x: Point2) -> Matrix2;

    fn hessian(&self, x: Point2) -> Bilinear2;

    /// Third derivative, when the field provides one.
    fn third(&self, _x: Point2) -> Option<Trilinear2> {
        None
    }
}

/// `∂_g f(x) = ∇f(x) g(x)`.
pub fn directional_derivative(f: &dyn VectorField, g: &dyn VectorField, x: Point2) -> Point2 {
    f.jacobian(x).mul_vec(g.value(x))
}

/// `[f, g](x) = ∂_g f(x) − ∂_f g(x)`.
pub fn lie_bracket(f: &dyn VectorField, g: &dyn VectorField, x: Point2) -> Point2 {
    directional_derivative(f, g, x) - directional_derivative(g, f, x)
}

/// Central finite-difference Jacobian, for cross-checks only.
pub fn fd_jacobian(f: &dyn VectorField, x: Point2) -> Matrix2 {
    let h1 = 1e-6 * x.x1.abs().max(1.0);
    let h2 = 1e-6 * x.x2.abs().max(1.0);
    let d1 = (f.value(x + Point2::new(h1, 0.0)) - f.value(x - Point2::new(h1, 0.0))) * (0.5 / h1);
    let d2 = (f.value(x + Point2::new(0.0, h2)) - f.value(x - Point2::new(0.0, h2))) * (0.5 / h2);
    Matrix2::from_columns(d1, d2)
}

/// Relative discrepancy between the analytic and the finite-difference Jacobian.
pub fn jacobian_discrepancy(f: &dyn VectorField, x: Point2) -> f64 {
    let exact = f.jacobian(x);
    let approx = fd_jacobian(f, x);
    (exact - approx).frobenius_sq().sqrt() / exact.frobenius_sq().sqrt().max(1.0)
}

/// One term `coef · x1^p1 · x2^p2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub p1: u32,
    pub p2: u32,
}

impl Monomial {
    pub const fn new(coef: f64, p1: u32, p2: u32) -> Self {
        Self { coef, p1, p2 }
    }
}

fn falling(p: u32, d: u32) -> f64 {
    (0..d).map(|k| (p - k) as f64).product()
}

/// Bivariate polynomial with exact partial derivatives of any order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn eval(&self, x: Point2) -> f64 {
        self.partial(0, 0, x)
    }

    /// `∂^{d1}_{x1} ∂^{d2}_{x2}` evaluated at `x`.
    pub fn partial(&self, d1: u32, d2: u32, x: Point2) -> f64 {
        self.terms
            .iter()
            .filter(|m| m.p1 >= d1 && m.p2 >= d2)
            .map(|m| {
                m.coef
                    * falling(m.p1, d1)
                    * falling(m.p2, d2)
                    * x.x1.powi((m.p1 - d1) as i32)
                    * x.x2.powi((m.p2 - d2) as i32)
            })
            .sum()
    }
}

/// Vector field whose two components are polynomials.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolyField {
    pub components: [Polynomial; 2],
}

impl PolyField {
    pub fn new(c1: Polynomial, c2: Polynomial) -> Self {
        Self {
            components: [c1, c2],
        }
    }

    fn partials(&self, d1: u32, d2: u32, x: Point2) -> Point2 {
        Point2::new(
            self.components[0].partial(d1, d2, x),
            self.components[1].partial(d1, d2, x),
        )
    }

    fn second_matrix(&self, k: usize, extra: (u32, u32), x: Point2) -> Matrix2 {
        let p = &self.components[k];
        let (e1, e2) = extra;
        Matrix2::from_rows(
            p.partial(2 + e1, e2, x),
            p.partial(1 + e1, 1 + e2, x),
            p.partial(1 + e1, 1 + e2, x),
            p.partial(e1, 2 + e2, x),
        )
    }
}

impl VectorField for PolyField {
    fn value(&self, x: Point2) -> Point2 {
        self.partials(0, 0, x)
    }

    fn jacobian(&self, x: Point2) -> Matrix2 {
        Matrix2::from_columns(self.partials(1, 0, x), self.partials(0, 1, x))
    }

    fn hessian(&self, x: Point2) -> Bilinear2 {
        [
            self.second_matrix(0, (0, 0), x),
            self.second_matrix(1, (0, 0), x),
        ]
    }

    fn third(&self, x: Point2) -> Option<Trilinear2> {
        let t = |k| {
            [
                self.second_matrix(k, (1, 0), x),
                self.second_matrix(k, (0, 1), x),
            ]
        };
        Some([t(0), t(1)])
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: Point2,
    pub hi: Point2,
}

impl Domain {
    pub fn new(x1: (f64, f64), x2: (f64, f64)) -> Self {
        Self {
            lo: Point2::new(x1.0, x2.0),
            hi: Point2::new(x1.1, x2.1),
        }
    }

    pub fn contains(&self, x: Point2) -> bool {
        x.is_finite()
            && (self.lo.x1..=self.hi.x1).contains(&x.x1)
            && (self.lo.x2..=self.hi.x2).contains(&x.x2)
    }

    /// Uniform `n × n` grid of cell centres.
    pub fn grid(&self, n: usize) -> Vec<Point2> {
        let w = self.hi - self.lo;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(Point2::new(
                    self.lo.x1 + w.x1 * (i as f64 + 0.5) / n as f64,
                    self.lo.x2 + w.x2 * (j as f64 + 0.5) / n as f64,
                ));
            }
        }
        out
    }
}

/// `κ_σ(x)` together with `∂_σ κ_σ(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kappa {
    pub value: f64,
    pub along_sigma: f64,
}

pub type ScalarFn = Arc<dyn Fn(Point2) -> f64 + Send + Sync>;
pub type KappaFn = Arc<dyn Fn(Point2) -> Kappa + Send + Sync>;

/// Sum of the Euclidean norms of all partial derivatives of order 0 to 3.
pub fn derivative_mass(f: &dyn VectorField, x: Point2) -> f64 {
    let j = f.jacobian(x);
    let h = f.hessian(x);
    let mut total = f.value(x).norm() + j.cols[0].norm() + j.cols[1].norm();
    let comp = |m: [f64; 2]| Point2::new(m[0], m[1]).norm();
    // ∂11, ∂12, ∂22
    total += comp([h[0].get(0, 0), h[1].get(0, 0)]);
    total += comp([h[0].get(0, 1), h[1].get(0, 1)]);
    total += comp([h[0].get(1, 1), h[1].get(1, 1)]);
    if let Some(t) = f.third(x) {
        // ∂111, ∂112, ∂122, ∂222
        total += comp([t[0][0].get(0, 0), t[1][0].get(0, 0)]);
        total += comp([t[0][0].get(0, 1), t[1][0].get(0, 1)]);
        total += comp([t[0][0].get(1, 1), t[1][0].get(1, 1)]);
        total += comp([t[0][1].get(1, 1), t[1][1].get(1, 1)]);
    }
    total
}

/// `κ_σ` and `∂_σ κ_σ` recovered from the derivative tensors of `σ`, assuming H3 holds.
pub fn kappa_from_derivatives(sigma: &dyn VectorField, x: Point2) -> Kappa {
    let s = sigma.value(x);
    let j = sigma.jacobian(x);
    let ss = j.mul_vec(s);
    let sss = apply_bilinear(&sigma.hessian(x), s, s) + j.mul_vec(ss);
    let n2 = s.norm_sq();
    let value = ss.dot(s) / n2;
    Kappa {
        value,
        along_sigma: sss.dot(s) / n2 - value * value,
    }
}

/// Diffusion `dX = σ(X)∘dW + b(X)dt` in the plane with a scalar Brownian driver.
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    sigma: Arc<dyn VectorField>,
    drift: Arc<dyn VectorField>,
    kappa: Option<KappaFn>,
    n_bound: ScalarFn,
    lambda_bound: ScalarFn,
    domain: Domain,
    reference_region: Domain,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("h3", &self.kappa.is_some())
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    /// New model with the default bound functions: `n(x)` from the derivative tensors and
    /// `λ(x) = min(1, λ_*(A(x)A(x)ᵀ))`.
    pub fn new(
        name: impl Into<String>,
        sigma: Arc<dyn VectorField>,
        drift: Arc<dyn VectorField>,
        domain: Domain,
    ) -> Self {
        let (s, b) = (sigma.clone(), drift.clone());
        let n_bound: ScalarFn = Arc::new(move |x| {
            (derivative_mass(s.as_ref(), x) + derivative_mass(b.as_ref(), x)).max(1.0)
        });
        let (s, b) = (sigma.clone(), drift.clone());
        let lambda_bound: ScalarFn = Arc::new(move |x| {
            let a = Matrix2::from_columns(s.value(x), lie_bracket(b.as_ref(), s.as_ref(), x));
            a.gram_eigenvalues().0.min(1.0)
        });
        Self {
            name: name.into(),
            sigma,
            drift,
            kappa: None,
            n_bound,
            lambda_bound,
            domain,
            reference_region: domain,
        }
    }

    pub fn with_kappa(mut self, kappa: KappaFn) -> Self {
        self.kappa = Some(kappa);
        self
    }

    /// Declares H3 and derives `κ_σ`, `∂_σκ_σ` from the analytic derivatives of `σ`.
    pub fn with_kappa_from_derivatives(self) -> Self {
        let s = self.sigma.clone();
        self.with_kappa(Arc::new(move |x| kappa_from_derivatives(s.as_ref(), x)))
    }

    pub fn with_n_bound(mut self, f: ScalarFn) -> Self {
        self.n_bound = f;
        self
    }

    pub fn with_lambda_bound(mut self, f: ScalarFn) -> Self {
        self.lambda_bound = f;
        self
    }

    pub fn with_constant_bounds(self, n: f64, lambda: f64) -> Self {
        self.with_n_bound(Arc::new(move |_| n))
            .with_lambda_bound(Arc::new(move |_| lambda))
    }

    /// Region sampled by the randomized norm checks.
    pub fn with_reference_region(mut self, region: Domain) -> Self {
        self.reference_region = region;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn reference_region(&self) -> &Domain {
        &self.reference_region
    }

    pub fn sigma_field(&self) -> &dyn VectorField {
        self.sigma.as_ref()
    }

    pub fn drift_field(&self) -> &dyn VectorField {
        self.drift.as_ref()
    }

    pub fn has_h3(&self) -> bool {
        self.kappa.is_some()
    }

    pub fn check_point(&self, x: Point2) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(x))
        }
    }

    pub fn sigma(&self, x: Point2) -> Result<Point2> {
        self.check_point(x)?;
        Ok(self.sigma.value(x))
    }

    pub fn drift(&self, x: Point2) -> Result<Point2> {
        self.check_point(x)?;
        Ok(self.drift.value(x))
    }

    /// `[b, σ](x)`.
    pub fn bracket(&self, x: Point2) -> Result<Point2> {
        self.check_point(x)?;
        Ok(lie_bracket(self.drift.as_ref(), self.sigma.as_ref(), x))
    }

    /// `∂_b σ(x)`.
    pub fn d_b_sigma(&self, x: Point2) -> Result<Point2> {
        self.check_point(x)?;
        Ok(directional_derivative(self.sigma.as_ref(), self.drift.as_ref(), x))
    }

    /// `∂_σ b(x)`.
    pub fn d_sigma_b(&self, x: Point2) -> Result<Point2> {
        self.check_point(x)?;
        Ok(directional_derivative(self.drift.as_ref(), self.sigma.as_ref(), x))
    }

    /// `∂_σ σ(x)`.
    pub fn d_sigma_sigma(&self, x: Point2) -> Result<Point2> {
        self.check_point(x)?;
        Ok(directional_derivative(self.sigma.as_ref(), self.sigma.as_ref(), x))
    }

    /// `A(x) = (σ(x), [b,σ](x))`.
    pub fn a_matrix(&self, x: Point2) -> Result<Matrix2> {
        Ok(Matrix2::from_columns(self.sigma(x)?, self.bracket(x)?))
    }

    /// Itô drift `b + ½∂_σσ` of the Stratonovich equation. No domain check: used inside
    /// the simulation loop, which checks the domain itself.
    pub fn ito_drift_unchecked(&self, x: Point2) -> Point2 {
        let s = self.sigma.value(x);
        self.drift.value(x) + self.sigma.jacobian(x).mul_vec(s) * 0.5
    }

    pub fn kappa(&self, x: Point2) -> Result<Option<Kappa>> {
        self.check_point(x)?;
        Ok(self.kappa.as_ref().map(|k| k(x)))
    }

    pub fn n_bound(&self, x: Point2) -> Result<f64> {
        self.check_point(x)?;
        Ok((self.n_bound)(x))
    }

    pub fn lambda_bound(&self, x: Point2) -> Result<f64> {
        self.check_point(x)?;
        Ok((self.lambda_bound)(x))
    }
}

/// Fitted `κ_σ` at one sample point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaSample {
    pub point: Point2,
    pub kappa: f64,
    /// Sine of the angle between `∂_σσ` and `σ`.
    pub sine: f64,
}

/// Checks `∂_σσ(x) = κ_σ(x)σ(x)` at every sample. When the model declares `κ_σ`, the
/// declared value must also match the fitted one.
pub fn check_h3(
    model: &DiffusionModel,
    points: &[Point2],
    tol: f64,
) -> Result<Vec<KappaSample>> {
    let mut report = Vec::with_capacity(points.len());
    let mut bad = Vec::new();
    for &x in points {
        let s = model.sigma(x)?;
        let ss = model.d_sigma_sigma(x)?;
        let s_norm = s.norm();
        if s_norm == 0.0 {
            return Err(Error::SingularSigma(x));
        }
        let ss_norm = ss.norm();
        let sine = if ss_norm == 0.0 {
            0.0
        } else {
            (ss.x1 * s.x2 - ss.x2 * s.x1).abs() / (ss_norm * s_norm)
        };
        let kappa = ss.dot(s) / (s_norm * s_norm);
        let mut ok = sine <= tol;
        if let Some(declared) = model.kappa(x)? {
            let resid = (ss - s * declared.value).norm();
            ok &= resid <= tol * ss_norm.max(s_norm);
        }
        if !ok {
            bad.push(x);
        }
        report.push(KappaSample {
            point: x,
            kappa,
            sine,
        });
    }
    if bad.is_empty() {
        Ok(report)
    } else {
        Err(Error::H3Violated { points: bad })
    }
}

/// Sup of `n` and inf of `λ` over the unit ball around one path point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    pub point: Point2,
    pub n_max: f64,
    pub lambda_min: f64,
}

/// Number of points of the unit-ball sampling pattern (centre excluded).
pub const BALL_SAMPLES: usize = 96;

/// Deterministic low-discrepancy pattern filling the open unit disk (Vogel spiral) plus
/// its centre.
pub fn unit_ball_pattern() -> Vec<Point2> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut pts = vec![Point2::ZERO];
    pts.extend((0..BALL_SAMPLES).map(|i| {
        let r = ((i as f64 + 0.5) / BALL_SAMPLES as f64).sqrt();
        let a = golden * i as f64;
        Point2::new(r * a.cos(), r * a.sin())
    }));
    pts
}

/// Local `(n_t, λ_t)` table along a path, as required by H1/H2.
pub fn hypothesis_profile(model: &DiffusionModel, path: &[Point2]) -> Result<Vec<ProfilePoint>> {
    let pattern = unit_ball_pattern();
    path.iter()
        .map(|&p| {
            let mut n_max = f64::NEG_INFINITY;
            let mut lambda_min = f64::INFINITY;
            for &offset in &pattern {
                let y = p + offset;
                n_max = n_max.max(model.n_bound(y)?);
                lambda_min = lambda_min.min(model.lambda_bound(y)?);
            }
            Ok(ProfilePoint {
                point: p,
                n_max,
                lambda_min,
            })
        })
        .collect()
}

fn poly(terms: &[(f64, u32, u32)]) -> Polynomial {
    Polynomial::new(terms.iter().map(|&(c, a, b)| Monomial::new(c, a, b)).collect())
}

fn constant_kappa(value: f64) -> KappaFn {
    Arc::new(move |_| Kappa {
        value,
        along_sigma: 0.0,
    })
}

/// Default `μ₀` of the `asian-drift` model.
pub const DEFAULT_MU0: f64 = 0.5;

/// `σ = (x₁, 0)`, `b = (0, x₁)`.
pub fn asian() -> DiffusionModel {
    let sigma = PolyField::new(poly(&[(1.0, 1, 0)]), Polynomial::zero());
    let drift = PolyField::new(Polynomial::zero(), poly(&[(1.0, 1, 0)]));
    DiffusionModel::new(
        "asian",
        Arc::new(sigma),
        Arc::new(drift),
        Domain::new((1e-3, 1e3), (-1e3, 1e3)),
    )
    .with_kappa(constant_kappa(1.0))
    .with_reference_region(Domain::new((0.5, 2.0), (-1.0, 1.0)))
}

/// `σ = (x₁, 0)`, `b = (μ₀x₁, x₁)`. Here `∂_bσ = μ₀σ`.
pub fn asian_drift(mu0: f64) -> DiffusionModel {
    let sigma = PolyField::new(poly(&[(1.0, 1, 0)]), Polynomial::zero());
    let drift = PolyField::new(poly(&[(mu0, 1, 0)]), poly(&[(1.0, 1, 0)]));
    DiffusionModel::new(
        "asian-drift",
        Arc::new(sigma),
        Arc::new(drift),
        Domain::new((1e-3, 1e3), (-1e3, 1e3)),
    )
    .with_kappa(constant_kappa(1.0))
    .with_reference_region(Domain::new((0.5, 2.0), (-1.0, 1.0)))
}

/// `σ = (1, 0)`, `b = (0, x₁²)`: weak Hörmander holds near `x₁ = 1` but the density of
/// `X_δ` vanishes on `{y₂ ≤ 0}`.
pub fn counterexample() -> DiffusionModel {
    let sigma = PolyField::new(poly(&[(1.0, 0, 0)]), Polynomial::zero());
    let drift = PolyField::new(Polynomial::zero(), poly(&[(1.0, 2, 0)]));
    DiffusionModel::new(
        "counterexample",
        Arc::new(sigma),
        Arc::new(drift),
        Domain::new((1e-3, 10.0), (-100.0, 100.0)),
    )
    .with_kappa(constant_kappa(0.0))
    .with_reference_region(Domain::new((0.5, 2.0), (-1.0, 1.0)))
}

/// `σ = (1, 0)`, `b = (0, x₁)`, so `A(x)` is the identity everywhere.
pub fn kolmogorov() -> DiffusionModel {
    let sigma = PolyField::new(poly(&[(1.0, 0, 0)]), Polynomial::zero());
    let drift = PolyField::new(Polynomial::zero(), poly(&[(1.0, 1, 0)]));
    DiffusionModel::new(
        "kolmogorov",
        Arc::new(sigma),
        Arc::new(drift),
        Domain::new((-100.0, 100.0), (-100.0, 100.0)),
    )
    .with_kappa(constant_kappa(0.0))
    .with_reference_region(Domain::new((-1.0, 1.0), (-1.0, 1.0)))
}

/// Catalogue entry for a built-in model.
#[derive(Clone, Copy, Debug)]
pub struct ModelInfo {
    pub name: &'static str,
    pub sigma: &'static str,
    pub drift: &'static str,
    pub h3: bool,
    pub note: &'static str,
}

pub const BUILTIN_MODELS: &[ModelInfo] = &[
    ModelInfo {
        name: "asian",
        sigma: "(x1, 0)",
        drift: "(0, x1)",
        h3: true,
        note: "kappa = 1; A = x1 * identity",
    },
    ModelInfo {
        name: "asian-drift",
        sigma: "(x1, 0)",
        drift: "(mu0*x1, x1)",
        h3: true,
        note: "kappa = 1; d_b sigma = mu0 * sigma (mu0 configurable, default 0.5)",
    },
    ModelInfo {
        name: "counterexample",
        sigma: "(1, 0)",
        drift: "(0, x1^2)",
        h3: true,
        note: "X1 = 1 + W, X2 = int (X1)^2 ds: density vanishes on {y2 <= 0}",
    },
    ModelInfo {
        name: "kolmogorov",
        sigma: "(1, 0)",
        drift: "(0, x1)",
        h3: true,
        note: "A = identity everywhere",
    },
];

/// Built-in model by name; `mu0` only affects `asian-drift`.
pub fn builtin(name: &str, mu0: Option<f64>) -> Result<DiffusionModel> {
    match name {
        "asian" => Ok(asian()),
        "asian-drift" => Ok(asian_drift(mu0.unwrap_or(DEFAULT_MU0))),
        "counterexample" => Ok(counterexample()),
        "kolmogorov" => Ok(kolmogorov()),
        other => Err(Error::Config(format!("unknown model '{other}'"))),
    }
}
