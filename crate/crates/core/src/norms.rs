//! Anisotropic frames `A_R(x)`, `Ā_δ(x)` and the norms they induce.
//!
//! `|ξ|_{A_R(x)} = |A_R(x)⁻¹ξ|` where `A_R(x) = (R^{1/2}σ(x), R^{3/2}[b,σ](x))`: the noise
//! direction is crossed at diffusive speed and the bracket direction three times slower
//! on the log scale.

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::{Matrix2, Point2};
use crate::model::DiffusionModel;

pub mod lemmas;

/// Relative size of `|det A|` against `‖A‖²_F` below which a frame counts as singular.
pub const SINGULAR_RATIO: f64 = 1e-14;
/// Same ratio for the ill-conditioning warning.
pub const WARN_RATIO: f64 = 1e-10;

/// A frame matrix anchored at a base point, with its closed-form inverse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormFrame {
    pub base_point: Point2,
    pub scale: f64,
    pub matrix: Matrix2,
    pub inverse: Matrix2,
}

impl NormFrame {
    /// Builds the frame from an unscaled matrix `(v₁, v₂)`, scaling the columns by
    /// `scale^{1/2}` and `scale^{3/2}`.
    pub fn from_unscaled(base_point: Point2, unscaled: Matrix2, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Range(format!("frame scale {scale} outside (0, 1]")));
        }
        let det = unscaled.det();
        if !det.is_finite() || det.abs() < SINGULAR_RATIO * unscaled.frobenius_sq() || det == 0.0 {
            return Err(Error::SingularFrame {
                point: base_point,
                det,
            });
        }
        let root = scale.sqrt();
        let matrix = unscaled.scale_columns(root, root * scale);
        let inverse = matrix.inverse().ok_or(Error::SingularFrame {
            point: base_point,
            det: matrix.det(),
        })?;
        if matrix.det().abs() < WARN_RATIO * matrix.frobenius_sq() {
            warn!(
                "ill-conditioned frame at ({}, {}), scale {scale}: |det| = {:e}",
                base_point.x1,
                base_point.x2,
                matrix.det().abs()
            );
        }
        Ok(Self {
            base_point,
            scale,
            matrix,
            inverse,
        })
    }

    /// `|ξ|` in this frame.
    pub fn norm(&self, xi: Point2) -> f64 {
        self.inverse.mul_vec(xi).norm()
    }

    /// Frame coordinates `M⁻¹ξ`.
    pub fn coordinates(&self, xi: Point2) -> Point2 {
        self.inverse.mul_vec(xi)
    }
}

/// `A_R(x)`.
pub fn frame(model: &DiffusionModel, x: Point2, r: f64) -> Result<NormFrame> {
    NormFrame::from_unscaled(x, model.a_matrix(x)?, r)
}

/// `Ā_δ(x) = (δ^{1/2}(σ + δ∂_bσ), δ^{3/2}[b,σ])`.
pub fn frame_bar(model: &DiffusionModel, x: Point2, delta: f64) -> Result<NormFrame> {
    let first = model.sigma(x)? + model.d_b_sigma(x)? * delta;
    let unscaled = Matrix2::from_columns(first, model.bracket(x)?);
    NormFrame::from_unscaled(x, unscaled, delta)
}

/// `|ξ|_frame`.
pub fn norm(frame: &NormFrame, xi: Point2) -> f64 {
    frame.norm(xi)
}

/// `(λ_*, λ^*)` of `M Mᵀ`.
pub fn eig_bounds(m: &Matrix2) -> (f64, f64) {
    m.gram_eigenvalues()
}

/// Result of [`quasi_distance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuasiDistance {
    pub d: f64,
    /// `|y − x|_{A(x)} > 1`: the distance would exceed 1 and is reported as 1.
    pub saturated: bool,
}

pub const BISECTION_LOWER: f64 = 1e-12;
pub const BISECTION_MAX_ITER: usize = 200;

/// `d(x, y) = √R*` where `|y − x|_{A_{R*}(x)} = 1`.
pub fn quasi_distance(
    model: &DiffusionModel,
    x: Point2,
    y: Point2,
    tol: f64,
) -> Result<QuasiDistance> {
    if tol <= 0.0 {
        return Err(Error::Range(format!("tolerance {tol} must be positive")));
    }
    model.check_point(y)?;
    let base = frame(model, x, 1.0)?;
    if y == x {
        return Ok(QuasiDistance {
            d: 0.0,
            saturated: false,
        });
    }
    // |ξ|_{A_R} = |diag(R^{-1/2}, R^{-3/2}) A⁻¹ξ|
    let u = base.coordinates(y - x);
    let g = |r: f64| (u.x1 * u.x1 / r + u.x2 * u.x2 / (r * r * r)).sqrt();
    if g(1.0) > 1.0 {
        return Ok(QuasiDistance {
            d: 1.0,
            saturated: true,
        });
    }
    if g(BISECTION_LOWER) < 1.0 {
        return Err(Error::Range(format!(
            "points are closer than the bisection bracket resolves (|ξ| = {:e})",
            (y - x).norm()
        )));
    }
    // bisection in log R; g is strictly decreasing
    let (mut lo, mut hi) = (BISECTION_LOWER.ln(), 0.0f64);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let v = g(mid.exp());
        if (v - 1.0).abs() <= tol {
            break;
        }
        if v > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(QuasiDistance {
        d: (0.5 * mid).exp(),
        saturated: false,
    })
}

/// Smooth bump: 1 on `[−a, a]`, `exp(1 − a²/(a² − (|x|−a)²))` on `a < |x| < 2a`, 0 beyond.
pub fn bump(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "bump width must be positive");
    let ax = x.abs();
    if ax <= a {
        1.0
    } else if ax < 2.0 * a {
        let s = ax - a;
        (1.0 - a * a / (a * a - s * s)).exp()
    } else {
        0.0
    }
}
