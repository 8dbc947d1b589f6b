//! Plane points and 2×2 matrices.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A point (or vector) of the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2 {
    pub x1: f64,
    pub x2: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x1: 0.0, x2: 0.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x1 * other.x1 + self.x2 * other.x2
    }

    pub fn norm(self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    pub fn get(self, i: usize) -> f64 {
        match i {
            0 => self.x1,
            1 => self.x2,
            _ => panic!("Point2 index {i} out of range"),
        }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x1, self.x2]
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2::new(a[0], a[1])
    }
}

impl From<(f64, f64)> for Point2 {
    fn from(a: (f64, f64)) -> Self {
        Point2::new(a.0, a.1)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x1, -self.x2)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x1 * s, self.x2 * s)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, p: Point2) -> Point2 {
        p * self
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, o: Point2) {
        self.x1 += o.x1;
        self.x2 += o.x2;
    }
}

impl SubAssign for Point2 {
    fn sub_assign(&mut self, o: Point2) {
        self.x1 -= o.x1;
        self.x2 -= o.x2;
    }
}

/// 2×2 real matrix stored by columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2 {
    pub cols: [Point2; 2],
}

impl Matrix2 {
    pub const fn from_columns(c1: Point2, c2: Point2) -> Self {
        Self { cols: [c1, c2] }
    }

    /// Row-major constructor: `[[a, b], [c, d]]`.
    pub const fn from_rows(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::from_columns(Point2::new(a, c), Point2::new(b, d))
    }

    pub const fn identity() -> Self {
        Self::from_rows(1.0, 0.0, 0.0, 1.0)
    }

    pub const fn zero() -> Self {
        Self::from_rows(0.0, 0.0, 0.0, 0.0)
    }

    pub const fn diag(a: f64, d: f64) -> Self {
        Self::from_rows(a, 0.0, 0.0, d)
    }

    /// Entry at row `i`, column `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cols[j].get(i)
    }

    pub fn det(&self) -> f64 {
        let [c1, c2] = self.cols;
        c1.x1 * c2.x2 - c2.x1 * c1.x2
    }

    pub fn mul_vec(&self, v: Point2) -> Point2 {
        self.cols[0] * v.x1 + self.cols[1] * v.x2
    }

    pub fn mul_mat(&self, other: &Matrix2) -> Matrix2 {
        Matrix2::from_columns(self.mul_vec(other.cols[0]), self.mul_vec(other.cols[1]))
    }

    pub fn transpose(&self) -> Matrix2 {
        Matrix2::from_rows(
            self.cols[0].x1,
            self.cols[0].x2,
            self.cols[1].x1,
            self.cols[1].x2,
        )
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.cols[0].norm_sq() + self.cols[1].norm_sq()
    }

    pub fn scale_columns(&self, s1: f64, s2: f64) -> Matrix2 {
        Matrix2::from_columns(self.cols[0] * s1, self.cols[1] * s2)
    }

    /// Closed-form inverse through the adjugate. `None` when the determinant is zero
    /// or not finite.
    pub fn inverse(&self) -> Option<Matrix2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [c1, c2] = self.cols;
        Some(Matrix2::from_rows(
            c2.x2 / det,
            -c2.x1 / det,
            -c1.x2 / det,
            c1.x1 / det,
        ))
    }

    /// Eigenvalues `(min, max)` of `M Mᵀ`, i.e. the squared singular values.
    pub fn gram_eigenvalues(&self) -> (f64, f64) {
        // M Mᵀ = [[p, r], [r, s]]
        let [c1, c2] = self.cols;
        let p = c1.x1 * c1.x1 + c2.x1 * c2.x1;
        let s = c1.x2 * c1.x2 + c2.x2 * c2.x2;
        let r = c1.x1 * c1.x2 + c2.x1 * c2.x2;
        let half_trace = 0.5 * (p + s);
        let disc = (0.5 * (p - s)).hypot(r);
        let hi = half_trace + disc;
        // product of the eigenvalues is det², which avoids cancellation in the small one
        let det_sq = self.det() * self.det();
        let lo = if hi > 0.0 { det_sq / hi } else { 0.0 };
        (lo, hi)
    }

    pub fn is_finite(&self) -> bool {
        self.cols[0].is_finite() && self.cols[1].is_finite()
    }
}

impl Add for Matrix2 {
    type Output = Matrix2;
    fn add(self, o: Matrix2) -> Matrix2 {
        Matrix2::from_columns(self.cols[0] + o.cols[0], self.cols[1] + o.cols[1])
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;
    fn sub(self, o: Matrix2) -> Matrix2 {
        Matrix2::from_columns(self.cols[0] - o.cols[0], self.cols[1] - o.cols[1])
    }
}

impl Mul<f64> for Matrix2 {
    type Output = Matrix2;
    fn mul(self, s: f64) -> Matrix2 {
        self.scale_columns(s, s)
    }
}

/// Second derivative of a plane vector field: `hess[k]` is the (symmetric) Hessian
/// matrix of component `k`.
pub type Bilinear2 = [Matrix2; 2];

/// Third derivative: `third[k][i]` is the matrix `∂_i ∂_j ∂_l f^k` over `(j, l)`.
pub type Trilinear2 = [[Matrix2; 2]; 2];

/// Evaluates `∇²f[u, v]`.
pub fn apply_bilinear(h: &Bilinear2, u: Point2, v: Point2) -> Point2 {
    Point2::new(h[0].mul_vec(v).dot(u), h[1].mul_vec(v).dot(u))
}
