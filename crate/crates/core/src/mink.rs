//! Minkowski space R^{2,1}, the hyperboloid model of the hyperbolic plane,
//! and the identification of R^{2,1} with so(2,1).
//!
//! Conventions: the form is `x1*y1 + x2*y2 - x3*y3`, the hyperbolic plane is
//! the upper sheet `<x,x> = -1, z > 0`, and the box product is fixed by
//! `<u ⊠ v, w> = det(u, v, w)`.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating isometries (scaled by the squared entry size).
pub const ISOMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinkError {
    #[error("matrix is not a Minkowski isometry (defect {defect:.3e})")]
    NotIsometry { defect: f64 },
    #[error("isometry reverses orientation or time orientation")]
    WrongComponent,
    #[error("point is not on the hyperboloid (defect {defect:.3e})")]
    NotOnHyperboloid { defect: f64 },
    #[error("point lies outside the Klein disc (radius {radius})")]
    OutsideKleinDisc { radius: f64 },
    #[error("point is not in the future half-space of the base point")]
    BehindBase,
    #[error("matrix is not in so(2,1) (defect {defect:.3e})")]
    NotSkew { defect: f64 },
    #[error("non-finite input")]
    NonFinite,
}

/// A vector of R^{2,1}.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MinkVec {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MinkVec {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub const fn e1() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    pub const fn e2() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    /// The base point (0,0,1) of the hyperboloid.
    pub const fn e3() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn basis(i: usize) -> Self {
        match i {
            0 => Self::e1(),
            1 => Self::e2(),
            _ => Self::e3(),
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, i: usize) -> f64 {
        self.to_array()[i]
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn dot(self, other: Self) -> f64 {
        mink_dot(self, other)
    }

    /// `<v, v>`.
    pub fn norm2(self) -> f64 {
        mink_dot(self, self)
    }

    /// Largest absolute component.
    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// Euclidean length of the components (not a Minkowski quantity).
    pub fn euclid_norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for MinkVec {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for MinkVec {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for MinkVec {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for MinkVec {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Neg for MinkVec {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for MinkVec {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<MinkVec> for f64 {
    type Output = MinkVec;
    fn mul(self, v: MinkVec) -> MinkVec {
        v * self
    }
}

impl Div<f64> for MinkVec {
    type Output = Self;
    fn div(self, s: f64) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Mul<MinkVec> for Matrix3<f64> {
    type Output = MinkVec;
    fn mul(self, v: MinkVec) -> MinkVec {
        MinkVec::from_vector(&(self * v.to_vector()))
    }
}

impl Mul<MinkVec> for &Matrix3<f64> {
    type Output = MinkVec;
    fn mul(self, v: MinkVec) -> MinkVec {
        MinkVec::from_vector(&(self * v.to_vector()))
    }
}

/// The Minkowski product `<u, v> = u1 v1 + u2 v2 - u3 v3`.
pub fn mink_dot(u: MinkVec, v: MinkVec) -> f64 {
    u.x * v.x + u.y * v.y - u.z * v.z
}

/// `η = diag(1, 1, -1)`.
pub fn eta() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))
}

/// Euclidean determinant of three vectors taken as columns.
pub fn det3(u: MinkVec, v: MinkVec, w: MinkVec) -> f64 {
    u.to_vector().dot(&v.to_vector().cross(&w.to_vector()))
}

/// The Minkowski cross product, characterised by `<u ⊠ v, w> = det(u, v, w)`.
///
/// Concretely it is the Euclidean cross product with the last component negated.
pub fn box_product(u: MinkVec, v: MinkVec) -> MinkVec {
    let c = u.to_vector().cross(&v.to_vector());
    MinkVec::new(c[0], c[1], -c[2])
}

/// `Λ(t)`, the infinitesimal isometry `x ↦ t ⊠ x`.
pub fn lambda_iso(t: MinkVec) -> Matrix3<f64> {
    // η [t]_x
    Matrix3::new(
        0.0, -t.z, t.y, //
        t.z, 0.0, -t.x, //
        t.y, -t.x, 0.0,
    )
}

/// Inverse of [`lambda_iso`]; fails if `x` is not Minkowski-skew.
pub fn lambda_inverse(x: &Matrix3<f64>) -> Result<MinkVec, MinkError> {
    let defect = so21_defect(x);
    let scale = x.abs().max().max(1.0);
    if !(defect <= 1e-9 * scale) {
        return Err(MinkError::NotSkew { defect });
    }
    // [t]_x = η X
    let c = eta() * x;
    Ok(MinkVec::new(
        0.5 * (c[(2, 1)] - c[(1, 2)]),
        0.5 * (c[(0, 2)] - c[(2, 0)]),
        0.5 * (c[(1, 0)] - c[(0, 1)]),
    ))
}

/// Max-norm of `η X + Xᵀ η`, zero exactly on so(2,1).
pub fn so21_defect(x: &Matrix3<f64>) -> f64 {
    let e = eta();
    (e * x + x.transpose() * e).abs().max()
}

/// `exp(Λ(t))` in closed form. Uses `Λ(t)^3 = <t,t> Λ(t)`.
pub fn exp_lambda(t: MinkVec) -> Matrix3<f64> {
    let x = lambda_iso(t);
    let x2 = x * x;
    let n = t.norm2();
    let (a, b) = if n.abs() < 1e-8 {
        // series in n, accurate to rounding for |n| < 1e-8
        (1.0 + n / 6.0, 0.5 + n / 24.0)
    } else if n < 0.0 {
        let w = (-n).sqrt();
        (w.sin() / w, (1.0 - w.cos()) / (w * w))
    } else {
        let w = n.sqrt();
        (w.sinh() / w, (w.cosh() - 1.0) / (w * w))
    };
    Matrix3::identity() + x * a + x2 * b
}

/// A linear isometry of R^{2,1} in the identity component of SO(2,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct LinIsom(Matrix3<f64>);

impl LinIsom {
    /// Validates `MᵀηM = η`, `det M = 1`, `M33 > 0`.
    pub fn new(m: Matrix3<f64>) -> Result<Self, MinkError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(MinkError::NonFinite);
        }
        let defect = isometry_defect(&m);
        let scale = m.abs().max().max(1.0);
        if !(defect <= ISOMETRY_TOL * scale * scale) {
            return Err(MinkError::NotIsometry { defect });
        }
        if m.determinant() <= 0.0 || m[(2, 2)] <= 0.0 {
            return Err(MinkError::WrongComponent);
        }
        Ok(Self(m))
    }

    /// Wraps a matrix known to be an isometry (products and inverses of
    /// validated isometries, closed-form exponentials).
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: MinkVec) -> MinkVec {
        self.0 * v
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    /// Exact inverse `η Mᵀ η`.
    pub fn inverse(&self) -> Self {
        let e = eta();
        Self(e * self.0.transpose() * e)
    }

    pub fn defect(&self) -> f64 {
        isometry_defect(&self.0)
    }

    /// Operator 2-norm distance to the identity.
    pub fn distance_to_identity(&self) -> f64 {
        (self.0 - Matrix3::identity()).norm().min(op_norm(&(self.0 - Matrix3::identity())))
    }
}

impl TryFrom<[f64; 9]> for LinIsom {
    type Error = MinkError;
    fn try_from(a: [f64; 9]) -> Result<Self, MinkError> {
        LinIsom::new(Matrix3::from_row_slice(&a))
    }
}

impl From<LinIsom> for [f64; 9] {
    fn from(m: LinIsom) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = m.0[(r, c)];
            }
        }
        out
    }
}

/// Operator 2-norm (largest singular value).
pub fn op_norm(m: &Matrix3<f64>) -> f64 {
    m.singular_values().max()
}

/// Max-norm of `MᵀηM − η`.
pub fn isometry_defect(m: &Matrix3<f64>) -> f64 {
    let e = eta();
    (m.transpose() * e * m - e).abs().max()
}

/// An affine isometry `x ↦ A x + a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffIsom {
    pub linear: LinIsom,
    pub translation: MinkVec,
}

impl AffIsom {
    pub fn new(linear: LinIsom, translation: MinkVec) -> Self {
        Self { linear, translation }
    }

    pub fn identity() -> Self {
        Self::new(LinIsom::identity(), MinkVec::zero())
    }

    pub fn apply(&self, v: MinkVec) -> MinkVec {
        self.linear.apply(v) + self.translation
    }

    /// `(A,a)∘(B,b) = (AB, Ab + a)`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.linear.compose(&other.linear),
            self.linear.apply(other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let li = self.linear.inverse();
        Self::new(li, -li.apply(self.translation))
    }
}

/// Checks that `x` lies on the upper hyperboloid within `tol`.
pub fn check_hyperboloid(x: MinkVec, tol: f64) -> Result<(), MinkError> {
    if !x.is_finite() {
        return Err(MinkError::NonFinite);
    }
    let defect = (x.norm2() + 1.0).abs();
    if defect > tol * x.z.abs().max(1.0).powi(2) || x.z <= 0.0 {
        return Err(MinkError::NotOnHyperboloid { defect });
    }
    Ok(())
}

/// Rescales a timelike future vector onto the hyperboloid.
pub fn normalize_timelike(x: MinkVec) -> MinkVec {
    x / (-x.norm2()).sqrt()
}

/// The pure boost taking `e3` to `p` (no rotation about `e3`).
pub fn boost_to(p: MinkVec) -> LinIsom {
    let (a, b, c) = (p.x, p.y, p.z);
    let k = 1.0 / (1.0 + c);
    LinIsom::from_matrix_unchecked(Matrix3::new(
        1.0 + a * a * k,
        a * b * k,
        a, //
        a * b * k,
        1.0 + b * b * k,
        b, //
        a,
        b,
        c,
    ))
}

/// The hyperbolic translation of length `d` along the geodesic through `e3`
/// in direction `e1`.
pub fn x_translation(d: f64) -> LinIsom {
    let (c, s) = (d.cosh(), d.sinh());
    LinIsom::from_matrix_unchecked(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, s, 0.0, c))
}

/// Rotation about `e3` by `theta` (counterclockwise in the (e1,e2) plane).
pub fn z_rotation(theta: f64) -> LinIsom {
    let (s, c) = theta.sin_cos();
    LinIsom::from_matrix_unchecked(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// `exp(θ Λ(p))`: rotation by `θ` about the timelike axis through `p`.
pub fn elliptic_rotation(p: MinkVec, theta: f64) -> LinIsom {
    LinIsom::from_matrix_unchecked(exp_lambda(p * theta))
}

/// Hyperbolic distance, `arccosh(-<x,y>)` with the argument clamped to `≥ 1`.
pub fn distance(x: MinkVec, y: MinkVec) -> f64 {
    (-mink_dot(x, y)).max(1.0).acosh()
}

/// Exponential map at `x` applied to the tangent vector `v`.
pub fn exp_map(x: MinkVec, v: MinkVec) -> MinkVec {
    let n = v.norm2().max(0.0).sqrt();
    if n < 1e-300 {
        return x;
    }
    x * n.cosh() + v * (n.sinh() / n)
}

/// Inverse of [`exp_map`]: the tangent vector at `x` pointing to `y`.
pub fn log_map(x: MinkVec, y: MinkVec) -> MinkVec {
    let c = -mink_dot(x, y);
    let d = c.max(1.0).acosh();
    let w = y - x * c;
    let n = w.norm2().max(0.0).sqrt();
    if n < 1e-300 {
        return MinkVec::zero();
    }
    w * (d / n)
}

/// Klein coordinates of `x` relative to the base point `p`: move `p` to `e3`
/// by the inverse of [`boost_to`], then project radially to `z = 1`.
pub fn klein_project(x: MinkVec, p: MinkVec) -> Result<[f64; 2], MinkError> {
    if !x.is_finite() || !p.is_finite() {
        return Err(MinkError::NonFinite);
    }
    let y = boost_to(p).inverse().apply(x);
    if y.z <= 0.0 {
        return Err(MinkError::BehindBase);
    }
    Ok([y.x / y.z, y.y / y.z])
}

/// Inverse of [`klein_project`].
pub fn klein_lift(k: [f64; 2], p: MinkVec) -> Result<MinkVec, MinkError> {
    let r2 = k[0] * k[0] + k[1] * k[1];
    if !r2.is_finite() {
        return Err(MinkError::NonFinite);
    }
    if r2 >= 1.0 {
        return Err(MinkError::OutsideKleinDisc { radius: r2.sqrt() });
    }
    let s = 1.0 / (1.0 - r2).sqrt();
    Ok(boost_to(p).apply(MinkVec::new(k[0] * s, k[1] * s, s)))
}

/// Point of the hyperboloid at distance `r` from `e3` in direction `theta`.
pub fn polar_point(r: f64, theta: f64) -> MinkVec {
    let (s, c) = theta.sin_cos();
    MinkVec::new(r.sinh() * c, r.sinh() * s, r.cosh())
}
