//! Constructors and analysers of self-adjoint Codazzi tensors: linear and
//! equivariant potentials, harmonic tensors of quadratic differentials,
//! potentials recovered from a tensor, the cocycle class `δb`, and the
//! flat-bundle 1-form `ι_* b`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use thiserror::Error;

use crate::fields::{
    ambient_operator, frame_operator, tangent_frame, FieldError, KleinChart, OperatorField, Potential, ScalarField,
};
use crate::holonomy::{cocycle_extend, HolonomyError, Letter, SurfaceGroup, TransCocycle, Word};
use crate::jet::Scalar;
use crate::mink::{boost_to, det3, distance, exp_map, mink_dot, LinIsom, MinkVec};
use crate::quadrature::GaussRule;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("need at least {need} sample points, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample points are (nearly) collinear")]
    Collinear,
    #[error("linear fit residual {0:.3e} exceeds tolerance: not equivariant-Codazzi")]
    FitResidual(f64),
    #[error("cocycle is not in Z¹ (relator residual {0:.3e})")]
    NotCocycle(f64),
    #[error("equivariance residual {0:.3e}: partition of unity does not cover the sample region")]
    Partition(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Holonomy(#[from] HolonomyError),
}

// ---------------------------------------------------------------------------
// linear potentials

/// `v(x) = <t, x>` sampled on a chart.
pub fn linear_potential(t: MinkVec, chart: &KleinChart) -> ScalarField {
    chart.sample(|x| mink_dot(t, x))
}

/// Result of fitting `v(x) ≈ <t, x>`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    /// Least-squares vector over all samples.
    pub t: MinkVec,
    /// Vector solved exactly from the three anchors.
    pub anchor_t: MinkVec,
    /// Largest residual of the anchor solution on the remaining samples.
    pub holdout_residual: f64,
    /// Largest residual of the least-squares solution.
    pub residual: f64,
}

/// Fits `<t, x_i> = v_i`: three maximally non-collinear anchors determine
/// `t`, the other points validate it, then least squares over everything.
pub fn fit_linear(points: &[MinkVec], values: &[f64]) -> Result<LinearFit, TensorError> {
    if points.len() < 3 || values.len() != points.len() {
        return Err(TensorError::TooFewSamples { need: 3, got: points.len().min(values.len()) });
    }
    let a = 0;
    let far = |from: MinkVec| {
        (0..points.len()).max_by(|&i, &j| distance(from, points[i]).total_cmp(&distance(from, points[j]))).unwrap_or(0)
    };
    let a = far(points[a]);
    let b = far(points[a]);
    let c = (0..points.len())
        .max_by(|&i, &j| det3(points[a], points[b], points[i]).abs().total_cmp(&det3(points[a], points[b], points[j]).abs()))
        .unwrap_or(0);
    // rows p_iᵀ η so that row · t = <p_i, t>
    let row = |p: MinkVec| [p.x, p.y, -p.z];
    let m = Matrix3::from_rows(&[row(points[a]), row(points[b]), row(points[c])].map(nalgebra::RowVector3::from));
    let scale = m.abs().max();
    if m.determinant().abs() < 1e-12 * scale * scale * scale {
        return Err(TensorError::Collinear);
    }
    let rhs = nalgebra::Vector3::new(values[a], values[b], values[c]);
    let sol = m.lu().solve(&rhs).ok_or(TensorError::Collinear)?;
    let anchor_t = MinkVec::from_vector(&sol);
    let holdout_residual = points
        .iter()
        .zip(values)
        .enumerate()
        .filter(|(i, _)| ![a, b, c].contains(i))
        .map(|(_, (p, v))| (mink_dot(anchor_t, *p) - v).abs())
        .fold(0.0, f64::max);
    let big = DMatrix::from_fn(points.len(), 3, |i, j| row(points[i])[j]);
    let rhs = DVector::from_column_slice(values);
    let sol = big.svd(true, true).solve(&rhs, 1e-14).map_err(|_| TensorError::Collinear)?;
    let t = MinkVec::new(sol[0], sol[1], sol[2]);
    let residual = points.iter().zip(values).map(|(p, v)| (mink_dot(t, *p) - v).abs()).fold(0.0, f64::max);
    Ok(LinearFit { t, anchor_t, holdout_residual, residual })
}

// ---------------------------------------------------------------------------
// quadratic differentials

/// `q = f(z) dz²` with `f(z) = Σ c_k z^k` (finitely many, possibly negative, k).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadDiffLocal {
    pub coeffs: Vec<(i32, Complex64)>,
}

impl QuadDiffLocal {
    pub fn new(coeffs: Vec<(i32, Complex64)>) -> Self {
        Self { coeffs }
    }

    pub fn monomial(k: i32, c: Complex64) -> Self {
        Self { coeffs: vec![(k, c)] }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().map(|&(k, c)| c * z.powi(k)).sum()
    }

    /// `q ↦ s q` for complex `s`.
    pub fn times(&self, s: Complex64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|&(k, c)| (k, c * s)).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().chain(&o.coeffs).copied().collect() }
    }

    /// `|∂f/∂z̄|` at `z` by fourth-order differences of the evaluated series.
    pub fn cauchy_riemann_residual(&self, z: Complex64) -> f64 {
        let h = 1e-3 * (1.0 + z.norm());
        let d = |dir: Complex64| {
            let f = |s: f64| self.eval(z + dir * s);
            (f(-2.0 * h) - f(2.0 * h) * 1.0 + (f(h) - f(-h)) * 8.0) / (12.0 * h)
        };
        let dx = d(Complex64::new(1.0, 0.0));
        let dy = d(Complex64::new(0.0, 1.0));
        (0.5 * (dx + Complex64::i() * dy)).norm() / (1.0 + self.eval(z).norm())
    }
}

/// The Poincaré-disc coordinate `z = (x1 + i x2)/(1 + x3)` of the points
/// `B⁻¹ x`, for a chosen isometry `B` (the chart centre is `B e3`).
#[derive(Debug, Clone)]
pub struct DiscChart {
    inverse: LinIsom,
}

impl DiscChart {
    pub fn new(center: &LinIsom) -> Self {
        Self { inverse: center.inverse() }
    }

    pub fn standard() -> Self {
        Self { inverse: LinIsom::identity() }
    }

    pub fn coordinate(&self, x: MinkVec) -> Complex64 {
        let y = self.inverse.apply(x);
        Complex64::new(y.x, y.y) / (1.0 + y.z)
    }

    /// `dz(v)` for a tangent vector `v` at `x`.
    pub fn dz(&self, x: MinkVec, v: MinkVec) -> Complex64 {
        let y = self.inverse.apply(x);
        let w = self.inverse.apply(v);
        let d = 1.0 + y.z;
        Complex64::new(w.x, w.y) / d - Complex64::new(y.x, y.y) * w.z / (d * d)
    }

    /// `η` with `h = e^{2η} |dz|²`.
    pub fn conformal_exponent(&self, x: MinkVec) -> f64 {
        let z = self.coordinate(x);
        (2.0 / (1.0 - z.norm_sqr())).ln()
    }

    /// Ambient images of `∂x, ∂y` at `x`.
    pub fn coordinate_vectors(&self, x: MinkVec) -> [MinkVec; 2] {
        let z = self.coordinate(x);
        let (a, b) = (z.re, z.im);
        let r2 = a * a + b * b;
        let d = 1.0 - r2;
        // X(z) = (2a, 2b, 1 + r²) / (1 − r²)
        let dx = MinkVec::new(2.0 * d + 4.0 * a * a, 4.0 * a * b, 4.0 * a) / (d * d);
        let dy = MinkVec::new(4.0 * a * b, 2.0 * d + 4.0 * b * b, 4.0 * b) / (d * d);
        let center = self.inverse.inverse();
        [center.apply(dx), center.apply(dy)]
    }
}

/// The harmonic tensor `b_q = h⁻¹ Re q` at `x` as an ambient operator:
/// `h(b_q v, w) = Re(f(z) dz(v) dz(w))`.
pub fn harmonic_tensor_at(q: &QuadDiffLocal, chart: &DiscChart, x: MinkVec) -> Matrix3<f64> {
    let fr = tangent_frame(x);
    let f = q.eval(chart.coordinate(x));
    let dz = [chart.dz(x, fr[0]), chart.dz(x, fr[1])];
    let m = Matrix2::from_fn(|a, c| (f * dz[a] * dz[c]).re);
    ambient_operator(&fr, &m)
}

/// The matrix `e^{-2η} [[Re f, −Im f], [−Im f, −Re f]]` of `b_q` in the
/// conformal basis `(∂x, ∂y)`.
pub fn harmonic_matrix_conformal(f: Complex64, eta: f64) -> Matrix2<f64> {
    Matrix2::new(f.re, -f.im, -f.im, -f.re) * (-2.0 * eta).exp()
}

/// Sampled harmonic tensor on a grid chart.
pub fn harmonic_tensor(q: &QuadDiffLocal, disc: &DiscChart, chart: &KleinChart) -> OperatorField {
    chart.sample_operator(|x| harmonic_tensor_at(q, disc, x))
}

// ---------------------------------------------------------------------------
// potentials of a tensor, pointwise

/// Potential data at a point recovered from a tensor.
#[derive(Debug, Clone, Copy)]
pub struct RayValue {
    /// Klein coordinates in the integrator's chart.
    pub k: [f64; 2],
    /// `ū` (the potential divided by `cosh r`).
    pub ubar: f64,
    /// Flat gradient of `ū`.
    pub grad: [f64; 2],
    /// The potential `u = ū cosh r`.
    pub u: f64,
    /// The point `σ = grad u − u x` of the dual convex surface.
    pub sigma: MinkVec,
}

/// Recovers a potential of a Codazzi tensor by integrating its flat Hessian
/// `D²ū = sqrt(1 − |k|²) <B ∂iX, ∂jX>` along Klein rays from the chart
/// centre:
/// `∇ū(k) = ∫₀¹ Q(τk) k dτ`, `ū(k) = ∫₀¹ (1 − τ) kᵀ Q(τk) k dτ`,
/// normalised by `ū(0) = 0`, `∇ū(0) = 0`.
#[derive(Debug, Clone)]
pub struct RayIntegrator {
    boost: LinIsom,
    inverse: LinIsom,
    nodes: Vec<(f64, f64)>,
}

impl RayIntegrator {
    pub fn new(base: MinkVec) -> Self {
        Self::with_resolution(base, 16, 32)
    }

    pub fn with_resolution(base: MinkVec, order: usize, panels: usize) -> Self {
        let rule = GaussRule::new(order.max(1)).expect("positive order");
        let boost = boost_to(base);
        Self { inverse: boost.inverse(), boost, nodes: rule.composite(0.0, 1.0, panels.max(1)) }
    }

    pub fn base(&self) -> MinkVec {
        self.boost.apply(MinkVec::e3())
    }

    /// Klein coordinates of `x`.
    pub fn project(&self, x: MinkVec) -> [f64; 2] {
        let y = self.inverse.apply(x);
        [y.x / y.z, y.y / y.z]
    }

    /// `Q(k)`: the flat Hessian of `ū` prescribed by `b` at Klein point `k`.
    pub fn flat_hessian(&self, b: &Matrix3<f64>, k: [f64; 2]) -> Matrix2<f64> {
        let r2 = k[0] * k[0] + k[1] * k[1];
        let s = 1.0 / (1.0 - r2).sqrt();
        let s3 = s * s * s;
        let t = [
            self.boost.apply(MinkVec::new(s + k[0] * k[0] * s3, k[0] * k[1] * s3, k[0] * s3)),
            self.boost.apply(MinkVec::new(k[0] * k[1] * s3, s + k[1] * k[1] * s3, k[1] * s3)),
        ];
        let q = Matrix2::from_fn(|i, j| mink_dot(*b * t[i], t[j]) / s);
        // symmetrise: the two orders agree for self-adjoint b
        (q + q.transpose()) * 0.5
    }

    /// Lift of Klein coordinates.
    pub fn lift(&self, k: [f64; 2]) -> MinkVec {
        let s = 1.0 / (1.0 - k[0] * k[0] - k[1] * k[1]).sqrt();
        self.boost.apply(MinkVec::new(k[0] * s, k[1] * s, s))
    }

    pub fn at(&self, b: &dyn Fn(MinkVec) -> Matrix3<f64>, x: MinkVec) -> RayValue {
        let k = self.project(x);
        let kv = Vector2::new(k[0], k[1]);
        let mut grad = Vector2::zeros();
        let mut ubar = 0.0;
        for &(tau, w) in &self.nodes {
            let kt = [tau * k[0], tau * k[1]];
            let q = self.flat_hessian(&b(self.lift(kt)), kt);
            let qk = q * kv;
            grad += qk * w;
            ubar += w * (1.0 - tau) * kv.dot(&qk);
        }
        let cosh_r = 1.0 / (1.0 - kv.norm_squared()).sqrt();
        let sigma = self.boost.apply(MinkVec::new(grad[0], grad[1], kv.dot(&grad) - ubar));
        RayValue { k, ubar, grad: [grad[0], grad[1]], u: ubar * cosh_r, sigma }
    }
}

// ---------------------------------------------------------------------------
// equivariant potentials

/// A smooth potential `u` on ℍ² with `u(x) − u(α⁻¹x) = <t_α, x>` for every
/// group element `α`: a partition of unity subordinate to the translates of
/// a disc around the octagon centre, blending the linear potentials
/// `<t_γ, x>`.
#[derive(Debug, Clone)]
pub struct EquivariantPotential {
    centres: Vec<MinkVec>,
    values: Vec<MinkVec>,
    cosh_support: f64,
    reach: f64,
    centre: MinkVec,
}

impl EquivariantPotential {
    /// Radius (about the octagon centre) inside which the potential is exact.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// Number of group translates used.
    pub fn len(&self) -> usize {
        self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    /// Centre of the disc on which the potential is exact.
    pub fn centre(&self) -> MinkVec {
        self.centre
    }
}

fn bump<T: Scalar>(w: T) -> T {
    // exp(1 − 1/(1 − w)) on w < 1, zero beyond; smooth at w = 1
    (T::cst(1.0) - (T::cst(1.0) - w).recip()).exp()
}

impl Potential for EquivariantPotential {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        let xv = MinkVec::new(x[0].value(), x[1].value(), x[2].value());
        let denom_c = self.cosh_support - 1.0;
        let mut num = T::cst(0.0);
        let mut den = T::cst(0.0);
        for (c, t) in self.centres.iter().zip(&self.values) {
            if -mink_dot(*c, xv) >= self.cosh_support {
                continue;
            }
            let ch = x[2].scale(c.z) - x[0].scale(c.x) - x[1].scale(c.y);
            let w = (ch - T::cst(1.0)).scale(1.0 / denom_c);
            let phi = bump(w);
            let lin = x[0].scale(t.x) + x[1].scale(t.y) - x[2].scale(t.z);
            num = num + phi * lin;
            den = den + phi;
        }
        num / den
    }
}

/// Builds the equivariant potential of a cocycle, exact on the disc of
/// radius `reach` about the octagon centre.
pub fn equivariant_potential(t: &TransCocycle, g: &SurfaceGroup, reach: f64) -> Result<EquivariantPotential, TensorError> {
    let centre = g.center();
    let circ = distance(centre, g.octagon_vertices[0]);
    let support = circ + 0.5;
    let scale = 1.0 + t.max_abs();
    let res = t.relator_residual(&g.rep);
    if !(res <= 1e-9 * scale) {
        return Err(TensorError::NotCocycle(res));
    }
    let els = g.orbit_elements(reach + support);
    let centres = els.iter().map(|e| e.point).collect();
    let values = els.iter().map(|e| cocycle_extend(t, &e.word, &g.rep)).collect();
    Ok(EquivariantPotential { centres, values, cosh_support: support.cosh(), reach, centre })
}

/// A pointwise ambient operator field on (a region of) ℍ².
pub type PointField<'a> = Box<dyn Fn(MinkVec) -> Matrix3<f64> + 'a>;

/// `b = Hess u − u Id` for the equivariant potential of `t`, checked for
/// equivariance `b(αx) = ρ(α) b(x) ρ(α)⁻¹` at sample points.
pub fn equivariant_generator(
    t: &TransCocycle,
    g: &SurfaceGroup,
    reach: f64,
) -> Result<(EquivariantPotential, f64), TensorError> {
    let u = equivariant_potential(t, g, reach)?;
    let mut worst: f64 = 0.0;
    for p in g.side_pairings() {
        let m = g.rep.letter(p.letter);
        let x = g.side_midpoint(p.from);
        let bx = crate::fields::hess_minus_id_at(&u, x);
        let bax = crate::fields::hess_minus_id_at(&u, m.apply(x));
        let moved = m.matrix() * bx * m.inverse().matrix();
        worst = worst.max((bax - moved).abs().max() / (1.0 + bx.abs().max()));
    }
    if !(worst <= 1e-8) {
        return Err(TensorError::Partition(worst));
    }
    Ok((u, worst))
}

/// Sample points near the midpoint of side `side`, inside a disc of radius
/// `radius`.
pub fn side_samples(g: &SurfaceGroup, side: usize, count: usize, radius: f64) -> Vec<MinkVec> {
    let m = g.side_midpoint(side);
    let fr = tangent_frame(m);
    (0..count)
        .map(|i| {
            let a = i as f64 * 2.399963229728653; // golden angle
            let r = radius * ((i as f64 + 0.5) / count as f64).sqrt();
            exp_map(m, (fr[0] * a.cos() + fr[1] * a.sin()) * r)
        })
        .collect()
}

/// The class `δb` as a cocycle, with fit diagnostics.
#[derive(Debug, Clone)]
pub struct DeltaExtract {
    pub cocycle: TransCocycle,
    /// Worst hold-out residual of the per-generator linear fits.
    pub fit_residual: f64,
    pub relator_residual: f64,
}

/// Recovers `t_α` from `û(x) − û(α⁻¹x) = <t_α, x>`, where `û` is the ray
/// potential of the equivariant tensor `b` around the octagon centre.
pub fn delta_extract(
    b: &dyn Fn(MinkVec) -> Matrix3<f64>,
    g: &SurfaceGroup,
    samples: usize,
    tol: f64,
) -> Result<DeltaExtract, TensorError> {
    if samples < 10 {
        return Err(TensorError::TooFewSamples { need: 10, got: samples });
    }
    let ray = RayIntegrator::new(g.center());
    let mut values = [MinkVec::zero(); 4];
    let mut worst: f64 = 0.0;
    for (gen, value) in values.iter_mut().enumerate() {
        let pairing = g
            .side_pairings()
            .iter()
            .find(|p| p.letter == Letter::new(gen, false))
            .ok_or(HolonomyError::SidePairing { gen })?;
        let alpha = g.rep.letter(pairing.letter);
        let ainv = alpha.inverse();
        let pts = side_samples(g, pairing.to, samples, 0.3);
        let diffs: Vec<f64> = pts.iter().map(|&x| ray.at(b, x).u - ray.at(b, ainv.apply(x)).u).collect();
        let fit = fit_linear(&pts, &diffs)?;
        let scale = 1.0 + diffs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst = worst.max(fit.holdout_residual.max(fit.residual) / scale);
        *value = fit.t;
    }
    if !(worst <= tol) {
        return Err(TensorError::FitResidual(worst));
    }
    let cocycle = TransCocycle::new(values);
    let relator_residual = cocycle.relator_residual(&g.rep);
    Ok(DeltaExtract { cocycle, fit_residual: worst, relator_residual })
}

/// `<Hess u − u Id>` for an equivariant potential, as a boxed point field.
pub fn potential_field<'a, P: Potential + 'a>(u: &'a P) -> PointField<'a> {
    Box::new(move |x| crate::fields::hess_minus_id_at(u, x))
}

/// An invariant function `Σ_γ φ(γ⁻¹x) f(γ⁻¹ x)` descending to the surface.
#[derive(Debug, Clone)]
pub struct InvariantPotential {
    elements: Vec<LinIsom>,
    centre: MinkVec,
    cosh_support: f64,
    /// Coefficients of a polynomial in the Klein coordinates of the centre.
    poly: Vec<(u32, u32, f64)>,
}

impl InvariantPotential {
    /// Poincaré series of `φ · P`, with `φ` a bump of radius `support` about
    /// the octagon centre and `P` a polynomial in its Klein coordinates;
    /// exact on the disc of radius `reach`.
    pub fn new(g: &SurfaceGroup, poly: Vec<(u32, u32, f64)>, support: f64, reach: f64) -> Self {
        let elements = g.orbit_elements(reach + support).into_iter().map(|e| e.matrix.inverse()).collect();
        Self { elements, centre: g.center(), cosh_support: support.cosh(), poly }
    }
}

impl Potential for InvariantPotential {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        let xv = MinkVec::new(x[0].value(), x[1].value(), x[2].value());
        let c = self.centre;
        let chart = boost_to(c).inverse();
        let mut total = T::cst(0.0);
        for g in &self.elements {
            let y = g.apply(xv);
            if -mink_dot(c, y) >= self.cosh_support {
                continue;
            }
            let m = g.matrix();
            let yj: [T; 3] =
                std::array::from_fn(|i| x[0].scale(m[(i, 0)]) + x[1].scale(m[(i, 1)]) + x[2].scale(m[(i, 2)]));
            let ch = yj[2].scale(c.z) - yj[0].scale(c.x) - yj[1].scale(c.y);
            let w = (ch - T::cst(1.0)).scale(1.0 / (self.cosh_support - 1.0));
            let cm = chart.matrix();
            let zc: [T; 3] =
                std::array::from_fn(|i| yj[0].scale(cm[(i, 0)]) + yj[1].scale(cm[(i, 1)]) + yj[2].scale(cm[(i, 2)]));
            let iz = zc[2].recip();
            let (k1, k2) = (zc[0] * iz, zc[1] * iz);
            let mut p = T::cst(0.0);
            for &(i, j, a) in &self.poly {
                p = p + (k1.powi(i as i32) * k2.powi(j as i32)).scale(a);
            }
            total = total + bump(w) * p;
        }
        total
    }
}

/// A bump `φ · P` supported in the disc of radius `support` about `centre`
/// (no group sum).
#[derive(Debug, Clone)]
pub struct BumpPotential {
    pub centre: MinkVec,
    pub support: f64,
    pub poly: Vec<(u32, u32, f64)>,
}

impl Potential for BumpPotential {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        let c = self.centre;
        let xv = MinkVec::new(x[0].value(), x[1].value(), x[2].value());
        let cs = self.support.cosh();
        if -mink_dot(c, xv) >= cs {
            return T::cst(0.0);
        }
        let ch = x[2].scale(c.z) - x[0].scale(c.x) - x[1].scale(c.y);
        let w = (ch - T::cst(1.0)).scale(1.0 / (cs - 1.0));
        let cm = boost_to(c).inverse();
        let m = cm.matrix();
        let zc: [T; 3] = std::array::from_fn(|i| x[0].scale(m[(i, 0)]) + x[1].scale(m[(i, 1)]) + x[2].scale(m[(i, 2)]));
        let iz = zc[2].recip();
        let (k1, k2) = (zc[0] * iz, zc[1] * iz);
        let mut p = T::cst(0.0);
        for &(i, j, a) in &self.poly {
            p = p + (k1.powi(i as i32) * k2.powi(j as i32)).scale(a);
        }
        bump(w) * p
    }
}

// ---------------------------------------------------------------------------
// grid potentials and the flat-bundle form

/// Potential recovered on a grid chart.
#[derive(Debug, Clone)]
pub struct GridPotential {
    pub u: ScalarField,
    pub ubar: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// Largest disagreement of `ū` between the two sweep orders.
    pub path_gap: f64,
}

impl GridPotential {
    /// `σ = grad u − u x` at each node: `B_p(∇ū, k·∇ū − ū)`.
    pub fn sigma(&self, chart: &KleinChart) -> Vec<MinkVec> {
        chart
            .nodes()
            .iter()
            .enumerate()
            .map(|(n, node)| {
                let g = self.grad[n];
                chart.boost().apply(MinkVec::new(g[0], g[1], node.k[0] * g[0] + node.k[1] * g[1] - self.ubar[n]))
            })
            .collect()
    }
}

/// Flat Hessian `Q = (cosh r)⁻¹ h(b ∂i, ∂j)` per node.
fn flat_hessians(chart: &KleinChart, b: &OperatorField) -> Vec<Matrix2<f64>> {
    chart
        .nodes()
        .iter()
        .zip(&b.values)
        .map(|(node, m)| {
            let finv = node.frame.try_inverse().expect("frames are invertible");
            let s = finv.transpose() * m * finv;
            (s + s.transpose()) * (0.5 / node.cosh_r())
        })
        .collect()
}

/// `∂_d Q` per node and axis: central differences, one-sided second-order
/// differences at the edge of the grid.
fn axis_derivatives(chart: &KleinChart, q: &[Matrix2<f64>]) -> Vec<[Matrix2<f64>; 2]> {
    let h = chart.spacing();
    (0..chart.len())
        .map(|n| {
            std::array::from_fn(|d| {
                let step = |s: i32| if d == 0 { chart.neighbor(n, s, 0) } else { chart.neighbor(n, 0, s) };
                match (step(1), step(-1)) {
                    (Some(p), Some(m)) => (q[p] - q[m]) / (2.0 * h),
                    (Some(p), None) => match step(2) {
                        Some(pp) => (q[p] * 4.0 - q[n] * 3.0 - q[pp]) / (2.0 * h),
                        None => (q[p] - q[n]) / h,
                    },
                    (None, Some(m)) => match step(-2) {
                        Some(mm) => (q[n] * 3.0 - q[m] * 4.0 + q[mm]) / (2.0 * h),
                        None => (q[n] - q[m]) / h,
                    },
                    (None, None) => Matrix2::zeros(),
                }
            })
        })
        .collect()
}

fn sweep(chart: &KleinChart, q: &[Matrix2<f64>], dq: &[[Matrix2<f64>; 2]], rows_first: bool) -> (Vec<f64>, Vec<[f64; 2]>) {
    let h = chart.spacing();
    let n = chart.len();
    let mut ubar = vec![f64::NAN; n];
    let mut grad = vec![[f64::NAN; 2]; n];
    let origin = chart.slot(0, 0).expect("chart contains its base");
    ubar[origin] = 0.0;
    grad[origin] = [0.0, 0.0];
    // one step from `a` to `b` along axis `d` with signed step `s`
    let step = |ubar: &mut Vec<f64>, grad: &mut Vec<[f64; 2]>, a: usize, b: usize, d: usize, s: f64| {
        let qa = q[a];
        let qb = q[b];
        let ga = grad[a];
        let mut gb = ga;
        for (i, g) in gb.iter_mut().enumerate() {
            *g += 0.5 * s * (qa[(i, d)] + qb[(i, d)]) - s * s / 12.0 * (dq[b][d][(i, d)] - dq[a][d][(i, d)]);
        }
        ubar[b] = ubar[a] + 0.5 * s * (ga[d] + gb[d]) - s * s / 12.0 * (qb[(d, d)] - qa[(d, d)]);
        grad[b] = gb;
    };
    let (first, second) = if rows_first { (0usize, 1usize) } else { (1, 0) };
    let idx = |along: i32, across: i32, axis: usize| if axis == 0 { (along, across) } else { (across, along) };
    let walk = |ubar: &mut Vec<f64>, grad: &mut Vec<[f64; 2]>, start: (i32, i32), axis: usize| {
        for dir in [1i32, -1] {
            let mut cur = start;
            loop {
                let next = if axis == 0 { (cur.0 + dir, cur.1) } else { (cur.0, cur.1 + dir) };
                let (Some(a), Some(b)) = (chart.slot(cur.0, cur.1), chart.slot(next.0, next.1)) else { break };
                step(ubar, grad, a, b, axis, dir as f64 * h);
                cur = next;
            }
        }
    };
    walk(&mut ubar, &mut grad, (0, 0), first);
    let half = chart.nodes().iter().map(|n| n.index.0.abs().max(n.index.1.abs())).max().unwrap_or(0);
    for along in -half..=half {
        let start = idx(along, 0, first);
        if chart.slot(start.0, start.1).is_some() {
            walk(&mut ubar, &mut grad, start, second);
        }
    }
    (ubar, grad)
}

/// Integrates `D²ū = Q` along grid sweeps (the `k2 = 0` row, then columns)
/// with the end-corrected trapezoid rule for both `∇ū` and `ū` (fourth order
/// in the spacing), then sets `u = ū cosh r`. The opposite sweep order is run as well and
/// their disagreement is returned; above `tol` it is reported as an error.
pub fn potential_from_codazzi(chart: &KleinChart, b: &OperatorField, tol: f64) -> Result<GridPotential, TensorError> {
    if b.values.len() != chart.len() {
        return Err(FieldError::LengthMismatch { got: b.values.len(), expected: chart.len() }.into());
    }
    let q = flat_hessians(chart, b);
    let dq = axis_derivatives(chart, &q);
    let (ubar, grad) = sweep(chart, &q, &dq, true);
    let (ubar2, _) = sweep(chart, &q, &dq, false);
    let path_gap = ubar.iter().zip(&ubar2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if !(path_gap <= tol) {
        return Err(FieldError::NotCodazzi(path_gap).into());
    }
    let u = ScalarField { values: chart.nodes().iter().zip(&ubar).map(|(n, v)| v * n.cosh_r()).collect() };
    Ok(GridPotential { u, ubar, grad, path_gap })
}

/// `ι_* b` on a grid chart, with closedness diagnostics.
#[derive(Debug, Clone)]
pub struct IotaStar {
    /// `(ι_* b)(∂1), (ι_* b)(∂2)` as ambient vectors.
    pub form: Vec<[MinkVec; 2]>,
    /// `|d^D(ι_* b)|` on an orthonormal frame, per node.
    pub closedness: ScalarField,
    /// Largest gap between the direct derivative and the splitting formula
    /// `ι_*(d^∇b) + (h(X, bY) − h(Y, bX)) ι`.
    pub splitting_gap: f64,
    /// Largest `|<(ι_* b)(∂i), x>|`.
    pub normal_component: f64,
    pub min_layer: u32,
}

impl IotaStar {
    pub fn residual(&self, chart: &KleinChart) -> f64 {
        chart.max_over(&self.closedness.values, self.min_layer)
    }
}

/// Norm of an ambient vector at `x`: tangential part in `h`, normal
/// coefficient in absolute value.
pub fn bundle_norm(x: MinkVec, v: MinkVec) -> f64 {
    let nu = -mink_dot(v, x);
    let t = v - x * nu;
    (mink_dot(t, t).max(0.0) + nu * nu).sqrt()
}

pub fn iota_star_form(chart: &KleinChart, b: &OperatorField) -> Result<IotaStar, TensorError> {
    if b.values.len() != chart.len() {
        return Err(FieldError::LengthMismatch { got: b.values.len(), expected: chart.len() }.into());
    }
    let nodes = chart.nodes();
    let form: Vec<[MinkVec; 2]> = (0..chart.len())
        .map(|n| {
            let bc = chart.coord_operator(n, &b.values[n]);
            let t = nodes[n].tangent;
            [t[0] * bc[(0, 0)] + t[1] * bc[(1, 0)], t[0] * bc[(0, 1)] + t[1] * bc[(1, 1)]]
        })
        .collect();
    let w1: Vec<MinkVec> = form.iter().map(|f| f[0]).collect();
    let w2: Vec<MinkVec> = form.iter().map(|f| f[1]).collect();
    let dform = chart.codazzi_form(b)?;
    let min_layer = b.min_layer + 1;
    let mut closed = vec![0.0; chart.len()];
    let mut gap: f64 = 0.0;
    let mut normal: f64 = 0.0;
    for n in chart.interior(min_layer) {
        let node = &nodes[n];
        let [d1w2, _] = chart.diff1(&w2, n).expect("interior stencil");
        let [_, d2w1] = chart.diff1(&w1, n).expect("interior stencil");
        let v = d1w2 - d2w1;
        let area = node.metric.determinant().sqrt();
        closed[n] = bundle_norm(node.point, v) / area;
        let bc = chart.coord_operator(n, &b.values[n]);
        let g = node.metric;
        let skew = (g * bc)[(0, 1)] - (g * bc)[(1, 0)];
        let split = node.tangent[0] * dform[n][0] + node.tangent[1] * dform[n][1] + node.point * skew;
        gap = gap.max(bundle_norm(node.point, v - split) / area);
        normal = normal.max(mink_dot(form[n][0], node.point).abs().max(mink_dot(form[n][1], node.point).abs()));
    }
    Ok(IotaStar { form, closedness: ScalarField { values: closed }, splitting_gap: gap, normal_component: normal, min_layer })
}

/// Frame matrix of an operator at a chart node from an ambient matrix.
pub fn node_operator(chart: &KleinChart, n: usize, b: &Matrix3<f64>) -> Matrix2<f64> {
    frame_operator(&chart.node(n).frame_vectors(), b)
}

/// Word for a single generator letter.
pub fn letter_word(gen: usize, inv: bool) -> Word {
    Word::letter(Letter::new(gen, inv))
}
