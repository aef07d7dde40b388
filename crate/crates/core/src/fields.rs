//! Tensor fields on the hyperbolic plane.
//!
//! Two representations live here. Pointwise fields are functions of the
//! point `x ∈ ℍ²`; an operator on `T_x ℍ² = x^⊥` is stored as the ambient
//! 3×3 matrix `B` with `B x = 0`, which needs no choice of frame. Sampled
//! fields live on a [`KleinChart`], a uniform grid in Klein coordinates
//! around a base point, and store 2×2 matrices in an orthonormal frame per
//! node.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{Matrix2, Matrix3, Vector2};
use thiserror::Error;

use crate::jet::{Jet2, Scalar};
use crate::mink::{boost_to, eta, lambda_iso, mink_dot, LinIsom, MinkVec};
use crate::quadrature::GaussRule;

/// Finite-difference residuals labelled second order must stay below
/// `FD_CONSTANT · Δ²`.
pub const FD_CONSTANT: f64 = 100.0;

/// `FD_CONSTANT · Δ²`.
pub fn fd_tolerance(spacing: f64) -> f64 {
    FD_CONSTANT * spacing * spacing
}

/// Accepted range of the error ratio across one halving of the spacing.
pub const RICHARDSON_WINDOW: std::ops::RangeInclusive<f64> = 3.3..=4.7;

/// Rotation by +π/2 in an oriented orthonormal frame.
pub const J: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("margin must lie in (0, 1), got {0}")]
    BadMargin(f64),
    #[error("metric degenerates near the ideal boundary (1 − |k|² = {0:.3e})")]
    Degenerate(f64),
    #[error("domain of Klein radius {radius} is not covered by the chart")]
    NotCovered { radius: f64 },
    #[error("field has {got} values, chart has {expected} nodes")]
    LengthMismatch { got: usize, expected: usize },
    #[error("integration paths disagree by {0:.3e}: input not Codazzi")]
    NotCodazzi(f64),
    #[error("operator is not invertible at node {0}")]
    Singular(usize),
    #[error("{0}")]
    Quadrature(#[from] crate::quadrature::QuadError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// pointwise

/// `(B_x e1, B_x e2)`: the oriented orthonormal frame of `T_x ℍ²` obtained by
/// boosting the frame at `e3`.
pub fn tangent_frame(x: MinkVec) -> [MinkVec; 2] {
    let b = boost_to(x);
    [b.apply(MinkVec::e1()), b.apply(MinkVec::e2())]
}

/// Ambient matrix of the operator with matrix `m` in the orthonormal frame
/// (`B f_c = Σ_a m_ac f_a`).
pub fn ambient_operator(frame: &[MinkVec; 2], m: &Matrix2<f64>) -> Matrix3<f64> {
    let e = eta();
    let mut out = Matrix3::zeros();
    for a in 0..2 {
        for c in 0..2 {
            out += m[(a, c)] * frame[a].to_vector() * (e * frame[c].to_vector()).transpose();
        }
    }
    out
}

/// Frame matrix of an ambient operator (`m_ac = <f_a, B f_c>`).
pub fn frame_operator(frame: &[MinkVec; 2], b: &Matrix3<f64>) -> Matrix2<f64> {
    Matrix2::from_fn(|a, c| mink_dot(frame[a], *b * frame[c]))
}

/// Frame matrix in the boost frame at `x`.
pub fn operator_at(x: MinkVec, b: &Matrix3<f64>) -> Matrix2<f64> {
    frame_operator(&tangent_frame(x), b)
}

/// `J b` for an ambient operator at `x`: `J = Λ(x)` on `x^⊥`.
pub fn rotate(x: MinkVec, b: &Matrix3<f64>) -> Matrix3<f64> {
    lambda_iso(x) * b
}

/// `tr(J b b')` at `x`.
pub fn trace_jbb(x: MinkVec, b: &Matrix3<f64>, b2: &Matrix3<f64>) -> f64 {
    (lambda_iso(x) * b * b2).trace()
}

/// Traceless part `b − (tr b / 2) Id` of an ambient operator at `x`.
pub fn traceless(x: MinkVec, b: &Matrix3<f64>) -> Matrix3<f64> {
    let f = tangent_frame(x);
    let m = frame_operator(&f, b);
    ambient_operator(&f, &(m - Matrix2::identity() * (0.5 * m.trace())))
}

/// The identity of `T_x ℍ²` as an ambient operator.
pub fn tangent_identity(x: MinkVec) -> Matrix3<f64> {
    // v ↦ v + <v,x> x
    Matrix3::identity() + x.to_vector() * (eta() * x.to_vector()).transpose()
}

/// Norm `sqrt(tr(b bᵀ))` of the frame matrix.
pub fn operator_norm(x: MinkVec, b: &Matrix3<f64>) -> f64 {
    operator_at(x, b).norm()
}

/// Scalar functions on ℍ² (restricted from functions on ℝ^{2,1}) that can be
/// evaluated on jets and hence differentiated exactly.
pub trait Potential {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T;

    fn value(&self, x: MinkVec) -> f64 {
        self.eval([x.x, x.y, x.z])
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        (**self).eval(x)
    }
}

/// Value, gradient and `Hess u − u Id` at a point.
#[derive(Debug, Clone, Copy)]
pub struct PotentialJet {
    pub value: f64,
    /// Gradient as an ambient tangent vector.
    pub grad: MinkVec,
    /// `Hess u − u Id` as an ambient operator.
    pub operator: Matrix3<f64>,
}

/// Jet of `ū(k) = u(lift(k)) · sqrt(1 − |k|²)`, the potential seen in the
/// Klein chart of `chart`, at Klein point `k`.
pub fn klein_jet<P: Potential + ?Sized>(u: &P, chart: &LinIsom, k: [f64; 2]) -> Jet2 {
    let k1 = Jet2::variable(0, k[0]);
    let k2 = Jet2::variable(1, k[1]);
    let w = (Jet2::cst(1.0) - k1 * k1 - k2 * k2).sqrt();
    let s = w.recip();
    let m = chart.matrix();
    let x: [Jet2; 3] = std::array::from_fn(|i| (k1.scale(m[(i, 0)]) + k2.scale(m[(i, 1)]) + Jet2::cst(m[(i, 2)])) * s);
    u.eval(x) * w
}

/// Exact `Hess u − u Id` through the Klein chart centred at `x`, where the
/// flat Hessian of `ū` at the origin equals it in the boost frame.
pub fn potential_jet<P: Potential + ?Sized>(u: &P, x: MinkVec) -> PotentialJet {
    let b = boost_to(x);
    let j = klein_jet(u, &b, [0.0, 0.0]);
    let frame = [b.apply(MinkVec::e1()), b.apply(MinkVec::e2())];
    let m = Matrix2::new(j.h[0], j.h[1], j.h[1], j.h[2]);
    PotentialJet {
        value: j.v,
        grad: frame[0] * j.g[0] + frame[1] * j.g[1],
        operator: ambient_operator(&frame, &m),
    }
}

/// `Hess u − u Id` at `x` as an ambient operator.
pub fn hess_minus_id_at<P: Potential + ?Sized>(u: &P, x: MinkVec) -> Matrix3<f64> {
    potential_jet(u, x).operator
}

/// `x ↦ <t, x>`, whose `Hess − Id` vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPotential(pub MinkVec);

impl Potential for LinearPotential {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        let t = self.0;
        x[0].scale(t.x) + x[1].scale(t.y) - x[2].scale(t.z)
    }
}

/// A constant function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPotential(pub f64);

impl Potential for ConstantPotential {
    fn eval<T: Scalar>(&self, _: [T; 3]) -> T {
        T::cst(self.0)
    }
}

/// Distance to a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistancePotential(pub MinkVec);

impl Potential for DistancePotential {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        let p = self.0;
        (x[2].scale(p.z) - x[0].scale(p.x) - x[1].scale(p.y)).acosh()
    }
}

/// `x3 · P(x1/x3, x2/x3)` for a polynomial `P` in the Klein coordinates of
/// `e3`. Linear `P` gives linear potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct KleinPolynomial {
    /// `(i, j, c)` for the monomial `c k1^i k2^j`.
    pub terms: Vec<(u32, u32, f64)>,
}

impl Potential for KleinPolynomial {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        let iz = x[2].recip();
        let k1 = x[0] * iz;
        let k2 = x[1] * iz;
        let mut p = T::cst(0.0);
        for &(i, j, c) in &self.terms {
            p = p + (k1.powi(i as i32) * k2.powi(j as i32)).scale(c);
        }
        p * x[2]
    }
}

/// Sum of two potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct SumPotential<A, B>(pub A, pub B);

impl<A: Potential, B: Potential> Potential for SumPotential<A, B> {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        self.0.eval(x) + self.1.eval(x)
    }
}

/// A potential multiplied by a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPotential<A>(pub f64, pub A);

impl<A: Potential> Potential for ScaledPotential<A> {
    fn eval<T: Scalar>(&self, x: [T; 3]) -> T {
        self.1.eval(x).scale(self.0)
    }
}

// ---------------------------------------------------------------------------
// grid

/// One grid node of a [`KleinChart`].
#[derive(Debug, Clone)]
pub struct Node {
    pub index: (i32, i32),
    pub k: [f64; 2],
    pub point: MinkVec,
    /// Hyperbolic metric in Klein coordinates.
    pub metric: Matrix2<f64>,
    /// Columns: coordinate components of the orthonormal frame (Gram–Schmidt
    /// on `∂1, ∂2` in that order).
    pub frame: Matrix2<f64>,
    /// Ambient images `∂1 X, ∂2 X` of the coordinate vectors.
    pub tangent: [MinkVec; 2],
    /// Area of the node's cell inside the quadrature disc.
    pub weight: f64,
    /// Chessboard distance to the nearest missing grid position, minus one.
    pub layer: u32,
}

impl Node {
    /// Ambient frame vectors.
    pub fn frame_vectors(&self) -> [MinkVec; 2] {
        let f = &self.frame;
        [
            self.tangent[0] * f[(0, 0)] + self.tangent[1] * f[(1, 0)],
            self.tangent[0] * f[(0, 1)] + self.tangent[1] * f[(1, 1)],
        ]
    }

    /// `cosh` of the distance to the chart base.
    pub fn cosh_r(&self) -> f64 {
        1.0 / (1.0 - self.k[0] * self.k[0] - self.k[1] * self.k[1]).sqrt()
    }
}

/// Values on the nodes of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

/// Frame components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub values: Vec<Vector2<f64>>,
}

/// Frame matrices per node; only nodes with `layer ≥ min_layer` carry
/// meaningful values.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorField {
    pub values: Vec<Matrix2<f64>>,
    pub min_layer: u32,
}

impl OperatorField {
    pub fn add(&self, o: &Self) -> Self {
        Self {
            values: self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect(),
            min_layer: self.min_layer.max(o.min_layer),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|a| a * s).collect(), min_layer: self.min_layer }
    }

    /// `J b` nodewise.
    pub fn rotate(&self) -> Self {
        Self { values: self.values.iter().map(|a| J * a).collect(), min_layer: self.min_layer }
    }

    /// `b − (tr b / 2) Id` nodewise.
    pub fn traceless(&self) -> Self {
        Self {
            values: self.values.iter().map(|a| a - Matrix2::identity() * (0.5 * a.trace())).collect(),
            min_layer: self.min_layer,
        }
    }

    pub fn trace(&self) -> ScalarField {
        ScalarField { values: self.values.iter().map(|a| a.trace()).collect() }
    }

    /// Largest `‖b − bᵀ‖` over the valid nodes.
    pub fn symmetry_defect(&self, chart: &KleinChart) -> f64 {
        chart.interior(self.min_layer).map(|n| (self.values[n] - self.values[n].transpose()).norm()).fold(0.0, f64::max)
    }
}

/// Christoffel symbols `Γ[k][i][j]` of the hyperbolic metric in Klein
/// coordinates: `Γ^k_ij = ψ_i δ^k_j + ψ_j δ^k_i` with `ψ = k / (1 − |k|²)`.
pub fn klein_christoffel(k: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
    let d = 1.0 - k[0] * k[0] - k[1] * k[1];
    let psi = [k[0] / d, k[1] / d];
    let mut g = [[[0.0; 2]; 2]; 2];
    for (a, ga) in g.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                ga[i][j] = if a == j { psi[i] } else { 0.0 } + if a == i { psi[j] } else { 0.0 };
            }
        }
    }
    g
}

/// Hyperbolic metric in Klein coordinates.
pub fn klein_metric(k: [f64; 2]) -> Matrix2<f64> {
    let d = 1.0 - k[0] * k[0] - k[1] * k[1];
    let kv = Vector2::new(k[0], k[1]);
    Matrix2::identity() / d + kv * kv.transpose() / (d * d)
}

const NO_NODE: usize = usize::MAX;
const MAX_LAYER: u32 = 16;

/// A uniform grid in the Klein coordinates of a base point, restricted to the
/// disc `|k| ≤ 1 − margin`.
#[derive(Debug, Clone)]
pub struct KleinChart {
    base: MinkVec,
    boost: LinIsom,
    spacing: f64,
    margin: f64,
    half: i32,
    slots: Vec<usize>,
    nodes: Vec<Node>,
}

impl KleinChart {
    pub fn build(base: MinkVec, spacing: f64, margin: f64) -> Result<Self, FieldError> {
        if !(spacing > 0.0 && spacing.is_finite() && spacing < 1.0) {
            return Err(FieldError::BadSpacing(spacing));
        }
        if !(margin > 0.0 && margin < 1.0) {
            return Err(FieldError::BadMargin(margin));
        }
        let rho = 1.0 - margin;
        if 1.0 - rho * rho < 1e-8 {
            return Err(FieldError::Degenerate(1.0 - rho * rho));
        }
        let boost = boost_to(base);
        let half = (rho / spacing).floor() as i32;
        let width = (2 * half + 1) as usize;
        let mut slots = vec![NO_NODE; width * width];
        let mut nodes = Vec::new();
        let weight_radius = rho - spacing;
        for j in -half..=half {
            for i in -half..=half {
                let k = [i as f64 * spacing, j as f64 * spacing];
                let r2 = k[0] * k[0] + k[1] * k[1];
                if r2 > rho * rho {
                    continue;
                }
                let s = 1.0 / (1.0 - r2).sqrt();
                let s3 = s * s * s;
                let tangent = [
                    boost.apply(MinkVec::new(s + k[0] * k[0] * s3, k[0] * k[1] * s3, k[0] * s3)),
                    boost.apply(MinkVec::new(k[0] * k[1] * s3, s + k[1] * k[1] * s3, k[1] * s3)),
                ];
                let metric = klein_metric(k);
                let frame = gram_schmidt(&metric);
                let weight = cell_weight(i, j, spacing, weight_radius.max(0.0));
                slots[(j + half) as usize * width + (i + half) as usize] = nodes.len();
                nodes.push(Node {
                    index: (i, j),
                    k,
                    point: boost.apply(MinkVec::new(k[0] * s, k[1] * s, s)),
                    metric,
                    frame,
                    tangent,
                    weight,
                    layer: 0,
                });
            }
        }
        let mut chart = Self { base, boost, spacing, margin, half, slots, nodes };
        chart.assign_layers();
        Ok(chart)
    }

    fn assign_layers(&mut self) {
        // breadth-first erosion from the missing positions
        let n = self.nodes.len();
        let mut layer = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            let (i, j) = node.index;
            let exposed = (-1..=1).any(|dj| (-1..=1).any(|di| self.slot(i + di, j + dj).is_none()));
            if exposed {
                layer[idx] = 0;
                queue.push_back(idx);
            }
        }
        while let Some(idx) = queue.pop_front() {
            let (i, j) = self.nodes[idx].index;
            let next = layer[idx] + 1;
            for dj in -1..=1 {
                for di in -1..=1 {
                    if let Some(m) = self.slot(i + di, j + dj) {
                        if layer[m] == u32::MAX {
                            layer[m] = next;
                            queue.push_back(m);
                        }
                    }
                }
            }
        }
        for (node, l) in self.nodes.iter_mut().zip(layer) {
            node.layer = l.min(MAX_LAYER);
        }
    }

    pub fn base(&self) -> MinkVec {
        self.base
    }

    /// The boost taking `e3` to the base point (the chart's Klein frame).
    pub fn boost(&self) -> &LinIsom {
        &self.boost
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> &Node {
        &self.nodes[n]
    }

    /// Node at grid position `(i, j)`.
    pub fn slot(&self, i: i32, j: i32) -> Option<usize> {
        if i.abs() > self.half || j.abs() > self.half {
            return None;
        }
        let width = (2 * self.half + 1) as usize;
        let s = self.slots[(j + self.half) as usize * width + (i + self.half) as usize];
        (s != NO_NODE).then_some(s)
    }

    pub fn neighbor(&self, n: usize, di: i32, dj: i32) -> Option<usize> {
        let (i, j) = self.nodes[n].index;
        self.slot(i + di, j + dj)
    }

    /// Indices of the nodes with `layer ≥ min_layer`.
    pub fn interior(&self, min_layer: u32) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&n| self.nodes[n].layer >= min_layer)
    }

    /// Point of ℍ² at Klein coordinates `k`.
    pub fn lift(&self, k: [f64; 2]) -> MinkVec {
        let s = 1.0 / (1.0 - k[0] * k[0] - k[1] * k[1]).sqrt();
        self.boost.apply(MinkVec::new(k[0] * s, k[1] * s, s))
    }

    pub fn sample(&self, f: impl Fn(MinkVec) -> f64) -> ScalarField {
        ScalarField { values: self.nodes.iter().map(|n| f(n.point)).collect() }
    }

    pub fn sample_potential<P: Potential + ?Sized>(&self, u: &P) -> ScalarField {
        self.sample(|x| u.value(x))
    }

    /// Samples an ambient operator field into node frames.
    pub fn sample_operator(&self, f: impl Fn(MinkVec) -> Matrix3<f64>) -> OperatorField {
        OperatorField {
            values: self.nodes.iter().map(|n| frame_operator(&n.frame_vectors(), &f(n.point))).collect(),
            min_layer: 0,
        }
    }

    /// Ambient operator at node `n` from its frame matrix.
    pub fn to_ambient(&self, n: usize, m: &Matrix2<f64>) -> Matrix3<f64> {
        ambient_operator(&self.nodes[n].frame_vectors(), m)
    }

    /// Mixed coordinate components `b^i_j` from a frame matrix.
    pub fn coord_operator(&self, n: usize, m: &Matrix2<f64>) -> Matrix2<f64> {
        let f = &self.nodes[n].frame;
        f * m * f.try_inverse().expect("frames are invertible")
    }

    /// Frame matrix from mixed coordinate components.
    pub fn frame_from_coord(&self, n: usize, bc: &Matrix2<f64>) -> Matrix2<f64> {
        let f = &self.nodes[n].frame;
        f.try_inverse().expect("frames are invertible") * bc * f
    }

    /// Central first differences `(∂1 f, ∂2 f)` at node `n`.
    pub fn diff1<T>(&self, vals: &[T], n: usize) -> Option<[T; 2]>
    where
        T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let h = 0.5 / self.spacing;
        let e = self.neighbor(n, 1, 0)?;
        let w = self.neighbor(n, -1, 0)?;
        let no = self.neighbor(n, 0, 1)?;
        let s = self.neighbor(n, 0, -1)?;
        Some([(vals[e] - vals[w]) * h, (vals[no] - vals[s]) * h])
    }

    /// Central second differences `(f11, f12, f22)` at node `n`.
    pub fn diff2<T>(&self, vals: &[T], n: usize) -> Option<[T; 3]>
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let h2 = 1.0 / (self.spacing * self.spacing);
        let c = vals[n];
        let e = vals[self.neighbor(n, 1, 0)?];
        let w = vals[self.neighbor(n, -1, 0)?];
        let no = vals[self.neighbor(n, 0, 1)?];
        let s = vals[self.neighbor(n, 0, -1)?];
        let ne = vals[self.neighbor(n, 1, 1)?];
        let nw = vals[self.neighbor(n, -1, 1)?];
        let se = vals[self.neighbor(n, 1, -1)?];
        let sw = vals[self.neighbor(n, -1, -1)?];
        Some([
            (e + w - c - c) * h2,
            (ne + sw - nw - se) * (0.25 * h2),
            (no + s - c - c) * h2,
        ])
    }

    fn check_len(&self, got: usize) -> Result<(), FieldError> {
        if got != self.nodes.len() {
            return Err(FieldError::LengthMismatch { got, expected: self.nodes.len() });
        }
        Ok(())
    }

    /// `Hess u − u Id` through the flat Hessian of `ū = u / cosh r`:
    /// `h(b ∂i, ∂j) = cosh r · ∂ij ū`. Valid from layer 1.
    pub fn hess_minus_id(&self, u: &ScalarField) -> Result<OperatorField, FieldError> {
        self.check_len(u.values.len())?;
        let ubar: Vec<f64> = self.nodes.iter().zip(&u.values).map(|(n, v)| v / n.cosh_r()).collect();
        let mut out = vec![Matrix2::zeros(); self.nodes.len()];
        for n in self.interior(1) {
            let [d11, d12, d22] = self.diff2(&ubar, n).expect("interior stencil");
            let c = self.nodes[n].cosh_r();
            let s = Matrix2::new(d11, d12, d12, d22) * c;
            let f = &self.nodes[n].frame;
            out[n] = f.transpose() * s * f;
        }
        Ok(OperatorField { values: out, min_layer: 1 })
    }

    /// `Hess u − u Id` with covariant differences (`∂ij u − Γ^l_ij ∂l u`).
    /// Valid from layer 1.
    pub fn hess_minus_id_covariant(&self, u: &ScalarField) -> Result<OperatorField, FieldError> {
        self.check_len(u.values.len())?;
        let mut out = vec![Matrix2::zeros(); self.nodes.len()];
        for n in self.interior(1) {
            let node = &self.nodes[n];
            let [d11, d12, d22] = self.diff2(&u.values, n).expect("interior stencil");
            let d = self.diff1(&u.values, n).expect("interior stencil");
            let gam = klein_christoffel(node.k);
            let hess = Matrix2::from_fn(|i, j| {
                let dij = [[d11, d12], [d12, d22]][i][j];
                dij - gam[0][i][j] * d[0] - gam[1][i][j] * d[1]
            });
            let s = hess - node.metric * u.values[n];
            out[n] = node.frame.transpose() * s * node.frame;
        }
        Ok(OperatorField { values: out, min_layer: 1 })
    }

    fn coord_field(&self, b: &OperatorField) -> Vec<Matrix2<f64>> {
        (0..self.nodes.len())
            .map(|n| if self.nodes[n].layer >= b.min_layer { self.coord_operator(n, &b.values[n]) } else { Matrix2::zeros() })
            .collect()
    }

    /// Coordinate components of `d^∇b(∂1, ∂2)` per node (zero outside the
    /// valid layers, which start at `b.min_layer + 1`).
    pub fn codazzi_form(&self, b: &OperatorField) -> Result<Vec<Vector2<f64>>, FieldError> {
        self.check_len(b.values.len())?;
        let bc = self.coord_field(b);
        let mut out = vec![Vector2::zeros(); self.nodes.len()];
        for n in self.interior(b.min_layer + 1) {
            let [d1, d2] = self.diff1(&bc, n).expect("interior stencil");
            let gam = klein_christoffel(self.nodes[n].k);
            let m = bc[n];
            out[n] = Vector2::from_fn(|i, _| {
                let mut v = d1[(i, 1)] - d2[(i, 0)];
                for k in 0..2 {
                    v += gam[i][0][k] * m[(k, 1)] - gam[i][1][k] * m[(k, 0)];
                }
                v
            });
        }
        Ok(out)
    }

    /// Norm of `d^∇b` on an orthonormal frame, per node.
    pub fn codazzi_norms(&self, b: &OperatorField) -> Result<ScalarField, FieldError> {
        let form = self.codazzi_form(b)?;
        Ok(ScalarField {
            values: form
                .iter()
                .zip(&self.nodes)
                .map(|(v, n)| ((v.transpose() * n.metric * v)[0] / n.metric.determinant()).sqrt())
                .collect(),
        })
    }

    /// Max of `|d^∇b|` over nodes with layer ≥ 2 (and ≥ `b.min_layer + 1`).
    pub fn codazzi_residual(&self, b: &OperatorField) -> Result<f64, FieldError> {
        let norms = self.codazzi_norms(b)?;
        Ok(self.max_over(&norms.values, (b.min_layer + 1).max(2)))
    }

    /// Max of `|values|` over nodes with `layer ≥ min_layer`.
    pub fn max_over(&self, values: &[f64], min_layer: u32) -> f64 {
        self.interior(min_layer).map(|n| values[n].abs()).fold(0.0, f64::max)
    }

    /// Max over nodes with `layer ≥ min_layer` and `|k| ≤ radius`.
    pub fn max_within(&self, values: &[f64], min_layer: u32, radius: f64) -> f64 {
        self.interior(min_layer)
            .filter(|&n| {
                let k = self.nodes[n].k;
                k[0] * k[0] + k[1] * k[1] <= radius * radius
            })
            .map(|n| values[n].abs())
            .fold(0.0, f64::max)
    }

    /// Coordinate components of the 1-form `δb(v) = tr(w ↦ (∇_w b) v)`.
    pub fn divergence(&self, b: &OperatorField) -> Result<Vec<Vector2<f64>>, FieldError> {
        self.check_len(b.values.len())?;
        let bc = self.coord_field(b);
        let mut out = vec![Vector2::zeros(); self.nodes.len()];
        for n in self.interior(b.min_layer + 1) {
            let [d1, d2] = self.diff1(&bc, n).expect("interior stencil");
            let gam = klein_christoffel(self.nodes[n].k);
            let m = bc[n];
            out[n] = Vector2::from_fn(|k, _| {
                let mut v = d1[(0, k)] + d2[(1, k)];
                for i in 0..2 {
                    for l in 0..2 {
                        v += gam[i][i][l] * m[(l, k)] - gam[l][i][k] * m[(i, l)];
                    }
                }
                v
            });
        }
        Ok(out)
    }

    /// Coordinate components of `df`.
    pub fn differential(&self, f: &ScalarField, min_layer: u32) -> Vec<Vector2<f64>> {
        let mut out = vec![Vector2::zeros(); self.nodes.len()];
        for n in self.interior(min_layer + 1) {
            let [a, b] = self.diff1(&f.values, n).expect("interior stencil");
            out[n] = Vector2::new(a, b);
        }
        out
    }

    /// `tr h⁻¹ ∇ω` for a 1-form given by coordinate components.
    pub fn codifferential(&self, w: &[Vector2<f64>], min_layer: u32) -> ScalarField {
        let mut out = vec![0.0; self.nodes.len()];
        for n in self.interior(min_layer + 1) {
            let [d1, d2] = self.diff1(w, n).expect("interior stencil");
            let node = &self.nodes[n];
            let gam = klein_christoffel(node.k);
            let ginv = node.metric.try_inverse().expect("metric is positive");
            let mut v = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let dij = if i == 0 { d1[j] } else { d2[j] };
                    let c = gam[0][i][j] * w[n][0] + gam[1][i][j] * w[n][1];
                    v += ginv[(i, j)] * (dij - c);
                }
            }
            out[n] = v;
        }
        ScalarField { values: out }
    }

    /// Laplace–Beltrami operator `g^{ij}(∂ij f − Γ^l_ij ∂l f)`.
    pub fn laplacian(&self, f: &ScalarField, min_layer: u32) -> ScalarField {
        let mut out = vec![0.0; self.nodes.len()];
        for n in self.interior(min_layer + 1) {
            let [d11, d12, d22] = self.diff2(&f.values, n).expect("interior stencil");
            let d = self.diff1(&f.values, n).expect("interior stencil");
            let node = &self.nodes[n];
            let gam = klein_christoffel(node.k);
            let ginv = node.metric.try_inverse().expect("metric is positive");
            let dd = [[d11, d12], [d12, d22]];
            let mut v = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    v += ginv[(i, j)] * (dd[i][j] - gam[0][i][j] * d[0] - gam[1][i][j] * d[1]);
                }
            }
            out[n] = v;
        }
        ScalarField { values: out }
    }

    /// Per-node `|δb − d tr b|_h`, valid from `b.min_layer + 1`.
    pub fn divergence_defect(&self, b: &OperatorField) -> Result<ScalarField, FieldError> {
        let div = self.divergence(b)?;
        let dtr = self.differential(&b.trace(), b.min_layer);
        Ok(ScalarField {
            values: (0..self.nodes.len())
                .map(|n| {
                    let v = div[n] - dtr[n];
                    let ginv = self.nodes[n].metric.try_inverse().expect("metric is positive");
                    (v.transpose() * ginv * v)[0].sqrt()
                })
                .collect(),
        })
    }

    /// Per-node `L(b) − tr b / 2` with `L(b) = −(Δ − 1/2) tr b + δδb`,
    /// valid from `b.min_layer + 2`.
    pub fn lichnerowicz_defect(&self, b: &OperatorField) -> Result<ScalarField, FieldError> {
        let tr = b.trace();
        let div = self.divergence(b)?;
        let dd = self.codifferential(&div, b.min_layer + 1);
        let lap = self.laplacian(&tr, b.min_layer);
        Ok(ScalarField {
            values: (0..self.nodes.len()).map(|n| -lap.values[n] + 0.5 * tr.values[n] + dd.values[n] - 0.5 * tr.values[n]).collect(),
        })
    }

    /// Gauss curvature by the Brioschi formula from metric coefficient arrays
    /// `(E, F, G)`; valid one layer inside the arrays' own validity.
    pub fn brioschi(&self, e: &[f64], f: &[f64], g: &[f64], n: usize) -> Option<f64> {
        let [eu, ev] = self.diff1(e, n)?;
        let [fu, fv] = self.diff1(f, n)?;
        let [gu, gv] = self.diff1(g, n)?;
        let [_, _, evv] = self.diff2(e, n)?;
        let [_, fuv, _] = self.diff2(f, n)?;
        let [guu, _, _] = self.diff2(g, n)?;
        let (e0, f0, g0) = (e[n], f[n], g[n]);
        let m1 = Matrix3::new(
            -0.5 * evv + fuv - 0.5 * guu,
            0.5 * eu,
            fu - 0.5 * ev,
            fv - 0.5 * gu,
            e0,
            f0,
            0.5 * gv,
            f0,
            g0,
        );
        let m2 = Matrix3::new(0.0, 0.5 * ev, 0.5 * gu, 0.5 * ev, e0, f0, 0.5 * gu, f0, g0);
        let det = e0 * g0 - f0 * f0;
        Some((m1.determinant() - m2.determinant()) / (det * det))
    }

    /// Curvature of the chart's own metric samples (should be −1).
    pub fn gauss_curvature(&self) -> ScalarField {
        let e: Vec<f64> = self.nodes.iter().map(|n| n.metric[(0, 0)]).collect();
        let f: Vec<f64> = self.nodes.iter().map(|n| n.metric[(0, 1)]).collect();
        let g: Vec<f64> = self.nodes.iter().map(|n| n.metric[(1, 1)]).collect();
        ScalarField { values: (0..self.nodes.len()).map(|n| self.brioschi(&e, &f, &g, n).unwrap_or(f64::NAN)).collect() }
    }

    /// `Σ w f` with the chart's area weights (fixed node order).
    pub fn integrate(&self, f: &ScalarField) -> Result<f64, FieldError> {
        self.check_len(f.values.len())?;
        Ok(self.nodes.iter().zip(&f.values).map(|(n, v)| n.weight * v).sum())
    }

    /// Area weights of the Klein disc `|k| ≤ radius`.
    pub fn disc_weights(&self, radius: f64) -> Result<Vec<f64>, FieldError> {
        let rho = 1.0 - self.margin;
        if !(radius > 0.0 && radius + self.spacing * std::f64::consts::FRAC_1_SQRT_2 <= rho) {
            return Err(FieldError::NotCovered { radius });
        }
        Ok(self.nodes.iter().map(|n| cell_weight(n.index.0, n.index.1, self.spacing, radius)).collect())
    }

    /// Writes one CSV row per node: Klein coordinates, the point, then the
    /// given columns.
    pub fn write_csv(&self, mut w: impl Write, columns: &[(&str, &[f64])]) -> Result<(), FieldError> {
        for (_, c) in columns {
            self.check_len(c.len())?;
        }
        write!(w, "k1,k2,x,y,z,layer")?;
        for (name, _) in columns {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (n, node) in self.nodes.iter().enumerate() {
            write!(w, "{},{},{},{},{},{}", node.k[0], node.k[1], node.point.x, node.point.y, node.point.z, node.layer)?;
            for (_, c) in columns {
                write!(w, ",{}", c[n])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Gram–Schmidt on the coordinate basis for the metric `g`.
fn gram_schmidt(g: &Matrix2<f64>) -> Matrix2<f64> {
    let a = 1.0 / g[(0, 0)].sqrt();
    // second vector: ∂2 − (<∂2,e1>) e1
    let p = g[(0, 1)] * a;
    let v = Vector2::new(-p * a, 1.0);
    let nv = (v.transpose() * g * v)[0].sqrt();
    Matrix2::new(a, v[0] / nv, 0.0, v[1] / nv)
}

/// `∫∫ (1 − |k|²)^{-3/2}` over the grid cell of `(i, j)` intersected with the
/// disc `|k| ≤ rho`. The inner integral is closed form; the outer one uses
/// Gauss–Legendre between the points where the clipping changes, with a
/// square-root substitution at the ends of the disc.
fn cell_weight(i: i32, j: i32, h: f64, rho: f64) -> f64 {
    let x0 = (i as f64 - 0.5) * h;
    let x1 = (i as f64 + 0.5) * h;
    let y0 = (j as f64 - 0.5) * h;
    let y1 = (j as f64 + 0.5) * h;
    let lo = x0.max(-rho);
    let hi = x1.min(rho);
    if lo >= hi {
        return 0.0;
    }
    let inner = |x: f64| {
        let a2 = 1.0 - x * x;
        let s = (rho * rho - x * x).max(0.0).sqrt();
        let ya = y0.max(-s);
        let yb = y1.min(s);
        if ya >= yb {
            return 0.0;
        }
        let prim = |y: f64| y / (a2 * (a2 - y * y).sqrt());
        prim(yb) - prim(ya)
    };
    let mut breaks = vec![lo, hi];
    for y in [y0, y1] {
        if y.abs() < rho {
            let xs = (rho * rho - y * y).sqrt();
            for x in [xs, -xs] {
                if x > lo && x < hi {
                    breaks.push(x);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    let rule = GAUSS8.with(|r| r.clone());
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        if b >= rho {
            // x = rho − (rho − a) t², t ∈ [0, 1]
            let l = rho - a;
            total += rule.mapped(0.0, 1.0).map(|(t, wt)| wt * 2.0 * l * t * inner(rho - l * t * t)).sum::<f64>();
        } else if a <= -rho {
            let l = b + rho;
            total += rule.mapped(0.0, 1.0).map(|(t, wt)| wt * 2.0 * l * t * inner(-rho + l * t * t)).sum::<f64>();
        } else {
            total += rule.mapped(a, b).map(|(x, wt)| wt * inner(x)).sum::<f64>();
        }
    }
    total
}

thread_local! {
    static GAUSS8: GaussRule = GaussRule::new(8).expect("positive order");
}
