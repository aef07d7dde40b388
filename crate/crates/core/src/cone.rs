//! Cone points: hyperbolic, conformal and Klein models of a cone of angle
//! `θ0`, harmonic tensors near the tip, peripheral potentials, the flat
//! space-time model around a particle, cone-angle measurement and the wedge
//! surgery that splits one cone point into two.
//!
//! Fields near the tip are described on the universal cover of the punctured
//! disc by polar coordinates `(r, φ)`, `φ ∈ ℝ`, developed onto ℍ² by
//! `(r, φ) ↦ polar_point(r, θ0 φ / 2π)`; the deck transformation
//! `φ ↦ φ + 2π` acts by the rotation of angle `θ0` about `e3`.

use nalgebra::{Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{ambient_operator, fd_tolerance, frame_operator, tangent_frame};
use crate::holonomy::{peripheral_reduction, HolonomyError, Peripheral};
use crate::mink::{mink_dot, polar_point, z_rotation, LinIsom, MinkVec};
use crate::quadrature::GaussRule;
use crate::tensors::{DiscChart, QuadDiffLocal};

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("cone angle {0} outside (0, 2π)")]
    BadAngle(f64),
    #[error("bad radii: need 0 < eps < r_max, got eps = {eps}, r_max = {r_max}")]
    BadRadius { eps: f64, r_max: f64 },
    #[error("need at least {0} nodes per direction")]
    TooCoarse(usize),
    #[error("operator bounds violated: eigenvalue {eig:.4} outside ({lo}, {hi})")]
    Positivity { eig: f64, lo: f64, hi: f64 },
    #[error("peripheral class is not trivial: axis component {0:.3e}")]
    Peripheral(f64),
    #[error("growth exponent {0} not admissible (need > −2)")]
    Exponent(f64),
    #[error("{what}: fit did not converge (R² = {r_squared:.4})")]
    Fit { what: &'static str, r_squared: f64 },
    #[error("degenerate wedge: {0}")]
    Degenerate(&'static str),
    #[error("scene: {0}")]
    Parse(String),
    #[error(transparent)]
    Holonomy(#[from] HolonomyError),
}

// ---------------------------------------------------------------------------
// angles and models

/// A cone angle `θ0 ∈ (0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConeAngle(f64);

impl TryFrom<f64> for ConeAngle {
    type Error = ConeError;

    fn try_from(v: f64) -> Result<Self, ConeError> {
        ConeAngle::new(v)
    }
}

impl From<ConeAngle> for f64 {
    fn from(a: ConeAngle) -> f64 {
        a.0
    }
}

impl ConeAngle {
    pub fn new(theta: f64) -> Result<Self, ConeError> {
        if !(theta > 0.0 && theta < std::f64::consts::TAU) {
            return Err(ConeError::BadAngle(theta));
        }
        Ok(Self(theta))
    }

    pub fn theta(self) -> f64 {
        self.0
    }

    /// `β = θ0/2π − 1 ∈ (−1, 0)`.
    pub fn beta(self) -> f64 {
        self.scale() - 1.0
    }

    /// `θ0 / 2π`.
    pub fn scale(self) -> f64 {
        self.0 / std::f64::consts::TAU
    }

    /// `k = 2π/θ0`, the exponent of `z = ζ^k`.
    pub fn k(self) -> f64 {
        1.0 / self.scale()
    }

    /// Holonomy of the deck transformation.
    pub fn deck(self) -> LinIsom {
        z_rotation(self.0)
    }

    /// Decay exponent `α` of `|b_q| ~ r^α` for `q ~ z^m dz²`.
    pub fn harmonic_exponent(self, order: i32) -> f64 {
        (order as f64 - 2.0 * self.beta()) / (1.0 + self.beta())
    }
}

/// Developed point of cover coordinates `(r, φ)`.
pub fn develop(angle: ConeAngle, r: f64, phi: f64) -> MinkVec {
    polar_point(r, angle.scale() * phi)
}

/// `∂r X, ∂φ X` at `(r, φ)`.
pub fn polar_vectors(angle: ConeAngle, r: f64, phi: f64) -> [MinkVec; 2] {
    let c = angle.scale();
    let (s, co) = (c * phi).sin_cos();
    [
        MinkVec::new(r.cosh() * co, r.cosh() * s, r.sinh()),
        MinkVec::new(-s, co, 0.0) * (c * r.sinh()),
    ]
}

/// Conformal coordinate `z = tanh(r/2)^k e^{iφ}`.
pub fn conformal_coordinate(angle: ConeAngle, r: f64, phi: f64) -> Complex64 {
    Complex64::from_polar((0.5 * r).tanh().powf(angle.k()), phi)
}

/// `e^{2ξ} = 4(1+β)² / (1 − |z|^{2(1+β)})²`, so that `h = e^{2ξ}|z|^{2β}|dz|²`.
pub fn conformal_factor(angle: ConeAngle, z: Complex64) -> f64 {
    let s = angle.scale();
    let d = 1.0 - z.norm().powf(2.0 * s);
    4.0 * s * s / (d * d)
}

/// `r = log((1 + |z|^{1/k}) / (1 − |z|^{1/k}))`.
pub fn radius_from_conformal(angle: ConeAngle, z_abs: f64) -> f64 {
    let w = z_abs.powf(angle.scale());
    ((1.0 + w) / (1.0 - w)).ln()
}

/// Which coordinates a [`ConeChart`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    /// `(r, φ)` with `dr² + (θ0/2π)² sinh²r dφ²`.
    Polar,
    /// `(Re z, Im z)` with `e^{2ξ}|z|^{2β}|dz|²`.
    Conformal,
    /// `(ρ, φ)`, `ρ = tanh r`, with the flat Klein metric `dρ² + (θ0/2π)²ρ² dφ²`.
    Klein,
}

/// One node of a [`ConeChart`].
#[derive(Debug, Clone)]
pub struct ConeNode {
    pub r: f64,
    pub phi: f64,
    pub coords: [f64; 2],
    pub point: MinkVec,
    /// Metric in the chart's own coordinates.
    pub metric: Matrix2<f64>,
}

/// Nodes on a geometric radius ladder `eps ≤ r ≤ r_max` times uniform `φ`
/// over three periods `[−2π, 4π)`, so every node of the middle period has a
/// full stencil across the seam.
#[derive(Debug, Clone)]
pub struct ConeChart {
    pub angle: ConeAngle,
    pub kind: ChartKind,
    pub radii: Vec<f64>,
    pub phis: Vec<f64>,
    nodes: Vec<ConeNode>,
    per_period: usize,
}

pub fn cone_chart(
    angle: ConeAngle,
    kind: ChartKind,
    eps: f64,
    r_max: f64,
    n_radial: usize,
    n_angular: usize,
) -> Result<ConeChart, ConeError> {
    if !(eps > 0.0 && r_max > eps && r_max.is_finite()) {
        return Err(ConeError::BadRadius { eps, r_max });
    }
    if n_radial < 5 || n_angular < 8 {
        return Err(ConeError::TooCoarse(8));
    }
    let radii: Vec<f64> =
        (0..n_radial).map(|i| eps * (r_max / eps).powf(i as f64 / (n_radial - 1) as f64)).collect();
    let tau = std::f64::consts::TAU;
    let phis: Vec<f64> = (0..3 * n_angular).map(|j| -tau + tau * j as f64 / n_angular as f64).collect();
    let c = angle.scale();
    let mut nodes = Vec::with_capacity(radii.len() * phis.len());
    for &r in &radii {
        for &phi in &phis {
            let (coords, metric) = match kind {
                ChartKind::Polar => ([r, phi], Matrix2::new(1.0, 0.0, 0.0, (c * r.sinh()).powi(2))),
                ChartKind::Conformal => {
                    let z = conformal_coordinate(angle, r, phi);
                    let g = conformal_factor(angle, z) * z.norm().powf(2.0 * angle.beta());
                    ([z.re, z.im], Matrix2::identity() * g)
                }
                ChartKind::Klein => {
                    let rho = r.tanh();
                    ([rho, phi], Matrix2::new(1.0, 0.0, 0.0, (c * rho).powi(2)))
                }
            };
            nodes.push(ConeNode { r, phi, coords, point: develop(angle, r, phi), metric });
        }
    }
    Ok(ConeChart { angle, kind, radii, phis, nodes, per_period: n_angular })
}

/// The Klein cone chart: the flat metric pulled back from the Klein
/// projection at the tip.
pub fn klein_cone_chart(angle: ConeAngle, eps: f64, r_max: f64, n_radial: usize, n_angular: usize) -> Result<ConeChart, ConeError> {
    cone_chart(angle, ChartKind::Klein, eps, r_max, n_radial, n_angular)
}

impl ConeChart {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ConeNode] {
        &self.nodes
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.phis.len() + j
    }

    pub fn node(&self, i: usize, j: usize) -> &ConeNode {
        &self.nodes[self.index(i, j)]
    }

    /// Angular indices of the middle period `φ ∈ [0, 2π)`.
    pub fn period(&self) -> std::ops::Range<usize> {
        self.per_period..2 * self.per_period
    }

    /// Jacobian of the chart coordinates with respect to `(r, φ)`.
    fn jacobian(&self, n: &ConeNode) -> Matrix2<f64> {
        match self.kind {
            ChartKind::Polar => Matrix2::identity(),
            ChartKind::Conformal => {
                let k = self.angle.k();
                let t = (0.5 * n.r).tanh();
                let a = t.powf(k);
                let da = k * t.powf(k - 1.0) * 0.5 / (0.5 * n.r).cosh().powi(2);
                let (s, c) = n.phi.sin_cos();
                Matrix2::new(da * c, -a * s, da * s, a * c)
            }
            ChartKind::Klein => Matrix2::new(1.0 / n.r.cosh().powi(2), 0.0, 0.0, 1.0),
        }
    }

    /// Metric pulled back to `(r, φ)`.
    pub fn polar_metric(&self, n: &ConeNode) -> Matrix2<f64> {
        let j = self.jacobian(n);
        j.transpose() * n.metric * j
    }

    /// Largest relative gap between the pulled-back metric and the exact
    /// polar form (hyperbolic for the polar and conformal charts, the Klein
    /// flat metric otherwise).
    pub fn metric_agreement(&self) -> f64 {
        let c = self.angle.scale();
        self.nodes
            .iter()
            .map(|n| {
                let exact = match self.kind {
                    ChartKind::Klein => Matrix2::new(1.0 / n.r.cosh().powi(4), 0.0, 0.0, (c * n.r.tanh()).powi(2)),
                    _ => Matrix2::new(1.0, 0.0, 0.0, (c * n.r.sinh()).powi(2)),
                };
                let d = self.polar_metric(n) - exact;
                Matrix2::from_fn(|a, b| d[(a, b)] / (exact[(a, a)] * exact[(b, b)]).sqrt()).abs().max()
            })
            .fold(0.0, f64::max)
    }

    /// Length of the circle `r = radii[i]` (one period, periodic trapezoid
    /// rule in `φ`).
    pub fn circumference(&self, i: usize) -> f64 {
        let dphi = std::f64::consts::TAU / self.per_period as f64;
        self.period().map(|j| self.polar_metric(self.node(i, j))[(1, 1)].sqrt() * dphi).sum()
    }

    /// Gauss curvature of the (rotationally symmetric, orthogonal) metric on
    /// ring `i`: `K = −(2√(EG))⁻¹ ∂r(G_r / √(EG))`, by differences in
    /// `s = ln r`. Undefined on the two innermost and outermost rings.
    pub fn gauss_curvature(&self, i: usize) -> Option<f64> {
        if i < 2 || i + 2 >= self.radii.len() {
            return None;
        }
        let j = self.per_period;
        let ds = (self.radii[1] / self.radii[0]).ln();
        let eg = |i: usize| {
            let m = self.polar_metric(self.node(i, j));
            (m[(0, 0)], m[(1, 1)])
        };
        let w = |i: usize| {
            let (e, g) = eg(i);
            let (_, gp) = eg(i + 1);
            let (_, gm) = eg(i - 1);
            let g_r = (gp - gm) / (2.0 * ds) / self.radii[i];
            g_r / (e * g).sqrt()
        };
        let w_r = (w(i + 1) - w(i - 1)) / (2.0 * ds) / self.radii[i];
        let (e, g) = eg(i);
        Some(-w_r / (2.0 * (e * g).sqrt()))
    }

    /// Largest `|X(r, φ + 2π) − R_{θ0} X(r, φ)|` over the chart.
    pub fn deck_residual(&self) -> f64 {
        let deck = self.angle.deck();
        let mut worst: f64 = 0.0;
        for i in 0..self.radii.len() {
            for j in 0..2 * self.per_period {
                let a = self.node(i, j).point;
                let b = self.node(i, j + self.per_period).point;
                worst = worst.max((b - deck.apply(a)).max_abs() / a.z);
            }
        }
        worst
    }

    /// Largest relative deck residual `|B(φ + 2π) − R B(φ) R⁻¹|` of an
    /// ambient operator field sampled on the chart.
    pub fn field_deck_residual(&self, values: &[Matrix3<f64>]) -> f64 {
        let deck = self.angle.deck();
        let (m, mi) = (*deck.matrix(), *deck.inverse().matrix());
        let mut worst: f64 = 0.0;
        for i in 0..self.radii.len() {
            for j in 0..2 * self.per_period {
                let a = values[self.index(i, j)];
                let b = values[self.index(i, j + self.per_period)];
                worst = worst.max((b - m * a * mi).abs().max() / (1e-300 + a.abs().max()));
            }
        }
        worst
    }

    /// Largest gap between `r` and the hyperbolic length of the conformal
    /// ray from the tip to `|z|`, integrated numerically.
    pub fn radial_distance_check(&self) -> f64 {
        let rule = GaussRule::new(20).expect("positive order");
        let s = self.angle.scale();
        self.radii
            .iter()
            .map(|&r| {
                let za = conformal_coordinate(self.angle, r, 0.0).norm();
                // ∫_0^{|z|} e^ξ t^β dt with t = w^{1/s}: dt = (1/s) w^{1/s − 1} dw,
                // and e^ξ t^β = 2 s / (1 − w²) · w^{β/s}; the powers cancel
                let len = rule.integrate(0.0, za.powf(s), 8, |w| 2.0 / (1.0 - w * w));
                (len - r).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Bi-Lipschitz constants `(m, M)` with `m h ≤ g ≤ M h` between the
    /// chart metric and the hyperbolic metric, over the chart.
    pub fn bilipschitz(&self) -> (f64, f64) {
        let c = self.angle.scale();
        self.nodes.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), n| {
            let g = self.polar_metric(n);
            let h = Matrix2::new(1.0, 0.0, 0.0, (c * n.r.sinh()).powi(2));
            let a = g[(0, 0)] / h[(0, 0)];
            let b = g[(1, 1)] / h[(1, 1)];
            (lo.min(a).min(b), hi.max(a).max(b))
        })
    }
}

// ---------------------------------------------------------------------------
// harmonic tensors at the tip

/// `b_q` at cover coordinates `(r, φ)` for `q = f(z) dz²` in the conformal
/// coordinate of the cone: `dz = k ζ^{k−1} dζ` with `ζ` the Poincaré
/// coordinate at the tip, lifted by the cover angle.
pub fn cone_harmonic_at(q: &QuadDiffLocal, angle: ConeAngle, r: f64, phi: f64) -> Matrix3<f64> {
    let x = develop(angle, r, phi);
    let k = angle.k();
    let theta = angle.scale() * phi;
    let z = conformal_coordinate(angle, r, phi);
    let f = q.eval(z);
    let pow = Complex64::from_polar((0.5 * r).tanh().powf(k - 1.0), (k - 1.0) * theta);
    let disc = DiscChart::standard();
    let fr = tangent_frame(x);
    let dz = [disc.dz(x, fr[0]) * pow * k, disc.dz(x, fr[1]) * pow * k];
    let m = Matrix2::from_fn(|a, c| (f * dz[a] * dz[c]).re);
    ambient_operator(&fr, &m)
}

/// `sqrt(2 e^{−4ξ} |z|^{−4β} |f|²)`, the closed form of `|b_q|`.
pub fn cone_harmonic_norm(q: &QuadDiffLocal, angle: ConeAngle, z: Complex64) -> f64 {
    let e2 = conformal_factor(angle, z);
    (2.0 / (e2 * e2) * z.norm().powf(-4.0 * angle.beta()) * q.eval(z).norm_sqr()).sqrt()
}

/// `y ≈ C x^p` by least squares in log–log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(PowerFit { exponent: slope, prefactor: (my - slope * mx).exp(), r_squared })
}

/// Behaviour of `|b|` at the tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrability {
    NotL2,
    L2Unbounded,
    /// Bounded but not tending to zero (the `θ0 = π` boundary case).
    Bounded,
    Vanishing,
}

impl Integrability {
    /// From a growth exponent, with a margin around the thresholds.
    pub fn classify(alpha: f64, margin: f64) -> Self {
        if alpha <= -1.0 + margin {
            Self::NotL2
        } else if alpha < -margin {
            Self::L2Unbounded
        } else if alpha <= margin {
            Self::Bounded
        } else {
            Self::Vanishing
        }
    }
}

/// A harmonic tensor sampled on a cone chart.
#[derive(Debug, Clone)]
pub struct ConeTensor {
    pub values: Vec<Matrix3<f64>>,
    pub norms: Vec<f64>,
    /// Fit of `sup_φ |b|` against `r` over the innermost decade.
    pub growth: PowerFit,
    pub class: Integrability,
    /// `α` for the lowest Laurent order present.
    pub predicted: Option<f64>,
}

pub fn harmonic_tensor_cone(q: &QuadDiffLocal, chart: &ConeChart) -> Result<ConeTensor, ConeError> {
    let values: Vec<Matrix3<f64>> = chart.nodes().iter().map(|n| cone_harmonic_at(q, chart.angle, n.r, n.phi)).collect();
    let norms: Vec<f64> = chart.nodes().iter().zip(&values).map(|(n, b)| frame_operator(&tangent_frame(n.point), b).norm()).collect();
    let r0 = chart.radii[0];
    let (xs, ys): (Vec<f64>, Vec<f64>) = chart
        .radii
        .iter()
        .enumerate()
        .filter(|(_, r)| **r <= 10.0 * r0 * (1.0 + 1e-12))
        .map(|(i, r)| (*r, chart.period().map(|j| norms[chart.index(i, j)]).fold(0.0, f64::max)))
        .unzip();
    let growth = fit_power_law(&xs, &ys).ok_or(ConeError::Fit { what: "growth exponent", r_squared: 0.0 })?;
    let predicted = q.coeffs.iter().filter(|(_, c)| c.norm() > 0.0).map(|(m, _)| *m).min().map(|m| chart.angle.harmonic_exponent(m));
    Ok(ConeTensor { values, norms, class: Integrability::classify(growth.exponent, 0.05), growth, predicted })
}

fn log_nodes(lo: f64, hi: f64, per_decade: usize) -> Vec<(f64, f64)> {
    let rule = GaussRule::new(16).expect("positive order");
    let (a, b) = (lo.ln(), hi.ln());
    let panels = (((b - a) / std::f64::consts::LN_10) * per_decade as f64).ceil().max(1.0) as usize;
    rule.composite(a, b, panels)
}

/// `∫_{eps < r < r_max} |b_q|² dA` (Gauss–Legendre in `ln r`, periodic
/// trapezoid rule in `φ`).
pub fn cone_l2_norm(q: &QuadDiffLocal, angle: ConeAngle, eps: f64, r_max: f64) -> f64 {
    let n_phi = 64;
    let dphi = std::f64::consts::TAU / n_phi as f64;
    let c = angle.scale();
    log_nodes(eps, r_max, 4)
        .iter()
        .map(|&(s, w)| {
            let r = s.exp();
            let ring: f64 = (0..n_phi)
                .map(|j| {
                    let z = conformal_coordinate(angle, r, j as f64 * dphi);
                    cone_harmonic_norm(q, angle, z).powi(2)
                })
                .sum::<f64>()
                * dphi;
            w * ring * c * r.sinh() * r
        })
        .sum()
}

/// `sup |b_q|` over the annulus `eps/10 ≤ r ≤ eps`.
pub fn cone_tip_sup(q: &QuadDiffLocal, angle: ConeAngle, eps: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..9 {
        let r = eps * 10f64.powf(-(i as f64) / 8.0);
        for j in 0..32 {
            let z = conformal_coordinate(angle, r, j as f64 * std::f64::consts::TAU / 32.0);
            worst = worst.max(cone_harmonic_norm(q, angle, z));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// potentials on the cover

/// A Codazzi tensor on the cover of a punctured cone disc, as an ambient
/// operator of `(r, φ)`.
pub type CoverField<'a> = &'a dyn Fn(f64, f64) -> Matrix3<f64>;

/// Integrates `dσ = ι_* b` on the cover from the base `(r_ref, 0)`, where
/// `σ = 0`: first along the circle `r = r_ref`, then radially in `ln r`.
/// `u = <σ, x>` is then a potential of `b`.
pub struct CoverIntegrator<'a> {
    pub angle: ConeAngle,
    pub r_ref: f64,
    field: CoverField<'a>,
    rule: GaussRule,
}

impl<'a> CoverIntegrator<'a> {
    pub fn new(angle: ConeAngle, field: CoverField<'a>, r_ref: f64) -> Self {
        Self { angle, r_ref, field, rule: GaussRule::new(16).expect("positive order") }
    }

    fn arc(&self, r: f64, from: f64, to: f64) -> MinkVec {
        let panels = ((to - from).abs() / 0.5).ceil().max(1.0) as usize;
        self.rule.composite(from, to, panels).into_iter().fold(MinkVec::zero(), |acc, (phi, w)| {
            let v = polar_vectors(self.angle, r, phi)[1];
            acc + ((self.field)(r, phi) * v) * w
        })
    }

    fn ray(&self, phi: f64, from: f64, to: f64) -> MinkVec {
        let (a, b) = (from.ln(), to.ln());
        let panels = ((b - a).abs() / 0.25).ceil().max(1.0) as usize;
        self.rule.composite(a, b, panels).into_iter().fold(MinkVec::zero(), |acc, (s, w)| {
            let r = s.exp();
            let v = polar_vectors(self.angle, r, phi)[0] * r;
            acc + ((self.field)(r, phi) * v) * w
        })
    }

    pub fn sigma(&self, r: f64, phi: f64) -> MinkVec {
        self.arc(self.r_ref, 0.0, phi) + self.ray(phi, self.r_ref, r)
    }

    pub fn potential(&self, r: f64, phi: f64) -> f64 {
        mink_dot(self.sigma(r, phi), develop(self.angle, r, phi))
    }

    /// `t` with `σ(τx) = R σ(x) + t`.
    pub fn translation(&self) -> MinkVec {
        self.arc(self.r_ref, 0.0, std::f64::consts::TAU)
    }

    /// `∫_{c_r} du` over one turn starting at `φ`, integrated along the circle.
    pub fn circle_integral(&self, r: f64, phi: f64) -> f64 {
        let start = self.sigma(r, phi);
        let end = start + self.arc(r, phi, phi + std::f64::consts::TAU);
        mink_dot(end, develop(self.angle, r, phi + std::f64::consts::TAU)) - mink_dot(start, develop(self.angle, r, phi))
    }

    /// `|du| = |σ + u x|` at `(r, φ)`.
    pub fn gradient_norm(&self, r: f64, phi: f64) -> f64 {
        let x = develop(self.angle, r, phi);
        let s = self.sigma(r, phi);
        let g = s + x * mink_dot(s, x);
        mink_dot(g, g).max(0.0).sqrt()
    }
}

/// Outcome of the peripheral analysis of a Codazzi tensor at a cone point.
#[derive(Debug, Clone, Serialize)]
pub struct PeripheralReport {
    pub translation: MinkVec,
    /// `t0` with `t = R t0 − t0`, when trivial.
    pub t0: Option<MinkVec>,
    pub defect: f64,
    /// `(r, sup_φ |∫_{c_r} du|)` on a geometric ladder.
    pub circle_integrals: Vec<(f64, f64)>,
    /// Power fit of the circle integrals; `None` if they vanish identically.
    pub decay: Option<PowerFit>,
    /// `min(1, α + 2)`.
    pub predicted_decay: f64,
    /// `(r, sup_φ |du|)`.
    pub gradient: Vec<(f64, f64)>,
    /// Nonnegative `(C5, C6)` of `|du| ≤ C5 + C6 r^{α+1}`.
    pub gradient_fit: (f64, f64),
    pub gradient_fit_holds: bool,
}

/// Ladder of radii used for limits at the tip.
pub fn radius_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1).max(1) as f64)).collect()
}

/// Potential of a Codazzi tensor near a cone point with `|b| ≤ C r^α`.
pub fn peripheral_potential(angle: ConeAngle, field: CoverField<'_>, alpha: f64, tol: f64) -> Result<PeripheralReport, ConeError> {
    if !(alpha > -2.0) {
        return Err(ConeError::Exponent(alpha));
    }
    let integ = CoverIntegrator::new(angle, field, 0.5);
    let t = integ.translation();
    let (t0, defect) = match peripheral_reduction(t, MinkVec::e3(), angle.theta(), tol)? {
        Peripheral::Trivial { t0 } => (Some(t0), mink_dot(t, MinkVec::e3()).abs()),
        Peripheral::Defect { axis_component } => (None, axis_component.abs()),
    };
    let radii = radius_ladder(1e-4, 1e-1, 10);
    let starts: Vec<f64> = (0..16).map(|j| j as f64 * std::f64::consts::TAU / 16.0).collect();
    let circle_integrals: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| (r, starts.iter().map(|&p| integ.circle_integral(r, p).abs()).fold(0.0, f64::max)))
        .collect();
    let scale = 1.0 + t.max_abs();
    let decay = if circle_integrals.iter().all(|&(_, v)| v <= 1e-13 * scale) {
        None
    } else {
        let (xs, ys): (Vec<f64>, Vec<f64>) = circle_integrals.iter().copied().unzip();
        Some(fit_power_law(&xs, &ys).ok_or(ConeError::Fit { what: "circle integrals", r_squared: 0.0 })?)
    };
    let gradient: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| (r, starts.iter().map(|&p| integ.gradient_norm(r, p)).fold(0.0, f64::max)))
        .collect();
    let gradient_fit = fit_constant_plus_power(&gradient, alpha + 1.0);
    let gradient_fit_holds = gradient
        .iter()
        .all(|&(r, g)| g <= 1.1 * (gradient_fit.0 + gradient_fit.1 * r.powf(alpha + 1.0)) + 1e-12 * scale);
    if t0.is_none() {
        return Err(ConeError::Peripheral(defect));
    }
    Ok(PeripheralReport {
        translation: t,
        t0,
        defect,
        circle_integrals,
        decay,
        predicted_decay: (alpha + 2.0).min(1.0),
        gradient,
        gradient_fit,
        gradient_fit_holds,
    })
}

/// Least squares `y ≈ C5 + C6 x^p` with both coefficients clamped to `≥ 0`.
fn fit_constant_plus_power(pts: &[(f64, f64)], p: f64) -> (f64, f64) {
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|(r, _)| r.powf(p)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(pts).map(|(x, (_, y))| (x - mx) * (y - my)).sum();
    let c6 = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let c5 = (my - c6 * mx).max(0.0);
    // make the bound an envelope
    let lift = pts.iter().zip(&xs).map(|((_, y), x)| y - c5 - c6 * x).fold(0.0, f64::max);
    (c5 + lift, c6)
}

// ---------------------------------------------------------------------------
// cone angles

/// Cone angle estimated from a metric in cover polar coordinates `(r, φ)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AngleFit {
    pub theta: f64,
    pub r_squared: f64,
    /// Largest relative residual of `L = θ ρ + κ ρ²` over the ladder.
    pub residual: f64,
}

/// `θ = lim L(ρ)/ρ`: circle lengths `L` against intrinsic radii `ρ` (mean
/// radial length from the tip) over a decade, fitted by `L = θρ + κρ²`.
pub fn cone_angle_measure(metric: &dyn Fn(f64, f64) -> Matrix2<f64>, r_lo: f64, r_hi: f64) -> Result<AngleFit, ConeError> {
    let rule = GaussRule::new(16).expect("positive order");
    let n_phi = 128;
    let dphi = std::f64::consts::TAU / n_phi as f64;
    let radii = radius_ladder(r_lo, r_hi, 10);
    let mut rho = Vec::with_capacity(radii.len());
    let mut len = Vec::with_capacity(radii.len());
    for &r in &radii {
        let l: f64 = (0..n_phi).map(|j| metric(r, j as f64 * dphi)[(1, 1)].max(0.0).sqrt()).sum::<f64>() * dphi;
        let d: f64 = (0..16)
            .map(|j| {
                let phi = j as f64 * std::f64::consts::TAU / 16.0;
                rule.integrate(0.0, r, 4, |s| metric(s, phi)[(0, 0)].max(0.0).sqrt())
            })
            .sum::<f64>()
            / 16.0;
        rho.push(d);
        len.push(l);
    }
    // normal equations for L = θ ρ + κ ρ²
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, l) in rho.iter().zip(&len) {
        let w = 1.0 / (p * p);
        a11 += w * p * p;
        a12 += w * p * p * p;
        a22 += w * p.powi(4);
        b1 += w * p * l;
        b2 += w * p * p * l;
    }
    let det = a11 * a22 - a12 * a12;
    let theta = (b1 * a22 - b2 * a12) / det;
    let kappa = (a11 * b2 - a12 * b1) / det;
    let residual = rho.iter().zip(&len).map(|(p, l)| (theta * p + kappa * p * p - l).abs() / l).fold(0.0, f64::max);
    let mean = len.iter().zip(&rho).map(|(l, p)| l / p).sum::<f64>() / len.len() as f64;
    let tot: f64 = len.iter().zip(&rho).map(|(l, p)| (l / p - mean).powi(2)).sum();
    let res: f64 = len.iter().zip(&rho).map(|(l, p)| (l / p - theta - kappa * p).powi(2)).sum();
    let r_squared = if tot <= 1e-30 * mean * mean { 1.0 } else { 1.0 - res / tot };
    if !(theta.is_finite() && residual <= 1e-2) {
        return Err(ConeError::Fit { what: "cone angle", r_squared });
    }
    Ok(AngleFit { theta, r_squared, residual })
}

/// The hyperbolic cone metric in cover polar coordinates.
pub fn hyperbolic_polar_metric(angle: ConeAngle) -> impl Fn(f64, f64) -> Matrix2<f64> {
    let c = angle.scale();
    move |r, _| Matrix2::new(1.0, 0.0, 0.0, (c * r.sinh()).powi(2))
}

/// The Klein flat metric in cover polar coordinates.
pub fn klein_polar_metric(angle: ConeAngle) -> impl Fn(f64, f64) -> Matrix2<f64> {
    let c = angle.scale();
    move |r, _| Matrix2::new(1.0 / r.cosh().powi(4), 0.0, 0.0, (c * r.tanh()).powi(2))
}

/// `I = h(b·, b·)` in cover polar coordinates.
pub fn first_form_polar<'a>(angle: ConeAngle, field: CoverField<'a>) -> impl Fn(f64, f64) -> Matrix2<f64> + 'a {
    move |r, phi| {
        let v = polar_vectors(angle, r, phi);
        let b = field(r, phi);
        let bv = [b * v[0], b * v[1]];
        Matrix2::from_fn(|a, c| mink_dot(bv[a], bv[c]))
    }
}

// ---------------------------------------------------------------------------
// Klein correspondence on a grid

/// Max over interior nodes (g-norm) of `D²ū − (cosh r)⁻¹ h(b·,·)` on a
/// uniform `(ρ, φ)` grid of the Klein cone chart, `ρ ∈ [ρ0, ρ1]`, for
/// `ū = u / cosh r` and exact `b = Hess u − u Id`.
pub fn klein_correspondence_residual<P: crate::fields::Potential>(
    angle: ConeAngle,
    u: &P,
    rho: (f64, f64),
    n: usize,
) -> f64 {
    let c = angle.scale();
    let (r0, r1) = rho;
    let hr = (r1 - r0) / n as f64;
    let m = (std::f64::consts::TAU / hr).round().max(8.0) as usize;
    let hp = std::f64::consts::TAU / m as f64;
    let ubar = |i: usize, j: usize| {
        let rho = r0 + hr * i as f64;
        let r = rho.atanh();
        u.value(develop(angle, r, hp * j as f64)) / r.cosh()
    };
    let mut worst: f64 = 0.0;
    for i in 1..n {
        for j in 1..m {
            let rho = r0 + hr * i as f64;
            let r = rho.atanh();
            let phi = hp * j as f64;
            let f = ubar(i, j);
            let (fe, fw, fn_, fs) = (ubar(i + 1, j), ubar(i - 1, j), ubar(i, j + 1), ubar(i, j - 1));
            let f_r = (fe - fw) / (2.0 * hr);
            let f_p = (fn_ - fs) / (2.0 * hp);
            let f_rr = (fe + fw - 2.0 * f) / (hr * hr);
            let f_pp = (fn_ + fs - 2.0 * f) / (hp * hp);
            let f_rp = (ubar(i + 1, j + 1) + ubar(i - 1, j - 1) - ubar(i + 1, j - 1) - ubar(i - 1, j + 1)) / (4.0 * hr * hp);
            let g = c * c * rho * rho;
            let d2 = Matrix2::new(f_rr, f_rp - f_p / rho, f_rp - f_p / rho, f_pp + c * c * rho * f_r);
            let b = crate::fields::hess_minus_id_at(u, develop(angle, r, phi));
            let v = polar_vectors(angle, r, phi);
            let dr = r.cosh().powi(2);
            let t = [v[0] * dr, v[1]];
            let rhs = Matrix2::from_fn(|a, cc| mink_dot(b * t[a], t[cc]) / r.cosh());
            let e = d2 - rhs;
            let norm = (e[(0, 0)].powi(2) + 2.0 * e[(0, 1)].powi(2) / g + e[(1, 1)].powi(2) / (g * g)).sqrt();
            worst = worst.max(norm);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// singular embedding

/// One pass/fail check with its measured value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    /// `bound` is a lower bound for `measured`.
    pub lower: bool,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, bound: f64) -> Self {
        Self { name, measured, bound, lower: false, pass: measured <= bound }
    }

    fn at_least(name: &'static str, measured: f64, bound: f64) -> Self {
        Self { name, measured, bound, lower: true, pass: measured >= bound }
    }
}

/// The flat space-time model around a particle built from `(h, b)`.
#[derive(Debug, Clone, Serialize)]
pub struct SingularEmbedding {
    pub checks: Vec<Check>,
    /// Winding of the developing map `φ` around the tip.
    pub flat_angle: f64,
    /// Cone angle of `g' = φ* (Euclidean)`.
    pub pullback_angle: AngleFit,
    /// Cone angle of `I = h(b·, b·)`.
    pub first_form_angle: AngleFit,
    /// Relative error of the embedding data on the grid.
    pub data_error: f64,
    pub spacing: f64,
    pub translation: MinkVec,
}

impl SingularEmbedding {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// `σ' = σ + t0`, equivariant under the rotation: `σ'(τx) = R σ'(x)`; the
/// horizontal part is the developing map `φ` of the Euclidean cone
/// structure and the vertical part is the graph function `f`.
///
/// `bounds = (a2, a1)` with `a2 < b < a1` required nodewise. The derived
/// Hessian bounds of `ū` for the Klein metric are `a2 ≤ D²ū ≤ a1 cosh³ r_max`.
pub fn singular_embedding(
    angle: ConeAngle,
    field: CoverField<'_>,
    bounds: (f64, f64),
    n_radial: usize,
    n_angular: usize,
) -> Result<SingularEmbedding, ConeError> {
    let (a2, a1) = bounds;
    let (r_lo, r_hi) = (0.05, 0.5);
    let c = angle.scale();
    let tau = std::f64::consts::TAU;
    // positivity on the whole disc r ≤ r_hi
    for r in radius_ladder(1e-4, r_hi, 24) {
        for j in 0..32 {
            let phi = j as f64 * tau / 32.0;
            let m = frame_operator(&tangent_frame(develop(angle, r, phi)), &field(r, phi));
            let e = nalgebra::SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues;
            for eig in [e[0], e[1]] {
                if !(eig > a2 && eig < a1) {
                    return Err(ConeError::Positivity { eig, lo: a2, hi: a1 });
                }
            }
        }
    }
    let integ = CoverIntegrator::new(angle, field, r_hi);
    let t = integ.translation();
    let t0 = match peripheral_reduction(t, MinkVec::e3(), angle.theta(), 1e-8 * (1.0 + t.max_abs()))? {
        Peripheral::Trivial { t0 } => t0,
        Peripheral::Defect { axis_component } => return Err(ConeError::Peripheral(axis_component)),
    };
    let sigma = |r: f64, phi: f64| integ.sigma(r, phi) + t0;
    let flat = |s: MinkVec| Vector2::new(s.x, s.y);
    let rot = {
        let (s, co) = angle.theta().sin_cos();
        Matrix2::new(co, -s, s, co)
    };

    // (i) conjugation of the deck transformation
    let mut conj: f64 = 0.0;
    for r in radius_ladder(1e-3, r_hi, 6) {
        for j in 0..8 {
            let phi = j as f64 * tau / 8.0;
            let a = flat(sigma(r, phi));
            let b = flat(sigma(r, phi + tau));
            conj = conj.max((b - rot * a).norm() / (1.0 + a.norm()));
        }
    }

    // grid in (ln r, φ) with a ghost ring on each side
    let ds = ((r_hi / r_lo).ln()) / (n_radial - 1) as f64;
    let dp = tau / n_angular as f64;
    let (ni, nj) = (n_radial + 2, n_angular + 3);
    let coord = |i: usize, j: usize| ((r_lo.ln() + ds * (i as f64 - 1.0)).exp(), dp * (j as f64 - 1.0));
    let values: Vec<MinkVec> = (0..ni * nj)
        .map(|n| {
            let (r, phi) = coord(n / nj, n % nj);
            sigma(r, phi)
        })
        .collect();
    let at = |i: usize, j: usize| values[i * nj + j];
    let a_hess_lo = a2;
    let a_hess_hi = a1 * r_hi.cosh().powi(3);
    let slack = fd_tolerance(ds.max(dp));
    let mut sv_lo = f64::INFINITY;
    let mut sv_hi: f64 = 0.0;
    let mut radial_ratio = f64::INFINITY;
    let mut data_error: f64 = 0.0;
    for i in 1..ni - 1 {
        for j in 1..nj - 1 {
            let (r, phi) = coord(i, j);
            let d_s = (at(i + 1, j) - at(i - 1, j)) / (2.0 * ds);
            let d_p = (at(i, j + 1) - at(i, j - 1)) / (2.0 * dp);
            let d_r = d_s / r;
            // (ii) singular values of dφ on a g-orthonormal basis
            let m = Matrix2::from_columns(&[flat(d_r) * r.cosh().powi(2), flat(d_p) / (c * r.tanh())]);
            let sv = m.singular_values();
            sv_lo = sv_lo.min(sv.min());
            sv_hi = sv_hi.max(sv.max());
            // (iii) |φ(x)| ≥ a2 d_g(x, tip)
            radial_ratio = radial_ratio.min(flat(at(i, j)).norm() / r.tanh());
            // (iv) embedding data
            let v = polar_vectors(angle, r, phi);
            let b = field(r, phi);
            let tang = [d_r, d_p];
            let first = Matrix2::from_fn(|a, cc| mink_dot(tang[a], tang[cc]));
            let exact = Matrix2::from_fn(|a, cc| mink_dot(b * v[a], b * v[cc]));
            let h = Matrix2::new(1.0, 0.0, 0.0, (c * r.sinh()).powi(2));
            let scale = |m: &Matrix2<f64>| Matrix2::from_fn(|a, cc| m[(a, cc)] / (h[(a, a)] * h[(cc, cc)]).sqrt());
            let e1 = scale(&(first - exact)).abs().max() / scale(&exact).abs().max();
            // s from dG = dσ ∘ s with G = x: I s = (<∂aσ, ∂c X>)
            let is = Matrix2::from_fn(|a, cc| mink_dot(tang[a], v[cc]));
            let s = first.try_inverse().unwrap_or_else(Matrix2::zeros) * is;
            let bc = h.try_inverse().expect("h is invertible") * Matrix2::from_fn(|a, cc| mink_dot(v[a], b * v[cc]));
            let s_exact = bc.try_inverse().unwrap_or_else(Matrix2::zeros);
            let hs = h.map(f64::sqrt);
            let conj = |m: &Matrix2<f64>| Matrix2::from_fn(|a, cc| m[(a, cc)] * hs[(a, a)] / hs[(cc, cc)]);
            let e2 = (conj(&s) - conj(&s_exact)).abs().max() / conj(&s_exact).abs().max();
            data_error = data_error.max(e1).max(e2);
        }
    }

    // (v) |f(x) − f(tip)| = O(ρ²)
    let f_tip = (0..8).map(|j| sigma(1e-9, j as f64 * tau / 8.0).z).sum::<f64>() / 8.0;
    let ladder = radius_ladder(1e-3, 1e-1, 8);
    let dev: Vec<f64> = ladder
        .iter()
        .map(|&r| (0..8).map(|j| (sigma(r, j as f64 * tau / 8.0).z - f_tip).abs()).fold(0.0, f64::max))
        .collect();
    let rho: Vec<f64> = ladder.iter().map(|r| r.tanh()).collect();
    let ffit = fit_power_law(&rho, &dev).ok_or(ConeError::Fit { what: "graph function", r_squared: 0.0 })?;

    // cone angles
    let r_wind = 1e-3;
    let samples = 720;
    let mut flat_angle = 0.0;
    let mut prev = flat(sigma(r_wind, 0.0));
    for j in 1..=samples {
        let cur = flat(sigma(r_wind, tau * j as f64 / samples as f64));
        flat_angle += (prev.x * cur.y - prev.y * cur.x).atan2(prev.dot(&cur));
        prev = cur;
    }
    let pullback = move |r: f64, phi: f64| {
        let v = polar_vectors(angle, r, phi);
        let b = field(r, phi);
        let w = [flat(b * v[0]), flat(b * v[1])];
        Matrix2::from_fn(|a, cc| w[a].dot(&w[cc]))
    };
    let pullback_angle = cone_angle_measure(&pullback, 1e-3, 1e-2)?;
    let first_form_angle = cone_angle_measure(&first_form_polar(angle, field), 1e-3, 1e-2)?;

    let checks = vec![
        Check::at_most("deck conjugation", conj, 1e-8),
        Check {
            name: "bi-Lipschitz developing map",
            measured: sv_lo.min(a_hess_hi - sv_hi),
            bound: 0.0,
            lower: true,
            pass: sv_lo >= a_hess_lo * (1.0 - slack) && sv_hi <= a_hess_hi * (1.0 + slack),
        },
        Check::at_least("distance from tip", radial_ratio, a_hess_lo * (1.0 - slack)),
        Check::at_most("embedding data", data_error, slack),
        Check { name: "orthogonality at tip", measured: ffit.exponent, bound: 1.8, lower: true, pass: ffit.exponent >= 1.8 && ffit.r_squared >= 0.99 },
    ];
    Ok(SingularEmbedding {
        checks,
        flat_angle,
        pullback_angle,
        first_form_angle,
        data_error,
        spacing: ds.max(dp),
        translation: t,
    })
}

// ---------------------------------------------------------------------------
// wedge surgery

/// Input scene: a wedge of angle `theta` with apex at the origin, `p1` on
/// the lower edge at distance `edge_distance`, `p2` on the bisector at
/// distance `bisector_distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WedgeScene {
    pub theta: f64,
    pub edge_distance: f64,
    pub bisector_distance: f64,
}

impl WedgeScene {
    pub fn from_json(s: &str) -> Result<Self, ConeError> {
        serde_json::from_str(s).map_err(|e| ConeError::Parse(e.to_string()))
    }
}

/// A pair of segments identified by a rotation about `centre`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gluing {
    pub from: [[f64; 2]; 2],
    pub to: [[f64; 2]; 2],
    pub centre: [f64; 2],
    pub rotation: f64,
}

/// Result of removing the quadrilateral `p1 p p1' p2` and regluing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WedgeSurgery {
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// `p1, p, p1', p2`.
    pub quadrilateral: [[f64; 2]; 4],
    /// Interior angles of the quadrilateral at its four vertices.
    pub interior: [f64; 4],
    pub gluings: Vec<Gluing>,
}

impl WedgeSurgery {
    /// `θ1 + θ2 − θ − 2π`.
    pub fn relation_residual(&self) -> f64 {
        self.theta1 + self.theta2 - self.theta - std::f64::consts::TAU
    }

    pub fn has_large_angle(&self) -> bool {
        let big = |t: f64| (std::f64::consts::PI..std::f64::consts::TAU).contains(&t);
        big(self.theta1) || big(self.theta2)
    }
}

pub fn wedge_surgery(scene: &WedgeScene) -> Result<WedgeSurgery, ConeError> {
    let WedgeScene { theta, edge_distance: d1, bisector_distance: d2 } = *scene;
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(ConeError::BadAngle(theta));
    }
    if !(d1 > 0.0 && d1.is_finite() && d2.is_finite()) {
        return Err(ConeError::Degenerate("distances must be positive and finite"));
    }
    if !(d2 > 1e-6 * d1) {
        return Err(ConeError::Degenerate("p2 too close to the apex"));
    }
    let h = 0.5 * theta;
    let p1 = [d1 * h.cos(), -d1 * h.sin()];
    let p = [0.0, 0.0];
    let p1r = [d1 * h.cos(), d1 * h.sin()];
    let p2 = [d2, 0.0];
    let quad = [p1, p, p1r, p2];
    // turning angles of the closed polygon; interior = π − turn·orientation
    let edge = |a: [f64; 2], b: [f64; 2]| [b[0] - a[0], b[1] - a[1]];
    let turns: Vec<f64> = (0..4)
        .map(|i| {
            let a = edge(quad[(i + 3) % 4], quad[i]);
            let b = edge(quad[i], quad[(i + 1) % 4]);
            (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1])
        })
        .collect();
    let total: f64 = turns.iter().sum();
    if (total.abs() - std::f64::consts::TAU).abs() > 1e-9 {
        return Err(ConeError::Degenerate("quadrilateral is not simple"));
    }
    let orient = total.signum();
    let interior: [f64; 4] = std::array::from_fn(|i| std::f64::consts::PI - orient * turns[i]);
    if interior.iter().any(|a| !(*a > 1e-12 && *a < std::f64::consts::TAU - 1e-12)) {
        return Err(ConeError::Degenerate("quadrilateral has a flat or folded vertex"));
    }
    // around p1 ∼ p1' the remaining angle is (π − ψ) on each side of the edge
    let theta1 = (std::f64::consts::PI - interior[0]) + (std::f64::consts::PI - interior[2]);
    let theta2 = std::f64::consts::TAU - interior[3];
    let ang = |v: [f64; 2]| v[1].atan2(v[0]);
    let glue_p2 = ang(edge(p2, p1r)) - ang(edge(p2, p1));
    let far = 10.0 * d1.max(d2);
    let gluings = vec![
        Gluing { from: [p2, p1], to: [p2, p1r], centre: p2, rotation: glue_p2 },
        Gluing {
            from: [p1, [far * h.cos(), -far * h.sin()]],
            to: [p1r, [far * h.cos(), far * h.sin()]],
            centre: p,
            rotation: theta,
        },
    ];
    Ok(WedgeSurgery { theta, theta1, theta2, quadrilateral: quad, interior, gluings })
}

/// Surgeries for `n` bisector distances spread geometrically over
/// `[lo, hi]`.
pub fn wedge_sweep(theta: f64, edge_distance: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<WedgeSurgery>, ConeError> {
    radius_ladder(lo, hi, n)
        .into_iter()
        .map(|d| wedge_surgery(&WedgeScene { theta, edge_distance, bisector_distance: d }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{tangent_identity, KleinPolynomial, RICHARDSON_WINDOW};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn angles() -> [ConeAngle; 3] {
        [ConeAngle::new(TAU / 3.0).unwrap(), ConeAngle::new(PI).unwrap(), ConeAngle::new(1.5 * PI).unwrap()]
    }

    fn pole(order: i32) -> QuadDiffLocal {
        QuadDiffLocal::monomial(order, Complex64::new(0.7, 0.3))
    }

    #[test]
    fn cone_angle_range() {
        assert!(ConeAngle::new(0.0).is_err());
        assert!(ConeAngle::new(TAU).is_err());
        assert!(ConeAngle::new(f64::NAN).is_err());
        let a = ConeAngle::new(PI).unwrap();
        assert_eq!(a.beta(), -0.5);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&PI).unwrap());
        assert!(serde_json::from_str::<ConeAngle>("7.0").is_err());
    }

    #[test]
    fn charts_agree_and_have_curvature_minus_one() {
        for a in angles() {
            let polar = cone_chart(a, ChartKind::Polar, 1e-3, 1.0, 40, 64).unwrap();
            let conf = cone_chart(a, ChartKind::Conformal, 1e-3, 1.0, 40, 64).unwrap();
            assert!(polar.metric_agreement() < 1e-12);
            assert!(conf.metric_agreement() < 1e-8, "{}", conf.metric_agreement());
            assert!(conf.radial_distance_check() < 1e-8);
            assert!(polar.deck_residual() < 1e-12);
            for i in 0..polar.radii.len() {
                let r = polar.radii[i];
                assert!((polar.circumference(i) - a.theta() * r.sinh()).abs() < 1e-6);
                assert!((conf.circumference(i) - a.theta() * r.sinh()).abs() < 1e-6 * (1.0 + r));
                if let Some(k) = polar.gauss_curvature(i) {
                    assert!((k + 1.0).abs() < fd_tolerance((polar.radii[1] / polar.radii[0]).ln()), "{k}");
                }
            }
            let klein = klein_cone_chart(a, 1e-3, 1.0, 40, 64).unwrap();
            assert!(klein.metric_agreement() < 1e-12);
            let ds = (klein.radii[1] / klein.radii[0]).ln();
            for i in 2..38 {
                assert!(klein.gauss_curvature(i).unwrap().abs() < fd_tolerance(ds));
            }
            let (lo, hi) = klein.bilipschitz();
            assert!(lo > 0.0 && hi <= 1.0 + 1e-12 && lo >= 1.0 / 1f64.cosh().powi(4) - 1e-12);
        }
    }

    #[test]
    fn smooth_limit_is_poincare_disc() {
        // β → 0: e^{2ξ}|z|^{2β} → 4/(1 − |z|²)²
        let a = ConeAngle::new(TAU * (1.0 - 1e-12)).unwrap();
        let z = Complex64::new(0.3, -0.4);
        let g = conformal_factor(a, z) * z.norm().powf(2.0 * a.beta());
        assert!((g - 4.0 / (1.0 - z.norm_sqr()).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn harmonic_norm_closed_form_and_deck() {
        let q = QuadDiffLocal::new(vec![(-1, Complex64::new(0.7, 0.3)), (0, Complex64::new(-0.2, 0.5)), (2, Complex64::new(1.0, 0.0))]);
        for a in angles() {
            let chart = cone_chart(a, ChartKind::Polar, 1e-3, 1.0, 12, 16).unwrap();
            let t = harmonic_tensor_cone(&q, &chart).unwrap();
            for (n, norm) in chart.nodes().iter().zip(&t.norms) {
                let z = conformal_coordinate(a, n.r, n.phi);
                let exact = cone_harmonic_norm(&q, a, z);
                assert!((norm - exact).abs() <= 1e-10 * exact.max(1.0), "{norm} {exact}");
            }
            assert!(chart.field_deck_residual(&t.values) < 1e-10);
        }
    }

    #[test]
    fn growth_exponents_and_classes() {
        let expect = [Integrability::Vanishing, Integrability::Bounded, Integrability::L2Unbounded];
        for (a, class) in angles().into_iter().zip(expect) {
            let chart = cone_chart(a, ChartKind::Polar, 1e-4, 1.0, 41, 16).unwrap();
            let t = harmonic_tensor_cone(&pole(-1), &chart).unwrap();
            let alpha = (-1.0 - 2.0 * a.beta()) / (1.0 + a.beta());
            assert!((t.predicted.unwrap() - alpha).abs() < 1e-12);
            assert!((t.growth.exponent - alpha).abs() <= 0.05 * alpha.abs().max(0.05), "{:?} {alpha}", t.growth);
            assert!(t.growth.r_squared >= 0.99 || alpha == 0.0);
            assert_eq!(t.class, class);
            let t2 = harmonic_tensor_cone(&pole(-2), &chart).unwrap();
            assert_eq!(t2.class, Integrability::NotL2);
            assert!((t2.growth.exponent + 2.0).abs() < 0.1);
        }
    }

    #[test]
    fn integrability_under_refinement() {
        for a in angles() {
            let l2: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| cone_l2_norm(&pole(-1), a, e, 1.0)).collect();
            assert!((l2[2] - l2[1]).abs() <= 1e-2 * l2[2], "{l2:?}");
            let d2: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| cone_l2_norm(&pole(-2), a, e, 1.0)).collect();
            assert!(d2[1] > 10.0 * d2[0] && d2[2] > 10.0 * d2[1], "{d2:?}");
        }
        let a = ConeAngle::new(TAU / 3.0).unwrap();
        let sups: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| cone_tip_sup(&pole(-1), a, e)).collect();
        assert!(sups[0] > sups[1] && sups[1] > sups[2] && sups[2] < 1e-3, "{sups:?}");
    }

    #[test]
    fn peripheral_triviality() {
        for a in angles() {
            let q = pole(-1);
            let field = move |r: f64, phi: f64| cone_harmonic_at(&q, a, r, phi);
            let alpha = a.harmonic_exponent(-1);
            let rep = peripheral_potential(a, &field, alpha, 1e-6).unwrap();
            assert!(rep.defect <= 1e-6);
            let fit = rep.decay.unwrap();
            assert!((fit.exponent - rep.predicted_decay).abs() <= 0.1 * rep.predicted_decay, "{fit:?}");
            assert!(fit.r_squared >= 0.99);
            assert!(rep.gradient_fit_holds);
        }
        let a = ConeAngle::new(PI).unwrap();
        let zero = |_: f64, _: f64| Matrix3::zeros();
        let rep = peripheral_potential(a, &zero, 0.0, 1e-6).unwrap();
        assert_eq!(rep.t0, Some(MinkVec::zero()));
        assert!(rep.decay.is_none());
        assert!(peripheral_potential(a, &zero, -2.5, 1e-6).is_err());
    }

    #[test]
    fn klein_correspondence_is_second_order() {
        let a = ConeAngle::new(PI).unwrap();
        let u = KleinPolynomial { terms: vec![(2, 0, 0.5), (1, 1, -0.3), (0, 3, 0.2), (0, 0, 1.0)] };
        let e1 = klein_correspondence_residual(a, &u, (0.2, 0.6), 16);
        let e2 = klein_correspondence_residual(a, &u, (0.2, 0.6), 32);
        assert!(e2 <= fd_tolerance(0.4 / 32.0));
        assert!(RICHARDSON_WINDOW.contains(&(e1 / e2)), "{e1} {e2}");
    }

    #[test]
    fn cone_angles_of_models() {
        for a in angles() {
            let h = cone_angle_measure(&hyperbolic_polar_metric(a), 1e-3, 1e-2).unwrap();
            assert!((h.theta - a.theta()).abs() < 1e-3);
            let k = cone_angle_measure(&klein_polar_metric(a), 1e-3, 1e-2).unwrap();
            assert!((k.theta - a.theta()).abs() < 1e-3);
        }
        let bad = |r: f64, _: f64| Matrix2::new(1.0, 0.0, 0.0, (r.ln()).powi(2) * 1e3);
        assert!(cone_angle_measure(&bad, 1e-3, 1e-2).is_err());
    }

    #[test]
    fn singular_embedding_identity_and_perturbed() {
        let a = ConeAngle::new(TAU / 3.0).unwrap();
        let id = move |r: f64, phi: f64| tangent_identity(develop(a, r, phi));
        let e = singular_embedding(a, &id, (0.5, 1.5), 24, 48).unwrap();
        assert!(e.passed(), "{:?}", e.checks);
        assert!((e.flat_angle - a.theta()).abs() < 1e-3);
        let q = pole(-1);
        let eps = 0.2;
        let pert = move |r: f64, phi: f64| tangent_identity(develop(a, r, phi)) + cone_harmonic_at(&q, a, r, phi) * eps;
        let coarse = singular_embedding(a, &pert, (0.5, 1.5), 24, 48).unwrap();
        let fine = singular_embedding(a, &pert, (0.5, 1.5), 47, 96).unwrap();
        for s in [&coarse, &fine] {
            assert!(s.passed(), "{:?}", s.checks);
            assert!((s.flat_angle - a.theta()).abs() < 1e-3);
            assert!((s.pullback_angle.theta - a.theta()).abs() < 1e-3);
            assert!((s.first_form_angle.theta - a.theta()).abs() < 1e-2);
        }
        assert!(RICHARDSON_WINDOW.contains(&(coarse.data_error / fine.data_error)), "{} {}", coarse.data_error, fine.data_error);
        let big = move |r: f64, phi: f64| tangent_identity(develop(a, r, phi)) * 3.0;
        assert!(matches!(singular_embedding(a, &big, (0.5, 1.5), 24, 48), Err(ConeError::Positivity { .. })));
    }

    #[test]
    fn wedge_examples() {
        let w = wedge_surgery(&WedgeScene { theta: PI / 2.0, edge_distance: 1.0, bisector_distance: 1.0 }).unwrap();
        assert!(w.relation_residual().abs() <= 1e-12);
        assert!(w.has_large_angle());
        assert!((w.interior.iter().sum::<f64>() - TAU).abs() < 1e-12);
        assert!((w.interior[1] - PI / 2.0).abs() < 1e-12);
        // planar trigonometry: the kite with |p p1| = |p p2| = 1, angle π/4 at p
        // between p1 and p2 has base angles (π − π/4)/2 at p1 and p2
        let base = (PI - PI / 4.0) / 2.0;
        assert!((w.interior[0] - base).abs() < 1e-12);
        assert!((w.interior[3] - 2.0 * base).abs() < 1e-12);
        assert!(wedge_surgery(&WedgeScene { theta: PI / 2.0, edge_distance: 1.0, bisector_distance: 0.0 }).is_err());
        assert!(wedge_surgery(&WedgeScene { theta: PI, edge_distance: 1.0, bisector_distance: 1.0 }).is_err());
        assert!(WedgeScene::from_json(r#"{"theta": 1.0, "edge_distance": 1.0}"#).is_err());
        let s = WedgeScene::from_json(r#"{"theta": 1.0, "edge_distance": 1.0, "bisector_distance": 2.0}"#).unwrap();
        assert_eq!(s.bisector_distance, 2.0);
    }

    #[test]
    fn wedge_sweep_trends() {
        let theta = PI / 2.0;
        let chord = (0.5 * theta).cos();
        let sweep = wedge_sweep(theta, 1.0, chord * (1.0 + 1e-6), 1e3, 100).unwrap();
        for w in &sweep {
            assert!(w.relation_residual().abs() <= 1e-12);
            assert!(w.has_large_angle());
        }
        // θ2 decreases to π as p2 approaches the chord p1 p1' from outside,
        // and increases towards 2π as p2 moves out along the bisector
        assert!((sweep[0].theta2 - PI).abs() < 1e-3 && sweep[0].theta2 > PI);
        assert!(sweep.windows(2).all(|w| w[1].theta2 > w[0].theta2));
        assert!(sweep.last().unwrap().theta2 > TAU - 1e-2);
    }

    proptest! {
        #[test]
        fn wedge_relation_holds(theta in 0.05..3.1f64, d1 in 0.01..10.0f64, d2 in 0.01..10.0f64) {
            let w = wedge_surgery(&WedgeScene { theta, edge_distance: d1, bisector_distance: d2 }).unwrap();
            prop_assert!(w.relation_residual().abs() <= 1e-12);
            prop_assert!(w.has_large_angle());
            prop_assert!(w.theta1 > 0.0 && w.theta2 > 0.0);
        }

        #[test]
        fn deck_equivariance_of_harmonic_tensor(r in 0.01..1.5f64, phi in -6.0..6.0f64, t in 0.5..6.0f64) {
            let a = ConeAngle::new(t).unwrap();
            let q = QuadDiffLocal::new(vec![(-1, Complex64::new(0.2, 1.0)), (1, Complex64::new(0.5, 0.0))]);
            let b0 = cone_harmonic_at(&q, a, r, phi);
            let b1 = cone_harmonic_at(&q, a, r, phi + TAU);
            let d = a.deck();
            let moved = d.matrix() * b0 * d.inverse().matrix();
            prop_assert!((b1 - moved).abs().max() <= 1e-10 * (1.0 + b0.abs().max()));
        }
    }
}
