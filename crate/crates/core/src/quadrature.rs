//! Gauss–Legendre rules and the polar fan quadrature used for integrals over
//! geodesic polygons.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use thiserror::Error;

use crate::mink::{boost_to, klein_project, polar_point, MinkError, MinkVec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature order must be positive")]
    ZeroOrder,
    #[error("polygon must have at least three vertices")]
    TooFewVertices,
    #[error("polygon is not convex around its centre (side {side})")]
    NotStarShaped { side: usize },
    #[error(transparent)]
    Geometry(#[from] MinkError),
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Result<Self, QuadError> {
        let n = NonZeroUsize::new(order).ok_or(QuadError::ZeroOrder)?;
        let rule = GaussLegendre::new(n);
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let l = b - a;
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (a + l * x, l * w))
    }

    /// Composite rule with `panels` equal panels.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        (0..panels)
            .flat_map(|p| {
                let lo = a + h * p as f64;
                self.mapped(lo, lo + h).collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.composite(a, b, panels).into_iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Resolution of the polar fan rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanResolution {
    pub order: usize,
    pub angular_panels: usize,
    pub radial_panels: usize,
}

impl Default for FanResolution {
    fn default() -> Self {
        Self { order: 10, angular_panels: 4, radial_panels: 6 }
    }
}

/// Precomputed quadrature nodes (points of the hyperboloid) and area weights
/// for a convex geodesic polygon.
#[derive(Debug, Clone)]
pub struct PolygonQuadrature {
    pub points: Vec<MinkVec>,
    pub weights: Vec<f64>,
}

impl PolygonQuadrature {
    /// Fan rule around `center`: each triangle (center, v_j, v_{j+1}) is
    /// parametrised by geodesic polar coordinates, with tensor Gauss rules in
    /// the angle and in the radius, and area element `sinh r dr dθ`.
    pub fn polygon(vertices: &[MinkVec], center: MinkVec, res: FanResolution) -> Result<Self, QuadError> {
        let n = vertices.len();
        if n < 3 {
            return Err(QuadError::TooFewVertices);
        }
        let rule = GaussRule::new(res.order)?;
        let ks: Vec<[f64; 2]> = vertices.iter().map(|&v| klein_project(v, center)).collect::<Result<_, _>>()?;
        let frame = boost_to(center);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for j in 0..n {
            let a = ks[j];
            let b = ks[(j + 1) % n];
            // outward normal of the chord a-b, and its distance from the origin
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let nrm = [dy, -dx];
            let dist = nrm[0] * a[0] + nrm[1] * a[1];
            if !(dist > 0.0) {
                return Err(QuadError::NotStarShaped { side: j });
            }
            let ta = a[1].atan2(a[0]);
            let mut tb = b[1].atan2(b[0]);
            while tb <= ta {
                tb += std::f64::consts::TAU;
            }
            if tb - ta >= std::f64::consts::PI {
                return Err(QuadError::NotStarShaped { side: j });
            }
            for (theta, wt) in rule.composite(ta, tb, res.angular_panels) {
                let (s, c) = theta.sin_cos();
                let rho = dist / (nrm[0] * c + nrm[1] * s);
                let rmax = rho.atanh();
                for (r, wr) in rule.composite(0.0, rmax, res.radial_panels) {
                    points.push(frame.apply(polar_point(r, theta)));
                    weights.push(wt * wr * r.sinh());
                }
            }
        }
        Ok(Self { points, weights })
    }

    /// Geodesic disc of radius `radius` about `center`.
    pub fn disc(center: MinkVec, radius: f64, res: FanResolution) -> Result<Self, QuadError> {
        let rule = GaussRule::new(res.order)?;
        let frame = boost_to(center);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        // the periodic trapezoid rule is spectrally accurate in the angle
        let m = 4 * res.order * res.angular_panels;
        let dt = std::f64::consts::TAU / m as f64;
        for i in 0..m {
            let theta = dt * i as f64;
            for (r, wr) in rule.composite(0.0, radius, res.radial_panels) {
                points.push(frame.apply(polar_point(r, theta)));
                weights.push(dt * wr * r.sinh());
            }
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ w_i f(x_i)` in node order.
    pub fn integrate(&self, mut f: impl FnMut(&MinkVec) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// Weighted sum of precomputed nodal values.
    pub fn sum_values(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let g = GaussRule::new(5).unwrap();
        let v = g.integrate(-1.0, 2.0, 1, |x| x.powi(9) - 3.0 * x * x);
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-11);
        assert!(GaussRule::new(0).is_err());
    }

    #[test]
    fn disc_area_closed_form() {
        for &r in &[0.5, 1.0, 2.0] {
            let q = PolygonQuadrature::disc(MinkVec::e3(), r, FanResolution::default()).unwrap();
            let area: f64 = q.weights.iter().sum();
            assert!((area - std::f64::consts::TAU * (r.cosh() - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn triangle_area_is_angle_defect() {
        // equilateral triangle with vertices at distance 1 from the centre
        let p = crate::mink::polar_point(0.8, 0.3);
        let f = boost_to(p);
        let v: Vec<MinkVec> =
            (0..3).map(|i| f.apply(polar_point(1.0, i as f64 * std::f64::consts::TAU / 3.0))).collect();
        let res = FanResolution { order: 16, angular_panels: 8, radial_panels: 2 };
        let q = PolygonQuadrature::polygon(&v, p, res).unwrap();
        let area: f64 = q.weights.iter().sum();
        // interior angle from the hyperbolic law of cosines
        let side = crate::mink::distance(v[0], v[1]);
        let cos_a = (side.cosh() * side.cosh() - side.cosh()) / (side.sinh() * side.sinh());
        let defect = std::f64::consts::PI - 3.0 * cos_a.acos();
        assert!((area - defect).abs() < 1e-10, "{area} vs {defect}");
    }

    #[test]
    fn reversed_polygon_rejected() {
        let v: Vec<MinkVec> = (0..4).rev().map(|i| polar_point(1.0, i as f64 * 1.5)).collect();
        assert!(PolygonQuadrature::polygon(&v, MinkVec::e3(), FanResolution::default()).is_err());
    }
}
