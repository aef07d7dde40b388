//! Convex space-like immersions in Minkowski space and their data: the
//! dictionary between (first fundamental form, shape operator) and
//! (hyperbolic metric, Codazzi tensor), the Gauss–Codazzi equations,
//! reconstruction from a support function, and the immersion holonomy.

use std::io::Write;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::fields::{FieldError, KleinChart, OperatorField, ScalarField};
use crate::holonomy::{Letter, SurfaceGroup, TransCocycle};
use crate::mink::{box_product, mink_dot, normalize_timelike, AffIsom, LinIsom, MinkVec};
use crate::tensors::{side_samples, GridPotential, RayIntegrator, TensorError};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("operator at node {0} is not invertible")]
    Singular(usize),
    #[error("operator at node {node} is not positive (smallest eigenvalue {eig:.3e})")]
    NotPositive { node: usize, eig: f64 },
    #[error("{count} nodes are not space-like")]
    NotSpacelike { count: usize },
    #[error("holonomy fit residual {0:.3e} exceeds tolerance")]
    Inconsistent(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("export: {0}")]
    Io(#[from] std::io::Error),
}

/// First fundamental form and shape operator, in Klein-coordinate
/// components (`I_ij` and mixed `s^i_j`), valid on nodes with
/// `layer ≥ min_layer`.
#[derive(Debug, Clone)]
pub struct EmbeddingData {
    pub metric: Vec<Matrix2<f64>>,
    pub shape: Vec<Matrix2<f64>>,
    pub min_layer: u32,
}

impl EmbeddingData {
    /// Largest `|I s − (I s)ᵀ|` over valid nodes.
    pub fn asymmetry(&self, chart: &KleinChart) -> f64 {
        let v: Vec<f64> = self.metric.iter().zip(&self.shape).map(|(g, s)| skew_norm(&(g * s))).collect();
        chart.max_over(&v, self.min_layer)
    }

    /// Smallest and largest eigenvalues of `s` over valid nodes.
    pub fn convexity_bounds(&self, chart: &KleinChart) -> (f64, f64) {
        chart.interior(self.min_layer).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), n| {
            let e = self_adjoint_eigen(&self.metric[n], &self.shape[n]);
            (lo.min(e[0]), hi.max(e[1]))
        })
    }

    /// Whether `1/M < s < M` holds on every valid node.
    pub fn uniformly_convex(&self, chart: &KleinChart, bound: f64) -> bool {
        let (lo, hi) = self.convexity_bounds(chart);
        lo > 1.0 / bound && hi < bound
    }
}

fn skew_norm(m: &Matrix2<f64>) -> f64 {
    (m[(0, 1)] - m[(1, 0)]).abs()
}

/// Eigenvalues (ascending) of an operator self-adjoint for `g`.
fn self_adjoint_eigen(g: &Matrix2<f64>, s: &Matrix2<f64>) -> [f64; 2] {
    let l = g.cholesky().map(|c| c.l()).unwrap_or_else(Matrix2::identity);
    let linv = l.try_inverse().unwrap_or_else(Matrix2::identity);
    let m = l.transpose() * s * linv.transpose();
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues;
    [e[0].min(e[1]), e[0].max(e[1])]
}

/// `I = h(b·, b·)`, `s = b⁻¹`.
pub fn pair_to_data(chart: &KleinChart, b: &OperatorField) -> Result<EmbeddingData, EmbeddingError> {
    let mut metric = Vec::with_capacity(chart.len());
    let mut shape = Vec::with_capacity(chart.len());
    for (n, node) in chart.nodes().iter().enumerate() {
        let bc = chart.coord_operator(n, &b.values[n]);
        let inv = bc.try_inverse().ok_or(EmbeddingError::Singular(n))?;
        metric.push(bc.transpose() * node.metric * bc);
        shape.push(inv);
    }
    Ok(EmbeddingData { metric, shape, min_layer: b.min_layer })
}

/// Inverse of [`pair_to_data`]: `h = I(s·, s·)` (coordinate components)
/// and `b = s⁻¹` (frame matrices of the chart).
pub fn data_to_pair(chart: &KleinChart, d: &EmbeddingData) -> Result<(Vec<Matrix2<f64>>, OperatorField), EmbeddingError> {
    let mut metric = Vec::with_capacity(chart.len());
    let mut values = Vec::with_capacity(chart.len());
    for (n, (g, s)) in d.metric.iter().zip(&d.shape).enumerate() {
        let bc = s.try_inverse().ok_or(EmbeddingError::Singular(n))?;
        metric.push(s.transpose() * g * s);
        values.push(chart.frame_from_coord(n, &bc));
    }
    Ok((metric, OperatorField { values, min_layer: d.min_layer }))
}

/// Residuals of the Gauss and Codazzi equations for embedding data.
#[derive(Debug, Clone)]
pub struct GaussCodazzi {
    /// `|det s + K_I|` per node.
    pub gauss: ScalarField,
    /// `|d^{∇_I} s|` on an `I`-orthonormal frame, per node.
    pub codazzi: ScalarField,
    pub gauss_layer: u32,
    pub codazzi_layer: u32,
}

impl GaussCodazzi {
    pub fn max(&self, chart: &KleinChart) -> (f64, f64) {
        (chart.max_over(&self.gauss.values, self.gauss_layer), chart.max_over(&self.codazzi.values, self.codazzi_layer))
    }

    pub fn max_within(&self, chart: &KleinChart, radius: f64) -> (f64, f64) {
        (
            chart.max_within(&self.gauss.values, self.gauss_layer, radius),
            chart.max_within(&self.codazzi.values, self.codazzi_layer, radius),
        )
    }
}

/// Gauss curvature of `I` by the Brioschi formula (valid two layers inside
/// the data) and the Codazzi form of `s` with Christoffel symbols of `I`
/// from differences of its coefficients.
pub fn gauss_codazzi_residual(chart: &KleinChart, d: &EmbeddingData) -> GaussCodazzi {
    let n = chart.len();
    let e: Vec<f64> = d.metric.iter().map(|m| m[(0, 0)]).collect();
    let f: Vec<f64> = d.metric.iter().map(|m| m[(0, 1)]).collect();
    let g: Vec<f64> = d.metric.iter().map(|m| m[(1, 1)]).collect();
    let gauss_layer = d.min_layer + 2;
    let codazzi_layer = d.min_layer + 1;
    let mut gauss = vec![f64::NAN; n];
    let mut codazzi = vec![f64::NAN; n];
    for i in chart.interior(codazzi_layer) {
        if chart.node(i).layer >= gauss_layer {
            if let Some(k) = chart.brioschi(&e, &f, &g, i) {
                gauss[i] = (d.shape[i].determinant() + k).abs();
            }
        }
        let (Some(dm), Some(ds)) = (chart.diff1(&d.metric, i), chart.diff1(&d.shape, i)) else { continue };
        let gi = d.metric[i];
        let Some(ginv) = gi.try_inverse() else { continue };
        // Γ^k_ij = ½ g^{kl} (∂i g_jl + ∂j g_il − ∂l g_ij)
        let gamma = |k: usize, a: usize, b: usize| -> f64 {
            (0..2).map(|l| 0.5 * ginv[(k, l)] * (dm[a][(b, l)] + dm[b][(a, l)] - dm[l][(a, b)])).sum()
        };
        let s = &d.shape[i];
        let v: [f64; 2] = std::array::from_fn(|k| {
            let mut r = ds[0][(k, 1)] - ds[1][(k, 0)];
            for l in 0..2 {
                r += gamma(k, 0, l) * s[(l, 1)] - gamma(k, 1, l) * s[(l, 0)];
            }
            r
        });
        let vv = nalgebra::Vector2::new(v[0], v[1]);
        codazzi[i] = ((vv.transpose() * gi * vv)[0].max(0.0) / gi.determinant()).sqrt();
    }
    GaussCodazzi { gauss: ScalarField { values: gauss }, codazzi: ScalarField { values: codazzi }, gauss_layer, codazzi_layer }
}

/// A space-like immersion sampled on a chart with its future unit normal.
#[derive(Debug, Clone)]
pub struct ImmersionField {
    pub sigma: Vec<MinkVec>,
    pub normal: Vec<MinkVec>,
}

impl ImmersionField {
    /// `v x y z` per node.
    pub fn write_obj(&self, mut w: impl Write) -> Result<(), EmbeddingError> {
        for p in &self.sigma {
            writeln!(w, "v {:.17e} {:.17e} {:.17e}", p.x, p.y, p.z)?;
        }
        Ok(())
    }

    /// Support function `<σ, G>` per node.
    pub fn support(&self) -> Vec<f64> {
        self.sigma.iter().zip(&self.normal).map(|(s, g)| mink_dot(*s, *g)).collect()
    }
}

/// Rejects operator fields that are not positive at some node.
pub fn check_positive(b: &OperatorField) -> Result<f64, EmbeddingError> {
    let mut lowest = f64::INFINITY;
    for (n, m) in b.values.iter().enumerate() {
        let e = SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min();
        if !(e > 0.0) {
            return Err(EmbeddingError::NotPositive { node: n, eig: e });
        }
        lowest = lowest.min(e);
    }
    Ok(lowest)
}

/// Reconstructed immersion with the potential it came from.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub immersion: ImmersionField,
    pub potential: GridPotential,
}

/// `σ = grad û − û G` with `G` the developing map and `û` the grid potential
/// of `b` (normalised at the chart base by `û = ∂û = 0` in the flat chart).
pub fn reconstruct_immersion(chart: &KleinChart, b: &OperatorField, tol: f64) -> Result<Reconstruction, EmbeddingError> {
    check_positive(b)?;
    let potential = crate::tensors::potential_from_codazzi(chart, b, tol)?;
    let sigma = potential.sigma(chart);
    let normal = chart.nodes().iter().map(|n| n.point).collect();
    Ok(Reconstruction { immersion: ImmersionField { sigma, normal }, potential })
}

/// Geometry of a sampled immersion.
#[derive(Debug, Clone)]
pub struct ImmersionGeometry {
    pub data: EmbeddingData,
    /// Normal computed from the box product of `∂1σ, ∂2σ`, future-pointing.
    pub gauss_map: Vec<MinkVec>,
    /// `<dG ∂i, dG ∂j>`.
    pub third_form: Vec<Matrix2<f64>>,
    /// Largest `|I s − (I s)ᵀ|` before symmetrisation.
    pub asymmetry: f64,
}

/// First fundamental form from `dσ`, Gauss map from the normalised box
/// product, shape operator from `dG = dσ ∘ s` (symmetrised for `I`).
pub fn immersion_geometry(chart: &KleinChart, f: &ImmersionField) -> Result<ImmersionGeometry, EmbeddingError> {
    let n = chart.len();
    let mut metric = vec![Matrix2::identity(); n];
    let mut gauss_map = vec![MinkVec::e3(); n];
    let mut tangents = vec![[MinkVec::zero(); 2]; n];
    let mut bad = 0;
    for i in chart.interior(1) {
        let d = chart.diff1(&f.sigma, i).expect("interior stencil");
        let m = Matrix2::from_fn(|a, c| mink_dot(d[a], d[c]));
        let nrm = box_product(d[0], d[1]);
        if !(m[(0, 0)] > 0.0 && m.determinant() > 0.0) || !(nrm.norm2() < 0.0) {
            bad += 1;
            continue;
        }
        let mut g = normalize_timelike(nrm);
        // future: <G, e3> < 0
        if mink_dot(g, MinkVec::e3()) > 0.0 {
            g = -g;
        }
        metric[i] = m;
        gauss_map[i] = g;
        tangents[i] = d;
    }
    if bad > 0 {
        return Err(EmbeddingError::NotSpacelike { count: bad });
    }
    let mut shape = vec![Matrix2::identity(); n];
    let mut third = vec![Matrix2::identity(); n];
    let mut asym: f64 = 0.0;
    for i in chart.interior(2) {
        let dg = chart.diff1(&gauss_map, i).expect("interior stencil");
        let g = metric[i];
        let ginv = g.try_inverse().ok_or(EmbeddingError::Singular(i))?;
        // dG(∂c) = Σ_j s^j_c ∂jσ  ⇒  I s = (<∂jσ, dG ∂c>)
        let is = Matrix2::from_fn(|j, c| mink_dot(tangents[i][j], dg[c]));
        asym = asym.max(skew_norm(&is) / (1.0 + is.abs().max()));
        shape[i] = ginv * (is + is.transpose()) * 0.5;
        third[i] = Matrix2::from_fn(|a, c| mink_dot(dg[a], dg[c]));
    }
    Ok(ImmersionGeometry {
        data: EmbeddingData { metric, shape, min_layer: 2 },
        gauss_map,
        third_form: third,
        asymmetry: asym,
    })
}

/// `σ_t` reconstructed from `b + t Id`, normalised so that its support
/// function is `û − t` (the chart-base normalisation of the potential of
/// `t Id` is `−t − t<p, x>`, so `t p` is added back).
pub fn normal_flow(chart: &KleinChart, b: &OperatorField, t: f64, tol: f64) -> Result<ImmersionField, EmbeddingError> {
    let shifted = OperatorField { values: b.values.iter().map(|m| m + Matrix2::identity() * t).collect(), min_layer: b.min_layer };
    let r = reconstruct_immersion(chart, &shifted, tol)?;
    let p = chart.base();
    let sigma = r.immersion.sigma.iter().map(|s| *s + p * t).collect();
    Ok(ImmersionField { sigma, normal: r.immersion.normal })
}

/// Max over valid nodes of `|σ_t − (σ + t G)|` (Euclidean components).
pub fn normal_flow_gap(a: &ImmersionField, flowed: &ImmersionField, t: f64) -> f64 {
    a.sigma
        .iter()
        .zip(&a.normal)
        .zip(&flowed.sigma)
        .map(|((s, g), st)| (*st - (*s + *g * t)).max_abs())
        .fold(0.0, f64::max)
}

/// Frame-relative max-norm of `I / t² − h` over valid nodes.
pub fn rescaled_metric_gap(chart: &KleinChart, d: &EmbeddingData, t: f64) -> f64 {
    let v: Vec<f64> = chart
        .nodes()
        .iter()
        .zip(&d.metric)
        .map(|(node, m)| (node.frame.transpose() * (m / (t * t) - node.metric) * node.frame).abs().max())
        .collect();
    chart.max_over(&v, d.min_layer)
}

/// Holonomy of an equivariant immersion.
#[derive(Debug, Clone, Serialize)]
pub struct ImmersionHolonomy {
    pub generators: [AffIsom; 4],
    /// Largest `|A − ρ(α)|` of the linear parts fitted from the Gauss map.
    pub linear_defect: f64,
    /// Largest deviation of `σ(αx) − ρ(α)σ(x)` from its mean.
    pub fit_residual: f64,
}

impl ImmersionHolonomy {
    pub fn translations(&self) -> TransCocycle {
        TransCocycle::new(self.generators.map(|g| g.translation))
    }
}

/// Holonomy of `σ = grad û − û x` for an equivariant positive Codazzi field
/// `b`, where `û` is the ray potential about the octagon centre. Linear
/// parts are fitted from `G(αx) = A G(x)`; translations from
/// `σ(αx) = ρ(α)σ(x) + t_α` on points near each side.
pub fn immersion_holonomy(
    b: &dyn Fn(MinkVec) -> Matrix3<f64>,
    g: &SurfaceGroup,
    samples: usize,
    tol: f64,
) -> Result<ImmersionHolonomy, EmbeddingError> {
    let ray = RayIntegrator::new(g.center());
    let mut gens = [AffIsom::identity(); 4];
    let mut linear_defect: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for (gen, out) in gens.iter_mut().enumerate() {
        let alpha = g.rep.letter(Letter::new(gen, false));
        let pairing = g
            .side_pairings()
            .iter()
            .find(|p| p.letter == Letter::new(gen, false))
            .copied()
            .ok_or(TensorError::Holonomy(crate::holonomy::HolonomyError::SidePairing { gen }))?;
        let pts = side_samples(g, pairing.from, samples.max(3), 0.3);
        // linear part from the Gauss map at three points
        let xs = Matrix3::from_columns(&[pts[0].to_vector(), pts[1].to_vector(), pts[2].to_vector()]);
        let ys = Matrix3::from_columns(&[
            alpha.apply(pts[0]).to_vector(),
            alpha.apply(pts[1]).to_vector(),
            alpha.apply(pts[2]).to_vector(),
        ]);
        let a = ys * xs.try_inverse().ok_or(EmbeddingError::Singular(0))?;
        linear_defect = linear_defect.max((a - alpha.matrix()).abs().max() / alpha.matrix().abs().max());
        let lin = LinIsom::from_matrix_unchecked(a);
        let diffs: Vec<MinkVec> = pts.iter().map(|&x| ray.at(b, alpha.apply(x)).sigma - lin.apply(ray.at(b, x).sigma)).collect();
        let mean = diffs.iter().fold(MinkVec::zero(), |acc, d| acc + *d) / diffs.len() as f64;
        let scale = 1.0 + mean.max_abs();
        worst = worst.max(diffs.iter().map(|d| (*d - mean).max_abs()).fold(0.0, f64::max) / scale);
        *out = AffIsom::new(alpha, mean);
    }
    if !(worst <= tol) {
        return Err(EmbeddingError::Inconsistent(worst));
    }
    Ok(ImmersionHolonomy { generators: gens, linear_defect, fit_residual: worst })
}

/// Residual summary of a reconstruction, for JSON reports.
#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionSummary {
    pub spacing: f64,
    pub metric_error: f64,
    pub shape_error: f64,
    pub third_form_error: f64,
    pub support_error: f64,
    pub gauss_residual: f64,
    pub codazzi_residual: f64,
    pub asymmetry: f64,
}

/// Reconstructs from `b`, recomputes the geometry and compares with
/// `(h(b·, b·), b⁻¹)`, `h` and `û`. Errors are relative (per node, frame
/// components) and measured on the Klein disc of radius `radius`.
pub fn reconstruction_summary(
    chart: &KleinChart,
    b: &OperatorField,
    tol: f64,
    radius: f64,
) -> Result<(ReconstructionSummary, Reconstruction, ImmersionGeometry), EmbeddingError> {
    let rec = reconstruct_immersion(chart, b, tol)?;
    let geo = immersion_geometry(chart, &rec.immersion)?;
    let expect = pair_to_data(chart, b)?;
    let layer = geo.data.min_layer;
    let rel = |a: &Matrix2<f64>, e: &Matrix2<f64>| (a - e).abs().max() / e.abs().max();
    let metric: Vec<f64> = geo.data.metric.iter().zip(&expect.metric).map(|(a, e)| rel(a, e)).collect();
    let shape: Vec<f64> = geo.data.shape.iter().zip(&expect.shape).map(|(a, e)| rel(a, e)).collect();
    let third: Vec<f64> = geo.third_form.iter().zip(chart.nodes()).map(|(a, n)| rel(a, &n.metric)).collect();
    let support: Vec<f64> = rec
        .immersion
        .support()
        .iter()
        .zip(&rec.potential.u.values)
        .map(|(s, u)| (s - u).abs() / (1.0 + u.abs()))
        .collect();
    let gc = gauss_codazzi_residual(chart, &geo.data);
    let (gauss_residual, codazzi_residual) = gc.max_within(chart, radius);
    let summary = ReconstructionSummary {
        spacing: chart.spacing(),
        metric_error: chart.max_within(&metric, layer, radius),
        shape_error: chart.max_within(&shape, layer, radius),
        third_form_error: chart.max_within(&third, layer, radius),
        support_error: chart.max_within(&support, 0, radius),
        gauss_residual,
        codazzi_residual,
        asymmetry: geo.asymmetry,
    };
    Ok((summary, rec, geo))
}
