//! The genus-2 surface group of the regular octagon with vertex angle π/4,
//! words in its generators, and translation cocycles (Z¹, B¹ and a
//! complement realising H¹).

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, Matrix3, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mink::{
    boost_to, distance, exp_lambda, lambda_inverse, log_map, mink_dot, op_norm, x_translation, z_rotation,
    LinIsom, MinkError, MinkVec,
};
use crate::quadrature::{FanResolution, PolygonQuadrature, QuadError};

/// Tolerance on the relator product `[a1,b1][a2,b2] − Id` (operator norm).
pub const RELATOR_TOL: f64 = 1e-10;
/// Tolerance on the octagon angle sum.
pub const ANGLE_TOL: f64 = 1e-8;
/// Tolerance for endpoint matching of side pairings.
pub const SIDE_TOL: f64 = 1e-10;

pub const GENERATOR_NAMES: [&str; 4] = ["a1", "b1", "a2", "b2"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolonomyError {
    #[error("relator defect {0:.3e} exceeds tolerance")]
    Relator(f64),
    #[error("octagon angle sum deviates from 2π by {0:.3e}")]
    AngleSum(f64),
    #[error("side pairing for generator {gen} does not map a side onto a side")]
    SidePairing { gen: usize },
    #[error("numerical rank of {what} is {got}, expected {expected}")]
    Rank { what: &'static str, got: usize, expected: usize },
    #[error("rotation angle is a multiple of 2π; R − Id is not invertible on the axis complement")]
    DegenerateRotation,
    #[error("generator index {0} out of range")]
    BadGenerator(usize),
    #[error("invalid document: {0}")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] MinkError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// One letter of a word: a generator index in `0..4` and an exponent `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub gen: usize,
    pub inv: bool,
}

impl Letter {
    pub fn new(gen: usize, inv: bool) -> Self {
        Self { gen, inv }
    }

    pub fn inverse(self) -> Self {
        Self::new(self.gen, !self.inv)
    }

    /// All eight letters `a1, a1⁻¹, b1, ...`.
    pub fn all() -> impl Iterator<Item = Letter> {
        (0..4).flat_map(|g| [Letter::new(g, false), Letter::new(g, true)])
    }
}

/// A freely reduced word in the generators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Letter>", into = "Vec<Letter>")]
pub struct Word(Vec<Letter>);

impl From<Vec<Letter>> for Word {
    fn from(v: Vec<Letter>) -> Self {
        Word::new(v)
    }
}

impl From<Word> for Vec<Letter> {
    fn from(w: Word) -> Self {
        w.0
    }
}

impl Word {
    /// Builds a word, applying free reduction.
    pub fn new(letters: impl IntoIterator<Item = Letter>) -> Self {
        let mut out: Vec<Letter> = Vec::new();
        for l in letters {
            if out.last() == Some(&l.inverse()) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Self(out)
    }

    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn letter(l: Letter) -> Self {
        Self(vec![l])
    }

    pub fn generator(g: usize) -> Self {
        Self(vec![Letter::new(g, false)])
    }

    /// `[a1,b1][a2,b2] = a1 b1 a1⁻¹ b1⁻¹ a2 b2 a2⁻¹ b2⁻¹`.
    pub fn relator() -> Self {
        let mut v = Vec::new();
        for (a, b) in [(0, 1), (2, 3)] {
            v.push(Letter::new(a, false));
            v.push(Letter::new(b, false));
            v.push(Letter::new(a, true));
            v.push(Letter::new(b, true));
        }
        Self(v)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    pub fn concat(&self, other: &Word) -> Self {
        Word::new(self.0.iter().chain(other.0.iter()).copied())
    }

    /// Inserts `other` after the first `pos` letters (then reduces).
    pub fn insert(&self, pos: usize, other: &Word) -> Self {
        let pos = pos.min(self.0.len());
        Word::new(self.0[..pos].iter().chain(other.0.iter()).chain(self.0[pos..].iter()).copied())
    }
}

/// Linear holonomy: images of the four generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub generators: [LinIsom; 4],
}

impl Representation {
    pub fn new(generators: [LinIsom; 4]) -> Result<Self, HolonomyError> {
        let rep = Self { generators };
        let d = rep.relator_defect();
        if !(d <= RELATOR_TOL) {
            return Err(HolonomyError::Relator(d));
        }
        Ok(rep)
    }

    pub fn letter(&self, l: Letter) -> LinIsom {
        let g = self.generators[l.gen];
        if l.inv {
            g.inverse()
        } else {
            g
        }
    }

    pub fn element(&self, w: &Word) -> LinIsom {
        w.letters().iter().fold(LinIsom::identity(), |acc, &l| acc.compose(&self.letter(l)))
    }

    /// Operator norm of `ρ(relator) − Id`.
    pub fn relator_defect(&self) -> f64 {
        op_norm(&(self.element(&Word::relator()).matrix() - Matrix3::identity()))
    }

    /// `A ρ A⁻¹`.
    pub fn conjugate(&self, a: &LinIsom) -> Self {
        let ai = a.inverse();
        Self { generators: self.generators.map(|g| a.compose(&g).compose(&ai)) }
    }
}

/// A genus-2 surface group with its fundamental octagon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceGroup {
    pub rep: Representation,
    pub octagon_vertices: [MinkVec; 8],
    #[serde(skip)]
    pairings: Vec<SidePairing>,
}

/// The generator letter that maps side `from` onto side `to`
/// (endpoints swapped, as for an orientation-preserving gluing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidePairing {
    pub letter: Letter,
    pub from: usize,
    pub to: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceGroupDoc {
    generators: [LinIsom; 4],
    octagon_vertices: [MinkVec; 8],
}

impl<'de> Deserialize<'de> for SurfaceGroup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = SurfaceGroupDoc::deserialize(d)?;
        SurfaceGroup::new(doc.generators, doc.octagon_vertices).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize)]
struct SurfaceGroupOut<'a> {
    generators: &'a [LinIsom; 4],
    octagon_vertices: &'a [MinkVec; 8],
}

impl SurfaceGroup {
    /// Validates the relator, the angle sum and the side pairings.
    pub fn new(generators: [LinIsom; 4], octagon_vertices: [MinkVec; 8]) -> Result<Self, HolonomyError> {
        for v in &octagon_vertices {
            crate::mink::check_hyperboloid(*v, 1e-9)?;
        }
        let rep = Representation::new(generators)?;
        let mut g = Self { rep, octagon_vertices, pairings: Vec::new() };
        let sum: f64 = g.vertex_angles().iter().sum();
        let dev = (sum - std::f64::consts::TAU).abs();
        if !(dev <= ANGLE_TOL) {
            return Err(HolonomyError::AngleSum(dev));
        }
        g.pairings = g.find_side_pairings()?;
        Ok(g)
    }

    /// Regular octagon centred at `e3` with vertex angle π/4. Side `j` joins
    /// vertices `j` and `j+1` and has its midpoint in direction `jπ/4`; the
    /// map taking side `j` to side `j+2` is rotation ∘ translation ∘ rotation,
    /// and the generators are `a1 = A0⁻¹, b1 = A1, a2 = A4⁻¹, b2 = A5`.
    pub fn build_genus2_octagon() -> Result<Self, HolonomyError> {
        let s2 = std::f64::consts::SQRT_2;
        // cosh(inradius) = cot(π/8) = 1 + √2, cosh(circumradius) = cot²(π/8)
        let cosh_in = 1.0 + s2;
        let cosh_circ = cosh_in * cosh_in;
        let circ = cosh_circ.acosh();
        let cosh_2in = 2.0 * cosh_in * cosh_in - 1.0;
        let two_in = cosh_2in.acosh();
        let quarter = std::f64::consts::FRAC_PI_4;
        let pi = std::f64::consts::PI;
        let side_map = |j: usize| {
            let phi = |k: usize| k as f64 * quarter;
            z_rotation(phi(j + 2)).compose(&x_translation(two_in)).compose(&z_rotation(pi - phi(j)))
        };
        let gens = [side_map(0).inverse(), side_map(1), side_map(4).inverse(), side_map(5)];
        let verts: [MinkVec; 8] = std::array::from_fn(|j| {
            crate::mink::polar_point(circ, j as f64 * quarter - quarter / 2.0)
        });
        Self::new(gens.map(|g| snap_isometry(*g.matrix())), verts)
    }

    pub fn generator(&self, i: usize) -> Result<LinIsom, HolonomyError> {
        self.rep.generators.get(i).copied().ok_or(HolonomyError::BadGenerator(i))
    }

    pub fn element(&self, w: &Word) -> LinIsom {
        self.rep.element(w)
    }

    pub fn relator_defect(&self) -> f64 {
        self.rep.relator_defect()
    }

    pub fn side_pairings(&self) -> &[SidePairing] {
        &self.pairings
    }

    /// Centre of the octagon (normalised vertex barycentre).
    pub fn center(&self) -> MinkVec {
        let s = self.octagon_vertices.iter().fold(MinkVec::zero(), |a, &v| a + v);
        crate::mink::normalize_timelike(s)
    }

    /// Geodesic midpoint of side `j`.
    pub fn side_midpoint(&self, j: usize) -> MinkVec {
        let a = self.octagon_vertices[j % 8];
        let b = self.octagon_vertices[(j + 1) % 8];
        crate::mink::normalize_timelike(a + b)
    }

    /// Interior angles, from the tangent directions of the two sides.
    pub fn vertex_angles(&self) -> [f64; 8] {
        std::array::from_fn(|j| {
            let v = self.octagon_vertices[j];
            let prev = log_map(v, self.octagon_vertices[(j + 7) % 8]);
            let next = log_map(v, self.octagon_vertices[(j + 1) % 8]);
            let c = mink_dot(prev, next) / (prev.norm2() * next.norm2()).sqrt();
            c.clamp(-1.0, 1.0).acos()
        })
    }

    fn find_side_pairings(&self) -> Result<Vec<SidePairing>, HolonomyError> {
        let v = &self.octagon_vertices;
        let find = |x: MinkVec| (0..8).find(|&k| (x - v[k]).max_abs() <= SIDE_TOL * x.z.max(1.0).powi(2));
        let mut out = Vec::new();
        for (gi, g) in self.rep.generators.iter().enumerate() {
            let mut found = false;
            for l in [Letter::new(gi, false), Letter::new(gi, true)] {
                let m = if l.inv { g.inverse() } else { *g };
                for j in 0..8 {
                    let a = find(m.apply(v[j]));
                    let b = find(m.apply(v[(j + 1) % 8]));
                    if let (Some(a), Some(b)) = (a, b) {
                        if b == (a + 7) % 8 || (a == (b + 1) % 8) {
                            out.push(SidePairing { letter: l, from: j, to: b });
                            found = true;
                        }
                    }
                }
            }
            if !found {
                return Err(HolonomyError::SidePairing { gen: gi });
            }
        }
        Ok(out)
    }

    /// Fan quadrature over the octagon.
    pub fn quadrature(&self, res: FanResolution) -> Result<PolygonQuadrature, HolonomyError> {
        Ok(PolygonQuadrature::polygon(&self.octagon_vertices, self.center(), res)?)
    }

    pub fn area(&self, res: FanResolution) -> Result<f64, HolonomyError> {
        Ok(self.quadrature(res)?.weights.iter().sum())
    }

    /// Group elements whose image of the octagon centre lies within `radius`
    /// of the centre, found by breadth-first search on the tiling.
    pub fn orbit_elements(&self, radius: f64) -> Vec<OrbitElement> {
        let c = self.center();
        let circ = distance(c, self.octagon_vertices[0]);
        let explore = radius + circ;
        let mut seen: Vec<OrbitElement> = vec![OrbitElement {
            word: Word::identity(),
            matrix: LinIsom::identity(),
            point: c,
        }];
        // distinct tile centres are ≥ 2·inradius apart, so p − q is spacelike
        // with <p − q, p − q> = 2 cosh d − 2 > 18 and their Euclidean distance
        // exceeds 4; rounded copies of one centre are far closer than 0.5
        let cell = |p: MinkVec| (p.x.floor() as i64, p.y.floor() as i64);
        let mut index: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        index.entry(cell(c)).or_default().push(0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let cur = seen[i].clone();
            for l in Letter::all() {
                let m = cur.matrix.compose(&self.rep.letter(l));
                let p = m.apply(c);
                if distance(c, p) > explore {
                    continue;
                }
                let (cx, cy) = cell(p);
                let dup = (cx - 1..=cx + 1).any(|x| {
                    (cy - 1..=cy + 1).any(|y| {
                        index.get(&(x, y)).is_some_and(|v| v.iter().any(|&k| (seen[k].point - p).max_abs() < 0.5))
                    })
                });
                if dup {
                    continue;
                }
                seen.push(OrbitElement { word: cur.word.concat(&Word::letter(l)), matrix: m, point: p });
                index.entry((cx, cy)).or_default().push(seen.len() - 1);
                queue.push_back(seen.len() - 1);
            }
        }
        seen.retain(|e| distance(c, e.point) <= radius);
        seen.sort_by(|a, b| distance(c, a.point).total_cmp(&distance(c, b.point)));
        seen
    }

    /// Group elements `g_k` with `g_k(v_0) = v_k`, found through the side pairings.
    pub fn vertex_elements(&self) -> Result<[Word; 8], HolonomyError> {
        let v = &self.octagon_vertices;
        let mut words: [Option<Word>; 8] = Default::default();
        words[0] = Some(Word::identity());
        let mut changed = true;
        while changed {
            changed = false;
            for p in &self.pairings {
                let m = self.rep.letter(p.letter);
                for k in 0..8 {
                    let Some(wk) = words[k].clone() else { continue };
                    let img = m.apply(v[k]);
                    if let Some(j) = (0..8).find(|&j| (img - v[j]).max_abs() < 1e-8 * img.z) {
                        if words[j].is_none() {
                            words[j] = Some(Word::letter(p.letter).concat(&wk));
                            changed = true;
                        }
                    }
                }
            }
        }
        let mut out: [Word; 8] = Default::default();
        for (k, w) in words.into_iter().enumerate() {
            out[k] = w.ok_or(HolonomyError::SidePairing { gen: k })?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SurfaceGroupOut {
            generators: &self.rep.generators,
            octagon_vertices: &self.octagon_vertices,
        })
        .expect("serialisable")
    }

    pub fn from_json(s: &str) -> Result<Self, HolonomyError> {
        serde_json::from_str(s).map_err(|e| HolonomyError::Parse(e.to_string()))
    }

    /// The same surface moved by the isometry `a`.
    pub fn conjugate(&self, a: &LinIsom) -> Result<Self, HolonomyError> {
        let rep = self.rep.conjugate(a);
        Self::new(rep.generators.map(|g| snap_isometry(*g.matrix())), self.octagon_vertices.map(|v| a.apply(v)))
    }
}

/// Removes rounding drift from a near-isometry by one Newton polar step.
fn snap_isometry(m: Matrix3<f64>) -> LinIsom {
    let e = crate::mink::eta();
    // M (3 I − η Mᵀ η M) / 2
    let corr = (Matrix3::identity() * 3.0 - e * m.transpose() * e * m) * 0.5;
    LinIsom::from_matrix_unchecked(m * corr)
}

/// A group element with a word, its matrix and the image of the centre.
#[derive(Debug, Clone)]
pub struct OrbitElement {
    pub word: Word,
    pub matrix: LinIsom,
    pub point: MinkVec,
}

/// One translation vector per generator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransCocycle {
    pub values: [MinkVec; 4],
}

impl TransCocycle {
    pub fn new(values: [MinkVec; 4]) -> Self {
        Self { values }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_flat(v: &[f64]) -> Self {
        Self::new(std::array::from_fn(|i| MinkVec::new(v[3 * i], v[3 * i + 1], v[3 * i + 2])))
    }

    pub fn to_flat(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, v) in self.values.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(&v.to_array());
        }
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(std::array::from_fn(|i| self.values[i] + o.values[i]))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.values.map(|v| v * s))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
    }

    /// Value of `t` on the inverse letter: `t_{α⁻¹} = −ρ(α)⁻¹ t_α`.
    pub fn letter_value(&self, l: Letter, rep: &Representation) -> MinkVec {
        let t = self.values[l.gen];
        if l.inv {
            -rep.generators[l.gen].inverse().apply(t)
        } else {
            t
        }
    }

    /// Max-norm of the extension over the relator (zero on Z¹).
    pub fn relator_residual(&self, rep: &Representation) -> f64 {
        cocycle_extend(self, &Word::relator(), rep).max_abs()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    /// Parses and checks finiteness (membership in Z¹ needs a group, see
    /// [`TransCocycle::relator_residual`]).
    pub fn from_json(s: &str) -> Result<Self, HolonomyError> {
        let t: Self = serde_json::from_str(s).map_err(|e| HolonomyError::Parse(e.to_string()))?;
        if t.values.iter().any(|v| !v.is_finite()) {
            return Err(HolonomyError::Parse("non-finite cocycle value".into()));
        }
        Ok(t)
    }
}

/// Value of the cocycle on the element represented by `w`, by the rule
/// `t_{αβ} = ρ(α) t_β + t_α`.
pub fn cocycle_extend(t: &TransCocycle, w: &Word, rep: &Representation) -> MinkVec {
    let mut acc = LinIsom::identity();
    let mut out = MinkVec::zero();
    for &l in w.letters() {
        out += acc.apply(t.letter_value(l, rep));
        acc = acc.compose(&rep.letter(l));
    }
    out
}

/// `t_α = ρ(α) t0 − t0`.
pub fn coboundary_cocycle(t0: MinkVec, rep: &Representation) -> TransCocycle {
    TransCocycle::new(rep.generators.map(|g| g.apply(t0) - t0))
}

/// The linear map `t ↦ t_relator` as a 3×12 matrix.
pub fn relator_constraint(rep: &Representation) -> SMatrix<f64, 3, 12> {
    let mut c = SMatrix::<f64, 3, 12>::zeros();
    for j in 0..12 {
        let mut flat = [0.0; 12];
        flat[j] = 1.0;
        let v = cocycle_extend(&TransCocycle::from_flat(&flat), &Word::relator(), rep);
        for i in 0..3 {
            c[(i, j)] = v.component(i);
        }
    }
    c
}

/// Orthonormal (for the Euclidean inner product on the 12 components) bases of
/// Z¹, B¹, and the complement of B¹ in Z¹ used as H¹.
#[derive(Debug, Clone)]
pub struct CocycleBasis {
    pub z1: Vec<TransCocycle>,
    pub b1: Vec<TransCocycle>,
    pub h1: Vec<TransCocycle>,
}

impl CocycleBasis {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.z1.len(), self.b1.len(), self.h1.len())
    }

    /// Coordinates of `t` along the H¹ basis.
    pub fn h1_coordinates(&self, t: &TransCocycle) -> Vec<f64> {
        let f = t.to_flat();
        self.h1.iter().map(|h| dot12(&h.to_flat(), &f)).collect()
    }

    /// Norm of the H¹ part of `t`.
    pub fn h1_norm(&self, t: &TransCocycle) -> f64 {
        self.h1_coordinates(t).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Largest deviation of the bases from orthonormality and from the
    /// required inclusions.
    pub fn orthogonality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for set in [&self.z1, &self.b1, &self.h1] {
            for (i, a) in set.iter().enumerate() {
                for (j, b) in set.iter().enumerate() {
                    let d = dot12(&a.to_flat(), &b.to_flat()) - if i == j { 1.0 } else { 0.0 };
                    worst = worst.max(d.abs());
                }
            }
        }
        for h in &self.h1 {
            for b in &self.b1 {
                worst = worst.max(dot12(&h.to_flat(), &b.to_flat()).abs());
            }
        }
        worst
    }
}

fn dot12(a: &[f64; 12], b: &[f64; 12]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn columns_to_cocycles(m: &DMatrix<f64>) -> Vec<TransCocycle> {
    (0..m.ncols()).map(|j| TransCocycle::from_flat(m.column(j).as_slice())).collect()
}

/// Computes Z¹, B¹ and H¹ with numerical rank checks against (9, 3, 6).
pub fn cocycle_basis(rep: &Representation) -> Result<CocycleBasis, HolonomyError> {
    let c = relator_constraint(rep);
    // the row space of the constraint has rank 3; Z¹ is its complement
    let ct = DMatrix::from_fn(12, 3, |i, j| c[(j, i)]);
    let svd = ct.svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9 * smax).count();
    if rank != 3 {
        return Err(HolonomyError::Rank { what: "Z1", got: 12 - rank, expected: 9 });
    }
    let rows = svd.u.expect("requested");
    let comp = DMatrix::<f64>::identity(12, 12) - &rows * rows.transpose();
    let eig = SymmetricEigen::new(comp);
    let null: Vec<usize> = (0..12).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if null.len() != 9 {
        return Err(HolonomyError::Rank { what: "Z1", got: null.len(), expected: 9 });
    }
    let z = DMatrix::from_fn(12, 9, |i, j| eig.eigenvectors[(i, null[j])]);

    let bcols = DMatrix::from_fn(12, 3, |i, j| coboundary_cocycle(MinkVec::basis(j), rep).to_flat()[i]);
    let svd = bcols.clone().svd(true, false);
    let rank_b = svd.singular_values.iter().filter(|&&s| s > 1e-9 * svd.singular_values.max()).count();
    if rank_b != 3 {
        return Err(HolonomyError::Rank { what: "B1", got: rank_b, expected: 3 });
    }
    let b = svd.u.expect("requested").columns(0, 3).into_owned();

    let proj = DMatrix::<f64>::identity(12, 12) - &b * b.transpose();
    let pz = &proj * &z;
    let svd = pz.svd(true, false);
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-8 * smax).collect();
    if keep.len() != 6 {
        return Err(HolonomyError::Rank { what: "H1", got: keep.len(), expected: 6 });
    }
    let u = svd.u.expect("requested");
    let mut h = DMatrix::from_fn(12, 6, |i, j| u[(i, keep[j])]);
    // fix the sign of each basis vector by its largest component
    for j in 0..6 {
        let col = h.column(j);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            h.column_mut(j).neg_mut();
        }
    }
    Ok(CocycleBasis { z1: columns_to_cocycles(&z), b1: columns_to_cocycles(&b), h1: columns_to_cocycles(&h) })
}

/// Outcome of [`peripheral_reduction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Peripheral {
    /// `t = R t0 − t0` with `t0 ⟂ p`.
    Trivial { t0: MinkVec },
    /// The axis component `<t,p>/<p,p>` is above tolerance.
    Defect { axis_component: f64 },
}

/// Solves `(R − Id) t0 = t` for the elliptic rotation `R` of angle `theta`
/// about `p`, or reports the axis component of `t`.
pub fn peripheral_reduction(t: MinkVec, p: MinkVec, theta: f64, tol: f64) -> Result<Peripheral, HolonomyError> {
    let half = (0.5 * theta).sin();
    if half.abs() < 1e-12 {
        return Err(HolonomyError::DegenerateRotation);
    }
    let axis = mink_dot(t, p) / mink_dot(p, p);
    if axis.abs() > tol {
        return Ok(Peripheral::Defect { axis_component: axis });
    }
    let b = boost_to(p);
    let tl = b.inverse().apply(t);
    let (s, c) = theta.sin_cos();
    // [[c−1, −s], [s, c−1]] (x, y) = (tl.x, tl.y)
    let det = (c - 1.0) * (c - 1.0) + s * s;
    let x = ((c - 1.0) * tl.x + s * tl.y) / det;
    let y = (-s * tl.x + (c - 1.0) * tl.y) / det;
    Ok(Peripheral::Trivial { t0: b.apply(MinkVec::new(x, y, 0.0)) })
}

/// Finite-difference derivative of a family of representations, as an
/// so(2,1)-valued cocycle identified with vectors through Λ.
#[derive(Debug, Clone)]
pub struct HolonomyVariation {
    pub tau: TransCocycle,
    /// Max over generator pairs of `|τ_{αβ} − τ_α − Ad ρ(α) τ_β|`.
    pub cocycle_residual: f64,
}

/// Central difference of `ρ_s(α) ρ_0(α)⁻¹` at step `h`.
pub fn holonomy_variation<F>(family: F, h: f64) -> Result<HolonomyVariation, HolonomyError>
where
    F: Fn(f64) -> Result<Representation, HolonomyError>,
{
    let r0 = family(0.0)?;
    let rp = family(h)?;
    let rm = family(-h)?;
    for r in [&r0, &rp, &rm] {
        for g in &r.generators {
            LinIsom::new(*g.matrix())?;
        }
    }
    let diff = |w: &Word| -> Result<MinkVec, HolonomyError> {
        let inv0 = r0.element(w).inverse();
        let d = (rp.element(w).compose(&inv0).matrix() - rm.element(w).compose(&inv0).matrix()) / (2.0 * h);
        let e = crate::mink::eta();
        let skew = (d - e * d.transpose() * e) * 0.5;
        Ok(lambda_inverse(&skew)?)
    };
    let mut vals = [MinkVec::zero(); 4];
    for (i, v) in vals.iter_mut().enumerate() {
        *v = diff(&Word::generator(i))?;
    }
    let mut residual: f64 = 0.0;
    for a in Letter::all() {
        for b in Letter::all() {
            let wab = Word::new([a, b]);
            if wab.is_empty() {
                continue;
            }
            let ta = diff(&Word::letter(a))?;
            let tb = diff(&Word::letter(b))?;
            let tab = diff(&wab)?;
            let r = tab - ta - r0.letter(a).apply(tb);
            residual = residual.max(r.max_abs());
        }
    }
    Ok(HolonomyVariation { tau: TransCocycle::new(vals), cocycle_residual: residual })
}

/// A deformation of the representation: `a2, b2` are conjugated by the
/// hyperbolic translation of length `s` along the axis of `ρ([a1,b1])`.
pub fn twist_family(rep: &Representation, s: f64) -> Result<Representation, HolonomyError> {
    let c = rep.element(&Word::new([
        Letter::new(0, false),
        Letter::new(1, false),
        Letter::new(0, true),
        Letter::new(1, true),
    ]));
    let axis = fixed_vector(c.matrix());
    let e = LinIsom::from_matrix_unchecked(exp_lambda(axis * s));
    let ei = e.inverse();
    let g = rep.generators;
    Representation::new([g[0], g[1], e.compose(&g[2]).compose(&ei), e.compose(&g[3]).compose(&ei)])
}

/// Unit spacelike fixed vector of a hyperbolic isometry.
fn fixed_vector(m: &Matrix3<f64>) -> MinkVec {
    let svd = (m - Matrix3::identity()).svd(false, true);
    let vt = svd.v_t.expect("requested");
    let i = svd.singular_values.imin();
    let v = MinkVec::new(vt[(i, 0)], vt[(i, 1)], vt[(i, 2)]);
    v / v.norm2().abs().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn group() -> SurfaceGroup {
        SurfaceGroup::build_genus2_octagon().unwrap()
    }

    #[test]
    fn octagon_invariants() {
        let g = group();
        assert!(g.relator_defect() <= RELATOR_TOL);
        for a in g.vertex_angles() {
            assert!((a - std::f64::consts::FRAC_PI_4).abs() < 1e-8);
        }
        assert_eq!(g.side_pairings().len(), 8);
        let area = g.area(FanResolution::default()).unwrap();
        assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-4, "{area}");
        assert!((g.center() - MinkVec::e3()).max_abs() < 1e-12);
    }

    #[test]
    fn side_pairing_table() {
        // A_j maps side j to side j+2; a1 = A0⁻¹ so a1 maps side 2 to side 0, etc.
        let g = group();
        let map: Vec<(usize, bool, usize, usize)> =
            g.side_pairings().iter().map(|p| (p.letter.gen, p.letter.inv, p.from, p.to)).collect();
        assert!(map.contains(&(0, true, 0, 2)));
        assert!(map.contains(&(0, false, 2, 0)));
        assert!(map.contains(&(1, false, 1, 3)));
        assert!(map.contains(&(3, false, 5, 7)));
    }

    #[test]
    fn vertex_elements_reach_all_vertices() {
        let g = group();
        let w = g.vertex_elements().unwrap();
        for (k, wk) in w.iter().enumerate() {
            let img = g.element(wk).apply(g.octagon_vertices[0]);
            assert!((img - g.octagon_vertices[k]).max_abs() < 1e-9);
        }
    }

    #[test]
    fn word_reduction() {
        let a = Letter::new(0, false);
        let b = Letter::new(1, false);
        assert!(Word::new([a, b, b.inverse(), a.inverse()]).is_empty());
        assert_eq!(Word::new([a, a]).len(), 2);
        assert_eq!(Word::relator().len(), 8);
        assert_eq!(Word::relator().concat(&Word::relator().inverse()), Word::identity());
    }

    #[test]
    fn cocycle_extend_examples() {
        let g = group();
        let t = TransCocycle::new([
            MinkVec::new(0.1, 0.2, 0.3),
            MinkVec::new(-0.4, 0.5, 0.1),
            MinkVec::new(0.0, 1.0, -0.2),
            MinkVec::new(0.3, 0.3, 0.3),
        ]);
        assert_eq!(cocycle_extend(&t, &Word::identity(), &g.rep), MinkVec::zero());
        for i in 0..4 {
            let inv = cocycle_extend(&t, &Word::letter(Letter::new(i, true)), &g.rep);
            let expect = -g.rep.generators[i].inverse().apply(t.values[i]);
            assert!((inv - expect).max_abs() < 1e-14);
        }
    }

    #[test]
    fn dimensions_and_coboundaries() {
        let g = group();
        let basis = cocycle_basis(&g.rep).unwrap();
        assert_eq!(basis.dims(), (9, 3, 6));
        assert!(basis.orthogonality_residual() <= 1e-10);
        for b in &basis.b1 {
            assert!(b.relator_residual(&g.rep) <= 1e-10);
        }
        for z in &basis.z1 {
            assert!(z.relator_residual(&g.rep) <= 1e-10);
        }
        assert_eq!(coboundary_cocycle(MinkVec::zero(), &g.rep), TransCocycle::zero());
    }

    #[test]
    fn coboundary_map_is_injective() {
        // H⁰ = 0: the 12×3 matrix of t0 ↦ coboundary has full rank
        let g = group();
        let m = DMatrix::from_fn(12, 3, |i, j| coboundary_cocycle(MinkVec::basis(j), &g.rep).to_flat()[i]);
        let s = m.svd(false, false).singular_values;
        assert!(s.min() > 1e-3);
    }

    #[test]
    fn peripheral_examples() {
        let half_pi = std::f64::consts::FRAC_PI_2;
        match peripheral_reduction(MinkVec::e1(), MinkVec::e3(), half_pi, 1e-10).unwrap() {
            Peripheral::Trivial { t0 } => assert!((t0 - MinkVec::new(-0.5, -0.5, 0.0)).max_abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        match peripheral_reduction(MinkVec::e3(), MinkVec::e3(), half_pi, 1e-10).unwrap() {
            Peripheral::Defect { axis_component } => assert!((axis_component - 1.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            peripheral_reduction(MinkVec::zero(), MinkVec::e3(), half_pi, 1e-10).unwrap(),
            Peripheral::Trivial { t0: MinkVec::zero() }
        );
        assert!(peripheral_reduction(MinkVec::e1(), MinkVec::e3(), std::f64::consts::TAU, 1e-10).is_err());
    }

    #[test]
    fn constant_family_has_zero_variation() {
        let g = group();
        let v = holonomy_variation(|_| Ok(g.rep.clone()), 1e-3).unwrap();
        assert!(v.tau.max_abs() <= 1e-12);
    }

    #[test]
    fn conjugated_family_is_a_coboundary() {
        let g = group();
        let basis = cocycle_basis(&g.rep).unwrap();
        let c = MinkVec::new(0.3, -0.2, 0.5);
        let fam = |s: f64| Ok(g.rep.conjugate(&LinIsom::from_matrix_unchecked(exp_lambda(c * (s + s * s)))));
        let h = 1e-3;
        let v = holonomy_variation(fam, h).unwrap();
        let expect = coboundary_cocycle(c, &g.rep).scale(-1.0);
        assert!(v.tau.add(&expect.scale(-1.0)).max_abs() < 1e-4);
        assert!(basis.h1_norm(&v.tau) < 1e-4);
    }

    #[test]
    fn twist_residual_is_second_order() {
        let g = group();
        let r1 = holonomy_variation(|s| twist_family(&g.rep, s + 0.3 * s * s), 2e-2).unwrap();
        let r2 = holonomy_variation(|s| twist_family(&g.rep, s + 0.3 * s * s), 1e-2).unwrap();
        let ratio = r1.cocycle_residual / r2.cocycle_residual;
        assert!((3.3..=4.7).contains(&ratio), "ratio {ratio}");
        let basis = cocycle_basis(&g.rep).unwrap();
        assert!(basis.h1_norm(&r2.tau) > 1e-2);
    }

    #[test]
    fn json_round_trip() {
        let g = group();
        let back = SurfaceGroup::from_json(&g.to_json()).unwrap();
        assert_eq!(back.rep, g.rep);
        assert!(SurfaceGroup::from_json("{\"generators\": []}").is_err());
        let t = TransCocycle::new([MinkVec::new(0.1, 1e-17, 3.0); 4]);
        assert_eq!(TransCocycle::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn orbit_enumeration() {
        let g = group();
        let el = g.orbit_elements(4.0);
        assert_eq!(el[0].word, Word::identity());
        for e in &el {
            assert!((g.element(&e.word).matrix() - e.matrix.matrix()).abs().max() < 1e-8 * e.point.z.powi(2));
        }
        // the eight neighbours across the sides sit at distance 2·inradius
        let two_in = (2.0 * (1.0 + std::f64::consts::SQRT_2).powi(2) - 1.0).acosh();
        let n = el.iter().filter(|e| (distance(MinkVec::e3(), e.point) - two_in).abs() < 1e-9).count();
        assert_eq!(n, 8);
        // tiles with centre in the disc of radius R fill at least the disc of
        // radius R − circ and at most R + circ; each tile has area 4π
        let circ = distance(g.center(), g.octagon_vertices[0]);
        let r = 7.0;
        let count = g.orbit_elements(r).len() as f64;
        assert!(count >= ((r - circ).cosh() - 1.0) / 2.0 && count <= ((r + circ).cosh() - 1.0) / 2.0, "{count}");
    }

    fn cocycle_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0..1.0f64, 9)
    }

    proptest! {
        #[test]
        fn z1_closed_under_combinations(a in cocycle_strategy(), b in cocycle_strategy(), s in -2.0..2.0f64) {
            let g = group();
            let basis = cocycle_basis(&g.rep).unwrap();
            let comb = |c: &[f64]| basis.z1.iter().zip(c).fold(TransCocycle::zero(), |acc, (z, &x)| acc.add(&z.scale(x)));
            let t = comb(&a).add(&comb(&b).scale(s));
            prop_assert!(t.relator_residual(&g.rep) <= 1e-10);
        }

        #[test]
        fn relator_insertion_preserves_value(c in cocycle_strategy(), letters in proptest::collection::vec((0usize..4, any::<bool>()), 0..8), pos in 0usize..8) {
            let g = group();
            let basis = cocycle_basis(&g.rep).unwrap();
            let t = basis.z1.iter().zip(&c).fold(TransCocycle::zero(), |acc, (z, &x)| acc.add(&z.scale(x)));
            let w = Word::new(letters.into_iter().map(|(i, inv)| Letter::new(i, inv)));
            let w2 = w.insert(pos, &Word::relator());
            let a = cocycle_extend(&t, &w, &g.rep);
            let b = cocycle_extend(&t, &w2, &g.rep);
            prop_assert!((a - b).max_abs() <= 1e-9 * g.element(&w).matrix().abs().max().max(1.0).powi(2));
        }

        #[test]
        fn coboundaries_have_no_h1_part(x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64) {
            let g = group();
            let basis = cocycle_basis(&g.rep).unwrap();
            let t = coboundary_cocycle(MinkVec::new(x, y, z), &g.rep);
            prop_assert!(t.relator_residual(&g.rep) <= 1e-10);
            prop_assert!(basis.h1_norm(&t) <= 1e-10);
        }

        #[test]
        fn peripheral_round_trip(x in -2.0..2.0f64, y in -2.0..2.0f64, theta in 0.1..6.1f64, r in 0.0..1.5f64, a in 0.0..6.3f64) {
            let p = crate::mink::polar_point(r, a);
            let rot = crate::mink::elliptic_rotation(p, theta);
            let b = boost_to(p);
            let t = b.apply(MinkVec::new(x, y, 0.0));
            match peripheral_reduction(t, p, theta, 1e-10).unwrap() {
                Peripheral::Trivial { t0 } => {
                    let back = rot.apply(t0) - t0;
                    prop_assert!((back - t).max_abs() <= 1e-10 * p.z.powi(3) * (1.0 + t.max_abs()));
                }
                Peripheral::Defect { .. } => prop_assert!(false, "unexpected defect"),
            }
        }

        #[test]
        fn extension_is_conjugation_equivariant(c in cocycle_strategy(), r in 0.0..1.0f64, a in 0.0..6.3f64) {
            let g = group();
            let basis = cocycle_basis(&g.rep).unwrap();
            let t = basis.z1.iter().zip(&c).fold(TransCocycle::zero(), |acc, (z, &x)| acc.add(&z.scale(x)));
            let m = boost_to(crate::mink::polar_point(r, a));
            let rep2 = g.rep.conjugate(&m);
            let t2 = TransCocycle::new(t.values.map(|v| m.apply(v)));
            let w = Word::relator().insert(3, &Word::generator(2));
            let lhs = cocycle_extend(&t2, &w, &rep2);
            let rhs = m.apply(cocycle_extend(&t, &w, &g.rep));
            let scale = g.element(&w).matrix().abs().max() * (1.0 + rhs.max_abs());
            prop_assert!((lhs - rhs).max_abs() <= 1e-12 * scale, "{} vs scale {}", (lhs - rhs).max_abs(), scale);
        }
    }
}
