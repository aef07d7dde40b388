//! Reproducible random test fields, driven by a ChaCha stream from a seed.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fields::{frame_operator, hess_minus_id_at, tangent_frame, ConstantPotential, KleinPolynomial, SumPotential};
use crate::mink::{klein_lift, MinkVec};
use crate::tensors::QuadDiffLocal;

/// Seeded generator of vectors, potentials and quadratic differentials.
#[derive(Debug, Clone)]
pub struct FieldRng {
    rng: ChaCha8Rng,
    seed: u64,
}

/// `b = λ Id + Hess p − p Id` with eigenvalues of `b` in `[λ/2, 3λ/2]` on
/// sampled points of the Klein disc of radius `radius` about `e3`.
pub type PositivePotential = SumPotential<KleinPolynomial, ConstantPotential>;

impl FieldRng {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// Components uniform in `[−scale, scale)`.
    pub fn vector(&mut self, scale: f64) -> MinkVec {
        MinkVec::new(self.uniform(-scale, scale), self.uniform(-scale, scale), self.uniform(-scale, scale))
    }

    pub fn coefficients(&mut self, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(-scale, scale)).collect()
    }

    /// All monomials of degree `2..=max_degree` in the Klein coordinates
    /// with random coefficients; degrees 0 and 1 would only add linear
    /// potentials, which `Hess − Id` annihilates.
    pub fn klein_polynomial(&mut self, max_degree: u32, scale: f64) -> KleinPolynomial {
        let mut terms = Vec::new();
        for d in 2..=max_degree {
            for i in 0..=d {
                terms.push((i, d - i, self.uniform(-scale, scale)));
            }
        }
        KleinPolynomial { terms }
    }

    /// `q = Σ c_k z^k dz²`, `0 ≤ k ≤ max_order`.
    pub fn quad_diff(&mut self, max_order: i32, scale: f64) -> QuadDiffLocal {
        QuadDiffLocal::new((0..=max_order).map(|k| (k, Complex64::new(self.uniform(-scale, scale), self.uniform(-scale, scale)))).collect())
    }

    /// A potential whose Codazzi tensor is uniformly positive on the Klein
    /// disc of radius `radius`.
    pub fn positive_potential(&mut self, max_degree: u32, lambda: f64, radius: f64) -> PositivePotential {
        let mut p = self.klein_polynomial(max_degree, 1.0);
        let mut worst: f64 = 0.0;
        for i in 0..=8 {
            let rho = radius * i as f64 / 8.0;
            for j in 0..16 {
                let th = j as f64 * std::f64::consts::TAU / 16.0;
                let x = klein_lift([rho * th.cos(), rho * th.sin()], MinkVec::e3()).expect("inside the disc");
                let m = frame_operator(&tangent_frame(x), &hess_minus_id_at(&p, x));
                let e = SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues;
                worst = worst.max(e[0].abs()).max(e[1].abs());
            }
        }
        if worst > 0.0 {
            let s = 0.5 * lambda / worst;
            for t in &mut p.terms {
                t.2 *= s;
            }
        }
        // H(−λ) = λ Id
        SumPotential(p, ConstantPotential(-lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{tangent_identity, Potential};

    #[test]
    fn same_seed_same_stream() {
        let mut a = FieldRng::new(7);
        let mut b = FieldRng::new(7);
        assert_eq!(a.vector(1.0), b.vector(1.0));
        assert_eq!(a.klein_polynomial(4, 1.0), b.klein_polynomial(4, 1.0));
        assert_eq!(a.quad_diff(3, 1.0), b.quad_diff(3, 1.0));
        let mut c = FieldRng::new(8);
        assert_ne!(FieldRng::new(7).vector(1.0), c.vector(1.0));
        assert_eq!(a.seed(), 7);
    }

    #[test]
    fn positive_potential_is_positive() {
        let mut r = FieldRng::new(3);
        for _ in 0..5 {
            let u = r.positive_potential(4, 1.0, 0.8);
            for k in [[0.0, 0.0], [0.5, -0.3], [-0.7, 0.2]] {
                let x = klein_lift(k, MinkVec::e3()).unwrap();
                let m = frame_operator(&tangent_frame(x), &hess_minus_id_at(&u, x));
                let e = SymmetricEigen::new(m).eigenvalues;
                assert!(e.min() >= 0.45 && e.max() <= 1.55, "{e}");
            }
            let x = klein_lift([0.1, 0.2], MinkVec::e3()).unwrap();
            let id = hess_minus_id_at(&ConstantPotential(-1.0), x);
            assert!((id - tangent_identity(x)).abs().max() < 1e-12);
            assert!(u.value(x).is_finite());
        }
    }
}
