//! Truncated multivariate Taylor polynomials with complex coefficients.

use crate::lattice::MultiIndex;
use crate::C64;
use std::collections::HashMap;
use std::sync::Arc;

/// Monomial layout shared by all jets of one (dimension, degree).
#[derive(Debug)]
pub struct JetSpace {
    pub n: usize,
    pub degree: u32,
    monomials: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    /// (i, j, k) with monomial_i · monomial_j = monomial_k within the degree.
    products: Vec<(usize, usize, usize)>,
}

impl JetSpace {
    pub fn new(n: usize, degree: u32) -> Arc<Self> {
        let monomials: Vec<Vec<u32>> = MultiIndex::up_to_order(n, degree)
            .into_iter()
            .map(|m| m.entries().to_vec())
            .collect();
        let index: HashMap<Vec<u32>, usize> = monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                let s: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(&k) = index.get(&s) {
                    products.push((i, j, k));
                }
            }
        }
        Arc::new(JetSpace { n, degree, monomials, index, products })
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

/// Σ_β c_β h^β truncated at total degree D.
#[derive(Clone, Debug)]
pub struct Jet {
    space: Arc<JetSpace>,
    pub coeffs: Vec<C64>,
}

impl Jet {
    pub fn zero(space: &Arc<JetSpace>) -> Self {
        Jet { space: space.clone(), coeffs: vec![C64::new(0.0, 0.0); space.len()] }
    }

    pub fn constant(space: &Arc<JetSpace>, c: C64) -> Self {
        let mut j = Self::zero(space);
        j.coeffs[0] = c;
        j
    }

    /// Jet of a function from its derivatives: c_β = ∂^β f / β!.
    pub fn from_derivatives(space: &Arc<JetSpace>, d: impl Fn(&[u32]) -> C64) -> Self {
        let coeffs = space
            .monomials
            .iter()
            .map(|m| {
                let fact: f64 = m.iter().map(|&k| (1..=k).map(f64::from).product::<f64>()).product();
                d(m) / fact
            })
            .collect();
        Jet { space: space.clone(), coeffs }
    }

    pub fn coefficient(&self, alpha: &[u32]) -> C64 {
        self.space.position(alpha).map_or(C64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    /// ∂^α f at the expansion point.
    pub fn derivative(&self, alpha: &[u32]) -> C64 {
        let fact: f64 = alpha.iter().map(|&k| (1..=k).map(f64::from).product::<f64>()).product();
        self.coefficient(alpha) * fact
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let mut out = Jet::zero(&self.space);
        for &(i, j, k) in &self.space.products {
            out.coeffs[k] += self.coeffs[i] * other.coeffs[j];
        }
        out
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet { space: self.space.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Jet) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    /// exp of the jet: e^{c₀} Σ_k g^k/k! with g the non-constant part.
    pub fn exp(&self) -> Jet {
        let c0 = self.coeffs[0];
        let mut g = self.clone();
        g.coeffs[0] = C64::new(0.0, 0.0);
        let mut term = Jet::constant(&self.space, C64::new(1.0, 0.0));
        let mut acc = term.clone();
        for k in 1..=self.space.degree {
            term = term.mul(&g).scale(C64::new(1.0 / k as f64, 0.0));
            acc = acc.add(&term);
        }
        acc.scale(c0.exp())
    }
}

/// Signed Stirling numbers of the first kind: t^{(k)} = Σ_m s(k,m) t^m, rows 0..=k_max.
pub fn stirling_first(k_max: usize) -> Vec<Vec<i64>> {
    let mut rows = vec![vec![1i64]];
    for k in 1..=k_max {
        let prev = &rows[k - 1];
        let mut row = vec![0i64; k + 1];
        for m in 1..=k {
            let a = if m - 1 < prev.len() { prev[m - 1] } else { 0 };
            let b = if m < prev.len() { prev[m] } else { 0 };
            row[m] = a - (k as i64 - 1) * b;
        }
        rows.push(row);
    }
    rows
}
