//! Multi-indices, lattice windows and the difference calculus on Z^n.

use crate::error::{Error, Result};
use crate::C64;
use std::sync::Arc;

/// Largest total order |α| accepted for multi-indices.
pub const MAX_ORDER: u32 = 12;

/// Exponent / difference vector α ∈ N₀^n.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        let order: u32 = entries.iter().sum();
        if order > MAX_ORDER {
            return Err(Error::Overflow(format!(
                "|alpha| = {order} exceeds the cap {MAX_ORDER}"
            )));
        }
        Ok(MultiIndex(entries))
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, j: usize) -> Self {
        let mut e = vec![0; n];
        e[j] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// |α| = Σ α_j.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn max_entry(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// α! with overflow detection.
    pub fn factorial(&self) -> Result<i64> {
        let mut acc: i64 = 1;
        for &a in &self.0 {
            for k in 2..=a as i64 {
                acc = acc
                    .checked_mul(k)
                    .ok_or_else(|| Error::Overflow(format!("{:?}!", self.0)))?;
            }
        }
        Ok(acc)
    }

    /// Componentwise β ≤ α.
    pub fn dominates(&self, beta: &MultiIndex) -> bool {
        self.0.len() == beta.0.len() && self.0.iter().zip(&beta.0).all(|(a, b)| b <= a)
    }

    /// α − β, defined when β ≤ α.
    pub fn minus(&self, beta: &MultiIndex) -> Option<MultiIndex> {
        if !self.dominates(beta) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&beta.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn plus(&self, beta: &MultiIndex) -> Result<MultiIndex> {
        MultiIndex::new(self.0.iter().zip(&beta.0).map(|(a, b)| a + b).collect())
    }

    /// Multinomial-style binomial C(α,β) = Π C(α_j, β_j).
    pub fn binomial(&self, beta: &MultiIndex) -> Result<i64> {
        if !self.dominates(beta) {
            return Ok(0);
        }
        let mut acc: i64 = 1;
        for (&a, &b) in self.0.iter().zip(&beta.0) {
            acc = acc
                .checked_mul(binomial(a as u64, b as u64)?)
                .ok_or_else(|| Error::Overflow("binomial".into()))?;
        }
        Ok(acc)
    }

    /// All β with β ≤ α, in lexicographic order.
    pub fn below(&self) -> Vec<MultiIndex> {
        let bounds: Vec<u32> = self.0.clone();
        let mut out = Vec::new();
        let mut cur = vec![0u32; bounds.len()];
        loop {
            out.push(MultiIndex(cur.clone()));
            let mut j = bounds.len();
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if cur[j] < bounds[j] {
                    cur[j] += 1;
                    for c in cur.iter_mut().skip(j + 1) {
                        *c = 0;
                    }
                    break;
                }
            }
        }
    }

    /// All multi-indices of dimension n with |α| = order.
    pub fn of_order(n: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fn rec(j: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if j + 1 == cur.len() {
                cur[j] = left;
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for a in (0..=left).rev() {
                cur[j] = a;
                rec(j + 1, left - a, cur, out);
            }
        }
        if n == 0 {
            return out;
        }
        rec(0, order, &mut cur, &mut out);
        out
    }

    /// All multi-indices with |α| ≤ order, grouped by increasing order.
    pub fn up_to_order(n: usize, order: u32) -> Vec<MultiIndex> {
        (0..=order).flat_map(|k| MultiIndex::of_order(n, k)).collect()
    }
}

fn binomial(n: u64, k: u64) -> Result<i64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    i64::try_from(acc).map_err(|_| Error::Overflow(format!("C({n},{k})")))
}

/// ⟨ξ⟩ = (1 + |ξ|²)^{1/2}.
pub fn bracket(xi: &[f64]) -> f64 {
    (1.0 + xi.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn bracket_int(xi: &[i64]) -> f64 {
    (1.0 + xi.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt()
}

/// Euclidean length of a lattice point.
pub fn norm_int(xi: &[i64]) -> f64 {
    xi.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

/// θ^{(α)} = Π_j θ_j(θ_j − 1)…(θ_j − α_j + 1).
pub fn falling_factorial(theta: &[i64], alpha: &MultiIndex) -> Result<i64> {
    if theta.len() != alpha.dim() {
        return Err(Error::Configuration(format!(
            "dimension mismatch: point has {} entries, multi-index {}",
            theta.len(),
            alpha.dim()
        )));
    }
    let mut acc: i64 = 1;
    for (&t, &a) in theta.iter().zip(alpha.entries()) {
        for k in 0..a as i64 {
            acc = acc
                .checked_mul(t - k)
                .ok_or_else(|| Error::Overflow(format!("falling factorial of {theta:?}")))?;
        }
    }
    Ok(acc)
}

/// Falling factorial of a real argument, used for Fourier multipliers.
pub fn falling_factorial_f64(t: f64, a: u32) -> f64 {
    (0..a).fold(1.0, |acc, k| acc * (t - k as f64))
}

/// Finite lattice window {ξ : |ξ_j| ≤ K + margin}; the core is |ξ_j| ≤ K.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FrequencyBox {
    pub n: usize,
    pub k: usize,
    pub margin: usize,
}

impl FrequencyBox {
    pub fn new(n: usize, k: usize, margin: usize) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::Configuration(format!("dimension n = {n} not in 1..=3")));
        }
        if k < 1 {
            return Err(Error::Configuration("K must be at least 1".into()));
        }
        let side = 2 * (k + margin) + 1;
        side.checked_pow(n as u32)
            .filter(|&t| t <= 1 << 26)
            .ok_or_else(|| Error::Configuration(format!("box ({side})^{n} is too large")))?;
        Ok(FrequencyBox { n, k, margin })
    }

    /// Per-axis extent K + margin.
    pub fn extent(&self) -> usize {
        self.k + self.margin
    }

    pub fn side(&self) -> usize {
        2 * self.extent() + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, xi: &[i64]) -> bool {
        let e = self.extent() as i64;
        xi.len() == self.n && xi.iter().all(|v| v.abs() <= e)
    }

    pub fn in_core(&self, xi: &[i64]) -> bool {
        let k = self.k as i64;
        xi.len() == self.n && xi.iter().all(|v| v.abs() <= k)
    }

    /// Lexicographic index with ξ_1 as the slowest axis.
    pub fn index(&self, xi: &[i64]) -> Option<usize> {
        if !self.contains(xi) {
            return None;
        }
        let e = self.extent() as i64;
        let s = self.side();
        Some(xi.iter().fold(0usize, |acc, &v| acc * s + (v + e) as usize))
    }

    pub fn point(&self, mut idx: usize) -> Vec<i64> {
        let e = self.extent() as i64;
        let s = self.side();
        let mut out = vec![0i64; self.n];
        for j in (0..self.n).rev() {
            out[j] = (idx % s) as i64 - e;
            idx /= s;
        }
        out
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn with_margin(&self, margin: usize) -> FrequencyBox {
        FrequencyBox { margin, ..*self }
    }

    /// Same window with the margin reduced by `by`; an error if the margin is too small.
    pub fn shrink(&self, by: usize) -> Result<FrequencyBox> {
        if by > self.margin {
            return Err(Error::OutOfRange(format!(
                "difference order {by} exceeds box margin {}",
                self.margin
            )));
        }
        Ok(self.with_margin(self.margin - by))
    }

    /// Smallest power of two ≥ 3(K + margin) + 1.
    pub fn default_grid(&self) -> usize {
        (3 * self.extent() + 1).next_power_of_two()
    }
}

/// Anything that can be evaluated at lattice points.
pub trait LatticeEval: Send + Sync {
    fn dim(&self) -> usize;
    fn contains(&self, xi: &[i64]) -> bool;
    /// Value at a point known to be valid.
    fn value(&self, xi: &[i64]) -> C64;

    fn eval(&self, xi: &[i64]) -> Result<C64> {
        if !self.contains(xi) {
            return Err(Error::OutOfRange(format!("lattice point {xi:?} outside the valid box")));
        }
        Ok(self.value(xi))
    }
}

/// Tabulated lattice function on a frequency box.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeFunction {
    pub bx: FrequencyBox,
    pub values: Vec<C64>,
}

impl LatticeFunction {
    pub fn zeros(bx: FrequencyBox) -> Self {
        LatticeFunction { bx, values: vec![C64::new(0.0, 0.0); bx.len()] }
    }

    pub fn from_fn(bx: FrequencyBox, mut f: impl FnMut(&[i64]) -> C64) -> Self {
        let values = bx.points().map(|p| f(&p)).collect();
        LatticeFunction { bx, values }
    }

    pub fn get(&self, xi: &[i64]) -> Option<C64> {
        self.bx.index(xi).map(|i| self.values[i])
    }

    pub fn set(&mut self, xi: &[i64], v: C64) -> Result<()> {
        let i = self
            .bx
            .index(xi)
            .ok_or_else(|| Error::OutOfRange(format!("lattice point {xi:?} outside box")))?;
        self.values[i] = v;
        Ok(())
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }
}

impl LatticeEval for LatticeFunction {
    fn dim(&self) -> usize {
        self.bx.n
    }
    fn contains(&self, xi: &[i64]) -> bool {
        self.bx.contains(xi)
    }
    fn value(&self, xi: &[i64]) -> C64 {
        self.values[self.bx.index(xi).expect("point checked by caller")]
    }
}

/// Closure-backed lattice function, optionally restricted to a box.
#[derive(Clone)]
pub struct FnLattice {
    n: usize,
    bounds: Option<FrequencyBox>,
    f: Arc<dyn Fn(&[i64]) -> C64 + Send + Sync>,
}

impl FnLattice {
    pub fn new(n: usize, f: impl Fn(&[i64]) -> C64 + Send + Sync + 'static) -> Self {
        FnLattice { n, bounds: None, f: Arc::new(f) }
    }

    pub fn bounded(bx: FrequencyBox, f: impl Fn(&[i64]) -> C64 + Send + Sync + 'static) -> Self {
        FnLattice { n: bx.n, bounds: Some(bx), f: Arc::new(f) }
    }

    pub fn tabulate(&self, bx: FrequencyBox) -> LatticeFunction {
        LatticeFunction::from_fn(bx, |p| (self.f)(p))
    }
}

impl LatticeEval for FnLattice {
    fn dim(&self) -> usize {
        self.n
    }
    fn contains(&self, xi: &[i64]) -> bool {
        xi.len() == self.n && self.bounds.map_or(true, |b| b.contains(xi))
    }
    fn value(&self, xi: &[i64]) -> C64 {
        (self.f)(xi)
    }
}

fn shifted(xi: &[i64], beta: &MultiIndex, sign: i64) -> Vec<i64> {
    xi.iter()
        .zip(beta.entries())
        .map(|(&x, &b)| x + sign * b as i64)
        .collect()
}

fn check_dims<P: LatticeEval + ?Sized>(p: &P, alpha: &MultiIndex, xi: &[i64]) -> Result<()> {
    if p.dim() != alpha.dim() || xi.len() != alpha.dim() {
        return Err(Error::Configuration(format!(
            "dimension mismatch: function {}, multi-index {}, point {}",
            p.dim(),
            alpha.dim(),
            xi.len()
        )));
    }
    Ok(())
}

/// △^α p(ξ) = Σ_{β≤α} (−1)^{|α−β|} C(α,β) p(ξ+β).
pub fn forward_difference<P: LatticeEval + ?Sized>(
    p: &P,
    alpha: &MultiIndex,
    xi: &[i64],
) -> Result<C64> {
    check_dims(p, alpha, xi)?;
    let far = shifted(xi, alpha, 1);
    if !p.contains(xi) || !p.contains(&far) {
        return Err(Error::OutOfRange(format!(
            "forward difference {:?} at {xi:?} leaves the valid box",
            alpha.entries()
        )));
    }
    let mut acc = C64::new(0.0, 0.0);
    for beta in alpha.below() {
        let sign = if (alpha.order() - beta.order()) % 2 == 0 { 1.0 } else { -1.0 };
        let c = alpha.binomial(&beta)? as f64;
        acc += p.value(&shifted(xi, &beta, 1)) * (sign * c);
    }
    Ok(acc)
}

/// Iterated backward difference △̄^α p(ξ) = Σ_{β≤α} (−1)^{|β|} C(α,β) p(ξ−β).
pub fn backward_difference<P: LatticeEval + ?Sized>(
    p: &P,
    alpha: &MultiIndex,
    xi: &[i64],
) -> Result<C64> {
    check_dims(p, alpha, xi)?;
    let far = shifted(xi, alpha, -1);
    if !p.contains(xi) || !p.contains(&far) {
        return Err(Error::OutOfRange(format!(
            "backward difference {:?} at {xi:?} leaves the valid box",
            alpha.entries()
        )));
    }
    let mut acc = C64::new(0.0, 0.0);
    for beta in alpha.below() {
        let sign = if beta.order() % 2 == 0 { 1.0 } else { -1.0 };
        let c = alpha.binomial(&beta)? as f64;
        acc += p.value(&shifted(xi, &beta, -1)) * (sign * c);
    }
    Ok(acc)
}

/// Points ξ + ν with |ν_j| ≤ |θ_j|.
fn neighbourhood(xi: &[i64], theta: &[i64]) -> Vec<Vec<i64>> {
    let radius = MultiIndex(theta.iter().map(|t| 2 * t.unsigned_abs() as u32).collect());
    radius
        .below()
        .into_iter()
        .map(|nu| {
            xi.iter()
                .zip(nu.entries())
                .zip(theta)
                .map(|((&x, &v), &t)| x + v as i64 - t.abs())
                .collect()
        })
        .collect()
}

fn check_taylor_region<P: LatticeEval + ?Sized>(
    p: &P,
    xi: &[i64],
    theta: &[i64],
) -> Result<()> {
    if xi.len() != p.dim() || theta.len() != p.dim() {
        return Err(Error::Configuration("dimension mismatch in discrete Taylor".into()));
    }
    let corners_ok = [-1i64, 1].iter().all(|&s| {
        let c: Vec<i64> = xi.iter().zip(theta).map(|(&x, &t)| x + s * t.abs()).collect();
        p.contains(&c)
    });
    if !corners_ok || !p.contains(xi) {
        return Err(Error::OutOfRange(format!(
            "box does not contain xi + Q(theta) for xi = {xi:?}, theta = {theta:?}"
        )));
    }
    Ok(())
}

/// Discrete Taylor expansion p(ξ+θ) = Σ_{|α|<M} θ^{(α)}/α! △^α p(ξ) + r_M.
/// Returns (partial sum, remainder).
pub fn discrete_taylor<P: LatticeEval + ?Sized>(
    p: &P,
    xi: &[i64],
    theta: &[i64],
    m: u32,
) -> Result<(C64, C64)> {
    check_taylor_region(p, xi, theta)?;
    let n = p.dim();
    let target: Vec<i64> = xi.iter().zip(theta).map(|(a, b)| a + b).collect();
    let mut partial = C64::new(0.0, 0.0);
    if m > 0 {
        for alpha in MultiIndex::up_to_order(n, m - 1) {
            let ff = falling_factorial(theta, &alpha)?;
            if ff == 0 {
                continue;
            }
            let d = forward_difference(p, &alpha, xi)?;
            partial += d * (ff as f64 / alpha.factorial()? as f64);
        }
    }
    let remainder = p.eval(&target)? - partial;
    Ok((partial, remainder))
}

/// Σ_{|α|=M} (1/α!) |θ^{(α)}| max_{ν∈Q(θ)} |△^α p(ξ+ν)|, an upper bound for |r_M|.
pub fn taylor_remainder_bound<P: LatticeEval + ?Sized>(
    p: &P,
    xi: &[i64],
    theta: &[i64],
    m: u32,
) -> Result<f64> {
    check_taylor_region(p, xi, theta)?;
    let n = p.dim();
    let pts = neighbourhood(xi, theta);
    let mut bound = 0.0;
    for alpha in MultiIndex::of_order(n, m) {
        let ff = falling_factorial(theta, &alpha)?;
        if ff == 0 {
            continue;
        }
        let mut sup: f64 = 0.0;
        for q in &pts {
            sup = sup.max(forward_difference(p, &alpha, q)?.norm());
        }
        bound += (ff.unsigned_abs() as f64) / alpha.factorial()? as f64 * sup;
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn forward_difference_examples() {
        let sq = FnLattice::new(1, |x| c((x[0] * x[0]) as f64));
        assert_eq!(forward_difference(&sq, &mi(&[1]), &[3]).unwrap(), c(7.0));
        let bil = FnLattice::new(2, |x| c((x[0] * x[1]) as f64));
        assert_eq!(forward_difference(&bil, &mi(&[1, 1]), &[0, 0]).unwrap(), c(1.0));
        let ff2 = FnLattice::new(1, |x| c(falling_factorial(x, &MultiIndex(vec![2])).unwrap() as f64));
        for xi in -5..5 {
            assert_eq!(forward_difference(&ff2, &mi(&[2]), &[xi]).unwrap(), c(2.0));
        }
    }

    #[test]
    fn backward_difference_examples() {
        let id = FnLattice::new(1, |x| c(x[0] as f64));
        assert_eq!(backward_difference(&id, &mi(&[1]), &[0]).unwrap(), c(1.0));
        let delta = FnLattice::new(1, |x| c(if x[0] == 0 { 1.0 } else { 0.0 }));
        assert_eq!(backward_difference(&delta, &mi(&[1]), &[1]).unwrap(), c(-1.0));
        let sq = FnLattice::new(1, |x| c((x[0] * x[0]) as f64));
        assert_eq!(backward_difference(&sq, &mi(&[1]), &[3]).unwrap(), c(5.0));
    }

    #[test]
    fn falling_factorial_examples() {
        assert_eq!(falling_factorial(&[5], &mi(&[3])).unwrap(), 60);
        assert_eq!(falling_factorial(&[3, 2], &mi(&[1, 2])).unwrap(), 6);
        assert_eq!(falling_factorial(&[2], &mi(&[3])).unwrap(), 0);
        assert_eq!(falling_factorial(&[7], &mi(&[0])).unwrap(), 1);
        assert_eq!(falling_factorial(&[-3], &mi(&[2])).unwrap(), 12);
    }

    #[test]
    fn falling_factorial_overflow_detected() {
        assert!(matches!(
            falling_factorial(&[i64::MAX / 2], &mi(&[3])),
            Err(Error::Overflow(_))
        ));
        assert!(MultiIndex::new(vec![7, 6]).is_err());
    }

    #[test]
    fn out_of_box_is_an_error() {
        let bx = FrequencyBox::new(1, 4, 0).unwrap();
        let p = LatticeFunction::from_fn(bx, |x| c(x[0] as f64));
        assert!(matches!(
            forward_difference(&p, &mi(&[2]), &[3]),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            backward_difference(&p, &mi(&[1]), &[-4]),
            Err(Error::OutOfRange(_))
        ));
        assert!(discrete_taylor(&p, &[3], &[2], 2).is_err());
    }

    #[test]
    fn taylor_examples() {
        let sq = FnLattice::new(1, |x| c((x[0] * x[0]) as f64));
        for (xi, th) in [(0, 3), (-4, 2), (7, -5)] {
            let (_, r) = discrete_taylor(&sq, &[xi], &[th], 3).unwrap();
            assert_eq!(r, c(0.0));
        }
        let (s, r) = discrete_taylor(&sq, &[4], &[0], 2).unwrap();
        assert_eq!((s, r), (c(16.0), c(0.0)));

        let inv = FnLattice::new(1, |x| c(1.0 / bracket_int(x)));
        let (_, r) = discrete_taylor(&inv, &[5], &[2], 1).unwrap();
        let oracle = 1.0 / 50f64.sqrt() - 1.0 / 26f64.sqrt();
        assert!((r.re - oracle).abs() < 1e-15 && r.im == 0.0);
    }

    #[test]
    fn remainder_bound_examples() {
        let cube = FnLattice::new(1, |x| c((x[0] * x[0] * x[0]) as f64));
        let (_, r) = discrete_taylor(&cube, &[0], &[3], 2).unwrap();
        let b = taylor_remainder_bound(&cube, &[0], &[3], 2).unwrap();
        // r_2 = 27 - 3·1 = 24; bound = (3·2/2)·max_{|ν|≤3}|△²ν³| = 3·(6·3+6) = 72
        assert_eq!(r, c(24.0));
        assert_eq!(b, 72.0);
        let konst = FnLattice::new(1, |_| c(2.5));
        assert_eq!(taylor_remainder_bound(&konst, &[1], &[4], 1).unwrap(), 0.0);
        let lin = FnLattice::new(1, |x| c(x[0] as f64));
        assert_eq!(taylor_remainder_bound(&lin, &[1], &[4], 2).unwrap(), 0.0);
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::of_order(2, 2).len(), 3);
        assert_eq!(MultiIndex::up_to_order(3, 2).len(), 10);
        assert_eq!(mi(&[1, 2]).below().len(), 6);
        assert_eq!(mi(&[3, 2]).binomial(&mi(&[1, 1])).unwrap(), 6);
        assert_eq!(mi(&[2, 3]).factorial().unwrap(), 12);
    }

    #[test]
    fn box_indexing_roundtrip() {
        let bx = FrequencyBox::new(2, 3, 1).unwrap();
        for i in 0..bx.len() {
            assert_eq!(bx.index(&bx.point(i)), Some(i));
        }
        assert_eq!(bx.point(0), vec![-4, -4]);
        assert_eq!(bx.point(1), vec![-4, -3]);
        assert_eq!(bx.default_grid(), 16);
    }

    fn small_poly() -> impl Strategy<Value = Vec<i64>> {
        proptest::collection::vec(-3i64..=3, 9)
    }

    /// Finitely supported integer data on [-4,4] (n=1) or [-4,4]^2 via a product.
    fn finite(n: usize, coeffs: Vec<i64>) -> FnLattice {
        FnLattice::new(n, move |x| {
            let v: i64 = x
                .iter()
                .map(|&t| if t.abs() <= 4 { coeffs[(t + 4) as usize] } else { 0 })
                .product();
            c(v as f64)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn leibniz_rule(a in small_poly(), b in small_poly(), al in proptest::collection::vec(0u32..=2, 2), x0 in -6i64..6, x1 in -6i64..6) {
            let alpha = MultiIndex::new(al).unwrap();
            prop_assume!(alpha.order() <= 3);
            let f = finite(2, a);
            let g = finite(2, b);
            let (f2, g2) = (f.clone(), g.clone());
            let fg = FnLattice::new(2, move |x| f2.value(x) * g2.value(x));
            let xi = [x0, x1];
            let lhs = forward_difference(&fg, &alpha, &xi).unwrap();
            let mut rhs = C64::new(0.0, 0.0);
            for beta in alpha.below() {
                let rest = alpha.minus(&beta).unwrap();
                let shifted_xi: Vec<i64> = xi.iter().zip(beta.entries()).map(|(a, b)| a + *b as i64).collect();
                rhs += forward_difference(&f, &beta, &xi).unwrap()
                    * forward_difference(&g, &rest, &shifted_xi).unwrap()
                    * alpha.binomial(&beta).unwrap() as f64;
            }
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn summation_by_parts(a in small_poly(), b in small_poly(), k in 0u32..=4) {
            let alpha = MultiIndex::new(vec![k]).unwrap();
            let f = finite(1, a);
            let g = finite(1, b);
            let mut lhs = C64::new(0.0, 0.0);
            let mut rhs = C64::new(0.0, 0.0);
            for xi in -12i64..=12 {
                lhs += f.value(&[xi]) * forward_difference(&g, &alpha, &[xi]).unwrap();
                rhs += backward_difference(&f, &alpha, &[xi]).unwrap() * g.value(&[xi]);
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert_eq!(lhs, rhs * sign);
        }

        #[test]
        fn difference_of_falling_factorial(a in proptest::collection::vec(0u32..=2, 2), g in proptest::collection::vec(0u32..=2, 2), x0 in -5i64..5, x1 in -5i64..5) {
            let alpha = MultiIndex::new(a).unwrap();
            let gamma = MultiIndex::new(g).unwrap();
            prop_assume!(alpha.dominates(&gamma));
            let al = alpha.clone();
            let p = FnLattice::new(2, move |x| c(falling_factorial(x, &al).unwrap() as f64));
            let lhs = forward_difference(&p, &gamma, &[x0, x1]).unwrap();
            let a_as_point: Vec<i64> = alpha.entries().iter().map(|&v| v as i64).collect();
            let rest = alpha.minus(&gamma).unwrap();
            let rhs = falling_factorial(&a_as_point, &gamma).unwrap() * falling_factorial(&[x0, x1], &rest).unwrap();
            prop_assert_eq!(lhs, c(rhs as f64));
        }

        #[test]
        fn taylor_exact_for_low_degree(cs in proptest::collection::vec(-3i64..=3, 3), m in 3u32..=5, xi in -6i64..6, th in -4i64..=4) {
            let p = FnLattice::new(1, move |x| c((cs[0] + cs[1] * x[0] + cs[2] * x[0] * x[0]) as f64));
            let (_, r) = discrete_taylor(&p, &[xi], &[th], m).unwrap();
            prop_assert_eq!(r, c(0.0));
        }

        #[test]
        fn remainder_within_bound(cs in proptest::collection::vec(-2.0f64..2.0, 4), m in 1u32..=4, x0 in -8i64..8, x1 in -8i64..8, t0 in -3i64..=3, t1 in -3i64..=3) {
            let p = FnLattice::new(2, move |x| {
                let (a, b) = (x[0] as f64, x[1] as f64);
                C64::new(cs[0] * a.powi(3) + cs[1] * a * b * b, cs[2] / (1.0 + a * a + b * b) + cs[3] * (0.3 * a).sin())
            });
            let (_, r) = discrete_taylor(&p, &[x0, x1], &[t0, t1], m).unwrap();
            let bound = taylor_remainder_bound(&p, &[x0, x1], &[t0, t1], m).unwrap();
            prop_assert!(r.norm() <= bound * (1.0 + 1e-12) + 1e-12, "r = {}, bound = {}", r.norm(), bound);
        }
    }
}
