//! Symbolic calculus on tabulated symbols and decay-order fits.

use crate::error::{Error, Result};
use crate::lattice::{bracket_int, norm_int, FrequencyBox, LatticeFunction, MultiIndex};
use crate::symbols::{AmplitudeTable, SymbolOrder, SymbolTable};
use crate::harmonic::GridFunction;
use crate::quantize::LinearOperatorHandle;
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Ordinary least-squares line y ≈ slope·x + intercept.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Expansion Σ_j A_j with strictly decreasing term orders on a common box and grid.
#[derive(Clone, Debug)]
pub struct AsymptoticSeries {
    pub base_order: f64,
    pub truncation: usize,
    terms: Vec<(f64, SymbolTable)>,
}

impl AsymptoticSeries {
    pub fn new(base_order: f64, terms: Vec<(f64, SymbolTable)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Configuration("an asymptotic series needs at least one term".into()));
        }
        for w in terms.windows(2) {
            if w[1].0 >= w[0].0 {
                return Err(Error::Configuration(format!(
                    "term orders must decrease strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if w[1].1.bx() != w[0].1.bx() || w[1].1.grid() != w[0].1.grid() {
                return Err(Error::Configuration("series terms live on different boxes or grids".into()));
            }
        }
        Ok(AsymptoticSeries { base_order, truncation: terms.len(), terms })
    }

    /// Single-term series.
    pub fn single(a: SymbolTable) -> Self {
        let m = a.order.m;
        AsymptoticSeries { base_order: m, truncation: 1, terms: vec![(m, a)] }
    }

    pub fn terms(&self) -> &[(f64, SymbolTable)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Σ_j A_j carrying the base order.
    pub fn sum(&self) -> SymbolTable {
        let mut acc = self.terms[0].1.clone();
        for (_, t) in &self.terms[1..] {
            acc = acc.add(t).expect("terms share box and grid");
        }
        let o = acc.order;
        acc.with_order(SymbolOrder { m: self.base_order, ..o })
    }
}

fn check_pair(a: &SymbolTable, b: &SymbolTable) -> Result<FrequencyBox> {
    if a.grid() != b.grid() || a.dim() != b.dim() {
        return Err(Error::Configuration("symbols live on different grids".into()));
    }
    Ok(if a.bx().extent() <= b.bx().extent() { a.bx() } else { b.bx() })
}

fn inverse_factorial(alpha: &MultiIndex) -> f64 {
    1.0 / alpha.factorial().expect("orders are small") as f64
}

fn truncation_box(bx: FrequencyBox, m: usize) -> Result<FrequencyBox> {
    if m == 0 {
        return Err(Error::Configuration("truncation level must be at least 1".into()));
    }
    bx.shrink(m - 1)
}

fn accumulate(acc: &mut Option<SymbolTable>, term: SymbolTable) -> Result<()> {
    *acc = Some(match acc.take() {
        None => term,
        Some(s) => s.add(&term)?,
    });
    Ok(())
}

/// Σ_{|α|<M} (1/α!) △_ξ^α σ_A · D_x^{(α)} σ_B on the common box shrunk by M − 1.
pub fn compose_symbols(a: &SymbolTable, b: &SymbolTable, m: usize) -> Result<SymbolTable> {
    let bx = check_pair(a, b)?;
    let out = truncation_box(bx, m)?;
    let a = a.restrict_box(bx)?;
    let b = b.restrict_box(bx)?;
    let mut acc = None;
    for alpha in MultiIndex::up_to_order(bx.n, (m - 1) as u32) {
        let da = a.difference(&alpha)?.restrict_box(out)?;
        let db = b.x_falling_derivative(&alpha, 1)?.restrict_box(out)?;
        accumulate(&mut acc, da.mul(&db)?.scale(C64::new(inverse_factorial(&alpha), 0.0)))?;
    }
    let order = SymbolOrder {
        m: a.order.m + b.order.m,
        rho: a.order.rho.min(b.order.rho),
        delta: a.order.delta.max(b.order.delta),
    };
    Ok(acc.expect("at least α = 0").with_order(order))
}

/// Σ_{|α|<M} (1/α!) △_ξ^α D_x^{(α)} conj σ_A on the box shrunk by M − 1.
pub fn adjoint_symbol(a: &SymbolTable, m: usize) -> Result<SymbolTable> {
    let out = truncation_box(a.bx(), m)?;
    let conj = a.conj();
    let mut acc = None;
    for alpha in MultiIndex::up_to_order(a.dim(), (m - 1) as u32) {
        let t = conj.x_falling_derivative(&alpha, 1)?.difference(&alpha)?.restrict_box(out)?;
        accumulate(&mut acc, t.scale(C64::new(inverse_factorial(&alpha), 0.0)))?;
    }
    Ok(acc.expect("at least α = 0").with_order(a.order))
}

/// Σ_{|α|<M} (1/α!) △_ξ^α [D_y^{(α)} a(x,y,ξ)]_{y=x} on the box shrunk by M − 1.
pub fn amplitude_to_symbol(a: &AmplitudeTable, m: usize) -> Result<SymbolTable> {
    let out = truncation_box(a.bx(), m)?;
    let mut acc = None;
    for alpha in MultiIndex::up_to_order(a.dim(), (m - 1) as u32) {
        let t = a.y_falling_derivative(&alpha, 1)?.diagonal().difference(&alpha)?.restrict_box(out)?;
        accumulate(&mut acc, t.scale(C64::new(inverse_factorial(&alpha), 0.0)))?;
    }
    Ok(acc.expect("at least α = 0").with_order(a.order))
}

/// Ellipticity witness |σ(x,ξ)| ≥ C₀⟨ξ⟩^m for |ξ| ≥ N₀.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityWitness {
    pub c0: f64,
    pub n0: f64,
}

/// Smooth χ with χ = 0 for |ξ| < N₀ and χ = 1 for |ξ| ≥ N₀ + 2.
pub fn low_frequency_cutoff(xi: &[i64], n0: f64) -> f64 {
    let t = (norm_int(xi) - n0) / 2.0;
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    f(t) / (f(t) + f(1.0 - t))
}

/// Checks the witness on the whole box and reports the first violating point.
pub fn check_ellipticity(a: &SymbolTable, w: &EllipticityWitness) -> Result<()> {
    let m = a.order.m;
    for ix in 0..a.n_x() {
        for (k, p) in a.bx().points().enumerate() {
            if norm_int(&p) < w.n0 {
                continue;
            }
            let value = a.at(ix, k).norm();
            let required = w.c0 * bracket_int(&p).powf(m);
            if value < required {
                return Err(Error::Ellipticity { x: a.x_point(ix), xi: p, value, required });
            }
        }
    }
    Ok(())
}

/// Right parametrix: B ∼ Σ_k B_k with σ_{B₀} = χ/σ_{A₀} and
/// σ_{B_N} = −(χ/σ_{A₀}) Σ_{k<N} Σ_{j ≤ N−k} Σ_{|γ|=N−j−k} (1/γ!) △^γ σ_{A_j} · D_x^{(γ)} σ_{B_k}.
///
/// All terms live on the box of A shrunk by M − 1.
pub fn parametrix(a: &AsymptoticSeries, m: usize, witness: EllipticityWitness) -> Result<AsymptoticSeries> {
    let a0 = &a.terms[0].1;
    check_ellipticity(a0, &witness)?;
    let out = truncation_box(a0.bx(), m)?;
    let a0_out = a0.restrict_box(out)?;
    let inv = a0_out.map_values(|_, xi, v| {
        let chi = low_frequency_cutoff(xi, witness.n0);
        if chi == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new(chi, 0.0) / v
        }
    });
    let n = a0.dim();
    let m0 = a.base_order;
    let order_of = |k: usize| SymbolOrder { m: -m0 - k as f64, rho: a0.order.rho, delta: a0.order.delta };
    let mut b: Vec<SymbolTable> = vec![inv.clone().with_order(order_of(0))];
    for big_n in 1..m {
        let mut acc: Option<SymbolTable> = None;
        for (k, bk) in b.iter().enumerate() {
            for j in 0..=(big_n - k) {
                let Some((_, aj)) = a.terms.get(j) else { continue };
                let g = (big_n - j - k) as u32;
                for gamma in MultiIndex::of_order(n, g) {
                    let da = aj.difference(&gamma)?.restrict_box(out)?;
                    let db = bk.x_falling_derivative(&gamma, 1)?;
                    accumulate(&mut acc, da.mul(&db)?.scale(C64::new(inverse_factorial(&gamma), 0.0)))?;
                }
            }
        }
        let s = acc.expect("k = 0 contributes");
        b.push(s.mul(&inv)?.scale(C64::new(-1.0, 0.0)).with_order(order_of(big_n)));
    }
    let terms = b.into_iter().enumerate().map(|(k, t)| (-m0 - k as f64, t)).collect();
    AsymptoticSeries::new(-m0, terms)
}

/// Which lattice points enter each fitted shell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShellSpec {
    /// Shells of radius ⌊K/8⌋·{1, 2, 4, 8}.
    Dyadic { k: usize },
    /// Shells |ξ| ∈ [r − ½, r + ½) for the given radii.
    Radii(Vec<f64>),
    /// Single lattice points r·d along an integer direction d.
    Ray { direction: Vec<i64>, radii: Vec<i64> },
}

impl ShellSpec {
    fn radii(&self) -> Vec<f64> {
        match self {
            ShellSpec::Dyadic { k } => [1, 2, 4, 8].iter().map(|&s| (s * (k / 8)) as f64).collect(),
            ShellSpec::Radii(r) => r.clone(),
            ShellSpec::Ray { direction, radii } => {
                let len = norm_int(direction);
                radii.iter().map(|&r| r as f64 * len).collect()
            }
        }
    }

    fn members(&self, shell: usize, xi: &[i64]) -> bool {
        match self {
            ShellSpec::Ray { direction, radii } => {
                let r = radii[shell];
                xi.iter().zip(direction).all(|(&a, &d)| a == r * d)
            }
            _ => {
                let r = self.radii()[shell];
                let v = norm_int(xi);
                v >= r - 0.5 && v < r + 0.5
            }
        }
    }
}

impl ShellSpec {
    /// Points of `bx` that belong to a fitted shell (radius ≥ 4).
    pub fn shell_points(&self, bx: &FrequencyBox) -> Vec<Vec<i64>> {
        let radii = self.radii();
        bx.points()
            .filter(|p| radii.iter().enumerate().any(|(i, &r)| r >= 4.0 && self.members(i, p)))
            .collect()
    }
}

/// max_x |(A − B) e_ξ(x)| at each of `points`, zero elsewhere on `bx`.
pub fn operator_residual(
    a: &LinearOperatorHandle,
    b: &LinearOperatorHandle,
    bx: FrequencyBox,
    points: &[Vec<i64>],
) -> Result<LatticeFunction> {
    if a.grid != b.grid || a.bx.n != b.bx.n || bx.n != a.bx.n {
        return Err(Error::Configuration("operators live on different grids".into()));
    }
    let input_box = if a.bx.extent() <= b.bx.extent() { a.bx } else { b.bx };
    let values: Vec<(usize, f64)> = points
        .par_iter()
        .map(|p| {
            let k = bx
                .index(p)
                .ok_or_else(|| Error::OutOfRange(format!("{p:?} outside the residual box")))?;
            let e = GridFunction::plane_wave(input_box, a.grid, p)?;
            Ok((k, a.apply(&e)?.max_diff(&b.apply(&e)?)?))
        })
        .collect::<Result<_>>()?;
    let mut out = LatticeFunction::zeros(bx);
    for (k, v) in values {
        out.values[k] = C64::new(v, 0.0);
    }
    Ok(out)
}

/// Magnitude data indexed by lattice points.
pub trait DecaySource {
    /// (ξ, max magnitude at ξ) for every tabulated lattice point.
    fn magnitudes(&self) -> Vec<(Vec<i64>, f64)>;
}

impl DecaySource for LatticeFunction {
    fn magnitudes(&self) -> Vec<(Vec<i64>, f64)> {
        self.bx.points().zip(&self.values).map(|(p, v)| (p, v.norm())).collect()
    }
}

impl DecaySource for SymbolTable {
    /// Largest |a(x, ξ)| over the x-grid.
    fn magnitudes(&self) -> Vec<(Vec<i64>, f64)> {
        self.bx()
            .points()
            .enumerate()
            .map(|(k, p)| {
                let m = (0..self.n_x()).map(|ix| self.at(ix, k).norm()).fold(0.0, f64::max);
                (p, m)
            })
            .collect()
    }
}

/// Fitted slope of log(max shell magnitude) against log⟨ξ⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// −∞ when the trailing shells vanish to roundoff.
    pub slope: f64,
    /// Root-mean-square deviation of the fitted points from the line.
    pub residual: f64,
    /// (log⟨ξ*⟩, log|s(ξ*)|) at each shell's maximiser.
    pub points: Vec<(f64, f64)>,
}

/// Values at most this fraction of the global maximum count as numerically zero.
pub const NUMERICAL_ZERO: f64 = 1e-13;

/// Least-squares fit over per-shell maxima.
pub fn fit_decay_order(s: &impl DecaySource, spec: &ShellSpec) -> Result<DecayFit> {
    fit_decay_order_with_floor(s, spec, 0.0)
}

/// As [`fit_decay_order`], also treating magnitudes ≤ `floor` as zero.
pub fn fit_decay_order_with_floor(s: &impl DecaySource, spec: &ShellSpec, floor: f64) -> Result<DecayFit> {
    let radii = spec.radii();
    if radii.iter().filter(|&&r| r >= 4.0).count() < 4 {
        return Err(Error::UndefinedFit(format!("need at least 4 shells with |xi| >= 4, radii {radii:?}")));
    }
    let data = s.magnitudes();
    let global = data.iter().map(|d| d.1).fold(0.0, f64::max);
    if global <= floor || !global.is_finite() {
        return Err(Error::UndefinedFit("data vanish identically".into()));
    }
    let zero_level = (NUMERICAL_ZERO * global).max(floor);
    let mut shells: Vec<Option<(f64, f64)>> = Vec::new();
    for (i, &r) in radii.iter().enumerate() {
        if r < 4.0 {
            continue;
        }
        let best = data
            .iter()
            .filter(|(p, _)| spec.members(i, p))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((p, v)) = best else {
            return Err(Error::UndefinedFit(format!("shell of radius {r} has no lattice points in the data")));
        };
        shells.push((*v > zero_level).then(|| (bracket_int(p).ln(), v.ln())));
    }
    let first_zero = shells.iter().position(|s| s.is_none());
    let points: Vec<(f64, f64)> = shells.iter().flatten().copied().collect();
    if let Some(z) = first_zero {
        if shells[z..].iter().all(|s| s.is_none()) {
            return Ok(DecayFit { slope: f64::NEG_INFINITY, residual: 0.0, points });
        }
    }
    if points.len() < 2 {
        return Err(Error::UndefinedFit("fewer than two shells carry data".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, icpt) = least_squares(&xs, &ys);
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - icpt).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(DecayFit { slope, residual, points })
}
