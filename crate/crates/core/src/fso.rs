//! Fourier series operators: phases, application, compositions with symbols, L² bounds.

use crate::error::{Error, Result};
use crate::fft;
use crate::harmonic::{grid_point, GridFunction};
use crate::jet::{stirling_first, Jet, JetSpace};
use crate::lattice::{bracket, bracket_int, FrequencyBox, MultiIndex};
use crate::quantize::{apply_amplitude_rows, apply_symbol_rows, LinearOperatorHandle};
use crate::symbols::{extend_symbol, AmplitudeTable, EuclideanSymbol, SymbolOrder, SymbolTable, ThetaKernel, MAX_AMPLITUDE_ENTRIES};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Largest periodicity defect accepted for application.
pub const PHASE_TOLERANCE: f64 = 1e-10;

/// Phase φ(x,ξ) = x·(ξ + s(ξ)) + φ_per(x,ξ) tabulated on grid × box.
#[derive(Clone, Debug)]
pub struct PhaseTable {
    bx: FrequencyBox,
    grid: usize,
    /// round(ξ + s(ξ)), [k·n + j].
    lattice_slope: Vec<i64>,
    /// ξ + s(ξ) − round(ξ + s(ξ)), [k·n + j].
    slope_remainder: Vec<f64>,
    /// φ_per, [ix·L + k].
    per: Vec<f64>,
    /// ∇ₓφ, [(ix·L + k)·n + j].
    grad: Vec<f64>,
    defect: f64,
    per_tail: f64,
}

impl PhaseTable {
    /// Samples φ on the grid and at x + 2πe_j to split off the linear part.
    pub fn from_fn(bx: FrequencyBox, grid: usize, phi: impl Fn(&[f64], &[i64]) -> f64 + Sync) -> Result<Self> {
        if grid < 2 * bx.extent() + 1 {
            return Err(Error::Configuration(format!("grid {grid} too small for box extent {}", bx.extent())));
        }
        let n = bx.n;
        let nx = grid.pow(n as u32);
        let l = bx.len();
        let pts: Vec<Vec<i64>> = bx.points().collect();
        let xs: Vec<Vec<f64>> = (0..nx).map(|ix| grid_point(ix, n, grid)).collect();
        struct Column {
            slope: Vec<f64>,
            per: Vec<f64>,
            grad: Vec<Vec<f64>>,
            defect: f64,
            tail: f64,
        }
        let cols: Vec<Column> = pts
            .par_iter()
            .map(|p| {
                let base: Vec<f64> = xs.iter().map(|x| phi(x, p)).collect();
                let mut slope = vec![0.0; n];
                let mut defect: f64 = 0.0;
                for j in 0..n {
                    let mut sum = 0.0;
                    for (x, &b) in xs.iter().zip(&base) {
                        let mut y = x.clone();
                        y[j] += TWO_PI;
                        let shifted = phi(&y, p);
                        sum += shifted - b;
                        defect = defect.max((C64::from_polar(1.0, shifted) - C64::from_polar(1.0, b)).norm());
                    }
                    slope[j] = sum / (nx as f64 * TWO_PI);
                }
                let per: Vec<f64> = xs
                    .iter()
                    .zip(&base)
                    .map(|(x, &b)| b - x.iter().zip(&slope).map(|(a, s)| a * s).sum::<f64>())
                    .collect();
                let per_c: Vec<C64> = per.iter().map(|&v| C64::new(v, 0.0)).collect();
                let tail = relative_tail(&per_c, n, grid);
                let grad: Vec<Vec<f64>> = (0..n)
                    .map(|j| {
                        fft::apply_multiplier(&per_c, n, grid, |nu| C64::new(0.0, nu[j] as f64))
                            .into_iter()
                            .map(|v| v.re + slope[j])
                            .collect()
                    })
                    .collect();
                Column { slope, per, grad, defect, tail }
            })
            .collect();
        let mut lattice_slope = vec![0i64; l * n];
        let mut slope_remainder = vec![0.0; l * n];
        let mut per = vec![0.0; nx * l];
        let mut grad = vec![0.0; nx * l * n];
        let mut defect: f64 = 0.0;
        let mut per_tail: f64 = 0.0;
        for (k, c) in cols.into_iter().enumerate() {
            for j in 0..n {
                let r = c.slope[j].round();
                lattice_slope[k * n + j] = r as i64;
                slope_remainder[k * n + j] = c.slope[j] - r;
            }
            for ix in 0..nx {
                per[ix * l + k] = c.per[ix];
                for j in 0..n {
                    grad[(ix * l + k) * n + j] = c.grad[j][ix];
                }
            }
            defect = defect.max(c.defect);
            per_tail = per_tail.max(c.tail);
        }
        Ok(PhaseTable { bx, grid, lattice_slope, slope_remainder, per, grad, defect, per_tail })
    }

    /// φ(x,ξ) = x·ξ + τ(ξ).
    pub fn translation(bx: FrequencyBox, grid: usize, tau: impl Fn(&[i64]) -> f64 + Sync) -> Result<Self> {
        Self::from_fn(bx, grid, |x, p| x.iter().zip(p).map(|(a, &b)| a * b as f64).sum::<f64>() + tau(p))
    }

    pub fn bx(&self) -> FrequencyBox {
        self.bx
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.bx.n
    }

    pub fn n_x(&self) -> usize {
        self.grid.pow(self.bx.n as u32)
    }

    pub fn periodicity_defect(&self) -> f64 {
        self.defect
    }

    pub fn is_valid(&self) -> bool {
        self.defect <= PHASE_TOLERANCE
    }

    fn slope(&self, k: usize, j: usize) -> f64 {
        let n = self.bx.n;
        self.lattice_slope[k * n + j] as f64 + self.slope_remainder[k * n + j]
    }

    pub fn value(&self, ix: usize, k: usize) -> f64 {
        let x = grid_point(ix, self.bx.n, self.grid);
        let lin: f64 = (0..self.bx.n).map(|j| x[j] * self.slope(k, j)).sum();
        lin + self.per[ix * self.bx.len() + k]
    }

    /// φ at an arbitrary real x (the periodic part is interpolated trigonometrically).
    pub fn value_at(&self, x: &[f64], k: usize) -> f64 {
        let n = self.bx.n;
        let col: Vec<C64> = (0..self.n_x()).map(|ix| C64::new(self.per[ix * self.bx.len() + k], 0.0)).collect();
        let c = fft::coefficients(&col, n, self.grid);
        let per: f64 = c
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let nu = fft::unravel(idx, n, self.grid);
                let arg: f64 = nu.iter().zip(x).map(|(&i, &xv)| fft::bin_frequency(i, self.grid) as f64 * xv).sum();
                (v * C64::from_polar(1.0, arg)).re
            })
            .sum();
        (0..n).map(|j| x[j] * self.slope(k, j)).sum::<f64>() + per
    }

    pub fn gradient(&self, ix: usize, k: usize) -> &[f64] {
        let n = self.bx.n;
        let base = (ix * self.bx.len() + k) * n;
        &self.grad[base..base + n]
    }

    /// e^{iφ(x_ix, ξ)} for every ξ in box order.
    pub fn exp_row(&self, ix: usize) -> Vec<C64> {
        let n = self.bx.n;
        let m = fft::unravel(ix, n, self.grid);
        let x = grid_point(ix, n, self.grid);
        let roots = fft::unit_roots(self.grid);
        let l = self.bx.len();
        (0..l)
            .map(|k| {
                let lin = &self.lattice_slope[k * n..(k + 1) * n];
                let rem: f64 = (0..n).map(|j| x[j] * self.slope_remainder[k * n + j]).sum();
                roots[fft::phase_index(&m, lin, self.grid)] * C64::from_polar(1.0, rem + self.per[ix * l + k])
            })
            .collect()
    }

    /// Spectral ∂_x^β φ_per, [ix·L + k].
    pub fn periodic_derivative(&self, beta: &MultiIndex) -> Vec<f64> {
        let (n, g) = (self.bx.n, self.grid);
        let l = self.bx.len();
        let nx = self.n_x();
        let cols: Vec<Vec<f64>> = (0..l)
            .into_par_iter()
            .map(|k| {
                let col: Vec<C64> = (0..nx).map(|ix| C64::new(self.per[ix * l + k], 0.0)).collect();
                fft::apply_multiplier(&col, n, g, |nu| {
                    nu.iter()
                        .zip(beta.entries())
                        .fold(C64::new(1.0, 0.0), |acc, (&v, &b)| acc * C64::new(0.0, v as f64).powu(b))
                })
                .into_iter()
                .map(|v| v.re)
                .collect()
            })
            .collect();
        let mut out = vec![0.0; nx * l];
        for (k, col) in cols.into_iter().enumerate() {
            for (ix, v) in col.into_iter().enumerate() {
                out[ix * l + k] = v;
            }
        }
        out
    }

    /// ∂_x^α φ: the linear part contributes only at |α| = 1.
    pub fn x_derivative(&self, alpha: &MultiIndex) -> Vec<f64> {
        let mut d = self.periodic_derivative(alpha);
        if alpha.order() == 1 {
            let j = alpha.entries().iter().position(|&a| a == 1).expect("unit index");
            let l = self.bx.len();
            for (idx, v) in d.iter_mut().enumerate() {
                *v += self.slope(idx % l, j);
            }
        } else if alpha.order() == 0 {
            for (idx, v) in d.iter_mut().enumerate() {
                *v = self.value(idx / self.bx.len(), idx % self.bx.len());
            }
        }
        d
    }

    pub fn restrict_box(&self, bx: FrequencyBox) -> Result<PhaseTable> {
        if bx.n != self.bx.n || bx.extent() > self.bx.extent() {
            return Err(Error::OutOfRange("target box exceeds the phase table".into()));
        }
        let n = bx.n;
        let map: Vec<usize> = bx.points().map(|p| self.bx.index(&p).expect("inside")).collect();
        let l_in = self.bx.len();
        let nx = self.n_x();
        let mut out = PhaseTable {
            bx,
            grid: self.grid,
            lattice_slope: Vec::new(),
            slope_remainder: Vec::new(),
            per: Vec::with_capacity(nx * map.len()),
            grad: Vec::with_capacity(nx * map.len() * n),
            defect: self.defect,
            per_tail: self.per_tail,
        };
        for &k in &map {
            out.lattice_slope.extend_from_slice(&self.lattice_slope[k * n..(k + 1) * n]);
            out.slope_remainder.extend_from_slice(&self.slope_remainder[k * n..(k + 1) * n]);
        }
        for ix in 0..nx {
            for &k in &map {
                out.per.push(self.per[ix * l_in + k]);
                out.grad.extend_from_slice(&self.grad[(ix * l_in + k) * n..(ix * l_in + k + 1) * n]);
            }
        }
        Ok(out)
    }
}

fn relative_tail(row: &[C64], n: usize, grid: usize) -> f64 {
    let c = fft::coefficients(row, n, grid);
    let cut = (grid / 3) as i64;
    let freqs = fft::signed_frequencies(n, grid);
    let (mut tail, mut total) = (0.0, 0.0);
    for (v, nu) in c.iter().zip(freqs.chunks_exact(n)) {
        total += v.norm_sqr();
        if nu.iter().any(|f| f.abs() > cut) {
            tail += v.norm_sqr();
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (tail / total).sqrt()
    }
}

/// One reported supremum with its multi-indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub value: f64,
}

/// Certificate for a phase function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub periodicity_defect: f64,
    pub valid: bool,
    /// Relative spectral tail of the periodic part; large values mean φ_per is not resolved.
    pub smoothness_defect: f64,
    #[serde(rename = "C_lower")]
    pub c_lower: f64,
    #[serde(rename = "C_upper")]
    pub c_upper: f64,
    /// max(C_upper, 1/C_lower).
    #[serde(rename = "C")]
    pub c: f64,
    /// sup |∂_x^α φ| / ⟨ξ⟩ for 1 ≤ |α| ≤ 2.
    pub gradient_bounds: Vec<BoundEntry>,
    /// sup |∂_x^α △_ξ^β φ| for |β| = 1, |α| ≤ 2.
    pub difference_bounds: Vec<BoundEntry>,
}

/// Periodicity certificate, gradient comparability and derivative bounds of a phase.
pub fn check_phase(phi: &PhaseTable) -> PhaseReport {
    check_phase_with_order(phi, 2)
}

pub fn check_phase_with_order(phi: &PhaseTable, alpha_max: u32) -> PhaseReport {
    let n = phi.dim();
    let l = phi.bx.len();
    let nx = phi.n_x();
    let pts: Vec<Vec<i64>> = phi.bx.points().collect();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for ix in 0..nx {
        for (k, p) in pts.iter().enumerate() {
            let r = bracket(phi.gradient(ix, k)) / bracket_int(p);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let mut gradient_bounds = Vec::new();
    let mut difference_bounds = Vec::new();
    for alpha in MultiIndex::up_to_order(n, alpha_max) {
        let d = phi.x_derivative(&alpha);
        if alpha.order() >= 1 {
            let v = (0..nx * l).map(|i| d[i].abs() / bracket_int(&pts[i % l])).fold(0.0, f64::max);
            gradient_bounds.push(BoundEntry { alpha: alpha.entries().to_vec(), beta: vec![0; n], value: v });
        }
        for j in 0..n {
            let mut sup: f64 = 0.0;
            for (k, p) in pts.iter().enumerate() {
                let mut q = p.clone();
                q[j] += 1;
                let Some(k2) = phi.bx.index(&q) else { continue };
                for ix in 0..nx {
                    sup = sup.max((d[ix * l + k2] - d[ix * l + k]).abs());
                }
            }
            difference_bounds.push(BoundEntry {
                alpha: alpha.entries().to_vec(),
                beta: MultiIndex::unit(n, j).entries().to_vec(),
                value: sup,
            });
        }
    }
    PhaseReport {
        periodicity_defect: phi.defect,
        valid: phi.is_valid(),
        smoothness_defect: phi.per_tail,
        c_lower: lo,
        c_upper: hi,
        c: hi.max(1.0 / lo),
        gradient_bounds,
        difference_bounds,
    }
}

/// Amplitude of a Fourier series operator.
#[derive(Clone, Debug)]
pub enum FsoAmplitude {
    /// a(x, ξ), independent of y.
    Symbol(SymbolTable),
    /// a(x, y, ξ).
    Compound(AmplitudeTable),
}

impl FsoAmplitude {
    pub fn bx(&self) -> FrequencyBox {
        match self {
            FsoAmplitude::Symbol(a) => a.bx(),
            FsoAmplitude::Compound(a) => a.bx(),
        }
    }

    pub fn grid(&self) -> usize {
        match self {
            FsoAmplitude::Symbol(a) => a.grid(),
            FsoAmplitude::Compound(a) => a.grid(),
        }
    }

    pub fn order(&self) -> SymbolOrder {
        match self {
            FsoAmplitude::Symbol(a) => a.order,
            FsoAmplitude::Compound(a) => a.order,
        }
    }

    /// Compound form a(x, y, ξ).
    pub fn to_compound(&self) -> Result<AmplitudeTable> {
        match self {
            FsoAmplitude::Symbol(a) => AmplitudeTable::from_symbol(a),
            FsoAmplitude::Compound(a) => Ok(a.clone()),
        }
    }
}

/// T u(x) = Σ_ξ ∫ e^{i(φ(x,ξ) − y·ξ)} a(x,y,ξ) u(y) đy.
#[derive(Clone, Debug)]
pub struct FourierSeriesOp {
    pub phase: PhaseTable,
    pub amplitude: FsoAmplitude,
}

impl FourierSeriesOp {
    pub fn new(phase: PhaseTable, amplitude: FsoAmplitude) -> Result<Self> {
        if phase.grid != amplitude.grid() || phase.bx != amplitude.bx() {
            return Err(Error::Configuration("phase and amplitude live on different boxes or grids".into()));
        }
        Ok(FourierSeriesOp { phase, amplitude })
    }

    /// Same phase (restricted to the amplitude's box) with a new amplitude.
    pub fn with_amplitude(&self, amplitude: FsoAmplitude) -> Result<Self> {
        let phase = self.phase.restrict_box(amplitude.bx())?;
        Self::new(phase, amplitude)
    }

    pub fn bx(&self) -> FrequencyBox {
        self.phase.bx
    }

    pub fn grid(&self) -> usize {
        self.phase.grid
    }

    pub fn dim(&self) -> usize {
        self.phase.dim()
    }

    fn check(&self) -> Result<()> {
        if !self.phase.is_valid() {
            return Err(Error::Phase(format!(
                "x -> exp(i phi) is not 2pi-periodic (defect {:.3e})",
                self.phase.defect
            )));
        }
        Ok(())
    }
}

/// Applies T; symbol-form amplitudes use û directly, compound ones the grid y-sum.
pub fn apply_fso(t: &FourierSeriesOp, u: &GridFunction) -> Result<GridFunction> {
    t.check()?;
    match &t.amplitude {
        FsoAmplitude::Symbol(a) => apply_symbol_rows(a, u, |ix| t.phase.exp_row(ix)),
        FsoAmplitude::Compound(a) => apply_amplitude_rows(a, u, |ix| t.phase.exp_row(ix)),
    }
}

fn inverse_factorial(alpha: &MultiIndex) -> f64 {
    1.0 / alpha.factorial().expect("small orders") as f64
}

fn truncation_box(bx: FrequencyBox, m: usize) -> Result<FrequencyBox> {
    if m == 0 {
        return Err(Error::Configuration("truncation level must be at least 1".into()));
    }
    bx.shrink(m - 1)
}

/// Amplitude of T∘P: Σ_{|α|<M} (1/α!) (−D_z)^{(α)} [a(x,z,ξ) △_ξ^α p(z,ξ)].
pub fn compose_fso_pdo(t: &FourierSeriesOp, p: &SymbolTable, m: usize) -> Result<FsoAmplitude> {
    if p.grid() != t.grid() || p.dim() != t.dim() {
        return Err(Error::Configuration("symbol and operator live on different grids".into()));
    }
    let common = if p.bx().extent() <= t.bx().extent() { p.bx() } else { t.bx() };
    let out = truncation_box(common, m)?;
    let p = p.restrict_box(common)?;
    let order = SymbolOrder {
        m: t.amplitude.order().m + p.order.m,
        rho: t.amplitude.order().rho.min(p.order.rho),
        delta: t.amplitude.order().delta.max(p.order.delta),
    };
    let alphas = MultiIndex::up_to_order(common.n, (m - 1) as u32);
    match &t.amplitude {
        FsoAmplitude::Symbol(a) => {
            let mut q: Option<SymbolTable> = None;
            for alpha in &alphas {
                let term = p
                    .difference(alpha)?
                    .x_falling_derivative(alpha, -1)?
                    .restrict_box(out)?
                    .scale(C64::new(inverse_factorial(alpha), 0.0));
                q = Some(match q {
                    None => term,
                    Some(s) => s.add(&term)?,
                });
            }
            let a = a.restrict_box(out)?;
            Ok(FsoAmplitude::Compound(AmplitudeTable::from_product(&a, &q.expect("α = 0"))?.with_order(order)))
        }
        FsoAmplitude::Compound(a) => {
            let a = a.restrict_box(out)?;
            let mut acc: Option<AmplitudeTable> = None;
            for alpha in &alphas {
                let dp = AmplitudeTable::from_symbol_in_y(&p.difference(alpha)?.restrict_box(out)?)?;
                let term = a
                    .mul(&dp)?
                    .y_falling_derivative(alpha, -1)?
                    .scale(C64::new(inverse_factorial(alpha), 0.0));
                acc = Some(match acc {
                    None => term,
                    Some(s) => s.zip_with(&term, |x, y| x + y)?,
                });
            }
            Ok(FsoAmplitude::Compound(acc.expect("α = 0").with_order(order)))
        }
    }
}

/// Jets of exp(iΨ(x, x+h, ξ)) at every (ix, k): Ψ's Taylor series starts at degree 2.
fn psi_exp_jets(phase: &PhaseTable, space: &std::sync::Arc<JetSpace>) -> Vec<Jet> {
    let n = phase.dim();
    let l = phase.bx.len();
    let nx = phase.n_x();
    let tables: Vec<(usize, Vec<f64>, f64)> = space
        .monomials()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.iter().sum::<u32>() >= 2)
        .map(|(i, b)| {
            let beta = MultiIndex::new(b.clone()).expect("small");
            (i, phase.periodic_derivative(&beta), inverse_factorial(&beta))
        })
        .collect();
    let _ = n;
    (0..nx * l)
        .into_par_iter()
        .map(|idx| {
            let mut psi = Jet::zero(space);
            for (i, d, f) in &tables {
                psi.coeffs[*i] = C64::new(0.0, d[idx] * f);
            }
            psi.exp()
        })
        .collect()
}

/// Taylor coefficients ∂^β a / β! of the amplitude's first argument for |β| < M.
enum AmplitudeJets {
    Symbol(Vec<SymbolTable>),
    Compound(Vec<AmplitudeTable>),
}

fn amplitude_jets(a: &FsoAmplitude, space: &JetSpace) -> Result<AmplitudeJets> {
    let betas: Vec<MultiIndex> = space.monomials().iter().map(|b| MultiIndex::new(b.clone()).expect("small")).collect();
    Ok(match a {
        FsoAmplitude::Symbol(s) => AmplitudeJets::Symbol(
            betas
                .iter()
                .map(|b| Ok(s.x_derivative(b)?.scale(C64::new(inverse_factorial(b), 0.0))))
                .collect::<Result<_>>()?,
        ),
        FsoAmplitude::Compound(c) => AmplitudeJets::Compound(
            betas
                .iter()
                .map(|b| Ok(c.x_derivative(b)?.scale(C64::new(inverse_factorial(b), 0.0))))
                .collect::<Result<_>>()?,
        ),
    })
}

/// c = Σ_β w_β(x,ξ) A_β where A_β are the amplitude's Taylor coefficients.
fn contract(t: &FourierSeriesOp, jets: AmplitudeJets, weights: &[Vec<C64>], order: SymbolOrder) -> Result<FsoAmplitude> {
    let bx = t.bx();
    let l = bx.len();
    let nx = t.phase.n_x();
    match jets {
        AmplitudeJets::Symbol(tabs) => {
            let values: Vec<C64> = (0..nx * l)
                .into_par_iter()
                .map(|idx| {
                    let (ix, k) = (idx / l, idx % l);
                    tabs.iter().zip(&weights[idx]).map(|(tb, w)| w * tb.at(ix, k)).sum()
                })
                .collect();
            Ok(FsoAmplitude::Symbol(SymbolTable::from_values_unchecked(bx, t.grid(), order, values)))
        }
        AmplitudeJets::Compound(tabs) => {
            let values: Vec<C64> = (0..nx * nx * l)
                .into_par_iter()
                .map(|j| {
                    let (ixy, k) = (j / l, j % l);
                    let (ix, iy) = (ixy / nx, ixy % nx);
                    tabs.iter().zip(&weights[ix * l + k]).map(|(tb, w)| w * tb.at(ix, iy, k)).sum()
                })
                .collect();
            Ok(FsoAmplitude::Compound(AmplitudeTable::from_raw(bx, t.grid(), order, values)))
        }
    }
}

fn check_pt_inputs(t: &FourierSeriesOp, m: usize) -> Result<()> {
    t.check()?;
    if m == 0 {
        return Err(Error::Configuration("truncation level must be at least 1".into()));
    }
    let report = check_phase_with_order(&t.phase, 1);
    if !report.c.is_finite() {
        return Err(Error::Phase("gradient comparability constant is infinite".into()));
    }
    Ok(())
}

/// Amplitude of P∘T by the derivative-form expansion with the extension of p:
/// Σ_{|α|<M} (i^{−|α|}/α!) ∂_η^α p(x, ∇ₓφ) ∂_y^α[e^{iΨ} a(y,z,ξ)]_{y=x}.
pub fn compose_pdo_fso(p: &SymbolTable, t: &FourierSeriesOp, m: usize, kernel: &ThetaKernel) -> Result<FsoAmplitude> {
    if p.grid() != t.grid() {
        return Err(Error::Configuration("symbol and operator live on different grids".into()));
    }
    compose_pdo_fso_extended(&extend_symbol(p, kernel)?, t, m)
}

/// As [`compose_pdo_fso`] for any symbol on T^n × R^n.
pub fn compose_pdo_fso_extended(p: &EuclideanSymbol, t: &FourierSeriesOp, m: usize) -> Result<FsoAmplitude> {
    check_pt_inputs(t, m)?;
    let n = t.dim();
    let space = JetSpace::new(n, (m - 1) as u32);
    let e_jets = psi_exp_jets(&t.phase, &space);
    let l = t.bx().len();
    let grid = t.grid();
    let monos = space.monomials().to_vec();
    let weights: Result<Vec<Vec<C64>>> = (0..t.phase.n_x() * l)
        .into_par_iter()
        .map(|idx| {
            let (ix, k) = (idx / l, idx % l);
            let eta = t.phase.gradient(ix, k);
            let e = &e_jets[idx];
            let mut w = vec![C64::new(0.0, 0.0); monos.len()];
            for alpha in &monos {
                let dp = p.derivative_grid(grid, ix, eta, alpha)?;
                let ord: u32 = alpha.iter().sum();
                let c = C64::new(0.0, -1.0).powu(ord) * dp;
                for (bi, beta) in monos.iter().enumerate() {
                    if beta.iter().zip(alpha).all(|(b, a)| b <= a) {
                        let diff: Vec<u32> = alpha.iter().zip(beta).map(|(a, b)| a - b).collect();
                        w[bi] += c * e.coefficient(&diff);
                    }
                }
            }
            Ok(w)
        })
        .collect();
    let order = SymbolOrder { m: t.amplitude.order().m + p.order.m, ..t.amplitude.order() };
    contract(t, amplitude_jets(&t.amplitude, &space)?, &weights?, order)
}

/// Amplitude of P∘T by the difference-form expansion; requires lattice-valued ∇ₓφ:
/// Σ_{|α|<M} (1/α!) [△_ω^α p(x,ω)]_{ω=∇ₓφ} D_y^{(α)}[e^{iΨ} a(y,z,ξ)]_{y=x}.
pub fn compose_pdo_fso_difference_form(p: &SymbolTable, t: &FourierSeriesOp, m: usize) -> Result<FsoAmplitude> {
    check_pt_inputs(t, m)?;
    if p.grid() != t.grid() || p.dim() != t.dim() {
        return Err(Error::Configuration("symbol and operator live on different grids".into()));
    }
    let n = t.dim();
    let space = JetSpace::new(n, (m - 1) as u32);
    let e_jets = psi_exp_jets(&t.phase, &space);
    let l = t.bx().len();
    let monos = space.monomials().to_vec();
    let stirling = stirling_first(m);
    let alphas: Vec<MultiIndex> = monos.iter().map(|a| MultiIndex::new(a.clone()).expect("small")).collect();
    let weights: Result<Vec<Vec<C64>>> = (0..t.phase.n_x() * l)
        .into_par_iter()
        .map(|idx| {
            let (ix, k) = (idx / l, idx % l);
            let g = t.phase.gradient(ix, k);
            let omega: Vec<i64> = g.iter().map(|v| v.round() as i64).collect();
            if g.iter().zip(&omega).any(|(v, &o)| (v - o as f64).abs() > 1e-9) {
                return Err(Error::Precondition(format!("grad phase {g:?} is not a lattice point")));
            }
            let e = &e_jets[idx];
            let mut w = vec![C64::new(0.0, 0.0); monos.len()];
            for alpha in &alphas {
                // △_ω^α p(x, ω) by the binomial expansion.
                let mut diff = C64::new(0.0, 0.0);
                for beta in alpha.below() {
                    let q: Vec<i64> = omega.iter().zip(beta.entries()).map(|(o, &b)| o + b as i64).collect();
                    let v = p.get(ix, &q).ok_or_else(|| {
                        Error::OutOfRange(format!("difference of p at {q:?} leaves the symbol box"))
                    })?;
                    let sign = if (alpha.order() - beta.order()) % 2 == 0 { 1.0 } else { -1.0 };
                    diff += v * sign * alpha.binomial(&beta).expect("small") as f64;
                }
                let coef = diff * inverse_factorial(alpha);
                // D^{(α)} = Π_j Σ_{m_j} s(α_j, m_j) (−i∂_j)^{m_j}.
                for mm in alpha.below() {
                    let s: i64 = mm
                        .entries()
                        .iter()
                        .zip(alpha.entries())
                        .map(|(&mj, &aj)| stirling[aj as usize][mj as usize])
                        .product();
                    if s == 0 {
                        continue;
                    }
                    let fact = mm.factorial().expect("small") as f64;
                    let c = coef * C64::new(0.0, -1.0).powu(mm.order()) * (s as f64 * fact);
                    for (bi, beta) in monos.iter().enumerate() {
                        if beta.iter().zip(mm.entries()).all(|(b, a)| b <= a) {
                            let d: Vec<u32> = mm.entries().iter().zip(beta).map(|(a, b)| a - b).collect();
                            w[bi] += c * e.coefficient(&d);
                        }
                    }
                }
            }
            Ok(w)
        })
        .collect();
    let order = SymbolOrder { m: t.amplitude.order().m + p.order.m, ..t.amplitude.order() };
    contract(t, amplitude_jets(&t.amplitude, &space)?, &weights?, order)
}

/// Ψ(x,y,ξ) = φ(y,ξ) − φ(x,ξ) + (x−y)·∇ₓφ(x,ξ) on grid × grid × box.
#[derive(Clone, Debug)]
pub struct PsiCorrection {
    pub n: usize,
    pub grid: usize,
    pub bx: FrequencyBox,
    values: Vec<f64>,
    grad_y_diagonal: f64,
}

impl PsiCorrection {
    pub fn from_phase(phase: &PhaseTable) -> Result<Self> {
        let nx = phase.n_x();
        let l = phase.bx.len();
        if nx.checked_mul(nx).and_then(|v| v.checked_mul(l)).map_or(true, |v| v > MAX_AMPLITUDE_ENTRIES) {
            return Err(Error::Configuration("Psi table too large".into()));
        }
        let n = phase.dim();
        let phi: Vec<f64> = (0..nx * l).map(|i| phase.value(i / l, i % l)).collect();
        let values: Vec<f64> = (0..nx * nx * l)
            .into_par_iter()
            .map(|j| {
                let (ixy, k) = (j / l, j % l);
                let (ix, iy) = (ixy / nx, ixy % nx);
                let x = grid_point(ix, n, phase.grid);
                let y = grid_point(iy, n, phase.grid);
                let g = phase.gradient(ix, k);
                phi[iy * l + k] - phi[ix * l + k] + (0..n).map(|d| (x[d] - y[d]) * g[d]).sum::<f64>()
            })
            .collect();
        // ∇_yΨ(x,y) = ∇φ(y) − ∇φ(x).
        let mut grad_y_diagonal: f64 = 0.0;
        for ix in 0..nx {
            for k in 0..l {
                let g = phase.gradient(ix, k);
                grad_y_diagonal = grad_y_diagonal.max(g.iter().zip(g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        Ok(PsiCorrection { n, grid: phase.grid, bx: phase.bx, values, grad_y_diagonal })
    }

    pub fn at(&self, ix: usize, iy: usize, k: usize) -> f64 {
        let nx = self.grid.pow(self.n as u32);
        self.values[(ix * nx + iy) * self.bx.len() + k]
    }

    /// (max |Ψ(x,x,ξ)|, max |∇_yΨ(x,y,ξ)|_{y=x}).
    pub fn diagonal_defects(&self) -> (f64, f64) {
        let nx = self.grid.pow(self.n as u32);
        let l = self.bx.len();
        let v = (0..nx)
            .flat_map(|ix| (0..l).map(move |k| (ix, k)))
            .map(|(ix, k)| self.at(ix, ix, k).abs())
            .fold(0.0, f64::max);
        (v, self.grad_y_diagonal)
    }
}

/// sqrt(sup_ω Σ_ξ |â(ω−ξ,ξ)| · sup_ξ Σ_ω |â(ω−ξ,ξ)|) with â the x-Fourier coefficients of a.
pub fn schur_l2_bound(a: &SymbolTable) -> f64 {
    let (n, g) = (a.dim(), a.grid());
    let bx = a.bx();
    let e = bx.extent() as i64;
    let half = (g / 2) as i64;
    let side = (2 * (e + half) + 1) as usize;
    let mut rows = vec![0.0; side.pow(n as u32)];
    let mut col_sup: f64 = 0.0;
    let freqs = fft::signed_frequencies(n, g);
    for (k, p) in bx.points().enumerate() {
        let c = a.column_coefficients(k);
        let mut col = 0.0;
        for (idx, v) in c.iter().enumerate() {
            let m = v.norm();
            if m == 0.0 {
                continue;
            }
            col += m;
            let w = freqs[idx * n..(idx + 1) * n]
                .iter()
                .zip(&p)
                .fold(0usize, |acc, (&f, &pj)| acc * side + (f + pj + e + half) as usize);
            rows[w] += m;
        }
        col_sup = col_sup.max(col);
    }
    let row_sup = rows.iter().cloned().fold(0.0, f64::max);
    (row_sup * col_sup).sqrt()
}

type Matrix = Vec<Vec<C64>>;

fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let l = b.len();
    let cols = b[0].len();
    a.par_iter()
        .map(|row| {
            let mut out = vec![C64::new(0.0, 0.0); cols];
            for (j, &r) in row.iter().enumerate().take(l) {
                if r == C64::new(0.0, 0.0) {
                    continue;
                }
                for (o, bv) in out.iter_mut().zip(&b[j]) {
                    *o += r * bv;
                }
            }
            out
        })
        .collect()
}

fn mat_vec(a: &Matrix, v: &[C64]) -> Vec<C64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn normalize(v: &mut [C64]) -> f64 {
    let s = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    s
}

/// Maximum number of power-iteration steps in [`operator_norm`].
pub const POWER_ITERATION_LIMIT: usize = 500;

/// Largest singular value of A on the box, from power iteration on (A*A)^{2^s}.
///
/// The matrix of A maps box coefficients to the full grid spectrum; its Gram matrix is
/// squared `s` times (with normalisation) before iterating, which separates clustered
/// top eigenvalues.
pub fn operator_norm(op: &LinearOperatorHandle) -> Result<f64> {
    operator_norm_with(op, 8, 1e-8)
}

pub fn operator_norm_with(op: &LinearOperatorHandle, squarings: u32, tol: f64) -> Result<f64> {
    let bx = op.bx;
    let pts: Vec<Vec<i64>> = bx.points().collect();
    let cols: Result<Vec<Vec<C64>>> = pts
        .par_iter()
        .map(|p| {
            let e = GridFunction::plane_wave(bx, op.grid, p)?;
            Ok(op.apply(&e)?.spectrum().to_vec())
        })
        .collect();
    let cols = cols?;
    let l = cols.len();
    // Gram matrix G_{ij} = ⟨col_i, col_j⟩.
    let gram: Matrix = (0..l)
        .into_par_iter()
        .map(|i| (0..l).map(|j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum()).collect())
        .collect();
    let mut b = gram.clone();
    for _ in 0..squarings {
        b = mat_mul(&b, &b);
        let f = b.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if f == 0.0 {
            return Ok(0.0);
        }
        b.iter_mut().flatten().for_each(|v| *v /= f);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<C64> = (0..l).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    normalize(&mut v);
    let mut last = f64::NAN;
    for _ in 0..POWER_ITERATION_LIMIT {
        let mut w = mat_vec(&b, &v);
        if normalize(&mut w) == 0.0 {
            return Ok(0.0);
        }
        let gw = mat_vec(&gram, &w);
        let lambda: f64 = w.iter().zip(&gw).map(|(a, b)| (a.conj() * b).re).sum();
        v = w;
        if (lambda - last).abs() <= tol * lambda.abs() {
            return Ok(lambda.max(0.0).sqrt());
        }
        last = lambda;
    }
    Err(Error::IterationLimit { iterations: POWER_ITERATION_LIMIT, last: last.max(0.0).sqrt() })
}

/// L² hypotheses report for a Fourier series operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    pub periodicity_defect: f64,
    #[serde(rename = "C_lower")]
    pub c_lower: f64,
    #[serde(rename = "C_upper")]
    pub c_upper: f64,
    /// inf over x and k ≠ l of |∇ₓφ(x,k) − ∇ₓφ(x,l)| / |k − l|.
    pub graph_constant: f64,
    pub graph_condition_holds: bool,
    pub sup_tables: SupTables,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupTables {
    /// sup |∂_x^α a| for |α| ≤ 2n+1.
    pub amplitude: Vec<BoundEntry>,
    /// sup |∂_x^α △_ξ^β φ| for |β| = 1, |α| ≤ 2n+1.
    pub phase: Vec<BoundEntry>,
}

pub fn fso_l2_check(t: &FourierSeriesOp) -> Result<L2Report> {
    let n = t.dim();
    let order = 2 * n as u32 + 1;
    let phase_report = check_phase_with_order(&t.phase, order);
    let mut amplitude = Vec::new();
    for alpha in MultiIndex::up_to_order(n, order) {
        let v = match &t.amplitude {
            FsoAmplitude::Symbol(a) => a.x_derivative(&alpha)?.values().iter().map(|v| v.norm()).fold(0.0, f64::max),
            FsoAmplitude::Compound(a) => a.x_derivative(&alpha)?.max_abs(),
        };
        amplitude.push(BoundEntry { alpha: alpha.entries().to_vec(), beta: vec![0; n], value: v });
    }
    let l = t.bx().len();
    let pts: Vec<Vec<i64>> = t.bx().points().collect();
    let graph = (0..t.phase.n_x())
        .into_par_iter()
        .map(|ix| {
            let mut inf = f64::INFINITY;
            for k in 0..l {
                let gk = t.phase.gradient(ix, k);
                for q in (k + 1)..l {
                    let gq = t.phase.gradient(ix, q);
                    let num: f64 = gk.iter().zip(gq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let den: f64 = pts[k].iter().zip(&pts[q]).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>().sqrt();
                    inf = inf.min(num / den);
                }
            }
            inf
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(L2Report {
        periodicity_defect: phase_report.periodicity_defect,
        c_lower: phase_report.c_lower,
        c_upper: phase_report.c_upper,
        graph_constant: graph,
        graph_condition_holds: graph > 1e-12,
        sup_tables: SupTables { amplitude, phase: phase_report.difference_bounds },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::{apply_pdo, random_band_limited};
    use crate::symbols::build_theta_kernel;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn linear(x: &[f64], p: &[i64]) -> f64 {
        x.iter().zip(p).map(|(a, &b)| a * b as f64).sum()
    }

    #[test]
    fn phase_certificates() {
        let bx = FrequencyBox::new(2, 4, 1).unwrap();
        let r = check_phase(&PhaseTable::from_fn(bx, 16, linear).unwrap());
        assert!(r.valid && r.periodicity_defect < 1e-12);
        assert!((r.c - 1.0).abs() < 1e-12);
        let r = check_phase(&PhaseTable::from_fn(bx, 16, |x, p| linear(x, p) + 0.3 * (p[0] * p[0] + p[1] * p[1]) as f64).unwrap());
        assert!(r.valid && (r.c - 1.0).abs() < 1e-12);
        let bad = PhaseTable::from_fn(bx, 16, |x, p| linear(x, p) + 0.5 * x[0]).unwrap();
        let r = check_phase(&bad);
        assert!(!r.valid);
        assert!((r.periodicity_defect - 2.0).abs() < 1e-9);
        let t = FourierSeriesOp::new(bad, FsoAmplitude::Symbol(SymbolTable::from_fn(bx, 16, SymbolOrder::classical(0.0), |_, _| c(1.0)).unwrap())).unwrap();
        let u = GridFunction::zeros(bx, 16).unwrap();
        assert!(matches!(apply_fso(&t, &u), Err(Error::Phase(_))));
    }

    #[test]
    fn phase_with_periodic_part() {
        let bx = FrequencyBox::new(1, 6, 0).unwrap();
        let p = PhaseTable::from_fn(bx, 32, |x, p| x[0] * p[0] as f64 + 0.3 * (p[0] as f64) * x[0].sin() + 2.0 * x[0]).unwrap();
        assert!(p.is_valid());
        for ix in 0..32 {
            let x = 2.0 * PI * ix as f64 / 32.0;
            for (k, q) in bx.points().enumerate() {
                let expect = q[0] as f64 + 0.3 * q[0] as f64 * x.cos() + 2.0;
                assert!((p.gradient(ix, k)[0] - expect).abs() < 1e-12);
                let v = x * q[0] as f64 + 0.3 * (q[0] as f64) * x.sin() + 2.0 * x;
                assert!((p.exp_row(ix)[k] - C64::from_polar(1.0, v)).norm() < 1e-12);
            }
        }
        assert!((p.value_at(&[1.234], 3) - (1.234 * -3.0 + 0.3 * -3.0 * 1.234f64.sin() + 2.0 * 1.234)).abs() < 1e-11);
        let psi = PsiCorrection::from_phase(&p).unwrap();
        let (d0, d1) = psi.diagonal_defects();
        assert!(d0 < 1e-10 && d1 < 1e-10);
    }

    #[test]
    fn apply_examples() {
        let bx = FrequencyBox::new(1, 8, 0).unwrap();
        let g = 32;
        let one = FsoAmplitude::Symbol(SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |_, _| c(1.0)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_band_limited(bx, g, &mut rng).unwrap();
        let id = FourierSeriesOp::new(PhaseTable::from_fn(bx, g, linear).unwrap(), one.clone()).unwrap();
        assert!(apply_fso(&id, &u).unwrap().max_diff(&u).unwrap() < 1e-12);
        let t = 0.7;
        let tr = FourierSeriesOp::new(PhaseTable::translation(bx, g, |p| t * p[0] as f64).unwrap(), one).unwrap();
        let v = apply_fso(&tr, &u).unwrap();
        for ix in 0..g {
            let x = 2.0 * PI * ix as f64 / g as f64;
            assert!((v.samples()[ix] - u.eval(&[x + t])).norm() < 1e-12);
        }
        assert!((v.l2_norm() - u.l2_norm()).abs() < 1e-12);
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(1.0), |x, p| c(bracket_int(p)) * C64::from_polar(1.0, x[0])).unwrap();
        let pd = FourierSeriesOp::new(PhaseTable::from_fn(bx, g, linear).unwrap(), FsoAmplitude::Symbol(a.clone())).unwrap();
        assert!(apply_fso(&pd, &u).unwrap().max_diff(&apply_pdo(&a, &u).unwrap()).unwrap() < 1e-12);
        let pdc = pd.with_amplitude(FsoAmplitude::Compound(AmplitudeTable::from_symbol(&a).unwrap())).unwrap();
        assert!(apply_fso(&pdc, &u).unwrap().max_diff(&apply_pdo(&a, &u).unwrap()).unwrap() < 1e-11);
    }

    fn fso_with_quadratic_phase(bx: FrequencyBox, g: usize, t: f64, a: SymbolTable) -> FourierSeriesOp {
        let phase = PhaseTable::translation(bx, g, |p| t * (p[0] * p[0]) as f64).unwrap();
        FourierSeriesOp::new(phase, FsoAmplitude::Symbol(a)).unwrap()
    }

    #[test]
    fn fso_pdo_exact_cases() {
        let bx = FrequencyBox::new(1, 10, 3).unwrap();
        let g = bx.default_grid();
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, p| C64::from_polar(1.0 + 0.2 * x[0].cos(), 0.1 * p[0] as f64)).unwrap();
        let t = fso_with_quadratic_phase(bx, g, 0.3, a.clone());
        let small = FrequencyBox::new(1, 6, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_band_limited(small, g, &mut rng).unwrap().with_box(small).unwrap();

        // p = p(z): ξ-independent.
        let pz = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, _| c(2.0 + x[0].sin())).unwrap();
        let cz = compose_fso_pdo(&t, &pz, 1).unwrap();
        let tc = t.with_amplitude(cz).unwrap();
        let lhs = apply_fso(&tc, &u).unwrap();
        let rhs = apply_fso(&t, &apply_pdo(&pz, &u).unwrap()).unwrap();
        assert!(lhs.max_diff(&rhs).unwrap() < 1e-9);

        // p = ξ at M = 2.
        let pxi = SymbolTable::from_fn(bx, g, SymbolOrder::classical(1.0), |_, p| c(p[0] as f64)).unwrap();
        let tc = t.with_amplitude(compose_fso_pdo(&t, &pxi, 2).unwrap()).unwrap();
        let lhs = apply_fso(&tc, &u).unwrap();
        let rhs = apply_fso(&t, &apply_pdo(&pxi, &u).unwrap()).unwrap();
        assert!(lhs.max_diff(&rhs).unwrap() < 1e-9);

        // Identity FSO: the compound amplitude reduces to p.
        let wide = FrequencyBox::new(1, 10, 5).unwrap();
        let g = wide.default_grid();
        let one = SymbolTable::from_fn(wide, g, SymbolOrder::classical(0.0), |_, _| c(1.0)).unwrap();
        let id = FourierSeriesOp::new(PhaseTable::from_fn(wide, g, linear).unwrap(), FsoAmplitude::Symbol(one)).unwrap();
        let pp = SymbolTable::from_fn(wide, g, SymbolOrder::classical(1.0), |x, p| c(p[0] as f64) * (1.0 + 0.5 * x[0].cos())).unwrap();
        let FsoAmplitude::Compound(cc) = compose_fso_pdo(&id, &pp, 3).unwrap() else { panic!() };
        let red = crate::calculus::amplitude_to_symbol(&cc, 3).unwrap();
        let e = red.max_diff_core(&pp).unwrap();
        assert!(e < 1e-8, "{e}");
    }

    fn pt_case(p_fn: impl Fn(&[f64], &[i64]) -> C64 + Sync, m: usize, t: f64) -> (f64, f64) {
        let bx = FrequencyBox::new(1, 8, 0).unwrap();
        let g = 128;
        let kernel = build_theta_kernel(1, 24.0).unwrap();
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, _| C64::new(1.0 + 0.3 * x[0].cos(), 0.2 * x[0].sin())).unwrap();
        let op = fso_with_quadratic_phase(bx, g, t, a);
        let pbx = FrequencyBox::new(1, 40, 2).unwrap();
        let p = SymbolTable::from_fn(pbx, g, SymbolOrder::classical(2.0), &p_fn).unwrap();
        let cpt = compose_pdo_fso(&p, &op, m, &kernel).unwrap();
        let FsoAmplitude::Symbol(cs) = &cpt else { panic!("symbol form expected") };
        // Direct oracle: e^{-iφ} P(e^{iφ} a) for each ξ.
        let mut worst: f64 = 0.0;
        for (k, q) in bx.points().enumerate() {
            let col: Vec<C64> = (0..g).map(|ix| op.phase.exp_row(ix)[k] * match &op.amplitude { FsoAmplitude::Symbol(s) => s.at(ix, k), _ => unreachable!() }).collect();
            let f = GridFunction::from_samples(pbx, g, col).unwrap();
            let pf = apply_pdo(&p, &f).unwrap();
            for ix in 0..g {
                let v = pf.samples()[ix] * op.phase.exp_row(ix)[k].conj();
                worst = worst.max((v - cs.at(ix, k)).norm());
            }
            let _ = q;
        }
        let diff = compose_pdo_fso_difference_form(&p, &op, m).unwrap();
        let FsoAmplitude::Symbol(ds) = diff else { panic!() };
        (worst, ds.max_diff_core(cs).unwrap())
    }

    #[test]
    fn pdo_fso_exact_cases() {
        // p = 1
        let (w, d) = pt_case(|_, _| c(1.0), 1, 0.2);
        assert!(w < 1e-10 && d < 1e-10);
        // p = ξ, M = 2
        let (w, d) = pt_case(|_, p| c(p[0] as f64), 2, 0.2);
        assert!(w < 1e-8, "{w}");
        assert!(d < 1e-8, "{d}");
        // p = ξ², M = 3
        let (w, d) = pt_case(|_, p| c((p[0] * p[0]) as f64), 3, 0.2);
        assert!(w < 1e-8, "{w}");
        assert!(d < 1e-8, "{d}");
        // x-dependent p, quadratic in ξ: still exact at M = 3.
        let (w, _) = pt_case(|x, p| c((p[0] * p[0]) as f64 * (1.0 + 0.5 * x[0].sin()) + p[0] as f64), 3, 0.2);
        assert!(w < 1e-8, "{w}");
    }

    #[test]
    fn schur_examples() {
        let bx = FrequencyBox::new(1, 6, 0).unwrap();
        let g = 32;
        let e = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, _| C64::from_polar(1.0, x[0])).unwrap();
        assert!((schur_l2_bound(&e) - 1.0).abs() < 1e-12);
        let k = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |_, _| C64::new(0.0, -2.5)).unwrap();
        assert!((schur_l2_bound(&k) - 2.5).abs() < 1e-12);
        let cosx = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, _| c(2.0 + x[0].cos())).unwrap();
        assert!((schur_l2_bound(&cosx) - 3.0).abs() < 1e-12);
        let norm = operator_norm(&LinearOperatorHandle::from_symbol(&cosx)).unwrap();
        assert!(norm <= 3.0 + 1e-12 && norm > 2.9, "{norm}");
    }

    #[test]
    fn operator_norm_identity_and_scaling() {
        let bx = FrequencyBox::new(2, 3, 0).unwrap();
        let g = 16;
        let id = LinearOperatorHandle::new(bx, g, |u: &GridFunction| Ok(u.clone()));
        assert!((operator_norm(&id).unwrap() - 1.0).abs() < 1e-10);
        let d = SymbolTable::from_fn(bx, g, SymbolOrder::classical(1.0), |_, p| c(p[0] as f64 - 0.5 * p[1] as f64)).unwrap();
        let norm = operator_norm(&LinearOperatorHandle::from_symbol(&d)).unwrap();
        assert!((norm - 4.5).abs() < 1e-8);
    }

    #[test]
    fn graph_constants() {
        let bx = FrequencyBox::new(1, 6, 0).unwrap();
        let g = 32;
        let amp = FsoAmplitude::Symbol(SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |_, _| c(1.0)).unwrap());
        let lin = FourierSeriesOp::new(PhaseTable::from_fn(bx, g, linear).unwrap(), amp.clone()).unwrap();
        let r = fso_l2_check(&lin).unwrap();
        assert!((r.graph_constant - 1.0).abs() < 1e-12 && r.graph_condition_holds);
        let sch = FourierSeriesOp::new(PhaseTable::translation(bx, g, |p| 0.4 * bracket_int(p)).unwrap(), amp.clone()).unwrap();
        assert!((fso_l2_check(&sch).unwrap().graph_constant - 1.0).abs() < 1e-12);
        let flat = FourierSeriesOp::new(PhaseTable::from_fn(bx, g, |_, _| 0.0).unwrap(), amp).unwrap();
        let r = fso_l2_check(&flat).unwrap();
        assert!(r.graph_constant.abs() < 1e-12 && !r.graph_condition_holds);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["periodicity_defect", "C_lower", "C_upper", "graph_constant", "sup_tables"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
