//! Hyperbolic Cauchy problems ∂ₜu = i a(X,D)u on T^n with a = a₁(ξ) + a₀(x,ξ).
//!
//! The propagator is e^{+it a(X,D)}, so a₁(ξ) = ξ translates data: u(t,x) = f(x+t).

use crate::error::{Error, Result};
use crate::fft;
use crate::harmonic::{grid_point, periodize, EuclideanSampledFunction, GridFunction};
use crate::lattice::{FrequencyBox, LatticeFunction, MultiIndex};
use crate::quantize::apply_pdo;
use crate::symbols::{build_theta_kernel, extend_symbol, SymbolOrder, SymbolTable, ThetaKernel, DEFAULT_KERNEL_CUTOFF};
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Step-halving tolerance of the time integrator.
pub const STEP_TOLERANCE: f64 = 1e-9;
/// Finest step count per unit time before giving up.
pub const MAX_STEPS_PER_UNIT: usize = 1 << 16;
const INITIAL_STEPS_PER_UNIT: usize = 8;

#[derive(Clone, Debug)]
pub struct CauchyProblem {
    /// Real principal multiplier on a box containing f's box.
    pub a1: LatticeFunction,
    /// Order ≤ 0 perturbation on a box containing f's box.
    pub a0: SymbolTable,
    pub f: GridFunction,
    pub times: Vec<f64>,
}

impl CauchyProblem {
    pub fn new(a1: LatticeFunction, a0: SymbolTable, f: GridFunction, times: Vec<f64>) -> Result<Self> {
        if !a1.is_real(1e-12) {
            return Err(Error::Precondition("a1 must be real on the box".into()));
        }
        if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Configuration("times must start at 0 and increase strictly".into()));
        }
        let fb = f.bx();
        if a1.bx.n != fb.n || a1.bx.extent() < fb.extent() {
            return Err(Error::Configuration("a1 box must contain the data box".into()));
        }
        if a0.dim() != fb.n || a0.bx().extent() < fb.extent() || a0.grid() != f.grid() {
            return Err(Error::Configuration("a0 table must share the grid and contain the data box".into()));
        }
        Ok(CauchyProblem { a1, a0, f, times })
    }

    /// Problem with a₀ = 0.
    pub fn unperturbed(a1: LatticeFunction, f: GridFunction, times: Vec<f64>) -> Result<Self> {
        let a0 = SymbolTable::from_fn(f.bx(), f.grid(), SymbolOrder::classical(0.0), |_, _| C64::new(0.0, 0.0))?;
        Self::new(a1, a0, f, times)
    }

    fn a0_is_zero(&self) -> bool {
        self.a0.values().iter().all(|v| *v == C64::new(0.0, 0.0))
    }

    fn a1_at(&self, xi: &[i64]) -> f64 {
        self.a1.get(xi).expect("a1 box contains the data box").re
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionMethod {
    Fso,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeDiagnostics {
    pub t: f64,
    pub norm: f64,
    /// ℓ² mass of grid coefficients outside the core |ξ|∞ ≤ K.
    pub spectral_tail: f64,
}

#[derive(Clone, Debug)]
pub struct EvolvedSolution {
    pub method: EvolutionMethod,
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    pub diagnostics: Vec<TimeDiagnostics>,
    /// Accepted step count per unit time (largest over independent subproblems).
    pub steps_per_unit: usize,
}

impl EvolvedSolution {
    fn new(method: EvolutionMethod, times: &[f64], states: Vec<GridFunction>, steps_per_unit: usize) -> Self {
        let diagnostics = times
            .iter()
            .zip(&states)
            .map(|(&t, u)| TimeDiagnostics { t, norm: u.l2_norm(), spectral_tail: core_tail(u) })
            .collect();
        EvolvedSolution { method, times: times.to_vec(), states, diagnostics, steps_per_unit }
    }

    pub fn at(&self, t: f64) -> Option<&GridFunction> {
        self.times.iter().position(|&s| s == t).map(|i| &self.states[i])
    }
}

fn core_tail(u: &GridFunction) -> f64 {
    let (n, g) = (u.dim(), u.grid());
    let k = u.bx().k as i64;
    let freqs = fft::signed_frequencies(n, g);
    u.spectrum()
        .iter()
        .zip(freqs.chunks_exact(n))
        .filter(|(_, nu)| nu.iter().any(|f| f.abs() > k))
        .map(|(v, _)| v.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn rk4_solve(rhs: &(dyn Fn(f64, &[C64]) -> Vec<C64> + Sync), y0: &[C64], times: &[f64], steps_per_unit: usize) -> Vec<Vec<C64>> {
    let mut out = vec![y0.to_vec()];
    let mut y = y0.to_vec();
    let axpy = |y: &[C64], h: f64, k: &[C64]| -> Vec<C64> { y.iter().zip(k).map(|(a, b)| a + b * h).collect() };
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = ((span * steps_per_unit as f64).ceil() as usize).max(1);
        let h = span / steps as f64;
        for s in 0..steps {
            let t = w[0] + s as f64 * h;
            let k1 = rhs(t, &y);
            let k2 = rhs(t + h / 2.0, &axpy(&y, h / 2.0, &k1));
            let k3 = rhs(t + h / 2.0, &axpy(&y, h / 2.0, &k2));
            let k4 = rhs(t + h, &axpy(&y, h, &k3));
            for i in 0..y.len() {
                y[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            }
        }
        out.push(y.clone());
    }
    out
}

/// Classical RK4 with step doubling until two successive runs agree to `tol` at every output time.
pub fn integrate(
    rhs: &(dyn Fn(f64, &[C64]) -> Vec<C64> + Sync),
    y0: &[C64],
    times: &[f64],
    tol: f64,
) -> Result<(Vec<Vec<C64>>, usize)> {
    let mut steps = INITIAL_STEPS_PER_UNIT;
    let mut prev = rk4_solve(rhs, y0, times, steps);
    loop {
        steps *= 2;
        let cur = rk4_solve(rhs, y0, times, steps);
        let diff = prev
            .iter()
            .flatten()
            .zip(cur.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if diff < tol {
            return Ok((cur, steps));
        }
        if steps >= MAX_STEPS_PER_UNIT {
            return Err(Error::Accuracy(format!(
                "step halving still changes the solution by {diff:.2e} at {steps} steps per unit time"
            )));
        }
        prev = cur;
    }
}

/// Coupling entries A₀[ω][ξ] = â₀(ω−ξ, ξ) on the data box, as (row, col, value) lists per row.
fn coupling_rows(p: &CauchyProblem) -> Vec<Vec<(usize, C64)>> {
    let bx = p.f.bx();
    let (n, g) = (bx.n, p.f.grid());
    let a0 = p.a0.restrict_box(bx).expect("a0 contains the data box");
    let half = ((g - 1) / 2) as i64;
    let pts: Vec<Vec<i64>> = bx.points().collect();
    let mut rows = vec![Vec::new(); bx.len()];
    for (k, xi) in pts.iter().enumerate() {
        let c = a0.column_coefficients(k);
        for (w, omega) in pts.iter().enumerate() {
            let nu: Vec<i64> = omega.iter().zip(xi).map(|(a, b)| a - b).collect();
            if nu.iter().any(|v| v.abs() > half) {
                continue;
            }
            let idx = nu.iter().fold(0usize, |acc, &v| acc * g + fft::frequency_bin(v, g));
            let v = c[idx];
            if v != C64::new(0.0, 0.0) {
                rows[w].push((k, v));
            }
        }
    }
    let _ = n;
    rows
}

/// Spectral reference solution: exact e^{it a₁} with the a₀ coupling stepped in the interaction picture.
pub fn solve_reference(p: &CauchyProblem) -> Result<EvolvedSolution> {
    let bx = p.f.bx();
    let g = p.f.grid();
    let a1: Vec<f64> = bx.points().map(|q| p.a1_at(&q)).collect();
    let f_hat = p.f.coefficients_on(bx);
    let (states, steps) = if p.a0_is_zero() {
        (vec![f_hat.values.clone(); p.times.len()], 0)
    } else {
        let rows = coupling_rows(p);
        let rhs = |t: f64, v: &[C64]| -> Vec<C64> {
            rows.par_iter()
                .enumerate()
                .map(|(w, row)| {
                    let s: C64 = row.iter().map(|&(k, c)| c * C64::from_polar(1.0, t * (a1[k] - a1[w])) * v[k]).sum();
                    C64::new(0.0, 1.0) * s
                })
                .collect()
        };
        integrate(&rhs, &f_hat.values, &p.times, STEP_TOLERANCE)?
    };
    let mut out = Vec::with_capacity(p.times.len());
    for (i, (&t, v)) in p.times.iter().zip(states).enumerate() {
        if i == 0 {
            out.push(p.f.clone());
            continue;
        }
        let values = v.iter().zip(&a1).map(|(c, &a)| c * C64::from_polar(1.0, t * a)).collect();
        out.push(GridFunction::from_coeffs(&LatticeFunction { bx, values }, g)?);
    }
    Ok(EvolvedSolution::new(EvolutionMethod::Reference, &p.times, out, steps))
}

/// FSO parametrix with phase x·k + t a₁(k) and M transport terms, with the default θ-kernel.
pub fn solve_fso(p: &CauchyProblem, m: usize) -> Result<EvolvedSolution> {
    if m > 1 {
        let kernel = build_theta_kernel(p.f.dim(), DEFAULT_KERNEL_CUTOFF)?;
        solve_fso_with_kernel(p, m, Some(&kernel))
    } else {
        solve_fso_with_kernel(p, m, None)
    }
}

/// As [`solve_fso`]; ξ-derivatives of a₁ + a₀ come from the extension by `kernel` (needed for M > 1).
pub fn solve_fso_with_kernel(p: &CauchyProblem, m: usize, kernel: Option<&ThetaKernel>) -> Result<EvolvedSolution> {
    if !(1..=4).contains(&m) {
        return Err(Error::Configuration(format!("transport truncation M = {m} must lie in 1..=4")));
    }
    let bx = p.f.bx();
    let (n, g) = (bx.n, p.f.grid());
    let nx = g.pow(n as u32);
    let pts: Vec<Vec<i64>> = bx.points().collect();
    let a0 = p.a0.restrict_box(p.a0.bx())?;
    let a0_box = a0.bx();
    let alphas: Vec<MultiIndex> = MultiIndex::up_to_order(n, (m - 1) as u32).into_iter().filter(|a| a.order() > 0).collect();

    // c_α(x,k) = ∂_ξ^α (a₁ + a₀)(x,k) for 0 < |α| < M.
    let extensions = if alphas.is_empty() {
        None
    } else {
        let kernel = kernel.ok_or_else(|| Error::Configuration("M > 1 needs a theta kernel".into()))?;
        let a1_values: Vec<C64> = (0..nx).flat_map(|_| p.a1.values.iter().cloned()).collect();
        let a1_table = SymbolTable::from_values_unchecked(p.a1.bx, g, SymbolOrder::classical(1.0), a1_values);
        Some((extend_symbol(&a1_table, kernel)?, extend_symbol(&a0, kernel)?, p.a0_is_zero()))
    };

    let a1_k: Vec<f64> = pts.iter().map(|q| p.a1_at(q)).collect();
    let f_hat = p.f.coefficients_on(bx);
    let results: Vec<Result<(Vec<Vec<C64>>, usize)>> = pts
        .par_iter()
        .enumerate()
        .map(|(k, q)| {
            let k0 = a0_box.index(q).expect("a0 box contains the data box");
            let a0_col: Vec<C64> = (0..nx).map(|ix| a0.at(ix, k0)).collect();
            let qf: Vec<f64> = q.iter().map(|&v| v as f64).collect();
            // (α, coefficient i^{1−|α|}/α! · c_α(x)) for each α.
            let mut couplings: Vec<(MultiIndex, Vec<C64>)> = Vec::new();
            if let Some((e1, e0, a0_zero)) = &extensions {
                for alpha in &alphas {
                    // Range check; with a₀ ≡ 0 every b_j, j > 0, is driven by ∂^α b₀ = 0.
                    e1.eval_grid(g, 0, &qf)?;
                    if *a0_zero {
                        continue;
                    }
                    let d1 = e1.derivative_grid(g, 0, &qf, alpha.entries())?;
                    let scale = C64::new(0.0, 1.0).powi(1 - alpha.order() as i32) / alpha.factorial()? as f64;
                    let col: Vec<C64> = (0..nx)
                        .map(|ix| {
                            let d0 = if *a0_zero { Ok(C64::new(0.0, 0.0)) } else { e0.derivative_grid(g, ix, &qf, alpha.entries()) };
                            d0.map(|d0| (d1 + d0) * scale)
                        })
                        .collect::<Result<_>>()?;
                    couplings.push((alpha.clone(), col));
                }
            }
            let rhs = |_t: f64, y: &[C64]| -> Vec<C64> {
                let mut out = vec![C64::new(0.0, 0.0); m * nx];
                for j in 0..m {
                    for ix in 0..nx {
                        out[j * nx + ix] = C64::new(0.0, 1.0) * a0_col[ix] * y[j * nx + ix];
                    }
                }
                for (alpha, c) in &couplings {
                    let ord = alpha.order() as usize;
                    for jp in 0..m.saturating_sub(ord) {
                        let j = jp + ord;
                        let b = &y[jp * nx..(jp + 1) * nx];
                        let db = fft::apply_multiplier(b, n, g, |nu| {
                            nu.iter()
                                .zip(alpha.entries())
                                .fold(C64::new(1.0, 0.0), |acc, (&v, &a)| acc * C64::new(0.0, v as f64).powu(a))
                        });
                        for ix in 0..nx {
                            out[j * nx + ix] += c[ix] * db[ix];
                        }
                    }
                }
                out
            };
            let mut y0 = vec![C64::new(0.0, 0.0); m * nx];
            y0[..nx].iter_mut().for_each(|v| *v = C64::new(1.0, 0.0));
            let _ = k;
            integrate(&rhs, &y0, &p.times, STEP_TOLERANCE)
        })
        .collect();
    let mut amplitudes = Vec::with_capacity(pts.len());
    let mut steps = 0;
    for r in results {
        let (s, st) = r?;
        steps = steps.max(st);
        amplitudes.push(s);
    }
    let l = pts.len();
    let mut out = Vec::with_capacity(p.times.len());
    for (ti, &t) in p.times.iter().enumerate() {
        if ti == 0 {
            out.push(p.f.clone());
            continue;
        }
        let mut values = vec![C64::new(0.0, 0.0); nx * l];
        for (k, amp) in amplitudes.iter().enumerate() {
            let e = C64::from_polar(1.0, t * a1_k[k]);
            let y = &amp[ti];
            for ix in 0..nx {
                let b: C64 = (0..m).map(|j| y[j * nx + ix]).sum();
                values[ix * l + k] = e * b;
            }
        }
        let table = SymbolTable::from_values_unchecked(bx, g, SymbolOrder::classical(0.0), values);
        let u = apply_pdo(&table, &GridFunction::from_coeffs(&f_hat, g)?)?;
        out.push(u);
    }
    Ok(EvolvedSolution::new(EvolutionMethod::Fso, &p.times, out, steps))
}

/// Diagnostics of the Euclidean-to-torus embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    /// max |F_T(shift-sum Pf) − F_R f| over the box.
    pub route_defect: f64,
    /// A smoothing remainder from periodizing a₀ is dropped (its size is not computed).
    pub smoothing_remainder_dropped: bool,
}

/// Largest |a₀| outside [−π,π]^n relative to the largest inside, sampled on a 3× enlarged grid.
fn a0_support_ratio(a0: &(dyn Fn(&[f64], &[i64]) -> C64 + Sync), n: usize, grid: usize, xis: &[Vec<i64>]) -> f64 {
    let m = 3 * grid;
    let total = m.pow(n as u32);
    let (mut inside, mut outside) = (0.0f64, 0.0f64);
    for xi in xis {
        for idx in 0..total {
            let x: Vec<f64> = fft::unravel(idx, n, m).into_iter().map(|i| -3.0 * PI + 6.0 * PI * i as f64 / m as f64).collect();
            let v = a0(&x, xi).norm();
            if x.iter().all(|v| v.abs() <= PI) {
                inside = inside.max(v);
            } else {
                outside = outside.max(v);
            }
        }
    }
    if outside == 0.0 {
        0.0
    } else if inside == 0.0 {
        f64::INFINITY
    } else {
        outside / inside
    }
}

/// Toroidal problem for a compactly supported Euclidean datum f and perturbation a₀:
/// data Pf, symbol a₁|_{Z^n} + (Pa₀)|_{T^n×Z^n} with (Pa₀)(x,ξ) = Σ_m a₀(x + 2πm, ξ).
pub fn embed_and_periodize(
    f: &EuclideanSampledFunction,
    a1: LatticeFunction,
    a0: Option<&(dyn Fn(&[f64], &[i64]) -> C64 + Sync)>,
    bx: FrequencyBox,
    grid: usize,
    times: Vec<f64>,
) -> Result<(CauchyProblem, EmbeddingReport)> {
    let n = f.dim();
    if bx.n != n {
        return Err(Error::Configuration("dimension mismatch".into()));
    }
    if f.support().iter().any(|&(a, b)| a < -PI - 1e-12 || b > PI + 1e-12) {
        return Err(Error::Precondition(format!("support {:?} leaves [-pi, pi]^n", f.support())));
    }
    let per = periodize(f, bx, grid)?;
    let a0_table = match a0 {
        None => SymbolTable::from_fn(bx, grid, SymbolOrder::classical(0.0), |_, _| C64::new(0.0, 0.0))?,
        Some(a0) => {
            let mut probe: Vec<Vec<i64>> = vec![vec![0; n]];
            let e = bx.extent() as i64;
            for c in 0..(1usize << n) {
                probe.push((0..n).map(|j| if c >> j & 1 == 1 { e } else { -e }).collect());
            }
            let ratio = a0_support_ratio(a0, n, grid, &probe);
            if ratio > 1e-12 {
                return Err(Error::Precondition(format!("a0 is not supported in [-pi, pi]^n (tail ratio {ratio:.2e})")));
            }
            let shifts = 3usize.pow(n as u32);
            SymbolTable::from_fn(bx, grid, SymbolOrder::classical(0.0), |x, xi| {
                (0..shifts)
                    .map(|s| {
                        let off = fft::unravel(s, n, 3);
                        let y: Vec<f64> = x.iter().zip(&off).map(|(v, &o)| v + 2.0 * PI * (o as f64 - 1.0)).collect();
                        a0(&y, xi)
                    })
                    .sum()
            })?
        }
    };
    let report = EmbeddingReport { route_defect: per.route_defect, smoothing_remainder_dropped: a0.is_some() };
    let _ = grid_point;
    Ok((CauchyProblem::new(a1, a0_table, per.function, times)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::random_band_limited;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn narrow_datum(bx: FrequencyBox, g: usize, k: usize, seed: u64) -> GridFunction {
        let small = FrequencyBox::new(bx.n, k, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_band_limited(small, g, &mut rng).unwrap().with_box(bx).unwrap()
    }

    #[test]
    fn translation_witness() {
        let bx = FrequencyBox::new(1, 32, 0).unwrap();
        let g = bx.default_grid();
        let f = GridFunction::from_fn(bx, g, |x| c((2.0 * (x[0].cos() - 1.0)).exp())).unwrap();
        let a1 = LatticeFunction::from_fn(bx, |q| c(q[0] as f64));
        let p = CauchyProblem::unperturbed(a1, f.clone(), vec![0.0, 0.5, 1.0]).unwrap();
        for sol in [solve_reference(&p).unwrap(), solve_fso(&p, 1).unwrap()] {
            for (&t, u) in sol.times.iter().zip(&sol.states) {
                let shifted = GridFunction::from_fn(bx, g, |x| c((2.0 * ((x[0] + t).cos() - 1.0)).exp())).unwrap();
                assert!(u.max_diff(&shifted).unwrap() < 1e-10, "{:?} t={t}", sol.method);
            }
        }
    }

    #[test]
    fn schrodinger_periodicity_and_unitarity() {
        let bx = FrequencyBox::new(1, 16, 0).unwrap();
        let g = bx.default_grid();
        let f = narrow_datum(bx, g, 16, 3);
        let a1 = LatticeFunction::from_fn(bx, |q| c(-((q[0] * q[0]) as f64)));
        let p = CauchyProblem::unperturbed(a1, f.clone(), vec![0.0, 0.7, PI, 2.0 * PI]).unwrap();
        let sol = solve_reference(&p).unwrap();
        assert!(sol.states[3].max_diff(&f).unwrap() < 1e-10);
        for d in &sol.diagnostics {
            assert!((d.norm - f.l2_norm()).abs() < 1e-12);
        }
        let fso = solve_fso(&p, 1).unwrap();
        for (a, b) in fso.states.iter().zip(&sol.states) {
            assert!(a.max_diff(b).unwrap() < 1e-12);
        }
    }

    fn perturbed(eps: f64, t: f64) -> (CauchyProblem, FrequencyBox) {
        // a₁ and a₀ live on a wide box so the extension reaches the data box.
        let bx = FrequencyBox::new(1, 20, 0).unwrap();
        let g = 128;
        let wide = FrequencyBox::new(1, 20 + 28, 0).unwrap();
        let f = narrow_datum(bx, g, 6, 11);
        let a1 = LatticeFunction::from_fn(wide, |q| c(q[0] as f64));
        let a0 = SymbolTable::from_fn(wide, g, SymbolOrder::classical(0.0), |x, _| C64::from_polar(eps, x[0])).unwrap();
        (CauchyProblem::new(a1, a0, f, vec![0.0, t]).unwrap(), bx)
    }

    #[test]
    fn perturbed_family_matches_closed_form_and_improves_with_m() {
        let eps = 0.1;
        let (p, bx) = perturbed(eps, 1.0);
        let g = p.f.grid();
        let exact = {
            let f = p.f.clone();
            GridFunction::from_fn(bx, g, move |x| {
                f.eval(&[x[0] + 1.0]) * (C64::from_polar(eps, x[0]) * (C64::from_polar(1.0, 1.0) - 1.0)).exp()
            })
            .unwrap()
        };
        let reference = solve_reference(&p).unwrap();
        assert!(reference.states[1].max_diff(&exact).unwrap() < 1e-9);
        let mut last = f64::INFINITY;
        let mut first = 0.0;
        for m in 1..=3 {
            let s = solve_fso(&p, m).unwrap();
            let e = s.states[1].max_diff(&reference.states[1]).unwrap();
            assert!(e < last, "M={m}: {e} vs {last}");
            if m == 1 {
                first = e;
            }
            last = e;
        }
        assert!(last < 0.2 * first);
    }

    #[test]
    fn consistency_at_small_times() {
        let (p, bx) = perturbed(0.2, 1.0);
        let ts = [1e-2, 5e-3, 2.5e-3];
        let mut errs = Vec::new();
        for &t in &ts {
            let q = CauchyProblem::new(p.a1.clone(), p.a0.clone(), p.f.clone(), vec![0.0, t]).unwrap();
            let u = solve_fso(&q, 1).unwrap().states[1].clone();
            // f + t·i(a₁ + a₀)(X,D) f.
            let a = SymbolTable::from_fn(bx, p.f.grid(), SymbolOrder::classical(1.0), |x, xi| c(xi[0] as f64) + C64::from_polar(0.2, x[0])).unwrap();
            let af = apply_pdo(&a, &p.f).unwrap();
            let lin = p.f.add(&af.scale(C64::new(0.0, t))).unwrap();
            errs.push(u.sub(&lin).unwrap().l2_norm());
        }
        let slope = (errs[0].ln() - errs[2].ln()) / (ts[0].ln() - ts[2].ln());
        assert!(slope >= 1.9, "{slope} {errs:?}");
    }

    #[test]
    fn fso_without_perturbation_is_exact() {
        let bx = FrequencyBox::new(1, 8, 0).unwrap();
        let g = 96;
        let wide = FrequencyBox::new(1, 40, 0).unwrap();
        let a1 = LatticeFunction::from_fn(wide, |q| c(0.5 * (q[0] * q[0]) as f64 - q[0] as f64));
        let f = narrow_datum(bx, g, 8, 5);
        let p = CauchyProblem::unperturbed(a1, f, vec![0.0, 0.3, 1.0]).unwrap();
        let p = CauchyProblem::new(p.a1.clone(), SymbolTable::from_fn(wide, g, SymbolOrder::classical(0.0), |_, _| c(0.0)).unwrap(), p.f, p.times).unwrap();
        let r = solve_reference(&p).unwrap();
        let s = solve_fso(&p, 3).unwrap();
        for (a, b) in s.states.iter().zip(&r.states) {
            assert!(a.max_diff(b).unwrap() < 1e-12);
        }
        assert!(s.states[0].max_diff(&p.f).unwrap() == 0.0);
    }

    #[test]
    fn extension_range_is_checked() {
        let bx = FrequencyBox::new(1, 20, 0).unwrap();
        let g = 64;
        let f = narrow_datum(bx, g, 4, 1);
        let a1 = LatticeFunction::from_fn(bx, |q| c(q[0] as f64));
        let p = CauchyProblem::unperturbed(a1, f, vec![0.0, 1.0]).unwrap();
        assert!(matches!(solve_fso(&p, 2), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn periodization_commutes_with_translation() {
        let bx = FrequencyBox::new(1, 24, 0).unwrap();
        let g = 64;
        let t = 0.8;
        let f = EuclideanSampledFunction::gaussian(vec![0.3], 0.2, c(1.0)).unwrap();
        let a1 = LatticeFunction::from_fn(bx, |q| c(q[0] as f64));
        let (p, report) = embed_and_periodize(&f, a1, None, bx, g, vec![0.0, t]).unwrap();
        assert!(report.route_defect < 1e-9 && !report.smoothing_remainder_dropped);
        let evolved = solve_reference(&p).unwrap().states[1].clone();
        let moved = EuclideanSampledFunction::gaussian(vec![0.3 - t], 0.2, c(1.0)).unwrap();
        let direct = periodize(&moved, bx, g).unwrap().function;
        assert!(evolved.max_diff(&direct).unwrap() < 1e-9);
        // Data transform matches the Euclidean transform on the lattice.
        let ft = p.f.coefficients_on(bx);
        for (q, v) in bx.points().zip(&ft.values) {
            let e = crate::harmonic::euclidean_ft(&f, &[q[0] as f64]).unwrap();
            assert!((v - e).norm() < 1e-9);
        }
    }

    #[test]
    fn perturbation_is_periodized() {
        let bx = FrequencyBox::new(1, 12, 0).unwrap();
        let g = 128;
        let f = EuclideanSampledFunction::gaussian(vec![0.0], 0.25, c(1.0)).unwrap();
        let a1 = LatticeFunction::from_fn(bx, |q| c(q[0] as f64));
        let bump = |x: &[f64], _: &[i64]| c((-(x[0] - 0.5) * (x[0] - 0.5) / (2.0 * 0.09)).exp());
        let (p, report) = embed_and_periodize(&f, a1.clone(), Some(&bump), bx, g, vec![0.0]).unwrap();
        assert!(report.smoothing_remainder_dropped);
        for ix in 0..g {
            let x = grid_point(ix, 1, g);
            let oracle: C64 = (-4..=4).map(|m| bump(&[x[0] + 2.0 * PI * m as f64], &[0])).sum();
            assert!((p.a0.at(ix, 0) - oracle).norm() < 1e-10);
        }
        let wide = |x: &[f64], _: &[i64]| c((-x[0] * x[0] / 2.0).exp());
        assert!(matches!(embed_and_periodize(&f, a1, Some(&wide), bx, g, vec![0.0]), Err(Error::Precondition(_))));
    }
}
