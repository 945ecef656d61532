//! Toroidal quantization: applying symbols and amplitudes, extracting symbols, kernels.

use crate::error::{Error, Result};
use crate::fft;
use crate::harmonic::{grid_point, GridFunction};
use crate::lattice::{bracket_int, FrequencyBox, LatticeFunction};
use crate::symbols::{AmplitudeTable, SymbolOrder, SymbolTable, MAX_AMPLITUDE_ENTRIES};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

type ApplyFn = dyn Fn(&GridFunction) -> Result<GridFunction> + Send + Sync;

/// Black-box linear operator on grid functions over a fixed box and grid.
#[derive(Clone)]
pub struct LinearOperatorHandle {
    pub bx: FrequencyBox,
    pub grid: usize,
    rule: Arc<ApplyFn>,
}

impl std::fmt::Debug for LinearOperatorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearOperatorHandle").field("bx", &self.bx).field("grid", &self.grid).finish()
    }
}

impl LinearOperatorHandle {
    pub fn new(
        bx: FrequencyBox,
        grid: usize,
        rule: impl Fn(&GridFunction) -> Result<GridFunction> + Send + Sync + 'static,
    ) -> Self {
        LinearOperatorHandle { bx, grid, rule: Arc::new(rule) }
    }

    /// Operator of a tabulated symbol.
    pub fn from_symbol(a: &SymbolTable) -> Self {
        let a = a.clone();
        LinearOperatorHandle::new(a.bx(), a.grid(), move |u| apply_pdo(&a, u))
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != self.grid || u.dim() != self.bx.n {
            return Err(Error::Configuration("input grid does not match the operator".into()));
        }
        (self.rule)(u)
    }

    /// Largest relative defect |A(αu+βv) − αAu − βAv| over random band-limited pairs.
    pub fn linearity_defect(&self, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let u = random_band_limited(self.bx, self.grid, &mut rng)?;
            let v = random_band_limited(self.bx, self.grid, &mut rng)?;
            let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let lhs = self.apply(&u.scale(a).add(&v.scale(b))?)?;
            let rhs = self.apply(&u)?.scale(a).add(&self.apply(&v)?.scale(b))?;
            let scale = lhs.l2_norm().max(rhs.l2_norm()).max(1e-300);
            worst = worst.max(lhs.sub(&rhs)?.l2_norm() / scale);
        }
        Ok(worst)
    }

    /// Fails unless the linearity defect on random pairs stays below 1e-10.
    pub fn check_linearity(&self, pairs: usize, seed: u64) -> Result<()> {
        let d = self.linearity_defect(pairs, seed)?;
        if d > 1e-10 {
            return Err(Error::Precondition(format!("operator is not linear (defect {d:.2e})")));
        }
        Ok(())
    }
}

/// Random function with independent uniform complex coefficients on the box.
pub fn random_band_limited(bx: FrequencyBox, grid: usize, rng: &mut impl Rng) -> Result<GridFunction> {
    let c = LatticeFunction::from_fn(bx, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    GridFunction::from_coeffs(&c, grid)
}

type SymbolTerm = (Vec<i64>, [C64; 3], Vec<f64>);

fn random_symbol_terms(n: usize, band: usize, rng: &mut impl Rng) -> Result<Vec<SymbolTerm>> {
    let modes = FrequencyBox::new(n, band.max(1), 0)?;
    let mut unif = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Ok(modes
        .points()
        .filter(|nu| nu.iter().all(|v| v.unsigned_abs() as usize <= band))
        .map(|nu| {
            let c = [unif(), unif(), unif()];
            let w: Vec<f64> = (0..n).map(|_| unif().re).collect();
            let len = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            (nu, c, w.into_iter().map(|v| v / len).collect())
        })
        .collect())
}

/// Random order-0 symbol Σ_{|ν|∞ ≤ band} e^{iν·x}(c₀ + c₁ w·ξ/⟨ξ⟩ + c₂/⟨ξ⟩)/(1 + |ν|²)
/// with uniform complex c_j and a random unit vector w per mode.
pub fn random_band_limited_symbol(bx: FrequencyBox, grid: usize, band: usize, rng: &mut impl Rng) -> Result<SymbolTable> {
    let n = bx.n;
    let terms = random_symbol_terms(n, band, rng)?;
    // a(x,ξ) = A₀(x) + Σ_j A_j(x) ξ_j/⟨ξ⟩ + A_{n+1}(x)/⟨ξ⟩ with trigonometric A's.
    let nx = grid.pow(n as u32);
    let parts: Vec<Vec<C64>> = (0..nx)
        .into_par_iter()
        .map(|ix| {
            let x = grid_point(ix, n, grid);
            let mut acc = vec![C64::new(0.0, 0.0); n + 2];
            for (nu, c, w) in &terms {
                let phase: f64 = nu.iter().zip(&x).map(|(&v, y)| v as f64 * y).sum();
                let damp = 1.0 + nu.iter().map(|&v| (v * v) as f64).sum::<f64>();
                let e = C64::from_polar(1.0 / damp, phase);
                acc[0] += e * c[0];
                for j in 0..n {
                    acc[1 + j] += e * c[1] * w[j];
                }
                acc[n + 1] += e * c[2];
            }
            acc
        })
        .collect();
    let pts: Vec<(Vec<f64>, f64)> = bx
        .points()
        .map(|p| {
            let br = bracket_int(&p);
            (p.iter().map(|&v| v as f64 / br).collect(), 1.0 / br)
        })
        .collect();
    let mut values = vec![C64::new(0.0, 0.0); nx * pts.len()];
    values.par_chunks_mut(pts.len()).zip(&parts).for_each(|(row, acc)| {
        for (v, (dir, inv)) in row.iter_mut().zip(&pts) {
            *v = acc[0] + dir.iter().zip(&acc[1..=n]).map(|(d, a)| a * d).sum::<C64>() + acc[n + 1] * inv;
        }
    });
    if 3 * band <= grid {
        // Rows are trigonometric polynomials of degree ≤ band: nothing lands in the tail bins.
        return Ok(SymbolTable::from_values_unchecked(bx, grid, SymbolOrder::classical(0.0), values));
    }
    SymbolTable::from_values(bx, grid, SymbolOrder::classical(0.0), values)
}

/// Coefficients of u on a's box and the ℓ² mass of u's spectrum outside it.
pub(crate) fn input_coefficients(a_box: FrequencyBox, u: &GridFunction) -> (LatticeFunction, f64) {
    let c = u.coefficients_on(a_box);
    let inside: f64 = c.values.iter().map(|v| v.norm_sqr()).sum();
    let total: f64 = u.spectrum().iter().map(|v| v.norm_sqr()).sum();
    let dropped = if total - inside <= 1e-28 * total.max(1e-300) {
        0.0
    } else {
        let bins = crate::harmonic::box_bins(&a_box, u.grid());
        let mut mask = vec![false; u.spectrum().len()];
        for b in bins {
            mask[b] = true;
        }
        u.spectrum()
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .map(|(v, _)| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    (c, dropped)
}

/// (Op(a)u)(x) = Σ_ξ e^{ix·ξ} a(x,ξ) û(ξ), summed directly at every grid point.
///
/// Coefficients of u outside a's box are dropped; their ℓ² mass is stored in
/// `discarded` on the result.
pub fn apply_pdo(a: &SymbolTable, u: &GridFunction) -> Result<GridFunction> {
    let (n, g) = (a.dim(), a.grid());
    let roots = fft::unit_roots(g);
    let pts: Vec<Vec<i64>> = a.bx().points().collect();
    apply_symbol_rows(a, u, |ix| {
        let m = fft::unravel(ix, n, g);
        pts.iter().map(|p| roots[fft::phase_index(&m, p, g)]).collect()
    })
}

/// x ↦ Σ_ξ E(x,ξ) a(x,ξ) û(ξ) where `phase_row(ix)` lists E(x_ix, ξ) in box order.
pub(crate) fn apply_symbol_rows(
    a: &SymbolTable,
    u: &GridFunction,
    phase_row: impl Fn(usize) -> Vec<C64> + Sync,
) -> Result<GridFunction> {
    if a.grid() != u.grid() || a.dim() != u.dim() {
        return Err(Error::Configuration(format!(
            "symbol (n = {}, N = {}) and function (n = {}, N = {}) live on different grids",
            a.dim(),
            a.grid(),
            u.dim(),
            u.grid()
        )));
    }
    if u.bx().extent() > a.bx().extent() {
        return Err(Error::Configuration(format!(
            "function box extent {} exceeds symbol box extent {}",
            u.bx().extent(),
            a.bx().extent()
        )));
    }
    let (c, dropped) = input_coefficients(a.bx(), u);
    let active: Vec<(usize, C64)> = c
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != C64::new(0.0, 0.0))
        .map(|(k, v)| (k, *v))
        .collect();
    let samples: Vec<C64> = (0..a.n_x())
        .into_par_iter()
        .map(|ix| {
            let e = phase_row(ix);
            active.iter().map(|&(k, v)| e[k] * a.at(ix, k) * v).sum()
        })
        .collect();
    let mut out = GridFunction::from_samples(u.bx(), a.grid(), samples)?;
    out.discarded = dropped;
    Ok(out)
}

/// σ_A(x,ξ) = e^{−ix·ξ}(A e_ξ)(x) on the box.
pub fn extract_symbol(op: &LinearOperatorHandle, bx: FrequencyBox, grid: usize) -> Result<SymbolTable> {
    if bx.n != op.bx.n || grid != op.grid {
        return Err(Error::Configuration("extraction box or grid differs from the operator".into()));
    }
    let roots = fft::unit_roots(grid);
    let n = bx.n;
    let pts: Vec<Vec<i64>> = bx.points().collect();
    let cols: Result<Vec<Vec<C64>>> = pts
        .par_iter()
        .map(|p| {
            let e = GridFunction::plane_wave(bx, grid, p)?;
            let ae = op.apply(&e)?;
            Ok(ae
                .samples()
                .iter()
                .enumerate()
                .map(|(ix, v)| {
                    let m = fft::unravel(ix, n, grid);
                    v * roots[fft::phase_index(&m, p, grid)].conj()
                })
                .collect())
        })
        .collect();
    Ok(SymbolTable::from_columns(bx, grid, SymbolOrder::classical(0.0), cols?))
}

/// (Op(a)u)(x) = Σ_ξ ∫ e^{i(x−y)·ξ} a(x,y,ξ) u(y) đy with the y-integral as the grid sum.
pub fn apply_amplitude(a: &AmplitudeTable, u: &GridFunction) -> Result<GridFunction> {
    let (n, g) = (a.dim(), a.grid());
    let roots = fft::unit_roots(g);
    let pts: Vec<Vec<i64>> = a.bx().points().collect();
    apply_amplitude_rows(a, u, |ix| {
        let m = fft::unravel(ix, n, g);
        pts.iter().map(|p| roots[fft::phase_index(&m, p, g)]).collect()
    })
}

/// x ↦ Σ_ξ E(x,ξ) ∫ e^{−iy·ξ} a(x,y,ξ) u(y) đy with `phase_row(ix)` = E(x_ix, ·).
pub(crate) fn apply_amplitude_rows(
    a: &AmplitudeTable,
    u: &GridFunction,
    phase_row: impl Fn(usize) -> Vec<C64> + Sync,
) -> Result<GridFunction> {
    if a.grid() != u.grid() || a.dim() != u.dim() {
        return Err(Error::Configuration("amplitude and function live on different grids".into()));
    }
    let (n, g) = (a.dim(), a.grid());
    let nx = a.n_x();
    let roots = fft::unit_roots(g);
    let pts: Vec<Vec<i64>> = a.bx().points().collect();
    let grid_ix: Vec<Vec<usize>> = (0..nx).map(|i| fft::unravel(i, n, g)).collect();
    // e^{−iy·ξ} u(y), one row per ξ.
    let weighted: Vec<Vec<C64>> = pts
        .iter()
        .map(|p| {
            (0..nx)
                .map(|iy| roots[fft::phase_index(&grid_ix[iy], p, g)].conj() * u.samples()[iy])
                .collect()
        })
        .collect();
    let scale = 1.0 / nx as f64;
    let samples: Vec<C64> = (0..nx)
        .into_par_iter()
        .map(|ix| {
            let e = phase_row(ix);
            let mut acc = C64::new(0.0, 0.0);
            for (k, w) in weighted.iter().enumerate() {
                let inner: C64 = (0..nx).map(|iy| a.at(ix, iy, k) * w[iy]).sum();
                acc += e[k] * inner;
            }
            acc * scale
        })
        .collect();
    GridFunction::from_samples(u.bx(), g, samples)
}

/// Kernel K_A(x,y) on grid × grid together with k_A(x,v), K_A(x,y) = k_A(x, x−y).
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub n: usize,
    pub grid: usize,
    /// big[ix·N^n + iy] = K_A(x, y).
    big: Vec<C64>,
    /// conv[ix·N^n + iv] = k_A(x, v).
    conv: Vec<C64>,
}

impl KernelTable {
    pub fn n_x(&self) -> usize {
        self.grid.pow(self.n as u32)
    }

    pub fn kernel(&self, ix: usize, iy: usize) -> C64 {
        self.big[ix * self.n_x() + iy]
    }

    pub fn convolution_kernel(&self, ix: usize, iv: usize) -> C64 {
        self.conv[ix * self.n_x() + iv]
    }

    /// max |K_A(x,y) − k_A(x, x−y)| over the grid.
    pub fn consistency_defect(&self) -> f64 {
        let nx = self.n_x();
        let g = self.grid;
        (0..nx)
            .into_par_iter()
            .map(|ix| {
                let mx = fft::unravel(ix, self.n, g);
                (0..nx)
                    .map(|iy| {
                        let my = fft::unravel(iy, self.n, g);
                        let mv: Vec<usize> = mx.iter().zip(&my).map(|(&a, &b)| (a + g - b) % g).collect();
                        (self.kernel(ix, iy) - self.convolution_kernel(ix, fft::ravel(&mv, g))).norm()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// x ↦ ∫ K_A(x,y) u(y) đy by the grid rule.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != self.grid || u.dim() != self.n {
            return Err(Error::Configuration("kernel and function live on different grids".into()));
        }
        let nx = self.n_x();
        let s = u.samples();
        let samples: Vec<C64> = (0..nx)
            .into_par_iter()
            .map(|ix| (0..nx).map(|iy| self.kernel(ix, iy) * s[iy]).sum::<C64>() / nx as f64)
            .collect();
        GridFunction::from_samples(u.bx(), self.grid, samples)
    }
}

/// Kernel of Op(a): k_A(x,·) is the inverse transform of ξ ↦ a(x,ξ).
pub fn kernel_of(a: &SymbolTable) -> Result<KernelTable> {
    let (n, g) = (a.dim(), a.grid());
    let nx = a.n_x();
    if nx.checked_mul(nx).map_or(true, |t| t > MAX_AMPLITUDE_ENTRIES) {
        return Err(Error::Configuration(format!("kernel table {nx}^2 exceeds {MAX_AMPLITUDE_ENTRIES} entries")));
    }
    let bins = crate::harmonic::box_bins(&a.bx(), g);
    let conv: Vec<C64> = (0..nx)
        .into_par_iter()
        .flat_map_iter(|ix| {
            let mut spec = vec![C64::new(0.0, 0.0); nx];
            for (k, &b) in bins.iter().enumerate() {
                spec[b] = a.at(ix, k);
            }
            fft::synthesize(&spec, n, g)
        })
        .collect();
    let roots = fft::unit_roots(g);
    let pts: Vec<Vec<i64>> = a.bx().points().collect();
    let big: Vec<C64> = (0..nx * nx)
        .into_par_iter()
        .map(|j| {
            let (ix, iy) = (j / nx, j % nx);
            let mx = fft::unravel(ix, n, g);
            let my = fft::unravel(iy, n, g);
            pts.iter()
                .enumerate()
                .map(|(k, p)| {
                    roots[fft::phase_index(&mx, p, g)] * roots[fft::phase_index(&my, p, g)].conj() * a.at(ix, k)
                })
                .sum()
        })
        .collect();
    Ok(KernelTable { n, grid: g, big, conv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{bracket_int, MultiIndex};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn quantizes_derivative_and_multiplication() {
        let bx = FrequencyBox::new(1, 8, 0).unwrap();
        let a = SymbolTable::from_fn(bx, 32, SymbolOrder::classical(1.0), |_, p| c(p[0] as f64)).unwrap();
        let u = GridFunction::plane_wave(bx, 32, &[3]).unwrap();
        let v = apply_pdo(&a, &u).unwrap();
        assert!(v.max_diff(&u.scale(c(3.0))).unwrap() < 1e-12);

        let m = SymbolTable::from_fn(bx, 32, SymbolOrder::classical(0.0), |x, _| C64::from_polar(1.0, x[0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_band_limited(bx, 32, &mut rng).unwrap();
        let v = apply_pdo(&m, &u).unwrap();
        let w = u.map_samples(|x, s| s * C64::from_polar(1.0, x[0]));
        assert!(v.max_diff(&w).unwrap() < 1e-12);
    }

    #[test]
    fn bessel_symbol_matches_spectral_laplacian() {
        let bx = FrequencyBox::new(2, 6, 0).unwrap();
        let g = bx.default_grid();
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(2.0), |_, p| c(bracket_int(p).powi(2))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_band_limited(bx, g, &mut rng).unwrap();
        let v = apply_pdo(&a, &u).unwrap();
        let lap = (0..2)
            .map(|j| u.falling_derivative(&MultiIndex::unit(2, j).plus(&MultiIndex::unit(2, j)).unwrap(), 1).unwrap())
            .collect::<Vec<_>>();
        // D^{(2)} = D² − D, so Σ_j D_j² = D^{(2)}_j + D_j.
        let d1: Vec<_> = (0..2).map(|j| u.falling_derivative(&MultiIndex::unit(2, j), 1).unwrap()).collect();
        let mut expect = u.clone();
        for j in 0..2 {
            expect = expect.add(&lap[j]).unwrap().add(&d1[j]).unwrap();
        }
        assert!(v.max_diff(&expect).unwrap() < 1e-10);
    }

    #[test]
    fn defining_property_on_plane_waves() {
        let bx = FrequencyBox::new(2, 4, 1).unwrap();
        let g = 16;
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(1.0), |x, p| {
            c(bracket_int(p)) * (2.0 + x[0].cos() * x[1].sin()) + C64::new(0.0, p[1] as f64 * x[0].sin())
        })
        .unwrap();
        for (k, p) in bx.points().enumerate() {
            let e = GridFunction::plane_wave(bx, g, &p).unwrap();
            let v = apply_pdo(&a, &e).unwrap();
            for ix in 0..a.n_x() {
                let x = a.x_point(ix);
                let expect = C64::from_polar(1.0, x[0] * p[0] as f64 + x[1] * p[1] as f64) * a.at(ix, k);
                assert!((v.samples()[ix] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn extraction_roundtrip() {
        let bx = FrequencyBox::new(1, 10, 2).unwrap();
        let g = bx.default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<Vec<C64>> = (0..bx.len())
            .map(|_| (0..5).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect();
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, p| {
            let k = bx.index(p).unwrap();
            (0..5).map(|w| coeffs[k][w] * C64::from_polar(1.0, (w as f64 - 2.0) * x[0])).sum()
        })
        .unwrap();
        let op = LinearOperatorHandle::from_symbol(&a);
        op.check_linearity(4, 9).unwrap();
        let b = extract_symbol(&op, bx, g).unwrap();
        assert!(b.max_diff_core(&a).unwrap() < 1e-10);
        assert!(b.sub(&a).unwrap().values().iter().all(|v| v.norm() < 1e-10));
        let u = random_band_limited(bx, g, &mut rng).unwrap();
        let v = apply_pdo(&b, &u).unwrap();
        assert!(v.max_diff(&op.apply(&u).unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn extraction_examples() {
        let bx = FrequencyBox::new(1, 6, 0).unwrap();
        let g = 32;
        let mult = LinearOperatorHandle::new(bx, g, |u: &GridFunction| Ok(u.map_samples(|x, s| s * C64::from_polar(1.0, x[0]))));
        let s = extract_symbol(&mult, bx, g).unwrap();
        let d = LinearOperatorHandle::new(bx, g, |u: &GridFunction| u.falling_derivative(&MultiIndex::unit(1, 0), 1));
        let t = extract_symbol(&d, bx, g).unwrap();
        for ix in 0..g {
            let x = s.x_point(ix);
            for (k, p) in bx.points().enumerate() {
                assert!((s.at(ix, k) - C64::from_polar(1.0, x[0])).norm() < 1e-12);
                assert!((t.at(ix, k) - c(p[0] as f64)).norm() < 1e-12);
            }
        }
        let nonlinear = LinearOperatorHandle::new(bx, g, |u: &GridFunction| Ok(u.map_samples(|_, s| s * s)));
        assert!(nonlinear.check_linearity(2, 0).is_err());
    }

    #[test]
    fn amplitude_operator_paths() {
        let bx = FrequencyBox::new(1, 6, 1).unwrap();
        let g = 32;
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(1.0), |x, p| {
            c(bracket_int(p)) * C64::from_polar(1.0 + 0.3 * x[0].sin(), x[0])
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_band_limited(bx, g, &mut rng).unwrap();
        let direct = apply_pdo(&a, &u).unwrap();
        let amp = apply_amplitude(&AmplitudeTable::from_symbol(&a).unwrap(), &u).unwrap();
        let kern = kernel_of(&a).unwrap();
        assert!(kern.consistency_defect() < 1e-10);
        let via_kernel = kern.apply(&u).unwrap();
        assert!(direct.max_diff(&amp).unwrap() < 1e-9);
        assert!(direct.max_diff(&via_kernel).unwrap() < 1e-9);
        assert!(amp.max_diff(&via_kernel).unwrap() < 1e-9);

        // a = b(y): multiplication by b.
        let b = |y: f64| C64::new(2.0 + y.cos(), 0.5 * y.sin());
        let ay = AmplitudeTable::from_fn(bx, g, SymbolOrder::classical(0.0), |_, y, _| b(y[0])).unwrap();
        let small = FrequencyBox::new(1, 4, 0).unwrap();
        let u_small = random_band_limited(small, g, &mut rng).unwrap().with_box(bx).unwrap();
        let v = apply_amplitude(&ay, &u_small).unwrap();
        let w = u_small.map_samples(|x, s| s * b(x[0]));
        assert!(v.max_diff(&w).unwrap() < 1e-10);
    }

    #[test]
    fn amplitude_index_shift() {
        // a(x,y,ξ) = e^{i(y−x)}: the ξ-sum picks the coefficient at ξ₀ + 1.
        let bx = FrequencyBox::new(1, 5, 0).unwrap();
        let g = 16;
        let a = AmplitudeTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, y, _| C64::from_polar(1.0, y[0] - x[0])).unwrap();
        for xi0 in -5i64..=5 {
            let u = GridFunction::plane_wave(bx, g, &[xi0]).unwrap();
            let v = apply_amplitude(&a, &u).unwrap();
            let in_box = bx.contains(&[xi0 + 1]);
            for ix in 0..g {
                let x = 2.0 * std::f64::consts::PI * ix as f64 / g as f64;
                // Direct double sum.
                let mut direct = C64::new(0.0, 0.0);
                for xi in -5i64..=5 {
                    for iy in 0..g {
                        let y = 2.0 * std::f64::consts::PI * iy as f64 / g as f64;
                        direct += C64::from_polar(1.0, (x - y) * xi as f64 + y - x) * C64::from_polar(1.0, xi0 as f64 * y);
                    }
                }
                direct /= g as f64;
                assert!((v.samples()[ix] - direct).norm() < 1e-10);
                let expect = if in_box { C64::from_polar(1.0, xi0 as f64 * x) } else { c(0.0) };
                assert!((v.samples()[ix] - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let bx = FrequencyBox::new(1, 3, 0).unwrap();
        let g = 16;
        let one = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |_, _| c(1.0)).unwrap();
        let ex = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, _| C64::from_polar(1.0, x[0])).unwrap();
        let k1 = kernel_of(&one).unwrap();
        let k2 = kernel_of(&ex).unwrap();
        for ix in 0..g {
            let x = 2.0 * std::f64::consts::PI * ix as f64 / g as f64;
            for iv in 0..g {
                let v = 2.0 * std::f64::consts::PI * iv as f64 / g as f64;
                let dirichlet: C64 = (-3i64..=3).map(|k| C64::from_polar(1.0, k as f64 * v)).sum();
                assert!((k1.convolution_kernel(ix, iv) - dirichlet).norm() < 1e-12);
                assert!((k2.convolution_kernel(ix, iv) - dirichlet * C64::from_polar(1.0, x)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn input_outside_symbol_box_is_reported() {
        let bx = FrequencyBox::new(1, 4, 0).unwrap();
        let g = 32;
        let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |_, _| c(1.0)).unwrap();
        let u = GridFunction::from_fn(bx, g, |x| C64::from_polar(1.0, 7.0 * x[0]) + c(1.0)).unwrap();
        let v = apply_pdo(&a, &u).unwrap();
        assert!((v.discarded - 1.0).abs() < 1e-12);
        let big = GridFunction::zeros(FrequencyBox::new(1, 6, 0).unwrap(), g).unwrap();
        assert!(matches!(apply_pdo(&a, &big), Err(Error::Configuration(_))));
        let other = GridFunction::zeros(bx, 16).unwrap();
        assert!(matches!(apply_pdo(&a, &other), Err(Error::Configuration(_))));
    }

    #[test]
    fn random_symbol_matches_mode_sum() {
        for n in [1, 2] {
            let bx = FrequencyBox::new(n, 5, 0).unwrap();
            let g = 16;
            let a = random_band_limited_symbol(bx, g, 2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let terms = random_symbol_terms(n, 2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            assert_eq!(terms.len(), 5usize.pow(n as u32));
            for ix in (0..a.n_x()).step_by(7) {
                let x = a.x_point(ix);
                for (k, p) in bx.points().enumerate() {
                    let br = bracket_int(&p);
                    let direct: C64 = terms
                        .iter()
                        .map(|(nu, c, w)| {
                            let phase: f64 = nu.iter().zip(&x).map(|(&v, y)| v as f64 * y).sum();
                            let wp: f64 = w.iter().zip(&p).map(|(a, &b)| a * b as f64).sum();
                            let damp = 1.0 + nu.iter().map(|&v| (v * v) as f64).sum::<f64>();
                            C64::from_polar(1.0, phase) * (c[0] + c[1] * (wp / br) + c[2] / br) / damp
                        })
                        .sum();
                    assert!((a.at(ix, k) - direct).norm() < 1e-14);
                }
            }
        }
    }
}
