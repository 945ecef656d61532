//! Periodic grid functions, toroidal and Euclidean Fourier transforms, periodization.

use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::{bracket_int, falling_factorial_f64, FrequencyBox, LatticeFunction, MultiIndex};
use crate::C64;
use std::f64::consts::PI;
use std::sync::Arc;

const TWO_PI: f64 = 2.0 * PI;

/// Periodic function on T^n sampled on a uniform N^n grid, x_j = 2π i_j / N.
///
/// Samples are the primary data. The full grid spectrum is kept alongside them; the
/// box is the nominal frequency window used by [`GridFunction::toroidal_ft`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    bx: FrequencyBox,
    grid: usize,
    samples: Vec<C64>,
    spectrum: Vec<C64>,
    /// Spectral mass dropped by the operation that produced this function.
    pub discarded: f64,
}

impl GridFunction {
    pub fn from_samples(bx: FrequencyBox, grid: usize, samples: Vec<C64>) -> Result<Self> {
        check_grid(&bx, grid)?;
        if samples.len() != grid.pow(bx.n as u32) {
            return Err(Error::Configuration(format!(
                "expected {} samples, got {}",
                grid.pow(bx.n as u32),
                samples.len()
            )));
        }
        let spectrum = fft::coefficients(&samples, bx.n, grid);
        Ok(GridFunction { bx, grid, samples, spectrum, discarded: 0.0 })
    }

    pub fn from_fn(bx: FrequencyBox, grid: usize, f: impl Fn(&[f64]) -> C64) -> Result<Self> {
        check_grid(&bx, grid)?;
        let samples = (0..grid.pow(bx.n as u32))
            .map(|i| f(&grid_point(i, bx.n, grid)))
            .collect();
        Self::from_samples(bx, grid, samples)
    }

    /// Builds x ↦ Σ_ξ e^{ix·ξ} c(ξ) from box coefficients.
    pub fn from_coeffs(coeffs: &LatticeFunction, grid: usize) -> Result<Self> {
        let bx = coeffs.bx;
        check_grid(&bx, grid)?;
        let mut spectrum = vec![C64::new(0.0, 0.0); grid.pow(bx.n as u32)];
        for (i, bin) in box_bins(&bx, grid).into_iter().enumerate() {
            spectrum[bin] = coeffs.values[i];
        }
        let samples = fft::synthesize(&spectrum, bx.n, grid);
        Ok(GridFunction { bx, grid, samples, spectrum, discarded: 0.0 })
    }

    pub fn zeros(bx: FrequencyBox, grid: usize) -> Result<Self> {
        Self::from_samples(bx, grid, vec![C64::new(0.0, 0.0); grid.pow(bx.n as u32)])
    }

    /// Plane wave e_ξ(x) = e^{ix·ξ}.
    pub fn plane_wave(bx: FrequencyBox, grid: usize, xi: &[i64]) -> Result<Self> {
        let mut c = LatticeFunction::zeros(bx);
        c.set(xi, C64::new(1.0, 0.0))?;
        Self::from_coeffs(&c, grid)
    }

    pub fn bx(&self) -> FrequencyBox {
        self.bx
    }

    pub fn dim(&self) -> usize {
        self.bx.n
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn grid_point(&self, idx: usize) -> Vec<f64> {
        grid_point(idx, self.bx.n, self.grid)
    }

    /// Full grid spectrum in FFT bin order.
    pub(crate) fn spectrum(&self) -> &[C64] {
        &self.spectrum
    }

    /// Coefficient at a frequency representable on the grid (|ν_j| < N/2).
    pub fn coefficient(&self, nu: &[i64]) -> C64 {
        let ix: Vec<usize> = nu.iter().map(|&v| fft::frequency_bin(v, self.grid)).collect();
        self.spectrum[fft::ravel(&ix, self.grid)]
    }

    /// û(ξ) = ∫ e^{-ix·ξ} u(x) đx on the box.
    pub fn toroidal_ft(&self) -> LatticeFunction {
        self.coefficients_on(self.bx)
    }

    pub fn coefficients_on(&self, bx: FrequencyBox) -> LatticeFunction {
        let values = box_bins(&bx, self.grid)
            .into_iter()
            .map(|b| self.spectrum[b])
            .collect();
        LatticeFunction { bx, values }
    }

    /// ℓ² mass of grid coefficients outside the box.
    pub fn mass_outside_box(&self) -> f64 {
        let mut inside = vec![false; self.spectrum.len()];
        for b in box_bins(&self.bx, self.grid) {
            inside[b] = true;
        }
        self.spectrum
            .iter()
            .zip(&inside)
            .filter(|(_, &i)| !i)
            .map(|(c, _)| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Truncates the spectrum to the box and records the removed mass.
    pub fn project(&self) -> GridFunction {
        let removed = self.mass_outside_box();
        let mut out = GridFunction::from_coeffs(&self.toroidal_ft(), self.grid)
            .expect("grid already validated");
        out.discarded = removed;
        out
    }

    pub fn with_box(&self, bx: FrequencyBox) -> Result<GridFunction> {
        check_grid(&bx, self.grid)?;
        let mut out = self.clone();
        out.bx = bx;
        Ok(out)
    }

    /// Trigonometric interpolation at an arbitrary point.
    pub fn eval(&self, x: &[f64]) -> C64 {
        let n = self.bx.n;
        let mut acc = C64::new(0.0, 0.0);
        let freqs = fft::signed_frequencies(n, self.grid);
        for (c, nu) in self.spectrum.iter().zip(freqs.chunks_exact(n)) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let phase: f64 = (0..n).map(|j| x[j] * nu[j] as f64).sum();
            acc += c * C64::from_polar(1.0, phase);
        }
        acc
    }

    /// L² norm with respect to đx.
    pub fn l2_norm(&self) -> f64 {
        (self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// ⟨u, v⟩ = ∫ u conj(v) đx.
    pub fn inner(&self, other: &GridFunction) -> Result<C64> {
        self.check_compatible(other)?;
        let s: C64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a * b.conj()).sum();
        Ok(s / self.samples.len() as f64)
    }

    /// (Σ_ξ ⟨ξ⟩^{2s} |û(ξ)|²)^{1/2} over all grid frequencies.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let n = self.bx.n;
        let mut acc = 0.0;
        let freqs = fft::signed_frequencies(n, self.grid);
        for (c, nu) in self.spectrum.iter().zip(freqs.chunks_exact(n)) {
            acc += bracket_int(nu).powf(2.0 * s) * c.norm_sqr();
        }
        acc.sqrt()
    }

    /// Fourier multiplier (sign·ξ)^{(α)}; sign = −1 realizes (−D)^{(α)}.
    pub fn falling_derivative(&self, alpha: &MultiIndex, sign: i32) -> Result<GridFunction> {
        if alpha.dim() != self.bx.n {
            return Err(Error::Configuration("multi-index dimension mismatch".into()));
        }
        let s = if sign >= 0 { 1.0 } else { -1.0 };
        let samples = fft::apply_multiplier(&self.samples, self.bx.n, self.grid, |nu| {
            let m: f64 = nu
                .iter()
                .zip(alpha.entries())
                .map(|(&v, &a)| falling_factorial_f64(s * v as f64, a))
                .product();
            C64::new(m, 0.0)
        });
        GridFunction::from_samples(self.bx, self.grid, samples)
    }

    pub fn map_samples(&self, f: impl Fn(&[f64], C64) -> C64) -> GridFunction {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, &v)| f(&self.grid_point(i), v))
            .collect();
        GridFunction::from_samples(self.bx, self.grid, samples).expect("same grid")
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(C64, C64) -> C64) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect();
        GridFunction::from_samples(self.bx, self.grid, samples)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: C64) -> GridFunction {
        self.map_samples(|_, v| v * s)
    }

    /// max_x |u(x) − v(x)|.
    pub fn max_diff(&self, other: &GridFunction) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid || self.bx.n != other.bx.n {
            return Err(Error::Configuration(format!(
                "grid mismatch: n={} N={} vs n={} N={}",
                self.bx.n, self.grid, other.bx.n, other.grid
            )));
        }
        Ok(())
    }
}

fn check_grid(bx: &FrequencyBox, grid: usize) -> Result<()> {
    if grid < 2 * bx.extent() + 1 {
        return Err(Error::Configuration(format!(
            "grid N = {grid} too small for box extent {} (need N ≥ {})",
            bx.extent(),
            2 * bx.extent() + 1
        )));
    }
    if grid.checked_pow(bx.n as u32).map_or(true, |t| t > 1 << 24) {
        return Err(Error::Configuration(format!("grid {grid}^{} too large", bx.n)));
    }
    Ok(())
}

/// Coordinates of grid point `idx` on the N^n grid.
pub fn grid_point(idx: usize, n: usize, grid: usize) -> Vec<f64> {
    fft::unravel(idx, n, grid)
        .into_iter()
        .map(|i| TWO_PI * i as f64 / grid as f64)
        .collect()
}

/// FFT bin index for every box point, in box order.
pub(crate) fn box_bins(bx: &FrequencyBox, grid: usize) -> Vec<usize> {
    bx.points()
        .map(|p| {
            let ix: Vec<usize> = p.iter().map(|&v| fft::frequency_bin(v, grid)).collect();
            fft::ravel(&ix, grid)
        })
        .collect()
}

/// Inverse toroidal transform x ↦ Σ_ξ e^{ix·ξ} g(ξ).
pub fn inverse_ft(g: &LatticeFunction, grid: usize) -> Result<GridFunction> {
    GridFunction::from_coeffs(g, grid)
}

pub fn toroidal_ft(u: &GridFunction) -> LatticeFunction {
    u.toroidal_ft()
}

/// Closed-form tag A·exp(−|x−c|²/(2w²)).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTag {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: C64,
}

/// Function on R^n with a declared support box, sampled on demand at quadrature nodes.
#[derive(Clone)]
pub struct EuclideanSampledFunction {
    n: usize,
    support: Vec<(f64, f64)>,
    f: Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>,
    gaussian: Option<GaussianTag>,
}

impl std::fmt::Debug for EuclideanSampledFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EuclideanSampledFunction")
            .field("n", &self.n)
            .field("support", &self.support)
            .field("gaussian", &self.gaussian)
            .finish()
    }
}

impl EuclideanSampledFunction {
    pub fn new(
        support: Vec<(f64, f64)>,
        f: impl Fn(&[f64]) -> C64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let n = support.len();
        if !(1..=3).contains(&n) || support.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::Configuration(format!("invalid support {support:?}")));
        }
        Ok(EuclideanSampledFunction { n, support, f: Arc::new(f), gaussian: None })
    }

    /// A·exp(−|x−c|²/(2w²)) with support c ± 12w.
    pub fn gaussian(center: Vec<f64>, width: f64, amplitude: C64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Configuration("Gaussian width must be positive".into()));
        }
        let support = center.iter().map(|&c| (c - 12.0 * width, c + 12.0 * width)).collect();
        let (c2, w) = (center.clone(), width);
        let mut out = Self::new(support, move |x| {
            let r2: f64 = x.iter().zip(&c2).map(|(a, b)| (a - b) * (a - b)).sum();
            amplitude * (-r2 / (2.0 * w * w)).exp()
        })?;
        out.gaussian = Some(GaussianTag { center, width, amplitude });
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn value(&self, x: &[f64]) -> C64 {
        if x.iter().zip(&self.support).any(|(v, (a, b))| v < a || v > b) {
            return C64::new(0.0, 0.0);
        }
        (self.f)(x)
    }

    /// Raw evaluation rule, ignoring the declared support.
    pub fn value_unrestricted(&self, x: &[f64]) -> C64 {
        (self.f)(x)
    }

    /// Ratio of the mass on a collar around the support to the mass on the support.
    pub fn tail_ratio(&self) -> f64 {
        let pts = 48usize;
        let n = self.n;
        let inner = tensor_mean(n, pts, |u| {
            let x: Vec<f64> = (0..n)
                .map(|j| self.support[j].0 + u[j] * (self.support[j].1 - self.support[j].0))
                .collect();
            (self.f)(&x).norm()
        }) * self.volume();
        let mut outer = 0.0;
        let total = 3usize.pow(n as u32);
        for cell in 0..total {
            if cell == total / 2 {
                continue;
            }
            let off: Vec<f64> = fft::unravel(cell, n, 3).into_iter().map(|v| v as f64 - 1.0).collect();
            outer += tensor_mean(n, pts, |u| {
                let x: Vec<f64> = (0..n)
                    .map(|j| {
                        let (a, b) = self.support[j];
                        a + (off[j] + u[j]) * (b - a)
                    })
                    .collect();
                (self.f)(&x).norm()
            }) * self.volume();
        }
        if inner == 0.0 {
            if outer == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            outer / inner
        }
    }

    fn volume(&self) -> f64 {
        self.support.iter().map(|(a, b)| b - a).product()
    }

    pub fn check_tail(&self) -> Result<()> {
        let r = self.tail_ratio();
        if r > 1e-12 {
            return Err(Error::Precondition(format!(
                "function is not negligible outside its declared support (tail ratio {r:.3e})"
            )));
        }
        Ok(())
    }
}

fn tensor_mean(n: usize, pts: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let total = pts.pow(n as u32);
    let mut acc = 0.0;
    for i in 0..total {
        let u: Vec<f64> = fft::unravel(i, n, pts)
            .into_iter()
            .map(|k| (k as f64 + 0.5) / pts as f64)
            .collect();
        acc += f(&u);
    }
    acc / total as f64
}

/// F_{R^n} f(ξ) = ∫ e^{-ix·ξ} f(x) đx, đx = (2π)^{-n} dx.
pub fn euclidean_ft(f: &EuclideanSampledFunction, xi: &[f64]) -> Result<C64> {
    Ok(euclidean_ft_many(f, &[xi.to_vec()])?[0])
}

/// Euclidean transform at many frequencies sharing one set of quadrature nodes.
///
/// Closed form for Gaussian-tagged inputs; otherwise Romberg-extrapolated tensor
/// trapezoid rules on the support, refined until successive levels differ by < 1e-10.
pub fn euclidean_ft_many(f: &EuclideanSampledFunction, xis: &[Vec<f64>]) -> Result<Vec<C64>> {
    let n = f.n;
    if xis.iter().any(|x| x.len() != n) {
        return Err(Error::Configuration("frequency dimension mismatch".into()));
    }
    if let Some(g) = &f.gaussian {
        let w = g.width;
        let pref = g.amplitude * (w / TWO_PI.sqrt()).powi(n as i32);
        return Ok(xis
            .iter()
            .map(|xi| {
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                let shift: f64 = xi.iter().zip(&g.center).map(|(a, b)| a * b).sum();
                pref * (-0.5 * w * w * r2).exp() * C64::from_polar(1.0, -shift)
            })
            .collect());
    }
    let max_level = match n {
        1 => 20,
        2 => 11,
        _ => 7,
    };
    let norm = TWO_PI.powi(-(n as i32));
    let mut table: Vec<Vec<Vec<C64>>> = Vec::new();
    for level in 1..=max_level {
        let intervals = 1usize << level;
        let trap = tensor_trapezoid(f, intervals, xis);
        let mut row = vec![trap];
        for j in 1..=table.len() {
            let factor = 4f64.powi(j as i32) - 1.0;
            let prev_same = &row[j - 1];
            let prev_coarse = &table[table.len() - 1][j - 1];
            let next: Vec<C64> = prev_same
                .iter()
                .zip(prev_coarse)
                .map(|(a, b)| a + (a - b) / factor)
                .collect();
            row.push(next);
        }
        if let Some(last) = table.last() {
            let best = row.last().expect("row nonempty");
            let prev = last.last().expect("row nonempty");
            let diff = best
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).norm() * norm)
                .fold(0.0, f64::max);
            if level >= 4 && diff < 1e-10 {
                return Ok(best.iter().map(|v| v * norm).collect());
            }
        }
        table.push(row);
    }
    Err(Error::Accuracy(format!(
        "Euclidean quadrature did not reach 1e-10 within 2^{max_level} intervals per axis"
    )))
}

fn tensor_trapezoid(f: &EuclideanSampledFunction, intervals: usize, xis: &[Vec<f64>]) -> Vec<C64> {
    let n = f.n;
    let pts = intervals + 1;
    let h: Vec<f64> = f.support.iter().map(|(a, b)| (b - a) / intervals as f64).collect();
    let mut acc = vec![C64::new(0.0, 0.0); xis.len()];
    let total = pts.pow(n as u32);
    let mut x = vec![0.0; n];
    for i in 0..total {
        let ix = fft::unravel(i, n, pts);
        let mut w = 1.0;
        for j in 0..n {
            x[j] = f.support[j].0 + ix[j] as f64 * h[j];
            if ix[j] == 0 || ix[j] == intervals {
                w *= 0.5;
            }
            w *= h[j];
        }
        let v = (f.f)(&x) * w;
        if v.norm_sqr() == 0.0 {
            continue;
        }
        for (a, xi) in acc.iter_mut().zip(xis) {
            let ph: f64 = xi.iter().zip(&x).map(|(p, q)| p * q).sum();
            *a += v * C64::from_polar(1.0, -ph);
        }
    }
    acc
}

/// Result of periodizing a Euclidean function.
#[derive(Clone, Debug)]
pub struct Periodized {
    /// Pf with coefficients F_R f(ξ) on the box.
    pub function: GridFunction,
    /// Pf sampled by direct shift summation, then transformed on the grid.
    pub shift_sum: GridFunction,
    /// max_ξ |F_T(shift-sum Pf)(ξ) − F_R f(ξ)| over the box.
    pub route_defect: f64,
}

/// Shift-sum samples Pf(x) = Σ_k f(x + 2πk) on the grid.
pub fn periodize_shift_sum(
    f: &EuclideanSampledFunction,
    bx: FrequencyBox,
    grid: usize,
) -> Result<GridFunction> {
    let n = f.n;
    if bx.n != n {
        return Err(Error::Configuration("dimension mismatch".into()));
    }
    let ranges: Vec<(i64, i64)> = f
        .support
        .iter()
        .map(|(a, b)| (((a - TWO_PI) / TWO_PI).floor() as i64, (b / TWO_PI).ceil() as i64))
        .collect();
    GridFunction::from_fn(bx, grid, |x| {
        let mut acc = C64::new(0.0, 0.0);
        let counts: Vec<usize> = ranges.iter().map(|(lo, hi)| (hi - lo + 1) as usize).collect();
        let total: usize = counts.iter().product();
        let mut y = vec![0.0; n];
        for c in 0..total {
            let mut rem = c;
            for j in (0..n).rev() {
                let k = ranges[j].0 + (rem % counts[j]) as i64;
                rem /= counts[j];
                y[j] = x[j] + TWO_PI * k as f64;
            }
            acc += f.value(&y);
        }
        acc
    })
}

/// Pf via the lattice restriction of F_R f.
pub fn periodize_fourier(
    f: &EuclideanSampledFunction,
    bx: FrequencyBox,
    grid: usize,
) -> Result<GridFunction> {
    let pts: Vec<Vec<f64>> = bx.points().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
    let values = euclidean_ft_many(f, &pts)?;
    GridFunction::from_coeffs(&LatticeFunction { bx, values }, grid)
}

/// Periodization P f = Σ_k f(· + 2πk), computed by both routes.
pub fn periodize(f: &EuclideanSampledFunction, bx: FrequencyBox, grid: usize) -> Result<Periodized> {
    f.check_tail()?;
    let function = periodize_fourier(f, bx, grid)?;
    let shift_sum = periodize_shift_sum(f, bx, grid)?;
    let a = function.toroidal_ft();
    let b = shift_sum.toroidal_ft();
    let route_defect = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max);
    Ok(Periodized { function, shift_sum, route_defect })
}

/// Two sides of the Poisson summation formula at x:
/// (Σ_k f(x+2πk), Σ_ξ F_R f(ξ) e^{ix·ξ}) with ξ over the box.
pub fn poisson_sides(
    f: &EuclideanSampledFunction,
    x: &[f64],
    bx: FrequencyBox,
    shifts: i64,
) -> Result<(C64, C64)> {
    let n = f.n;
    let side = (2 * shifts + 1) as usize;
    let mut lhs = C64::new(0.0, 0.0);
    for c in 0..side.pow(n as u32) {
        let y: Vec<f64> = fft::unravel(c, n, side)
            .into_iter()
            .zip(x)
            .map(|(k, &xj)| xj + TWO_PI * (k as i64 - shifts) as f64)
            .collect();
        lhs += f.value_unrestricted(&y);
    }
    let pts: Vec<Vec<f64>> = bx.points().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
    let ft = euclidean_ft_many(f, &pts)?;
    let rhs = pts
        .iter()
        .zip(&ft)
        .map(|(xi, v)| {
            let ph: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
            v * C64::from_polar(1.0, ph)
        })
        .sum();
    Ok((lhs, rhs))
}

/// Fourier transform on the inflated torus NT^n, indexed by numerators m of η = m/N.
#[derive(Clone, Debug)]
pub struct InflatedSpectrum {
    pub factor: usize,
    pub values: LatticeFunction,
}

impl InflatedSpectrum {
    /// Value at η = m / factor.
    pub fn at(&self, numerators: &[i64]) -> Option<C64> {
        self.values.get(numerators)
    }
}

/// F_{NT^n} g(η) = ∫_{NT^n} e^{-iy·η} g(y) đy, computed as N^n (F_T g_N)(Nη) with
/// g_N(x) = g(Nx). `samples` are g on the uniform M^n grid of [0, 2πN)^n.
pub fn inflated_ft(
    samples: &[C64],
    n: usize,
    points_per_axis: usize,
    factor: usize,
    numerators: FrequencyBox,
) -> Result<InflatedSpectrum> {
    if factor < 1 {
        return Err(Error::Configuration("inflation factor must be ≥ 1".into()));
    }
    if numerators.n != n || samples.len() != points_per_axis.pow(n as u32) {
        return Err(Error::Configuration("inflated-torus sample shape mismatch".into()));
    }
    if 2 * numerators.extent() + 1 > points_per_axis {
        return Err(Error::Configuration(format!(
            "{points_per_axis} points per axis cannot resolve numerators up to {}",
            numerators.extent()
        )));
    }
    let spectrum = fft::coefficients(samples, n, points_per_axis);
    let scale = (factor as f64).powi(n as i32);
    let values = box_bins(&numerators, points_per_axis)
        .into_iter()
        .map(|b| spectrum[b] * scale)
        .collect();
    Ok(InflatedSpectrum { factor, values: LatticeFunction { bx: numerators, values } })
}
