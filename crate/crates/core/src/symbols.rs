//! Symbol and amplitude tables, the θ interpolation kernel, extension to real frequencies
//! and symbol-class constants.

use crate::error::{Error, Result};
use crate::fft;
use crate::harmonic::grid_point;
use crate::lattice::{bracket_int, falling_factorial_f64, FrequencyBox, MultiIndex};
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const TWO_PI: f64 = 2.0 * PI;

/// Relative spectral-tail tolerance for rows of tabulated symbols.
pub const ROW_TAIL_TOLERANCE: f64 = 1e-8;

/// Largest number of entries accepted for an amplitude table.
pub const MAX_AMPLITUDE_ENTRIES: usize = 1 << 25;

/// Order metadata (m, ρ, δ) of a symbol class S^m_{ρ,δ}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolOrder {
    pub m: f64,
    pub rho: f64,
    pub delta: f64,
}

impl SymbolOrder {
    pub fn new(m: f64, rho: f64, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) || !(0.0..=1.0).contains(&delta) {
            return Err(Error::Configuration(format!("(rho, delta) = ({rho}, {delta}) outside [0,1]")));
        }
        Ok(SymbolOrder { m, rho, delta })
    }

    pub fn classical(m: f64) -> Self {
        SymbolOrder { m, rho: 1.0, delta: 0.0 }
    }
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Largest relative spectral tail over rows; the tail is every bin with some |ν_j| > N/3.
fn row_tail(row: &[C64], n: usize, grid: usize) -> f64 {
    let norm: f64 = row.iter().map(|v| v.norm_sqr()).sum::<f64>();
    if norm == 0.0 {
        return 0.0;
    }
    let c = fft::coefficients(row, n, grid);
    let cut = (grid / 3) as i64;
    let freqs = fft::signed_frequencies(n, grid);
    let mut tail = 0.0;
    for (v, nu) in c.iter().zip(freqs.chunks_exact(n)) {
        if nu.iter().any(|f| f.abs() > cut) {
            tail += v.norm_sqr();
        }
    }
    (tail * grid.pow(n as u32) as f64 / norm).sqrt()
}

/// Symbol a(x,ξ) tabulated on (N^n grid) × (frequency box).
#[derive(Clone, Debug)]
pub struct SymbolTable {
    bx: FrequencyBox,
    grid: usize,
    pub order: SymbolOrder,
    values: Vec<C64>,
}

impl SymbolTable {
    /// Tabulates f(x, ξ) and checks that every x-row is smooth and periodic.
    pub fn from_fn(
        bx: FrequencyBox,
        grid: usize,
        order: SymbolOrder,
        f: impl Fn(&[f64], &[i64]) -> C64 + Sync,
    ) -> Result<Self> {
        let t = Self::from_fn_unchecked(bx, grid, order, f)?;
        t.check_rows()?;
        Ok(t)
    }

    pub(crate) fn from_fn_unchecked(
        bx: FrequencyBox,
        grid: usize,
        order: SymbolOrder,
        f: impl Fn(&[f64], &[i64]) -> C64 + Sync,
    ) -> Result<Self> {
        check_grid(&bx, grid)?;
        let pts: Vec<Vec<i64>> = bx.points().collect();
        let nx = grid.pow(bx.n as u32);
        let f = &f;
        let values: Vec<C64> = (0..nx)
            .into_par_iter()
            .flat_map_iter(|ix| {
                let x = grid_point(ix, bx.n, grid);
                pts.iter().map(move |p| f(&x, p)).collect::<Vec<_>>()
            })
            .collect();
        Ok(SymbolTable { bx, grid, order, values })
    }

    pub fn from_values(bx: FrequencyBox, grid: usize, order: SymbolOrder, values: Vec<C64>) -> Result<Self> {
        check_grid(&bx, grid)?;
        if values.len() != grid.pow(bx.n as u32) * bx.len() {
            return Err(Error::Configuration("symbol table value count mismatch".into()));
        }
        let t = SymbolTable { bx, grid, order, values };
        t.check_rows()?;
        Ok(t)
    }

    pub(crate) fn from_values_unchecked(bx: FrequencyBox, grid: usize, order: SymbolOrder, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.pow(bx.n as u32) * bx.len());
        SymbolTable { bx, grid, order, values }
    }

    pub(crate) fn from_columns(bx: FrequencyBox, grid: usize, order: SymbolOrder, cols: Vec<Vec<C64>>) -> Self {
        let nx = grid.pow(bx.n as u32);
        let l = bx.len();
        let mut values = vec![zero(); nx * l];
        for (k, col) in cols.into_iter().enumerate() {
            for (ix, v) in col.into_iter().enumerate() {
                values[ix * l + k] = v;
            }
        }
        SymbolTable { bx, grid, order, values }
    }

    pub fn check_rows(&self) -> Result<()> {
        // Constant rows have no tail; a row equal to its predecessor has the same tail.
        let l = self.bx.len();
        let mut skip = vec![true; l];
        let mut same_as_prev = vec![true; l];
        same_as_prev[0] = false;
        for row in self.values.chunks_exact(l) {
            for k in 0..l {
                skip[k] &= row[k] == self.values[k];
                if k > 0 {
                    same_as_prev[k] &= row[k] == row[k - 1];
                }
            }
        }
        let todo: Vec<usize> = (0..l).filter(|&k| !skip[k] && !same_as_prev[k]).collect();
        let worst = todo
            .into_par_iter()
            .map(|k| row_tail(&self.column(k), self.bx.n, self.grid))
            .reduce(|| 0.0, f64::max);
        if worst > ROW_TAIL_TOLERANCE {
            return Err(Error::Configuration(format!(
                "symbol rows are not resolved smooth periodic functions (relative tail {worst:.2e})"
            )));
        }
        Ok(())
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

    pub fn n_x(&self) -> usize {
        self.grid.pow(self.bx.n as u32)
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn x_point(&self, ix: usize) -> Vec<f64> {
        grid_point(ix, self.bx.n, self.grid)
    }

    pub fn at(&self, ix: usize, k: usize) -> C64 {
        self.values[ix * self.bx.len() + k]
    }

    pub fn get(&self, ix: usize, xi: &[i64]) -> Option<C64> {
        self.bx.index(xi).map(|k| self.at(ix, k))
    }

    /// Samples x ↦ a(x, ξ_k).
    pub fn column(&self, k: usize) -> Vec<C64> {
        let l = self.bx.len();
        (0..self.n_x()).map(|ix| self.values[ix * l + k]).collect()
    }

    pub fn with_order(mut self, order: SymbolOrder) -> Self {
        self.order = order;
        self
    }

    /// Same values on a smaller (or equal) box.
    pub fn restrict_box(&self, bx: FrequencyBox) -> Result<SymbolTable> {
        if bx.n != self.bx.n || bx.extent() > self.bx.extent() {
            return Err(Error::OutOfRange("target box exceeds the table".into()));
        }
        let l = bx.len();
        let map: Vec<usize> = bx.points().map(|p| self.bx.index(&p).expect("inside")).collect();
        let mut values = vec![zero(); self.n_x() * l];
        for ix in 0..self.n_x() {
            for (k, &src) in map.iter().enumerate() {
                values[ix * l + k] = self.at(ix, src);
            }
        }
        Ok(SymbolTable { bx, grid: self.grid, order: self.order, values })
    }

    /// Applies the column-wise map on every ξ in parallel.
    fn map_columns(&self, f: impl Fn(&[C64], &[i64]) -> Vec<C64> + Sync) -> SymbolTable {
        let pts: Vec<Vec<i64>> = self.bx.points().collect();
        let cols: Vec<Vec<C64>> = (0..self.bx.len())
            .into_par_iter()
            .map(|k| f(&self.column(k), &pts[k]))
            .collect();
        SymbolTable::from_columns(self.bx, self.grid, self.order, cols)
    }

    /// Spectral ∂_x^β.
    pub fn x_derivative(&self, beta: &MultiIndex) -> Result<SymbolTable> {
        self.check_index(beta)?;
        if beta.order() == 0 {
            return Ok(self.clone());
        }
        let (n, g) = (self.bx.n, self.grid);
        Ok(self.map_columns(|col, _| {
            fft::apply_multiplier(col, n, g, |nu| {
                nu.iter()
                    .zip(beta.entries())
                    .fold(C64::new(1.0, 0.0), |acc, (&v, &b)| acc * C64::new(0.0, v as f64).powu(b))
            })
        }))
    }

    /// D_x^{(α)} (sign = +1) or (−D_x)^{(α)} (sign = −1) on every x-row.
    pub fn x_falling_derivative(&self, alpha: &MultiIndex, sign: i32) -> Result<SymbolTable> {
        self.check_index(alpha)?;
        if alpha.order() == 0 {
            return Ok(self.clone());
        }
        let (n, g) = (self.bx.n, self.grid);
        let s = if sign >= 0 { 1.0 } else { -1.0 };
        Ok(self.map_columns(|col, _| {
            fft::apply_multiplier(col, n, g, |nu| {
                C64::new(
                    nu.iter()
                        .zip(alpha.entries())
                        .map(|(&v, &a)| falling_factorial_f64(s * v as f64, a))
                        .product(),
                    0.0,
                )
            })
        }))
    }

    /// △_ξ^α on the box shrunk by max_j α_j.
    pub fn difference(&self, alpha: &MultiIndex) -> Result<SymbolTable> {
        self.check_index(alpha)?;
        let out_box = self.bx.shrink(alpha.max_entry() as usize)?;
        let terms: Vec<(Vec<i64>, f64)> = alpha
            .below()
            .into_iter()
            .map(|beta| {
                let sign = if (alpha.order() - beta.order()) % 2 == 0 { 1.0 } else { -1.0 };
                let c = alpha.binomial(&beta).expect("small binomial") as f64;
                (beta.entries().iter().map(|&b| b as i64).collect(), sign * c)
            })
            .collect();
        let pts: Vec<Vec<i64>> = out_box.points().collect();
        let src: Vec<Vec<(usize, f64)>> = pts
            .iter()
            .map(|p| {
                terms
                    .iter()
                    .map(|(beta, c)| {
                        let q: Vec<i64> = p.iter().zip(beta).map(|(a, b)| a + b).collect();
                        (self.bx.index(&q).expect("margin checked"), *c)
                    })
                    .collect()
            })
            .collect();
        let l_in = self.bx.len();
        let l_out = out_box.len();
        let mut values = vec![zero(); self.n_x() * l_out];
        values.par_chunks_mut(l_out).enumerate().for_each(|(ix, row)| {
            let base = ix * l_in;
            for (k, s) in src.iter().enumerate() {
                row[k] = s.iter().map(|&(q, c)| self.values[base + q] * c).sum();
            }
        });
        Ok(SymbolTable { bx: out_box, grid: self.grid, order: self.order, values })
    }

    pub fn conj(&self) -> SymbolTable {
        self.map_values(|_, _, v| v.conj())
    }

    pub fn scale(&self, s: C64) -> SymbolTable {
        self.map_values(|_, _, v| v * s)
    }

    pub fn map_values(&self, f: impl Fn(&[f64], &[i64], C64) -> C64 + Sync) -> SymbolTable {
        let pts: Vec<Vec<i64>> = self.bx.points().collect();
        let l = self.bx.len();
        let mut values = self.values.clone();
        values.par_chunks_mut(l).enumerate().for_each(|(ix, row)| {
            let x = grid_point(ix, self.bx.n, self.grid);
            for (k, v) in row.iter_mut().enumerate() {
                *v = f(&x, &pts[k], *v);
            }
        });
        SymbolTable { bx: self.bx, grid: self.grid, order: self.order, values }
    }

    /// Pointwise combination on the smaller of the two boxes.
    pub fn zip_with(&self, other: &SymbolTable, f: impl Fn(C64, C64) -> C64 + Sync) -> Result<SymbolTable> {
        if self.grid != other.grid || self.bx.n != other.bx.n {
            return Err(Error::Configuration("symbol tables live on different grids".into()));
        }
        let bx = if self.bx.extent() <= other.bx.extent() { self.bx } else { other.bx };
        let a = self.restrict_box(bx)?;
        let b = other.restrict_box(bx)?;
        let values = a.values.par_iter().zip(&b.values).map(|(&p, &q)| f(p, q)).collect();
        Ok(SymbolTable { bx, grid: self.grid, order: self.order, values })
    }

    pub fn mul(&self, other: &SymbolTable) -> Result<SymbolTable> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &SymbolTable) -> Result<SymbolTable> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymbolTable) -> Result<SymbolTable> {
        self.zip_with(other, |a, b| a - b)
    }

    /// max |a − b| over the core of the smaller box.
    pub fn max_diff_core(&self, other: &SymbolTable) -> Result<f64> {
        let d = self.sub(other)?;
        let l = d.bx.len();
        let core: Vec<usize> = (0..l).filter(|&k| d.bx.in_core(&d.bx.point(k))).collect();
        Ok((0..d.n_x())
            .flat_map(|ix| core.iter().map(move |&k| (ix, k)))
            .map(|(ix, k)| d.at(ix, k).norm())
            .fold(0.0, f64::max))
    }

    /// Fourier coefficients of x ↦ a(x, ξ_k), FFT bin order.
    pub fn column_coefficients(&self, k: usize) -> Vec<C64> {
        fft::coefficients(&self.column(k), self.bx.n, self.grid)
    }

    fn check_index(&self, alpha: &MultiIndex) -> Result<()> {
        if alpha.dim() != self.bx.n {
            return Err(Error::Configuration("multi-index dimension mismatch".into()));
        }
        Ok(())
    }
}

fn check_grid(bx: &FrequencyBox, grid: usize) -> Result<()> {
    if grid < 2 * bx.extent() + 1 {
        return Err(Error::Configuration(format!(
            "grid N = {grid} too small for box extent {}",
            bx.extent()
        )));
    }
    Ok(())
}

/// Amplitude a(x, y, ξ) on (N^n) × (N^n) × box.
#[derive(Clone, Debug)]
pub struct AmplitudeTable {
    bx: FrequencyBox,
    grid: usize,
    pub order: SymbolOrder,
    values: Vec<C64>,
}

impl AmplitudeTable {
    pub fn from_fn(
        bx: FrequencyBox,
        grid: usize,
        order: SymbolOrder,
        f: impl Fn(&[f64], &[f64], &[i64]) -> C64 + Sync,
    ) -> Result<Self> {
        let t = Self::from_fn_unchecked(bx, grid, order, f)?;
        t.check_rows()?;
        Ok(t)
    }

    pub(crate) fn from_fn_unchecked(
        bx: FrequencyBox,
        grid: usize,
        order: SymbolOrder,
        f: impl Fn(&[f64], &[f64], &[i64]) -> C64 + Sync,
    ) -> Result<Self> {
        check_grid(&bx, grid)?;
        let nx = grid.pow(bx.n as u32);
        check_amplitude_size(nx, bx.len())?;
        let pts: Vec<Vec<i64>> = bx.points().collect();
        let f = &f;
        let values: Vec<C64> = (0..nx * nx)
            .into_par_iter()
            .flat_map_iter(|ixy| {
                let x = grid_point(ixy / nx, bx.n, grid);
                let y = grid_point(ixy % nx, bx.n, grid);
                pts.iter().map(move |p| f(&x, &y, p)).collect::<Vec<_>>()
            })
            .collect();
        Ok(AmplitudeTable { bx, grid, order, values })
    }

    /// a(x, y, ξ) = s(x, ξ).
    pub fn from_symbol(s: &SymbolTable) -> Result<Self> {
        let nx = s.n_x();
        check_amplitude_size(nx, s.bx.len())?;
        let l = s.bx.len();
        let mut values = Vec::with_capacity(nx * nx * l);
        for ix in 0..nx {
            let row = &s.values[ix * l..(ix + 1) * l];
            for _ in 0..nx {
                values.extend_from_slice(row);
            }
        }
        Ok(AmplitudeTable { bx: s.bx, grid: s.grid, order: s.order, values })
    }

    /// a(x, y, ξ) = s(y, ξ).
    pub fn from_symbol_in_y(s: &SymbolTable) -> Result<Self> {
        let nx = s.n_x();
        check_amplitude_size(nx, s.bx.len())?;
        let l = s.bx.len();
        let mut values = Vec::with_capacity(nx * nx * l);
        for _ in 0..nx {
            values.extend_from_slice(&s.values);
        }
        debug_assert_eq!(values.len(), nx * nx * l);
        Ok(AmplitudeTable { bx: s.bx, grid: s.grid, order: s.order, values })
    }

    pub fn check_rows(&self) -> Result<()> {
        let nx = self.n_x();
        let l = self.bx.len();
        let (n, g) = (self.bx.n, self.grid);
        let y_tail = (0..nx * l)
            .into_par_iter()
            .map(|j| {
                let (ix, k) = (j / l, j % l);
                let row: Vec<C64> = (0..nx).map(|iy| self.at(ix, iy, k)).collect();
                row_tail(&row, n, g)
            })
            .reduce(|| 0.0, f64::max);
        let x_tail = (0..nx * l)
            .into_par_iter()
            .map(|j| {
                let (iy, k) = (j / l, j % l);
                let row: Vec<C64> = (0..nx).map(|ix| self.at(ix, iy, k)).collect();
                row_tail(&row, n, g)
            })
            .reduce(|| 0.0, f64::max);
        let worst = y_tail.max(x_tail);
        if worst > ROW_TAIL_TOLERANCE {
            return Err(Error::Configuration(format!(
                "amplitude rows are not resolved smooth periodic functions (relative tail {worst:.2e})"
            )));
        }
        Ok(())
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

    pub fn at(&self, ix: usize, iy: usize, k: usize) -> C64 {
        let nx = self.n_x();
        self.values[(ix * nx + iy) * self.bx.len() + k]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// D_y^{(α)} (sign +1) or (−D_y)^{(α)} (sign −1) on every y-row.
    pub fn y_falling_derivative(&self, alpha: &MultiIndex, sign: i32) -> Result<AmplitudeTable> {
        if alpha.dim() != self.bx.n {
            return Err(Error::Configuration("multi-index dimension mismatch".into()));
        }
        if alpha.order() == 0 {
            return Ok(self.clone());
        }
        let nx = self.n_x();
        let l = self.bx.len();
        let (n, g) = (self.bx.n, self.grid);
        let s = if sign >= 0 { 1.0 } else { -1.0 };
        let rows: Vec<Vec<C64>> = (0..nx * l)
            .into_par_iter()
            .map(|j| {
                let (ix, k) = (j / l, j % l);
                let row: Vec<C64> = (0..nx).map(|iy| self.at(ix, iy, k)).collect();
                fft::apply_multiplier(&row, n, g, |nu| {
                    C64::new(
                        nu.iter()
                            .zip(alpha.entries())
                            .map(|(&v, &a)| falling_factorial_f64(s * v as f64, a))
                            .product(),
                        0.0,
                    )
                })
            })
            .collect();
        let mut values = vec![zero(); self.values.len()];
        for (j, row) in rows.into_iter().enumerate() {
            let (ix, k) = (j / l, j % l);
            for (iy, v) in row.into_iter().enumerate() {
                values[(ix * nx + iy) * l + k] = v;
            }
        }
        Ok(AmplitudeTable { bx: self.bx, grid: self.grid, order: self.order, values })
    }

    /// s(x, ξ) = a(x, x, ξ).
    pub fn diagonal(&self) -> SymbolTable {
        let nx = self.n_x();
        let l = self.bx.len();
        let mut values = Vec::with_capacity(nx * l);
        for ix in 0..nx {
            let base = (ix * nx + ix) * l;
            values.extend_from_slice(&self.values[base..base + l]);
        }
        SymbolTable { bx: self.bx, grid: self.grid, order: self.order, values }
    }

    pub fn add(&self, other: &AmplitudeTable) -> Result<AmplitudeTable> {
        if self.grid != other.grid || self.bx != other.bx {
            return Err(Error::Configuration("amplitude tables have different shapes".into()));
        }
        let values = self.values.par_iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(AmplitudeTable { bx: self.bx, grid: self.grid, order: self.order, values })
    }

    pub(crate) fn from_raw(bx: FrequencyBox, grid: usize, order: SymbolOrder, values: Vec<C64>) -> Self {
        AmplitudeTable { bx, grid, order, values }
    }

    /// a(x, y, ξ) = p(x, ξ) q(y, ξ) on the smaller of the two boxes.
    pub fn from_product(p: &SymbolTable, q: &SymbolTable) -> Result<Self> {
        if p.grid() != q.grid() || p.dim() != q.dim() {
            return Err(Error::Configuration("factors live on different grids".into()));
        }
        let bx = if p.bx().extent() <= q.bx().extent() { p.bx() } else { q.bx() };
        let (p, q) = (p.restrict_box(bx)?, q.restrict_box(bx)?);
        let nx = p.n_x();
        let l = bx.len();
        check_amplitude_size(nx, l)?;
        let mut values = Vec::with_capacity(nx * nx * l);
        for ix in 0..nx {
            for iy in 0..nx {
                values.extend((0..l).map(|k| p.at(ix, k) * q.at(iy, k)));
            }
        }
        Ok(AmplitudeTable { bx, grid: p.grid(), order: p.order, values })
    }

    pub fn with_order(mut self, order: SymbolOrder) -> Self {
        self.order = order;
        self
    }

    pub fn restrict_box(&self, bx: FrequencyBox) -> Result<AmplitudeTable> {
        if bx.n != self.bx.n || bx.extent() > self.bx.extent() {
            return Err(Error::OutOfRange("target box exceeds the table".into()));
        }
        if bx.extent() == self.bx.extent() {
            return Ok(AmplitudeTable { bx, ..self.clone() });
        }
        let map: Vec<usize> = bx.points().map(|p| self.bx.index(&p).expect("inside")).collect();
        let nxy = self.n_x() * self.n_x();
        let l_in = self.bx.len();
        let mut values = Vec::with_capacity(nxy * map.len());
        for j in 0..nxy {
            values.extend(map.iter().map(|&src| self.values[j * l_in + src]));
        }
        Ok(AmplitudeTable { bx, grid: self.grid, order: self.order, values })
    }

    pub fn zip_with(&self, other: &AmplitudeTable, f: impl Fn(C64, C64) -> C64 + Sync) -> Result<AmplitudeTable> {
        if self.grid != other.grid || self.bx.n != other.bx.n {
            return Err(Error::Configuration("amplitude tables live on different grids".into()));
        }
        let bx = if self.bx.extent() <= other.bx.extent() { self.bx } else { other.bx };
        let a = self.restrict_box(bx)?;
        let b = other.restrict_box(bx)?;
        let values = a.values.par_iter().zip(&b.values).map(|(&p, &q)| f(p, q)).collect();
        Ok(AmplitudeTable { bx, grid: self.grid, order: self.order, values })
    }

    pub fn mul(&self, other: &AmplitudeTable) -> Result<AmplitudeTable> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn sub(&self, other: &AmplitudeTable) -> Result<AmplitudeTable> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> AmplitudeTable {
        AmplitudeTable { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// max |a| over all entries.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Spectral ∂^β in the first spatial argument.
    pub fn x_derivative(&self, beta: &MultiIndex) -> Result<AmplitudeTable> {
        if beta.dim() != self.bx.n {
            return Err(Error::Configuration("multi-index dimension mismatch".into()));
        }
        if beta.order() == 0 {
            return Ok(self.clone());
        }
        let nx = self.n_x();
        let l = self.bx.len();
        let (n, g) = (self.bx.n, self.grid);
        let rows: Vec<Vec<C64>> = (0..nx * l)
            .into_par_iter()
            .map(|j| {
                let (iy, k) = (j / l, j % l);
                let row: Vec<C64> = (0..nx).map(|ix| self.at(ix, iy, k)).collect();
                fft::apply_multiplier(&row, n, g, |nu| {
                    nu.iter()
                        .zip(beta.entries())
                        .fold(C64::new(1.0, 0.0), |acc, (&v, &b)| acc * C64::new(0.0, v as f64).powu(b))
                })
            })
            .collect();
        let mut values = vec![zero(); self.values.len()];
        for (j, row) in rows.into_iter().enumerate() {
            let (iy, k) = (j / l, j % l);
            for (ix, v) in row.into_iter().enumerate() {
                values[(ix * nx + iy) * l + k] = v;
            }
        }
        Ok(AmplitudeTable { bx: self.bx, grid: self.grid, order: self.order, values })
    }
}

fn check_amplitude_size(nx: usize, l: usize) -> Result<()> {
    match nx.checked_mul(nx).and_then(|v| v.checked_mul(l)) {
        Some(t) if t <= MAX_AMPLITUDE_ENTRIES => Ok(()),
        _ => Err(Error::Configuration(format!(
            "amplitude table with {nx}^2 x {l} entries exceeds the limit {MAX_AMPLITUDE_ENTRIES}"
        ))),
    }
}

/// Profile θ₁ of the one-dimensional interpolation function θ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ThetaProfile {
    /// θ₁ = 1_{[−π,π]} convolved with a unit-mass Gaussian of scale σ:
    /// ½[erf((x+π)/σ) − erf((x−π)/σ)].
    SmoothedBox { sigma: f64 },
    /// θ₁ = ψ(x)/(ψ(x)+ψ(x−2π sgn x)), ψ(x) = exp(−1/(1−(x/2π)²)), supported in [−2π, 2π].
    CompactBump,
}

impl ThetaProfile {
    /// Smoothed box balanced between flatness near the lattice and decay beyond H.
    pub fn smoothed_box_for(h: f64) -> Self {
        let balanced = (TWO_PI / h).sqrt();
        let tail = 2.0 / h * (1e11f64 / (PI * h)).ln().sqrt();
        ThetaProfile::SmoothedBox { sigma: balanced.max(tail) }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ThetaProfile::SmoothedBox { sigma } => {
                0.5 * (libm::erf((x + PI) / sigma)
                    - libm::erf((x - PI) / sigma))
            }
            ThetaProfile::CompactBump => {
                if x.abs() >= TWO_PI {
                    return 0.0;
                }
                let psi = |t: f64| {
                    let u = t / TWO_PI;
                    if u.abs() >= 1.0 {
                        0.0
                    } else {
                        (-1.0 / (1.0 - u * u)).exp()
                    }
                };
                let a = psi(x);
                let b = psi(x - TWO_PI * x.signum());
                if a + b == 0.0 {
                    0.0
                } else {
                    a / (a + b)
                }
            }
        }
    }

    /// Half-width beyond which θ₁ vanishes to double precision.
    fn reach(&self) -> f64 {
        match *self {
            ThetaProfile::SmoothedBox { sigma } => PI + 9.0 * sigma,
            ThetaProfile::CompactBump => TWO_PI,
        }
    }

    /// Trapezoid node spacing that keeps aliasing of the transform negligible.
    fn quadrature_step(&self) -> f64 {
        match *self {
            ThetaProfile::SmoothedBox { sigma } => sigma / 8.0,
            ThetaProfile::CompactBump => TWO_PI / 700.0,
        }
    }

    /// Closed form of F θ₁ when known.
    pub fn closed_form(&self, xi: f64) -> Option<f64> {
        match *self {
            ThetaProfile::SmoothedBox { sigma } => {
                let sinc = if xi == 0.0 { 1.0 } else { (PI * xi).sin() / (PI * xi) };
                Some(sinc * (-0.25 * sigma * sigma * xi * xi).exp())
            }
            ThetaProfile::CompactBump => None,
        }
    }
}

/// Highest ξ-derivative order the kernel can interpolate.
pub const KERNEL_MAX_DERIVATIVE: u32 = 3;
const KERNEL_TABLES: usize = KERNEL_MAX_DERIVATIVE as usize + 3;

/// Tabulated Euclidean transform of the tensor interpolation function θ.
#[derive(Clone, Debug)]
pub struct ThetaKernel {
    pub n: usize,
    pub cutoff: f64,
    pub step: f64,
    pub profile: ThetaProfile,
    /// tables[j][i] = (d/dξ)^j F θ₁ at ξ = i·step, i ≥ 0.
    tables: Vec<Vec<f64>>,
}

/// Default cutoff H of the θ-kernel.
pub const DEFAULT_KERNEL_CUTOFF: f64 = 24.0;
/// Default tabulation step of the θ-kernel.
pub const DEFAULT_KERNEL_STEP: f64 = 1.0 / 128.0;

/// Builds the default kernel (smoothed-box profile) for cutoff H.
pub fn build_theta_kernel(n: usize, h: f64) -> Result<ThetaKernel> {
    ThetaKernel::build(n, h, ThetaProfile::smoothed_box_for(h), DEFAULT_KERNEL_STEP)
}

impl ThetaKernel {
    pub fn build(n: usize, cutoff: f64, profile: ThetaProfile, step: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::Configuration(format!("kernel dimension {n} not in 1..=3")));
        }
        if cutoff < 4.0 {
            return Err(Error::Configuration(format!("kernel cutoff H = {cutoff} < 4")));
        }
        if !(step > 0.0 && step <= 0.125) {
            return Err(Error::Configuration(format!("kernel step {step} outside (0, 1/8]")));
        }
        let count = (cutoff / step).ceil() as usize + 1;
        let nodes = Self::nodes(&profile);
        let tables: Vec<Vec<f64>> = (0..KERNEL_TABLES)
            .map(|j| {
                (0..count)
                    .into_par_iter()
                    .map(|i| Self::quadrature_on(&nodes, i as f64 * step, j as u32))
                    .collect()
            })
            .collect();
        let kernel = ThetaKernel { n, cutoff, step, profile, tables };
        kernel.verify()?;
        Ok(kernel)
    }

    fn nodes(profile: &ThetaProfile) -> Vec<(f64, f64)> {
        let reach = profile.reach();
        let d = profile.quadrature_step();
        let half = (reach / d).ceil() as i64;
        (-half..=half)
            .map(|i| {
                let x = i as f64 * d;
                (x, profile.value(x) * d / TWO_PI)
            })
            .filter(|(_, w)| *w != 0.0)
            .collect()
    }

    /// (d/dξ)^j F θ₁(ξ) = (2π)^{-1} ∫ (−ix)^j θ₁(x) e^{−ixξ} dx by the trapezoid rule.
    fn quadrature_on(nodes: &[(f64, f64)], xi: f64, j: u32) -> f64 {
        let mut acc = 0.0;
        for &(x, w) in nodes {
            let z = C64::new(0.0, -x).powu(j) * C64::from_polar(1.0, -x * xi);
            acc += w * z.re;
        }
        acc
    }

    /// Direct quadrature of (d/dξ)^j F θ₁(ξ), independent of the tables.
    pub fn transform_quadrature(&self, xi: f64, j: u32) -> f64 {
        Self::quadrature_on(&Self::nodes(&self.profile), xi, j)
    }

    fn verify(&self) -> Result<()> {
        let h = self.cutoff.floor() as i64;
        for k in 0..=h {
            let v = self.value_1d(k as f64, 0);
            let expect = if k == 0 { 1.0 } else { 0.0 };
            if (v - expect).abs() >= 1e-8 {
                return Err(Error::Construction(format!(
                    "interpolation property fails at k = {k}: F theta = {v:.3e}"
                )));
            }
        }
        let nodes = Self::nodes(&self.profile);
        let mut tail: f64 = 0.0;
        let mut xi = self.cutoff;
        let alias_free = 0.4 * TWO_PI / self.profile.quadrature_step();
        while xi <= (4.0 * self.cutoff + 16.0).min(alias_free) {
            tail = tail.max(Self::quadrature_on(&nodes, xi, 0).abs());
            xi += 0.125;
        }
        if tail >= 1e-10 {
            return Err(Error::Construction(format!(
                "kernel tail beyond H = {} is {tail:.2e} (needs < 1e-10)",
                self.cutoff
            )));
        }
        for i in 0..50 {
            let x = TWO_PI * ((i as f64 * 0.618_033_988_749_895).fract() - 0.5) * 3.0;
            let p = self.periodized_profile(x);
            if (p - 1.0).abs() >= 1e-10 {
                return Err(Error::Construction(format!("P theta({x}) = {p} differs from 1")));
            }
        }
        Ok(())
    }

    /// Σ_k θ₁(x + 2πk).
    pub fn periodized_profile(&self, x: f64) -> f64 {
        let reach = self.profile.reach();
        let lo = ((-reach - x) / TWO_PI).floor() as i64 - 1;
        let hi = ((reach - x) / TWO_PI).ceil() as i64 + 1;
        (lo..=hi).map(|k| self.profile.value(x + TWO_PI * k as f64)).sum()
    }

    /// Pθ(x) = Π_j Σ_k θ₁(x_j + 2πk).
    pub fn periodized_theta(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.periodized_profile(v)).product()
    }

    /// (d/dξ)^d F θ₁(ξ) by quintic Hermite interpolation; zero beyond the cutoff.
    pub fn value_1d(&self, xi: f64, d: u32) -> f64 {
        debug_assert!(d <= KERNEL_MAX_DERIVATIVE);
        let a = xi.abs();
        if a > self.cutoff {
            return 0.0;
        }
        let parity = if xi < 0.0 && d % 2 == 1 { -1.0 } else { 1.0 };
        let pos = a / self.step;
        let last = self.tables[0].len() - 1;
        let i = (pos.floor() as usize).min(last - 1);
        let t = pos - i as f64;
        let h = self.step;
        let (f, g, s) = (&self.tables[d as usize], &self.tables[d as usize + 1], &self.tables[d as usize + 2]);
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 0.5 * t3 - t4 + 0.5 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let v = f[i] * h0
            + h * g[i] * h1
            + h * h * s[i] * h2
            + f[i + 1] * h5
            + h * g[i + 1] * h4
            + h * h * s[i + 1] * h3;
        parity * v
    }

    /// ∂^α F θ(ξ) = Π_j (d/dξ_j)^{α_j} F θ₁(ξ_j).
    pub fn value(&self, xi: &[f64], alpha: &[u32]) -> f64 {
        xi.iter().zip(alpha).map(|(&v, &a)| self.value_1d(v, a)).product()
    }
}

/// Evaluation rule of a symbol on T^n × R^n.
#[derive(Clone)]
pub enum EuclideanSymbolKind {
    Analytic(Arc<dyn Fn(&[f64], &[f64]) -> C64 + Send + Sync>),
    Extended { table: Arc<SymbolTable>, kernel: Arc<ThetaKernel> },
}

/// Symbol b(x, ξ) on T^n × R^n with provenance.
#[derive(Clone)]
pub struct EuclideanSymbol {
    pub n: usize,
    pub order: SymbolOrder,
    pub kind: EuclideanSymbolKind,
}

impl std::fmt::Debug for EuclideanSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            EuclideanSymbolKind::Analytic(_) => "analytic",
            EuclideanSymbolKind::Extended { .. } => "extended-from-toroidal",
        };
        f.debug_struct("EuclideanSymbol").field("n", &self.n).field("kind", &kind).finish()
    }
}

impl EuclideanSymbol {
    pub fn analytic(n: usize, order: SymbolOrder, f: impl Fn(&[f64], &[f64]) -> C64 + Send + Sync + 'static) -> Self {
        EuclideanSymbol { n, order, kind: EuclideanSymbolKind::Analytic(Arc::new(f)) }
    }

    pub fn is_extended(&self) -> bool {
        matches!(self.kind, EuclideanSymbolKind::Extended { .. })
    }

    /// Largest |ξ_j| at which an extended symbol can be evaluated.
    pub fn reach(&self) -> f64 {
        match &self.kind {
            EuclideanSymbolKind::Analytic(_) => f64::INFINITY,
            EuclideanSymbolKind::Extended { table, kernel } => table.bx().extent() as f64 - kernel.cutoff,
        }
    }

    fn check_reach(&self, xi: &[f64]) -> Result<()> {
        let r = self.reach();
        if xi.len() != self.n || xi.iter().any(|v| v.abs() > r + 1e-12) {
            return Err(Error::OutOfRange(format!(
                "evaluation at {xi:?} is closer than the kernel cutoff to the box boundary (reach {r})"
            )));
        }
        Ok(())
    }

    /// Kernel-weighted sum Σ_η ∂^α Fθ(ξ−η) w(η) over lattice points within the cutoff.
    fn kernel_sum(kernel: &ThetaKernel, table: &SymbolTable, xi: &[f64], alpha: &[u32], w: impl Fn(usize) -> C64) -> C64 {
        let n = xi.len();
        let h = kernel.cutoff;
        let ranges: Vec<(i64, i64)> = xi.iter().map(|&v| ((v - h).ceil() as i64, (v + h).floor() as i64)).collect();
        let weights: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                (ranges[j].0..=ranges[j].1)
                    .map(|eta| kernel.value_1d(xi[j] - eta as f64, alpha[j]))
                    .collect()
            })
            .collect();
        let bx = table.bx();
        let mut acc = C64::new(0.0, 0.0);
        let counts: Vec<usize> = weights.iter().map(|w| w.len()).collect();
        let total: usize = counts.iter().product();
        let mut eta = vec![0i64; n];
        for c in 0..total {
            let mut rem = c;
            let mut wt = 1.0;
            for j in (0..n).rev() {
                let i = rem % counts[j];
                rem /= counts[j];
                eta[j] = ranges[j].0 + i as i64;
                wt *= weights[j][i];
            }
            if wt == 0.0 {
                continue;
            }
            acc += w(bx.index(&eta).expect("reach checked")) * wt;
        }
        acc
    }

    /// b(x_ix, ξ) at a grid point of the underlying table (or at the grid point for analytic symbols).
    pub fn eval_grid(&self, grid: usize, ix: usize, xi: &[f64]) -> Result<C64> {
        self.derivative_grid(grid, ix, xi, &vec![0; self.n])
    }

    /// ∂_ξ^α b(x_ix, ξ) using the tabulated kernel derivatives.
    pub fn derivative_grid(&self, grid: usize, ix: usize, xi: &[f64], alpha: &[u32]) -> Result<C64> {
        self.check_reach(xi)?;
        match &self.kind {
            EuclideanSymbolKind::Analytic(f) => {
                if alpha.iter().any(|&a| a > 0) {
                    let x = grid_point(ix, self.n, grid);
                    return Ok(fd_derivative(|q| Ok(f(&x, q)), xi, alpha, 1e-3)?);
                }
                Ok(f(&grid_point(ix, self.n, grid), xi))
            }
            EuclideanSymbolKind::Extended { table, kernel } => {
                if table.grid() != grid {
                    return Err(Error::Configuration("grid differs from the extended table".into()));
                }
                if alpha.iter().any(|&a| a > KERNEL_MAX_DERIVATIVE) {
                    return Err(Error::OutOfRange(format!(
                        "kernel derivatives are tabulated up to order {KERNEL_MAX_DERIVATIVE}"
                    )));
                }
                let l = table.bx().len();
                let row = &table.values()[ix * l..(ix + 1) * l];
                Ok(Self::kernel_sum(kernel, table, xi, alpha, |k| row[k]))
            }
        }
    }

    /// ∂_ξ^α b by central differences at step h with one Richardson halving.
    pub fn derivative_fd(&self, grid: usize, ix: usize, xi: &[f64], alpha: &[u32], h: f64) -> Result<C64> {
        fd_derivative(|q| self.eval_grid(grid, ix, q), xi, alpha, h)
    }

    /// b(x, ξ) at an arbitrary x (trigonometric interpolation of extended tables).
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<C64> {
        self.check_reach(xi)?;
        match &self.kind {
            EuclideanSymbolKind::Analytic(f) => Ok(f(x, xi)),
            EuclideanSymbolKind::Extended { table, kernel } => {
                let (n, g) = (table.dim(), table.grid());
                let phases: Vec<C64> = (0..table.n_x())
                    .map(|idx| {
                        let nu: Vec<f64> = fft::unravel(idx, n, g)
                            .into_iter()
                            .map(|i| fft::bin_frequency(i, g) as f64)
                            .collect();
                        C64::from_polar(1.0, nu.iter().zip(x).map(|(a, b)| a * b).sum())
                    })
                    .collect();
                let zero_alpha = vec![0; n];
                Ok(Self::kernel_sum(kernel, table, xi, &zero_alpha, |k| {
                    let c = table.column_coefficients(k);
                    c.iter().zip(&phases).map(|(a, b)| a * b).sum()
                }))
            }
        }
    }

    /// max |b(x + 2πe_j, ξ) − b(x, ξ)| over a few sample points.
    pub fn periodicity_defect(&self, samples: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (x, xi) in samples {
            let base = self.eval(x, xi)?;
            for j in 0..self.n {
                let mut y = x.clone();
                y[j] += TWO_PI;
                worst = worst.max((self.eval(&y, xi)? - base).norm());
            }
        }
        Ok(worst)
    }
}

/// Tensor central-difference derivative with one Richardson halving.
pub fn fd_derivative(f: impl Fn(&[f64]) -> Result<C64>, xi: &[f64], alpha: &[u32], h: f64) -> Result<C64> {
    let stencil = |h: f64| -> Result<C64> {
        let n = xi.len();
        let counts: Vec<usize> = alpha.iter().map(|&a| a as usize + 1).collect();
        let total: usize = counts.iter().product();
        let mut acc = C64::new(0.0, 0.0);
        let mut q = vec![0.0; n];
        for c in 0..total {
            let mut rem = c;
            let mut wt = 1.0;
            for j in (0..n).rev() {
                let i = rem % counts[j];
                rem /= counts[j];
                let k = alpha[j] as f64;
                q[j] = xi[j] + (0.5 * k - i as f64) * h;
                let binom = binom_f64(alpha[j], i as u32);
                wt *= if i % 2 == 0 { binom } else { -binom } / h.powi(alpha[j] as i32);
            }
            acc += f(&q)? * wt;
        }
        Ok(acc)
    };
    let coarse = stencil(h)?;
    let fine = stencil(0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn binom_f64(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// a(x, ξ) = Σ_η (Fθ)(ξ − η) ã(x, η).
pub fn extend_symbol(table: &SymbolTable, kernel: &ThetaKernel) -> Result<EuclideanSymbol> {
    if kernel.n != table.dim() {
        return Err(Error::Configuration("kernel and table dimensions differ".into()));
    }
    Ok(EuclideanSymbol {
        n: table.dim(),
        order: table.order,
        kind: EuclideanSymbolKind::Extended { table: Arc::new(table.clone()), kernel: Arc::new(kernel.clone()) },
    })
}

/// Tabulates b on the grid × lattice.
pub fn restrict_symbol(b: &EuclideanSymbol, bx: FrequencyBox, grid: usize) -> Result<SymbolTable> {
    if bx.n != b.n {
        return Err(Error::Configuration("dimension mismatch".into()));
    }
    let pts: Vec<Vec<f64>> = bx.points().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
    let same_grid = match &b.kind {
        EuclideanSymbolKind::Extended { table, .. } => table.grid() == grid,
        EuclideanSymbolKind::Analytic(_) => true,
    };
    let nx = grid.pow(bx.n as u32);
    let values: Result<Vec<Vec<C64>>> = (0..nx)
        .into_par_iter()
        .map(|ix| {
            pts.iter()
                .map(|xi| {
                    if same_grid {
                        b.eval_grid(grid, ix, xi)
                    } else {
                        b.eval(&grid_point(ix, bx.n, grid), xi)
                    }
                })
                .collect()
        })
        .collect();
    let values: Vec<C64> = values?.into_iter().flatten().collect();
    SymbolTable::from_values(bx, grid, b.order, values)
}

/// One estimated constant sup |△^α ∂_x^β a| ⟨ξ⟩^{−m+ρ|α|−δ|β|}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConstant {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConstants {
    pub order: SymbolOrder,
    pub entries: Vec<ClassConstant>,
}

impl ClassConstants {
    pub fn get(&self, alpha: &[u32], beta: &[u32]) -> Option<f64> {
        self.entries
            .iter()
            .find(|c| c.alpha == alpha && c.beta == beta)
            .map(|c| c.value)
    }
}

/// Symbol-class constants over the grid and the core of the box.
pub fn estimate_class_constants(a: &SymbolTable, alpha_max: u32, beta_max: u32) -> Result<ClassConstants> {
    let bx = a.bx();
    if (bx.margin as u32) < alpha_max {
        return Err(Error::OutOfRange(format!(
            "box margin {} is smaller than the difference order {alpha_max}",
            bx.margin
        )));
    }
    let n = bx.n;
    let SymbolOrder { m, rho, delta } = a.order;
    let mut entries = Vec::new();
    for alpha in MultiIndex::up_to_order(n, alpha_max) {
        let d = a.difference(&alpha)?;
        for beta in MultiIndex::up_to_order(n, beta_max) {
            let t = d.x_derivative(&beta)?;
            let tb = t.bx();
            let expo = -m + rho * alpha.order() as f64 - delta * beta.order() as f64;
            let core: Vec<(usize, f64)> = (0..tb.len())
                .filter_map(|k| {
                    let p = tb.point(k);
                    tb.in_core(&p).then(|| (k, bracket_int(&p).powf(expo)))
                })
                .collect();
            let value = (0..t.n_x())
                .into_par_iter()
                .map(|ix| core.iter().map(|&(k, w)| t.at(ix, k).norm() * w).fold(0.0, f64::max))
                .reduce(|| 0.0, f64::max);
            entries.push(ClassConstant {
                alpha: alpha.entries().to_vec(),
                beta: beta.entries().to_vec(),
                value,
            });
        }
    }
    Ok(ClassConstants { order: a.order, entries })
}

/// Least-squares slope of ln C against ln⟨K⟩; a positive slope signals an unbounded constant.
pub fn growth_slope(ks: &[usize], constants: &[f64]) -> Result<f64> {
    if ks.len() != constants.len() || ks.len() < 2 {
        return Err(Error::UndefinedFit("need at least two (K, C) pairs".into()));
    }
    if constants.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::UndefinedFit("constants must be positive".into()));
    }
    let xs: Vec<f64> = ks.iter().map(|&k| bracket_int(&[k as i64]).ln()).collect();
    let ys: Vec<f64> = constants.iter().map(|c| c.ln()).collect();
    Ok(crate::calculus::least_squares(&xs, &ys).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::bracket;

    fn order0() -> SymbolOrder {
        SymbolOrder::classical(0.0)
    }

    fn kernel() -> ThetaKernel {
        build_theta_kernel(1, DEFAULT_KERNEL_CUTOFF).unwrap()
    }

    #[test]
    fn quintic_hermite_is_exact_on_quintics() {
        // Profile-free check of the interpolation weights.
        let mut k = kernel();
        let poly = |x: f64, d: u32| -> f64 {
            let c = [0.3, -1.0, 0.5, 2.0, -0.7, 0.1];
            let mut acc = 0.0;
            for (p, &cp) in c.iter().enumerate() {
                if p as u32 >= d {
                    let ff: f64 = (0..d).map(|i| (p as u32 - i) as f64).product();
                    acc += cp * ff * x.powi((p as u32 - d) as i32);
                }
            }
            acc
        };
        for (j, t) in k.tables.iter_mut().enumerate() {
            for (i, v) in t.iter_mut().enumerate() {
                *v = poly(i as f64 * DEFAULT_KERNEL_STEP, j as u32);
            }
        }
        for &x in &[0.013, 1.0 / 3.0, 2.71, 7.9] {
            for d in 0..=KERNEL_MAX_DERIVATIVE {
                let e = poly(x, d);
                assert!((k.value_1d(x, d) - e).abs() < 1e-9 * (1.0 + e.abs()), "x={x} d={d}");
            }
        }
    }

    #[test]
    fn kernel_interpolates_lattice() {
        let k = kernel();
        assert!((k.value_1d(0.0, 0) - 1.0).abs() < 1e-8);
        for i in 1..=10 {
            assert!(k.value_1d(i as f64, 0).abs() < 1e-8);
        }
        for i in 0..50 {
            let x = -7.0 + 0.29 * i as f64;
            assert!((k.periodized_theta(&[x]) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_tables_match_closed_form() {
        let k = kernel();
        let prof = k.profile;
        for i in 0..200 {
            let xi = -23.9 + 0.2391 * i as f64;
            let exact = prof.closed_form(xi).unwrap();
            assert!((k.value_1d(xi, 0) - exact).abs() < 1e-12, "xi={xi}");
        }
        // Derivatives against differences of the closed form.
        for &xi in &[0.37, 2.5, -5.1] {
            let h = 1e-4;
            let cf = |x: f64| prof.closed_form(x).unwrap();
            let d1 = (cf(xi + h) - cf(xi - h)) / (2.0 * h);
            assert!((k.value_1d(xi, 1) - d1).abs() < 1e-7);
        }
    }

    #[test]
    fn kernel_tail_is_enforced() {
        assert!(matches!(
            ThetaKernel::build(1, 12.0, ThetaProfile::CompactBump, DEFAULT_KERNEL_STEP),
            Err(Error::Construction(_))
        ));
        assert!(ThetaKernel::build(1, 3.0, ThetaProfile::smoothed_box_for(12.0), DEFAULT_KERNEL_STEP).is_err());
        assert!(build_theta_kernel(1, 12.0).is_ok());
    }

    #[test]
    fn compact_bump_kernel_with_wide_cutoff() {
        let k = ThetaKernel::build(1, 96.0, ThetaProfile::CompactBump, DEFAULT_KERNEL_STEP).unwrap();
        assert!((k.value_1d(0.0, 0) - 1.0).abs() < 1e-8);
        assert!(k.value_1d(3.0, 0).abs() < 1e-8);
        assert!((k.value_1d(2.3, 0) - k.transform_quadrature(2.3, 0)).abs() < 1e-12);
        assert!((k.value_1d(-2.3, 1) + k.transform_quadrature(2.3, 1)).abs() < 1e-11);
    }

    #[test]
    fn extension_interpolates_lattice_values() {
        let k = kernel();
        let bx = FrequencyBox::new(1, 40, 4).unwrap();
        let cases: Vec<Box<dyn Fn(&[f64], &[i64]) -> C64 + Sync>> = vec![
            Box::new(|_, _| C64::new(1.0, 0.0)),
            Box::new(|_, p| C64::new(p[0] as f64, 0.0)),
            Box::new(|x, p| C64::from_polar(bracket_int(p), x[0])),
        ];
        for f in cases {
            let t = SymbolTable::from_fn(bx, 128, order0(), &f).unwrap();
            let e = extend_symbol(&t, &k).unwrap();
            for xi in -20i64..=20 {
                for ix in [0usize, 5, 77] {
                    let v = e.eval_grid(128, ix, &[xi as f64]).unwrap();
                    assert!((v - t.get(ix, &[xi]).unwrap()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn extension_off_lattice_matches_direct_sum() {
        let k = kernel();
        let fine = ThetaKernel::build(1, DEFAULT_KERNEL_CUTOFF, k.profile, DEFAULT_KERNEL_STEP / 10.0).unwrap();
        let bx = FrequencyBox::new(1, 30, 4).unwrap();
        let t = SymbolTable::from_fn(bx, 128, SymbolOrder::classical(1.0), |_, p| C64::new(bracket_int(p), 0.0)).unwrap();
        let v = extend_symbol(&t, &k).unwrap().eval_grid(128, 0, &[0.5]).unwrap();
        let w = extend_symbol(&t, &fine).unwrap().eval_grid(128, 0, &[0.5]).unwrap();
        let direct: f64 = (-24i64..=24)
            .map(|eta| fine.transform_quadrature(0.5 - eta as f64, 0) * bracket_int(&[eta]))
            .sum();
        assert!((v - w).norm() < 1e-10);
        assert!((v.re - direct).abs() < 1e-10);
        // Quadratics are reproduced between lattice points.
        let q = SymbolTable::from_fn(bx, 128, SymbolOrder::classical(2.0), |_, p| C64::new((p[0] * p[0] - 3 * p[0]) as f64, 0.0)).unwrap();
        let e = extend_symbol(&q, &k).unwrap();
        for &xi in &[0.5, -2.25, 5.9] {
            let v = e.eval_grid(128, 3, &[xi]).unwrap();
            assert!((v.re - (xi * xi - 3.0 * xi)).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn extensions_from_different_kernels_agree() {
        let bx = FrequencyBox::new(1, 32, 100).unwrap();
        let g = bx.default_grid();
        let t = SymbolTable::from_fn(bx, g, SymbolOrder::classical(1.0), |x, p| {
            C64::new(bracket_int(p), 0.0) * (C64::new(2.0, 0.0) + C64::from_polar(1.0, x[0]))
        })
        .unwrap();
        let a = extend_symbol(&t, &kernel()).unwrap();
        let wide = build_theta_kernel(1, 40.0).unwrap();
        let b = extend_symbol(&t, &wide).unwrap();
        let bump = ThetaKernel::build(1, 96.0, ThetaProfile::CompactBump, DEFAULT_KERNEL_STEP).unwrap();
        let c = extend_symbol(&t, &bump).unwrap();
        // The extensions differ by a rapidly decaying symbol, not by zero.
        let diff = |e: &EuclideanSymbol, r: f64| {
            let mut d = 0.0f64;
            for xi in [r, -r, r + 0.5, -r - 0.5] {
                for ix in [0, g / 3] {
                    d = d.max((a.eval_grid(g, ix, &[xi]).unwrap() - e.eval_grid(g, ix, &[xi]).unwrap()).norm());
                }
            }
            d
        };
        let near = |e: &EuclideanSymbol| [0.1, 0.6, 1.1, 2.1].iter().map(|&r| diff(e, r)).fold(0.0, f64::max);
        let far_b = diff(&b, 16.1);
        assert!(far_b < 1e-7 && far_b < 1e-4 * near(&b), "{far_b} vs {}", near(&b));
        let far_c = diff(&c, 16.1);
        assert!(far_c < 1e-2 * near(&c), "{far_c} vs {}", near(&c));
    }

    #[test]
    fn extension_reach_is_checked() {
        let k = kernel();
        let bx = FrequencyBox::new(1, 30, 4).unwrap();
        let t = SymbolTable::from_fn(bx, 128, order0(), |_, _| C64::new(1.0, 0.0)).unwrap();
        let e = extend_symbol(&t, &k).unwrap();
        assert!(e.eval_grid(128, 0, &[10.0]).is_ok());
        assert!(matches!(e.eval_grid(128, 0, &[10.5]), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn extension_derivatives_two_routes() {
        let k = kernel();
        let bx = FrequencyBox::new(1, 40, 4).unwrap();
        let t = SymbolTable::from_fn(bx, 128, SymbolOrder::classical(2.0), |x, p| {
            C64::new((p[0] * p[0]) as f64, 0.0) * (1.0 + 0.5 * x[0].cos())
        })
        .unwrap();
        let e = extend_symbol(&t, &k).unwrap();
        for &xi in &[0.0, 3.3, -7.75, 12.2] {
            for ix in [0usize, 40] {
                let w = 1.0 + 0.5 * (TWO_PI * ix as f64 / 128.0).cos();
                let d1 = e.derivative_grid(128, ix, &[xi], &[1]).unwrap();
                let d2 = e.derivative_grid(128, ix, &[xi], &[2]).unwrap();
                let d3 = e.derivative_grid(128, ix, &[xi], &[3]).unwrap();
                assert!((d1.re - 2.0 * xi * w).abs() < 1e-9, "{d1}");
                assert!((d2.re - 2.0 * w).abs() < 1e-9, "{d2}");
                assert!(d3.norm() < 1e-8);
                let f1 = e.derivative_fd(128, ix, &[xi], &[1], 1e-3).unwrap();
                let f2 = e.derivative_fd(128, ix, &[xi], &[2], 1e-3).unwrap();
                assert!((f1 - d1).norm() < 1e-8);
                assert!((f2 - d2).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn euclidean_decay_of_extension() {
        // |∂^α a| ⟨ξ⟩^{−m+|α|} stays within 10× the toroidal constants along a ray.
        let k = kernel();
        let bx = FrequencyBox::new(1, 60, 4).unwrap();
        let t = SymbolTable::from_fn(bx, 256, SymbolOrder::classical(1.0), |x, p| {
            C64::new(bracket_int(p), 0.0) * (2.0 + x[0].sin())
        })
        .unwrap();
        let consts = estimate_class_constants(&t, 2, 0).unwrap();
        let e = extend_symbol(&t, &k).unwrap();
        for a in 0..=2u32 {
            let c = consts.get(&[a], &[0]).unwrap();
            for i in 0..70 {
                let xi = 0.5 + 0.5 * i as f64;
                let d = e.derivative_grid(256, 64, &[xi], &[a]).unwrap().norm();
                assert!(d * bracket(&[xi]).powf(-1.0 + a as f64) <= 10.0 * c, "a={a} xi={xi}");
            }
        }
    }

    #[test]
    fn restrict_examples() {
        let bx = FrequencyBox::new(2, 4, 1).unwrap();
        let b = EuclideanSymbol::analytic(2, order0(), |x, _| C64::from_polar(1.0, x[0]));
        let t = restrict_symbol(&b, bx, 16).unwrap();
        for ix in 0..t.n_x() {
            let v0 = t.at(ix, 0);
            assert!((0..bx.len()).all(|k| (t.at(ix, k) - v0).norm() < 1e-15));
        }
        let b = EuclideanSymbol::analytic(2, SymbolOrder::classical(1.0), |_, xi| C64::new(xi[0], 0.0));
        let t = restrict_symbol(&b, bx, 16).unwrap();
        for (k, p) in bx.points().enumerate() {
            assert_eq!(t.at(3, k), C64::new(p[0] as f64, 0.0));
        }
    }

    #[test]
    fn rough_rows_are_rejected() {
        let bx = FrequencyBox::new(1, 4, 0).unwrap();
        let r = SymbolTable::from_fn(bx, 16, order0(), |x, _| C64::new(if x[0] < 1.0 { 1.0 } else { 0.0 }, 0.0));
        assert!(matches!(r, Err(Error::Configuration(_))));
    }

    #[test]
    fn class_constant_examples() {
        let bx = FrequencyBox::new(1, 16, 4).unwrap();
        let t = SymbolTable::from_fn(bx, 64, SymbolOrder::classical(1.0), |_, p| C64::new(bracket_int(p), 0.0)).unwrap();
        let c = estimate_class_constants(&t, 2, 1).unwrap();
        assert!((c.get(&[0], &[0]).unwrap() - 1.0).abs() < 1e-14);
        assert!(c.entries.iter().all(|e| e.value.is_finite()));

        for k in [8usize, 16, 32] {
            let bx = FrequencyBox::new(1, k, 4).unwrap();
            let t = SymbolTable::from_fn(bx, bx.default_grid(), order0(), |x, _| C64::from_polar(1.0, x[0])).unwrap();
            let c = estimate_class_constants(&t, 1, 1).unwrap();
            assert!((c.get(&[0], &[1]).unwrap() - 1.0).abs() < 1e-12);
        }

        let ks = [8usize, 16, 32];
        let cs: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let bx = FrequencyBox::new(1, k, 4).unwrap();
                let t = SymbolTable::from_fn(bx, bx.default_grid(), SymbolOrder::classical(1.0), |_, p| {
                    C64::new(bracket_int(p).powi(2), 0.0)
                })
                .unwrap();
                estimate_class_constants(&t, 0, 0).unwrap().get(&[0], &[0]).unwrap()
            })
            .collect();
        let slope = growth_slope(&ks, &cs).unwrap();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn class_constants_monotone_under_enlargement() {
        for w in [-1i64, 0, 2] {
            for m in [-1.0, 0.0, 1.0, 2.0] {
                let build = |k: usize| {
                    let bx = FrequencyBox::new(1, k, 3).unwrap();
                    let t = SymbolTable::from_fn(bx, 128, SymbolOrder::classical(m), |x, p| {
                        C64::from_polar(bracket_int(p).powf(m), w as f64 * x[0])
                    })
                    .unwrap();
                    estimate_class_constants(&t, 2, 2).unwrap()
                };
                let small = build(10);
                let large = build(20);
                for (a, b) in small.entries.iter().zip(&large.entries) {
                    assert!(b.value >= a.value - 1e-12);
                }
            }
        }
    }

    #[test]
    fn amplitude_tables() {
        let bx = FrequencyBox::new(1, 4, 2).unwrap();
        let s = SymbolTable::from_fn(bx, 16, order0(), |x, p| C64::from_polar(1.0 + p[0] as f64, x[0])).unwrap();
        let a = AmplitudeTable::from_symbol(&s).unwrap();
        a.check_rows().unwrap();
        let d = a.diagonal();
        assert!(d.max_diff_core(&s).unwrap() == 0.0);
        let ay = AmplitudeTable::from_symbol_in_y(&s).unwrap();
        assert!(ay.diagonal().max_diff_core(&s).unwrap() == 0.0);
        let dy = ay.y_falling_derivative(&MultiIndex::new(vec![1]).unwrap(), 1).unwrap();
        // D_y e^{iy} = e^{iy}
        assert!(dy.diagonal().max_diff_core(&s).unwrap() < 1e-13);
        let big = FrequencyBox::new(2, 20, 4).unwrap();
        assert!(AmplitudeTable::from_fn(big, 128, order0(), |_, _, _| C64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn table_operations() {
        let bx = FrequencyBox::new(1, 6, 3).unwrap();
        let t = SymbolTable::from_fn(bx, 32, SymbolOrder::classical(2.0), |x, p| {
            C64::new((p[0] * p[0]) as f64, 0.0) * C64::from_polar(1.0, 2.0 * x[0])
        })
        .unwrap();
        let d = t.difference(&MultiIndex::new(vec![2]).unwrap()).unwrap();
        assert_eq!(d.bx().margin, 1);
        // Second difference of ξ² is 2.
        for ix in 0..32 {
            let w = C64::from_polar(1.0, 2.0 * TWO_PI * ix as f64 / 32.0);
            for k in 0..d.bx().len() {
                assert!((d.at(ix, k) - w * 2.0).norm() < 1e-11);
            }
        }
        let dx = t.x_derivative(&MultiIndex::new(vec![1]).unwrap()).unwrap();
        let fd = t.x_falling_derivative(&MultiIndex::new(vec![2]).unwrap(), -1).unwrap();
        for ix in 0..32 {
            for k in 0..bx.len() {
                assert!((dx.at(ix, k) - t.at(ix, k) * C64::new(0.0, 2.0)).norm() < 1e-11);
                // (−2)(−3) = 6
                assert!((fd.at(ix, k) - t.at(ix, k) * 6.0).norm() < 1e-10);
            }
        }
        assert!(t.difference(&MultiIndex::new(vec![4]).unwrap()).is_err());
    }
}
