//! Multi-dimensional FFTs on N^n grids, row-major with axis 0 slowest.

use crate::C64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::cell::RefCell;
use std::collections::hash_map::Entry;
use std::sync::Arc;

type Plan = Arc<dyn Fft<f64>>;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Plan>> = RefCell::new(HashMap::new());
    static FREQUENCIES: RefCell<HashMap<(usize, usize), Arc<Vec<i64>>>> = RefCell::new(HashMap::new());
}

fn plan(size: usize, inverse: bool) -> Plan {
    PLANS.with(|c| {
        c.borrow_mut()
            .entry((size, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(size)
                } else {
                    planner.plan_fft_forward(size)
                }
            })
            .clone()
    })
}

/// Signed frequencies of every bin of an N^n transform, flattened as [idx·n + j].
pub(crate) fn signed_frequencies(n: usize, size: usize) -> Arc<Vec<i64>> {
    FREQUENCIES.with(|c| match c.borrow_mut().entry((n, size)) {
        Entry::Occupied(e) => e.get().clone(),
        Entry::Vacant(e) => {
            let total = size.pow(n as u32);
            let mut out = Vec::with_capacity(total * n);
            for idx in 0..total {
                out.extend(unravel(idx, n, size).into_iter().map(|i| bin_frequency(i, size)));
            }
            e.insert(Arc::new(out)).clone()
        }
    })
}

/// Unnormalized transform: forward uses e^{-i}, inverse e^{+i}.
pub(crate) fn fft_nd(data: &mut [C64], n: usize, size: usize, inverse: bool) {
    debug_assert_eq!(data.len(), size.pow(n as u32));
    let p = plan(size, inverse);
    let mut scratch = vec![C64::new(0.0, 0.0); p.get_inplace_scratch_len()];
    let total = data.len();
    let mut line = vec![C64::new(0.0, 0.0); size];
    for axis in 0..n {
        let stride = size.pow((n - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(size) {
                p.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * size;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[start + k * stride];
                }
                p.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[start + k * stride] = *v;
                }
            }
        }
    }
}

/// Signed frequency carried by FFT bin `i` of a length-`size` transform.
pub(crate) fn bin_frequency(i: usize, size: usize) -> i64 {
    if i <= size / 2 {
        i as i64
    } else {
        i as i64 - size as i64
    }
}

/// FFT bin holding the signed frequency `f`.
pub(crate) fn frequency_bin(f: i64, size: usize) -> usize {
    f.rem_euclid(size as i64) as usize
}

/// Multi-index of grid point `idx` (axis 0 slowest).
pub(crate) fn unravel(mut idx: usize, n: usize, size: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for j in (0..n).rev() {
        out[j] = idx % size;
        idx /= size;
    }
    out
}

pub(crate) fn ravel(ix: &[usize], size: usize) -> usize {
    ix.iter().fold(0, |acc, &i| acc * size + i)
}

/// Fourier coefficients û(ν) = N^{-n} Σ_x u(x) e^{-ix·ν} of grid samples, in FFT bin order.
pub(crate) fn coefficients(samples: &[C64], n: usize, size: usize) -> Vec<C64> {
    let mut data = samples.to_vec();
    fft_nd(&mut data, n, size, false);
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|v| *v *= scale);
    data
}

/// Grid samples Σ_ν c(ν) e^{ix·ν} of coefficients given in FFT bin order.
pub(crate) fn synthesize(coeffs: &[C64], n: usize, size: usize) -> Vec<C64> {
    let mut data = coeffs.to_vec();
    fft_nd(&mut data, n, size, true);
    data
}

/// Applies a Fourier multiplier m(ν) to periodic samples.
pub(crate) fn apply_multiplier(
    samples: &[C64],
    n: usize,
    size: usize,
    m: impl Fn(&[i64]) -> C64,
) -> Vec<C64> {
    let mut c = coefficients(samples, n, size);
    let freqs = signed_frequencies(n, size);
    for (v, nu) in c.iter_mut().zip(freqs.chunks_exact(n)) {
        *v *= m(nu);
    }
    synthesize(&c, n, size)
}

/// e^{2πik/size} for k = 0..size.
pub(crate) fn unit_roots(size: usize) -> Vec<C64> {
    (0..size)
        .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / size as f64))
        .collect()
}

/// Index into [`unit_roots`] of e^{ix·ξ} at grid point `ix` (multi-index form).
pub(crate) fn phase_index(ix: &[usize], xi: &[i64], size: usize) -> usize {
    ix.iter()
        .zip(xi)
        .fold(0i64, |acc, (&i, &v)| acc + i as i64 * v)
        .rem_euclid(size as i64) as usize
}
