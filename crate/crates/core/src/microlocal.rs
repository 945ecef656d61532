//! Numerical toroidal wave-front diagnostic: decay of localized Fourier coefficients over discrete cones.

use crate::calculus::{fit_decay_order_with_floor, DecaySource, ShellSpec, NUMERICAL_ZERO};
use crate::error::{Error, Result};
use crate::harmonic::GridFunction;
use crate::lattice::FrequencyBox;
use crate::quantize::apply_pdo;
use crate::symbols::SymbolTable;
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::PI;

/// Default decay threshold: slopes above it count as "not rapidly decaying".
pub const DEFAULT_THRESHOLD: f64 = -4.0;
/// Default exponent p of the cos^{2p} localizers.
pub const DEFAULT_BUMP_POWER: u32 = 4;

/// {ξ ∈ Z^n : ξ·ω ≥ |ξ| cos(half_angle), |ξ| ≥ r₀}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCone {
    pub direction: Vec<f64>,
    pub half_angle: f64,
    pub min_radius: f64,
}

impl DiscreteCone {
    pub fn new(direction: Vec<f64>, half_angle: f64, min_radius: f64) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !(half_angle > 0.0 && half_angle <= PI) || min_radius < 0.0 {
            return Err(Error::Configuration("cone needs a nonzero direction and a half-angle in (0, pi]".into()));
        }
        Ok(DiscreteCone { direction: direction.iter().map(|v| v / norm).collect(), half_angle, min_radius })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn contains(&self, xi: &[i64]) -> bool {
        let r = xi.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if r == 0.0 || r < self.min_radius {
            return false;
        }
        let dot: f64 = xi.iter().zip(&self.direction).map(|(&a, b)| a as f64 * b).sum();
        dot >= r * self.half_angle.cos() - 1e-12 * r
    }

    /// The cone must contain lattice points of every dyadic shell inside the core of `bx`.
    pub fn check_nonempty(&self, bx: &FrequencyBox) -> Result<()> {
        if self.dim() != bx.n {
            return Err(Error::Configuration("cone and box dimensions differ".into()));
        }
        for r in dyadic_radii(bx.k) {
            let hit = bx.points().any(|p| bx.in_core(&p) && in_shell(&p, r) && self.contains(&p));
            if !hit {
                return Err(Error::UndefinedFit(format!("cone {:?} has no lattice points on the shell |xi| = {r}", self.direction)));
            }
        }
        Ok(())
    }

    /// `count` cones with evenly spaced directions in the plane of the first two axes (n ≥ 2),
    /// or the two half-lines ±e₁ (n = 1).
    pub fn fan(n: usize, count: usize, half_angle: f64) -> Result<Vec<DiscreteCone>> {
        if n == 1 {
            return Ok(vec![Self::new(vec![1.0], half_angle, 0.0)?, Self::new(vec![-1.0], half_angle, 0.0)?]);
        }
        (0..count)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / count as f64;
                let mut d = vec![0.0; n];
                d[0] = a.cos();
                d[1] = a.sin();
                Self::new(d, half_angle, 0.0)
            })
            .collect()
    }
}

fn dyadic_radii(k: usize) -> Vec<f64> {
    [1, 2, 4, 8].iter().map(|&s| (s * (k / 8)) as f64).collect()
}

fn in_shell(p: &[i64], r: f64) -> bool {
    let m = p.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
    m >= r - 0.5 && m < r + 0.5
}

/// χ(x) = Π_j cos^{2p}((x_j − c_j)/2): nonnegative, smooth, a trigonometric polynomial of degree p.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localizer {
    pub center: Vec<f64>,
    pub power: u32,
}

impl Localizer {
    pub fn new(center: Vec<f64>, power: u32) -> Self {
        Localizer { center, power }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| ((a - c) / 2.0).cos().powi(2 * self.power as i32))
            .product()
    }

    /// Centers on the lattice 2π·i/cells in each axis.
    pub fn cell_lattice(n: usize, cells: usize, power: u32) -> Vec<Localizer> {
        let total = cells.pow(n as u32);
        (0..total)
            .map(|c| {
                let mut rem = c;
                let mut center = vec![0.0; n];
                for j in (0..n).rev() {
                    center[j] = 2.0 * PI * (rem % cells) as f64 / cells as f64;
                    rem /= cells;
                }
                Localizer::new(center, power)
            })
            .collect()
    }
}

mod slope_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid slope {t}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveFrontEntry {
    /// Index into the localizer list.
    pub cell: usize,
    /// Index into the cone list.
    pub cone: usize,
    pub center: Vec<f64>,
    pub direction: Vec<f64>,
    /// Fitted decay slope; "-inf" when the coefficients vanish on the outer shells.
    #[serde(with = "slope_serde")]
    pub slope: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveFrontReport {
    pub threshold: f64,
    pub entries: Vec<WaveFrontEntry>,
}

impl WaveFrontReport {
    pub fn flagged(&self) -> Vec<(usize, usize)> {
        self.entries.iter().filter(|e| e.flagged).map(|e| (e.cell, e.cone)).collect()
    }

    /// Indices of cones flagged at some cell.
    pub fn flagged_cones(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.entries.iter().filter(|e| e.flagged).map(|e| e.cone).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

struct ConeData(Vec<(Vec<i64>, f64)>);

impl DecaySource for ConeData {
    fn magnitudes(&self) -> Vec<(Vec<i64>, f64)> {
        self.0.clone()
    }
}

/// Flags (cell, cone) pairs whose localized coefficients max|F_T(χu)| decay with slope > `threshold`
/// over the dyadic shells K/8, K/4, K/2, K of u's core box.
pub fn wavefront_detect(
    u: &GridFunction,
    localizers: &[Localizer],
    cones: &[DiscreteCone],
    threshold: f64,
) -> Result<WaveFrontReport> {
    let bx = u.bx();
    for cone in cones {
        cone.check_nonempty(&bx)?;
    }
    if localizers.iter().any(|l| l.center.len() != bx.n) {
        return Err(Error::Configuration("localizer dimension differs from the data".into()));
    }
    let core = FrequencyBox::new(bx.n, bx.k, 0)?;
    let spec = ShellSpec::Dyadic { k: bx.k };
    // sup χ = 1, so u's coefficient scale bounds every localized transform.
    let scale = u.coefficients_on(bx).values.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = NUMERICAL_ZERO * scale;
    let per_cell: Vec<Result<Vec<WaveFrontEntry>>> = localizers
        .par_iter()
        .enumerate()
        .map(|(ci, chi)| {
            let v = u.map_samples(|x, s| s * chi.value(x));
            let coeffs = v.coefficients_on(core);
            let pts: Vec<(Vec<i64>, f64)> = core.points().zip(&coeffs.values).map(|(p, c)| (p, c.norm())).collect();
            cones
                .iter()
                .enumerate()
                .map(|(ki, cone)| {
                    let data: Vec<(Vec<i64>, f64)> = pts.iter().filter(|(p, _)| cone.contains(p)).cloned().collect();
                    let cone_max = data.iter().map(|d| d.1).fold(0.0, f64::max);
                    let slope = if cone_max <= floor {
                        f64::NEG_INFINITY
                    } else {
                        fit_decay_order_with_floor(&ConeData(data), &spec, floor)?.slope
                    };
                    Ok(WaveFrontEntry {
                        cell: ci,
                        cone: ki,
                        center: chi.center.clone(),
                        direction: cone.direction.clone(),
                        slope,
                        flagged: slope > threshold,
                    })
                })
                .collect()
        })
        .collect();
    let mut entries = Vec::new();
    for r in per_cell {
        entries.extend(r?);
    }
    Ok(WaveFrontReport { threshold, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub input: WaveFrontReport,
    pub output: WaveFrontReport,
    /// (cell, cone) flagged for Au but not for u.
    pub new_flags: Vec<(usize, usize)>,
}

/// Compares the diagnostics of u and Au = Op(a)u.
pub fn operator_wf_containment(
    a: &SymbolTable,
    u: &GridFunction,
    cones: &[DiscreteCone],
    localizers: &[Localizer],
    threshold: f64,
) -> Result<ContainmentReport> {
    let input = wavefront_detect(u, localizers, cones, threshold)?;
    let au = apply_pdo(a, u)?;
    let output = wavefront_detect(&au, localizers, cones, threshold)?;
    let before: std::collections::HashSet<(usize, usize)> = input.flagged().into_iter().collect();
    let new_flags = output.flagged().into_iter().filter(|p| !before.contains(p)).collect();
    Ok(ContainmentReport { input, output, new_flags })
}

/// Sawtooth in x₁ with coefficients 1/(iξ₁) on the axis ξ' = 0 of the box, times a smooth factor in x₂.
pub fn sawtooth(bx: FrequencyBox, grid: usize) -> Result<GridFunction> {
    let mut c = crate::lattice::LatticeFunction::zeros(bx);
    let e = bx.extent() as i64;
    for k in -e..=e {
        if k == 0 {
            continue;
        }
        let mut xi = vec![0i64; bx.n];
        xi[0] = k;
        c.set(&xi, C64::new(0.0, -1.0 / k as f64))?;
    }
    let saw = GridFunction::from_coeffs(&c, grid)?;
    if bx.n == 1 {
        return Ok(saw);
    }
    Ok(saw.map_samples(|x, s| s * (1.0 + 0.5 * x[1].cos())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{bracket_int, LatticeFunction};
    use crate::quantize::random_band_limited;
    use crate::symbols::SymbolOrder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup2() -> (FrequencyBox, usize, Vec<Localizer>, Vec<DiscreteCone>) {
        let bx = FrequencyBox::new(2, 32, 6).unwrap();
        // Nyquist 48 exceeds the extent of χu (38 + 4).
        let g = 96;
        (bx, g, Localizer::cell_lattice(2, 4, DEFAULT_BUMP_POWER), DiscreteCone::fan(2, 8, PI / 8.0).unwrap())
    }

    #[test]
    fn cone_membership() {
        let c = DiscreteCone::new(vec![2.0, 0.0], PI / 8.0, 1.0).unwrap();
        assert!(c.contains(&[5, 2]) && !c.contains(&[5, 3]) && !c.contains(&[0, 0]));
        let bx = FrequencyBox::new(2, 32, 0).unwrap();
        assert!(c.check_nonempty(&bx).is_ok());
        let narrow = DiscreteCone::new(vec![1.0, 0.3], 1e-3, 0.0).unwrap();
        assert!(matches!(narrow.check_nonempty(&bx), Err(Error::UndefinedFit(_))));
    }

    #[test]
    fn trig_polynomial_has_no_flags() {
        let (bx, g, locs, cones) = setup2();
        let u = GridFunction::from_fn(bx, g, |x| C64::new((3.0 * x[0]).cos() + (x[0] - 2.0 * x[1]).sin(), 0.0)).unwrap();
        let r = wavefront_detect(&u, &locs, &cones, DEFAULT_THRESHOLD).unwrap();
        assert!(r.flagged().is_empty());
        assert!(r.entries.iter().all(|e| e.slope == f64::NEG_INFINITY));
        let json = serde_json::to_string(&r).unwrap();
        let back: WaveFrontReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn delta_flags_every_cone_at_the_origin() {
        let (bx, g, locs, cones) = setup2();
        let c = LatticeFunction::from_fn(bx, |_| C64::new((2.0 * PI).powi(-2), 0.0));
        let u = GridFunction::from_coeffs(&c, g).unwrap();
        let r = wavefront_detect(&u, &locs, &cones, DEFAULT_THRESHOLD).unwrap();
        // Cell 0 is centered at the origin.
        for k in 0..cones.len() {
            assert!(r.entries.iter().any(|e| e.cell == 0 && e.cone == k && e.flagged));
        }
        // The antipodal cell vanishes to order 8 at the origin.
        let far = locs.iter().position(|l| l.center == vec![PI, PI]).unwrap();
        assert!(r.entries.iter().filter(|e| e.cell == far).all(|e| !e.flagged));
    }

    #[test]
    fn sawtooth_flags_only_horizontal_cones() {
        let (bx, g, locs, cones) = setup2();
        let u = sawtooth(bx, g).unwrap();
        let r = wavefront_detect(&u, &locs, &cones, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(r.flagged_cones(), vec![0, 4]);
        // Invariance under a nonvanishing smooth factor.
        let v = u.map_samples(|x, s| s * (2.0 + x[0].cos()));
        assert_eq!(wavefront_detect(&v, &locs, &cones, DEFAULT_THRESHOLD).unwrap().flagged(), r.flagged());
    }

    #[test]
    fn one_dimensional_sawtooth() {
        let bx = FrequencyBox::new(1, 64, 6).unwrap();
        let g = bx.default_grid();
        let u = sawtooth(bx, g).unwrap();
        let cones = DiscreteCone::fan(1, 2, PI / 4.0).unwrap();
        let locs = Localizer::cell_lattice(1, 4, DEFAULT_BUMP_POWER);
        let r = wavefront_detect(&u, &locs, &cones, DEFAULT_THRESHOLD).unwrap();
        let slope = r.entries.iter().find(|e| e.cell == 0 && e.cone == 0).unwrap().slope;
        assert!((slope + 1.0).abs() < 0.1, "{slope}");
        let far = r.entries.iter().find(|e| e.cell == 2).unwrap();
        assert!(!far.flagged && far.slope < -7.0, "{}", far.slope);
    }

    #[test]
    fn containment_examples() {
        let (bx, g, locs, cones) = setup2();
        let u = sawtooth(bx, g).unwrap();
        let one = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |_, _| C64::new(1.0, 0.0)).unwrap();
        let r = operator_wf_containment(&one, &u, &cones, &locs, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(r.input.flagged(), r.output.flagged());
        let smooth = SymbolTable::from_fn(bx, g, SymbolOrder::classical(-8.0), |_, p| C64::new(bracket_int(p).powi(-8), 0.0)).unwrap();
        let r = operator_wf_containment(&smooth, &u, &cones, &locs, DEFAULT_THRESHOLD).unwrap();
        assert!(r.new_flags.is_empty() && r.output.flagged().is_empty());
        let shift = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, _| C64::from_polar(1.0, x[0])).unwrap();
        assert!(operator_wf_containment(&shift, &u, &cones, &locs, DEFAULT_THRESHOLD).unwrap().new_flags.is_empty());
    }

    #[test]
    fn random_order_zero_symbols_add_no_flags() {
        let bx = FrequencyBox::new(1, 64, 6).unwrap();
        let g = bx.default_grid();
        let cones = DiscreteCone::fan(1, 2, PI / 4.0).unwrap();
        let locs = Localizer::cell_lattice(1, 4, DEFAULT_BUMP_POWER);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = sawtooth(bx, g).unwrap();
        let smooth = random_band_limited(FrequencyBox::new(1, 3, 0).unwrap(), g, &mut rng).unwrap().with_box(bx).unwrap();
        for data in [u.clone(), u.zip_with(&smooth, |a, b| a + b).unwrap()] {
            for _ in 0..3 {
                let c: Vec<[f64; 3]> = (0..5).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
                let a = SymbolTable::from_fn(bx, g, SymbolOrder::classical(0.0), |x, p| {
                    let w = p[0] as f64 / bracket_int(p);
                    (0..5)
                        .map(|j| {
                            let nu = j as f64 - 2.0;
                            C64::from_polar(1.0, nu * x[0]) * (c[j][0] + c[j][1] * w + c[j][2] / bracket_int(p))
                        })
                        .sum()
                })
                .unwrap();
                assert!(operator_wf_containment(&a, &data, &cones, &locs, DEFAULT_THRESHOLD).unwrap().new_flags.is_empty());
            }
        }
    }
}
