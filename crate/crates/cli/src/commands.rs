//! One runner per scenario command.

use std::fs::File;
use std::io::BufReader;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use torus_pdo::calculus::{
    adjoint_symbol, compose_symbols, fit_decay_order, fit_decay_order_with_floor, operator_residual, parametrix,
    AsymptoticSeries, DecayFit, DecaySource, EllipticityWitness, ShellSpec,
};
use torus_pdo::evolve::{solve_fso, solve_reference, CauchyProblem, EvolvedSolution};
use torus_pdo::fso::{
    apply_fso, check_phase, compose_fso_pdo, compose_pdo_fso, compose_pdo_fso_difference_form, fso_l2_check,
    operator_norm, schur_l2_bound, FourierSeriesOp, FsoAmplitude,
};
use torus_pdo::lattice::{
    backward_difference, bracket_int, discrete_taylor, forward_difference, taylor_remainder_bound, FnLattice,
};
use torus_pdo::microlocal::{operator_wf_containment, sawtooth, wavefront_detect, DiscreteCone, Localizer};
use torus_pdo::quantize::{apply_pdo, extract_symbol, random_band_limited, random_band_limited_symbol, LinearOperatorHandle};
use torus_pdo::symbols::{
    build_theta_kernel, extend_symbol, restrict_symbol, SymbolOrder, SymbolTable, ThetaKernel, ThetaProfile,
    DEFAULT_KERNEL_CUTOFF, DEFAULT_KERNEL_STEP,
};
use torus_pdo::{FrequencyBox, GridFunction, LatticeEval, LatticeFunction, MultiIndex};

use crate::config::{self, Command, CompositionSide, Methods, Profile, Route, ScenarioConfig};
use crate::expr::Expr;
use crate::{CliError, CliResult, Outputs};

/// Magnitudes at or below this count as zero in residual fits.
const FIT_FLOOR: f64 = 1e-10;

pub(crate) fn dispatch(cfg: &ScenarioConfig, seed: u64, out: &mut Outputs) -> CliResult<()> {
    let ctx = Ctx { cfg, seed };
    match &cfg.command {
        Command::QuantizeApply(c) => quantize_apply(&ctx, c, out),
        Command::Extract(c) => extract(&ctx, c, out),
        Command::ExtendRoundtrip(c) => extend_roundtrip(&ctx, c, out),
        Command::ComposeOrder(c) => compose_order(&ctx, c, out),
        Command::AdjointCheck(c) => adjoint_check(&ctx, c, out),
        Command::Parametrix(c) => run_parametrix(&ctx, c, out),
        Command::FsoApply(c) => fso_apply(&ctx, c, out),
        Command::FsoCompose(c) => fso_compose(&ctx, c, out),
        Command::L2Bounds(c) => l2_bounds(&ctx, c, out),
        Command::Evolve(c) => evolve(&ctx, c, out),
        Command::Wavefront(c) => wavefront(&ctx, c, out),
        Command::TaylorSuite(c) => taylor_suite(&ctx, c, out),
    }
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
}

impl Ctx<'_> {
    fn n(&self) -> usize {
        self.cfg.common.n
    }

    fn k(&self) -> usize {
        self.cfg.common.k
    }

    fn margin(&self, default: usize) -> usize {
        self.cfg.common.margin.unwrap_or(default)
    }

    fn make_box(&self, margin: usize) -> CliResult<FrequencyBox> {
        FrequencyBox::new(self.n(), self.k(), margin).map_err(|e| CliError::setup("K", e))
    }

    fn core(&self) -> CliResult<FrequencyBox> {
        self.make_box(0)
    }

    /// Configured N, else the default grid of the widest box in use.
    fn grid(&self, widest: &FrequencyBox) -> CliResult<usize> {
        let g = self.cfg.common.grid.unwrap_or_else(|| widest.default_grid());
        if g < 2 * widest.extent() + 1 {
            return Err(CliError::Usage(format!(
                "config key `N`: grid {g} cannot resolve box extent {} (need N >= {})",
                widest.extent(),
                2 * widest.extent() + 1
            )));
        }
        Ok(g)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn expr(&self, key: &str, tag: &str) -> CliResult<Expr> {
        Expr::parse(tag, self.n()).map_err(|e| CliError::setup(key, e))
    }

    fn symbol(&self, key: &str, tag: &str, bx: FrequencyBox, grid: usize, order: f64) -> CliResult<SymbolTable> {
        self.expr(key, tag)?
            .symbol_table(bx, grid, SymbolOrder::classical(order), 0.0)
            .map_err(|e| CliError::setup(key, e))
    }

    /// Grid function from a CSV path, the keyword `sawtooth`, or an expression in x.
    fn data(&self, key: &str, spec: &str, bx: FrequencyBox, grid: usize) -> CliResult<GridFunction> {
        if let Some(path) = self.cfg.path_of(spec) {
            let file = File::open(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            return Ok(torus_pdo::io::read_grid_function_csv(BufReader::new(file), bx, grid)?);
        }
        if spec.trim() == "sawtooth" {
            return Ok(sawtooth(bx, grid)?);
        }
        self.expr(key, spec)?.grid_function(bx, grid, 0.0).map_err(|e| CliError::setup(key, e))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// JSON number, or a string for non-finite values.
fn jnum(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(num(v))
    }
}

/// Decay fit over the dyadic shells of K; data at or below `floor` everywhere is exact (slope −∞).
fn fit_residual(s: &impl DecaySource, k: usize, floor: f64) -> CliResult<DecayFit> {
    let global = s.magnitudes().iter().map(|d| d.1).fold(0.0, f64::max);
    if global <= floor {
        return Ok(DecayFit { slope: f64::NEG_INFINITY, residual: 0.0, points: Vec::new() });
    }
    Ok(fit_decay_order_with_floor(s, &ShellSpec::Dyadic { k }, floor)?)
}

fn max_abs(s: &SymbolTable) -> f64 {
    s.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn quantize_apply(ctx: &Ctx, c: &config::QuantizeApply, out: &mut Outputs) -> CliResult<()> {
    let bx = ctx.make_box(ctx.margin(0))?;
    let grid = ctx.grid(&bx)?;
    let a = ctx.symbol("symbol", &c.symbol, bx, grid, c.order)?;
    let f = ctx.data("f", &c.f, bx, grid)?;
    let u = apply_pdo(&a, &f)?;
    out.grid_function("output.csv", &u)?;
    out.json(
        "report.json",
        &json!({
            "input_norm": jnum(f.l2_norm()),
            "output_norm": jnum(u.l2_norm()),
            "input_discarded": jnum(u.discarded),
            "output_mass_outside_box": jnum(u.mass_outside_box()),
        }),
    )
}

fn extract(ctx: &Ctx, c: &config::Extract, out: &mut Outputs) -> CliResult<()> {
    let bx = ctx.make_box(ctx.margin(0))?;
    let grid = ctx.grid(&bx)?;
    let a = ctx.symbol("symbol", &c.symbol, bx, grid, c.order)?;
    let s = extract_symbol(&LinearOperatorHandle::from_symbol(&a), bx, grid)?.with_order(a.order);
    let err = max_abs(&s.sub(&a)?);
    out.write_with("symbol.csv", |w| Ok(torus_pdo::io::write_symbol_csv(&s, w)?))?;
    out.write_with("symbol.json", |w| Ok(torus_pdo::io::write_symbol_sidecar(&s, w)?))?;
    out.json("report.json", &json!({ "roundtrip_error": jnum(err) }))
}

fn kernel_for(n: usize, h: f64, profile: Profile) -> torus_pdo::Result<ThetaKernel> {
    match profile {
        Profile::SmoothedBox => build_theta_kernel(n, h),
        Profile::CompactBump => ThetaKernel::build(n, h, ThetaProfile::CompactBump, DEFAULT_KERNEL_STEP),
    }
}

fn extend_roundtrip(ctx: &Ctx, c: &config::ExtendRoundtrip, out: &mut Outputs) -> CliResult<()> {
    if !(c.h.is_finite() && c.h > 0.0) {
        return Err(CliError::Usage(format!("config key `H`: cutoff {} must be positive", c.h)));
    }
    let bx = ctx.make_box(ctx.margin(c.h.ceil() as usize + 2))?;
    let grid = ctx.grid(&bx)?;
    let core = ctx.core()?;
    let kernel = kernel_for(ctx.n(), c.h, c.profile).map_err(|e| CliError::setup("H", e))?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (i, tag) in c.symbols.iter().enumerate() {
        let a = ctx.symbol(&format!("symbols[{i}]"), tag, bx, grid, 0.0)?;
        let back = restrict_symbol(&extend_symbol(&a, &kernel)?, core, grid)?;
        let err = max_abs(&back.sub(&a.restrict_box(core)?)?);
        rows.push(vec![i.to_string(), num(err)]);
        errors.push(json!({ "symbol": tag, "max_error": jnum(err) }));
    }
    out.csv("roundtrip.csv", &["index", "max_error"], &rows)?;
    out.json("report.json", &json!({ "H": c.h, "profile": c.profile, "symbols": errors }))
}

/// u ↦ A(Bu).
fn composed(a: &SymbolTable, b: &SymbolTable) -> LinearOperatorHandle {
    let (a, b) = (a.clone(), b.clone());
    LinearOperatorHandle::new(a.bx(), a.grid(), move |u| apply_pdo(&a, &apply_pdo(&b, u)?))
}

fn order_rows(fits: &[(usize, DecayFit, f64)]) -> Vec<Vec<String>> {
    fits.iter().map(|(m, f, mx)| vec![m.to_string(), num(f.slope), num(f.residual), num(*mx)]).collect()
}

fn order_json(fits: &[(usize, DecayFit, f64)]) -> Value {
    Value::Array(
        fits.iter()
            .map(|(m, f, mx)| json!({ "M": m, "slope": jnum(f.slope), "residual": jnum(f.residual), "max_abs": jnum(*mx) }))
            .collect(),
    )
}

const ORDER_HEADER: [&str; 4] = ["M", "slope", "residual", "max_abs"];

fn check_ms(ms: &[usize]) -> CliResult<usize> {
    match ms.iter().max() {
        Some(&m) if ms.iter().all(|&v| v >= 1) => Ok(m),
        _ => Err(CliError::Usage("config key `M`: need a non-empty list of truncations >= 1".into())),
    }
}

fn compose_order(ctx: &Ctx, c: &config::ComposeOrder, out: &mut Outputs) -> CliResult<()> {
    let mmax = check_ms(&c.ms)?;
    let bx = ctx.make_box(ctx.margin(mmax - 1 + 4))?;
    let grid = ctx.grid(&bx)?;
    let core = ctx.core()?;
    let a = ctx.symbol("a", &c.a, bx, grid, c.order_a)?;
    let b = ctx.symbol("b", &c.b, bx, grid, c.order_b)?;
    let oracle = extract_symbol(&composed(&a, &b), bx, grid)?;
    let mut fits = Vec::new();
    let mut last = None;
    for &m in &c.ms {
        let s = compose_symbols(&a, &b, m).map_err(|e| CliError::setup("M", e))?;
        let resid = oracle.restrict_box(s.bx())?.sub(&s)?.restrict_box(core)?;
        fits.push((m, fit_residual(&resid, ctx.k(), FIT_FLOOR)?, max_abs(&resid)));
        if m == mmax {
            last = Some(s);
        }
    }
    let expected = match &c.expected {
        Some(tag) => {
            let e = ctx.symbol("expected", tag, core, grid, 0.0)?;
            Some(max_abs(&last.expect("mmax is in the list").restrict_box(core)?.sub(&e)?))
        }
        None => None,
    };
    out.csv("order.csv", &ORDER_HEADER, &order_rows(&fits))?;
    out.json(
        "report.json",
        &json!({ "rows": order_json(&fits), "expected_max_error": expected.map(jnum) }),
    )
}

fn adjoint_check(ctx: &Ctx, c: &config::AdjointCheck, out: &mut Outputs) -> CliResult<()> {
    if c.m == 0 {
        return Err(CliError::Usage("config key `M`: truncation must be >= 1".into()));
    }
    let bx = ctx.make_box(ctx.margin(c.m - 1))?;
    let grid = ctx.grid(&bx)?;
    let core = ctx.core()?;
    let a = ctx.symbol("symbol", &c.symbol, bx, grid, c.order)?;
    let astar = adjoint_symbol(&a, c.m)?;
    let mut rng = ctx.rng();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..c.pairs {
        let u = random_band_limited(core, grid, &mut rng)?;
        let v = random_band_limited(core, grid, &mut rng)?;
        let lhs = apply_pdo(&a, &u)?.inner(&v)?;
        let rhs = u.inner(&apply_pdo(&astar, &v)?)?;
        let err = (lhs - rhs).norm();
        worst = worst.max(err);
        rows.push(vec![i.to_string(), num(lhs.re), num(lhs.im), num(rhs.re), num(rhs.im), num(err)]);
    }
    let expected = match &c.expected {
        Some(tag) => {
            let e = ctx.symbol("expected", tag, core, grid, 0.0)?;
            Some(max_abs(&astar.restrict_box(core)?.sub(&e)?))
        }
        None => None,
    };
    out.csv("pairs.csv", &["pair", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "error"], &rows)?;
    out.json(
        "report.json",
        &json!({ "M": c.m, "pairs": c.pairs, "max_error": jnum(worst), "expected_max_error": expected.map(jnum) }),
    )
}

/// C₀ = ½ min |σ|/⟨ξ⟩^m over |ξ| ≥ N₀.
fn witness_for(a: &SymbolTable, m: f64, n0: f64) -> CliResult<EllipticityWitness> {
    let mut lo = f64::INFINITY;
    for (k, p) in a.bx().points().enumerate() {
        if torus_pdo::lattice::norm_int(&p) < n0 {
            continue;
        }
        for ix in 0..a.n_x() {
            lo = lo.min(a.at(ix, k).norm() / bracket_int(&p).powf(m));
        }
    }
    if !(lo > 0.0 && lo.is_finite()) {
        return Err(CliError::Data(format!("symbol is not elliptic of order {m} beyond |xi| = {n0}")));
    }
    Ok(EllipticityWitness { c0: 0.5 * lo, n0 })
}

fn run_parametrix(ctx: &Ctx, c: &config::Parametrix, out: &mut Outputs) -> CliResult<()> {
    if c.m == 0 {
        return Err(CliError::Usage("config key `M`: number of terms must be >= 1".into()));
    }
    let bx = ctx.make_box(ctx.margin(c.m - 1 + 4))?;
    let grid = ctx.grid(&bx)?;
    let core = ctx.core()?;
    let a0 = ctx.symbol("symbol", &c.symbol, bx, grid, 0.0)?;
    let order = match c.order {
        Some(m) => m,
        None => fit_decay_order(&a0.restrict_box(core)?, &ShellSpec::Dyadic { k: ctx.k() })?.slope.round(),
    };
    let a = a0.with_order(SymbolOrder::classical(order));
    let witness = witness_for(&a, order, c.n0)?;
    let u = GridFunction::from_coeffs(&LatticeFunction::from_fn(core, |_| C64::new(1.0, 0.0)), grid)?;
    let au = apply_pdo(&a, &u)?;
    let mut fits = Vec::new();
    for m in 1..=c.m {
        let b = parametrix(&AsymptoticSeries::single(a.clone()), m, witness)?.sum();
        let r = apply_pdo(&b, &au)?.sub(&u)?;
        let coeffs = r.coefficients_on(core);
        let mx = coeffs.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        fits.push((m, fit_residual(&coeffs, ctx.k(), 1e-12)?, mx));
    }
    out.csv("order.csv", &ORDER_HEADER, &order_rows(&fits))?;
    out.json(
        "report.json",
        &json!({
            "order": order,
            "witness": { "c0": jnum(witness.c0), "n0": witness.n0 },
            "rows": order_json(&fits),
            "slope": jnum(fits.last().map_or(f64::NAN, |f| f.1.slope)),
        }),
    )
}

fn fso_apply(ctx: &Ctx, c: &config::FsoApply, out: &mut Outputs) -> CliResult<()> {
    let bx = ctx.make_box(ctx.margin(0))?;
    let grid = ctx.grid(&bx)?;
    let phase = ctx.expr("phase", &c.phase)?.phase_table(bx, grid, c.t).map_err(|e| CliError::setup("phase", e))?;
    let report = check_phase(&phase);
    let amp = ctx.symbol("amplitude", &c.amplitude, bx, grid, c.order)?;
    let f = ctx.data("f", &c.f, bx, grid)?;
    out.json("phase_report.json", &report)?;
    let t = FourierSeriesOp::new(phase, FsoAmplitude::Symbol(amp))?;
    let u = apply_fso(&t, &f)?;
    out.grid_function("output.csv", &u)?;
    out.json(
        "report.json",
        &json!({
            "input_norm": jnum(f.l2_norm()),
            "output_norm": jnum(u.l2_norm()),
            "output_mass_outside_box": jnum(u.mass_outside_box()),
        }),
    )
}

fn fso_compose(ctx: &Ctx, c: &config::FsoCompose, out: &mut Outputs) -> CliResult<()> {
    let mmax = check_ms(&c.ms)?;
    let t_box = ctx.make_box(ctx.margin(mmax - 1 + 4))?;
    let extra = match (c.side, c.route) {
        (CompositionSide::FsoPdo, _) => 0,
        (CompositionSide::PdoFso, Route::Derivative) => DEFAULT_KERNEL_CUTOFF.ceil() as usize + 2,
        (CompositionSide::PdoFso, Route::Difference) => mmax + 4,
    };
    let p_box = ctx.make_box(t_box.margin + extra)?;
    let grid = ctx.grid(&p_box)?;
    let core = ctx.core()?;
    let phase = ctx.expr("phase", &c.phase)?.phase_table(t_box, grid, c.t).map_err(|e| CliError::setup("phase", e))?;
    let amp = ctx.symbol("amplitude", &c.amplitude, t_box, grid, c.order_amplitude)?;
    let p = ctx.symbol("symbol", &c.symbol, p_box, grid, c.order_symbol)?;
    // Roundoff floor scaled to the size of the composite.
    let floor = FIT_FLOOR * max_abs(&amp) * max_abs(&p.restrict_box(core)?);
    let t = FourierSeriesOp::new(phase, FsoAmplitude::Symbol(amp))?;
    let exact = {
        let (t, p) = (t.clone(), p.clone());
        let side = c.side;
        LinearOperatorHandle::new(t_box, grid, move |u| match side {
            CompositionSide::FsoPdo => apply_fso(&t, &apply_pdo(&p, u)?),
            CompositionSide::PdoFso => apply_pdo(&p, &apply_fso(&t, u)?),
        })
    };
    let kernel = match (c.side, c.route) {
        (CompositionSide::PdoFso, Route::Derivative) => Some(build_theta_kernel(ctx.n(), DEFAULT_KERNEL_CUTOFF)?),
        _ => None,
    };
    let spec = ShellSpec::Dyadic { k: ctx.k() };
    let points = spec.shell_points(&core);
    let mut fits = Vec::new();
    for &m in &c.ms {
        let amp_m = match (c.side, c.route, &kernel) {
            (CompositionSide::FsoPdo, _, _) => compose_fso_pdo(&t, &p, m)?,
            (CompositionSide::PdoFso, Route::Derivative, Some(k)) => compose_pdo_fso(&p, &t, m, k)?,
            (CompositionSide::PdoFso, _, _) => compose_pdo_fso_difference_form(&p, &t, m)?,
        };
        let tm = FourierSeriesOp::new(t.phase.restrict_box(amp_m.bx())?, amp_m)?;
        let approx = LinearOperatorHandle::new(tm.bx(), grid, move |u| apply_fso(&tm, u));
        let resid = operator_residual(&exact, &approx, core, &points)?;
        let mx = resid.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        fits.push((m, fit_residual(&resid, ctx.k(), floor)?, mx));
    }
    let rows: Vec<Vec<String>> = order_rows(&fits)
        .into_iter()
        .zip(&fits)
        .map(|(mut r, (m, _, _))| {
            r.push(num(c.order_amplitude + c.order_symbol - *m as f64));
            r
        })
        .collect();
    out.csv("order.csv", &["M", "slope", "residual", "max_abs", "expected_order"], &rows)?;
    out.json("report.json", &json!({ "side": c.side, "route": c.route, "rows": order_json(&fits) }))
}

fn l2_bounds(ctx: &Ctx, c: &config::L2Bounds, out: &mut Outputs) -> CliResult<()> {
    let bx = ctx.make_box(ctx.margin(0))?;
    let grid = ctx.grid(&bx)?;
    let mut symbols = Vec::new();
    for (i, tag) in c.symbols.iter().enumerate() {
        symbols.push((tag.clone(), ctx.symbol(&format!("symbols[{i}]"), tag, bx, grid, 0.0)?));
    }
    let mut rng = ctx.rng();
    for i in 0..c.random {
        symbols.push((format!("random {i}"), random_band_limited_symbol(bx, grid, 2, &mut rng)?));
    }
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut worst = 0.0f64;
    for (i, (label, a)) in symbols.iter().enumerate() {
        let bound = schur_l2_bound(a);
        let norm = operator_norm(&LinearOperatorHandle::from_symbol(a))?;
        let violation = (norm - bound).max(0.0);
        worst = worst.max(violation);
        rows.push(vec![i.to_string(), num(bound), num(norm), num(violation)]);
        entries.push(json!({ "symbol": label, "schur_bound": jnum(bound), "operator_norm": jnum(norm) }));
    }
    out.csv("bounds.csv", &["index", "schur_bound", "operator_norm", "violation"], &rows)?;
    if let Some(tag) = &c.phase {
        let phase = ctx.expr("phase", tag)?.phase_table(bx, grid, c.t).map_err(|e| CliError::setup("phase", e))?;
        let amp = ctx.symbol("amplitude", &c.amplitude, bx, grid, 0.0)?;
        let t = FourierSeriesOp::new(phase, FsoAmplitude::Symbol(amp))?;
        out.json("fso_l2.json", &fso_l2_check(&t)?)?;
    }
    out.json(
        "report.json",
        &json!({ "symbols": entries, "max_violation": jnum(worst), "bound_holds": worst <= 1e-8 }),
    )
}

fn evolve(ctx: &Ctx, c: &config::Evolve, out: &mut Outputs) -> CliResult<()> {
    if !(1..=4).contains(&c.m) {
        return Err(CliError::Usage(format!("config key `M`: transport truncation {} not in 1..=4", c.m)));
    }
    let bx = ctx.make_box(ctx.margin(0))?;
    let reach = if c.m > 1 { DEFAULT_KERNEL_CUTOFF.ceil() as usize + 2 } else { 0 };
    let wide = ctx.make_box(bx.margin + reach)?;
    let grid = ctx.grid(&wide)?;
    let a1 = ctx.expr("a1", &c.a1)?.lattice_function(wide, 0.0).map_err(|e| CliError::setup("a1", e))?;
    let f = ctx.data("f", &c.f, bx, grid)?;
    let problem = match &c.a0 {
        None => CauchyProblem::unperturbed(a1, f, c.times.clone()),
        Some(spec) => {
            let a0 = match ctx.cfg.path_of(spec) {
                Some(path) => {
                    let open = |p: &std::path::Path| {
                        File::open(p).map(BufReader::new).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
                    };
                    torus_pdo::io::read_symbol_table(open(&path)?, open(&config::sidecar_path(&path))?)?
                }
                None => ctx.symbol("a0", spec, wide, grid, 0.0)?,
            };
            CauchyProblem::new(a1, a0, f, c.times.clone())
        }
    }
    .map_err(|e| CliError::setup("times", e))?;
    let mut solutions: Vec<EvolvedSolution> = Vec::new();
    if matches!(c.method, Methods::Fso | Methods::Both) {
        solutions.push(solve_fso(&problem, c.m)?);
    }
    if matches!(c.method, Methods::Reference | Methods::Both) {
        solutions.push(solve_reference(&problem)?);
    }
    let mut methods = serde_json::Map::new();
    for s in &solutions {
        let name = serde_json::to_value(s.method)?.as_str().unwrap_or("method").to_string();
        for (i, u) in s.states.iter().enumerate() {
            out.grid_function(&format!("{name}_t{i:03}.csv"), u)?;
        }
        methods.insert(
            name,
            json!({
                "steps_per_unit": s.steps_per_unit,
                "diagnostics": s.diagnostics.iter().map(|d| json!({
                    "t": d.t, "norm": jnum(d.norm), "spectral_tail": jnum(d.spectral_tail)
                })).collect::<Vec<_>>(),
            }),
        );
    }
    let difference = if solutions.len() == 2 {
        let d = solutions[0]
            .states
            .iter()
            .zip(&solutions[1].states)
            .map(|(a, b)| Ok(jnum(a.max_diff(b)?)))
            .collect::<CliResult<Vec<_>>>()?;
        Some(d)
    } else {
        None
    };
    out.json(
        "diagnostics.json",
        &json!({ "M": c.m, "times": c.times, "methods": methods, "fso_minus_reference": difference }),
    )
}

fn wavefront(ctx: &Ctx, c: &config::Wavefront, out: &mut Outputs) -> CliResult<()> {
    let bx = ctx.make_box(ctx.margin(0))?;
    let grid = ctx.grid(&bx)?;
    let u = ctx.data("f", &c.f, bx, grid)?;
    let count = c.cones.unwrap_or(if ctx.n() == 1 { 2 } else { 8 });
    let cones = DiscreteCone::fan(ctx.n(), count, c.half_angle).map_err(|e| CliError::setup("cones", e))?;
    if c.cells == 0 {
        return Err(CliError::Usage("config key `cells`: need at least one cell per axis".into()));
    }
    let locs = Localizer::cell_lattice(ctx.n(), c.cells, c.power);
    match &c.symbol {
        None => {
            let report = wavefront_detect(&u, &locs, &cones, c.threshold)?;
            out.json("wavefront.json", &report.entries)
        }
        Some(tag) => {
            let a = ctx.symbol("symbol", tag, bx, grid, 0.0)?;
            let report = operator_wf_containment(&a, &u, &cones, &locs, c.threshold)?;
            out.json("wavefront.json", &report.input.entries)?;
            out.json("wavefront_output.json", &report.output.entries)?;
            out.json(
                "containment.json",
                &json!({
                    "input_flags": report.input.flagged(),
                    "output_flags": report.output.flagged(),
                    "new_flags": report.new_flags,
                }),
            )
        }
    }
}

#[derive(Default)]
struct Tally {
    instances: usize,
    failures: usize,
}

impl Tally {
    fn record(&mut self, ok: bool) {
        self.instances += 1;
        if !ok {
            self.failures += 1;
        }
    }

    fn json(&self) -> Value {
        json!({ "instances": self.instances, "failures": self.failures })
    }
}

/// Integer data supported in [−4, 4]^n.
fn random_finite(n: usize, rng: &mut ChaCha8Rng) -> FnLattice {
    let side = 9usize;
    let table: Vec<i64> = (0..side.pow(n as u32)).map(|_| rng.gen_range(-3..=3)).collect();
    FnLattice::new(n, move |x| {
        if x.iter().any(|v| v.abs() > 4) {
            return C64::new(0.0, 0.0);
        }
        let idx = x.iter().fold(0usize, |acc, &v| acc * side + (v + 4) as usize);
        C64::new(table[idx] as f64, 0.0)
    })
}

fn random_multi_index(n: usize, max_order: u32, rng: &mut ChaCha8Rng) -> MultiIndex {
    loop {
        let e: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=max_order)).collect();
        if e.iter().sum::<u32>() <= max_order {
            return MultiIndex::new(e).expect("small");
        }
    }
}

fn shifted(xi: &[i64], beta: &MultiIndex) -> Vec<i64> {
    xi.iter().zip(beta.entries()).map(|(a, &b)| a + b as i64).collect()
}

fn taylor_suite(ctx: &Ctx, c: &config::TaylorSuite, out: &mut Outputs) -> CliResult<()> {
    if !(1..=8).contains(&c.m_max) {
        return Err(CliError::Usage(format!("config key `M`: {} not in 1..=8", c.m_max)));
    }
    let mut rng = ctx.rng();
    let zero = C64::new(0.0, 0.0);
    let (mut leibniz, mut parts, mut exact, mut bound) = (Tally::default(), Tally::default(), Tally::default(), Tally::default());
    let mut worst_ratio = 0.0f64;
    for _ in 0..c.instances {
        // △^α(fg)(ξ) = Σ_{β≤α} C(α,β) △^β f(ξ) △^{α−β} g(ξ+β).
        let n = rng.gen_range(1..=2);
        let (f, g) = (random_finite(n, &mut rng), random_finite(n, &mut rng));
        let alpha = random_multi_index(n, 3, &mut rng);
        let xi: Vec<i64> = (0..n).map(|_| rng.gen_range(-6..=6)).collect();
        let (f2, g2) = (f.clone(), g.clone());
        let fg = FnLattice::new(n, move |x| f2.value(x) * g2.value(x));
        let lhs = forward_difference(&fg, &alpha, &xi)?;
        let mut rhs = zero;
        for beta in alpha.below() {
            let rest = alpha.minus(&beta).expect("β ≤ α");
            rhs += forward_difference(&f, &beta, &xi)?
                * forward_difference(&g, &rest, &shifted(&xi, &beta))?
                * alpha.binomial(&beta)? as f64;
        }
        leibniz.record(lhs == rhs);

        // Σ f △^α g = (−1)^{|α|} Σ (△̄^α f) g over a window containing both supports.
        let alpha = random_multi_index(n, 4, &mut rng);
        let window = FrequencyBox::new(n, 12, 0)?;
        let (mut l, mut r) = (zero, zero);
        for p in window.points() {
            l += f.value(&p) * forward_difference(&g, &alpha, &p)?;
            r += backward_difference(&f, &alpha, &p)? * g.value(&p);
        }
        let sign = if alpha.order() % 2 == 0 { 1.0 } else { -1.0 };
        parts.record(l == r * sign);

        // Remainder vanishes for integer polynomials of degree < M.
        let m = rng.gen_range(1..=c.m_max as u32);
        let monos: Vec<(MultiIndex, i64)> = MultiIndex::up_to_order(n, m - 1)
            .into_iter()
            .map(|a| (a, rng.gen_range(-3..=3)))
            .collect();
        let poly = FnLattice::new(n, move |x| {
            let v: i64 = monos
                .iter()
                .map(|(a, c)| c * x.iter().zip(a.entries()).map(|(b, &e)| b.pow(e)).product::<i64>())
                .sum();
            C64::new(v as f64, 0.0)
        });
        let xi: Vec<i64> = (0..n).map(|_| rng.gen_range(-6..=6)).collect();
        let theta: Vec<i64> = (0..n).map(|_| rng.gen_range(-4..=4)).collect();
        let (_, rem) = discrete_taylor(&poly, &xi, &theta, m)?;
        exact.record(rem == zero);

        // |r_M| ≤ the remainder bound for smooth data.
        let cs: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let smooth = FnLattice::new(n, move |x| {
            let a = x[0] as f64;
            let b = x.get(1).map_or(0.0, |&v| v as f64);
            C64::new(cs[0] * a.powi(3) + cs[1] * a * b * b, cs[2] / (1.0 + a * a + b * b) + cs[3] * (0.3 * a).sin())
        });
        let xi: Vec<i64> = (0..n).map(|_| rng.gen_range(-8..=8)).collect();
        let theta: Vec<i64> = (0..n).map(|_| rng.gen_range(-3..=3)).collect();
        let (_, rem) = discrete_taylor(&smooth, &xi, &theta, m)?;
        let b = taylor_remainder_bound(&smooth, &xi, &theta, m)?;
        bound.record(rem.norm() <= b * (1.0 + 1e-12) + 1e-12);
        if b > 0.0 {
            worst_ratio = worst_ratio.max(rem.norm() / b);
        }
    }
    let all_pass = [&leibniz, &parts, &exact, &bound].iter().all(|t| t.failures == 0);
    out.json(
        "report.json",
        &json!({
            "leibniz": leibniz.json(),
            "summation_by_parts": parts.json(),
            "taylor_exact_for_polynomials": exact.json(),
            "remainder_bound": { "instances": bound.instances, "failures": bound.failures, "max_ratio": jnum(worst_ratio) },
            "all_pass": all_pass,
        }),
    )
}
