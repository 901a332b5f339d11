//! Subcommand bodies. Each returns tabular rows, named JSON reports and the
//! list of failed assertions; writing them out is left to the caller.

use std::collections::BTreeMap;

use ksep_core::analytics::{
    full_step_intensity, intensity, intensity_truncated, kappa_bound_check, kappa_tau, limit_constant, limit_intensity,
    positive_set, tau_bound_check, AnalyticsError, KappaTauOptions,
};
use ksep_core::exactsg::{
    check_difference_formula, check_factorial_bound, check_kappa_tau_bounds, check_main_corollary,
    check_negative_association, check_nto2, check_product_measure_bound, check_sum_symmetry, check_vu, label_count,
    ExactError, InstanceSpec, Report, SiteKernel, TIME_GRID,
};
use ksep_core::experiment::{run_cell, Cell, ExperimentError};
use ksep_core::intervals::{HalfOpen, IntervalError, IntervalUnion, LatticeInterval, LatticeSet};
use ksep_core::kernel::JumpKernel;
use ksep_core::profiles::{InitialProfile, Variant};
use ksep_core::scaling::{make_time_map, ScalingError, ScalingMap};
use ksep_core::sim::{order_statistics, ParticleSnapshot};
use ksep_core::stats::{gumbel_cdf, ks_statistic, ks_test, poisson_dispersion, spacing_test, trend_check, StatsError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Weight};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot write {0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub reports: BTreeMap<String, Value>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            ..Self::default()
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    fn report(&mut self, name: &str, value: impl Serialize) -> Result<(), RunError> {
        self.reports.insert(name.into(), serde_json::to_value(value)?);
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn interval(lo: f64, hi: f64) -> Result<HalfOpen, RunError> {
    Ok(HalfOpen::new(lo, hi)?)
}

struct Setup {
    kernel: JumpKernel,
    profile: InitialProfile,
    sigma: f64,
    /// Constant of the limiting PRM intensity `c e^{−x} dx`.
    c: f64,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, RunError> {
    let kernel = cfg.kernel()?;
    let profile = cfg.profile()?;
    let sigma = kernel.sigma();
    let c = limit_constant(cfg.limit_case(), profile.c_nu(), sigma, profile.k);
    Ok(Setup {
        kernel,
        profile,
        sigma,
        c,
    })
}

/// One grid cell: the cell itself and the map its samples are rescaled by.
fn cells(cfg: &ExperimentConfig, s: &Setup) -> Result<Vec<(Cell, ScalingMap)>, RunError> {
    cfg.grid
        .t
        .iter()
        .enumerate()
        .map(|(id, &t)| {
            let cell = Cell {
                profile: s.profile.clone(),
                t,
                l: cfg.grid.l_rule.length(t)?,
                replicas: cfg.run.replicas,
                seed: cfg.run.seed,
                id: id as u64,
                engine: cfg.run.engine,
            };
            let map = cfg.grid.l_rule.scaling_map(s.sigma, t)?;
            Ok((cell, map))
        })
        .collect()
}

fn cell_info(cell: &Cell, map: &ScalingMap) -> Value {
    json!({ "t": cell.t, "l": cell.l, "replicas": cell.replicas, "id": cell.id, "map": map })
}

/// Top order statistics per replica.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let s = setup(cfg)?;
    let m_max = cfg.simulate.m_max;
    let mut out = Outcome::new(&["t", "l", "replica", "rank", "position", "rescaled"]);
    let mut info = Vec::new();
    for (cell, map) in cells(cfg, &s)? {
        let tops = run_cell(&cell, &s.kernel, |snap| order_statistics(snap, m_max))?;
        for (r, xs) in tops.iter().enumerate() {
            for (m, x) in xs.iter().enumerate() {
                let (pos, v) = match x {
                    Some(x) => (x.to_string(), num(map.forward(*x as f64))),
                    None => (String::new(), String::new()),
                };
                out.row(vec![
                    num(cell.t),
                    cell.l.to_string(),
                    r.to_string(),
                    m.to_string(),
                    pos,
                    v,
                ]);
            }
        }
        info.push(cell_info(&cell, &map));
    }
    out.report("cells", info)?;
    Ok(out)
}

/// Exact semigroup checks on randomized small instances.
pub fn verify_exact(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let vc = &cfg.verify_exact;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let specs: Vec<InstanceSpec> = (0..vc.instances)
        .map(|_| InstanceSpec::random(&mut rng, vc.max_sites))
        .collect();
    let mut groups: BTreeMap<String, Vec<Report>> = BTreeMap::new();
    let mut push = |name: String, r: Report| groups.entry(name).or_default().push(r);

    for spec in &specs {
        let inst = spec.instance()?;
        let a = spec.set();
        push("vu".into(), check_vu(&inst, &inst.power_indicator(&a), &TIME_GRID)?);
        push(
            "difference_formula".into(),
            check_difference_formula(&inst, &a, spec.t)?,
        );

        // the pair checks need n ≥ 2
        let mut spec2 = spec.clone();
        spec2.n = spec2.n.max(2).min(spec2.sites * spec2.k as usize);
        let inst2 = spec2.instance()?;
        push(
            "negative_association".into(),
            check_negative_association(&inst2, &a, spec.t)?,
        );
        let b = random_subset(&mut rng, spec.sites);
        let bs: Vec<Vec<bool>> = (0..spec2.n)
            .map(|_| b.iter().map(|&x| x && rng.random_bool(0.7)).collect())
            .collect();
        push(
            "kappa_tau_partial_sums".into(),
            check_kappa_tau_bounds(&inst2, &a, &bs, &b, spec.t)?,
        );
        let slots: Vec<&[bool]> = bs.iter().map(Vec::as_slice).collect();
        let g = inst2.box_indicator(&slots);
        let f1 = inst2.power_indicator(&a);
        let all = vec![true; spec.sites];
        let kn = f64::from(spec.k).powi(spec2.n as i32);
        for w in &vc.weights {
            let h: Vec<f64> = match w {
                Weight::One => vec![1.0; inst2.omega.len()],
                Weight::LabelCount => (0..inst2.omega.len())
                    .map(|i| label_count(&inst2.omega, i, spec.k, &all) / kn)
                    .collect(),
            };
            let f2: Vec<f64> = inst2.restrict(&f1).iter().zip(&h).map(|(f, h)| f * h).collect();
            let tag = weight_tag(*w);
            push(
                format!("sum_symmetry_{tag}"),
                check_sum_symmetry(&inst2, &f1, &f2, &g, spec.t)?,
            );
            push(
                format!("main_corollary_{tag}"),
                check_main_corollary(&inst2, &a, &bs, &b, &h, spec.t)?,
            );
        }
    }

    for _ in 0..vc.instances {
        let (kern, k, h, sets, orders, t) = factorial_instance(&mut rng, vc.max_sites.min(6));
        push(
            "factorial_bound".into(),
            check_factorial_bound(&kern, k, &h, &sets, &orders, t)?,
        );
    }
    let mut made = 0;
    while made < vc.instances {
        let sites = rng.random_range(3..=vc.max_sites.clamp(3, 6));
        let kern = random_graph(&mut rng, sites)?;
        let k = rng.random_range(1..=3u32);
        let n = rng.random_range(1..=3usize);
        if n > sites * k as usize {
            continue;
        }
        let laws: Vec<Vec<f64>> = (0..sites)
            .map(|_| {
                let alpha = if rng.random_bool(0.25) {
                    0.0
                } else {
                    rng.random_range(0.05..=1.0)
                };
                binomial_law(k, alpha)
            })
            .collect();
        let a = random_subset(&mut rng, sites);
        let t = TIME_GRID[rng.random_range(0..TIME_GRID.len())];
        push(
            "product_measure".into(),
            check_product_measure_bound(&kern, k, &laws, &a, n, t)?,
        );
        made += 1;
    }

    let mut out = Outcome::new(&["check", "instance", "min_slack", "tol", "pass"]);
    for (name, reports) in &groups {
        for r in reports {
            out.row(vec![
                name.clone(),
                r.instance.clone(),
                num(r.min_slack),
                num(r.tol),
                r.pass.to_string(),
            ]);
        }
        let failing = reports.iter().filter(|r| !r.pass).count();
        if failing > 0 {
            out.failures
                .push(format!("{name}: {failing} of {} instances fail", reports.len()));
        }
        out.report(name, reports)?;
    }

    let mut nto2 = Vec::new();
    for _ in 0..vc.nto2_instances {
        let s = rng.random_range(1..=4usize);
        let n = rng.random_range(2..=4usize);
        let mut alpha = vec![vec![0i64; s]; s];
        for x in 0..s {
            for y in x + 1..s {
                let v = rng.random_range(-5..=5);
                alpha[x][y] = v;
                alpha[y][x] = v;
            }
        }
        let beta: Vec<i64> = (0..s).map(|_| rng.random_range(-5..=5)).collect();
        let rep = check_nto2(&alpha, &beta, n)?;
        out.row(vec![
            "pair_sum".into(),
            format!("S={s} n={n}"),
            num((rep.rhs - rep.lhs) as f64),
            "0".into(),
            rep.equal.to_string(),
        ]);
        nto2.push(rep);
    }
    let failing = nto2.iter().filter(|r| !r.equal).count();
    if failing > 0 {
        out.failures
            .push(format!("pair_sum: {failing} of {} instances fail", nto2.len()));
    }
    out.report("pair_sum", nto2)?;
    Ok(out)
}

fn weight_tag(w: Weight) -> &'static str {
    match w {
        Weight::One => "one",
        Weight::LabelCount => "label_count",
    }
}

fn random_subset<R: Rng>(rng: &mut R, sites: usize) -> Vec<bool> {
    let mut s: Vec<bool> = (0..sites).map(|_| rng.random::<bool>()).collect();
    if !s.contains(&true) {
        s[rng.random_range(0..sites)] = true;
    }
    s
}

fn random_graph<R: Rng>(rng: &mut R, sites: usize) -> Result<SiteKernel, ExactError> {
    if rng.random::<bool>() {
        SiteKernel::path(sites)
    } else {
        SiteKernel::torus(sites)
    }
}

fn binomial_law(k: u32, alpha: f64) -> Vec<f64> {
    (0..=k)
        .map(|j| {
            let c = (0..j).fold(1.0, |c, i| c * f64::from(k - i) / f64::from(i + 1));
            c * alpha.powi(j as i32) * (1.0 - alpha).powi((k - j) as i32)
        })
        .collect()
}

type FactorialInstance = (SiteKernel, u32, Vec<bool>, Vec<Vec<bool>>, Vec<u32>, f64);

/// Disjoint consecutive blocks with orders summing to at most 4.
fn factorial_instance<R: Rng>(rng: &mut R, max_sites: usize) -> FactorialInstance {
    loop {
        let sites = rng.random_range(3..=max_sites.max(3));
        let Ok(kern) = random_graph(rng, sites) else { continue };
        let k = rng.random_range(1..=3u32);
        let nsets = rng.random_range(1..=2usize);
        let orders: Vec<u32> = (0..nsets).map(|_| rng.random_range(1..=2)).collect();
        if orders.iter().sum::<u32>() as usize > sites * k as usize {
            continue;
        }
        let cut = rng.random_range(1..sites);
        let end = rng.random_range(cut + 1..=sites);
        let start = rng.random_range(0..cut);
        let sets: Vec<Vec<bool>> = if nsets == 1 {
            vec![(0..sites).map(|x| start <= x && x < end).collect()]
        } else {
            vec![
                (0..sites).map(|x| start <= x && x < cut).collect(),
                (0..sites).map(|x| cut <= x && x < end).collect(),
            ]
        };
        let h = random_subset(rng, sites);
        let t = TIME_GRID[rng.random_range(0..TIME_GRID.len())];
        return (kern, k, h, sets, orders, t);
    }
}

/// Finite-time intensities of rescaled sets against their limits.
pub fn intensity_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let s = setup(cfg)?;
    let k = s.profile.k;
    let kf = f64::from(k);
    let full = matches!(s.profile.variant, Variant::DeterministicStep { layers, len: None } if layers == k);
    let times = if cfg.intensity.t.is_empty() {
        &cfg.grid.t
    } else {
        &cfg.intensity.t
    };
    let case = cfg.limit_case();
    let mut out = Outcome::new(&[
        "t",
        "l",
        "lo",
        "hi",
        "truncated",
        "untruncated",
        "error",
        "full_step_route",
        "limit",
    ]);
    let mut worst_route = 0.0f64;
    for &t in times {
        let l = cfg.grid.l_rule.length(t)?;
        let map = cfg.grid.l_rule.scaling_map(s.sigma, t)?;
        for &[lo, hi] in &cfg.intensity.sets {
            if !lo.is_finite() {
                return Err(ConfigError::Field {
                    path: "intensity.sets".into(),
                    message: "lower ends must be finite".into(),
                }
                .into());
            }
            let set = IntervalUnion::single(interval(lo, hi)?);
            let pre = map.preimage_union(&set);
            let trunc = intensity_truncated(&s.profile, l, &s.kernel, t / kf, &pre)?;
            let whole = intensity(&s.profile, &s.kernel, t / kf, &pre)?;
            let route = if full {
                let r = full_step_intensity(k, &s.kernel, t / kf, &pre)?;
                let rel = (r.value - whole.value).abs() / whole.value.abs().max(f64::MIN_POSITIVE);
                worst_route = worst_route.max(rel);
                num(r.value)
            } else {
                String::new()
            };
            let lim = limit_intensity(case, s.profile.c_nu(), s.sigma, k, &set);
            out.row(vec![
                num(t),
                l.to_string(),
                num(lo),
                num(hi),
                num(trunc.value),
                num(whole.value),
                num(trunc.error.max(whole.error)),
                route,
                num(lim),
            ]);
        }
    }
    if worst_route > cfg.intensity.route_tol {
        out.failures.push(format!(
            "full-step routes differ by {worst_route:.3e} (tol {:e})",
            cfg.intensity.route_tol
        ));
    }
    out.report(
        "intensity",
        json!({
            "limit_case": case,
            "limit_constant": s.c,
            "full_step": full,
            "max_route_relative_error": if full { Some(worst_route) } else { None },
            "route_tol": cfg.intensity.route_tol,
        }),
    )?;
    Ok(out)
}

/// `κ_t, τ_t` of `A = v_t⁻¹(lo, hi]`, `B = (−∞, 0]`, plus the comparison bounds.
pub fn kappa_tau_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let s = setup(cfg)?;
    let kc = &cfg.kappa_tau;
    let opts = KappaTauOptions::default();
    let b = LatticeSet::interval(LatticeInterval::at_most(0));
    let [lo, hi] = kc.rescaled;
    let mut out = Outcome::new(&["kind", "t", "param", "lhs", "rhs", "error", "pass"]);
    let mut series = Vec::new();
    for &t in &kc.t {
        let map = make_time_map(s.sigma, t)?;
        let a = map.preimage_union(&IntervalUnion::single(interval(lo, hi)?)).lattice();
        let r = kappa_tau(&s.kernel, t, &a, &b, &opts)?;
        let err = r.quad_error + r.truncation_error;
        out.row(vec![
            "kappa".into(),
            num(t),
            format!("({lo},{hi}]"),
            num(r.kappa),
            String::new(),
            num(err),
            String::new(),
        ]);
        out.row(vec![
            "tau".into(),
            num(t),
            format!("({lo},{hi}]"),
            num(r.tau),
            String::new(),
            num(err),
            String::new(),
        ]);
        series.push(json!({ "t": t, "kappa": r.kappa, "tau": r.tau, "quad_error": r.quad_error, "truncation_error": r.truncation_error }));
    }
    let mut bounds = Vec::new();
    for p in &kc.kappa_bound {
        let c = kappa_bound_check(&s.kernel, p.t, p.b, p.l, &opts)?;
        let pass = c.holds(kc.tol);
        let param = format!("b={} L={}", p.b, p.l.map_or("inf".to_string(), |l| l.to_string()));
        if !pass {
            out.failures
                .push(format!("kappa bound at t={} {param}: {} > {}", p.t, c.lhs, c.rhs));
        }
        out.row(vec![
            "kappa_bound".into(),
            num(p.t),
            param.clone(),
            num(c.lhs),
            num(c.rhs),
            num(c.error),
            pass.to_string(),
        ]);
        bounds.push(json!({ "kind": "kappa_bound", "t": p.t, "param": param, "check": c, "pass": pass }));
    }
    if positive_set(&s.profile).is_some() {
        for p in &kc.tau_bound {
            let set = IntervalUnion::single(interval(p.lo, p.hi)?);
            let c = tau_bound_check(&s.profile, &s.kernel, p.t, &set, &opts)?;
            let pass = c.holds(kc.tol);
            let param = format!("({},{}]", p.lo, p.hi);
            if !pass {
                out.failures
                    .push(format!("tau bound at t={} A={param}: {} > {}", p.t, c.lhs, c.rhs));
            }
            out.row(vec![
                "tau_bound".into(),
                num(p.t),
                param.clone(),
                num(c.lhs),
                num(c.rhs),
                num(c.error),
                pass.to_string(),
            ]);
            bounds.push(json!({ "kind": "tau_bound", "t": p.t, "param": param, "check": c, "pass": pass }));
        }
    }
    out.report(
        "kappa_tau",
        json!({ "a_rescaled": kc.rescaled, "series": series, "bounds": bounds, "tol": kc.tol }),
    )?;
    Ok(out)
}

/// Per-replica summary used by `fit` and `trend`.
struct Extremes {
    top: Vec<f64>,
    counts: Vec<u64>,
}

fn summarize(snap: &ParticleSnapshot, map: &ScalingMap, ranks: usize, intervals: &[HalfOpen]) -> Extremes {
    let pos = snap.positions();
    let top = (0..ranks)
        .map(|m| pos.get(m).map_or(f64::NEG_INFINITY, |&x| map.forward(x as f64)))
        .collect();
    let mut counts = vec![0u64; intervals.len()];
    for &x in pos {
        let v = map.forward(x as f64);
        if let Some(j) = intervals.iter().position(|i| i.contains(v)) {
            counts[j] += 1;
        }
    }
    Extremes { top, counts }
}

/// Goodness of fit of each grid cell against the limiting PRM.
pub fn fit(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let s = setup(cfg)?;
    let fc = &cfg.fit;
    let intervals: Vec<HalfOpen> = fc
        .intervals
        .iter()
        .map(|&[lo, hi]| interval(lo, hi))
        .collect::<Result<_, _>>()?;
    ksep_core::intervals::check_disjoint(&intervals)?;
    let ranks = fc.spacings.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut out = Outcome::new(&["t", "test", "statistic", "p_value", "pass"]);
    let mut cells_json = Vec::new();
    for (cell, map) in cells(cfg, &s)? {
        let data = run_cell(&cell, &s.kernel, |snap| summarize(snap, &map, ranks, &intervals))?;
        let top: Vec<f64> = data.iter().map(|e| e.top[0]).collect();
        let gumbel = ks_test(&top, |x| gumbel_cdf(s.c, x), fc.level)?;
        let counts: Vec<Vec<u64>> = data.iter().map(|e| e.counts.clone()).collect();
        let disp = poisson_dispersion(&counts, fc.level)?;
        let t = cell.t;
        let record = |out: &mut Outcome, test: String, stat: f64, p: Option<f64>, pass: bool| {
            if !pass {
                out.failures.push(format!("t={t}: {test}"));
            }
            out.row(vec![
                num(t),
                test,
                num(stat),
                p.map_or(String::new(), num),
                pass.to_string(),
            ]);
        };
        record(
            &mut out,
            "gumbel_ks".into(),
            gumbel.statistic,
            gumbel.p_value,
            gumbel.pass,
        );
        let mut expected = Vec::new();
        for (d, iv) in disp.intervals.iter().zip(&intervals) {
            record(
                &mut out,
                format!("dispersion ({},{}]", iv.lo, iv.hi),
                d.ratio,
                Some(d.p_value),
                d.pass,
            );
            expected.push(s.c * iv.exp_measure());
        }
        record(
            &mut out,
            "dispersion total".into(),
            disp.total.ratio,
            Some(disp.total.p_value),
            disp.total.pass,
        );
        for &(i, j, r) in &disp.correlations {
            record(
                &mut out,
                format!("correlation {i},{j}"),
                r,
                None,
                r.abs() <= disp.correlation_bound,
            );
        }
        let mut spacings = Vec::new();
        for &k in &fc.spacings {
            let k_us = k as usize;
            let gaps: Vec<f64> = data
                .iter()
                .map(|e| e.top[k_us - 1] - e.top[k_us])
                .filter(|g| g.is_finite())
                .collect();
            let res = spacing_test(&gaps, k, fc.level)?;
            record(&mut out, format!("spacing {k}"), res.statistic, res.p_value, res.pass);
            spacings.push(json!({ "k": k, "result": res }));
        }
        cells_json.push(json!({
            "cell": cell_info(&cell, &map),
            "limit_constant": s.c,
            "gumbel": gumbel,
            "dispersion": disp,
            "expected_counts": expected,
            "spacings": spacings,
        }));
    }
    out.report("fit", cells_json)?;
    Ok(out)
}

/// KS distance of the rescaled maximum along the grid.
pub fn trend(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let s = setup(cfg)?;
    let mut out = Outcome::new(&["t", "l", "ks_distance", "replicas"]);
    let mut series = Vec::new();
    for (cell, map) in cells(cfg, &s)? {
        let top = run_cell(&cell, &s.kernel, |snap| {
            snap.positions()
                .first()
                .map_or(f64::NEG_INFINITY, |&x| map.forward(x as f64))
        })?;
        let d = ks_statistic(&top, |x| gumbel_cdf(s.c, x));
        out.row(vec![num(cell.t), cell.l.to_string(), num(d), cell.replicas.to_string()]);
        series.push((cell.t, d));
    }
    let res = trend_check(&series, cfg.trend.band, cfg.trend.cap);
    if !res.nonincreasing {
        out.failures
            .push(format!("KS distance rises by more than {}", cfg.trend.band));
    }
    if !res.below_cap {
        out.failures
            .push(format!("final KS distance not below {}", cfg.trend.cap));
    }
    out.report("trend", json!({ "limit_constant": s.c, "result": res }))?;
    Ok(out)
}
