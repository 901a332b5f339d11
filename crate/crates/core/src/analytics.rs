//! Deterministic evaluation of intensities and of the correlation functionals
//! `κ_t`, `τ_t`.
//!
//! Every value comes with an error budget. Spatial sums are cut to a finite
//! range and the remainder is bounded with Chernoff estimates from the
//! kernel's exponential moment, which are monotone in time and therefore
//! valid uniformly over `s ∈ [0, t]`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::intervals::{IntervalUnion, LatticeInterval, LatticeSet};
use crate::kernel::JumpKernel;
use crate::profiles::{InitialProfile, Variant};
use crate::quad::adaptive_simpson;
use crate::rw::{transition_probs, RwError, TransitionTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error(transparent)]
    Rw(#[from] RwError),
    #[error("quantity is infinite: {0}")]
    Infinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A value with a bound on its absolute numerical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Tolerances for the intensity sums.
pub const INTENSITY_TOL: f64 = 1e-14;

fn walk_table(kernel: &JumpKernel, time: f64, tol: f64) -> Result<TransitionTable, RwError> {
    transition_probs(kernel, 1.0, time, 0, tol)
}

/// Sum of `m(x) · P_0(ζ ∈ set − x)` over `x ∈ [lo, 0]`, `lo` possibly unbounded.
fn occupation_sum(
    tab: &TransitionTable,
    set: &LatticeSet,
    support_lo: Option<i64>,
    m_max: f64,
    mean: impl Fn(i64) -> f64,
) -> Result<Estimate, AnalyticsError> {
    if set.is_empty() || m_max == 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let (_, whi) = tab.window();
    // sites below x_min see the set only through the upper tail of the walk
    let (x_min, tail) = match (support_lo, set.min()) {
        (Some(lo), _) => (lo, 0.0),
        (None, Some(a)) => {
            let x_min = a - whi;
            (x_min, m_max * tab.chernoff_tail_sum(whi as f64))
        }
        (None, None) => {
            return Err(AnalyticsError::Infinite(
                "set unbounded below with an unbounded profile".into(),
            ))
        }
    };
    let mut value = 0.0;
    let mut count = 0u64;
    for x in x_min.min(1)..=0 {
        let m = mean(x);
        if m != 0.0 {
            value += m * tab.prob_in_from(x, set);
            count += 1;
        }
    }
    Ok(Estimate {
        value,
        error: tail + count as f64 * m_max * tab.tail_bound,
    })
}

/// `μ_t^ν(set) = Σ_x E_ν[η(x)] P_x(ζ_{Kt} ∈ set)`.
pub fn intensity(
    profile: &InitialProfile,
    kernel: &JumpKernel,
    t: f64,
    set: &IntervalUnion,
) -> Result<Estimate, AnalyticsError> {
    let len = profile.support_len();
    intensity_with_support(profile, len, kernel, t, set)
}

/// `μ_t^{ν_L}(set)` for the profile restricted to `(−len, 0]`.
pub fn intensity_truncated(
    profile: &InitialProfile,
    len: u64,
    kernel: &JumpKernel,
    t: f64,
    set: &IntervalUnion,
) -> Result<Estimate, AnalyticsError> {
    let len = profile.support_len().map_or(len, |s| s.min(len));
    intensity_with_support(profile, Some(len), kernel, t, set)
}

fn intensity_with_support(
    profile: &InitialProfile,
    len: Option<u64>,
    kernel: &JumpKernel,
    t: f64,
    set: &IntervalUnion,
) -> Result<Estimate, AnalyticsError> {
    let k = f64::from(profile.k);
    let tab = walk_table(kernel, k * t, INTENSITY_TOL)?;
    let lattice = set.lattice();
    let support_lo = len.map(|l| 1 - l as i64);
    occupation_sum(&tab, &lattice, support_lo, k, |x| {
        if support_lo.is_some_and(|lo| x < lo) {
            0.0
        } else {
            profile.mean_occupation(x)
        }
    })
}

/// `μ_t(y, ∞) = K · E_0[(ζ_{Kt} − ⌊y⌋)_+]` for the full step.
pub fn full_step_tail(k: u32, kernel: &JumpKernel, t: f64, y: f64) -> Result<Estimate, AnalyticsError> {
    let tab = walk_table(kernel, f64::from(k) * t, INTENSITY_TOL)?;
    Ok(full_step_tail_from(&tab, k, y))
}

fn full_step_tail_from(tab: &TransitionTable, k: u32, y: f64) -> Estimate {
    if y == f64::INFINITY {
        return Estimate { value: 0.0, error: 0.0 };
    }
    let m = y.floor() as i64;
    let k = f64::from(k);
    Estimate {
        value: k * tab.positive_part_mean(m),
        error: k * tab.positive_part_mean_error(m),
    }
}

/// Full-step intensity of a union of `(a, b]` pieces computed as differences
/// of [`full_step_tail`] values.
pub fn full_step_intensity(
    k: u32,
    kernel: &JumpKernel,
    t: f64,
    set: &IntervalUnion,
) -> Result<Estimate, AnalyticsError> {
    let tab = walk_table(kernel, f64::from(k) * t, INTENSITY_TOL)?;
    let mut value = 0.0;
    let mut error = 0.0;
    for c in set.components() {
        if c.lo == f64::NEG_INFINITY {
            return Err(AnalyticsError::Infinite(
                "full-step intensity of a set unbounded below".into(),
            ));
        }
        let lo = full_step_tail_from(&tab, k, c.lo);
        let hi = full_step_tail_from(&tab, k, c.hi);
        value += lo.value - hi.value;
        error += lo.error + hi.error;
    }
    Ok(Estimate { value, error })
}

/// Scaling regime of the limiting Poisson random measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LimitCase {
    /// Full step: intensity `Kσ e^{−x} dx`.
    Full,
    /// Truncated step with `L √(log t / t) → ψ`.
    Psi(f64),
    /// Truncated step with `L √(log t / t) → 0`, on the block scale.
    Block,
}

/// Constant `c` such that the limit PRM has intensity `c e^{−x} dx`.
pub fn limit_constant(case: LimitCase, c_nu: f64, sigma: f64, k: u32) -> f64 {
    match case {
        LimitCase::Full => f64::from(k) * sigma,
        LimitCase::Psi(psi) => c_nu * sigma * -(-psi / sigma).exp_m1(),
        LimitCase::Block => c_nu,
    }
}

/// Limit intensity of `set`: the constant times `λ(set)`.
pub fn limit_intensity(case: LimitCase, c_nu: f64, sigma: f64, k: u32, set: &IntervalUnion) -> f64 {
    limit_constant(case, c_nu, sigma, k) * set.exp_measure()
}

/// `(k)_n = k(k−1)⋯(k−n+1)`, zero when `n > k`.
pub fn falling_factorial_count(k: u64, n: u32) -> u128 {
    if u64::from(n) > k {
        return 0;
    }
    (0..u64::from(n)).fold(1u128, |acc, i| acc * u128::from(k - i))
}

/// `(x)_n` for a real argument.
pub fn falling_factorial(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, i| acc * (x - f64::from(i)))
}

/// Numerical controls for [`kappa_tau`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaTauOptions {
    /// Absolute target for the quadrature error estimate.
    pub quad_tol: f64,
    /// Absolute target for the spatial truncation remainder.
    pub trunc_tol: f64,
    /// Tolerance of every transition table.
    pub table_tol: f64,
    pub min_panels: usize,
    pub max_depth: u32,
}

impl Default for KappaTauOptions {
    fn default() -> Self {
        Self {
            quad_tol: 1e-10,
            trunc_tol: 1e-12,
            table_tol: 1e-14,
            min_panels: 64,
            max_depth: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaTauReport {
    pub kappa: f64,
    pub tau: f64,
    pub quad_error: f64,
    pub truncation_error: f64,
}

/// Tables of `ζ_s` indexed by `s`, shared between the two time arguments.
struct TableCache<'a> {
    kernel: &'a JumpKernel,
    tol: f64,
    tables: HashMap<u64, Arc<TransitionTable>>,
}

impl<'a> TableCache<'a> {
    fn new(kernel: &'a JumpKernel, tol: f64) -> Self {
        Self {
            kernel,
            tol,
            tables: HashMap::new(),
        }
    }

    fn get(&mut self, s: f64) -> Result<Arc<TransitionTable>, RwError> {
        let s = s.max(0.0);
        if let Some(t) = self.tables.get(&s.to_bits()) {
            return Ok(t.clone());
        }
        let t = Arc::new(walk_table(self.kernel, s, self.tol)?);
        self.tables.insert(s.to_bits(), t.clone());
        Ok(t)
    }
}

/// Endpoints `lo − ½` and `hi + ½` of every finite side, doubled to stay integral.
fn boundary_points2(set: &LatticeSet) -> Vec<i64> {
    let mut out = Vec::new();
    for p in set.parts() {
        if let Some(lo) = p.lo {
            out.push(2 * lo - 1);
        }
        if let Some(hi) = p.hi {
            out.push(2 * hi + 1);
        }
    }
    out
}

fn dilate(set: &LatticeSet, w: i64) -> LatticeSet {
    LatticeSet::new(
        set.parts()
            .iter()
            .map(|p| LatticeInterval {
                lo: p.lo.map(|l| l - w),
                hi: p.hi.map(|h| h + w),
            })
            .collect(),
    )
}

fn intersect(a: &LatticeSet, b: &LatticeSet) -> LatticeSet {
    LatticeSet::new(
        b.parts()
            .iter()
            .flat_map(|p| a.intersect_interval(p).parts().to_vec())
            .collect(),
    )
}

/// Smallest `W` (from a doubling search) with `bound(W) ≤ target`.
fn search_width(start: i64, target: f64, bound: impl Fn(i64) -> f64) -> Result<i64, AnalyticsError> {
    let mut w = start.max(1);
    for _ in 0..40 {
        if bound(w) <= target {
            return Ok(w);
        }
        w *= 2;
    }
    Err(AnalyticsError::Rw(RwError::ToleranceUnreachable {
        tol: target,
        terms: 0,
        window: w as usize,
    }))
}

/// `τ_t(A, B) = Σ_{x∈A} P_x(ζ_t ∈ B)²`.
pub fn tau(
    kernel: &JumpKernel,
    t: f64,
    a: &LatticeSet,
    b: &LatticeSet,
    opts: &KappaTauOptions,
) -> Result<Estimate, AnalyticsError> {
    let tab = walk_table(kernel, t, opts.table_tol)?;
    tau_from(&tab, a, b, opts)
}

fn tau_from(
    tab: &TransitionTable,
    a: &LatticeSet,
    b: &LatticeSet,
    opts: &KappaTauOptions,
) -> Result<Estimate, AnalyticsError> {
    if a.is_empty() || b.is_empty() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let n_ends = boundary_points2(b).len() as f64;
    let start = (tab.window().1 - tab.origin).max(1);
    let w = search_width(start, opts.trunc_tol, |w| {
        4.0 * n_ends * tab.chernoff_tail_sum(w as f64)
    })?;
    let core = intersect(a, &dilate(b, w));
    if !core.is_finite() {
        return Err(AnalyticsError::Infinite(
            "τ over a set overlapping B on an unbounded range".into(),
        ));
    }
    let pts = core.points();
    let value: f64 = pts.iter().map(|&x| tab.prob_in_from(x, b).powi(2)).sum();
    Ok(Estimate {
        value,
        error: 4.0 * n_ends * tab.chernoff_tail_sum(w as f64) + 2.0 * pts.len() as f64 * tab.tail_bound,
    })
}

/// Range of `x` for the κ sum together with the remainder bound for `κ_t(A, B)`.
fn kappa_range(
    tab_t: &TransitionTable,
    kernel: &JumpKernel,
    t: f64,
    a: &LatticeSet,
    b: &LatticeSet,
    opts: &KappaTauOptions,
) -> Result<(Vec<i64>, f64), AnalyticsError> {
    let ends2 = boundary_points2(b);
    let nb = ends2.len() as f64;
    let na = boundary_points2(a).len() as f64;
    let r = kernel.max_offset();
    let rem = |w: i64| {
        8.0 * nb * nb * t * tab_t.chernoff_tail_sum((w - r - 1) as f64)
            + 4.0 * na * t * tab_t.chernoff_tail_sum(w as f64)
    };
    let start = (tab_t.window().1 - tab_t.origin).max(1) + r + 1;
    let w = search_width(start, opts.trunc_tol, rem)?;
    // points within W of a boundary point of B: |2x − β₂| ≤ 2W
    let near_b = LatticeSet::new(
        ends2
            .iter()
            .map(|&e2| LatticeInterval::new((e2 - 2 * w).div_euclid(2) + 1, (e2 + 2 * w).div_euclid(2)))
            .collect(),
    );
    let core = intersect(&near_b, &dilate(a, w));
    Ok((core.points(), rem(w)))
}

/// `κ_t(A, B) = Σ_{x,y} p(x,y) ∫₀ᵗ (P_x(ζ_s∈B) − P_y(ζ_s∈B))² P_x(ζ_{t−s}∈A) P_y(ζ_{t−s}∈A) ds`
/// together with `τ_t(A, B)`.
pub fn kappa_tau(
    kernel: &JumpKernel,
    t: f64,
    a: &LatticeSet,
    b: &LatticeSet,
    opts: &KappaTauOptions,
) -> Result<KappaTauReport, AnalyticsError> {
    let k = kappa(kernel, t, a, b, opts)?;
    let tau = tau(kernel, t, a, b, opts)?;
    Ok(KappaTauReport {
        kappa: k.value,
        tau: tau.value,
        quad_error: k.quad_error,
        truncation_error: k.truncation_error + tau.error,
    })
}

/// `κ_t(A, B)` alone, for sets where `τ_t(A, B)` may diverge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaValue {
    pub value: f64,
    pub quad_error: f64,
    pub truncation_error: f64,
}

pub fn kappa(
    kernel: &JumpKernel,
    t: f64,
    a: &LatticeSet,
    b: &LatticeSet,
    opts: &KappaTauOptions,
) -> Result<KappaValue, AnalyticsError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(AnalyticsError::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 || a.is_empty() || b.parts().iter().all(|p| p.lo.is_none() && p.hi.is_none()) || b.is_empty() {
        return Ok(KappaValue {
            value: 0.0,
            quad_error: 0.0,
            truncation_error: 0.0,
        });
    }
    let mut cache = TableCache::new(kernel, opts.table_tol);
    let tab_t = cache.get(t)?;
    let (xs, remainder) = kappa_range(&tab_t, kernel, t, a, b, opts)?;
    let pairs: Vec<(i64, f64)> = kernel.pairs().collect();
    let r = kernel.max_offset();
    let mut failure: Option<RwError> = None;
    let mut table_err = 0.0f64;
    let nx = xs.len();
    let integrand = |s: f64| -> f64 {
        if failure.is_some() {
            return 0.0;
        }
        let (ts, tr) = match (cache.get(s), cache.get(t - s)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(e);
                return 0.0;
            }
        };
        table_err = table_err.max(6.0 * (ts.tail_bound + tr.tail_bound));
        let (x0, x1) = match (xs.first(), xs.last()) {
            (Some(&x0), Some(&x1)) => (x0 - r, x1 + r),
            _ => return 0.0,
        };
        let pb: Vec<f64> = (x0..=x1).map(|x| ts.prob_in_from(x, b)).collect();
        let pa: Vec<f64> = (x0..=x1).map(|x| tr.prob_in_from(x, a)).collect();
        let mut sum = 0.0;
        for &x in &xs {
            let i = (x - x0) as usize;
            for &(e, p) in &pairs {
                let j = (i as i64 + e) as usize;
                let d = pb[i] - pb[j];
                sum += p * d * d * pa[i] * pa[j];
            }
        }
        sum
    };
    let q = adaptive_simpson(integrand, 0.0, t, opts.quad_tol, opts.min_panels, opts.max_depth);
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(KappaValue {
        value: q.value.max(0.0),
        quad_error: q.error,
        truncation_error: remainder + t * nx as f64 * table_err,
    })
}

/// `𝓘_t(L, u) = Σ_x ∫₀ᵗ (P_x(ζ_s = 0) − P_x(ζ_s = −L))² P_x(ζ_{t−s} > u)² ds`,
/// with `L = None` meaning `L = ∞`.
pub fn kappa_bound_integral(
    kernel: &JumpKernel,
    t: f64,
    l: Option<u64>,
    u: f64,
    opts: &KappaTauOptions,
) -> Result<KappaValue, AnalyticsError> {
    if t == 0.0 {
        return Ok(KappaValue {
            value: 0.0,
            quad_error: 0.0,
            truncation_error: 0.0,
        });
    }
    let mut cache = TableCache::new(kernel, opts.table_tol);
    let mut failure: Option<RwError> = None;
    let mut table_err = 0.0f64;
    let uf = u.floor() as i64;
    let integrand = |s: f64| -> f64 {
        if failure.is_some() {
            return 0.0;
        }
        let (ts, tr) = match (cache.get(s), cache.get(t - s)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(e);
                return 0.0;
            }
        };
        table_err = table_err.max(6.0 * ts.tail_bound + 2.0 * tr.tail_bound);
        let (lo, hi) = ts.window();
        // P_x(ζ_s = 0) = p_s(x) and P_x(ζ_s = −L) = p_s(x + L) by symmetry
        let x_lo = l.map_or(lo, |l| lo - l as i64);
        (x_lo..=hi)
            .map(|x| {
                let d = ts.prob(x) - l.map_or(0.0, |l| ts.prob(x + l as i64));
                let surv = tr.prob_interval(&LatticeInterval::at_least(uf - x + 1));
                d * d * surv * surv
            })
            .sum()
    };
    let q = adaptive_simpson(integrand, 0.0, t, opts.quad_tol, opts.min_panels, opts.max_depth);
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(KappaValue {
        value: q.value,
        quad_error: q.error,
        truncation_error: t * table_err,
    })
}

/// Both sides of an inequality `lhs ≤ rhs`, with the combined numerical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub error: f64,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// `κ_t((b,∞), (−L,0]) ≤ σ² 𝓘_t(L, b/2) + 8 M₄ t / b²`.
pub fn kappa_bound_check(
    kernel: &JumpKernel,
    t: f64,
    b: f64,
    l: Option<u64>,
    opts: &KappaTauOptions,
) -> Result<BoundCheck, AnalyticsError> {
    if !(b > 0.0) {
        return Err(AnalyticsError::InvalidArgument(format!("b must be > 0, got {b}")));
    }
    let a_set = IntervalUnion::single(crate::intervals::HalfOpen::above(b)).lattice();
    let b_set = LatticeSet::interval(match l {
        Some(l) => LatticeInterval::new(1 - l as i64, 0),
        None => LatticeInterval::at_most(0),
    });
    let lhs = kappa(kernel, t, &a_set, &b_set, opts)?;
    let int = kappa_bound_integral(kernel, t, l, b / 2.0, opts)?;
    let sigma2 = kernel.sigma().powi(2);
    Ok(BoundCheck {
        lhs: lhs.value,
        rhs: sigma2 * int.value + 8.0 * kernel.m4() * t / (b * b),
        error: lhs.quad_error + lhs.truncation_error + sigma2 * (int.quad_error + int.truncation_error),
    })
}

/// `{η > 0}` for a deterministic `{0, K}`-valued step profile.
pub fn positive_set(profile: &InitialProfile) -> Option<LatticeSet> {
    if !profile.is_zero_k_step() {
        return None;
    }
    match &profile.variant {
        Variant::DeterministicStep { len: Some(len), .. } => {
            Some(LatticeSet::interval(LatticeInterval::new(1 - *len as i64, 0)))
        }
        Variant::DeterministicStep { len: None, .. } | Variant::BinomialStep { .. } => {
            Some(LatticeSet::interval(LatticeInterval::at_most(0)))
        }
        Variant::ProductPeriodic { laws } if laws.iter().all(|l| l[0] == 0.0) => {
            Some(LatticeSet::interval(LatticeInterval::at_most(0)))
        }
        Variant::ProductPeriodic { .. } => None,
    }
}

/// `max{τ_t(A, {η>0}), τ_t({η>0}, A)} ≤ K⁻¹ μ_{t/K}^η(A) P_0(ζ_t > inf A)`.
pub fn tau_bound_check(
    profile: &InitialProfile,
    kernel: &JumpKernel,
    t: f64,
    set: &IntervalUnion,
    opts: &KappaTauOptions,
) -> Result<BoundCheck, AnalyticsError> {
    let pos = positive_set(profile)
        .ok_or_else(|| AnalyticsError::InvalidArgument("profile is not a {0, K}-valued step".into()))?;
    let a_inf = set
        .components()
        .first()
        .map(|c| c.lo)
        .ok_or_else(|| AnalyticsError::InvalidArgument("empty set".into()))?;
    if a_inf == f64::NEG_INFINITY {
        return Err(AnalyticsError::InvalidArgument("inf A must be finite".into()));
    }
    let a = set.lattice();
    let tab = walk_table(kernel, t, opts.table_tol)?;
    let t1 = tau_from(&tab, &a, &pos, opts)?;
    let t2 = tau_from(&tab, &pos, &a, opts)?;
    let k = f64::from(profile.k);
    let mu = intensity(profile, kernel, t / k, set)?;
    let surv = tab.survival(a_inf);
    Ok(BoundCheck {
        lhs: t1.value.max(t2.value),
        rhs: mu.value * surv / k,
        error: t1.error.max(t2.error) + (mu.error * surv + mu.value * tab.tail_bound) / k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervals::HalfOpen;

    fn nn() -> JumpKernel {
        JumpKernel::nearest_neighbor()
    }

    fn above(y: f64) -> IntervalUnion {
        IntervalUnion::single(HalfOpen::above(y))
    }

    #[test]
    fn intensity_at_time_zero() {
        let p = InitialProfile::full_step(2).unwrap();
        assert_eq!(intensity(&p, &nn(), 0.0, &above(-0.5)).unwrap().value, 2.0);
        assert_eq!(intensity(&p, &nn(), 0.0, &above(-3.5)).unwrap().value, 8.0);
        assert_eq!(full_step_tail(2, &nn(), 0.0, -3.5).unwrap().value, 8.0);
    }

    #[test]
    fn routes_agree() {
        let p = InitialProfile::full_step(2).unwrap();
        for (t, y) in [(0.5, 0.0), (3.0, 2.5), (40.0, -3.0), (200.0, 10.0)] {
            let a = intensity(&p, &nn(), t, &above(y)).unwrap();
            let b = full_step_tail(2, &nn(), t, y).unwrap();
            assert!(
                (a.value - b.value).abs() <= 1e-10 * b.value.max(1.0),
                "{t} {y}: {a:?} {b:?}"
            );
        }
    }

    #[test]
    fn additive_over_components() {
        let p = InitialProfile::full_step(1).unwrap();
        let parts = [HalfOpen::new(0.0, 2.0).unwrap(), HalfOpen::new(2.0, 5.0).unwrap()];
        let u = IntervalUnion::new(parts.to_vec());
        let whole = intensity(&p, &nn(), 10.0, &u).unwrap().value;
        let sum: f64 = parts
            .iter()
            .map(|&h| intensity(&p, &nn(), 10.0, &IntervalUnion::single(h)).unwrap().value)
            .sum();
        assert!((whole - sum).abs() < 1e-13);
    }

    #[test]
    fn unbounded_set_is_rejected() {
        let p = InitialProfile::full_step(1).unwrap();
        let u = IntervalUnion::single(HalfOpen::below(0.0));
        assert!(matches!(
            intensity(&p, &nn(), 1.0, &u),
            Err(AnalyticsError::Infinite(_))
        ));
        let finite = InitialProfile::step(1, 1, 4).unwrap();
        let whole = IntervalUnion::single(HalfOpen::whole());
        assert!((intensity(&finite, &nn(), 3.0, &whole).unwrap().value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn limit_constants() {
        let set = above(0.0);
        assert_eq!(limit_intensity(LimitCase::Full, 2.0, 1.0, 2, &set), 2.0);
        assert_eq!(
            limit_constant(LimitCase::Psi(f64::INFINITY), 2.0, 1.3, 2),
            limit_constant(LimitCase::Full, 2.0, 1.3, 2)
        );
        let block = limit_intensity(
            LimitCase::Block,
            1.0,
            1.0,
            1,
            &IntervalUnion::single(HalfOpen::new(0.0, 1.0).unwrap()),
        );
        assert!((block - 0.632_120_558_828_557_7).abs() < 1e-15);
    }

    #[test]
    fn falling_factorials() {
        assert_eq!(falling_factorial_count(3, 2), 6);
        assert_eq!(falling_factorial_count(2, 3), 0);
        assert_eq!(falling_factorial_count(5, 0), 1);
        assert_eq!(falling_factorial(3.0, 2), 6.0);
    }

    #[test]
    fn tau_at_time_zero() {
        let a = LatticeSet::interval(LatticeInterval::new(-4, 0));
        let b = LatticeSet::interval(LatticeInterval::at_least(-1));
        let r = kappa_tau(&nn(), 0.0, &a, &b, &KappaTauOptions::default()).unwrap();
        assert_eq!(r.kappa, 0.0);
        assert_eq!(r.tau, 2.0);
    }

    #[test]
    fn tau_monotone_in_l() {
        let a = IntervalUnion::single(HalfOpen::above(3.0)).lattice();
        let opts = KappaTauOptions::default();
        let mut prev = 0.0;
        for l in 1..8 {
            let b = LatticeSet::interval(LatticeInterval::new(1 - l, 0));
            let v = tau(&nn(), 2.0, &a, &b, &opts).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn kappa_symmetric_sets_small_t() {
        // for tiny t only the two pairs straddling the boundary contribute
        let a = LatticeSet::interval(LatticeInterval::new(-3, 3));
        let b = LatticeSet::interval(LatticeInterval::at_most(0));
        let t = 1e-3;
        let v = kappa(&nn(), t, &a, &b, &KappaTauOptions::default()).unwrap();
        // (x, y) = (0, 1) and (1, 0), each with p = 1/2 and squared difference ≈ 1
        assert!((v.value - t).abs() < 5e-3 * t, "{v:?}");
    }
}
