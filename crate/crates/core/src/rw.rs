//! Transition laws of the continuous-time random walk `ζ` with jump law `p`.
//!
//! Tables are built by uniformization: `P_x(ζ_t = ·)` is the Poisson(`rate·t`)
//! mixture of the discrete powers `p^n(x, ·)`. Both truncations (Poisson
//! terms and the spatial window) only ever remove mass, so the discarded
//! amount is an honest L1 certificate and is reported as `tail_bound`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::intervals::{LatticeInterval, LatticeSet};
use crate::kernel::JumpKernel;

/// Default truncation tolerance for tables.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Largest number of uniformization terms we are willing to evaluate.
pub const MAX_TERMS: usize = 20_000_000;

/// Largest window (in sites) a table may occupy.
pub const MAX_WINDOW: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RwError {
    #[error("tolerance {tol} cannot be reached within {terms} terms and window {window}")]
    ToleranceUnreachable { tol: f64, terms: usize, window: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `P_origin(ζ_time = z)` for `z` in `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionTable {
    pub origin: i64,
    pub rate: f64,
    pub time: f64,
    pub tol: f64,
    lo: i64,
    values: Vec<f64>,
    /// `prefix[i] = Σ_{j<i} values[j]`
    #[serde(skip)]
    prefix: Vec<f64>,
    /// `suffix[i] = Σ_{j>=i} values[j]`
    #[serde(skip)]
    suffix: Vec<f64>,
    pub tail_bound: f64,
    #[serde(skip)]
    mgf: Option<MgfBound>,
}

/// Poisson weights `e^{-λ} λ^n / n!` for `n = 0..=nmax` with `P(N > nmax)`
/// below `tail`, together with a bound on the neglected mass.
pub(crate) fn poisson_weights(lambda: f64, tail: f64) -> Option<(Vec<f64>, f64)> {
    let ll = lambda.ln();
    let mut w = Vec::with_capacity((lambda + 10.0 * lambda.sqrt() + 20.0) as usize);
    let mut n = 0usize;
    loop {
        let lw = -lambda + n as f64 * ll - ln_gamma(n as f64 + 1.0);
        w.push(lw.exp());
        if n as f64 > lambda {
            // P(N > n) <= w_{n+1} / (1 - λ/(n+2)) by geometric domination
            let next = (lw + ll - (n as f64 + 1.0).ln()).exp();
            let bound = next / (1.0 - lambda / (n as f64 + 2.0));
            if bound < tail {
                return Some((w, bound));
            }
        }
        n += 1;
        if n > MAX_TERMS {
            return None;
        }
    }
}

/// Computes `P_origin(ζ_t = ·)` for the walk jumping at `rate` with law `kernel`.
pub fn transition_probs(
    kernel: &JumpKernel,
    rate: f64,
    t: f64,
    origin: i64,
    tol: f64,
) -> Result<TransitionTable, RwError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(RwError::InvalidArgument(format!("time must be >= 0, got {t}")));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(RwError::InvalidArgument(format!("rate must be > 0, got {rate}")));
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(RwError::InvalidArgument(format!("tol must be in (0, 1e-3], got {tol}")));
    }
    let lambda = rate * t;
    if lambda == 0.0 {
        return Ok(TransitionTable::from_values(
            origin,
            rate,
            t,
            tol,
            origin,
            vec![1.0],
            0.0,
            Some(kernel),
        ));
    }

    let (weights, poisson_tail) = poisson_weights(lambda, tol / 2.0).ok_or(RwError::ToleranceUnreachable {
        tol,
        terms: MAX_TERMS,
        window: 0,
    })?;
    let nterms = weights.len();
    // each step may discard this much from either edge of p^n
    let step_budget = tol / (4.0 * nterms as f64);
    let r = kernel.max_offset();
    let offsets = kernel.offsets();
    let probs = kernel.probs();

    // current p^n(0, ·) on [cur_lo, cur_lo + cur.len())
    let mut cur = vec![1.0f64];
    let mut cur_lo: i64 = 0;
    let mut lost = 0.0f64;
    let mut acc_lo: i64 = 0;
    let mut acc = vec![weights[0]];
    let mut dropped = 0.0f64;
    let mut next: Vec<f64> = Vec::new();

    for &w in &weights[1..] {
        next.clear();
        next.resize(cur.len() + 2 * r as usize, 0.0);
        for (&y, &p) in offsets.iter().zip(probs) {
            let shift = (y + r) as usize;
            let dst = &mut next[shift..shift + cur.len()];
            for (d, &c) in dst.iter_mut().zip(&cur) {
                *d += p * c;
            }
        }
        let mut next_lo = cur_lo - r;

        // trim both edges within the per-step budget
        let mut cut = 0.0;
        let mut start = 0;
        while start < next.len() && cut + next[start] <= step_budget {
            cut += next[start];
            start += 1;
        }
        let mut end = next.len();
        let mut cut_r = 0.0;
        while end > start && cut_r + next[end - 1] <= step_budget {
            cut_r += next[end - 1];
            end -= 1;
        }
        lost += cut + cut_r;
        next_lo += start as i64;
        std::mem::swap(&mut cur, &mut next);
        cur.truncate(end);
        cur.drain(..start);
        cur_lo = next_lo;
        if cur.len() > MAX_WINDOW {
            return Err(RwError::ToleranceUnreachable {
                tol,
                terms: nterms,
                window: cur.len(),
            });
        }

        // grow the accumulator to cover the current support
        if cur_lo < acc_lo {
            let extra = (acc_lo - cur_lo) as usize;
            acc.splice(0..0, std::iter::repeat_n(0.0, extra));
            acc_lo = cur_lo;
        }
        let cur_hi = cur_lo + cur.len() as i64;
        let acc_hi = acc_lo + acc.len() as i64;
        if cur_hi > acc_hi {
            acc.resize(acc.len() + (cur_hi - acc_hi) as usize, 0.0);
        }
        let off = (cur_lo - acc_lo) as usize;
        for (a, &c) in acc[off..off + cur.len()].iter_mut().zip(&cur) {
            *a += w * c;
        }
        dropped += w * lost;
    }

    let tail_bound = poisson_tail + dropped;
    if tail_bound > tol {
        return Err(RwError::ToleranceUnreachable {
            tol,
            terms: nterms,
            window: acc.len(),
        });
    }
    Ok(TransitionTable::from_values(
        origin,
        rate,
        t,
        tol,
        origin + acc_lo,
        acc,
        tail_bound,
        Some(kernel),
    ))
}

/// Exponential-moment data for Chernoff tail bounds: `λ` and the kernel.
#[derive(Debug, Clone, PartialEq)]
struct MgfBound {
    lambda: f64,
    kernel: JumpKernel,
}

impl MgfBound {
    /// `min_r exp(λ(φ(r) − 1) − r·w) · g(r)` by golden-section search on the log.
    fn minimize(&self, w: f64, log_extra: impl Fn(f64) -> f64) -> f64 {
        let f = |r: f64| self.lambda * (self.kernel.log_mgf(r).exp() - 1.0) - r * w + log_extra(r);
        let (mut a, mut b) = (1e-6f64, 30.0f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..200 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d);
            }
        }
        fc.min(fd).exp().min(f64::MAX)
    }

    /// Upper bound on `P(ζ − origin ≥ w)`.
    fn tail(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 1.0;
        }
        self.minimize(w, |_| 0.0).min(1.0)
    }

    /// Upper bound on `E[(ζ − origin − w)_+] = Σ_{n ≥ w+1} P(ζ − origin ≥ n)`.
    fn tail_sum(&self, w: f64) -> f64 {
        self.minimize(w + 1.0, |r| -(-(-r).exp_m1()).ln())
    }
}

impl TransitionTable {
    #[allow(clippy::too_many_arguments)]
    fn from_values(
        origin: i64,
        rate: f64,
        time: f64,
        tol: f64,
        lo: i64,
        values: Vec<f64>,
        tail_bound: f64,
        kernel: Option<&JumpKernel>,
    ) -> Self {
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut s = 0.0;
        prefix.push(0.0);
        for &v in &values {
            s += v;
            prefix.push(s);
        }
        let mut suffix = vec![0.0; values.len() + 1];
        for i in (0..values.len()).rev() {
            suffix[i] = suffix[i + 1] + values[i];
        }
        Self {
            origin,
            rate,
            time,
            tol,
            lo,
            values,
            prefix,
            suffix,
            tail_bound,
            mgf: kernel.map(|k| MgfBound {
                lambda: rate * time,
                kernel: k.clone(),
            }),
        }
    }

    /// Window `[lo, hi]` covered by the table.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.lo + self.values.len() as i64 - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.prefix[self.values.len()]
    }

    /// `P_origin(ζ_t = z)`, zero outside the window.
    #[inline]
    pub fn prob(&self, z: i64) -> f64 {
        let i = z - self.lo;
        if i < 0 || i >= self.values.len() as i64 {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    #[inline]
    fn idx(&self, z: i64) -> usize {
        (z - self.lo).clamp(0, self.values.len() as i64) as usize
    }

    /// `Σ_{z ∈ [a, b]} P_origin(ζ_t = z)` with open ends allowed.
    pub fn prob_interval(&self, iv: &LatticeInterval) -> f64 {
        let (wlo, whi) = self.window();
        let a = iv.lo.unwrap_or(wlo).max(wlo);
        let b = iv.hi.unwrap_or(whi).min(whi);
        if a > b {
            return 0.0;
        }
        let (ia, ib) = (self.idx(a), self.idx(b + 1));
        // use whichever partial sum is smaller to keep tail accuracy
        if iv.hi.is_none() {
            self.suffix[ia]
        } else if iv.lo.is_none() {
            self.prefix[ib]
        } else if ia >= self.values.len() / 2 {
            self.suffix[ia] - self.suffix[ib]
        } else {
            self.prefix[ib] - self.prefix[ia]
        }
    }

    pub fn prob_in(&self, set: &LatticeSet) -> f64 {
        set.parts().iter().map(|p| self.prob_interval(p)).sum()
    }

    /// `P_x(ζ_t ∈ set)` obtained by translating this table from its origin to `x`.
    #[inline]
    pub fn prob_in_from(&self, x: i64, set: &LatticeSet) -> f64 {
        let d = self.origin - x;
        set.parts().iter().map(|p| self.prob_interval(&p.shift(d))).sum()
    }

    /// `P(ζ_t > y)`, using `floor(y)` for real thresholds.
    pub fn survival(&self, y: f64) -> f64 {
        if y == f64::NEG_INFINITY {
            return self.sum();
        }
        if y == f64::INFINITY {
            return 0.0;
        }
        self.prob_interval(&LatticeInterval::at_least(y.floor() as i64 + 1))
    }

    /// `E[(ζ_t − m)_+] = Σ_{z > m} (z − m) P(ζ_t = z)`.
    pub fn positive_part_mean(&self, m: i64) -> f64 {
        let (_, hi) = self.window();
        (m + 1..=hi).map(|z| (z - m) as f64 * self.prob(z)).sum()
    }

    /// Certified bound on the error of [`positive_part_mean`](Self::positive_part_mean):
    /// mass missing inside the window weighted by its largest lever, plus a
    /// Chernoff bound on what lies beyond the right edge.
    pub fn positive_part_mean_error(&self, m: i64) -> f64 {
        let (_, hi) = self.window();
        let lever = (hi - m).max(0) as f64;
        let beyond = match &self.mgf {
            Some(b) if b.lambda > 0.0 => {
                let w = (hi - self.origin) as f64;
                lever * b.tail(w + 1.0) + b.tail_sum(w)
            }
            _ => 0.0,
        };
        lever * self.tail_bound + beyond
    }

    /// Chernoff bound on `P(|ζ_t − origin| ≥ w)`; 1 if no kernel is attached.
    pub fn two_sided_tail(&self, w: f64) -> f64 {
        match &self.mgf {
            Some(b) if b.lambda > 0.0 => (2.0 * b.tail(w)).min(1.0),
            Some(_) => f64::from(w <= 0.0),
            None => 1.0,
        }
    }

    /// Chernoff bound on `P(ζ_t − origin ≥ w)`; 1 if no kernel is attached.
    pub fn chernoff_tail(&self, w: f64) -> f64 {
        match &self.mgf {
            Some(b) if b.lambda > 0.0 => b.tail(w),
            Some(_) => f64::from(w <= 0.0),
            None => 1.0,
        }
    }

    /// Chernoff bound on `Σ_{n ≥ w+1} P(ζ_t − origin ≥ n)`; infinite if no
    /// kernel is attached.
    pub fn chernoff_tail_sum(&self, w: f64) -> f64 {
        match &self.mgf {
            Some(b) if b.lambda > 0.0 => b.tail_sum(w),
            Some(_) => {
                if w >= 0.0 {
                    0.0
                } else {
                    (-w).floor()
                }
            }
            None => f64::INFINITY,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.lo + i as i64) as f64 * v)
            .sum()
    }

    /// Chapman–Kolmogorov composition: the law after `self.time + other.time`.
    pub fn convolve(&self, other: &TransitionTable) -> TransitionTable {
        let n = self.values.len() + other.values.len() - 1;
        let mut out = vec![0.0; n];
        for (i, &a) in self.values.iter().enumerate() {
            for (j, &b) in other.values.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        let lo = self.lo + other.lo - other.origin;
        TransitionTable::from_values(
            self.origin,
            self.rate,
            self.time + other.time,
            self.tol + other.tol,
            lo,
            out,
            self.tail_bound + other.tail_bound,
            self.mgf.as_ref().map(|m| &m.kernel),
        )
    }

    /// CSV with a comment header recording the table parameters.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# origin={} rate={} t={} tol={} tail_bound={:e}",
            self.origin, self.rate, self.time, self.tol, self.tail_bound
        )?;
        writeln!(w, "site,probability")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:e}", self.lo + i as i64, v)?;
        }
        Ok(())
    }
}

/// One draw of `ζ_t` started from `origin`.
pub fn sample_increment_path<R: Rng + ?Sized>(kernel: &JumpKernel, rate: f64, t: f64, origin: i64, rng: &mut R) -> i64 {
    let lambda = rate * t;
    if lambda <= 0.0 {
        return origin;
    }
    let n = Poisson::new(lambda).expect("positive mean").sample(rng) as u64;
    (0..n).fold(origin, |x, _| x + kernel.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn() -> JumpKernel {
        JumpKernel::nearest_neighbor()
    }

    #[test]
    fn time_zero_is_point_mass() {
        let t = transition_probs(&nn(), 1.0, 0.0, 3, DEFAULT_TOL).unwrap();
        assert_eq!(t.window(), (3, 3));
        assert_eq!(t.prob(3), 1.0);
        assert_eq!(t.survival(2.5), 1.0);
        assert_eq!(t.survival(3.0), 0.0);
    }

    #[test]
    fn origin_zero_t_zero_functionals() {
        let t = transition_probs(&nn(), 1.0, 0.0, 0, DEFAULT_TOL).unwrap();
        assert_eq!(t.survival(-0.5), 1.0);
        assert_eq!(t.survival(0.0), 0.0);
        assert_eq!(t.positive_part_mean(-4), 4.0);
        assert_eq!(t.positive_part_mean(1), 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(transition_probs(&nn(), 0.0, 1.0, 0, 1e-12).is_err());
        assert!(transition_probs(&nn(), 1.0, -1.0, 0, 1e-12).is_err());
        assert!(transition_probs(&nn(), 1.0, 1.0, 0, 0.1).is_err());
    }

    #[test]
    fn table_invariants() {
        let k = JumpKernel::new(&[(1, 0.3), (-1, 0.3), (3, 0.2), (-3, 0.2)]).unwrap();
        for &t in &[0.3, 2.0, 40.0] {
            let tab = transition_probs(&k, 2.0, t, -7, 1e-12).unwrap();
            assert!(tab.tail_bound < 1e-12);
            assert!(tab.sum() <= 1.0 + 1e-12);
            assert!(tab.sum() + tab.tail_bound >= 1.0 - 1e-12);
            assert!(tab.values().iter().all(|&v| v >= 0.0));
            for d in 0..30 {
                assert!((tab.prob(-7 + d) - tab.prob(-7 - d)).abs() < 1e-12);
            }
            assert!(tab.mean().abs() - 7.0 < 1e-9);
        }
    }

    #[test]
    fn survival_monotone_and_telescoping() {
        let tab = transition_probs(&nn(), 1.0, 3.0, 0, 1e-12).unwrap();
        let mut prev = 1.0;
        for y in -15..15 {
            let s = tab.survival(y as f64);
            assert!((0.0..=1.0).contains(&s));
            assert!(s <= prev + 1e-15);
            prev = s;
            let d = tab.positive_part_mean(y) - tab.positive_part_mean(y + 1);
            assert!((d - s).abs() < 1e-12, "y={y}: {d} vs {s}");
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let k = JumpKernel::new(&[(1, 0.4), (-1, 0.4), (2, 0.1), (-2, 0.1)]).unwrap();
        let a = transition_probs(&k, 1.5, 0.7, 0, 1e-13).unwrap();
        let b = transition_probs(&k, 1.5, 1.1, 0, 1e-13).unwrap();
        let c = transition_probs(&k, 1.5, 1.8, 0, 1e-13).unwrap();
        let ab = a.convolve(&b);
        let tol = a.tail_bound + b.tail_bound + c.tail_bound + 1e-14;
        for z in -30..=30 {
            assert!((ab.prob(z) - c.prob(z)).abs() <= tol);
        }
    }

    #[test]
    fn positive_part_error_is_small() {
        let tab = transition_probs(&nn(), 2.0, 50.0, 0, 1e-12).unwrap();
        let e = tab.positive_part_mean_error(-20);
        assert!(e < 1e-9, "{e}");
    }

    #[test]
    fn chernoff_dominates_exact_tail() {
        let tab = transition_probs(&nn(), 1.0, 10.0, 0, 1e-13).unwrap();
        for w in [2.0, 5.0, 10.0, 20.0] {
            let exact = tab.prob_interval(&LatticeInterval::at_least(w as i64))
                + tab.prob_interval(&LatticeInterval::at_most(-(w as i64)));
            assert!(exact <= tab.two_sided_tail(w) + 1e-15);
        }
    }

    #[test]
    fn csv_header() {
        let tab = transition_probs(&nn(), 1.0, 0.5, 0, 1e-12).unwrap();
        let mut buf = Vec::new();
        tab.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# origin=0 rate=1 t=0.5"));
        assert!(s.lines().nth(1) == Some("site,probability"));
    }
}
