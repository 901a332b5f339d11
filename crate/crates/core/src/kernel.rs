//! Symmetric, translation-invariant jump laws `p(0, ·)` on the integers.
//!
//! A [`JumpKernel`] is only constructed through validation, so every kernel
//! held by downstream code is symmetric, normalized, has no mass at zero and
//! generates all of the integers. Only finitely supported kernels are
//! accepted; an infinite-range law must be truncated by the caller (the
//! truncation mass can be recorded with [`JumpKernel::with_truncation_eps`]).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for normalization and symmetry checks.
pub const KERNEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel has no support")]
    Empty,
    #[error("offsets and probabilities differ in length ({offsets} vs {probs})")]
    LengthMismatch { offsets: usize, probs: usize },
    #[error("probability at offset {offset} is negative or not finite ({prob})")]
    InvalidProbability { offset: i64, prob: f64 },
    #[error("offset {offset} is listed more than once")]
    DuplicateOffset { offset: i64 },
    #[error("symmetry violated: p(0,{offset}) = {prob} but p(0,{mirror}) = {mirror_prob}")]
    AsymmetricKernel {
        offset: i64,
        prob: f64,
        mirror: i64,
        mirror_prob: f64,
    },
    #[error("p(0,0) = {prob} but the kernel must put no mass at zero")]
    MassAtZero { prob: f64 },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("support generates {gcd}Z, not Z (kernel is reducible)")]
    Reducible { gcd: u64 },
}

/// One clause of the standing assumptions on `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    WellFormed,
    Normalized,
    Symmetric,
    NoMassAtZero,
    Irreducible,
    PositiveVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseCheck {
    pub clause: Clause,
    pub pass: bool,
    pub detail: String,
}

/// Outcome of [`validate`]: every clause with its verdict, plus the derived
/// moments when all clauses pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ClauseCheck>,
    pub sigma: Option<f64>,
    pub m4: Option<f64>,
    pub mgf_radius: Option<f64>,
    pub truncation_eps: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// A validated symmetric jump law with finite support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpKernel {
    offsets: Vec<i64>,
    probs: Vec<f64>,
    sigma: f64,
    m4: f64,
    mgf_radius: f64,
    truncation_eps: f64,
    #[serde(skip)]
    sampler: AliasTable,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

fn check_pairs(offsets: &[i64], probs: &[f64]) -> Result<(), KernelError> {
    if offsets.len() != probs.len() {
        return Err(KernelError::LengthMismatch {
            offsets: offsets.len(),
            probs: probs.len(),
        });
    }
    if offsets.is_empty() {
        return Err(KernelError::Empty);
    }
    let mut seen = std::collections::HashSet::new();
    for (&y, &p) in offsets.iter().zip(probs) {
        if !p.is_finite() || p < 0.0 {
            return Err(KernelError::InvalidProbability { offset: y, prob: p });
        }
        if !seen.insert(y) {
            return Err(KernelError::DuplicateOffset { offset: y });
        }
    }
    Ok(())
}

fn lookup(offsets: &[i64], probs: &[f64], y: i64) -> f64 {
    offsets.iter().position(|&o| o == y).map_or(0.0, |i| probs[i])
}

fn symmetry_violation(offsets: &[i64], probs: &[f64]) -> Option<KernelError> {
    for (&y, &p) in offsets.iter().zip(probs) {
        let q = lookup(offsets, probs, -y);
        if (p - q).abs() > KERNEL_TOL {
            return Some(KernelError::AsymmetricKernel {
                offset: y,
                prob: p,
                mirror: -y,
                mirror_prob: q,
            });
        }
    }
    None
}

/// Checks every clause independently and reports all of them.
pub fn validate(offsets: &[i64], probs: &[f64]) -> ValidationReport {
    let mut checks = Vec::with_capacity(6);
    let mut report = |clause, pass, detail: String| checks.push(ClauseCheck { clause, pass, detail });

    let well_formed = check_pairs(offsets, probs);
    report(
        Clause::WellFormed,
        well_formed.is_ok(),
        well_formed.as_ref().err().map_or_else(String::new, |e| e.to_string()),
    );
    if well_formed.is_err() {
        return ValidationReport {
            checks,
            sigma: None,
            m4: None,
            mgf_radius: None,
            truncation_eps: 0.0,
        };
    }

    let sum: f64 = probs.iter().sum();
    report(
        Clause::Normalized,
        (sum - 1.0).abs() <= KERNEL_TOL,
        format!("sum = {sum}"),
    );

    let asym = symmetry_violation(offsets, probs);
    report(
        Clause::Symmetric,
        asym.is_none(),
        asym.map_or_else(String::new, |e| e.to_string()),
    );

    let p0 = lookup(offsets, probs, 0);
    report(Clause::NoMassAtZero, p0 == 0.0, format!("p(0,0) = {p0}"));

    let g = offsets
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .fold(0u64, |g, (&y, _)| gcd(g, y.unsigned_abs()));
    report(Clause::Irreducible, g == 1, format!("gcd = {g}"));

    let var: f64 = offsets.iter().zip(probs).map(|(&y, &p)| (y as f64).powi(2) * p).sum();
    report(Clause::PositiveVariance, var > 0.0, format!("sigma^2 = {var}"));

    let pass = checks.iter().all(|c| c.pass);
    let m4: f64 = offsets.iter().zip(probs).map(|(&y, &p)| (y as f64).powi(4) * p).sum();
    ValidationReport {
        checks,
        sigma: pass.then(|| var.sqrt()),
        m4: pass.then_some(m4),
        mgf_radius: pass.then_some(1.0),
        truncation_eps: 0.0,
    }
}

impl JumpKernel {
    /// Validates `(offset, probability)` pairs. Both signs of every offset
    /// must be listed; no symmetric completion is performed.
    pub fn new(pairs: &[(i64, f64)]) -> Result<Self, KernelError> {
        let (offsets, probs): (Vec<i64>, Vec<f64>) = pairs.iter().copied().unzip();
        Self::from_parts(offsets, probs)
    }

    pub fn from_parts(offsets: Vec<i64>, probs: Vec<f64>) -> Result<Self, KernelError> {
        check_pairs(&offsets, &probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > KERNEL_TOL {
            return Err(KernelError::NotNormalized { sum });
        }
        if let Some(err) = symmetry_violation(&offsets, &probs) {
            return Err(err);
        }
        let p0 = lookup(&offsets, &probs, 0);
        if p0 != 0.0 {
            return Err(KernelError::MassAtZero { prob: p0 });
        }
        let report = validate(&offsets, &probs);
        if let Some(c) = report
            .checks
            .iter()
            .find(|c| c.clause == Clause::Irreducible && !c.pass)
        {
            let gcd = c.detail.trim_start_matches("gcd = ").parse().unwrap_or(0);
            return Err(KernelError::Reducible { gcd });
        }
        let sigma = report.sigma.expect("validated kernel has sigma");
        let m4 = report.m4.expect("validated kernel has m4");
        let sampler = AliasTable::new(&probs);
        Ok(Self {
            offsets,
            probs,
            sigma,
            m4,
            mgf_radius: 1.0,
            truncation_eps: 0.0,
            sampler,
        })
    }

    /// Normalizes nonnegative weights before validating.
    pub fn from_weights(pairs: &[(i64, f64)]) -> Result<Self, KernelError> {
        let total: f64 = pairs.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(KernelError::NotNormalized { sum: total });
        }
        let normalized: Vec<(i64, f64)> = pairs.iter().map(|&(y, w)| (y, w / total)).collect();
        Self::new(&normalized)
    }

    /// Nearest-neighbour walk, `p(0, ±1) = 1/2`.
    pub fn nearest_neighbor() -> Self {
        Self::new(&[(-1, 0.5), (1, 0.5)]).expect("nearest-neighbour kernel is valid")
    }

    /// Records the tail mass discarded when an infinite-range law was cut
    /// down to this finite support.
    pub fn with_truncation_eps(mut self, eps: f64) -> Self {
        self.truncation_eps = eps;
        self
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pairs(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.offsets.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn m4(&self) -> f64 {
        self.m4
    }

    pub fn mgf_radius(&self) -> f64 {
        self.mgf_radius
    }

    pub fn truncation_eps(&self) -> f64 {
        self.truncation_eps
    }

    pub fn max_offset(&self) -> i64 {
        self.offsets.iter().map(|y| y.abs()).max().unwrap_or(0)
    }

    pub fn prob(&self, y: i64) -> f64 {
        lookup(&self.offsets, &self.probs, y)
    }

    /// `Σ y^k p(0, y)`. Odd moments vanish exactly by symmetry.
    pub fn moment(&self, k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        self.pairs().map(|(y, p)| (y as f64).powi(k as i32) * p).sum()
    }

    /// `log Σ e^{r y} p(0, y)`, finite for every `r` on finite support.
    pub fn log_mgf(&self, r: f64) -> f64 {
        // shift by the largest exponent to avoid overflow
        let shift = self
            .offsets
            .iter()
            .map(|&y| r * y as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = self.pairs().map(|(y, p)| p * (r * y as f64 - shift).exp()).sum();
        shift + s.ln()
    }

    pub fn report(&self) -> ValidationReport {
        let mut r = validate(&self.offsets, &self.probs);
        r.truncation_eps = self.truncation_eps;
        r
    }

    /// Draws one offset.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.offsets[self.sampler.sample(rng)]
    }

    /// Draws one offset from 64 random bits (the low 32 pick the column, the
    /// high 32 the coin).
    #[inline]
    pub(crate) fn sample_from_bits(&self, bits: u64) -> i64 {
        self.offsets[self.sampler.sample_bits(bits)]
    }
}

/// Walker alias table over a fixed probability vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct AliasTable {
    threshold: Vec<u32>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub(crate) fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias = vec![0u32; n];
        let mut prob = vec![1.0f64; n];
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // 2^32 scale so the coin is an integer comparison
        let threshold = prob
            .iter()
            .map(|&p| {
                if p >= 1.0 {
                    u32::MAX
                } else {
                    (p * 4_294_967_296.0) as u32
                }
            })
            .collect();
        Self { threshold, alias }
    }

    #[inline]
    fn sample_bits(&self, bits: u64) -> usize {
        let n = self.threshold.len() as u64;
        let col = (((bits & 0xffff_ffff) * n) >> 32) as usize;
        let coin = (bits >> 32) as u32;
        if coin < self.threshold[col] || self.threshold[col] == u32::MAX {
            col
        } else {
            self.alias[col] as usize
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_bits(rng.random::<u64>())
    }
}
