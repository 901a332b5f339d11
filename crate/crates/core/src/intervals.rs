//! Half-open intervals `(lo, hi]` on the real line and their lattice traces.
//!
//! Infinite endpoints are encoded as `f64::NEG_INFINITY` / `f64::INFINITY`.
//! Lattice points of `(lo, hi]` are the integers `z` with
//! `floor(lo) < z <= floor(hi)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("empty or reversed interval ({lo}, {hi}]")]
    Empty { lo: f64, hi: f64 },
    #[error("endpoint is NaN")]
    NaN,
    #[error("intervals overlap: ({0}, {1}] and ({2}, {3}]")]
    OverlappingIntervals(f64, f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfOpen {
    pub lo: f64,
    pub hi: f64,
}

impl HalfOpen {
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if lo.is_nan() || hi.is_nan() {
            return Err(IntervalError::NaN);
        }
        if lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(IntervalError::Empty { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// `(lo, ∞)`.
    pub fn above(lo: f64) -> Self {
        Self { lo, hi: f64::INFINITY }
    }

    /// `(-∞, hi]`.
    pub fn below(hi: f64) -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi,
        }
    }

    pub fn whole() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x <= self.hi
    }

    pub fn overlaps(&self, other: &HalfOpen) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    /// Exclusive lower lattice bound `floor(lo)`, `None` when unbounded.
    pub fn lattice_lo(&self) -> Option<i64> {
        self.lo.is_finite().then(|| self.lo.floor() as i64)
    }

    /// Inclusive upper lattice bound `floor(hi)`, `None` when unbounded.
    pub fn lattice_hi(&self) -> Option<i64> {
        self.hi.is_finite().then(|| self.hi.floor() as i64)
    }

    pub fn lattice(&self) -> LatticeInterval {
        LatticeInterval {
            lo: self.lattice_lo().map(|l| l + 1),
            hi: self.lattice_hi(),
        }
    }

    /// `e^{-lo} - e^{-hi}`, the measure with density `e^{-x}`.
    pub fn exp_measure(&self) -> f64 {
        (-self.lo).exp() - (-self.hi).exp()
    }
}

/// Integer interval `[lo, hi]` with optional open ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeInterval {
    pub lo: Option<i64>,
    pub hi: Option<i64>,
}

impl LatticeInterval {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn at_least(lo: i64) -> Self {
        Self { lo: Some(lo), hi: None }
    }

    pub fn at_most(hi: i64) -> Self {
        Self { lo: None, hi: Some(hi) }
    }

    #[inline]
    pub fn contains(&self, z: i64) -> bool {
        self.lo.is_none_or(|l| z >= l) && self.hi.is_none_or(|h| z <= h)
    }

    pub fn is_empty(&self) -> bool {
        matches!((self.lo, self.hi), (Some(l), Some(h)) if l > h)
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    /// Number of points, `None` if unbounded.
    pub fn len(&self) -> Option<u64> {
        match (self.lo, self.hi) {
            (Some(l), Some(h)) => Some(if h >= l { (h - l + 1) as u64 } else { 0 }),
            _ => None,
        }
    }

    pub fn intersect(&self, other: &LatticeInterval) -> LatticeInterval {
        let lo = match (self.lo, other.lo) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        let hi = match (self.hi, other.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        LatticeInterval { lo, hi }
    }

    pub fn shift(&self, d: i64) -> LatticeInterval {
        LatticeInterval {
            lo: self.lo.map(|l| l + d),
            hi: self.hi.map(|h| h + d),
        }
    }
}

/// Finite disjoint union of half-open intervals in canonical sorted, merged form.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalUnion {
    components: Vec<HalfOpen>,
}

impl IntervalUnion {
    /// Sorts and merges touching or overlapping components.
    pub fn new(mut parts: Vec<HalfOpen>) -> Self {
        parts.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut out: Vec<HalfOpen> = Vec::with_capacity(parts.len());
        for p in parts {
            match out.last_mut() {
                Some(last) if p.lo <= last.hi => last.hi = last.hi.max(p.hi),
                _ => out.push(p),
            }
        }
        Self { components: out }
    }

    /// Like [`IntervalUnion::new`] but rejects overlapping inputs.
    pub fn disjoint(parts: Vec<HalfOpen>) -> Result<Self, IntervalError> {
        check_disjoint(&parts)?;
        Ok(Self::new(parts))
    }

    pub fn single(i: HalfOpen) -> Self {
        Self { components: vec![i] }
    }

    pub fn components(&self) -> &[HalfOpen] {
        &self.components
    }

    pub fn contains(&self, x: f64) -> bool {
        self.components.iter().any(|c| c.contains(x))
    }

    pub fn exp_measure(&self) -> f64 {
        self.components.iter().map(HalfOpen::exp_measure).sum()
    }

    /// Lattice trace as disjoint integer intervals.
    pub fn lattice(&self) -> LatticeSet {
        LatticeSet::new(self.components.iter().map(HalfOpen::lattice).collect())
    }
}

pub fn check_disjoint(parts: &[HalfOpen]) -> Result<(), IntervalError> {
    for (i, a) in parts.iter().enumerate() {
        for b in &parts[i + 1..] {
            if a.overlaps(b) {
                return Err(IntervalError::OverlappingIntervals(a.lo, a.hi, b.lo, b.hi));
            }
        }
    }
    Ok(())
}

/// Finite union of disjoint lattice intervals, at most one unbounded on each side.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatticeSet {
    parts: Vec<LatticeInterval>,
}

impl LatticeSet {
    pub fn new(parts: Vec<LatticeInterval>) -> Self {
        let mut parts: Vec<LatticeInterval> = parts.into_iter().filter(|p| !p.is_empty()).collect();
        parts.sort_by_key(|p| p.lo.unwrap_or(i64::MIN));
        // merge overlapping and adjacent pieces so that every point is counted once
        let mut out: Vec<LatticeInterval> = Vec::with_capacity(parts.len());
        for p in parts {
            match out.last_mut() {
                Some(last) if last.hi.is_none_or(|h| p.lo.is_none_or(|l| l <= h.saturating_add(1))) => {
                    last.hi = match (last.hi, p.hi) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        _ => None,
                    };
                }
                _ => out.push(p),
            }
        }
        Self { parts: out }
    }

    pub fn interval(i: LatticeInterval) -> Self {
        Self::new(vec![i])
    }

    pub fn parts(&self) -> &[LatticeInterval] {
        &self.parts
    }

    pub fn contains(&self, z: i64) -> bool {
        self.parts.iter().any(|p| p.contains(z))
    }

    pub fn is_finite(&self) -> bool {
        self.parts.iter().all(LatticeInterval::is_finite)
    }

    pub fn min(&self) -> Option<i64> {
        self.parts.first().and_then(|p| p.lo)
    }

    pub fn max(&self) -> Option<i64> {
        self.parts.last().and_then(|p| p.hi)
    }

    pub fn len(&self) -> Option<u64> {
        self.parts.iter().map(LatticeInterval::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn intersect_interval(&self, w: &LatticeInterval) -> LatticeSet {
        LatticeSet::new(self.parts.iter().map(|p| p.intersect(w)).collect())
    }

    /// Points of a finite set in increasing order.
    pub fn points(&self) -> Vec<i64> {
        assert!(self.is_finite(), "cannot enumerate an unbounded lattice set");
        self.parts.iter().flat_map(|p| p.lo.unwrap()..=p.hi.unwrap()).collect()
    }
}
