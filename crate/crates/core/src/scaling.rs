//! Centering and scaling of particle positions.
//!
//! Time maps use `a_t = log(t / (√(2π) log t))`, `b_t = √(t / log t)`; block
//! maps use `a_{t,L} = log(L² / √(2π log L²))`, `b_{t,L} = √(t / log L²)`.
//! Both send a lattice position `x` to `x / (σ b) − a`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intervals::{HalfOpen, IntervalUnion};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("domain error: {0}")]
    DomainError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    Time { t: f64 },
    Block { t: f64, l: u64 },
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    #[serde(flatten)]
    pub kind: MapKind,
}

pub fn time_centering(t: f64) -> f64 {
    (t / ((2.0 * std::f64::consts::PI).sqrt() * t.ln())).ln()
}

pub fn time_spread(t: f64) -> f64 {
    (t / t.ln()).sqrt()
}

pub fn make_time_map(sigma: f64, t: f64) -> Result<ScalingMap, ScalingError> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(ScalingError::DomainError(format!("time map needs t > 1, got {t}")));
    }
    check_sigma(sigma)?;
    Ok(ScalingMap {
        sigma,
        a: time_centering(t),
        b: time_spread(t),
        kind: MapKind::Time { t },
    })
}

pub fn make_block_map(sigma: f64, t: f64, l: u64) -> Result<ScalingMap, ScalingError> {
    if l < 2 {
        return Err(ScalingError::DomainError(format!("block map needs L >= 2, got {l}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(ScalingError::DomainError(format!("block map needs t > 0, got {t}")));
    }
    check_sigma(sigma)?;
    let log_l2 = 2.0 * (l as f64).ln();
    let l2 = (l as f64).powi(2);
    Ok(ScalingMap {
        sigma,
        a: (l2 / (2.0 * std::f64::consts::PI * log_l2).sqrt()).ln(),
        b: (t / log_l2).sqrt(),
        kind: MapKind::Block { t, l },
    })
}

fn check_sigma(sigma: f64) -> Result<(), ScalingError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(ScalingError::DomainError(format!("sigma must be > 0, got {sigma}")))
    }
}

impl ScalingMap {
    /// An arbitrary affine map, mainly for tests.
    pub fn custom(sigma: f64, a: f64, b: f64) -> Result<Self, ScalingError> {
        check_sigma(sigma)?;
        if !(b > 0.0) {
            return Err(ScalingError::DomainError(format!("b must be > 0, got {b}")));
        }
        Ok(Self {
            sigma,
            a,
            b,
            kind: MapKind::Custom,
        })
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.sigma * self.b
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        x / self.scale() - self.a
    }

    /// `v^{-1}(u) = σ b (u + a)`; infinities map to themselves.
    #[inline]
    pub fn inverse(&self, u: f64) -> f64 {
        if u.is_infinite() {
            u
        } else {
            self.scale() * (u + self.a)
        }
    }

    pub fn preimage(&self, i: &HalfOpen) -> HalfOpen {
        HalfOpen {
            lo: self.inverse(i.lo),
            hi: self.inverse(i.hi),
        }
    }

    pub fn preimage_union(&self, u: &IntervalUnion) -> IntervalUnion {
        IntervalUnion::new(u.components().iter().map(|c| self.preimage(c)).collect())
    }
}
