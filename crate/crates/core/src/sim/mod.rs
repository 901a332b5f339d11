//! Continuous-time simulation of the K-exclusion process.
//!
//! [`direct`] samples the generator itself, either rejection-free with a
//! site-indexed rate tree or by uniformization over particles. [`stirring`]
//! realizes the same process by swapping labelled slots on a small fixed
//! window and exists to validate the coupling.
//!
//! Order statistics enumerate particles, not sites: a site holding `m`
//! particles contributes `m` equal entries.

mod direct;
mod stirring;
mod tree;

pub use direct::{simulate_direct, simulate_direct_with, DirectSimulator, Engine, SimOptions};
pub use stirring::{simulate_stirring, StirringState};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intervals::{check_disjoint, HalfOpen, IntervalError};
use crate::scaling::ScalingMap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("window would exceed {max_sites} sites")]
    ResourceExceeded { max_sites: usize },
    #[error("tracked particle reached the window boundary at site {site} (time {time})")]
    WindowExit { time: f64, site: i64 },
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// Occupation numbers on a finite window; zero outside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    lo: i64,
    occ: Vec<u8>,
    k: u32,
    total: u64,
}

impl Configuration {
    /// `occ[i]` is the occupation of site `lo + i`.
    pub fn from_occupancy(lo: i64, occ: Vec<u8>, k: u32) -> Result<Self, SimError> {
        if k == 0 || k > u32::from(u8::MAX) {
            return Err(SimError::InvalidConfiguration(format!("K = {k} out of range")));
        }
        if let Some(i) = occ.iter().position(|&o| u32::from(o) > k) {
            return Err(SimError::InvalidConfiguration(format!(
                "site {} holds {} > K = {k} particles",
                lo + i as i64,
                occ[i]
            )));
        }
        let total = occ.iter().map(|&o| u64::from(o)).sum();
        Ok(Self { lo, occ, k, total })
    }

    /// Builds a configuration from particle positions (repetition allowed up to `k`).
    pub fn from_positions(positions: &[i64], k: u32) -> Result<Self, SimError> {
        let Some((&lo, &hi)) = positions.iter().min().zip(positions.iter().max()) else {
            return Self::from_occupancy(0, Vec::new(), k);
        };
        let mut occ = vec![0u32; (hi - lo + 1) as usize];
        for &x in positions {
            occ[(x - lo) as usize] += 1;
        }
        if let Some(i) = occ.iter().position(|&o| o > k) {
            return Err(SimError::InvalidConfiguration(format!(
                "site {} holds {} > K = {k} particles",
                lo + i as i64,
                occ[i]
            )));
        }
        Self::from_occupancy(lo, occ.into_iter().map(|o| o as u8).collect(), k)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// First site of the stored window.
    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Last site of the stored window.
    pub fn hi(&self) -> i64 {
        self.lo + self.occ.len() as i64 - 1
    }

    pub fn occ(&self, x: i64) -> u32 {
        let i = x - self.lo;
        if i < 0 || i >= self.occ.len() as i64 {
            0
        } else {
            u32::from(self.occ[i as usize])
        }
    }

    pub fn raw(&self) -> &[u8] {
        &self.occ
    }

    /// Particle positions, nonincreasing.
    pub fn positions(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.total as usize);
        for (i, &o) in self.occ.iter().enumerate().rev() {
            for _ in 0..o {
                out.push(self.lo + i as i64);
            }
        }
        out
    }

    pub fn snapshot(&self, time: f64) -> ParticleSnapshot {
        ParticleSnapshot {
            time,
            positions: self.positions(),
        }
    }

    /// Occupied sites (leftmost, rightmost).
    pub fn occupied_range(&self) -> Option<(i64, i64)> {
        let first = self.occ.iter().position(|&o| o > 0)?;
        let last = self.occ.iter().rposition(|&o| o > 0)?;
        Some((self.lo + first as i64, self.lo + last as i64))
    }
}

/// Particle positions at one time, sorted nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSnapshot {
    pub time: f64,
    positions: Vec<i64>,
}

impl ParticleSnapshot {
    pub fn new(time: f64, mut positions: Vec<i64>) -> Self {
        positions.sort_unstable_by(|a, b| b.cmp(a));
        Self { time, positions }
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn max_multiplicity(&self) -> usize {
        self.positions
            .chunk_by(|a, b| a == b)
            .map(<[i64]>::len)
            .max()
            .unwrap_or(0)
    }

    /// Rows `replica,time,rank,position`.
    pub fn write_csv_rows<W: Write>(&self, replica: u64, m_max: usize, mut w: W) -> std::io::Result<()> {
        for (m, x) in self.positions.iter().take(m_max + 1).enumerate() {
            writeln!(w, "{replica},{},{m},{x}", self.time)?;
        }
        Ok(())
    }
}

/// `X^(0), …, X^(m_max)`; `None` stands for `−∞` beyond the particle count.
pub fn order_statistics(snapshot: &ParticleSnapshot, m_max: usize) -> Vec<Option<i64>> {
    (0..=m_max).map(|m| snapshot.positions.get(m).copied()).collect()
}

/// Number of particles whose rescaled position `v(x)` falls in each interval.
pub fn rescaled_counts(
    snapshot: &ParticleSnapshot,
    map: &ScalingMap,
    intervals: &[HalfOpen],
) -> Result<Vec<u64>, SimError> {
    check_disjoint(intervals)?;
    let mut counts = vec![0u64; intervals.len()];
    for &x in &snapshot.positions {
        let v = map.forward(x as f64);
        if let Some(j) = intervals.iter().position(|i| i.contains(v)) {
            counts[j] += 1;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics_repeat_by_occupancy() {
        let c = Configuration::from_positions(&[0, 0, -3], 2).unwrap();
        let s = c.snapshot(0.0);
        assert_eq!(order_statistics(&s, 3), vec![Some(0), Some(0), Some(-3), None]);
        let empty = ParticleSnapshot::new(0.0, vec![]);
        assert_eq!(order_statistics(&empty, 2), vec![None; 3]);
    }

    #[test]
    fn configuration_rejects_overfull_sites() {
        assert!(Configuration::from_positions(&[1, 1, 1], 2).is_err());
        assert!(Configuration::from_occupancy(0, vec![3], 2).is_err());
        let c = Configuration::from_occupancy(-2, vec![1, 0, 2], 2).unwrap();
        assert_eq!(c.total(), 3);
        assert_eq!(c.positions(), vec![0, 0, -2]);
        assert_eq!(c.occupied_range(), Some((-2, 0)));
        assert_eq!(c.occ(5), 0);
    }

    #[test]
    fn counts_half_open() {
        let map = ScalingMap::custom(1.0, 0.0, 1.0).unwrap();
        let s = ParticleSnapshot::new(0.0, vec![1, 2]);
        let c = rescaled_counts(&s, &map, &[HalfOpen::new(0.0, 2.0).unwrap()]).unwrap();
        assert_eq!(c, vec![2]);
        let c = rescaled_counts(&s, &map, &[HalfOpen::new(0.0, 1.0).unwrap(), HalfOpen::above(1.0)]).unwrap();
        assert_eq!(c, vec![1, 1]);
        let overlap = [HalfOpen::new(0.0, 2.0).unwrap(), HalfOpen::new(1.0, 3.0).unwrap()];
        assert!(rescaled_counts(&s, &map, &overlap).is_err());
    }

    #[test]
    fn counts_over_partition_conserve_total() {
        let map = ScalingMap::custom(1.5, 0.3, 2.0).unwrap();
        let s = ParticleSnapshot::new(1.0, vec![-7, -3, 0, 0, 2, 9]);
        let parts = [
            HalfOpen::below(-1.0),
            HalfOpen::new(-1.0, 0.5).unwrap(),
            HalfOpen::above(0.5),
        ];
        let c = rescaled_counts(&s, &map, &parts).unwrap();
        assert_eq!(c.iter().sum::<u64>(), 6);
    }
}
