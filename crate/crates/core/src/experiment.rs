//! Seeded replica sweeps.
//!
//! Replica `r` of a cell draws from ChaCha8 seeded by a mix of the run seed
//! and the cell id, on stream `r`, so results do not depend on the thread
//! count or on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::JumpKernel;
use crate::profiles::InitialProfile;
use crate::scaling::{make_block_map, make_time_map, time_spread, ScalingError, ScalingMap};
use crate::sim::{DirectSimulator, Engine, ParticleSnapshot, SimError, SimOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

/// Truncation length `L` of the initial step as a function of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LRule {
    Fixed {
        l: u64,
    },
    /// `⌈c √(t / log t)⌉`, so that `L √(log t / t) → c`.
    SpreadMultiple {
        c: f64,
    },
    /// `⌈c √t / log t⌉`.
    SqrtOverLog {
        c: f64,
    },
    /// `⌈t^γ⌉`.
    Power {
        gamma: f64,
    },
}

impl LRule {
    pub fn length(&self, t: f64) -> Result<u64, ExperimentError> {
        let raw = match *self {
            Self::Fixed { l } => {
                return if l >= 1 {
                    Ok(l)
                } else {
                    Err(ExperimentError::Invalid("L must be ≥ 1".into()))
                }
            }
            Self::SpreadMultiple { c } => c * time_spread(t),
            Self::SqrtOverLog { c } => c * t.sqrt() / t.ln(),
            Self::Power { gamma } => t.powf(gamma),
        };
        if !(raw.is_finite() && raw > 0.0) {
            return Err(ExperimentError::Invalid(format!(
                "L-rule {self:?} gives {raw} at t = {t}"
            )));
        }
        Ok(raw.ceil() as u64)
    }

    /// The rescaling the limit theorems pair with this rule: the time map
    /// when `L` grows like `√(t / log t)` or faster, the block map otherwise.
    pub fn scaling_map(&self, sigma: f64, t: f64) -> Result<ScalingMap, ExperimentError> {
        match self {
            Self::SpreadMultiple { .. } => Ok(make_time_map(sigma, t)?),
            _ => Ok(make_block_map(sigma, t, self.length(t)?)?),
        }
    }
}

/// One `(profile, t, L)` cell of a sweep. `t` is the time of the limit
/// theorems; replicas are run to `t / K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub profile: InitialProfile,
    pub t: f64,
    pub l: u64,
    pub replicas: u64,
    pub seed: u64,
    pub id: u64,
    pub engine: Engine,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replica_rng(seed: u64, cell: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(cell)));
    rng.set_stream(replica);
    rng
}

/// Runs every replica of `cell` and maps its final snapshot through `f`.
/// Output order is replica order.
pub fn run_cell<T, F>(cell: &Cell, kernel: &JumpKernel, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(&ParticleSnapshot) -> T + Sync,
{
    if !(cell.t > 0.0) || cell.l == 0 {
        return Err(ExperimentError::Invalid("need t > 0 and L ≥ 1".into()));
    }
    let horizon = cell.t / f64::from(cell.profile.k);
    let opts = SimOptions::engine(cell.engine);
    (0..cell.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cell.seed, cell.id, r);
            let config = cell.profile.sample_configuration(cell.l, &mut rng);
            let mut sim = DirectSimulator::new(&config, kernel, opts)?;
            sim.run_until(horizon, &mut rng)?;
            Ok(f(&sim.snapshot()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn l_rules() {
        let t = 4000.0;
        assert_eq!(LRule::Fixed { l: 7 }.length(t).unwrap(), 7);
        assert_eq!(LRule::Power { gamma: 0.25 }.length(t).unwrap(), 8);
        assert_eq!(LRule::SpreadMultiple { c: 1.0 }.length(t).unwrap(), 22);
        assert_eq!(LRule::SqrtOverLog { c: 1.0 }.length(t).unwrap(), 8);
        assert!(LRule::Fixed { l: 0 }.length(t).is_err());
        assert!(LRule::Power { gamma: f64::NAN }.length(t).is_err());
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a = replica_rng(1, 2, 3).next_u64();
        assert_eq!(a, replica_rng(1, 2, 3).next_u64());
        assert_ne!(a, replica_rng(1, 2, 4).next_u64());
        assert_ne!(a, replica_rng(1, 3, 3).next_u64());
    }

    #[test]
    fn run_is_thread_count_invariant() {
        let cell = Cell {
            profile: InitialProfile::full_step(2).unwrap(),
            t: 20.0,
            l: 6,
            replicas: 16,
            seed: 9,
            id: 0,
            engine: Engine::Uniformized,
        };
        let kern = JumpKernel::nearest_neighbor();
        let top = |s: &ParticleSnapshot| s.positions()[0];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let two = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let a = one.install(|| run_cell(&cell, &kern, top)).unwrap();
        let b = two.install(|| run_cell(&cell, &kern, top)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
    }
}
