//! K-exclusion on `ℤ`: each site holds at most `K` particles and a particle
//! at `x` jumps to `y` at rate `p(y − x)(K − η(y))`.
//!
//! - [`kernel`], [`rw`]: jump laws and the continuous-time walk.
//! - [`scaling`], [`intervals`]: centering maps and rescaled sets.
//! - [`profiles`], [`sim`], [`experiment`]: initial laws, exact simulation and
//!   seeded replica sweeps.
//! - [`analytics`]: intensities, limit constants, `κ_t` and `τ_t`.
//! - [`exactsg`]: dense semigroups on small graphs and the inequality checks.
//! - [`stats`]: goodness-of-fit tests against the limiting Poisson process.

pub mod analytics;
pub mod exactsg;
pub mod experiment;
pub mod intervals;
pub mod kernel;
pub mod profiles;
pub mod quad;
pub mod rw;
pub mod scaling;
pub mod sim;
pub mod stats;

pub use analytics::{Estimate, LimitCase};
pub use experiment::{Cell, LRule};
pub use intervals::{HalfOpen, IntervalUnion, LatticeInterval, LatticeSet};
pub use kernel::JumpKernel;
pub use profiles::{InitialProfile, Variant};
pub use scaling::ScalingMap;
pub use sim::{Configuration, Engine, ParticleSnapshot, SimOptions};
pub use stats::TestResult;
