//! Fixtures shared by the criterion benches.

use ksep_core::exactsg::{Instance, SiteKernel};
use ksep_core::intervals::{HalfOpen, IntervalUnion, LatticeInterval, LatticeSet};
use ksep_core::kernel::JumpKernel;
use ksep_core::profiles::InitialProfile;
use ksep_core::scaling::make_time_map;
use ksep_core::sim::Configuration;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Interacting chain on a path of `sites` sites with `n` particles.
pub fn path_instance(sites: usize, n: usize, k: u32) -> Instance {
    Instance::new(SiteKernel::path(sites).expect("path"), n, k).expect("instance")
}

/// A sampled step of `k` layers on `(−len, 0]`.
pub fn step_configuration(k: u32, len: u64, seed: u64) -> Configuration {
    let profile = InitialProfile::full_step(k).expect("profile");
    profile.sample_configuration(len, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `(v_t⁻¹((0, 1]), (−∞, 0])` for the nearest-neighbour walk.
pub fn kappa_sets(t: f64) -> (LatticeSet, LatticeSet) {
    let map = make_time_map(JumpKernel::nearest_neighbor().sigma(), t).expect("map");
    let a = map
        .preimage_union(&IntervalUnion::single(HalfOpen::new(0.0, 1.0).expect("interval")))
        .lattice();
    (a, LatticeSet::interval(LatticeInterval::at_most(0)))
}

/// `v_t⁻¹((0, ∞))` for the nearest-neighbour walk.
pub fn upper_set(t: f64) -> IntervalUnion {
    let map = make_time_map(JumpKernel::nearest_neighbor().sigma(), t).expect("map");
    map.preimage_union(&IntervalUnion::single(HalfOpen::above(0.0)))
}
