use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{Configuration, ParticleSnapshot, SimError};
use crate::kernel::JumpKernel;

/// Labelled slots on a fixed window: site `lo + s / K` holds slot `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StirringState {
    pub k: u32,
    pub lo: i64,
    pub hi: i64,
    /// `(initial site, layer)` of each tracked particle
    pub labels: Vec<(i64, u32)>,
    /// current site of each label
    pub sites: Vec<i64>,
    slots: Vec<Option<u32>>,
}

impl StirringState {
    fn new(config: &Configuration, lo: i64, hi: i64) -> Self {
        let k = config.k();
        let width = (hi - lo + 1) as usize;
        let mut slots = vec![None; width * k as usize];
        let mut labels = Vec::new();
        let mut sites = Vec::new();
        for x in lo..=hi {
            for j in 0..config.occ(x) {
                let label = labels.len() as u32;
                labels.push((x, j));
                sites.push(x);
                slots[(x - lo) as usize * k as usize + j as usize] = Some(label);
            }
        }
        Self {
            k,
            lo,
            hi,
            labels,
            sites,
            slots,
        }
    }

    /// Occupation numbers recovered from the labels.
    pub fn occupation(&self) -> Configuration {
        let mut occ = vec![0u8; (self.hi - self.lo + 1) as usize];
        for &x in &self.sites {
            occ[(x - self.lo) as usize] += 1;
        }
        Configuration::from_occupancy(self.lo, occ, self.k).expect("slots hold at most K labels")
    }
}

/// Stirring realization on the window `[lo, hi]`. Each unordered pair
/// `{x, y}` inside the window rings at rate `K² p(x,y)` and swaps one
/// uniformly chosen slot at `x` with one at `y`. Fails with `WindowExit` as
/// soon as a particle enters the outer `max_offset` sites, where pairs
/// leaving the window would have mattered.
pub fn simulate_stirring<R: Rng + ?Sized>(
    config0: &Configuration,
    kernel: &JumpKernel,
    window: (i64, i64),
    t_end: f64,
    rng: &mut R,
) -> Result<(ParticleSnapshot, StirringState), SimError> {
    let (lo, hi) = window;
    let r = kernel.max_offset();
    let (inner_lo, inner_hi) = (lo + r, hi - r);
    if inner_lo > inner_hi {
        return Err(SimError::InvalidConfiguration(
            "window narrower than the kernel range".into(),
        ));
    }
    if let Some((a, b)) = config0.occupied_range() {
        if a < inner_lo || b > inner_hi {
            return Err(SimError::InvalidConfiguration(format!(
                "particles occupy [{a}, {b}], outside the interior [{inner_lo}, {inner_hi}]"
            )));
        }
    }
    let mut state = StirringState::new(config0, lo, hi);
    let k = config0.k() as usize;
    let width = (hi - lo + 1) as usize;
    // ordered pairs (x, x+y) at rate K² p(y) / 2 each; pairs leaving the window are thinned out
    let mean = width as f64 * (k * k) as f64 / 2.0 * t_end;
    let n = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    } else {
        0
    };
    let times = {
        let mut ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * t_end).collect();
        ts.sort_unstable_by(f64::total_cmp);
        ts
    };
    for &time in &times {
        let x = lo + rng.random_range(0..width as i64);
        let y = x + kernel.sample(rng);
        if y < lo || y > hi {
            continue;
        }
        let a = (x - lo) as usize * k + rng.random_range(0..k);
        let b = (y - lo) as usize * k + rng.random_range(0..k);
        state.slots.swap(a, b);
        for (slot, site) in [(a, x), (b, y)] {
            if let Some(label) = state.slots[slot] {
                state.sites[label as usize] = site;
                if site < inner_lo || site > inner_hi {
                    return Err(SimError::WindowExit { time, site });
                }
            }
        }
    }
    let snapshot = ParticleSnapshot::new(t_end, state.sites.clone());
    Ok((snapshot, state))
}
