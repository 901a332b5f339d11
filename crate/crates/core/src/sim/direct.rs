use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use super::tree::SumTree;
use super::{Configuration, ParticleSnapshot, SimError};
use crate::kernel::JumpKernel;

/// How the jump chain is sampled. Both produce the exact law of the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Rejection-free: a rate tree over sites, one exponential holding time per jump.
    #[default]
    RateTree,
    /// Every particle proposes at rate K; a proposal to `y` is accepted with
    /// probability `(K − η(y)) / K`. Cheaper per step, so faster whenever
    /// most proposals succeed or the tree is deep.
    Uniformized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub engine: Engine,
    /// Recheck rate bookkeeping and occupancy bounds after every event.
    pub audit: bool,
    pub max_sites: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            engine: Engine::RateTree,
            audit: false,
            max_sites: 1 << 26,
        }
    }
}

impl SimOptions {
    pub fn engine(engine: Engine) -> Self {
        Self {
            engine,
            ..Self::default()
        }
    }
}

/// Single-replica simulator driven by the generator
/// `p(x,y) η(x) (K − η(y)) (f(η^{x,y}) − f(η))`.
#[derive(Debug, Clone)]
pub struct DirectSimulator<'a> {
    kernel: &'a JumpKernel,
    k: u32,
    time: f64,
    /// occupation of site `lo + i`; every particle stays at least `reach` sites from either end
    lo: i64,
    occ: Vec<u8>,
    reach: i64,
    particles: Vec<i64>,
    tree: Option<SumTree>,
    total: u64,
    visited: Option<(i64, i64)>,
    events: u64,
    opts: SimOptions,
}

impl<'a> DirectSimulator<'a> {
    pub fn new(config: &Configuration, kernel: &'a JumpKernel, opts: SimOptions) -> Result<Self, SimError> {
        let reach = kernel.max_offset();
        let positions = config.positions();
        let (lo, hi) = config.occupied_range().unwrap_or((0, 0));
        let pad = (hi - lo + 1).max(16) / 2 + 2 * reach;
        let base = lo - pad;
        let len = (hi - lo + 1 + 2 * pad) as usize;
        if len > opts.max_sites {
            return Err(SimError::ResourceExceeded {
                max_sites: opts.max_sites,
            });
        }
        let mut occ = vec![0u8; len];
        for &x in &positions {
            occ[(x - base) as usize] += 1;
        }
        let particles = if opts.engine == Engine::Uniformized {
            // label order: increasing initial position
            positions.iter().rev().copied().collect()
        } else {
            Vec::new()
        };
        let mut sim = Self {
            kernel,
            k: config.k(),
            time: 0.0,
            lo: base,
            occ,
            reach,
            particles,
            tree: None,
            total: config.total(),
            visited: config.occupied_range(),
            events: 0,
            opts,
        };
        if opts.engine == Engine::RateTree {
            sim.rebuild_tree();
        }
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Accepted jumps so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    /// Leftmost and rightmost sites ever occupied.
    pub fn visited_range(&self) -> Option<(i64, i64)> {
        self.visited
    }

    pub fn occ(&self, x: i64) -> u32 {
        let i = x - self.lo;
        if i < 0 || i >= self.occ.len() as i64 {
            0
        } else {
            u32::from(self.occ[i as usize])
        }
    }

    /// Positions by particle label (uniformized engine only; labels follow
    /// the initial order from left to right).
    pub fn labelled_positions(&self) -> Option<&[i64]> {
        (self.opts.engine == Engine::Uniformized).then_some(&self.particles[..])
    }

    pub fn configuration(&self) -> Configuration {
        let first = self.occ.iter().position(|&o| o > 0);
        let last = self.occ.iter().rposition(|&o| o > 0);
        match (first, last) {
            (Some(a), Some(b)) => Configuration::from_occupancy(self.lo + a as i64, self.occ[a..=b].to_vec(), self.k)
                .expect("occupancy stays within K"),
            _ => Configuration::from_occupancy(0, Vec::new(), self.k).expect("empty configuration"),
        }
    }

    pub fn snapshot(&self) -> ParticleSnapshot {
        let mut positions = Vec::with_capacity(self.total as usize);
        for (i, &o) in self.occ.iter().enumerate().rev() {
            for _ in 0..o {
                positions.push(self.lo + i as i64);
            }
        }
        ParticleSnapshot {
            time: self.time,
            positions,
        }
    }

    /// `Σ_{x,y} p(x,y) η(x) (K − η(y))` from scratch.
    pub fn total_rate(&self) -> f64 {
        (0..self.occ.len()).map(|i| self.site_rate(i)).sum()
    }

    #[inline]
    fn site_rate(&self, i: usize) -> f64 {
        let o = self.occ[i];
        if o == 0 {
            return 0.0;
        }
        let k = self.k as i32;
        let mut r = 0.0;
        for (y, p) in self.kernel.pairs() {
            let j = i as i64 + y;
            let free = if j < 0 || j >= self.occ.len() as i64 {
                k
            } else {
                k - i32::from(self.occ[j as usize])
            };
            r += p * f64::from(free);
        }
        f64::from(o) * r
    }

    fn rebuild_tree(&mut self) {
        let w: Vec<f64> = (0..self.occ.len()).map(|i| self.site_rate(i)).collect();
        self.tree = Some(SumTree::new(&w));
    }

    fn ensure_margin(&mut self, x: i64) -> Result<(), SimError> {
        let i = x - self.lo;
        let len = self.occ.len() as i64;
        if i >= self.reach && i < len - self.reach {
            return Ok(());
        }
        let grow = len.max(64) as usize;
        let new_len = self.occ.len() + grow;
        if new_len > self.opts.max_sites {
            return Err(SimError::ResourceExceeded {
                max_sites: self.opts.max_sites,
            });
        }
        if i < self.reach {
            let mut occ = vec![0u8; grow];
            occ.extend_from_slice(&self.occ);
            self.occ = occ;
            self.lo -= grow as i64;
        } else {
            self.occ.resize(new_len, 0);
        }
        if self.opts.engine == Engine::RateTree {
            self.rebuild_tree();
        }
        Ok(())
    }

    #[inline]
    fn note_visit(&mut self, y: i64) {
        self.visited = Some(match self.visited {
            Some((a, b)) => (a.min(y), b.max(y)),
            None => (y, y),
        });
    }

    /// Advances to `t_end` (no-op if already there).
    pub fn run_until<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<(), SimError> {
        if t_end <= self.time {
            return Ok(());
        }
        match self.opts.engine {
            Engine::RateTree => self.run_tree(t_end, rng),
            Engine::Uniformized => self.run_uniformized(t_end, rng),
        }
    }

    fn run_tree<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<(), SimError> {
        loop {
            let total = self.tree.as_ref().expect("rate tree engine").total();
            if total <= 0.0 {
                self.time = t_end;
                return Ok(());
            }
            let hold: f64 = Exp1.sample(rng);
            let t_next = self.time + hold / total;
            if t_next > t_end {
                self.time = t_end;
                return Ok(());
            }
            self.time = t_next;
            let tree = self.tree.as_ref().unwrap();
            let i = tree.find(rng.random::<f64>() * total);
            // pick the target with weight p(y)(K − η(x+y))
            let k = self.k as i32;
            let free = |y: i64| {
                let j = (i as i64 + y) as usize;
                f64::from(k - i32::from(self.occ[j]))
            };
            let sum: f64 = self.kernel.pairs().map(|(y, p)| p * free(y)).sum();
            let mut u = rng.random::<f64>() * sum;
            let mut target = None;
            for (y, p) in self.kernel.pairs() {
                let w = p * free(y);
                if w > 0.0 {
                    target = Some(y);
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            let y = target.expect("positive site rate has a free target");
            let x_site = self.lo + i as i64;
            self.jump(x_site, x_site + y)?;
        }
    }

    fn jump(&mut self, x: i64, y: i64) -> Result<(), SimError> {
        let (ix, iy) = ((x - self.lo) as usize, (y - self.lo) as usize);
        self.occ[ix] -= 1;
        self.occ[iy] += 1;
        self.events += 1;
        self.note_visit(y);
        if self.tree.is_some() {
            let r = self.reach;
            let len = self.occ.len() as i64;
            let (a, b) = (ix.min(iy) as i64, ix.max(iy) as i64);
            let touched: Vec<usize> = if b - a <= 2 * r {
                ((a - r).max(0)..=(b + r).min(len - 1)).map(|j| j as usize).collect()
            } else {
                ((a - r).max(0)..=(a + r).min(len - 1))
                    .chain((b - r).max(0)..=(b + r).min(len - 1))
                    .map(|j| j as usize)
                    .collect()
            };
            let rates: Vec<(usize, f64)> = touched.into_iter().map(|j| (j, self.site_rate(j))).collect();
            if let Some(tree) = self.tree.as_mut() {
                for (j, w) in rates {
                    tree.set(j, w);
                }
            }
        }
        self.ensure_margin(y)?;
        if self.opts.audit {
            self.audit()?;
        }
        Ok(())
    }

    fn run_uniformized<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<(), SimError> {
        let n = self.particles.len();
        let dt = t_end - self.time;
        self.time = t_end;
        if n == 0 {
            return Ok(());
        }
        let mean = n as f64 * f64::from(self.k) * dt;
        let attempts = Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64);
        let k = u64::from(self.k);
        for _ in 0..attempts {
            let r1 = rng.next_u64();
            let idx = (((r1 >> 32) * n as u64) >> 32) as usize;
            let x = self.particles[idx];
            let y = x + self.kernel.sample_from_bits(rng.next_u64());
            let iy = (y - self.lo) as usize;
            let free = k - u64::from(self.occ[iy]);
            let accept = if k == 1 {
                free == 1
            } else {
                ((r1 & 0xffff_ffff) * k) >> 32 < free
            };
            if accept {
                self.occ[(x - self.lo) as usize] -= 1;
                self.occ[iy] += 1;
                self.particles[idx] = y;
                self.events += 1;
                self.note_visit(y);
                self.ensure_margin(y)?;
                if self.opts.audit {
                    self.audit()?;
                }
            }
        }
        Ok(())
    }

    fn audit(&self) -> Result<(), SimError> {
        if let Some(i) = self.occ.iter().position(|&o| u32::from(o) > self.k) {
            return Err(SimError::InvalidConfiguration(format!(
                "site {} exceeds K",
                self.lo + i as i64
            )));
        }
        let total: u64 = self.occ.iter().map(|&o| u64::from(o)).sum();
        if total != self.total {
            return Err(SimError::InvalidConfiguration(format!(
                "particle count {total} != {}",
                self.total
            )));
        }
        if let Some(tree) = &self.tree {
            let direct = self.total_rate();
            if (tree.total() - direct).abs() > 1e-9 {
                return Err(SimError::InvalidConfiguration(format!(
                    "rate tree total {} != {direct}",
                    tree.total()
                )));
            }
        }
        Ok(())
    }
}

/// Runs one replica from `config0` to `t_end` with the default (rate tree) engine.
pub fn simulate_direct<R: Rng + ?Sized>(
    config0: &Configuration,
    kernel: &JumpKernel,
    t_end: f64,
    rng: &mut R,
) -> Result<ParticleSnapshot, SimError> {
    simulate_direct_with(config0, kernel, t_end, SimOptions::default(), rng)
}

pub fn simulate_direct_with<R: Rng + ?Sized>(
    config0: &Configuration,
    kernel: &JumpKernel,
    t_end: f64,
    opts: SimOptions,
    rng: &mut R,
) -> Result<ParticleSnapshot, SimError> {
    let mut sim = DirectSimulator::new(config0, kernel, opts)?;
    sim.run_until(t_end, rng)?;
    Ok(sim.snapshot())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(k: u32, len: usize) -> Configuration {
        Configuration::from_occupancy(1 - len as i64, vec![k as u8; len], k).unwrap()
    }

    #[test]
    fn time_zero_snapshot() {
        let kern = JumpKernel::nearest_neighbor();
        let c = step(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for engine in [Engine::RateTree, Engine::Uniformized] {
            let s = simulate_direct_with(&c, &kern, 0.0, SimOptions::engine(engine), &mut rng).unwrap();
            assert_eq!(s.positions(), c.positions().as_slice());
        }
    }

    #[test]
    fn audited_runs_conserve_and_respect_capacity() {
        let kern = JumpKernel::new(&[(1, 0.3), (-1, 0.3), (2, 0.2), (-2, 0.2)]).unwrap();
        let c = step(3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for engine in [Engine::RateTree, Engine::Uniformized] {
            let opts = SimOptions {
                engine,
                audit: true,
                ..SimOptions::default()
            };
            let mut sim = DirectSimulator::new(&c, &kern, opts).unwrap();
            for t in [0.5, 2.0, 20.0] {
                sim.run_until(t, &mut rng).unwrap();
                let s = sim.snapshot();
                assert_eq!(s.len(), 18);
                assert!(s.max_multiplicity() <= 3);
            }
            assert!(sim.events() > 0);
        }
    }

    #[test]
    fn exclusion_rigidity_for_k1_nearest_neighbor() {
        let kern = JumpKernel::nearest_neighbor();
        let c = Configuration::from_positions(&[-6, -4, -3, -1, 0], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut sim = DirectSimulator::new(&c, &kern, SimOptions::engine(Engine::Uniformized)).unwrap();
            sim.run_until(10.0, &mut rng).unwrap();
            let lab = sim.labelled_positions().unwrap();
            assert!(lab.windows(2).all(|w| w[0] < w[1]), "{lab:?}");
        }
    }

    #[test]
    fn window_grows_with_far_jumps() {
        let kern = JumpKernel::new(&[(5, 0.5), (-5, 0.5), (1, 0.0), (-1, 0.0)]);
        // zero-weight offsets are fine; the support gcd only counts charged offsets
        assert!(kern.is_err());
        let kern = JumpKernel::new(&[(7, 0.25), (-7, 0.25), (1, 0.25), (-1, 0.25)]).unwrap();
        let c = Configuration::from_positions(&[0], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = simulate_direct(&c, &kern, 200.0, &mut rng).unwrap();
        assert_eq!(s.len(), 1);
    }
}
