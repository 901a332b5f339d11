//! Monte Carlo against exact single-walk laws and the intensity formula.

use std::collections::BTreeMap;

use ksep_core::analytics::intensity_truncated;
use ksep_core::experiment::{replica_rng, run_cell, Cell};
use ksep_core::intervals::{HalfOpen, IntervalUnion};
use ksep_core::kernel::JumpKernel;
use ksep_core::profiles::InitialProfile;
use ksep_core::rw::transition_probs;
use ksep_core::sim::{simulate_stirring, Configuration, DirectSimulator, Engine, ParticleSnapshot, SimOptions};
use ksep_core::stats::chi_square_two_sample;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn lone_particle_is_a_rate_k_walk() {
    let kern = JumpKernel::nearest_neighbor();
    let (k, t, reps) = (3u32, 2.0, 20_000u64);
    let table = transition_probs(&kern, f64::from(k), t, 0, 1e-14).unwrap();
    for engine in [Engine::RateTree, Engine::Uniformized] {
        let config = Configuration::from_positions(&[0], k).unwrap();
        let mut hist = BTreeMap::<i64, u64>::new();
        for r in 0..reps {
            let mut rng = replica_rng(11, engine as u64, r);
            let mut sim = DirectSimulator::new(&config, &kern, SimOptions::engine(engine)).unwrap();
            sim.run_until(t, &mut rng).unwrap();
            *hist.entry(sim.snapshot().positions()[0]).or_default() += 1;
        }
        // goodness of fit over |z| ≤ 5 plus the pooled tails
        let mut stat = 0.0;
        let mut cells = 0;
        let mut tail_obs = reps as f64;
        let mut tail_p = 1.0;
        for z in -5..=5 {
            let p = table.prob(z);
            let o = *hist.get(&z).unwrap_or(&0) as f64;
            stat += (o - reps as f64 * p).powi(2) / (reps as f64 * p);
            tail_obs -= o;
            tail_p -= p;
            cells += 1;
        }
        stat += (tail_obs - reps as f64 * tail_p).powi(2) / (reps as f64 * tail_p);
        let p_value = ChiSquared::new(f64::from(cells)).unwrap().sf(stat);
        assert!(p_value > 1e-3, "{engine:?}: chi2 {stat} p {p_value}");
    }
}

#[test]
fn mean_counts_match_intensity() {
    let kern = JumpKernel::nearest_neighbor();
    for (profile, l, t, y) in [
        (InitialProfile::full_step(2).unwrap(), 8u64, 6.0, 1.0),
        (InitialProfile::binomial(3, 0.4).unwrap(), 10, 12.0, 2.5),
        (InitialProfile::step(2, 1, 5).unwrap(), 20, 4.0, -1.5),
    ] {
        let k = f64::from(profile.k);
        let cell = Cell {
            profile: profile.clone(),
            t,
            l,
            replicas: 20_000,
            seed: 5,
            id: 0,
            engine: Engine::Uniformized,
        };
        let counts = run_cell(&cell, &kern, |s: &ParticleSnapshot| {
            s.positions().iter().filter(|&&x| x as f64 > y).count() as f64
        })
        .unwrap();
        let (m, se) = mean_and_se(&counts);
        let exact = intensity_truncated(&profile, l, &kern, t / k, &IntervalUnion::single(HalfOpen::above(y)))
            .unwrap()
            .value;
        assert!((m - exact).abs() < 4.0 * se, "{profile:?}: {m} ± {se} vs {exact}");
    }
}

#[test]
fn engines_agree_on_occupation_law() {
    let kern = JumpKernel::nearest_neighbor();
    let config = Configuration::from_positions(&[-1, 0, 0, 1, 1, 2], 2).unwrap();
    let mut laws = Vec::new();
    for engine in [Engine::RateTree, Engine::Uniformized] {
        let mut hist = BTreeMap::<Vec<i64>, u64>::new();
        for r in 0..20_000 {
            let mut rng = replica_rng(13, engine as u64, r);
            let mut sim = DirectSimulator::new(&config, &kern, SimOptions::engine(engine)).unwrap();
            sim.run_until(0.5, &mut rng).unwrap();
            *hist.entry(sim.snapshot().positions().to_vec()).or_default() += 1;
        }
        laws.push(hist);
    }
    let chi = chi_square_two_sample(&laws[0], &laws[1], 5.0).unwrap();
    assert!(chi.p_value > 1e-3, "{chi:?}");
}

#[test]
fn stirring_matches_direct() {
    let kern = JumpKernel::from_weights(&[(-2, 1.0), (-1, 2.0), (1, 2.0), (2, 1.0)]).unwrap();
    let config = Configuration::from_positions(&[9, 10, 10, 11], 2).unwrap();
    let mut direct = BTreeMap::<Vec<i64>, u64>::new();
    let mut stir = BTreeMap::<Vec<i64>, u64>::new();
    for r in 0..20_000 {
        let mut rng = replica_rng(17, 0, r);
        let mut sim = DirectSimulator::new(&config, &kern, SimOptions::default()).unwrap();
        sim.run_until(0.7, &mut rng).unwrap();
        *direct.entry(sim.snapshot().positions().to_vec()).or_default() += 1;
        let mut rng = replica_rng(17, 1, r);
        let (snap, _) = simulate_stirring(&config, &kern, (-10, 30), 0.7, &mut rng).unwrap();
        *stir.entry(snap.positions().to_vec()).or_default() += 1;
    }
    let chi = chi_square_two_sample(&direct, &stir, 5.0).unwrap();
    assert!(chi.p_value > 1e-3, "{chi:?}");
}

#[test]
fn identical_seeds_reproduce() {
    let kern = JumpKernel::nearest_neighbor();
    let cell = Cell {
        profile: InitialProfile::binomial(2, 0.5).unwrap(),
        t: 30.0,
        l: 12,
        replicas: 50,
        seed: 42,
        id: 3,
        engine: Engine::RateTree,
    };
    let f = |s: &ParticleSnapshot| s.positions().to_vec();
    assert_eq!(run_cell(&cell, &kern, f).unwrap(), run_cell(&cell, &kern, f).unwrap());
}
