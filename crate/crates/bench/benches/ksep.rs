use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ksep_bench::{kappa_sets, path_instance, step_configuration, upper_set};
use ksep_core::analytics::{full_step_intensity, intensity_truncated, kappa, KappaTauOptions};
use ksep_core::kernel::JumpKernel;
use ksep_core::profiles::InitialProfile;
use ksep_core::sim::{DirectSimulator, Engine, SimOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn semigroup(c: &mut Criterion) {
    let mut g = c.benchmark_group("semigroup");
    for (sites, n, k) in [(6, 2, 2), (7, 3, 2)] {
        let inst = path_instance(sites, n, k);
        let a: Vec<bool> = (0..sites).map(|x| x >= sites / 2).collect();
        let f = inst.power_indicator(&a);
        let f_omega = inst.restrict(&f);
        let id = format!("path{sites}_n{n}_k{k}");
        g.bench_function(BenchmarkId::new("v", &id), |b| {
            b.iter(|| inst.v_semigroup(black_box(1.0), &f_omega))
        });
        g.bench_function(BenchmarkId::new("u", &id), |b| {
            b.iter(|| inst.u_semigroup(black_box(1.0), &f))
        });
    }
    g.finish();
}

fn engines(c: &mut Criterion) {
    let kern = JumpKernel::nearest_neighbor();
    let config = step_configuration(2, 60, 1);
    let mut g = c.benchmark_group("simulation");
    g.sample_size(20);
    for engine in [Engine::RateTree, Engine::Uniformized] {
        g.bench_function(BenchmarkId::new("step_k2_l60_t100", format!("{engine:?}")), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            b.iter(|| {
                let mut sim = DirectSimulator::new(&config, &kern, SimOptions::engine(engine)).expect("simulator");
                sim.run_until(50.0, &mut rng).expect("run");
                black_box(sim.snapshot().positions()[0])
            })
        });
    }
    g.finish();
}

fn kappa_quadrature(c: &mut Criterion) {
    let kern = JumpKernel::nearest_neighbor();
    let opts = KappaTauOptions::default();
    let mut g = c.benchmark_group("kappa");
    g.sample_size(10);
    for t in [50.0, 200.0] {
        let (a, b) = kappa_sets(t);
        g.bench_function(BenchmarkId::from_parameter(t), |bch| {
            bch.iter(|| kappa(&kern, black_box(t), &a, &b, &opts).expect("kappa"))
        });
    }
    g.finish();
}

fn intensities(c: &mut Criterion) {
    let kern = JumpKernel::nearest_neighbor();
    let profile = InitialProfile::full_step(2).expect("profile");
    let t = 2000.0;
    let set = upper_set(t);
    let mut g = c.benchmark_group("intensity");
    g.bench_function("truncated_sum", |b| {
        b.iter(|| intensity_truncated(&profile, 450, &kern, black_box(t / 2.0), &set).expect("intensity"))
    });
    g.bench_function("full_step_tail", |b| {
        b.iter(|| full_step_intensity(2, &kern, black_box(t / 2.0), &set).expect("intensity"))
    });
    g.finish();
}

criterion_group!(benches, semigroup, engines, kappa_quadrature, intensities);
criterion_main!(benches);
