//! Exact checks against independent oracles built here from scratch: the
//! occupation-number chain of the K-exclusion process and the labelled-slot
//! stirring chain, both exponentiated densely.

use std::collections::HashMap;

use ksep_core::exactsg::{
    check_factorial_bound, check_main_corollary, check_nto2, check_product_measure_bound, check_sum_symmetry,
    is_positive_definite, label_count, pd_min_eigenvalue, Instance, SiteKernel,
};
use nalgebra::DMatrix;
use num_rational::Rational64;
use proptest::prelude::*;

/// Law at time `t` of the occupation chain with rates `p(x,y) η(x) (K − η(y))`.
fn occupation_law(kernel: &SiteKernel, k: u32, start: &[u8], t: f64) -> Vec<(Vec<u8>, f64)> {
    let s = kernel.len();
    let radix = k as usize + 1;
    let states: Vec<Vec<u8>> = (0..radix.pow(s as u32))
        .map(|mut c| {
            (0..s)
                .map(|_| {
                    let d = (c % radix) as u8;
                    c /= radix;
                    d
                })
                .collect()
        })
        .collect();
    let index: HashMap<Vec<u8>, usize> = states.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let mut q = DMatrix::<f64>::zeros(states.len(), states.len());
    for (i, eta) in states.iter().enumerate() {
        for x in 0..s {
            for y in 0..s {
                let p = kernel.p(x, y);
                if p == 0.0 || eta[x] == 0 || u32::from(eta[y]) == k {
                    continue;
                }
                let mut next = eta.clone();
                next[x] -= 1;
                next[y] += 1;
                let rate = p * f64::from(eta[x]) * f64::from(k - u32::from(eta[y]));
                q[(i, index[&next])] += rate;
                q[(i, i)] -= rate;
            }
        }
    }
    let p = (q * t).exp();
    let row = index[start];
    states
        .into_iter()
        .enumerate()
        .map(|(j, eta)| (eta, p[(row, j)]))
        .collect()
}

fn falling(x: u32, n: u32) -> f64 {
    (0..n).map(|i| f64::from(x) - f64::from(i)).product::<f64>().max(0.0)
}

fn count(eta: &[u8], set: &[bool]) -> u32 {
    eta.iter()
        .zip(set)
        .filter(|(_, &b)| b)
        .map(|(&e, _)| u32::from(e))
        .sum()
}

/// Kernel, K, occupied sites, sets, orders, time.
type FactorialCase = (SiteKernel, u32, Vec<bool>, Vec<Vec<bool>>, Vec<u32>, f64);

#[test]
fn factorial_moments_match_occupation_chain() {
    let cases: [FactorialCase; 4] = [
        (
            SiteKernel::path(5).unwrap(),
            2,
            vec![true, true, false, false, false],
            vec![vec![false, false, false, true, true]],
            vec![2],
            1.0,
        ),
        (
            SiteKernel::torus(4).unwrap(),
            2,
            vec![true, false, true, false],
            vec![vec![false, true, false, false], vec![false, false, false, true]],
            vec![1, 2],
            0.5,
        ),
        (
            SiteKernel::path(4).unwrap(),
            3,
            vec![true, false, false, false],
            vec![vec![false, true, true, true]],
            vec![3],
            5.0,
        ),
        (
            SiteKernel::path(5).unwrap(),
            1,
            vec![true, true, true, false, false],
            vec![
                vec![false, false, true, true, false],
                vec![false, false, false, false, true],
            ],
            vec![2, 1],
            1.0,
        ),
    ];
    for (kernel, k, h, sets, orders, t) in cases {
        let rep = check_factorial_bound(&kernel, k, &h, &sets, &orders, t).unwrap();
        let start: Vec<u8> = h.iter().map(|&b| if b { k as u8 } else { 0 }).collect();
        let oracle: f64 = occupation_law(&kernel, k, &start, t / f64::from(k))
            .iter()
            .map(|(eta, p)| {
                p * sets
                    .iter()
                    .zip(&orders)
                    .map(|(a, &n)| falling(count(eta, a), n))
                    .product::<f64>()
            })
            .sum();
        let got = rep.quantities["factorial_moment"];
        assert!((got - oracle).abs() < 1e-10, "{}: {got} vs {oracle}", rep.instance);
        assert!(rep.pass, "{rep:?}");
    }
}

#[test]
fn product_measure_moments_match_occupation_chain() {
    let kernel = SiteKernel::path(4).unwrap();
    let k = 2;
    let laws = vec![
        vec![0.25, 0.5, 0.25],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0],
        vec![0.5, 0.3, 0.2],
    ];
    let a = vec![false, true, true, false];
    let t = 1.0;
    for n in 1..=3 {
        let rep = check_product_measure_bound(&kernel, k, &laws, &a, n, t).unwrap();
        // average the oracle over the product initial law
        let mut oracle = 0.0;
        for c in 0..81usize {
            let start: Vec<u8> = (0..4).map(|x| ((c / 3usize.pow(x as u32)) % 3) as u8).collect();
            let w: f64 = start.iter().enumerate().map(|(x, &j)| laws[x][j as usize]).product();
            if w == 0.0 {
                continue;
            }
            oracle += w * occupation_law(&kernel, k, &start, t / f64::from(k))
                .iter()
                .map(|(eta, p)| p * falling(count(eta, &a), n as u32))
                .sum::<f64>();
        }
        let got = rep.quantities["factorial_moment_nu"];
        assert!((got - oracle).abs() < 1e-10, "n={n}: {got} vs {oracle}");
        assert!(rep.pass, "{rep:?}");
        if n == 1 {
            assert!(rep.quantities["difference_nu"].abs() < 1e-12);
        }
    }
}

/// `P(all tagged labels in A at time t/K)` from the labelled-slot chain, where
/// every slot pair across an edge `{x, y}` swaps at rate `p(x, y)`.
fn stirring_probability(kernel: &SiteKernel, k: u32, start: &[u8], a: &[bool], t: f64) -> f64 {
    let s = kernel.len();
    let slots = s * k as usize;
    let n = start.len();
    // state: slot of each label
    let mut states: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for v in &states {
            for q in (0..slots).filter(|q| !v.contains(q)) {
                let mut w = v.clone();
                w.push(q);
                next.push(w);
            }
        }
        states = next;
    }
    let index: HashMap<Vec<usize>, usize> = states.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let mut q = DMatrix::<f64>::zeros(states.len(), states.len());
    let site = |slot: usize| slot / k as usize;
    for (i, st) in states.iter().enumerate() {
        for u in 0..slots {
            for v in u + 1..slots {
                let p = kernel.p(site(u), site(v));
                if p == 0.0 || !(st.contains(&u) || st.contains(&v)) {
                    continue;
                }
                let next: Vec<usize> = st
                    .iter()
                    .map(|&w| {
                        if w == u {
                            v
                        } else if w == v {
                            u
                        } else {
                            w
                        }
                    })
                    .collect();
                q[(i, index[&next])] += p;
                q[(i, i)] -= p;
            }
        }
    }
    let p = (q * (t / f64::from(k))).exp();
    // labels at site x take slots x·K, x·K + 1, …
    let mut used = vec![0usize; s];
    let init: Vec<usize> = start
        .iter()
        .map(|&x| {
            let slot = x as usize * k as usize + used[x as usize];
            used[x as usize] += 1;
            slot
        })
        .collect();
    let row = index[&init];
    states
        .iter()
        .enumerate()
        .filter(|(_, st)| st.iter().all(|&w| a[site(w)]))
        .map(|(j, _)| p[(row, j)])
        .sum()
}

#[test]
fn interacting_semigroup_matches_stirring_chain() {
    for (kernel, n, k, a, t) in [
        (SiteKernel::path(3).unwrap(), 2, 2, vec![true, true, false], 1.0),
        (SiteKernel::torus(4).unwrap(), 3, 2, vec![false, true, true, false], 0.5),
        (SiteKernel::path(4).unwrap(), 3, 1, vec![true, false, true, true], 2.0),
        (SiteKernel::path(3).unwrap(), 3, 3, vec![false, true, false], 1.5),
    ] {
        let inst = Instance::new(kernel.clone(), n, k).unwrap();
        let v = inst.v_semigroup(t / f64::from(k), &inst.restrict(&inst.power_indicator(&a)));
        let walk = inst.walk(t, &a);
        for (i, x) in inst.omega.states().enumerate() {
            let oracle = stirring_probability(&kernel, k, x, &a, t);
            assert!(
                (v[i] - oracle).abs() < 1e-11,
                "{} x={x:?}: {} vs {oracle}",
                inst.describe(),
                v[i]
            );
            let product: f64 = x.iter().map(|&s| walk[s as usize]).product();
            assert!(oracle <= product + 1e-12);
        }
    }
}

#[test]
fn independent_semigroup_is_a_product_of_walks() {
    let inst = Instance::new(SiteKernel::torus(5).unwrap(), 3, 2).unwrap();
    let a = [true, false, true, true, false];
    let u = inst.u_semigroup(0.35, &inst.power_indicator(&a));
    let walk = inst.walk(0.7, &a);
    for (i, x) in inst.full.states().enumerate() {
        let product: f64 = x.iter().map(|&s| walk[s as usize]).product();
        assert!((u[i] - product).abs() < 1e-12);
    }
}

#[test]
fn pair_indicator_of_distinctness_is_recorded() {
    // f(x, y) = 1(x ≠ y) on 3 sites: the form on zero-sum β is −Σβ², so not PD
    let inst = Instance::new(SiteKernel::path(3).unwrap(), 2, 1).unwrap();
    let f = inst.full.tabulate(|x| f64::from(x[0] != x[1]));
    let min = pd_min_eigenvalue(&inst.full, &f);
    assert!((min + 1.0).abs() < 1e-12, "{min}");
    assert!(!is_positive_definite(&inst.full, &f));
}

/// Sum symmetry with `f₂ = f₁` and the main corollary with `h ≡ 1` can fail
/// once `K ≥ 2`, because `V` is reversible for `∏ (K)_{c_y}`, not for
/// counting measure. The label-count weight restores both.
#[test]
fn counting_measure_symmetry_fails_for_k_at_least_two() {
    let inst = Instance::new(SiteKernel::path(2).unwrap(), 2, 2).unwrap();
    let pi: Vec<f64> = (0..inst.omega.len())
        .map(|i| label_count(&inst.omega, i, 2, &[true, true]))
        .collect();
    let q = inst.v.dense();
    let (i, j) = (
        inst.omega.index_of(&[0, 0]).unwrap(),
        inst.omega.index_of(&[1, 0]).unwrap(),
    );
    // p = ½: leaving a doubly occupied site has rate ½·2, returning ½·1
    assert_eq!((q[(i, j)], q[(j, i)]), (1.0, 0.5));
    // detailed balance for π, and its failure for counting measure
    let mut asymmetric = false;
    for a in 0..inst.omega.len() {
        for b in 0..inst.omega.len() {
            assert!((pi[a] * q[(a, b)] - pi[b] * q[(b, a)]).abs() < 1e-12);
            asymmetric |= (q[(a, b)] - q[(b, a)]).abs() > 1e-12;
        }
    }
    assert!(asymmetric);

    let mut worst_counting = f64::INFINITY;
    let sets = [[true, false], [false, true], [true, true]];
    for a in sets {
        for b1 in sets {
            for b2 in sets {
                for t in [0.1, 0.5, 1.0, 5.0] {
                    let b: Vec<bool> = (0..2).map(|x| b1[x] || b2[x]).collect();
                    let bs = vec![b1.to_vec(), b2.to_vec()];
                    let ones = vec![1.0; inst.omega.len()];
                    let weight: Vec<f64> = pi.iter().map(|p| p / 4.0).collect();
                    let one = check_main_corollary(&inst, &a, &bs, &b, &ones, t).unwrap();
                    worst_counting = worst_counting.min(one.quantities["difference"]);
                    let weighted = check_main_corollary(&inst, &a, &bs, &b, &weight, t).unwrap();
                    assert!(weighted.pass, "{weighted:?}");
                }
            }
        }
    }
    assert!(worst_counting < -1e-3, "{worst_counting}");
}

#[test]
fn sum_symmetry_holds_without_exclusion_multiplicity() {
    for (kernel, n) in [(SiteKernel::path(4).unwrap(), 2), (SiteKernel::torus(5).unwrap(), 3)] {
        let inst = Instance::new(kernel, n, 1).unwrap();
        let a = [true, true, false, true, false];
        let a = &a[..inst.kernel.len()];
        let b = [false, true, true, true, true];
        let b = &b[..inst.kernel.len()];
        let f1 = inst.power_indicator(a);
        let g = inst.power_indicator(b);
        for t in [0.1, 1.0, 5.0] {
            let r = check_sum_symmetry(&inst, &f1, &inst.restrict(&f1), &g, t).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }
}

#[test]
fn pair_sum_identity_over_rationals() {
    let r = |a: i64, b: i64| Rational64::new(a, b);
    let alpha = vec![
        vec![r(0, 1), r(1, 2), r(-2, 3)],
        vec![r(1, 2), r(0, 1), r(5, 7)],
        vec![r(-2, 3), r(5, 7), r(0, 1)],
    ];
    let beta = vec![r(1, 3), r(-4, 5), r(2, 1)];
    for n in 2..=4 {
        let rep = check_nto2(&alpha, &beta, n).unwrap();
        assert!(rep.equal, "n={n}: {rep:?}");
    }
    let ones = vec![r(1, 1); 3];
    let rep = check_nto2(&alpha, &ones, 3).unwrap();
    assert!(rep.equal);
}

#[test]
fn pair_sum_identity_needs_the_diagonal() {
    let alpha = vec![vec![1i64, 2], vec![2, 3]];
    let beta = vec![1i64, 1];
    let rep = check_nto2(&alpha, &beta, 3).unwrap();
    assert!(!rep.equal);
    assert_eq!(rep.lhs, rep.rhs_with_diagonal);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn v_below_u_and_both_positive(
        sites in 2usize..6,
        n in 1usize..4,
        k in 1u32..4,
        mask in 1u32..64,
        t in 0.0f64..6.0,
        torus in any::<bool>(),
    ) {
        prop_assume!(n <= sites * k as usize);
        let kernel = if torus { SiteKernel::torus(sites) } else { SiteKernel::path(sites) }.unwrap();
        let a: Vec<bool> = (0..sites).map(|x| mask >> x & 1 == 1).collect();
        prop_assume!(a.contains(&true));
        let inst = Instance::new(kernel, n, k).unwrap();
        let f = inst.power_indicator(&a);
        let v = inst.v_semigroup(t, &inst.restrict(&f));
        let u = inst.restrict(&inst.u_semigroup(t, &f));
        for (x, y) in v.iter().zip(&u) {
            prop_assert!(*x >= -1e-13);
            prop_assert!(*x <= y + 1e-10);
        }
    }
}
