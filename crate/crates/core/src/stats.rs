//! Limit laws of the rescaled extremes and the tests run against them.
//!
//! The limiting point process `Σ δ_{−log(T_n/c)}`, with `T_n` the partial
//! sums of iid Exp(1) variables, has intensity `c e^{−x} dx`; its top point
//! is Gumbel(c) and `log(T_k/T_{k−1})` is Exp(k).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

/// Default test level.
pub const DEFAULT_LEVEL: f64 = 0.01;

/// Minimum sample size for the asymptotic KS test.
pub const KS_MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitLaw {
    Gumbel { c: f64 },
    PoissonCounts { c: f64 },
    SpacingExp { k: u32 },
    OrderStatJoint { c: f64, ranks: Vec<usize> },
}

impl LimitLaw {
    /// Distribution function of the scalar laws.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match self {
            Self::Gumbel { c } => Some(gumbel_cdf(*c, x)),
            Self::SpacingExp { k } => Some(exp_cdf(f64::from(*k), x)),
            _ => None,
        }
    }

    /// Poisson mean of the count in `(lo, hi]`.
    pub fn count_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        match self {
            Self::PoissonCounts { c } | Self::Gumbel { c } | Self::OrderStatJoint { c, .. } => {
                Some(c * ((-lo).exp() - (-hi).exp()))
            }
            Self::SpacingExp { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub n_samples: usize,
    pub threshold: f64,
    pub p_value: Option<f64>,
    pub pass: bool,
    /// `(t, statistic)` pairs when the result summarizes a sweep.
    pub trend_context: Option<Vec<(f64, f64)>>,
}

/// `exp(−c e^{−x})`.
pub fn gumbel_cdf(c: f64, x: f64) -> f64 {
    (-c * (-x).exp()).exp()
}

fn exp_cdf(rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-rate * x).exp_m1()
    }
}

/// `sup_x |F_n(x) − F(x)|`, exact for samples with ties.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    d
}

/// `P(sup|B| > λ)` for the Brownian bridge.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let s = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = s * (1..=7).map(|j| q.powi((2 * j - 1) * (2 * j - 1))).sum::<f64>();
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..=100i32 {
        let term = (-2.0 * f64::from(j * j) * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test with the asymptotic p-value at `√n + 0.12 + 0.11/√n`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<TestResult, StatsError> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(StatsError::TooFewSamples {
            got: samples.len(),
            need: KS_MIN_SAMPLES,
        });
    }
    check_level(level)?;
    let d = ks_statistic(samples, cdf);
    let rn = (samples.len() as f64).sqrt();
    let p = kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d);
    Ok(TestResult {
        statistic: d,
        n_samples: samples.len(),
        threshold: level,
        p_value: Some(p),
        pass: p > level,
        trend_context: None,
    })
}

fn check_level(level: f64) -> Result<(), StatsError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidArgument(format!(
            "level must be in (0, 1), got {level}"
        )))
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Sample correlation; 0 when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDispersion {
    pub mean: f64,
    pub variance: f64,
    pub ratio: f64,
    /// Two-sided p-value of `(n−1) S²/X̄ ~ χ²_{n−1}`.
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub replicas: usize,
    pub intervals: Vec<IntervalDispersion>,
    /// `(i, j, r)` for every pair of intervals.
    pub correlations: Vec<(usize, usize, f64)>,
    /// Largest `|r|` allowed by a normal approximation at the level.
    pub correlation_bound: f64,
    /// The summed counts, which must be Poisson with the summed mean.
    pub total: IntervalDispersion,
    pub pass: bool,
}

fn dispersion(xs: &[f64], level: f64) -> IntervalDispersion {
    let n = xs.len() as f64;
    let (mean, variance) = mean_var(xs);
    if mean == 0.0 {
        return IntervalDispersion {
            mean,
            variance,
            ratio: f64::NAN,
            p_value: 0.0,
            pass: false,
        };
    }
    let ratio = variance / mean;
    let chi = ChiSquared::new(n - 1.0).expect("positive dof");
    let q = (n - 1.0) * ratio;
    let p_value = (2.0 * chi.cdf(q).min(chi.sf(q))).min(1.0);
    IntervalDispersion {
        mean,
        variance,
        ratio,
        p_value,
        pass: p_value > level,
    }
}

/// `counts[r][j]`: count in interval `j` on replica `r`.
pub fn poisson_dispersion(counts: &[Vec<u64>], level: f64) -> Result<DispersionReport, StatsError> {
    check_level(level)?;
    if counts.len() < 2 {
        return Err(StatsError::TooFewSamples {
            got: counts.len(),
            need: 2,
        });
    }
    let m = counts[0].len();
    if m == 0 || counts.iter().any(|c| c.len() != m) {
        return Err(StatsError::InvalidArgument(
            "every replica needs the same intervals".into(),
        ));
    }
    let cols: Vec<Vec<f64>> = (0..m).map(|j| counts.iter().map(|c| c[j] as f64).collect()).collect();
    let intervals: Vec<IntervalDispersion> = cols.iter().map(|c| dispersion(c, level)).collect();
    let totals: Vec<f64> = counts.iter().map(|c| c.iter().sum::<u64>() as f64).collect();
    let total = dispersion(&totals, level);
    let z = Normal::standard().inverse_cdf(1.0 - level / 2.0);
    let correlation_bound = z / (counts.len() as f64).sqrt();
    let mut correlations = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            correlations.push((i, j, correlation(&cols[i], &cols[j])));
        }
    }
    let pass = intervals.iter().all(|d| d.pass)
        && total.pass
        && correlations.iter().all(|&(_, _, r)| r.abs() <= correlation_bound);
    Ok(DispersionReport {
        replicas: counts.len(),
        intervals,
        correlations,
        correlation_bound,
        total,
        pass,
    })
}

/// KS test of rescaled gaps against Exp(k).
pub fn spacing_test(samples: &[f64], k: u32, level: f64) -> Result<TestResult, StatsError> {
    if k == 0 {
        return Err(StatsError::InvalidArgument("spacing index must be at least 1".into()));
    }
    ks_test(samples, |x| exp_cdf(f64::from(k), x), level)
}

/// `−log(T_m / c)` at each requested rank `m`, one draw of the limit process.
pub fn sample_limit_order_stats<R: Rng + ?Sized>(c: f64, ranks: &[usize], rng: &mut R) -> Vec<f64> {
    let top = ranks.iter().copied().max().map_or(0, |m| m + 1);
    let mut t = 0.0;
    let mut partial = Vec::with_capacity(top);
    for _ in 0..top {
        let e: f64 = rng.sample(Exp1);
        t += e;
        partial.push(t);
    }
    ranks.iter().map(|&m| -(partial[m] / c).ln()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub series: Vec<(f64, f64)>,
    pub band: f64,
    pub cap: f64,
    pub nonincreasing: bool,
    pub below_cap: bool,
    pub pass: bool,
}

/// Each value may exceed its predecessor by at most `band`; the last must be below `cap`.
pub fn trend_check(series: &[(f64, f64)], band: f64, cap: f64) -> TrendResult {
    let nonincreasing = series.windows(2).all(|w| w[1].1 <= w[0].1 + band);
    let below_cap = series.last().is_some_and(|&(_, d)| d < cap);
    TrendResult {
        series: series.to_vec(),
        band,
        cap,
        nonincreasing,
        below_cap,
        pass: nonincreasing && below_cap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub categories: usize,
}

/// Two-sample chi-square homogeneity test on categorical data. Categories
/// whose pooled expected count falls below `min_expected` in either sample
/// are merged into one.
pub fn chi_square_two_sample<K: Ord + Clone>(
    a: &BTreeMap<K, u64>,
    b: &BTreeMap<K, u64>,
    min_expected: f64,
) -> Result<ChiSquareResult, StatsError> {
    let (na, nb) = (a.values().sum::<u64>() as f64, b.values().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(StatsError::TooFewSamples { got: 0, need: 1 });
    }
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let (fa, fb) = (na / (na + nb), nb / (na + nb));
    let mut cells = Vec::new();
    let mut pooled = (0.0, 0.0);
    for k in keys {
        let (x, y) = (*a.get(k).unwrap_or(&0) as f64, *b.get(k).unwrap_or(&0) as f64);
        let tot = x + y;
        if tot * fa.min(fb) < min_expected {
            pooled.0 += x;
            pooled.1 += y;
        } else {
            cells.push((x, y));
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return Ok(ChiSquareResult {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            categories: cells.len(),
        });
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let tot = x + y;
            let (ea, eb) = (tot * fa, tot * fb);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    let dof = cells.len() - 1;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(statistic);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        categories: cells.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    #[test]
    fn gumbel_examples() {
        assert!((gumbel_cdf(1.0, 0.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((gumbel_cdf(2.0, 2f64.ln()) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(gumbel_cdf(1.0, f64::INFINITY), 1.0);
        assert_eq!(gumbel_cdf(1.0, f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn kolmogorov_known_values() {
        // P(K > 1.36) ≈ 0.0494, P(K > 1.63) ≈ 0.0098
        assert!((kolmogorov_sf(1.36) - 0.049_4).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 3e-4);
        // both branches agree at the switch
        assert!((kolmogorov_sf(1.18 - 1e-12) - kolmogorov_sf(1.18)).abs() < 1e-9);
    }

    #[test]
    fn ks_rejects_constant_and_small() {
        let xs = vec![0.0; 500];
        assert!(!ks_test(&xs, |x| gumbel_cdf(1.0, x), 0.01).unwrap().pass);
        assert!(matches!(
            ks_test(&[0.0; 10], |x| gumbel_cdf(1.0, x), 0.01),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn ks_statistic_handles_ties() {
        let d = ks_statistic(&[0.5, 0.5], |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn limit_sampler_rank_zero_is_gumbel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| sample_limit_order_stats(1.5, &[0], &mut rng)[0])
            .collect();
        assert!(ks_test(&xs, |x| gumbel_cdf(1.5, x), 0.01).unwrap().pass);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        assert!(!ks_test(&shifted, |x| gumbel_cdf(1.5, x), 0.01).unwrap().pass);
    }

    #[test]
    fn limit_sampler_is_decreasing_and_equivariant() {
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = sample_limit_order_stats(1.0, &[0, 1, 2, 3], &mut a);
            assert!(x.windows(2).all(|w| w[0] > w[1]));
            let y = sample_limit_order_stats(3.0, &[0, 1, 2, 3], &mut b);
            for (u, v) in x.iter().zip(&y) {
                assert!((v - u - 3f64.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dispersion_accepts_poisson_rejects_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Poisson::new(2.0).unwrap();
        let counts: Vec<Vec<u64>> = (0..5000)
            .map(|_| (0..3).map(|_| p.sample(&mut rng) as u64).collect())
            .collect();
        let r = poisson_dispersion(&counts, 0.01).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.total.mean - 6.0).abs() < 0.15);
        let flat = vec![vec![2u64, 2]; 100];
        let r = poisson_dispersion(&flat, 0.01).unwrap();
        assert!(!r.pass);
        assert_eq!(r.intervals[0].ratio, 0.0);
    }

    #[test]
    fn spacing_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let draws: Vec<Vec<f64>> = (0..5000)
            .map(|_| sample_limit_order_stats(1.0, &[0, 1, 2], &mut rng))
            .collect();
        for k in 1..=2u32 {
            let gaps: Vec<f64> = draws.iter().map(|d| d[k as usize - 1] - d[k as usize]).collect();
            assert!(spacing_test(&gaps, k, 0.01).unwrap().pass);
            let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
            assert!((m - 1.0 / f64::from(k)).abs() < 0.05);
        }
    }

    #[test]
    fn trend_rules() {
        let s = [(1.0, 0.2), (2.0, 0.205), (3.0, 0.1)];
        assert!(trend_check(&s, 0.01, 0.15).pass);
        assert!(!trend_check(&s, 0.001, 0.15).pass);
        assert!(!trend_check(&s, 0.01, 0.05).pass);
    }

    #[test]
    fn chi_square_homogeneity() {
        let a: BTreeMap<u8, u64> = [(0, 500), (1, 300), (2, 200)].into();
        let r = chi_square_two_sample(&a, &a, 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: BTreeMap<u8, u64> = [(0, 300), (1, 300), (2, 400)].into();
        assert!(chi_square_two_sample(&a, &b, 5.0).unwrap().p_value < 1e-10);
        let sparse: BTreeMap<u8, u64> = [(0, 500), (1, 300), (2, 198), (3, 1), (4, 1)].into();
        assert_eq!(chi_square_two_sample(&a, &sparse, 5.0).unwrap().categories, 4);
    }
}
