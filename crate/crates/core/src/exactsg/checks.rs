//! Checks of the `V`/`U` comparison lemmas and of the factorial-moment
//! bounds on small instances. Each returns a [`Report`] with the quantities
//! involved and the smallest slack of the asserted inequalities.

use std::collections::BTreeMap;
use std::ops::{Add, Mul};

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{One, Zero};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{adaptive_gl, finite_kappa_tau, ExactError, Instance, MultiParticleSpace, SiteKernel};

/// Tolerance for the pointwise semigroup inequalities.
pub const INEQ_TOL: f64 = 1e-10;

/// Tolerance for two-route agreement in the difference formula.
pub const ROUTE_TOL: f64 = 1e-8;

/// Tolerance for the factorial-moment bounds.
pub const MOMENT_TOL: f64 = 1e-9;

/// Eigenvalue tolerance of the positive-definiteness test.
pub const PD_TOL: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub check: String,
    pub instance: String,
    pub quantities: BTreeMap<String, f64>,
    /// Smallest `rhs − lhs` over the asserted inequalities (for identities:
    /// minus the largest discrepancy).
    pub min_slack: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Report {
    fn new(check: &str, instance: String) -> Self {
        Self {
            check: check.into(),
            instance,
            quantities: BTreeMap::new(),
            min_slack: f64::INFINITY,
            tol: 0.0,
            pass: false,
        }
    }

    fn set(&mut self, key: &str, v: f64) {
        self.quantities.insert(key.into(), v);
    }

    fn finish(mut self, min_slack: f64, tol: f64) -> Self {
        self.min_slack = min_slack;
        self.tol = tol;
        self.pass = min_slack >= -tol;
        self
    }
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

fn set_label(set: &[bool]) -> String {
    let v: Vec<String> = set
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i.to_string())
        .collect();
    format!("{{{}}}", v.join(","))
}

fn check_set(set: &[bool], sites: usize, what: &str) -> Result<(), ExactError> {
    if set.len() != sites {
        return Err(ExactError::InvalidInstance(format!(
            "{what} must have one flag per site"
        )));
    }
    Ok(())
}

/// True when `f` is invariant under every permutation of its arguments.
pub fn is_symmetric(space: &MultiParticleSpace, f: &[f64]) -> bool {
    let mut y = vec![0u8; space.n()];
    space.states().enumerate().all(|(i, x)| {
        (0..space.n().saturating_sub(1)).all(|r| {
            y.copy_from_slice(x);
            y.swap(r, r + 1);
            space.index_of(&y).is_some_and(|j| (f[i] - f[j]).abs() <= 1e-12)
        })
    })
}

/// Smallest eigenvalue of `Σ β(a) f(…a…b…) β(b)` over zero-sum `β`, taken
/// over every pair of variables and every value of the frozen ones. `f` is
/// given on the full product.
pub fn pd_min_eigenvalue(space: &MultiParticleSpace, f: &[f64]) -> f64 {
    let (s, n) = (space.sites(), space.n());
    if n < 2 || space.len() != s.pow(n as u32) {
        return if n < 2 { 0.0 } else { f64::NAN };
    }
    let proj = DMatrix::<f64>::identity(s, s) - DMatrix::from_element(s, s, 1.0 / s as f64);
    let mut min = f64::INFINITY;
    let mut x = vec![0u8; n];
    for i in 0..n {
        for j in i + 1..n {
            let others: Vec<usize> = (0..n).filter(|&r| r != i && r != j).collect();
            for frozen in 0..s.pow(others.len() as u32) {
                let mut c = frozen;
                for &r in &others {
                    x[r] = (c % s) as u8;
                    c /= s;
                }
                let m = DMatrix::from_fn(s, s, |a, b| {
                    let mut y = x.clone();
                    y[i] = a as u8;
                    y[j] = b as u8;
                    let fab = f[space.index_of(&y).expect("full product")];
                    y[i] = b as u8;
                    y[j] = a as u8;
                    0.5 * (fab + f[space.index_of(&y).expect("full product")])
                });
                let q = &proj * m * &proj;
                let eig = SymmetricEigen::new(q).eigenvalues;
                min = min.min(eig.iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
    }
    min
}

/// Positive definiteness in each pair of variables, on the zero-sum subspace.
pub fn is_positive_definite(space: &MultiParticleSpace, f: &[f64]) -> bool {
    pd_min_eigenvalue(space, f) >= PD_TOL
}

/// `V_n^K(t) f ≤ U_n^K(t) f` pointwise on `Ω_n^K` for every `t` in the grid.
pub fn check_vu(inst: &Instance, f: &[f64], t_grid: &[f64]) -> Result<Report, ExactError> {
    if !is_symmetric(&inst.full, f) {
        return Err(ExactError::NotSymmetric);
    }
    let min_eigenvalue = pd_min_eigenvalue(&inst.full, f);
    if min_eigenvalue < PD_TOL {
        return Err(ExactError::NotPositiveDefinite { min_eigenvalue });
    }
    let mut rep = Report::new("VU", inst.describe());
    let fv = inst.restrict(f);
    let mut slack = f64::INFINITY;
    let mut max_gap = 0.0f64;
    for &t in t_grid {
        let v = inst.v_semigroup(t, &fv);
        let u = inst.restrict(&inst.u_semigroup(t, f));
        for (a, b) in v.iter().zip(&u) {
            slack = slack.min(b - a);
            max_gap = max_gap.max(b - a);
        }
    }
    rep.set("max_gap", max_gap);
    rep.set("pd_min_eigenvalue", min_eigenvalue);
    Ok(rep.finish(slack, INEQ_TOL))
}

/// `P(∩{ξ^{x_k j_k}_{t/K} ∈ A}) ≤ ∏ P_{x_k}(ζ_t ∈ A)` for every start in `Ω_n^K`.
pub fn check_negative_association(inst: &Instance, a: &[bool], t: f64) -> Result<Report, ExactError> {
    check_set(a, inst.kernel.len(), "A")?;
    let mut rep = Report::new(
        "negative_association",
        format!("{} A={} t={t}", inst.describe(), set_label(a)),
    );
    let one_a = inst.restrict(&inst.power_indicator(a));
    let lhs = inst.v_semigroup(t / f64::from(inst.k), &one_a);
    let phi = inst.walk(t, a);
    let mut slack = f64::INFINITY;
    let mut max_lhs = 0.0f64;
    for (i, x) in inst.omega.states().enumerate() {
        let rhs: f64 = x.iter().map(|&s| phi[s as usize]).product();
        slack = slack.min(rhs - lhs[i]);
        max_lhs = max_lhs.max(lhs[i]);
    }
    rep.set("max_lhs", max_lhs);
    Ok(rep.finish(slack, INEQ_TOL))
}

/// `Σ_{i<j} p(x_i,x_j)(φ_i − φ_j)² ∏_{k≠i,j} φ_k` on `Ω_n^K`.
fn pair_difference(inst: &Instance, phi: &[f64]) -> Vec<f64> {
    inst.omega
        .states()
        .map(|x| {
            let mut sum = 0.0;
            for i in 0..x.len() {
                for j in i + 1..x.len() {
                    let p = inst.kernel.p(x[i] as usize, x[j] as usize);
                    if p == 0.0 {
                        continue;
                    }
                    let d = phi[x[i] as usize] - phi[x[j] as usize];
                    let rest: f64 = (0..x.len())
                        .filter(|&k| k != i && k != j)
                        .map(|k| phi[x[k] as usize])
                        .product();
                    sum += p * d * d * rest;
                }
            }
            sum
        })
        .collect()
}

/// `[U(t/K) − V(t/K)] 1_{Aⁿ}` by two semigroup applications against
/// `K⁻¹ ∫₀ᵗ V((t−s)/K) Σ_{i<j} p(x_i,x_j)(φ_s(x_i) − φ_s(x_j))² ∏ φ_s(x_k) ds`
/// by quadrature, where `φ_s = P_·(ζ_s ∈ A)`.
///
/// The factor `K⁻¹` comes from the substitution `u = s/K` in the
/// integration-by-parts formula; `(𝒰 − 𝒱)` itself carries no factor `K`.
/// The report also records the discrepancy without the factor.
pub fn check_difference_formula(inst: &Instance, a: &[bool], t: f64) -> Result<Report, ExactError> {
    check_set(a, inst.kernel.len(), "A")?;
    let k = f64::from(inst.k);
    let mut rep = Report::new(
        "difference_formula",
        format!("{} A={} t={t}", inst.describe(), set_label(a)),
    );
    let full_a = inst.power_indicator(a);
    let u = inst.restrict(&inst.u_semigroup(t / k, &full_a));
    let v = inst.v_semigroup(t / k, &inst.restrict(&full_a));
    let lhs: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
    let (integral, quad_error) = if t == 0.0 {
        (vec![0.0; lhs.len()], 0.0)
    } else {
        adaptive_gl(
            |s| {
                let phi = inst.walk(s, a);
                inst.v_semigroup((t - s) / k, &pair_difference(inst, &phi))
            },
            t,
            1e-12,
        )?
    };
    let rhs: Vec<f64> = integral.iter().map(|v| v / k).collect();
    let max_diff = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let unscaled = lhs
        .iter()
        .zip(&integral)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    rep.set("lhs_max", lhs.iter().copied().fold(0.0, f64::max));
    rep.set("lhs_min", lhs.iter().copied().fold(f64::INFINITY, f64::min));
    rep.set("max_abs_diff", max_diff);
    rep.set("max_abs_diff_without_inverse_k", unscaled);
    rep.set("quad_error", quad_error);
    Ok(rep.finish(-max_diff, ROUTE_TOL))
}

/// All permutations of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `F̂(x) = (1/M!) Σ_σ F(x_σ)` on the full product.
pub fn symmetrize(space: &MultiParticleSpace, f: &[f64]) -> Vec<f64> {
    let perms = permutations(space.n());
    let mut y = vec![0u8; space.n()];
    space
        .states()
        .map(|x| {
            perms
                .iter()
                .map(|p| {
                    for (r, &q) in p.iter().enumerate() {
                        y[r] = x[q];
                    }
                    f[space.index_of(&y).expect("full product")]
                })
                .sum::<f64>()
                / perms.len() as f64
        })
        .collect()
}

/// `h(x) = ∏_y (K)_{c_y(x)}` when every coordinate lies in `H`, else 0: the
/// number of label tuples making `((x_r, j_r))` distinct.
pub fn label_count(space: &MultiParticleSpace, i: usize, k: u32, h: &[bool]) -> f64 {
    if !space.state(i).iter().all(|&s| h[s as usize]) {
        return 0.0;
    }
    space
        .counts(i)
        .iter()
        .map(|&c| (0..c).map(|j| f64::from(k - j)).product::<f64>())
        .product()
}

/// Deterministic `{0, K}` profile on `H`: checks
/// `0 ≤ ∏(μ(A_k))^{n_k} − E[∏ N^{(n_k)}(A_k^{n_k})] ≤ K² (M choose 2) μ(A)^{M−2} (κ_t(A,H) + τ_t(A,H))`
/// with `μ = μ_{t/K}^η`, `N = N_{t/K}` and `A` the hull of the `A_k`.
pub fn check_factorial_bound(
    kernel: &SiteKernel,
    k: u32,
    h: &[bool],
    sets: &[Vec<bool>],
    orders: &[u32],
    t: f64,
) -> Result<Report, ExactError> {
    let s = kernel.len();
    check_set(h, s, "H")?;
    if sets.len() != orders.len() || sets.is_empty() {
        return Err(ExactError::InvalidInstance("one order per set is required".into()));
    }
    for (i, a) in sets.iter().enumerate() {
        check_set(a, s, "A_k")?;
        for b in &sets[i + 1..] {
            if a.iter().zip(b).any(|(x, y)| *x && *y) {
                return Err(ExactError::InvalidInstance("the sets A_k must be disjoint".into()));
            }
        }
    }
    let m: usize = orders.iter().map(|&n| n as usize).sum();
    if m == 0 {
        return Err(ExactError::InvalidInstance("total order must be positive".into()));
    }
    let kf = f64::from(k);
    let inst = Instance::new(kernel.clone(), m, k)?;
    let labels: Vec<String> = sets.iter().map(|a| set_label(a)).collect();
    let mut rep = Report::new(
        "factorial_bound",
        format!(
            "{} H={} A=[{}] n={:?} t={t}",
            inst.describe(),
            set_label(h),
            labels.join(","),
            orders
        ),
    );

    // B_r = A_k for the n_k consecutive slots belonging to set k
    let slots: Vec<&[bool]> = sets
        .iter()
        .zip(orders)
        .flat_map(|(a, &n)| std::iter::repeat_n(a.as_slice(), n as usize))
        .collect();
    let f = inst.box_indicator(&slots);
    let f_hat = symmetrize(&inst.full, &f);
    let tau_k = t / kf;
    let vf = inst.v_semigroup(tau_k, &inst.restrict(&f));
    let vf_hat = inst.v_semigroup(tau_k, &inst.restrict(&f_hat));
    let hcount: Vec<f64> = (0..inst.omega.len())
        .map(|i| label_count(&inst.omega, i, k, h))
        .collect();
    let moment: f64 = hcount.iter().zip(&vf).map(|(a, b)| a * b).sum();
    let moment_sym: f64 = hcount.iter().zip(&vf_hat).map(|(a, b)| a * b).sum();

    let mu = |a: &[bool]| -> f64 {
        let phi = inst.walk(t, a);
        kf * (0..s).filter(|&x| h[x]).map(|x| phi[x]).sum::<f64>()
    };
    let power: f64 = sets.iter().zip(orders).map(|(a, &n)| mu(a).powi(n as i32)).product();
    let uf = inst.u_semigroup(tau_k, &f);
    let power_sg: f64 = kf.powi(m as i32)
        * inst
            .full
            .states()
            .enumerate()
            .filter(|(_, x)| x.iter().all(|&y| h[y as usize]))
            .map(|(i, _)| uf[i])
            .sum::<f64>();

    let lo = sets.iter().filter_map(|a| a.iter().position(|&b| b)).min().unwrap_or(0);
    let hi = sets
        .iter()
        .filter_map(|a| a.iter().rposition(|&b| b))
        .max()
        .unwrap_or(0);
    let hull: Vec<bool> = (0..s).map(|x| lo <= x && x <= hi).collect();
    let mu_a = mu(&hull);
    let kt = finite_kappa_tau(kernel, t, &hull, h)?;
    let bound = kf * kf * choose2(m) * mu_a.powi(m as i32 - 2) * (kt.kappa + kt.tau);
    let diff = power - moment;

    rep.set("power_of_means", power);
    rep.set("power_of_means_semigroup", power_sg);
    rep.set("factorial_moment", moment);
    rep.set("factorial_moment_symmetrized", moment_sym);
    rep.set("difference", diff);
    rep.set("mu_hull", mu_a);
    rep.set("kappa", kt.kappa);
    rep.set("tau", kt.tau);
    rep.set("bound", bound);
    let consistency = (moment - moment_sym).abs().max((power - power_sg).abs());
    rep.set("route_discrepancy", consistency);
    let slack = diff.min(bound - diff).min(MOMENT_TOL - consistency);
    Ok(rep.finish(slack, MOMENT_TOL))
}

/// Product initial law with site marginals `laws[x][j] = ν(η(x) = j)`:
/// checks the sandwich
/// `−K² (n choose 2) μ^χ(A)^{n−2} τ_t({ν>0}, A) ≤ μ^ν(A)ⁿ − E_ν[N^{(n)}(Aⁿ)] ≤ μ^χ(A)ⁿ − E_χ[N^{(n)}(Aⁿ)]`
/// at time `t/K` with `χ = K 1_{ν>0}`.
pub fn check_product_measure_bound(
    kernel: &SiteKernel,
    k: u32,
    laws: &[Vec<f64>],
    a: &[bool],
    n: usize,
    t: f64,
) -> Result<Report, ExactError> {
    let s = kernel.len();
    check_set(a, s, "A")?;
    if laws.len() != s || laws.iter().any(|l| l.len() != k as usize + 1) {
        return Err(ExactError::InvalidInstance("need one law on {0..K} per site".into()));
    }
    for l in laws {
        let total: f64 = l.iter().sum();
        if l.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(ExactError::InvalidInstance(
                "site laws must be probability vectors".into(),
            ));
        }
    }
    let kf = f64::from(k);
    let inst = Instance::new(kernel.clone(), n, k)?;
    let mut rep = Report::new(
        "product_measure_bound",
        format!("{} A={} t={t}", inst.describe(), set_label(a)),
    );
    let w = inst.v_semigroup(t / kf, &inst.restrict(&inst.power_indicator(a)));
    let phi = inst.walk(t, a);

    // E[(η(x))_c] for c = 0..=n
    let falling = |j: usize, c: usize| (0..c).map(|i| j as f64 - i as f64).product::<f64>();
    let fm_nu: Vec<Vec<f64>> = laws
        .iter()
        .map(|l| {
            (0..=n)
                .map(|c| l.iter().enumerate().map(|(j, p)| p * falling(j, c)).sum())
                .collect()
        })
        .collect();
    let support: Vec<bool> = laws.iter().map(|l| l[0] < 1.0).collect();
    let fm_chi: Vec<Vec<f64>> = support
        .iter()
        .map(|&on| {
            (0..=n)
                .map(|c| if on { falling(k as usize, c) } else { f64::from(c == 0) })
                .collect()
        })
        .collect();
    let moment = |fm: &[Vec<f64>]| -> f64 {
        (0..inst.omega.len())
            .map(|i| {
                let c = inst.omega.counts(i);
                c.iter().enumerate().map(|(y, &cy)| fm[y][cy as usize]).product::<f64>() * w[i]
            })
            .sum()
    };
    let mu_nu: f64 = (0..s).map(|x| fm_nu[x][1] * phi[x]).sum();
    let mu_chi: f64 = (0..s).filter(|&x| support[x]).map(|x| kf * phi[x]).sum();
    let e_nu = moment(&fm_nu);
    let e_chi = moment(&fm_chi);
    let tau: f64 = (0..s).filter(|&x| support[x]).map(|x| phi[x] * phi[x]).sum();
    let lower = if n >= 2 {
        -kf * kf * choose2(n) * mu_chi.powi(n as i32 - 2) * tau
    } else {
        0.0
    };
    let d_nu = mu_nu.powi(n as i32) - e_nu;
    let d_chi = mu_chi.powi(n as i32) - e_chi;
    rep.set("mu_nu", mu_nu);
    rep.set("mu_chi", mu_chi);
    rep.set("factorial_moment_nu", e_nu);
    rep.set("factorial_moment_chi", e_chi);
    rep.set("difference_nu", d_nu);
    rep.set("difference_chi", d_chi);
    rep.set("lower_bound", lower);
    rep.set("tau", tau);
    let slack = (d_nu - lower).min(d_chi - d_nu).min(d_chi);
    Ok(rep.finish(slack, MOMENT_TOL))
}

/// Both sides of `Σ_{x∈Sⁿ} Σ_{i<j} α(x_i,x_j) ∏_{k≠i,j} β(x_k) = (n choose 2)(Σ_{x₁≠x₂} α)(Σ β)^{n−2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Nto2Report<T> {
    pub lhs: T,
    pub rhs: T,
    /// Right side with the sum over all of `S²`, which equals the left side
    /// for any symmetric `α`.
    pub rhs_with_diagonal: T,
    pub equal: bool,
}

/// Exact evaluation of both sides of the pair-sum identity in any ring.
/// The left side is summed by brute force over `Sⁿ`.
pub fn check_nto2<T>(alpha: &[Vec<T>], beta: &[T], n: usize) -> Result<Nto2Report<T>, ExactError>
where
    T: Clone + PartialEq + Zero + One + Add<Output = T> + Mul<Output = T>,
{
    let s = beta.len();
    if n < 2 || alpha.len() != s || alpha.iter().any(|r| r.len() != s) {
        return Err(ExactError::InvalidInstance("need n ≥ 2 and an S×S α".into()));
    }
    for x in 0..s {
        for y in 0..s {
            if alpha[x][y] != alpha[y][x] {
                return Err(ExactError::InvalidInstance("α must be symmetric".into()));
            }
        }
    }
    let total = s
        .checked_pow(n as u32)
        .filter(|&v| v <= 50_000_000)
        .ok_or(ExactError::TooLarge {
            states: usize::MAX,
            cap: 50_000_000,
        })?;
    let mut lhs = T::zero();
    let mut x = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for slot in x.iter_mut() {
            *slot = c % s;
            c /= s;
        }
        for i in 0..n {
            for j in i + 1..n {
                let mut term = alpha[x[i]][x[j]].clone();
                for (k, &xk) in x.iter().enumerate() {
                    if k != i && k != j {
                        term = term * beta[xk].clone();
                    }
                }
                lhs = lhs + term;
            }
        }
    }
    let mut pairs = T::zero();
    for _ in 0..n * (n - 1) / 2 {
        pairs = pairs + T::one();
    }
    let mut off = T::zero();
    let mut diag = T::zero();
    for (x, row) in alpha.iter().enumerate() {
        for (y, v) in row.iter().enumerate() {
            if x == y {
                diag = diag + v.clone();
            } else {
                off = off + v.clone();
            }
        }
    }
    let sum_beta = beta.iter().cloned().fold(T::zero(), |a, b| a + b);
    let mut power = T::one();
    for _ in 0..n - 2 {
        power = power * sum_beta.clone();
    }
    let rhs = pairs.clone() * off.clone() * power.clone();
    let rhs_with_diagonal = pairs * (off + diag) * power;
    Ok(Nto2Report {
        equal: lhs == rhs,
        lhs,
        rhs,
        rhs_with_diagonal,
    })
}

/// `0 ≤ Σ_{Sⁿ} f₁ U(t)g − Σ_Ω f₂ V(t)g ≤ Σ_{Ω¹} g[U(t) − V(t)]f₁ + Σ_{(Ω¹)ᶜ} g U(t) f₁`.
/// `f1` and `g` live on the full product, `f2` on `Ω_n^K`.
pub fn check_sum_symmetry(inst: &Instance, f1: &[f64], f2: &[f64], g: &[f64], t: f64) -> Result<Report, ExactError> {
    if !is_symmetric(&inst.full, f1) {
        return Err(ExactError::NotSymmetric);
    }
    let min_eigenvalue = pd_min_eigenvalue(&inst.full, f1);
    if min_eigenvalue < PD_TOL {
        return Err(ExactError::NotPositiveDefinite { min_eigenvalue });
    }
    let f1o = inst.restrict(f1);
    for i in 0..inst.omega.len() {
        if f2[i] < 0.0 || f2[i] > f1o[i] + 1e-15 || (inst.omega.is_distinct(i) && f2[i] != f1o[i]) {
            return Err(ExactError::InvalidInstance(
                "need 0 ≤ f₂ ≤ f₁ on Ω and f₂ = f₁ on Ω¹".into(),
            ));
        }
    }
    if f1.iter().chain(g).any(|&v| v < 0.0) {
        return Err(ExactError::InvalidInstance("f₁ and g must be nonnegative".into()));
    }
    let mut rep = Report::new("sum_symmetry", format!("{} t={t}", inst.describe()));
    let ug = inst.u_semigroup(t, g);
    let vg = inst.v_semigroup(t, &inst.restrict(g));
    let q: f64 =
        f1.iter().zip(&ug).map(|(a, b)| a * b).sum::<f64>() - f2.iter().zip(&vg).map(|(a, b)| a * b).sum::<f64>();
    let uf = inst.u_semigroup(t, f1);
    let vf = inst.v_semigroup(t, &f1o);
    let mut upper = 0.0;
    for i in 0..inst.omega.len() {
        if inst.omega.is_distinct(i) {
            let j = inst.embed(i);
            upper += g[j] * (uf[j] - vf[i]);
        }
    }
    for (j, x) in inst.full.states().enumerate() {
        let distinct = (0..x.len()).all(|a| (a + 1..x.len()).all(|b| x[a] != x[b]));
        if !distinct {
            upper += g[j] * uf[j];
        }
    }
    rep.set("difference", q);
    rep.set("upper", upper);
    Ok(rep.finish(q.min(upper - q), INEQ_TOL))
}

fn inner_walk(inst: &Instance, b: &[bool], a: &[bool], t: f64) -> f64 {
    let phi = inst.walk(t, a);
    (0..b.len()).filter(|&x| b[x]).map(|x| phi[x]).sum()
}

fn check_cover(b_sets: &[Vec<bool>], b: &[bool], n: usize) -> Result<(), ExactError> {
    if b_sets.len() != n {
        return Err(ExactError::InvalidInstance("need one set B_k per particle".into()));
    }
    if b_sets
        .iter()
        .any(|bk| bk.len() != b.len() || bk.iter().zip(b).any(|(x, y)| *x && !*y))
    {
        return Err(ExactError::InvalidInstance("B must contain every B_k".into()));
    }
    Ok(())
}

/// The `Ω¹` and `(Ω¹)ᶜ` partial sums against their `κ_t(B, A)` and `τ_t(B, A)` bounds.
pub fn check_kappa_tau_bounds(
    inst: &Instance,
    a: &[bool],
    b_sets: &[Vec<bool>],
    b: &[bool],
    t: f64,
) -> Result<Report, ExactError> {
    check_cover(b_sets, b, inst.n)?;
    let kf = f64::from(inst.k);
    let mut rep = Report::new(
        "kappa_tau_bounds",
        format!("{} A={} B={} t={t}", inst.describe(), set_label(a), set_label(b)),
    );
    let slots: Vec<&[bool]> = b_sets.iter().map(Vec::as_slice).collect();
    let g = inst.box_indicator(&slots);
    let fa = inst.power_indicator(a);
    let uf = inst.u_semigroup(t / kf, &fa);
    let vf = inst.v_semigroup(t / kf, &inst.restrict(&fa));
    let mut s1 = 0.0;
    for i in 0..inst.omega.len() {
        if inst.omega.is_distinct(i) {
            let j = inst.embed(i);
            s1 += g[j] * (uf[j] - vf[i]);
        }
    }
    let s2: f64 = inst
        .full
        .states()
        .enumerate()
        .filter(|(_, x)| (0..x.len()).any(|p| (p + 1..x.len()).any(|q| x[p] == x[q])))
        .map(|(j, _)| g[j] * uf[j])
        .sum();
    let ip = inner_walk(inst, b, a, t);
    let kt = finite_kappa_tau(&inst.kernel, t, b, a)?;
    let pre = choose2(inst.n) * ip.powi(inst.n as i32 - 2);
    rep.set("distinct_sum", s1);
    rep.set("coincident_sum", s2);
    rep.set("kappa_bound", pre * kt.kappa);
    rep.set("tau_bound", pre * kt.tau);
    Ok(rep.finish((pre * kt.kappa - s1).min(pre * kt.tau - s2), INEQ_TOL))
}

/// `0 ≤ Σ_{Aⁿ} U(t/K) 1_{B₁×⋯×B_n} − Σ_{Ω∩Aⁿ} h V(t/K) 1_{B₁×⋯×B_n}
///  ≤ (n choose 2) ⟨1_B, U₁¹(t) 1_A⟩^{n−2} (κ_t(B, A) + τ_t(B, A))`
/// for `0 ≤ h ≤ 1` on `Ω_n^K` with `h = 1` on `Ω¹`.
pub fn check_main_corollary(
    inst: &Instance,
    a: &[bool],
    b_sets: &[Vec<bool>],
    b: &[bool],
    h: &[f64],
    t: f64,
) -> Result<Report, ExactError> {
    check_cover(b_sets, b, inst.n)?;
    if h.len() != inst.omega.len()
        || (0..h.len()).any(|i| !(0.0..=1.0).contains(&h[i]) || (inst.omega.is_distinct(i) && h[i] != 1.0))
    {
        return Err(ExactError::InvalidInstance("need 0 ≤ h ≤ 1 with h = 1 on Ω¹".into()));
    }
    let kf = f64::from(inst.k);
    let mut rep = Report::new(
        "main_corollary",
        format!("{} A={} B={} t={t}", inst.describe(), set_label(a), set_label(b)),
    );
    let slots: Vec<&[bool]> = b_sets.iter().map(Vec::as_slice).collect();
    let g = inst.box_indicator(&slots);
    let ug = inst.u_semigroup(t / kf, &g);
    let vg = inst.v_semigroup(t / kf, &inst.restrict(&g));
    let in_a = |x: &[u8]| x.iter().all(|&s| a[s as usize]);
    let first: f64 = inst
        .full
        .states()
        .enumerate()
        .filter(|(_, x)| in_a(x))
        .map(|(j, _)| ug[j])
        .sum();
    let second: f64 = inst
        .omega
        .states()
        .enumerate()
        .filter(|(_, x)| in_a(x))
        .map(|(i, _)| h[i] * vg[i])
        .sum();
    let q = first - second;
    let ip = inner_walk(inst, b, a, t);
    let kt = finite_kappa_tau(&inst.kernel, t, b, a)?;
    let bound = choose2(inst.n) * ip.powi(inst.n as i32 - 2) * (kt.kappa + kt.tau);
    rep.set("difference", q);
    rep.set("bound", bound);
    rep.set("kappa", kt.kappa);
    rep.set("tau", kt.tau);
    Ok(rep.finish(q.min(bound - q), INEQ_TOL))
}

/// A small randomized instance: graph, sizes, time and a site subset `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub graph: Graph,
    pub sites: usize,
    pub n: usize,
    pub k: u32,
    pub t: f64,
    pub a: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Graph {
    Path,
    Torus,
}

/// Time grid used for the randomized instances.
pub const TIME_GRID: [f64; 4] = [0.1, 0.5, 1.0, 5.0];

impl InstanceSpec {
    /// Draws a path or torus on at most `max_sites` sites, `n ≤ 3`, `K ≤ 3`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_sites: usize) -> Self {
        let graph = if rng.random::<bool>() {
            Graph::Path
        } else {
            Graph::Torus
        };
        let sites = rng.random_range(2..=max_sites.max(2));
        let k = rng.random_range(1..=3u32);
        let n = rng.random_range(1..=3usize.min(sites * k as usize));
        let t = *TIME_GRID.choose(rng).expect("nonempty grid");
        let mut a: Vec<usize> = (0..sites).filter(|_| rng.random::<bool>()).collect();
        if a.is_empty() {
            a.push(rng.random_range(0..sites));
        }
        Self {
            graph,
            sites,
            n,
            k,
            t,
            a,
        }
    }

    pub fn kernel(&self) -> Result<SiteKernel, ExactError> {
        match self.graph {
            Graph::Path => SiteKernel::path(self.sites),
            Graph::Torus => SiteKernel::torus(self.sites),
        }
    }

    pub fn instance(&self) -> Result<Instance, ExactError> {
        Instance::new(self.kernel()?, self.n, self.k)
    }

    pub fn set(&self) -> Vec<bool> {
        (0..self.sites).map(|x| self.a.contains(&x)).collect()
    }
}
