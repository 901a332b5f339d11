//! Exact finite-state semigroups for `n` interacting (`V`) and independent
//! (`U`) particles on a finite site set, and machine checks of the
//! comparison inequalities between them.
//!
//! Sites are `0..S` and carry a general symmetric kernel [`SiteKernel`].
//! Configurations are ordered tuples `x ∈ {0..S}ⁿ`; the interacting system
//! lives on `Ω_n^K`, the tuples with no site repeated more than `K` times.
//! Semigroups are applied by uniformization with a certified truncation.

mod checks;

pub use checks::*;

use serde::Serialize;
use thiserror::Error;

use crate::quad::composite_gl_vec;
use crate::rw::poisson_weights;

/// Default cap on the number of enumerated states.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Sup-norm truncation tolerance for `e^{tG} f`, relative to `‖f‖_∞`.
pub const SEMIGROUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error("state space has {states} states, above the cap {cap}")]
    TooLarge { states: usize, cap: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("function is not positive definite (smallest eigenvalue {min_eigenvalue})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("function is not symmetric under permutations of its arguments")]
    NotSymmetric,
    #[error("{what}: error estimate {achieved} above tolerance {tol}")]
    ToleranceUnreachable { what: String, achieved: f64, tol: f64 },
}

/// Symmetric jump rates `p(x, y)` on the sites `0..S`, zero on the diagonal,
/// rows summing to at most one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteKernel {
    n: usize,
    p: Vec<f64>,
    name: String,
}

impl SiteKernel {
    pub fn from_matrix(n: usize, p: Vec<f64>) -> Result<Self, ExactError> {
        if n == 0 || n > u8::MAX as usize || p.len() != n * n {
            return Err(ExactError::InvalidInstance(format!(
                "need an {n}×{n} matrix with 1 ≤ n ≤ 255"
            )));
        }
        for x in 0..n {
            if p[x * n + x] != 0.0 {
                return Err(ExactError::InvalidInstance(format!("p({x},{x}) must be 0")));
            }
            let mut row = 0.0;
            for y in 0..n {
                let v = p[x * n + y];
                if !(v >= 0.0) || v != p[y * n + x] {
                    return Err(ExactError::InvalidInstance(format!(
                        "p({x},{y}) must be ≥ 0 and symmetric"
                    )));
                }
                row += v;
            }
            if row > 1.0 + 1e-12 {
                return Err(ExactError::InvalidInstance(format!("row {x} sums to {row} > 1")));
            }
        }
        Ok(Self {
            n,
            p,
            name: "custom".into(),
        })
    }

    /// Nearest-neighbour path `0 − 1 − ⋯ − (S−1)` with rate ½ per edge.
    pub fn path(n: usize) -> Result<Self, ExactError> {
        let mut p = vec![0.0; n * n];
        for x in 0..n.saturating_sub(1) {
            p[x * n + x + 1] = 0.5;
            p[(x + 1) * n + x] = 0.5;
        }
        let mut k = Self::from_matrix(n, p)?;
        k.name = format!("path({n})");
        Ok(k)
    }

    /// Nearest-neighbour cycle with rate ½ to each side.
    pub fn torus(n: usize) -> Result<Self, ExactError> {
        if n < 3 {
            return Self::path(n);
        }
        let mut p = vec![0.0; n * n];
        for x in 0..n {
            let y = (x + 1) % n;
            p[x * n + y] = 0.5;
            p[y * n + x] = 0.5;
        }
        let mut k = Self::from_matrix(n, p)?;
        k.name = format!("torus({n})");
        Ok(k)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.n + y]
    }

    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.p[x * self.n..(x + 1) * self.n]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(y, &v)| (y, v))
    }
}

/// Enumeration of `Ω_n^K` over `sites` sites, with a mixed-radix index into
/// the full product `{0..S}ⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiParticleSpace {
    sites: usize,
    n: usize,
    k: u32,
    states: Vec<u8>,
    index: Vec<u32>,
}

/// Builds `Ω_n^K` with the default state cap.
pub fn build_space(sites: usize, n: usize, k: u32) -> Result<MultiParticleSpace, ExactError> {
    MultiParticleSpace::with_cap(sites, n, k, DEFAULT_STATE_CAP)
}

impl MultiParticleSpace {
    pub fn with_cap(sites: usize, n: usize, k: u32, cap: usize) -> Result<Self, ExactError> {
        if sites == 0 || sites > u8::MAX as usize || n == 0 || k == 0 {
            return Err(ExactError::InvalidInstance(
                "need sites in 1..=255, n ≥ 1, K ≥ 1".into(),
            ));
        }
        if sites * (k as usize) < n {
            return Err(ExactError::InvalidInstance(format!(
                "{sites} sites with cap {k} cannot hold {n} particles"
            )));
        }
        let total = (sites as u128).checked_pow(n as u32).filter(|&v| v <= cap as u128 * 64);
        let total = match total {
            Some(v) => v as usize,
            None => {
                return Err(ExactError::TooLarge {
                    states: usize::MAX,
                    cap,
                })
            }
        };
        let mut states = Vec::new();
        let mut index = vec![u32::MAX; total];
        let mut x = vec![0u8; n];
        let mut counts = vec![0u32; sites];
        let mut count = 0usize;
        for code in 0..total {
            let mut c = code;
            for slot in x.iter_mut().rev() {
                *slot = (c % sites) as u8;
                c /= sites;
            }
            counts.iter_mut().for_each(|v| *v = 0);
            let ok = x.iter().all(|&s| {
                counts[s as usize] += 1;
                counts[s as usize] <= k
            });
            if ok {
                index[code] = count as u32;
                states.extend_from_slice(&x);
                count += 1;
                if count > cap {
                    return Err(ExactError::TooLarge { states: count, cap });
                }
            }
        }
        Ok(Self {
            sites,
            n,
            k,
            states,
            index,
        })
    }

    /// All of `{0..S}ⁿ` (no exclusion), the state space of `U`.
    pub fn full(sites: usize, n: usize) -> Result<Self, ExactError> {
        Self::with_cap(sites, n, n as u32, DEFAULT_STATE_CAP)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> {
        self.states.chunks_exact(self.n)
    }

    /// Mixed-radix code of a tuple in `{0..S}ⁿ`.
    #[inline]
    pub fn code(&self, x: &[u8]) -> usize {
        x.iter().fold(0usize, |c, &s| c * self.sites + s as usize)
    }

    #[inline]
    pub fn index_of(&self, x: &[u8]) -> Option<usize> {
        match self.index.get(self.code(x)) {
            Some(&i) if i != u32::MAX => Some(i as usize),
            _ => None,
        }
    }

    /// Occupation counts `c_y(x)` of every site.
    pub fn counts(&self, i: usize) -> Vec<u32> {
        let mut c = vec![0u32; self.sites];
        for &s in self.state(i) {
            c[s as usize] += 1;
        }
        c
    }

    /// True when the coordinates of state `i` are distinct, i.e. it lies in `Ω_n^1`.
    pub fn is_distinct(&self, i: usize) -> bool {
        self.counts(i).iter().all(|&c| c <= 1)
    }

    pub fn tabulate(&self, f: impl Fn(&[u8]) -> f64) -> Vec<f64> {
        self.states().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeneratorKind {
    /// Interacting particles with rate `p(x_i, y)(K − #{j : x_j = y})`.
    V,
    /// Independent walkers jumping at rate `K p(x_i, y)`.
    U,
}

/// Sparse generator: off-diagonal rates in CSR layout, the diagonal being
/// minus the row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub kind: GeneratorKind,
    pub k: u32,
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

impl GeneratorMatrix {
    /// `𝒱_n^K` on `space`.
    pub fn interacting(space: &MultiParticleSpace, kernel: &SiteKernel) -> Result<Self, ExactError> {
        Self::build(space, kernel, GeneratorKind::V, space.k)
    }

    /// `𝒰_n^K = K 𝒰_n^1` on the unconstrained space.
    pub fn independent(space: &MultiParticleSpace, kernel: &SiteKernel, k: u32) -> Result<Self, ExactError> {
        if (space.k as usize) < space.n {
            return Err(ExactError::InvalidInstance("U acts on the full product space".into()));
        }
        Self::build(space, kernel, GeneratorKind::U, k)
    }

    fn build(space: &MultiParticleSpace, kernel: &SiteKernel, kind: GeneratorKind, k: u32) -> Result<Self, ExactError> {
        if kernel.len() != space.sites {
            return Err(ExactError::InvalidInstance(
                "kernel and space disagree on the number of sites".into(),
            ));
        }
        let dim = space.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        let mut exit = Vec::with_capacity(dim);
        let mut y = vec![0u8; space.n];
        row_ptr.push(0);
        for i in 0..dim {
            let x = space.state(i);
            let counts = space.counts(i);
            let mut total = 0.0;
            for r in 0..space.n {
                for (site, p) in kernel.neighbors(x[r] as usize) {
                    let mult = match kind {
                        GeneratorKind::V => k.saturating_sub(counts[site]),
                        GeneratorKind::U => k,
                    };
                    if mult == 0 {
                        continue;
                    }
                    y.copy_from_slice(x);
                    y[r] = site as u8;
                    let j = space
                        .index_of(&y)
                        .ok_or_else(|| ExactError::InvalidInstance("transition leaves the state space".into()))?;
                    let rate = p * f64::from(mult);
                    cols.push(j as u32);
                    rates.push(rate);
                    total += rate;
                }
            }
            exit.push(total);
            row_ptr.push(cols.len());
        }
        Ok(Self {
            kind,
            k,
            dim,
            row_ptr,
            cols,
            rates,
            exit,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_exit(&self) -> f64 {
        self.exit.iter().copied().fold(0.0, f64::max)
    }

    /// Off-diagonal entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.rates[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// `(G f)(x) = Σ_y q(x, y)(f(y) − f(x))`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let fi = f[i];
            *o = self.row(i).map(|(j, q)| q * (f[j] - fi)).sum();
        }
    }

    /// Dense copy with the diagonal filled in.
    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, q) in self.row(i) {
                m[(i, j)] += q;
            }
            m[(i, i)] -= self.exit[i];
        }
        m
    }

    /// Every row sums to zero and off-diagonal rates are nonnegative.
    pub fn is_conservative(&self) -> bool {
        (0..self.dim).all(|i| {
            let (s, ok) = self.row(i).fold((0.0, true), |(s, ok), (_, q)| (s + q, ok && q >= 0.0));
            ok && (s - self.exit[i]).abs() <= 1e-12 * s.max(1.0)
        })
    }
}

/// `e^{tG} f` by uniformization; the truncated Poisson tail times `‖f‖_∞`
/// stays below `SEMIGROUP_TOL · ‖f‖_∞`.
pub fn apply_semigroup(gen: &GeneratorMatrix, t: f64, f: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), gen.dim, "function length must match the generator");
    let lambda = gen.max_exit();
    if t == 0.0 || lambda == 0.0 {
        return f.to_vec();
    }
    let (weights, _) = poisson_weights(lambda * t, SEMIGROUP_TOL).expect("uniformization terms within limit");
    let mut cur = f.to_vec();
    let mut gcur = vec![0.0; f.len()];
    let mut acc: Vec<f64> = cur.iter().map(|v| weights[0] * v).collect();
    for &w in &weights[1..] {
        gen.apply(&cur, &mut gcur);
        for (c, g) in cur.iter_mut().zip(&gcur) {
            *c += g / lambda;
        }
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += w * c;
        }
    }
    acc
}

/// An `n`-particle instance: both state spaces and all three generators.
#[derive(Debug, Clone)]
pub struct Instance {
    pub kernel: SiteKernel,
    pub n: usize,
    pub k: u32,
    pub omega: MultiParticleSpace,
    pub full: MultiParticleSpace,
    pub v: GeneratorMatrix,
    pub u: GeneratorMatrix,
    walk: GeneratorMatrix,
    /// position of every `Ω` state inside the full product
    embed: Vec<usize>,
}

impl Instance {
    pub fn new(kernel: SiteKernel, n: usize, k: u32) -> Result<Self, ExactError> {
        let omega = build_space(kernel.len(), n, k)?;
        let full = MultiParticleSpace::full(kernel.len(), n)?;
        let single = MultiParticleSpace::full(kernel.len(), 1)?;
        let v = GeneratorMatrix::interacting(&omega, &kernel)?;
        let u = GeneratorMatrix::independent(&full, &kernel, k)?;
        let walk = GeneratorMatrix::independent(&single, &kernel, 1)?;
        let embed = omega.states().map(|x| full.index_of(x).expect("Ω ⊂ full")).collect();
        Ok(Self {
            kernel,
            n,
            k,
            omega,
            full,
            v,
            u,
            walk,
            embed,
        })
    }

    pub fn describe(&self) -> String {
        format!("{} n={} K={}", self.kernel.name(), self.n, self.k)
    }

    /// Restriction of a function on the full product to `Ω_n^K`.
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        self.embed.iter().map(|&i| f[i]).collect()
    }

    /// Index in the full product of `Ω` state `i`.
    pub fn embed(&self, i: usize) -> usize {
        self.embed[i]
    }

    pub fn v_semigroup(&self, t: f64, f: &[f64]) -> Vec<f64> {
        apply_semigroup(&self.v, t, f)
    }

    pub fn u_semigroup(&self, t: f64, f: &[f64]) -> Vec<f64> {
        apply_semigroup(&self.u, t, f)
    }

    /// `x ↦ P_x(ζ_t ∈ set)` for the rate-one walk.
    pub fn walk(&self, t: f64, set: &[bool]) -> Vec<f64> {
        walk_probs(&self.walk, t, set)
    }

    /// `1_{B_1 × ⋯ × B_n}` on the full product.
    pub fn box_indicator(&self, sets: &[&[bool]]) -> Vec<f64> {
        assert_eq!(sets.len(), self.n);
        self.full
            .tabulate(|x| f64::from(x.iter().zip(sets).all(|(&s, b)| b[s as usize])))
    }

    /// `1_{Aⁿ}` on the full product.
    pub fn power_indicator(&self, set: &[bool]) -> Vec<f64> {
        self.full.tabulate(|x| f64::from(x.iter().all(|&s| set[s as usize])))
    }
}

fn walk_probs(walk: &GeneratorMatrix, t: f64, set: &[bool]) -> Vec<f64> {
    let f: Vec<f64> = set.iter().map(|&b| f64::from(b)).collect();
    apply_semigroup(walk, t, &f)
}

/// Single-walk semigroup on the sites of `kernel`.
pub fn walk_generator(kernel: &SiteKernel) -> Result<GeneratorMatrix, ExactError> {
    let single = MultiParticleSpace::full(kernel.len(), 1)?;
    GeneratorMatrix::independent(&single, kernel, 1)
}

/// `κ_t(A, B)` and `τ_t(A, B)` on a finite site set, with the same formulas
/// as on the lattice. The `s`-integral is smooth here and is done by
/// composite Gauss–Legendre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteKappaTau {
    pub kappa: f64,
    pub tau: f64,
    pub quad_error: f64,
}

pub fn finite_kappa_tau(kernel: &SiteKernel, t: f64, a: &[bool], b: &[bool]) -> Result<FiniteKappaTau, ExactError> {
    let walk = walk_generator(kernel)?;
    let s_n = kernel.len();
    let pb_t = walk_probs(&walk, t, b);
    let tau: f64 = (0..s_n).filter(|&x| a[x]).map(|x| pb_t[x] * pb_t[x]).sum();
    if t == 0.0 {
        return Ok(FiniteKappaTau {
            kappa: 0.0,
            tau,
            quad_error: 0.0,
        });
    }
    let integrand = |s: f64| {
        let pb = walk_probs(&walk, s, b);
        let pa = walk_probs(&walk, t - s, a);
        let mut sum = 0.0;
        for x in 0..s_n {
            for (y, p) in kernel.neighbors(x) {
                let d = pb[x] - pb[y];
                sum += p * d * d * pa[x] * pa[y];
            }
        }
        vec![sum]
    };
    let (v, err) = adaptive_gl(integrand, t, 1e-12)?;
    Ok(FiniteKappaTau {
        kappa: v[0],
        tau,
        quad_error: err,
    })
}

/// Composite Gauss–Legendre on `[0, t]`, doubling the panels until the
/// estimate is below `tol` (relative to the largest component, floored at 1).
pub(crate) fn adaptive_gl<F: FnMut(f64) -> Vec<f64>>(
    mut f: F,
    t: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64), ExactError> {
    let mut panels = (t.ceil() as usize).clamp(2, 64);
    loop {
        let (v, err) = composite_gl_vec(&mut f, 0.0, t, panels, 16);
        let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if err <= tol * scale {
            return Ok((v, err));
        }
        if panels >= 4096 {
            return Err(ExactError::ToleranceUnreachable {
                what: "quadrature".into(),
                achieved: err,
                tol: tol * scale,
            });
        }
        panels *= 2;
    }
}
