//! Experiment configuration, read from TOML. Every section is optional; the
//! defaults reproduce the nearest-neighbour full-step setting.

use ksep_core::analytics::LimitCase;
use ksep_core::experiment::LRule;
use ksep_core::kernel::JumpKernel;
use ksep_core::profiles::{InitialProfile, Variant};
use ksep_core::sim::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
}

fn field(path: &str, message: impl ToString) -> ConfigError {
    ConfigError::Field {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub kernel: KernelSpec,
    pub profile: ProfileSpec,
    pub grid: GridSpec,
    pub simulate: SimulateSection,
    pub intensity: IntensitySection,
    pub kappa_tau: KappaTauSection,
    pub verify_exact: VerifySection,
    pub fit: FitSection,
    pub trend: TrendSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub replicas: u64,
    pub engine: Engine,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            replicas: 1000,
            engine: Engine::Uniformized,
        }
    }
}

/// Jump law as `(offset, prob)` pairs. Both signs must be listed; nothing is
/// completed or renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub pairs: Vec<(i64, f64)>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            pairs: vec![(-1, 0.5), (1, 0.5)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    FullStep,
    Step,
    Binomial,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpec {
    pub k: u32,
    pub kind: ProfileKind,
    /// Particles per site for `step` (defaults to K).
    pub layers: Option<u32>,
    /// Built-in support length for `step`.
    pub len: Option<u64>,
    pub alpha: Option<f64>,
    /// Site laws on `{0..K}` for `periodic`, indexed by `−x mod r`.
    pub laws: Option<Vec<Vec<f64>>>,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            k: 1,
            kind: ProfileKind::FullStep,
            layers: None,
            len: None,
            alpha: None,
            laws: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub t: Vec<f64>,
    pub l_rule: LRule,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t: vec![250.0, 500.0, 1000.0, 2000.0, 4000.0],
            l_rule: LRule::SpreadMultiple { c: 10.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Highest order statistic written per replica.
    pub m_max: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { m_max: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensitySection {
    /// Times; the grid is used when empty.
    pub t: Vec<f64>,
    /// Intervals `(lo, hi]` in rescaled units.
    pub sets: Vec<[f64; 2]>,
    pub route_tol: f64,
}

impl Default for IntensitySection {
    fn default() -> Self {
        Self {
            t: Vec::new(),
            sets: vec![[0.0, f64::INFINITY], [0.0, 1.0], [1.0, f64::INFINITY]],
            route_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaPoint {
    pub t: f64,
    pub b: f64,
    /// Support length of `(−L, 0]`; absent for the half-line.
    pub l: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauPoint {
    pub t: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaTauSection {
    pub t: Vec<f64>,
    /// `A = v_t⁻¹(lo, hi]`, `B = (−∞, 0]`.
    pub rescaled: [f64; 2],
    pub kappa_bound: Vec<KappaPoint>,
    pub tau_bound: Vec<TauPoint>,
    pub tol: f64,
}

impl Default for KappaTauSection {
    fn default() -> Self {
        Self {
            t: vec![50.0, 200.0, 800.0, 3200.0],
            rescaled: [0.0, 1.0],
            kappa_bound: vec![
                KappaPoint {
                    t: 2.0,
                    b: 2.0,
                    l: None,
                },
                KappaPoint {
                    t: 5.0,
                    b: 3.0,
                    l: Some(10),
                },
                KappaPoint {
                    t: 20.0,
                    b: 6.0,
                    l: None,
                },
            ],
            tau_bound: vec![
                TauPoint {
                    t: 4.0,
                    lo: -1.0,
                    hi: f64::INFINITY,
                },
                TauPoint {
                    t: 10.0,
                    lo: 3.0,
                    hi: 8.0,
                },
            ],
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// Counting measure: `f₂ = f₁`, `h ≡ 1`.
    #[default]
    One,
    /// `h = K⁻ⁿ ∏ (K)_{c_y}`, the number of admissible label tuples over `Kⁿ`.
    LabelCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub instances: usize,
    pub max_sites: usize,
    /// Weights tried in the sum-symmetry and main-corollary checks.
    pub weights: Vec<Weight>,
    pub nto2_instances: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            instances: 24,
            max_sites: 7,
            weights: vec![Weight::One, Weight::LabelCount],
            nto2_instances: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub level: f64,
    /// Count intervals `(lo, hi]` in rescaled units.
    pub intervals: Vec<[f64; 2]>,
    /// Spacing indices `k` tested against Exp(k).
    pub spacings: Vec<u32>,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            level: 0.01,
            intervals: vec![[0.5, 1.0], [1.0, 1.5], [1.5, f64::INFINITY]],
            spacings: vec![1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendSection {
    pub band: f64,
    pub cap: f64,
}

impl Default for TrendSection {
    fn default() -> Self {
        Self { band: 0.01, cap: 0.08 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.kernel()?;
        self.profile()?;
        for (i, &t) in self.grid.t.iter().enumerate() {
            if !(t > 1.0 && t.is_finite()) {
                return Err(field(
                    &format!("grid.t[{i}]"),
                    format!("must be a finite time > 1, got {t}"),
                ));
            }
            self.grid.l_rule.length(t).map_err(|e| field("grid.l_rule", e))?;
        }
        if self.run.replicas == 0 {
            return Err(field("run.replicas", "must be positive"));
        }
        for (name, sets) in [
            ("intensity.sets", &self.intensity.sets),
            ("fit.intervals", &self.fit.intervals),
        ] {
            for (i, s) in sets.iter().enumerate() {
                if !(s[0] < s[1]) {
                    return Err(field(&format!("{name}[{i}]"), "need lo < hi"));
                }
            }
        }
        if !(self.fit.level > 0.0 && self.fit.level < 1.0) {
            return Err(field("fit.level", "must lie in (0, 1)"));
        }
        if self.fit.spacings.contains(&0) {
            return Err(field("fit.spacings", "indices start at 1"));
        }
        if !(self.verify_exact.max_sites >= 2 && self.verify_exact.max_sites <= 9) {
            return Err(field("verify_exact.max_sites", "must be in 2..=9"));
        }
        for (i, p) in self.kappa_tau.kappa_bound.iter().enumerate() {
            if !(p.t > 0.0 && p.b > 0.0) {
                return Err(field(&format!("kappa_tau.kappa_bound[{i}]"), "need t > 0 and b > 0"));
            }
        }
        for (i, p) in self.kappa_tau.tau_bound.iter().enumerate() {
            if !(p.t >= 0.0 && p.lo.is_finite() && p.lo < p.hi) {
                return Err(field(
                    &format!("kappa_tau.tau_bound[{i}]"),
                    "need t ≥ 0 and finite lo < hi",
                ));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<JumpKernel, ConfigError> {
        JumpKernel::new(&self.kernel.pairs).map_err(|e| field("kernel.pairs", e))
    }

    pub fn profile(&self) -> Result<InitialProfile, ConfigError> {
        let p = &self.profile;
        let variant = match p.kind {
            ProfileKind::FullStep => Variant::DeterministicStep { layers: p.k, len: None },
            ProfileKind::Step => Variant::DeterministicStep {
                layers: p.layers.unwrap_or(p.k),
                len: p.len,
            },
            ProfileKind::Binomial => Variant::BinomialStep {
                alpha: p
                    .alpha
                    .ok_or_else(|| field("profile.alpha", "required for kind = \"binomial\""))?,
            },
            ProfileKind::Periodic => Variant::ProductPeriodic {
                laws: p
                    .laws
                    .clone()
                    .ok_or_else(|| field("profile.laws", "required for kind = \"periodic\""))?,
            },
        };
        InitialProfile::new(p.k, variant).map_err(|e| field("profile", e))
    }

    /// Limit regime paired with the L-rule: `ψ = c` for `L ~ c √(t / log t)`,
    /// the block case otherwise.
    pub fn limit_case(&self) -> LimitCase {
        match self.grid.l_rule {
            LRule::SpreadMultiple { c } => LimitCase::Psi(c),
            _ => LimitCase::Block,
        }
    }
}
