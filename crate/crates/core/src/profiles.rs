//! Initial laws supported on the nonpositive sites.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::Configuration;

/// Largest supported per-site capacity.
pub const MAX_K: u32 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("K must be in 1..={MAX_K}, got {0}")]
    BadCapacity(u32),
    #[error("layer count {layers} must be in 1..=K (K = {k})")]
    BadLayers { layers: u32, k: u32 },
    #[error("binomial parameter must be in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("residue {residue}: law must have K+1 = {expected} nonnegative entries summing to 1")]
    BadLaw { residue: usize, expected: usize },
    #[error("periodic profile has zero density")]
    ZeroDensity,
    #[error("sampling needs a finite truncation")]
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    /// `layers` particles at each of the sites `(−len, 0]` (all nonpositive sites if `len` is `None`).
    DeterministicStep { layers: u32, len: Option<u64> },
    /// Independent sites; `η(−i)` has law `laws[i mod r]` on `{0, …, K}`.
    ProductPeriodic { laws: Vec<Vec<f64>> },
    /// Independent Binomial(K, α) occupations.
    BinomialStep { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialProfile {
    pub k: u32,
    pub variant: Variant,
}

impl InitialProfile {
    pub fn new(k: u32, variant: Variant) -> Result<Self, ProfileError> {
        if k == 0 || k > MAX_K {
            return Err(ProfileError::BadCapacity(k));
        }
        match &variant {
            Variant::DeterministicStep { layers, .. } => {
                if *layers == 0 || *layers > k {
                    return Err(ProfileError::BadLayers { layers: *layers, k });
                }
            }
            Variant::BinomialStep { alpha } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(ProfileError::BadAlpha(*alpha));
                }
            }
            Variant::ProductPeriodic { laws } => {
                if laws.is_empty() {
                    return Err(ProfileError::ZeroDensity);
                }
                for (residue, law) in laws.iter().enumerate() {
                    let ok = law.len() == k as usize + 1
                        && law.iter().all(|&p| p >= 0.0 && p.is_finite())
                        && (law.iter().sum::<f64>() - 1.0).abs() < 1e-12;
                    if !ok {
                        return Err(ProfileError::BadLaw {
                            residue,
                            expected: k as usize + 1,
                        });
                    }
                }
            }
        }
        let p = Self { k, variant };
        if p.c_nu() <= 0.0 {
            return Err(ProfileError::ZeroDensity);
        }
        Ok(p)
    }

    /// The full step `η^∞ ≡ K` on the nonpositive sites.
    pub fn full_step(k: u32) -> Result<Self, ProfileError> {
        Self::new(k, Variant::DeterministicStep { layers: k, len: None })
    }

    pub fn step(k: u32, layers: u32, len: u64) -> Result<Self, ProfileError> {
        Self::new(k, Variant::DeterministicStep { layers, len: Some(len) })
    }

    pub fn binomial(k: u32, alpha: f64) -> Result<Self, ProfileError> {
        Self::new(k, Variant::BinomialStep { alpha })
    }

    /// Periodic product law with deterministic integer means.
    pub fn periodic_means(k: u32, means: &[u32]) -> Result<Self, ProfileError> {
        let laws = means
            .iter()
            .map(|&m| (0..=k).map(|j| f64::from(j == m)).collect())
            .collect();
        Self::new(k, Variant::ProductPeriodic { laws })
    }

    /// Restricts the profile to `(−len, 0]`.
    pub fn truncated(&self, len: u64) -> TruncatedProfile<'_> {
        TruncatedProfile { profile: self, len }
    }

    fn site_law_mean(&self, i: u64) -> f64 {
        match &self.variant {
            Variant::DeterministicStep { layers, .. } => f64::from(*layers),
            Variant::BinomialStep { alpha } => f64::from(self.k) * alpha,
            Variant::ProductPeriodic { laws } => {
                let law = &laws[(i % laws.len() as u64) as usize];
                law.iter().enumerate().map(|(j, &p)| j as f64 * p).sum()
            }
        }
    }

    /// `E_ν[η(x)]`.
    pub fn mean_occupation(&self, x: i64) -> f64 {
        if x > 0 {
            return 0.0;
        }
        let i = x.unsigned_abs();
        if let Variant::DeterministicStep { len: Some(len), .. } = self.variant {
            if i >= len {
                return 0.0;
            }
        }
        self.site_law_mean(i)
    }

    /// Cesàro density `lim (1/k) Σ_{x<k} E_ν[η(−x)]`.
    pub fn c_nu(&self) -> f64 {
        match &self.variant {
            Variant::ProductPeriodic { laws } => {
                (0..laws.len() as u64).map(|i| self.site_law_mean(i)).sum::<f64>() / laws.len() as f64
            }
            _ => self.site_law_mean(0),
        }
    }

    /// Built-in support length, if any.
    pub fn support_len(&self) -> Option<u64> {
        match self.variant {
            Variant::DeterministicStep { len, .. } => len,
            _ => None,
        }
    }

    /// True when every site is deterministic with occupation in `{0, K}`.
    pub fn is_zero_k_step(&self) -> bool {
        match &self.variant {
            Variant::DeterministicStep { layers, .. } => *layers == self.k,
            Variant::BinomialStep { alpha } => *alpha == 1.0,
            Variant::ProductPeriodic { laws } => laws.iter().all(|l| l[0] == 1.0 || l[self.k as usize] == 1.0),
        }
    }

    fn draw_site<R: Rng + ?Sized>(&self, i: u64, rng: &mut R) -> u8 {
        match &self.variant {
            Variant::DeterministicStep { layers, .. } => *layers as u8,
            Variant::BinomialStep { alpha } => (0..self.k).filter(|_| rng.random::<f64>() < *alpha).count() as u8,
            Variant::ProductPeriodic { laws } => {
                let law = &laws[(i % laws.len() as u64) as usize];
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, &p) in law.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return j as u8;
                    }
                }
                // rounding left u above the total: take the last charged value
                law.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
            }
        }
    }

    /// Independent draws on `(−len, 0]`, zero elsewhere.
    pub fn sample_configuration<R: Rng + ?Sized>(&self, len: u64, rng: &mut R) -> Configuration {
        let len = self.support_len().map_or(len, |s| s.min(len));
        let mut occ = vec![0u8; len as usize];
        // occ[j] is the site −(len−1) + j
        for i in 0..len {
            occ[(len - 1 - i) as usize] = self.draw_site(i, rng);
        }
        Configuration::from_occupancy(1 - len as i64, occ, self.k).expect("profile draws respect K")
    }
}

/// `ν_L`: the profile restricted to `(−len, 0]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedProfile<'a> {
    pub profile: &'a InitialProfile,
    pub len: u64,
}

impl TruncatedProfile<'_> {
    pub fn mean_occupation(&self, x: i64) -> f64 {
        if x <= -(self.len as i64) {
            0.0
        } else {
            self.profile.mean_occupation(x)
        }
    }

    /// Leftmost site that can be occupied.
    pub fn min_site(&self) -> i64 {
        let len = self.profile.support_len().map_or(self.len, |s| s.min(self.len));
        1 - len as i64
    }
}
