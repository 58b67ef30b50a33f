//! Potential families on the half-line window `[1, N]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Potential;

pub const FAMILY_NAMES: [&str; 5] = ["zero", "periodic_modulated", "slow_decay", "random_l2", "custom"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyDescriptor {
    #[default]
    Zero,
    /// `v_n = c[(n - 1) mod q] / ln(n + 2)` with `q = c.len()`.
    PeriodicModulated { c: Vec<f64> },
    /// `v_n = c / (n + 1)^beta`.
    SlowDecay { c: f64, beta: f64 },
    /// `v_n = eta[n mod q] / ln(n + 2) + xi_n / (n + 1)^beta`, `eta`, `xi`
    /// uniform in `[-amplitude, amplitude]`; `beta > 1/2` keeps the
    /// `q`-differences square summable.
    RandomL2 { q: usize, amplitude: f64, beta: f64 },
    /// Literal values starting at site 1.
    Custom { values: Vec<f64> },
}

impl FamilyDescriptor {
    /// Parses a descriptor, reporting unrecognized `kind` tags by name.
    pub fn from_value(v: &serde_json::Value) -> Result<Self> {
        if let Some(kind) = v.get("kind").and_then(|k| k.as_str()) {
            if !FAMILY_NAMES.contains(&kind) {
                return Err(Error::UnknownFamily(kind.to_string()));
            }
        }
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyDescriptor::Zero => FAMILY_NAMES[0],
            FamilyDescriptor::PeriodicModulated { .. } => FAMILY_NAMES[1],
            FamilyDescriptor::SlowDecay { .. } => FAMILY_NAMES[2],
            FamilyDescriptor::RandomL2 { .. } => FAMILY_NAMES[3],
            FamilyDescriptor::Custom { .. } => FAMILY_NAMES[4],
        }
    }

    /// The natural period of the family, if it has one.
    pub fn period(&self) -> Option<usize> {
        match self {
            FamilyDescriptor::PeriodicModulated { c } => Some(c.len()),
            FamilyDescriptor::RandomL2 { q, .. } => Some(*q),
            _ => None,
        }
    }
}

pub fn gen_family(desc: &FamilyDescriptor, n: i64, seed: u64) -> Result<Potential> {
    if n < 0 {
        return Err(Error::InvalidInput(format!("window end {n} < 0")));
    }
    let sites = 1..=n;
    let values: Vec<f64> = match desc {
        FamilyDescriptor::Zero => vec![0.0; n as usize],
        FamilyDescriptor::PeriodicModulated { c } => {
            if c.is_empty() {
                return Err(Error::InvalidInput("periodic family needs at least one coefficient".into()));
            }
            let q = c.len();
            sites.map(|j| c[(j as usize - 1) % q] / ((j + 2) as f64).ln()).collect()
        }
        FamilyDescriptor::SlowDecay { c, beta } => {
            if !(*beta > 0.0) {
                return Err(Error::InvalidInput(format!("slow decay needs beta > 0, got {beta}")));
            }
            sites.map(|j| c / ((j + 1) as f64).powf(*beta)).collect()
        }
        FamilyDescriptor::RandomL2 { q, amplitude, beta } => {
            if *q == 0 || !(*beta > 0.5) || !(*amplitude >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "random family needs q >= 1, beta > 1/2, amplitude >= 0 (got {q}, {beta}, {amplitude})"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || if *amplitude == 0.0 { 0.0 } else { rng.gen_range(-*amplitude..=*amplitude) };
            let eta: Vec<f64> = (0..*q).map(|_| draw()).collect();
            sites
                .map(|j| eta[j as usize % q] / ((j + 2) as f64).ln() + draw() / ((j + 1) as f64).powf(*beta))
                .collect()
        }
        FamilyDescriptor::Custom { values } => (0..n as usize).map(|i| values.get(i).copied().unwrap_or(0.0)).collect(),
    };
    Ok(Potential::new(1, values)?.with_family(desc.name()))
}
