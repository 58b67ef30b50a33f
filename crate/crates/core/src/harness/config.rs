use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::families::FamilyDescriptor;
use crate::error::{Error, Result};
use crate::spectral::band_partition;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentKind {
    IdentitySuite,
    RouteAgreement,
    EntropyScan,
    TransferDiag,
    Density,
}

impl ExperimentKind {
    pub fn subcommand(self) -> &'static str {
        match self {
            ExperimentKind::IdentitySuite => "identities",
            ExperimentKind::RouteAgreement => "routes",
            ExperimentKind::EntropyScan => "entropy",
            ExperimentKind::TransferDiag => "transfer",
            ExperimentKind::Density => "density",
        }
    }
}

/// Inclusive tensor grid `re x im`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectGrid {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub n_re: usize,
    pub n_im: usize,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (a + b)],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl RectGrid {
    /// Row-major points, real part varying fastest.
    pub fn points(&self) -> Vec<C64> {
        let res = linspace(self.re[0], self.re[1], self.n_re);
        linspace(self.im[0], self.im[1], self.n_im)
            .into_iter()
            .flat_map(|y| res.iter().map(move |&x| C64::new(x, y)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub identity: f64,
    pub shift_identity: f64,
    pub route: f64,
    pub limit_gap: f64,
    pub abs_a_floor: f64,
    pub wronskian: f64,
    pub m_side: f64,
    pub offset_sensitivity: f64,
    pub quadrature: f64,
    pub decrement: f64,
    pub transfer: f64,
    pub diagonalization: f64,
    pub reconstruction: f64,
    pub mass: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-10,
            shift_identity: 1e-12,
            route: 1e-8,
            limit_gap: 1e-6,
            abs_a_floor: 1e-6,
            wronskian: 1e-8,
            m_side: 1e-4,
            offset_sensitivity: 1e-3,
            quadrature: 1e-4,
            decrement: 1e-2,
            transfer: 1e-12,
            diagonalization: 1e-10,
            reconstruction: 1e-9,
            mass: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub family: FamilyDescriptor,
    pub q: usize,
    pub grid: Option<RectGrid>,
    /// Truncation levels `N`; strictly increasing.
    pub n_ladder: Vec<i64>,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Margin around the band nodes.
    pub delta: f64,
    /// Number of random potentials (or random triples for the identity suite).
    pub samples: usize,
    pub max_support: usize,
    pub amplitude: f64,
    /// Simpson panels per site of the truncation (at least 512 per interval).
    pub panels_per_site: usize,
    /// Tail cuts `L` for the truncation-stability curve.
    pub cut_ladder: Vec<i64>,
    /// Cyclic half-widths for the finite-to-infinite limit.
    pub limit_ladder: Vec<usize>,
    pub m_max: usize,
    pub band_points: usize,
    /// Offset from the real axis for near-axis m-function evaluation.
    pub axis_offset: f64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::default_for(ExperimentKind::IdentitySuite)
    }
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = Self {
            schema_version: SCHEMA_VERSION,
            kind,
            family: FamilyDescriptor::Zero,
            q: 1,
            grid: None,
            n_ladder: (5..=12).map(|p| 1i64 << p).collect(),
            seed: 7,
            tolerances: Tolerances::default(),
            delta: 0.1,
            samples: 20,
            max_support: 12,
            amplitude: 0.3,
            panels_per_site: 16,
            cut_ladder: vec![],
            limit_ladder: vec![40, 80, 160],
            m_max: 2000,
            band_points: 401,
            axis_offset: 1e-4,
            output: None,
        };
        match kind {
            ExperimentKind::IdentitySuite => Self { samples: 500, max_support: 0, ..base },
            ExperimentKind::RouteAgreement => Self {
                grid: Some(RectGrid { re: [-1.9, 1.9], im: [0.05, 1.0], n_re: 20, n_im: 10 }),
                ..base
            },
            ExperimentKind::EntropyScan => Self {
                family: FamilyDescriptor::PeriodicModulated { c: vec![0.1, -0.1] },
                q: 2,
                cut_ladder: vec![0, 8, 32, 128],
                ..base
            },
            ExperimentKind::TransferDiag => Self {
                family: FamilyDescriptor::RandomL2 { q: 2, amplitude: 0.05, beta: 0.8 },
                q: 2,
                grid: Some(RectGrid { re: [0.3, 1.7], im: [0.05, 0.8], n_re: 4, n_im: 3 }),
                n_ladder: (5..=10).map(|p| 1i64 << p).collect(),
                ..base
            },
            ExperimentKind::Density => Self { n_ladder: vec![256], ..base },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        if let Some(fam) = raw.get("family") {
            FamilyDescriptor::from_value(fam)?;
        }
        let kind = raw
            .get("kind")
            .cloned()
            .ok_or_else(|| Error::Config("missing \"kind\"".into()))
            .and_then(|k| serde_json::from_value::<ExperimentKind>(k).map_err(Error::from))?;
        // kind-specific defaults under the explicit fields
        let mut merged = serde_json::to_value(Self::default_for(kind))?;
        if let (Some(dst), Some(src)) = (merged.as_object_mut(), raw.as_object()) {
            for (key, value) in src {
                dst.insert(key.clone(), value.clone());
            }
        }
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema_version {} is not {SCHEMA_VERSION}", self.schema_version)));
        }
        if self.q == 0 {
            return Err(Error::Config("q must be positive".into()));
        }
        if self.n_ladder.iter().any(|&n| n <= 0) || self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("N-ladder {:?} must be positive and strictly increasing", self.n_ladder)));
        }
        if self.limit_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("limit ladder must be strictly increasing".into()));
        }
        if !(self.axis_offset > 0.0) {
            return Err(Error::Config("axis offset must be positive".into()));
        }
        let partition = band_partition(self.q, self.delta).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(g) = &self.grid {
            if g.n_re == 0 || g.n_im == 0 {
                return Err(Error::Config("grid needs at least one point per axis".into()));
            }
            if g.im[0] <= 0.0 || g.im[1] <= 0.0 {
                return Err(Error::Config("grid must lie in Im z > 0".into()));
            }
            // block eigenvalues degenerate at the nodes; other kinds only need Im z > 0
            for z in g.points().into_iter().filter(|_| self.kind == ExperimentKind::TransferDiag) {
                if partition.interval_of(z.re).is_none() {
                    return Err(Error::Config(format!(
                        "grid point Re z = {} is within {} of a band node for q = {}",
                        z.re, self.delta, self.q
                    )));
                }
            }
        }
        if matches!(self.kind, ExperimentKind::RouteAgreement | ExperimentKind::TransferDiag) && self.grid.is_none() {
            return Err(Error::Config("this experiment needs a z grid".into()));
        }
        if self.kind == ExperimentKind::TransferDiag && self.n_ladder.iter().any(|&n| n % self.q as i64 != 0) {
            return Err(Error::Config("transfer N-ladder entries must be multiples of q".into()));
        }
        if let Some(p) = self.family.period() {
            if self.kind == ExperimentKind::EntropyScan && p != self.q {
                return Err(Error::Config(format!("family period {p} differs from q = {}", self.q)));
            }
        }
        Ok(())
    }
}
