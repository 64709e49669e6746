//! Experiment configuration: strict JSON, unknown keys rejected, defaults
//! resolved before hashing so the manifest hash covers them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, TruncationSpec};

/// Scales and lags used when the config leaves truncation on auto.
pub const AUTO_K_MAX: u32 = 64;
pub const AUTO_LAG_MAX: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SimulateField,
    Decompose,
    CheckConditions,
    Counterexample,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyConfig {
    Superlinear { alpha: f64 },
    L1NotL2,
    Iid { v: f64, p: f64 },
    Zero,
    /// Column model of the tower counterexample (condition checks only).
    Tower { k: u32 },
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig::Superlinear { alpha: 5.0 }
    }
}

impl FamilyConfig {
    /// The coefficient field, or `None` for the tower.
    pub fn field(&self) -> Result<Option<CoefficientField>> {
        Ok(Some(match *self {
            FamilyConfig::Superlinear { alpha } => CoefficientField::superlinear(alpha)?,
            FamilyConfig::L1NotL2 => CoefficientField::l1_not_l2(),
            FamilyConfig::Iid { v, p } => CoefficientField::iid(v, p)?,
            FamilyConfig::Zero => CoefficientField::zero(),
            FamilyConfig::Tower { .. } => return Ok(None),
        }))
    }
}

/// `null` entries mean "auto".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default)]
    pub k_max: Option<u32>,
    #[serde(default)]
    pub lag_max: Option<u32>,
}

impl TruncationConfig {
    pub fn resolve(&self, field: &CoefficientField) -> TruncationSpec {
        TruncationSpec::for_field(field, self.k_max.unwrap_or(AUTO_K_MAX), self.lag_max.unwrap_or(AUTO_LAG_MAX))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    #[serde(default = "default_tower_k")]
    pub k: u32,
    /// Defaults to `2 n_k`.
    #[serde(default)]
    pub n1: Option<u64>,
    /// Defaults to `m_k`.
    #[serde(default)]
    pub n2: Option<u64>,
    /// Row lengths for the degeneracy sweep at `n2 = m_k`.
    #[serde(default = "default_n1_grid")]
    pub n1_grid: Vec<u64>,
    #[serde(default = "default_schedule_levels")]
    pub schedule_levels: u32,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            k: default_tower_k(),
            n1: None,
            n2: None,
            n1_grid: default_n1_grid(),
            schedule_levels: default_schedule_levels(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" => Ok(OutputFormat::Svg),
            other => Err(Error::ConfigInvalid { path: "formats".into(), message: format!("unknown format `{other}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    /// Windows `[n1, n2]` for field simulation.
    #[serde(default = "default_windows")]
    pub windows: Vec<[u64; 2]>,
    /// Dyadic grid for the condition checks.
    #[serde(default = "default_levels")]
    pub levels: Vec<u64>,
    #[serde(default = "default_replications")]
    pub replications: u64,
    /// Shifts `l` for the coboundary growth curve.
    #[serde(default = "default_ells")]
    pub ells: Vec<u64>,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Write one CSV row per replication.
    #[serde(default)]
    pub save_samples: bool,
    #[serde(default = "default_memory_cap")]
    pub memory_cap_bytes: u64,
}

fn default_tower_k() -> u32 {
    10
}
fn default_n1_grid() -> Vec<u64> {
    (7..=12).map(|e| 1u64 << e).collect()
}
fn default_schedule_levels() -> u32 {
    3
}
fn default_windows() -> Vec<[u64; 2]> {
    vec![[64, 64], [128, 128], [256, 256]]
}
fn default_levels() -> Vec<u64> {
    vec![16, 32, 64, 128, 256]
}
fn default_replications() -> u64 {
    2000
}
fn default_ells() -> Vec<u64> {
    (1..=14).map(|e| 1u64 << e).collect()
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}
fn default_memory_cap() -> u64 {
    crate::weights::DEFAULT_MEMORY_CAP as u64
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::ConfigInvalid {
                path: "experiment".into(),
                message: "empty config; the required key `experiment` is missing".into(),
            });
        }
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let mut path = e.path().to_string();
            let message = e.inner().to_string();
            if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
                path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            }
            Error::ConfigInvalid { path, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| Err(Error::ConfigInvalid { path: path.into(), message: message.into() });
        if self.replications < 2 {
            return bad("replications", "need at least 2 replications");
        }
        if self.windows.iter().any(|w| w[0] == 0 || w[1] == 0) {
            return bad("windows", "window sides must be >= 1");
        }
        if self.levels.len() < 2 || self.levels.windows(2).any(|w| w[0] >= w[1]) || self.levels[0] == 0 {
            return bad("levels", "need at least two strictly increasing positive levels");
        }
        if self.ells.contains(&0) {
            return bad("ells", "shifts must be >= 1");
        }
        if self.formats.is_empty() {
            return bad("formats", "at least one output format is required");
        }
        if let Err(e) = self.family.field() {
            return bad("family", &e.to_string());
        }
        if matches!(self.family, FamilyConfig::Tower { .. }) && self.experiment != ExperimentKind::CheckConditions {
            return bad("family", "the tower family is only available for check-conditions");
        }
        if self.counterexample.k < 3 || self.counterexample.k > crate::tower::MAX_LEVEL_K {
            return bad("counterexample.k", "tower scale must lie in 3..=40");
        }
        Ok(())
    }

    /// Canonical JSON of the full config, defaults included.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}
