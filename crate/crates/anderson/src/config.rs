//! Plain-text (TOML) experiment configuration.
//!
//! Key set:
//!
//! ```toml
//! experiment = "renorm"            # experiment name
//! r_schedule = [0.0625, 0.03125]   # regularization times
//! samples = 10000                  # Monte Carlo sample count (0 = experiment default)
//!
//! [grid]
//! l = 6.283185307179586            # side length
//! n = 64                           # grid size (even)
//!
//! [seeds]
//! first = 0
//! count = 200
//!
//! [z0]                             # policy = "auto" | "fixed" (with value)
//! policy = "fixed"
//! value = 0.05
//!
//! [c]                              # policy = "ground-state" (c = 1 - lambda_0) | "fixed" (with value)
//! policy = "ground-state"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Unknown keys are rejected, and every unknown key is named in the error.

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use serde::{Deserialize, Serialize};

/// Grid section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Side length.
    pub l: f64,
    /// Grid size.
    pub n: usize,
}

/// Contiguous seed range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    /// First seed.
    pub first: u64,
    /// Number of seeds.
    pub count: u64,
}

impl SeedRange {
    /// The seeds.
    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.first..self.first + self.count
    }
}

impl Default for SeedRange {
    fn default() -> Self {
        Self { first: 0, count: 1 }
    }
}

/// Choice of the resolvent shift `z0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", content = "value", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Z0Policy {
    /// Smallest power-of-two multiple of 1 with contraction norm below 1/2.
    #[default]
    Auto,
    /// Fixed value.
    Fixed(f64),
}

/// Choice of the mass shift `c` for free fields and loop measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", content = "value", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MassPolicy {
    /// `c = 1 - lambda_0`, so the shifted ground energy is 1.
    #[default]
    GroundState,
    /// Fixed value.
    Fixed(f64),
}

/// Output section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory.
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// A fully specified experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment name.
    pub experiment: String,
    /// Regularization schedule.
    #[serde(default)]
    pub r_schedule: Vec<f64>,
    /// Monte Carlo sample count (0 selects the experiment default).
    #[serde(default)]
    pub samples: usize,
    /// Grid.
    pub grid: GridConfig,
    /// Seeds.
    #[serde(default)]
    pub seeds: SeedRange,
    /// Shift policy.
    #[serde(default)]
    pub z0: Z0Policy,
    /// Mass policy.
    #[serde(default)]
    pub c: MassPolicy,
    /// Output paths.
    #[serde(default)]
    pub output: OutputConfig,
}

const TOP_KEYS: &[&str] = &["experiment", "r_schedule", "samples", "grid", "seeds", "z0", "c", "output"];
const SECTION_KEYS: &[(&str, &[&str])] = &[
    ("grid", &["l", "n"]),
    ("seeds", &["first", "count"]),
    ("z0", &["policy", "value"]),
    ("c", &["policy", "value"]),
    ("output", &["dir"]),
];

impl ExperimentConfig {
    /// Parse TOML, listing every unknown key before attempting to decode.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Format(format!("config is not valid TOML: {e}")))?;
        let mut unknown = Vec::new();
        for (key, value) in &table {
            if !TOP_KEYS.contains(&key.as_str()) {
                unknown.push(key.clone());
                continue;
            }
            if let (Some((_, allowed)), Some(sub)) = (SECTION_KEYS.iter().find(|(s, _)| s == key), value.as_table()) {
                unknown.extend(sub.keys().filter(|k| !allowed.contains(&k.as_str())).map(|k| format!("{key}.{k}")));
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Format(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Check value ranges.
    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.grid.l, self.grid.n)?;
        if let Some(r) = self.r_schedule.iter().find(|r| !(**r > 0.0)) {
            return Err(Error::InvalidArgument(format!("r_schedule entries must be positive, got {r}")));
        }
        if let Z0Policy::Fixed(z) = self.z0 {
            if !(z > 0.0) {
                return Err(Error::InvalidArgument(format!("z0 must be positive, got {z}")));
            }
        }
        Ok(())
    }

    /// The grid.
    pub fn torus(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.l, self.grid.n)
    }

    /// Header lines (`# ...`) embedding the code version and resolved config.
    pub fn header(&self) -> String {
        let mut s = format!("# anderson {}\n", env!("CARGO_PKG_VERSION"));
        for line in self.to_toml().lines().filter(|l| !l.trim().is_empty()) {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}
