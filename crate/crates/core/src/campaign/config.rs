use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, DEFAULT_REFINEMENT_FACTOR, MAX_REFINEMENT_LEVELS};
use crate::pulse::{enumerate_sweep, validate_parameters, ParameterLimits, PulseParameters, SweepSpec};
use crate::target::{SimTarget, TargetConfig, DEFAULT_TIMEOUT_MS};

fn default_threshold() -> f64 {
    0.25
}
fn default_factor() -> u32 {
    DEFAULT_REFINEMENT_FACTOR
}
fn default_levels() -> u32 {
    MAX_REFINEMENT_LEVELS
}
fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Fault rate at or above which a cell is refined.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_factor")]
    pub factor: u32,
    /// Refinement rounds after the coarse scan; 0 disables refinement.
    #[serde(default = "default_levels")]
    pub max_levels: u32,
    /// Refine only the parameter point with the most faults on the parent layer.
    #[serde(default)]
    pub refine_best_param_only: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            threshold: default_threshold(),
            factor: default_factor(),
            max_levels: default_levels(),
            refine_best_param_only: false,
        }
    }
}

impl RefinementConfig {
    pub fn disabled() -> Self {
        RefinementConfig { max_levels: 0, ..Self::default() }
    }
}

/// Everything needed to reproduce a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub seed: u64,
    /// Firmware build running on the target, recorded for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firmware_version: Option<String>,
    /// Free-form lab conditions (supply voltage, temperature, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub environment: BTreeMap<String, String>,
    pub grid: GridSpec,
    /// Probe heights to scan; empty means only `grid.z`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heights_mm: Vec<f64>,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
    pub target: TargetConfig,
    #[serde(default)]
    pub limits: ParameterLimits,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: CampaignConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::domain(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.campaign_id.is_empty()
            || !self.campaign_id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
        {
            return Err(Error::validation("campaign_id", "must be non-empty and use only [A-Za-z0-9_.-]"));
        }
        self.grid.validate()?;
        for &h in &self.heights_mm {
            if !h.is_finite() || h < 0.0 {
                return Err(Error::validation("heights_mm", format!("{h} must be finite and >= 0")));
            }
        }
        let r = &self.refinement;
        if !(0.0..=1.0).contains(&r.threshold) {
            return Err(Error::validation("refinement.threshold", "must be in [0, 1]"));
        }
        if r.factor < 2 {
            return Err(Error::validation("refinement.factor", "must be >= 2"));
        }
        if r.max_levels > MAX_REFINEMENT_LEVELS {
            return Err(Error::validation("refinement.max_levels", format!("at most {MAX_REFINEMENT_LEVELS}")));
        }
        self.sweep.validate()?;
        self.limits.validate()?;
        for p in enumerate_sweep(&self.sweep)? {
            let v = validate_parameters(&p, &self.limits);
            if !v.is_empty() {
                let list: Vec<String> = v.iter().map(ToString::to_string).collect();
                return Err(Error::validation("sweep", format!("outside limits: {}", list.join("; "))));
            }
        }
        self.target.validate()?;
        if self.timeout_ms == 0 {
            return Err(Error::validation("timeout_ms", "must be >= 1"));
        }
        Ok(())
    }

    pub fn parameter_points(&self) -> Result<Vec<PulseParameters>> {
        enumerate_sweep(&self.sweep)
    }

    /// One coarse grid per scanned height.
    pub fn coarse_grids(&self) -> Vec<GridSpec> {
        if self.heights_mm.is_empty() {
            vec![self.grid]
        } else {
            self.heights_mm.iter().map(|&z| GridSpec { z, ..self.grid }).collect()
        }
    }

    pub fn build_target(&self) -> Result<SimTarget> {
        self.target.build(self.timeout_ms)
    }

    /// Hex digest of the canonical JSON form, stamped into every record.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(canon.as_bytes())[..8])
    }
}
