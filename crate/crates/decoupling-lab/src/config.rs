//! JSON run configuration and the canonical content hash that keys the
//! result cache.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::{Campaign, SweepConfig, DEFAULT_BUDGET};
use crate::params::BaseParams;
use crate::{Error, Result};

/// On-disk run request.  Unknown fields are rejected so typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RunConfig {
    pub d: usize,
    pub sigma: f64,
    #[serde(default)]
    pub r_list: Option<Vec<f64>>,
    #[serde(default)]
    pub cd: Option<f64>,
    #[serde(default)]
    pub quad_order: Option<usize>,
    #[serde(default)]
    pub sample_spacing: Option<f64>,
    #[serde(default)]
    pub eps_slack: Option<f64>,
    #[serde(default)]
    pub packet_threshold: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub campaigns: Option<Vec<Campaign>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub no_cache: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fold the options over the defaults into a validated sweep.
    pub fn into_sweep(&self) -> Result<SweepConfig> {
        let mut defaults = SweepConfig::default_for(self.d, self.sigma)?;
        let mut base = BaseParams::new(self.d, self.sigma);
        if let Some(cd) = self.cd {
            base.cd = cd;
        }
        if let Some(q) = self.quad_order {
            base.quad_order = q;
        }
        if let Some(s) = self.sample_spacing {
            base.sample_spacing = s;
        }
        if let Some(e) = self.eps_slack {
            base.eps_slack = e;
        }
        if let Some(t) = self.packet_threshold {
            base.packet_threshold = t;
        }
        defaults.base = base;
        if let Some(r_list) = &self.r_list {
            defaults.r_list = r_list.clone();
        }
        if let Some(c) = &self.campaigns {
            defaults.campaigns = c.clone();
        }
        if let Some(s) = self.seed {
            defaults.seed = s;
        }
        defaults.budget = self.budget.unwrap_or(DEFAULT_BUDGET);
        defaults.validate()?;
        Ok(defaults)
    }
}

/// Hex SHA-256 of the canonical JSON encoding of a sweep.  Output and
/// cache locations never enter a sweep, so relocating results keeps the
/// key stable.
pub fn config_hash(sweep: &SweepConfig) -> String {
    let bytes = serde_json::to_vec(sweep).expect("sweep serializes");
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
