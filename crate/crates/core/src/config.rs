//! Experiment files: one SNR sweep run on one or more arrays.
//!
//! TOML and JSON share one schema:
//!
//! ```toml
//! name = "asr"
//! arrays = ["tlna:4,4", "cpa:5,2", "ula:16"]
//! users = 8
//! snapshots = 100
//! trials = 1000
//! seed = 2024
//! covariance_mode = "exact"      # or "sample"
//! dedup_mode = "average"         # or "first_occurrence"
//!
//! [snr]                          # or snr_grid_db = [0, 5, 10]
//! start = 0.0
//! step = 5.0
//! stop = 20.0
//!
//! [angle_policy]
//! policy = "uniform"
//! min_separation_deg = 5.0
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{AnglePolicy, HALF_WAVELENGTH};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::geometry::GeometrySpec;
use crate::sim::{CovarianceMode, SimConfig};
use crate::virtualization::DedupMode;

/// Inclusive arithmetic SNR range in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrRange {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl SnrRange {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let SnrRange { start, step, stop } = *self;
        if !(start.is_finite() && step.is_finite() && stop.is_finite()) {
            return Err(Error::config("snr", "start, step and stop must be finite"));
        }
        if start == stop {
            return Ok(vec![start]);
        }
        if step == 0.0 || (stop - start).signum() != step.signum() {
            return Err(Error::config("snr.step", format!("step {step} does not move from {start} towards {stop}")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(Error::config("snr", "grid has more than 100000 points"));
        }
        // start + i·step, not a running sum, so grid values stay exact
        Ok((0..=n).map(|i| start + i as f64 * step).collect())
    }
}

impl FromStr for SnrRange {
    type Err = Error;

    /// `"start:step:stop"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                input: s.to_string(),
                position: 1,
                message: "expected start:step:stop".into(),
            });
        }
        let mut vals = [0.0; 3];
        let mut col = 1;
        for (v, p) in vals.iter_mut().zip(&parts) {
            *v = p.trim().parse().map_err(|_| Error::Parse {
                input: s.to_string(),
                position: col,
                message: format!("{p:?} is not a number"),
            })?;
            col += p.len() + 1;
        }
        Ok(SnrRange {
            start: vals[0],
            step: vals[1],
            stop: vals[2],
        })
    }
}

fn default_snapshots() -> usize {
    100
}

fn default_trials() -> usize {
    1000
}

fn default_d_over_lambda() -> f64 {
    HALF_WAVELENGTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub arrays: Vec<GeometrySpec>,
    pub users: usize,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<SnrRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_grid_db: Option<Vec<f64>>,
    #[serde(default)]
    pub constellation: Constellation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
    #[serde(default)]
    pub angle_policy: AnglePolicy,
    #[serde(default)]
    pub dedup_mode: DedupMode,
    #[serde(default)]
    pub covariance_mode: CovarianceMode,
    pub seed: u64,
    #[serde(default = "default_d_over_lambda")]
    pub d_over_lambda: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config {
            field: "<file>".into(),
            message: e.to_string().trim_end().to_string(),
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config {
            field: "<file>".into(),
            message: e.to_string(),
        })
    }

    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: "<file>".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    /// Canonical JSON used for digests: field order fixed by the struct.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("experiment config is always serializable")
    }

    pub fn snr_grid(&self) -> Result<Vec<f64>> {
        match (&self.snr, &self.snr_grid_db) {
            (Some(_), Some(_)) => Err(Error::config("snr", "give either [snr] or snr_grid_db, not both")),
            (None, None) => Err(Error::config("snr", "missing: give [snr] start/step/stop or snr_grid_db")),
            (Some(r), None) => r.grid(),
            (None, Some(g)) => Ok(g.clone()),
        }
    }

    /// One validated [`SimConfig`] per array, all sharing the seed.
    pub fn sim_configs(&self) -> Result<Vec<SimConfig>> {
        if self.arrays.is_empty() {
            return Err(Error::config("arrays", "must list at least one geometry"));
        }
        let grid = self.snr_grid()?;
        self.arrays
            .iter()
            .map(|g| {
                let c = SimConfig {
                    geometry: g.clone(),
                    users: self.users,
                    snapshots: self.snapshots,
                    trials: self.trials,
                    snr_grid_db: grid.clone(),
                    constellation: self.constellation,
                    powers: self.powers.clone(),
                    angle_policy: self.angle_policy.clone(),
                    dedup_mode: self.dedup_mode,
                    covariance_mode: self.covariance_mode,
                    seed: self.seed,
                    d_over_lambda: self.d_over_lambda,
                };
                c.validate().map_err(|e| match e {
                    Error::Config { field, message } => Error::Config {
                        field,
                        message: format!("{message} (array {g})"),
                    },
                    other => other,
                })?;
                Ok(c)
            })
            .collect()
    }
}
