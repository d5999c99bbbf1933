//! Optional TOML configuration. Flags override the file, the file overrides
//! the built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gmmscape::fit::EmParams;
use gmmscape::occupancy::GridParams;
use gmmscape::registration::RegistrationParams;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub fit: FitConfig,
    pub em: EmParams,
    pub registration: RegistrationParams,
    pub grid: GridParams,
    pub occupancy: OccupancyConfig,
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub bandwidth: f64,
    pub decimate: usize,
    pub depth_scale: Option<f64>,
    /// Points farther than this from the camera are dropped before fitting.
    pub max_range: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { bandwidth: 0.015, decimate: 1, depth_scale: None, max_range: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupancyConfig {
    pub num_pts: usize,
    pub max_range: f64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self { num_pts: 640 * 480, max_range: 5.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub bandwidth_count: usize,
    pub bandwidth_min: f64,
    pub bandwidth_max: f64,
    pub decimations: Vec<usize>,
    pub repetitions: usize,
    pub output: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            bandwidth_count: 10,
            bandwidth_min: 0.0135,
            bandwidth_max: 0.03,
            decimations: vec![1, 2, 4],
            repetitions: 10,
            output: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_count == 0 {
            bail!(UsageError("bandwidth count must be at least 1".into()));
        }
        if !(self.bandwidth_min < self.bandwidth_max) {
            bail!(UsageError(format!(
                "bandwidth range [{}, {}] must have min < max",
                self.bandwidth_min, self.bandwidth_max
            )));
        }
        if self.repetitions == 0 {
            bail!(UsageError("repetitions must be at least 1".into()));
        }
        if self.decimations.is_empty() || self.decimations.contains(&0) {
            bail!(UsageError("decimation factors must be a non-empty list of positive integers".into()));
        }
        Ok(())
    }

    /// Evenly spaced bandwidths from min to max inclusive; a count of one
    /// gives just the minimum.
    pub fn bandwidths(&self) -> Vec<f64> {
        let n = self.bandwidth_count;
        if n == 1 {
            return vec![self.bandwidth_min];
        }
        let step = (self.bandwidth_max - self.bandwidth_min) / (n - 1) as f64;
        (0..n).map(|i| if i + 1 == n { self.bandwidth_max } else { self.bandwidth_min + step * i as f64 }).collect()
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_grid_endpoints() {
        let b = BenchConfig::default().bandwidths();
        assert_eq!(b.len(), 10);
        assert_eq!(b[0], 0.0135);
        assert_eq!(b[9], 0.03);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("[fit]\nbandwidth = 0.02\n[grid]\nresolution = 0.1\n").unwrap();
        assert_eq!(c.fit.bandwidth, 0.02);
        assert_eq!(c.fit.decimate, 1);
        assert_eq!(c.grid.resolution, 0.1);
        assert_eq!(c.grid.dims, GridParams::default().dims);
        assert_eq!(c.em, EmParams::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("[fit]\nbandwith = 0.02\n").is_err());
    }
}
