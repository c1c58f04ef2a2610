//! Pipeline configuration: paths, parameters, and mode flags.
//!
//! The config round-trips losslessly through TOML. Command-line flags fill
//! in a config first; values from a `--config` file override them.

use serde::{Deserialize, Serialize};

use crate::brdf::BrdfResolution;
use crate::envlight::Mapping;
use crate::{Error, Result};

use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of MERL-format basis files (each contributes three columns).
    pub basis_dir: PathBuf,
    /// Light probe the reflectance map was observed under.
    pub probe: Option<PathBuf>,
    /// Held-out probe used for relighting previews and evaluation.
    pub relight_probe: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            basis_dir: PathBuf::from("basis"),
            probe: None,
            relight_probe: None,
            cache_dir: PathBuf::from("cache"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    /// Retained SVD dimension N.
    pub subspace_dim: usize,
    /// Mixture component count K.
    pub clusters: usize,
    /// Balancing constant of the class-prior term.
    pub lambda: f64,
    /// Seed for clustering; all pipeline randomness flows from it.
    pub seed: u64,
    /// Reflectance-map image size (square).
    pub image_size: usize,
    /// Expected BRDF table resolution of the basis files.
    pub resolution: [usize; 3],
    /// Probe texel-to-direction convention.
    pub mapping: Mapping,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            subspace_dim: 4,
            clusters: 4,
            lambda: 0.5,
            seed: 0,
            image_size: 128,
            resolution: [16, 16, 16],
            mapping: Mapping::LatLong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    /// Evaluate leave-one-out (refit clustering without the held-out
    /// material's columns). When false, eval reuses the full-basis fit.
    pub leave_one_out: bool,
    /// Include the naive and single-class baselines in reports.
    pub baselines: bool,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig {
            leave_one_out: true,
            baselines: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub params: ParamsConfig,
    pub modes: ModesConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.subspace_dim == 0 || p.subspace_dim > 64 {
            return Err(Error::Config("subspace_dim must be in 1..=64".into()));
        }
        if p.clusters == 0 || p.clusters > 64 {
            return Err(Error::Config("clusters must be in 1..=64".into()));
        }
        if !(p.lambda > 0.0 && p.lambda.is_finite()) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if p.image_size < 2 || p.image_size > 4096 {
            return Err(Error::Config("image_size must be in 2..=4096".into()));
        }
        for (axis, &r) in ["theta_h", "theta_d", "phi_d"].iter().zip(&p.resolution) {
            if r < 2 || r > 512 {
                return Err(Error::Config(format!("{axis} resolution must be in 2..=512")));
            }
        }
        Ok(())
    }

    pub fn resolution(&self) -> Result<BrdfResolution> {
        BrdfResolution::new(
            self.params.resolution[0],
            self.params.resolution[1],
            self.params.resolution[2],
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_losslessly() {
        let config = PipelineConfig::default();
        let text = config.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn custom_values_round_trip() {
        let mut config = PipelineConfig::default();
        config.paths.basis_dir = PathBuf::from("/data/merl");
        config.paths.probe = Some(PathBuf::from("probes/indoor.hdr"));
        config.params.subspace_dim = 6;
        config.params.clusters = 3;
        config.params.lambda = 0.75;
        config.params.seed = 1234567;
        config.params.image_size = 64;
        config.params.resolution = [90, 90, 180];
        config.params.mapping = Mapping::AngularMap;
        config.modes.baselines = false;
        let text = config.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let mut config = PipelineConfig::default();
        config.params.lambda = -1.0;
        assert!(config.validate().is_err());
        let mut config = PipelineConfig::default();
        config.params.subspace_dim = 0;
        assert!(config.validate().is_err());
        let mut config = PipelineConfig::default();
        config.params.image_size = 1;
        assert!(config.validate().is_err());
        assert!(PipelineConfig::from_toml("[params]\nclusters = 0\n").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(PipelineConfig::from_toml("[params]\nbogus = 1\n").is_err());
    }
}
