//! Pipeline settings.
//!
//! Precedence, lowest first: built-in defaults, `LBC_DATA_ROOT` (dataset root
//! only), the `--config` file, command-line flags.

use std::path::{Path, PathBuf};

use lbc_core::evalcorrect::DEFAULT_KAPPA;
use lbc_core::gp::{FitOptions, MAX_TRAINING_ROWS};
use lbc_core::keypoints::{DEFAULT_GROUND_HEIGHT, DEFAULT_MIN_PLANARITY, DEFAULT_TARGET_FRACTION};
use lbc_core::odometry::{EstimatorParams, MatchNoise};
use lbc_core::pointcloud::DEFAULT_KNN_K;
use lbc_core::OdometryConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DATA_ROOT_ENV: &str = "LBC_DATA_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub keypoint_fraction: f64,
    /// Sensor-frame z below which points count as ground (m).
    pub ground_height: f64,
    pub min_planarity: f64,
    pub knn_k: usize,
    pub max_match_dist: f64,
    pub kappa: usize,
    pub point_sigma: f64,
    pub plane_sigma: f64,
    pub prior_weight: f64,
    pub gp_restarts: usize,
    pub gp_max_rows: usize,
    pub seed: u64,
    pub data_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let noise = MatchNoise::default();
        Self {
            keypoint_fraction: DEFAULT_TARGET_FRACTION,
            ground_height: DEFAULT_GROUND_HEIGHT,
            min_planarity: DEFAULT_MIN_PLANARITY,
            knn_k: DEFAULT_KNN_K,
            max_match_dist: OdometryConfig::default().max_match_dist,
            kappa: DEFAULT_KAPPA,
            point_sigma: noise.point_sigma,
            plane_sigma: noise.plane_sigma,
            prior_weight: EstimatorParams::default().prior_weight,
            gp_restarts: FitOptions::default().restarts,
            gp_max_rows: MAX_TRAINING_ROWS,
            seed: 0,
            data_root: None,
            output_dir: None,
            model_dir: None,
        }
    }
}

/// Values given on the command line; `None` leaves the lower layer in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub keypoint_fraction: Option<f64>,
    pub knn_k: Option<usize>,
    pub kappa: Option<usize>,
    pub seed: Option<u64>,
}

impl PipelineConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let bad = |e: String| CliError::Usage(format!("config {}: {e}", path.display()));
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(text).map_err(|e| bad(e.to_string())),
            Some("toml") => toml::from_str(text).map_err(|e| bad(e.to_string())),
            _ => Err(bad("expected a .toml or .json file".into())),
        }
    }

    /// Builds the effective configuration from all layers and validates it.
    pub fn load(file: Option<&Path>, env_root: Option<PathBuf>, cli: &Overrides) -> Result<Self, CliError> {
        let mut cfg = PipelineConfig {
            data_root: env_root,
            ..Default::default()
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let from_file = Self::parse(&text, path)?;
            let env_root = cfg.data_root.take();
            cfg = from_file;
            if cfg.data_root.is_none() {
                cfg.data_root = env_root;
            }
        }
        if let Some(v) = cli.keypoint_fraction {
            cfg.keypoint_fraction = v;
        }
        if let Some(v) = cli.knn_k {
            cfg.knn_k = v;
        }
        if let Some(v) = cli.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = cli.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Usage(format!("invalid configuration: {what}")))
            }
        };
        check(
            self.keypoint_fraction > 0.0 && self.keypoint_fraction <= 1.0,
            "keypoint_fraction must be in (0, 1]",
        )?;
        check(self.ground_height.is_finite(), "ground_height must be finite")?;
        check(self.min_planarity >= 1.0, "min_planarity must be at least 1")?;
        check(self.knn_k >= 3, "knn_k must be at least 3")?;
        check(
            self.max_match_dist > 0.0 && self.max_match_dist.is_finite(),
            "max_match_dist must be positive",
        )?;
        check(self.kappa >= 1, "kappa must be at least 1")?;
        check(self.point_sigma > 0.0 && self.point_sigma.is_finite(), "point_sigma must be positive")?;
        check(self.plane_sigma > 0.0 && self.plane_sigma.is_finite(), "plane_sigma must be positive")?;
        check(
            self.prior_weight >= 0.0 && self.prior_weight.is_finite(),
            "prior_weight must be non-negative",
        )?;
        check(self.gp_restarts <= 100, "gp_restarts must be at most 100")?;
        check(self.gp_max_rows >= 2, "gp_max_rows must be at least 2")?;
        Ok(())
    }

    pub fn odometry(&self) -> OdometryConfig {
        let mut cfg = OdometryConfig {
            knn_k: self.knn_k,
            max_match_dist: self.max_match_dist,
            ..Default::default()
        };
        cfg.keypoints.target_fraction = self.keypoint_fraction;
        cfg.keypoints.ground_height = self.ground_height;
        cfg.keypoints.min_planarity = self.min_planarity;
        cfg.estimator.noise = MatchNoise {
            point_sigma: self.point_sigma,
            plane_sigma: self.plane_sigma,
        };
        cfg.estimator.prior_weight = self.prior_weight;
        cfg
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            restarts: self.gp_restarts,
            seed: self.seed,
            max_rows: self.gp_max_rows,
            ..Default::default()
        }
    }

    /// A sequence argument names a directory, or a KITTI sequence id under
    /// `<data_root>/sequences/`.
    pub fn resolve_sequence(&self, arg: &str) -> PathBuf {
        self.resolve(arg, |root| root.join("sequences").join(arg))
    }

    /// A pose argument names a file, or a KITTI sequence id under `<data_root>/poses/`.
    pub fn resolve_poses(&self, arg: &str) -> PathBuf {
        self.resolve(arg, |root| root.join("poses").join(format!("{arg}.txt")))
    }

    fn resolve(&self, arg: &str, under_root: impl Fn(&Path) -> PathBuf) -> PathBuf {
        let direct = PathBuf::from(arg);
        if direct.exists() {
            return direct;
        }
        match &self.data_root {
            Some(root) if under_root(root).exists() => under_root(root),
            _ => direct,
        }
    }

    /// `explicit`, else `file_name` under the configured output directory.
    pub fn output_path(&self, explicit: Option<PathBuf>, file_name: &str) -> Result<PathBuf, CliError> {
        explicit
            .or_else(|| self.output_dir.as_ref().map(|d| d.join(file_name)))
            .ok_or_else(|| CliError::Usage(format!("no output path given for {file_name} (use --output or output_dir)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::parse("kapa = 3\n", Path::new("c.toml")).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        assert!(PipelineConfig::parse(r#"{"kapa": 3}"#, Path::new("c.json")).is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = PipelineConfig::parse("kappa = 4\n", Path::new("c.toml")).unwrap();
        assert_eq!(cfg.kappa, 4);
        assert_eq!(cfg.knn_k, DEFAULT_KNN_K);
    }

    #[test]
    fn flags_override_file_and_file_overrides_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "kappa = 4\nknn_k = 12\ndata_root = \"/from/file\"\n").unwrap();
        let cli = Overrides {
            kappa: Some(7),
            ..Default::default()
        };
        let cfg = PipelineConfig::load(Some(&path), Some("/from/env".into()), &cli).unwrap();
        assert_eq!(cfg.kappa, 7);
        assert_eq!(cfg.knn_k, 12);
        assert_eq!(cfg.data_root, Some(PathBuf::from("/from/file")));

        let cfg = PipelineConfig::load(None, Some("/from/env".into()), &cli).unwrap();
        assert_eq!(cfg.data_root, Some(PathBuf::from("/from/env")));
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let cli = Overrides {
            keypoint_fraction: Some(1.5),
            ..Default::default()
        };
        assert!(PipelineConfig::load(None, None, &cli).is_err());
        let cli = Overrides {
            kappa: Some(0),
            ..Default::default()
        };
        assert!(PipelineConfig::load(None, None, &cli).is_err());
    }

    #[test]
    fn default_odometry_config_matches_core() {
        assert_eq!(PipelineConfig::default().odometry(), OdometryConfig::default());
    }
}
