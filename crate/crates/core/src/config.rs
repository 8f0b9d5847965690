//! One TOML schema for calibration and every tunable, plus conversion of
//! decoded samples into height fields.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::codec::Samples;
use crate::error::{Error, Result};
use crate::grid::{Grid, HeightField, PixelMask};
use crate::pipeline::AnalysisConfig;
use crate::planner::FLAT_SLACK_M;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Samples are heights above the table, larger is closer to the sensor.
    #[default]
    Height,
    /// Samples are sensor distances; `height = depth_offset - depth`, and a
    /// zero reading is missing.
    Depth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Metres per pixel.
    pub pitch: f64,
    /// Metres; only used for depth input.
    pub depth_offset: f64,
    pub input_kind: InputKind,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            pitch: 0.001,
            depth_offset: 0.0,
            input_kind: InputKind::Height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Widest triplet the gripper can close on, metres.
    pub aperture_m: f64,
    /// Halting threshold on total slack, metres (0.5 cm).
    pub flat_slack_m: f64,
    pub max_iters: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            aperture_m: 0.05,
            flat_slack_m: FLAT_SLACK_M,
            max_iters: 10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub calibration: CalibrationConfig,
    pub analysis: AnalysisConfig,
    pub planner: PlannerConfig,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Config> {
        let c: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.calibration;
        if !(c.pitch > 0.0 && c.pitch.is_finite()) {
            return Err(Error::Config(format!("pitch must be positive, got {}", c.pitch)));
        }
        if !c.depth_offset.is_finite() {
            return Err(Error::Config("depth_offset must be finite".into()));
        }
        let a = &self.analysis;
        if !(a.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive, got {}", a.sigma)));
        }
        if a.rank_window % 2 == 0 || a.laplace_window < 2 {
            return Err(Error::Config("rank_window must be odd and laplace_window at least 2".into()));
        }
        let p = &self.planner;
        if !(p.aperture_m > 0.0 && p.flat_slack_m > 0.0) {
            return Err(Error::Config("aperture_m and flat_slack_m must be positive".into()));
        }
        Ok(())
    }
}

/// Height field from decoded samples; missing samples become invalid pixels.
pub fn samples_to_height(s: &Samples, c: &CalibrationConfig) -> Result<HeightField> {
    let valid = PixelMask::from_fn(s.width(), s.height(), |x, y| s.get(x, y).is_some())?;
    let values = s.map(|v| match (v, c.input_kind) {
        (Some(z), InputKind::Height) => *z,
        (Some(d), InputKind::Depth) => c.depth_offset - d,
        (None, _) => 0.0,
    });
    HeightField::new(values, valid, c.pitch)
}

/// Heights as samples, invalid pixels missing.
pub fn height_to_samples(h: &HeightField) -> Samples {
    Grid::from_fn(h.width(), h.height(), |x, y| h.is_valid(x, y).then(|| h.get(x, y))).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = Config::from_toml_str(
            "[calibration]\npitch = 0.002\ninput_kind = \"depth\"\n[analysis.wrinkles]\nhough_alpha_deg = 25.0\n",
        )
        .unwrap();
        assert_eq!(c.calibration.pitch, 0.002);
        assert_eq!(c.calibration.input_kind, InputKind::Depth);
        assert_eq!(c.analysis.wrinkles.hough_alpha_deg, 25.0);
        assert_eq!(c.analysis.wrinkles.rmse_threshold, 2.0);
        assert_eq!(c.planner, PlannerConfig::default());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml_str(&c.to_toml_string().unwrap()).unwrap(), c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(Config::from_toml_str("[calibration]\npitch = -1.0\n").is_err());
        assert!(Config::from_toml_str("[calibration]\npich = 0.001\n").is_err());
        assert!(Config::from_toml_str("[analysis]\nrank_window = 4\n").is_err());
        assert!(Config::from_toml_str("not toml [").is_err());
    }

    #[test]
    fn depth_samples_become_heights() {
        let s = Grid::from_vec(3, 1, vec![Some(0.9), None, Some(1.0)]).unwrap();
        let c = CalibrationConfig {
            depth_offset: 1.0,
            input_kind: InputKind::Depth,
            ..Default::default()
        };
        let h = samples_to_height(&s, &c).unwrap();
        assert!((h.get(0, 0) - 0.1).abs() < 1e-15);
        assert!(!h.is_valid(1, 0));
        assert_eq!(h.get(2, 0), 0.0);
        assert_eq!(height_to_samples(&h).get(1, 0), &None);
        let direct = samples_to_height(&s, &CalibrationConfig::default()).unwrap();
        assert_eq!(height_to_samples(&direct), s);
    }
}
