//! Pipeline configuration, read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::measure::MeasureConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub fusion: FusionConfig,
    pub measure: MeasureConfig,
    /// Perimeter smoothing budget in output units squared (mm² when a
    /// scale is recovered). Overrides `measure.smoothing`.
    pub alpha: Option<f64>,
    /// Components with fewer faces are reported as warnings, not measured.
    pub min_component_faces: usize,
    /// Longest side of the topographic map, pixels.
    pub topo_max_dim: u32,
    pub height_grid_size: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            fusion: FusionConfig::default(),
            measure: MeasureConfig::default(),
            alpha: None,
            min_component_faces: 1,
            topo_max_dim: 512,
            height_grid_size: 128,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        self.measure.validate()?;
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument(format!("alpha {a} must be >= 0")));
            }
        }
        if self.min_component_faces == 0 {
            return Err(Error::InvalidArgument("min_component_faces must be >= 1".into()));
        }
        if self.topo_max_dim < 64 || self.height_grid_size < 8 {
            return Err(Error::InvalidArgument("image sizes too small (topo >= 64, grid >= 8)".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Config> {
        let c: Config = serde_json::from_str(text).map_err(|e| Error::parse(path, e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_partial() {
        let c = Config::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::from_json(&s, Path::new("c.json")).unwrap(), c);
        let p = Config::from_json(r#"{"fusion": {"obliqueness_cutoff": 0.3}, "alpha": 2.0}"#, Path::new("c.json")).unwrap();
        assert_eq!(p.fusion.obliqueness_cutoff, 0.3);
        assert_eq!(p.alpha, Some(2.0));
        assert!(Config::from_json(r#"{"bogus": 1}"#, Path::new("c.json")).is_err());
        assert!(Config::from_json(r#"{"alpha": -1}"#, Path::new("c.json")).is_err());
    }
}
