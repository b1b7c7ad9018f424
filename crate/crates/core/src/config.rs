//! Flat tracker configuration shared by the library, the CLI and the C API.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::background::LearningRates;
use crate::blocks::GroupingParams;
use crate::color_names::BASE_LABELS;
use crate::error::{Error, Result};
use crate::graded::GradedParams;
use crate::meanshift::KernelProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub k_sigma: f64,
    pub sigma_floor: f64,
    pub alpha_bg: f64,
    pub alpha_fg: f64,
    pub init_frames: usize,
    pub hist_bins: usize,

    pub block_size: usize,
    pub theta: f64,
    pub search_radius: usize,
    pub motion_tol: f64,
    pub min_group_blocks: usize,

    pub k_labels: usize,
    pub entropy_c: f64,
    pub palette_file: Option<PathBuf>,

    pub kernel: KernelProfile,
    pub bandwidth_scale: f64,
    pub ms_eps: f64,
    pub ms_max_iters: usize,

    pub lambda_min: f64,
    pub lambda_max: f64,
    pub min_search_radius: f64,
    pub conf_threshold: f64,
    pub component_floor: f64,
    pub step0: u32,
    pub max_evals: usize,

    pub max_misses: usize,
    pub template_update_conf: f64,
    pub iou_assoc_threshold: f64,
    /// Consecutive frames a candidate must persist before it gets a track.
    pub warmup_frames: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            k_sigma: 2.0,
            sigma_floor: 0.01,
            alpha_bg: 0.05,
            alpha_fg: 0.005,
            init_frames: 10,
            hist_bins: 32,
            block_size: 16,
            theta: 0.1,
            search_radius: 8,
            motion_tol: 2.0,
            min_group_blocks: 2,
            k_labels: 6,
            entropy_c: 1.0,
            palette_file: None,
            kernel: KernelProfile::Epanechnikov,
            bandwidth_scale: 1.0,
            ms_eps: 0.5,
            ms_max_iters: 20,
            lambda_min: 0.5,
            lambda_max: 2.0,
            min_search_radius: 3.0,
            conf_threshold: 0.5,
            component_floor: 0.3,
            step0: 2,
            max_evals: 200,
            max_misses: 10,
            template_update_conf: 0.8,
            iou_assoc_threshold: 0.3,
            warmup_frames: 3,
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn unit(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(bad(key, format!("must lie in [0, 1], got {v}")))
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive, got {v}")))
    }
}

impl TrackerConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: TrackerConfig = serde_json::from_str(text).map_err(|e| bad("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Apply `key=value` overrides. Values are read as JSON, falling back to
    /// a plain string (so `kernel=gaussian` works unquoted).
    pub fn apply_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        let map = value.as_object_mut().expect("config serializes to an object");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| bad(o, "override must have the form key=value"))?;
            let key = key.trim();
            if !map.contains_key(key) {
                return Err(bad(key, "unknown configuration key"));
            }
            let raw = raw.trim();
            let v = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            map.insert(key.to_string(), v);
        }
        let cfg: TrackerConfig = serde_json::from_value(value).map_err(|e| bad("override", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        positive("k_sigma", self.k_sigma)?;
        positive("sigma_floor", self.sigma_floor)?;
        self.learning_rates()?;
        if self.init_frames < 2 {
            return Err(bad("init_frames", "at least 2 frames are needed to bootstrap"));
        }
        if self.hist_bins == 0 {
            return Err(bad("hist_bins", "must be positive"));
        }
        if self.block_size < 4 {
            return Err(bad("block_size", format!("must be at least 4, got {}", self.block_size)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(bad("theta", format!("must lie in (0, 1), got {}", self.theta)));
        }
        if self.motion_tol < 0.0 || !self.motion_tol.is_finite() {
            return Err(bad("motion_tol", "must be non-negative"));
        }
        if self.min_group_blocks == 0 {
            return Err(bad("min_group_blocks", "must be positive"));
        }
        if self.k_labels == 0 || self.k_labels > BASE_LABELS {
            return Err(bad("k_labels", format!("must lie in 1..={BASE_LABELS}, got {}", self.k_labels)));
        }
        positive("entropy_c", self.entropy_c)?;
        positive("bandwidth_scale", self.bandwidth_scale)?;
        positive("ms_eps", self.ms_eps)?;
        positive("lambda_min", self.lambda_min)?;
        if !(self.lambda_min < self.lambda_max) || !self.lambda_max.is_finite() {
            return Err(bad("lambda_max", "must exceed lambda_min"));
        }
        positive("min_search_radius", self.min_search_radius)?;
        unit("conf_threshold", self.conf_threshold)?;
        unit("component_floor", self.component_floor)?;
        if self.step0 == 0 {
            return Err(bad("step0", "must be positive"));
        }
        if self.max_evals == 0 {
            return Err(bad("max_evals", "must be positive"));
        }
        unit("template_update_conf", self.template_update_conf)?;
        unit("iou_assoc_threshold", self.iou_assoc_threshold)?;
        if self.warmup_frames == 0 {
            return Err(bad("warmup_frames", "must be positive"));
        }
        if let Some(p) = &self.palette_file {
            if !p.is_file() {
                return Err(bad("palette_file", format!("{} is not a readable file", p.display())));
            }
        }
        Ok(())
    }

    pub fn learning_rates(&self) -> Result<LearningRates> {
        LearningRates::new(self.alpha_bg, self.alpha_fg)
    }

    pub fn grouping(&self) -> GroupingParams {
        GroupingParams {
            motion_tol: self.motion_tol,
            min_group_blocks: self.min_group_blocks,
        }
    }

    pub fn graded(&self) -> GradedParams {
        GradedParams {
            component_floor: self.component_floor,
            step0: self.step0,
            max_evals: self.max_evals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrackerConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = TrackerConfig::from_json_str(r#"{"k_sigma": 3.0, "kernel": "gaussian"}"#).unwrap();
        assert_eq!(c.k_sigma, 3.0);
        assert_eq!(c.kernel, KernelProfile::Gaussian);
        assert_eq!(c.block_size, 16);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(TrackerConfig::from_json_str(r#"{"k_sigmaa": 3.0}"#).is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        for json in [
            r#"{"theta": 1.5}"#,
            r#"{"alpha_fg": 0.5, "alpha_bg": 0.1}"#,
            r#"{"lambda_min": 2.0, "lambda_max": 1.0}"#,
            r#"{"k_labels": 12}"#,
            r#"{"init_frames": 1}"#,
        ] {
            let err = TrackerConfig::from_json_str(json).unwrap_err();
            assert!(matches!(err, Error::Config { .. }), "{json}: {err}");
        }
    }

    #[test]
    fn overrides_take_precedence() {
        let c = TrackerConfig::default()
            .apply_overrides(&["theta=0.2", "kernel=gaussian", "init_frames = 20"])
            .unwrap();
        assert_eq!(c.theta, 0.2);
        assert_eq!(c.kernel, KernelProfile::Gaussian);
        assert_eq!(c.init_frames, 20);
        assert!(TrackerConfig::default().apply_overrides(&["nope=1"]).is_err());
        assert!(TrackerConfig::default().apply_overrides(&["theta"]).is_err());
        assert!(TrackerConfig::default().apply_overrides(&["theta=2"]).is_err());
    }
}
