//! Run configuration shared by the CLI, `--config` files and `run_meta.json`.

use std::path::{Path, PathBuf};

use imo_core::filter::{FilterConfig, InitialStd, CHI2_3DOF_999};
use imo_core::sim::NoiseParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Serialized form of [`NoiseParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    pub accel: f64,
    pub gyro: f64,
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
    pub measurement: f64,
}

impl From<NoiseParams> for Noise {
    fn from(n: NoiseParams) -> Self {
        Self {
            accel: n.accel,
            gyro: n.gyro,
            accel_bias_walk: n.accel_bias_walk,
            gyro_bias_walk: n.gyro_bias_walk,
            measurement: n.measurement,
        }
    }
}

impl From<Noise> for NoiseParams {
    fn from(n: Noise) -> Self {
        Self {
            accel: n.accel,
            gyro: n.gyro,
            accel_bias_walk: n.accel_bias_walk,
            gyro_bias_walk: n.gyro_bias_walk,
            measurement: n.measurement,
        }
    }
}

/// Per-field noise overrides; unset fields come from the dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gyro: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel_bias_walk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gyro_bias_walk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<f64>,
}

impl NoiseOverrides {
    pub fn apply(&self, base: NoiseParams) -> NoiseParams {
        NoiseParams {
            accel: self.accel.unwrap_or(base.accel),
            gyro: self.gyro.unwrap_or(base.gyro),
            accel_bias_walk: self.accel_bias_walk.unwrap_or(base.accel_bias_walk),
            gyro_bias_walk: self.gyro_bias_walk.unwrap_or(base.gyro_bias_walk),
            measurement: self.measurement.unwrap_or(base.measurement),
        }
    }

    pub fn all(n: NoiseParams) -> Self {
        Self {
            accel: Some(n.accel),
            gyro: Some(n.gyro),
            accel_bias_walk: Some(n.accel_bias_walk),
            gyro_bias_walk: Some(n.gyro_bias_walk),
            measurement: Some(n.measurement),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Oracle,
    Model,
    Tcn,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Displacements update the filter.
    #[default]
    Filter,
    /// Displacements over disjoint windows are chained, no filter.
    Concat,
}

/// Source of orientation and velocity for the thrust-model provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelInputs {
    #[default]
    Gt,
    Filter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub provider: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub model_inputs: ModelInputs,
    #[serde(default)]
    pub noise: NoiseOverrides,
    /// Hz
    pub update_rate: f64,
    /// s
    pub window: f64,
    pub clones: usize,
    pub gating: bool,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.provider == ProviderKind::Tcn && self.weights.is_none() {
            return Err("provider tcn requires --weights".into());
        }
        if self.mode == Mode::Concat {
            if self.provider == ProviderKind::None {
                return Err("concat mode needs a displacement provider".into());
            }
            if self.model_inputs == ModelInputs::Filter {
                return Err("concat mode has no filter to take model inputs from".into());
            }
        }
        if !(self.update_rate > 0.0) || !(self.window > 0.0) {
            return Err("update rate and window must be positive".into());
        }
        let span = self.window * self.update_rate;
        if (span - self.clones as f64).abs() > 1e-9 {
            return Err(format!(
                "window × update rate = {span} must equal the clone count {}",
                self.clones
            ));
        }
        Ok(())
    }

    /// Filter settings given the dataset's noise parameters.
    pub fn filter_config(&self, dataset_noise: NoiseParams) -> FilterConfig {
        FilterConfig {
            noise: self.noise.apply(dataset_noise),
            update_rate: self.update_rate,
            window: self.window,
            max_clones: self.clones,
            gate: self.gating.then_some(CHI2_3DOF_999),
            initial_std: InitialStd::default(),
            ..FilterConfig::default()
        }
    }

    /// Overlays a JSON config on `self`. A `run_meta.json` is accepted as is:
    /// its `config` object is used.
    pub fn overlay(&self, doc: &Value) -> Result<Self, String> {
        let doc = match doc.get("config") {
            Some(inner) => inner,
            None => doc,
        };
        let Value::Object(patch) = doc else {
            return Err("config must be a JSON object".into());
        };
        let mut base = serde_json::to_value(self).map_err(|e| e.to_string())?;
        let target = base.as_object_mut().expect("RunConfig serializes to an object");
        for (k, v) in patch {
            match (k.as_str(), target.get_mut(k), v) {
                ("noise", Some(Value::Object(dst)), Value::Object(src)) => {
                    dst.extend(src.clone());
                }
                _ => {
                    target.insert(k.clone(), v.clone());
                }
            }
        }
        serde_json::from_value(base).map_err(|e| e.to_string())
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        self.overlay(&doc).map_err(|e| format!("{}: {e}", path.display()))
    }
}
