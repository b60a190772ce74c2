//! Scene configuration files.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use noisecine::liquid::FlowCalibration;
use noisecine::pipeline::{InjectionSide, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Crystal,
    Liquid,
    Img2vid,
    Layers,
    Vid2vid,
    Upscale,
    Composite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_switch")]
    pub switch: f64,
}

fn default_steps() -> usize {
    30
}

fn default_switch() -> f64 {
    0.7
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            switch: default_switch(),
        }
    }
}

/// Per-frame camera motion for the crystal method, in latent cells.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    /// Cells moved per frame, `[dx, dy]`.
    #[serde(default)]
    pub pan: [i64; 2],
    #[serde(default = "yes")]
    pub wrap: bool,
    /// Dolly: per-frame row shifts from a discretised shear.
    #[serde(default)]
    pub shear: Option<ShearConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearConfig {
    /// Latent row at and above which rows move by `far`.
    pub horizon: i64,
    /// Cells per frame for the bottom row.
    pub near: i64,
    /// Cells per frame for rows at or above the horizon.
    pub far: i64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiquidConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub kurtosis_delta: Option<f64>,
    #[serde(default)]
    pub inject_strength: f64,
    #[serde(default = "default_side")]
    pub inject_side: InjectionSide,
    #[serde(default = "yes")]
    pub wrap_x: bool,
    #[serde(default = "yes")]
    pub wrap_y: bool,
    #[serde(default = "default_velocity")]
    pub max_velocity: f64,
    #[serde(default = "default_velocity")]
    pub max_amplitude: f64,
    #[serde(default = "default_period")]
    pub period_range: [f64; 2],
}

fn default_beta() -> f64 {
    0.5
}
fn default_floor() -> f64 {
    0.7
}
fn default_side() -> InjectionSide {
    InjectionSide::Latent
}
fn default_velocity() -> f64 {
    8.0
}
fn default_period() -> [f64; 2] {
    [8.0, 32.0]
}

impl Default for LiquidConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl LiquidConfig {
    pub fn calibration(&self) -> FlowCalibration {
        FlowCalibration {
            max_velocity: self.max_velocity,
            max_amplitude: self.max_amplitude,
            period_min: self.period_range[0],
            period_max: self.period_range[1],
            ..FlowCalibration::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub image: PathBuf,
    /// Grayscale PNG, 255 opaque. Omitted means fully opaque.
    #[serde(default)]
    pub alpha: Option<PathBuf>,
    #[serde(default)]
    pub flow_map: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Mock,
    Bridge { command: String },
}

/// Output size in image px.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl Default for Size {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub method: Method,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub size: Size,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// img2img strength for img2vid, layers and vid2vid.
    #[serde(default)]
    pub strength: Option<f64>,
    #[serde(default)]
    pub track: Option<bool>,
    #[serde(default)]
    pub segmap: Option<PathBuf>,
    #[serde(default)]
    pub flow_map: Option<PathBuf>,
    #[serde(default)]
    pub source: Option<PathBuf>,
    #[serde(default)]
    pub layers: Vec<LayerConfig>,
    /// Input video frames for vid2vid.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Dense flows (NCLF dumps with 2 channels: dx, dy) between inputs.
    #[serde(default)]
    pub flows: Vec<PathBuf>,
    /// Canvas size for upscale; the canvas noise is seeded from `seed`.
    #[serde(default)]
    pub canvas: Option<Size>,
    #[serde(default)]
    pub windows: Vec<Window>,
    /// Latent-grid mask for composite.
    #[serde(default)]
    pub mask: Option<PathBuf>,
    #[serde(default)]
    pub fg_seed: Option<u64>,
    #[serde(default)]
    pub bg_seed: Option<u64>,
    #[serde(default)]
    pub combine_fraction: Option<f64>,
    #[serde(default)]
    pub crystal: CrystalConfig,
    #[serde(default)]
    pub liquid: LiquidConfig,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
}

fn default_frames() -> usize {
    16
}

/// A configuration problem, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key \"{}\": {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn missing(key: &str, method: Method) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: format!("required for method {method:?}").to_lowercase(),
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde names the key in its message; surface it as the key too
            let key = msg.split('`').nth(1).unwrap_or("<document>").to_string();
            invalid(&key, msg)
        })
    }

    /// Check method-specific requirements. Runs before any backend call.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = self.method;
        if self.frames == 0 {
            return Err(invalid("frames", "must be at least 1"));
        }
        if self.schedule.steps == 0 || self.schedule.steps > 1000 {
            return Err(invalid("schedule.steps", "must be in 1..=1000"));
        }
        if !(0.0..=1.0).contains(&self.schedule.switch) {
            return Err(invalid("schedule.switch", "must be in [0, 1]"));
        }
        if !self.size.width.is_multiple_of(8)
            || !self.size.height.is_multiple_of(8)
            || self.size.width == 0
            || self.size.height == 0
        {
            return Err(invalid(
                "size",
                "width and height must be positive multiples of 8",
            ));
        }
        if let Some(s) = self.strength {
            if !(0.0..=1.0).contains(&s) {
                return Err(invalid("strength", "must be in [0, 1]"));
            }
        }
        let needs_strength = matches!(m, Method::Img2vid | Method::Layers | Method::Vid2vid);
        if needs_strength && self.strength.is_none() {
            return Err(missing("strength", m));
        }
        match m {
            Method::Crystal => {}
            Method::Liquid => {
                if self.flow_map.is_none() {
                    return Err(missing("flow_map", m));
                }
            }
            Method::Img2vid => {
                if self.source.is_none() {
                    return Err(missing("source", m));
                }
                if self.flow_map.is_none() {
                    return Err(missing("flow_map", m));
                }
            }
            Method::Layers => {
                if self.layers.is_empty() {
                    return Err(missing("layers", m));
                }
            }
            Method::Vid2vid => {
                if self.inputs.len() < 2 {
                    return Err(invalid("inputs", "vid2vid needs at least 2 input frames"));
                }
                if self.flows.len() + 1 != self.inputs.len() {
                    return Err(invalid(
                        "flows",
                        "need exactly one flow per consecutive input pair",
                    ));
                }
            }
            Method::Upscale => {
                if self.canvas.is_none() {
                    return Err(missing("canvas", m));
                }
                if self.windows.is_empty() {
                    return Err(missing("windows", m));
                }
            }
            Method::Composite => {
                if self.mask.is_none() {
                    return Err(missing("mask", m));
                }
                match self.combine_fraction {
                    None => return Err(missing("combine_fraction", m)),
                    Some(p) if !(0.0..=1.0).contains(&p) => {
                        return Err(invalid("combine_fraction", "must be in [0, 1]"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
