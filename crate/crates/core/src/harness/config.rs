//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown and repeated keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::colour::BinningConfig;
use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, CylinderParams};
use crate::orientation_filter::OrientationFilterConfig;
use crate::selfloc::{FieldMap, SelfLocConfig};
use crate::sim::{InitKind, Motion, Scenario, ScenarioKind, SensorNoise, TextureSpec, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureMode {
    Asymmetric,
    Periodic,
}

/// A value that can appear on the right of `=`.
trait Value: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn format_value(&self) -> String;
}

macro_rules! numeric_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| format!("'{s}': {e}"))
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

numeric_value!(i32, u32, u64, usize);

impl Value for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("'{s}': {e}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("'{s}' is not finite"))
        }
    }
    fn format_value(&self) -> String {
        format!("{self:?}")
    }
}

impl Value for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("'{s}' is not true or false")),
        }
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

impl Value for Option<f64> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn format_value(&self) -> String {
        self.map_or_else(|| "none".to_string(), |v| v.format_value())
    }
}

impl Value for TextureMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "asymmetric" => Ok(TextureMode::Asymmetric),
            "periodic" => Ok(TextureMode::Periodic),
            _ => Err(format!("'{s}' is not asymmetric or periodic")),
        }
    }
    fn format_value(&self) -> String {
        match self {
            TextureMode::Asymmetric => "asymmetric",
            TextureMode::Periodic => "periodic",
        }
        .to_string()
    }
}

impl Value for InitKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        InitKind::parse(s).ok_or_else(|| format!("'{s}' is not correct or reflected"))
    }
    fn format_value(&self) -> String {
        self.as_str().to_string()
    }
}

impl Value for Vec<ScenarioKind> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| ScenarioKind::parse(p).ok_or_else(|| format!("unknown scenario '{p}'")))
            .collect()
    }
    fn format_value(&self) -> String {
        self.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")
    }
}

macro_rules! config {
    ($($key:literal => $field:ident : $ty:ty = $default:expr;)*) => {
        /// Every tunable of a run, in configuration-file units.
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $(pub $field: $ty,)*
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl Config {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $($key => self.$field = <$ty as Value>::parse_value(value)?,)*
                    _ => return Err(format!("unknown key '{key}'")),
                }
                Ok(())
            }

            /// `(key, value)` pairs in canonical order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, Value::format_value(&self.$field)),)*]
            }
        }
    };
}

config! {
    "colour.c1" => colour_c1: i32 = 16;
    "colour.c2" => colour_c2: i32 = 32;
    "colour.c3" => colour_c3: i32 = 64;
    "colour.sigma0" => colour_sigma0: f64 = 1e-3;
    "wall.radius" => wall_radius: f64 = 4.5;
    "wall.rows" => wall_rows: usize = 2;
    "wall.cols" => wall_cols: usize = 36;
    "wall.z_min" => wall_z_min: f64 = 0.4;
    "wall.z_max" => wall_z_max: f64 = 1.6;
    "camera.hfov_deg" => camera_hfov_deg: f64 = 60.0;
    "camera.width" => camera_width: u32 = 640;
    "camera.height" => camera_height: u32 = 480;
    "camera.grazing_deg" => camera_grazing_deg: f64 = 75.0;
    "camera.mount_height" => camera_mount_height: f64 = 0.45;
    "model.n_param" => model_n_param: u32 = 20;
    "filter.count" => filter_count: usize = 200;
    "filter.noise_std" => filter_noise_std: f64 = 0.03;
    "filter.inject_fraction" => filter_inject_fraction: f64 = 0.05;
    "filter.epsilon" => filter_epsilon: f64 = 0.01;
    "filter.cluster_window" => filter_cluster_window: f64 = 0.35;
    "confidence.fov_deg" => confidence_fov_deg: f64 = 60.0;
    "confidence.window" => confidence_window: usize = 15;
    "bc.flip_margin" => bc_flip_margin: f64 = 0.25;
    "bc.purge_margin" => bc_purge_margin: f64 = 0.25;
    "bc.hold_frames" => bc_hold_frames: u32 = 10;
    "bc.cooldown_frames" => bc_cooldown_frames: u32 = 30;
    "bc.train_margin" => bc_train_margin: f64 = 0.15;
    "selfloc.count" => selfloc_count: usize = 100;
    "selfloc.noise_forward" => selfloc_noise_forward: f64 = 0.02;
    "selfloc.noise_left" => selfloc_noise_left: f64 = 0.02;
    "selfloc.noise_turn" => selfloc_noise_turn: f64 = 0.01;
    "selfloc.purge_radius" => selfloc_purge_radius: f64 = 1.0;
    "selfloc.heading_scale" => selfloc_heading_scale: f64 = 1.0;
    "selfloc.multimodal_threshold" => selfloc_multimodal_threshold: f64 = 0.2;
    "selfloc.init_pos_std" => selfloc_init_pos_std: f64 = 0.1;
    "selfloc.init_heading_std" => selfloc_init_heading_std: f64 = 0.05;
    "field.length" => field_length: f64 = 6.0;
    "field.width" => field_width: f64 = 4.0;
    "sim.frame_rate" => sim_frame_rate: f64 = 10.0;
    "sim.duration_s" => sim_duration_s: f64 = 200.0;
    "sim.samples_per_tile" => sim_samples_per_tile: usize = 64;
    "sim.chroma_noise" => sim_chroma_noise: f64 = 4.0;
    "sim.texture" => sim_texture: TextureMode = TextureMode::Asymmetric;
    "sim.patches" => sim_patches: usize = 12;
    "sim.odometry_noise" => sim_odometry_noise: f64 = 0.1;
    "sim.range_noise" => sim_range_noise: f64 = 0.1;
    "sim.range_noise_fraction" => sim_range_noise_fraction: f64 = 0.05;
    "sim.bearing_noise" => sim_bearing_noise: f64 = 0.05;
    "sim.max_range" => sim_max_range: f64 = 5.0;
    "sim.fall_s" => sim_fall_s: Option<f64> = None;
    "sim.head_amplitude_deg" => sim_head_amplitude_deg: f64 = 60.0;
    "sim.head_rate_deg" => sim_head_rate_deg: f64 = 20.0;
    "sim.walk_speed" => sim_walk_speed: f64 = 0.15;
    "experiment.seed" => experiment_seed: u64 = 1;
    "experiment.trials" => experiment_trials: usize = 20;
    "experiment.scenarios" => experiment_scenarios: Vec<ScenarioKind> = vec![ScenarioKind::HeadOnly];
    "experiment.init" => experiment_init: InitKind = InitKind::ReflectedPose;
    "experiment.control" => experiment_control: bool = false;
    "experiment.warmup_s" => experiment_warmup_s: f64 = 30.0;
    "experiment.post_signal_s" => experiment_post_signal_s: f64 = 10.0;
}

impl Config {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config { line, message };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(err(format!("duplicate key '{key}'")));
            }
            cfg.set(key, value).map_err(err)?;
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; parses back to an equal `Config`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Checks every derived component and the run-level settings.
    pub fn validate(&self) -> Result<()> {
        self.binning()?;
        if !(self.colour_sigma0 > 0.0 && self.colour_sigma0.is_finite()) {
            return Err(Error::invalid("colour.sigma0 must be positive"));
        }
        self.world(0).validate()?;
        if self.model_n_param == 0 {
            return Err(Error::invalid("model.n_param must be at least 1"));
        }
        self.filter().validate()?;
        if !(self.confidence_fov_deg > 0.0 && self.confidence_fov_deg < 180.0) {
            return Err(Error::invalid("confidence.fov_deg must lie in (0, 180)"));
        }
        if self.confidence_window == 0 {
            return Err(Error::invalid("confidence.window must be at least 1"));
        }
        self.controller().validate()?;
        self.selfloc().validate()?;
        if !(self.selfloc_init_pos_std >= 0.0 && self.selfloc_init_heading_std >= 0.0) {
            return Err(Error::invalid("selfloc init spreads must be non-negative"));
        }
        if !(self.field_length > 0.0 && self.field_width > 0.0) {
            return Err(Error::invalid("field dimensions must be positive"));
        }
        for kind in [ScenarioKind::HeadOnly, ScenarioKind::PenaltyWalk] {
            self.scenario(kind, InitKind::CorrectPose, false).validate()?;
        }
        if self.sim_duration_s <= 0.0 || self.duration_frames() == 0 {
            return Err(Error::invalid("sim.duration_s must cover at least one frame"));
        }
        if self.sim_fall_s.is_some_and(|s| s < 0.0) {
            return Err(Error::invalid("sim.fall_s must be non-negative"));
        }
        if self.experiment_trials < 2 || !self.experiment_trials.is_multiple_of(2) {
            return Err(Error::invalid("experiment.trials must be even and at least 2"));
        }
        if !(self.experiment_warmup_s >= 0.0 && self.experiment_post_signal_s >= 0.0) {
            return Err(Error::invalid("experiment durations must be non-negative"));
        }
        Ok(())
    }

    fn frames(&self, seconds: f64) -> u64 {
        (seconds * self.sim_frame_rate).round() as u64
    }

    pub fn duration_frames(&self) -> u64 {
        self.frames(self.sim_duration_s)
    }

    pub fn warmup_frames(&self) -> u64 {
        self.frames(self.experiment_warmup_s)
    }

    pub fn post_signal_frames(&self) -> u64 {
        self.frames(self.experiment_post_signal_s)
    }

    pub fn binning(&self) -> Result<BinningConfig> {
        BinningConfig::new(self.colour_c1, self.colour_c2, self.colour_c3)
    }

    pub fn cylinder(&self) -> CylinderParams {
        CylinderParams {
            center: (0.0, 0.0),
            radius: self.wall_radius,
            z_min: self.wall_z_min,
            z_max: self.wall_z_max,
            rows: self.wall_rows,
            cols: self.wall_cols,
        }
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel {
            horizontal_fov: self.camera_hfov_deg.to_radians(),
            image_width: self.camera_width,
            image_height: self.camera_height,
            mount_height: self.camera_mount_height,
            grazing_limit: self.camera_grazing_deg.to_radians(),
        }
    }

    pub fn filter(&self) -> OrientationFilterConfig {
        OrientationFilterConfig {
            particle_count: self.filter_count,
            motion_noise_std: self.filter_noise_std,
            inject_fraction: self.filter_inject_fraction,
            weight_floor: self.filter_epsilon,
            cluster_window: self.filter_cluster_window,
        }
    }

    pub fn confidence_fov(&self) -> f64 {
        self.confidence_fov_deg.to_radians()
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            flip_margin: self.bc_flip_margin,
            purge_margin: self.bc_purge_margin,
            hold_frames: self.bc_hold_frames,
            cooldown_frames: self.bc_cooldown_frames,
            train_margin: self.bc_train_margin,
        }
    }

    pub fn selfloc(&self) -> SelfLocConfig {
        SelfLocConfig {
            particle_count: self.selfloc_count,
            motion_noise: (self.selfloc_noise_forward, self.selfloc_noise_left, self.selfloc_noise_turn),
            purge_radius: self.selfloc_purge_radius,
            heading_scale: self.selfloc_heading_scale,
            multimodal_threshold: self.selfloc_multimodal_threshold,
        }
    }

    pub fn world(&self, seed: u64) -> WorldSpec {
        WorldSpec {
            field: FieldMap::symmetric(self.field_length, self.field_width),
            cylinder: self.cylinder(),
            camera: self.camera(),
            texture: TextureSpec {
                random_patches: self.sim_patches,
                periodic: self.sim_texture == TextureMode::Periodic,
                noise_std: self.sim_chroma_noise,
                ..TextureSpec::default()
            },
            noise: SensorNoise {
                odometry_fraction: self.sim_odometry_noise,
                range_base: self.sim_range_noise,
                range_fraction: self.sim_range_noise_fraction,
                bearing: self.sim_bearing_noise,
                max_range: self.sim_max_range,
            },
            occluders: Vec::new(),
            samples_per_tile: self.sim_samples_per_tile,
            seed,
        }
    }

    pub fn scenario(&self, kind: ScenarioKind, init: InitKind, mirrored_start: bool) -> Scenario {
        Scenario {
            kind,
            duration_frames: self.duration_frames(),
            init,
            frame_rate: self.sim_frame_rate,
            mirrored_start,
            fall_frame: self.sim_fall_s.map(|s| self.frames(s)),
            motion: Motion {
                head_amplitude: self.sim_head_amplitude_deg.to_radians(),
                head_rate: self.sim_head_rate_deg.to_radians(),
                walk_speed: self.sim_walk_speed,
                ..Motion::default()
            },
        }
    }
}
