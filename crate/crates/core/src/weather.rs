//! The fourteen weather presets and their sweep order.

use serde::Serialize;

use crate::error::{SimError, SimResult};

/// Relative illumination change above which a transition counts as
/// illumination-changing.
pub const ILLUMINATION_SHIFT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeatherPreset {
    pub name: &'static str,
    /// In (0, 1]; ClearNoon is the 1.0 reference.
    pub illumination: f64,
    pub precipitation: f64,
    pub fog_density: f64,
}

const fn preset(name: &'static str, illumination: f64, precipitation: f64, fog: f64) -> WeatherPreset {
    WeatherPreset {
        name,
        illumination,
        precipitation,
        fog_density: fog,
    }
}

/// All presets, in sweep order.
pub const PRESETS: [WeatherPreset; 14] = [
    preset("ClearNoon", 1.00, 0.0, 0.0),
    preset("CloudyNoon", 0.80, 0.0, 0.05),
    preset("WetNoon", 0.85, 0.0, 0.0),
    preset("WetCloudyNoon", 0.70, 0.0, 0.05),
    preset("MidRainyNoon", 0.60, 0.5, 0.1),
    preset("HardRainNoon", 0.45, 1.0, 0.2),
    preset("SoftRainNoon", 0.75, 0.3, 0.05),
    preset("ClearSunset", 0.55, 0.0, 0.0),
    preset("CloudySunset", 0.45, 0.0, 0.05),
    preset("WetSunset", 0.50, 0.0, 0.0),
    preset("WetCloudySunset", 0.40, 0.0, 0.05),
    preset("MidRainSunset", 0.35, 0.5, 0.1),
    preset("HardRainSunset", 0.25, 1.0, 0.2),
    preset("SoftRainSunset", 0.40, 0.3, 0.05),
];

impl WeatherPreset {
    pub fn clear_noon() -> Self {
        PRESETS[0]
    }

    pub fn by_name(name: &str) -> SimResult<Self> {
        PRESETS
            .iter()
            .find(|p| p.name == name)
            .copied()
            .ok_or_else(|| SimError::WeatherNotFound(name.to_string()))
    }
}

/// Whether moving from `prev` to `next` changes illumination by more than
/// [`ILLUMINATION_SHIFT`] relative to `prev`.
pub fn illumination_changing(prev: &WeatherPreset, next: &WeatherPreset) -> bool {
    ((next.illumination - prev.illumination) / prev.illumination).abs() > ILLUMINATION_SHIFT
}
