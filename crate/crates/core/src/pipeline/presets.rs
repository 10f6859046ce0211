//! Scenario presets shipped with the toolkit.

use super::config::{load_config_str, PipelineConfig};
use crate::error::{Error, Result};

const PRESETS: &[(&str, &str)] = &[
    ("mirror", include_str!("../../presets/mirror.toml")),
    ("whole_spectrum", include_str!("../../presets/whole_spectrum.toml")),
    ("fibre_comp", include_str!("../../presets/fibre_comp.toml")),
    ("pump_comp", include_str!("../../presets/pump_comp.toml")),
    ("falloff", include_str!("../../presets/falloff.toml")),
    ("time_domain", include_str!("../../presets/time_domain.toml")),
    ("classical", include_str!("../../presets/classical.toml")),
    ("glass", include_str!("../../presets/glass.toml")),
    ("plastic", include_str!("../../presets/plastic.toml")),
    ("stack", include_str!("../../presets/stack.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

/// Raw TOML text of a preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = preset_names().collect();
            Error::invalid(format!("unknown preset `{name}`; known: {}", known.join(", ")))
        })
}

pub fn preset(name: &str) -> Result<PipelineConfig> {
    load_config_str(preset_text(name)?)
}
