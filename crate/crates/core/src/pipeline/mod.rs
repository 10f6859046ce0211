//! Configuration, file formats, presets and run orchestration.

pub mod config;
pub mod format;
pub mod plot;
pub mod presets;
pub mod run;

pub use config::{load_config, load_config_str, PipelineConfig};
pub use presets::{preset, preset_names};
pub use run::{run, run_with, RunManifest, RunOptions};
