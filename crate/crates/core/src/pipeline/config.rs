//! Run configuration: a single TOML document with nested tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{make_grid, DetectionSpec, LayeredObject, SourceSpec, SpectralGrid};
use crate::error::{Error, Result};
use crate::forward::ClassicalSource;
use crate::preprocess::StretchMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    FdSingleFrame,
    FdWhole,
    Td,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpCompMode {
    #[default]
    Off,
    Data,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub mode: ScanMode,
    /// µm
    #[serde(default)]
    pub reference_delay: f64,
    /// µm, time-domain mode only
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_positions: Option<Vec<f64>>,
    /// s
    #[serde(default = "default_integration_time")]
    pub integration_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_integration_time() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessingConfig {
    #[serde(default)]
    pub fibre_comp: bool,
    #[serde(default)]
    pub pump_comp: PumpCompMode,
    #[serde(default = "yes")]
    pub dc_removal: bool,
    #[serde(default)]
    pub stretch: StretchMode,
    /// Route the spectrum through fibre time tagging and calibration rather
    /// than handing the wavelength-domain spectrum straight to the rotation.
    #[serde(default)]
    pub acquisition: bool,
    /// Overrides `detection.time_bin`, ps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_bin: Option<f64>,
    /// Fractional overlap between neighbouring frames in whole-spectrum mode.
    #[serde(default = "default_overlap")]
    pub frame_overlap: f64,
    /// Wavelength span of one frame in whole-spectrum mode, nm.
    #[serde(default = "default_frame_span")]
    pub frame_span: f64,
}

fn yes() -> bool {
    true
}

fn default_overlap() -> f64 {
    crate::acquisition::DEFAULT_FRAME_OVERLAP
}

fn default_frame_span() -> f64 {
    102.0
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        ProcessingConfig {
            fibre_comp: false,
            pump_comp: PumpCompMode::Off,
            dc_removal: true,
            stretch: StretchMode::TwoPart,
            acquisition: false,
            time_bin: None,
            frame_overlap: default_overlap(),
            frame_span: default_frame_span(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// nm
    #[serde(default = "default_center")]
    pub center: f64,
    /// nm
    #[serde(default = "default_span")]
    pub span: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

fn default_center() -> f64 {
    1550.0
}

fn default_span() -> f64 {
    102.0
}

fn default_points() -> usize {
    512
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            center: default_center(),
            span: default_span(),
            n_points: default_points(),
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<SpectralGrid> {
        make_grid(self.center, self.span, self.n_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalloffConfig {
    /// Mirror depths, µm, increasing.
    pub depths: Vec<f64>,
    /// Also run without pump compensation and report both on a common scale.
    #[serde(default)]
    pub compare_pump: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    JointSpectrum,
    Rotated,
    FourierMap,
    Ascan,
    Trace,
    Falloff,
    Artefacts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Qjs,
    Csv,
    Json,
    Svg,
    Pgm8,
    Pgm16,
}

impl OutputKind {
    pub fn default_format(self) -> OutputFormat {
        match self {
            OutputKind::JointSpectrum | OutputKind::Rotated => OutputFormat::Qjs,
            OutputKind::FourierMap => OutputFormat::Pgm16,
            OutputKind::Ascan | OutputKind::Trace => OutputFormat::Csv,
            OutputKind::Falloff | OutputKind::Artefacts => OutputFormat::Json,
        }
    }

    fn accepts(self, format: OutputFormat) -> bool {
        use OutputFormat::*;
        match self {
            OutputKind::JointSpectrum | OutputKind::Rotated => matches!(format, Qjs | Csv | Pgm8 | Pgm16),
            OutputKind::FourierMap => matches!(format, Csv | Pgm8 | Pgm16),
            OutputKind::Ascan | OutputKind::Trace => matches!(format, Csv | Json | Svg),
            OutputKind::Falloff => matches!(format, Json | Csv | Svg),
            OutputKind::Artefacts => matches!(format, Json),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub kind: OutputKind,
    /// Relative paths resolve against the output directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

impl OutputSpec {
    pub fn format(&self) -> OutputFormat {
        self.format.unwrap_or_else(|| self.kind.default_format())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: SourceSpec,
    pub object: LayeredObject,
    #[serde(default = "DetectionSpec::ideal")]
    pub detection: DetectionSpec,
    pub scan: ScanConfig,
    #[serde(default)]
    pub processing: ProcessingConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falloff: Option<FalloffConfig>,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration document.
pub fn load_config_str(text: &str) -> Result<PipelineConfig> {
    let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    load_config_str(&std::fs::read_to_string(path)?)
}

impl PipelineConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.object.validate()?;
        self.detection.validate()?;
        let scan = &self.scan;
        if !scan.reference_delay.is_finite() {
            return Err(Error::validation("scan.reference_delay", "must be finite"));
        }
        if !(scan.integration_time > 0.0) {
            return Err(Error::validation("scan.integration_time", "must be positive"));
        }
        match (scan.mode, &scan.stage_positions) {
            (ScanMode::Td, None) => {
                return Err(Error::validation("scan.stage_positions", "required in td mode"));
            }
            (ScanMode::Td, Some(p)) if p.is_empty() || p.iter().any(|v| !v.is_finite()) => {
                return Err(Error::validation("scan.stage_positions", "must be a non-empty list of finite values"));
            }
            _ => {}
        }
        if scan.mode == ScanMode::Classical && self.classical.is_none() {
            return Err(Error::validation("classical", "required in classical mode"));
        }
        if let Err(e) = self.grid.grid() {
            return Err(Error::validation("grid", e.to_string()));
        }
        let p = &self.processing;
        if let Some(bin) = p.time_bin {
            if !(bin > 0.0) {
                return Err(Error::validation("processing.time_bin", "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&p.frame_overlap) {
            return Err(Error::validation("processing.frame_overlap", "must lie in [0, 1)"));
        }
        if !(p.frame_span > 0.0) {
            return Err(Error::validation("processing.frame_span", "must be positive"));
        }
        if let Some(f) = &self.falloff {
            if f.depths.len() < 3 {
                return Err(Error::validation("falloff.depths", "at least three depths are required"));
            }
            if f.depths.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::validation("falloff.depths", "must be strictly increasing"));
            }
            if !matches!(scan.mode, ScanMode::FdSingleFrame | ScanMode::FdWhole) {
                return Err(Error::validation("falloff", "needs a Fourier-domain scan mode"));
            }
        }
        for (i, out) in self.outputs.iter().enumerate() {
            if out.path.trim().is_empty() {
                return Err(Error::validation(format!("outputs[{i}].path"), "must not be empty"));
            }
            if !out.kind.accepts(out.format()) {
                return Err(Error::validation(
                    format!("outputs[{i}].format"),
                    format!("{:?} cannot be written as {:?}", out.kind, out.format()),
                ));
            }
            let needs = match out.kind {
                OutputKind::Falloff => self.falloff.is_none().then_some("a [falloff] table"),
                OutputKind::Trace => (scan.mode != ScanMode::Td).then_some("td mode"),
                OutputKind::JointSpectrum | OutputKind::Rotated | OutputKind::FourierMap | OutputKind::Artefacts => {
                    matches!(scan.mode, ScanMode::Td | ScanMode::Classical).then_some("a Fourier-domain scan mode")
                }
                OutputKind::Ascan => (scan.mode == ScanMode::Td).then_some("a mode other than td"),
            };
            if let Some(what) = needs {
                return Err(Error::validation(format!("outputs[{i}].kind"), format!("{:?} output needs {what}", out.kind)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[source]
center_wavelength = 1550.0
diagonal_fwhm = 6.3
antidiagonal_fwhm = 3.2
pump_center = 775.0
pump_fwhm = 0.4
pair_rate = 2e5
hom_visibility = 1.0

[object]
interfaces = [{ position = 78.0, reflectivity = 1.0 }]

[scan]
mode = "fd_single_frame"
"#;

    #[test]
    fn defaults_applied() {
        let c = load_config_str(MINIMAL).unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert!(c.processing.dc_removal);
        assert_eq!(c.processing.pump_comp, PumpCompMode::Off);
        assert_eq!(c.scan.integration_time, 1.0);
        assert_eq!(c.detection, DetectionSpec::ideal());
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = format!("{MINIMAL}bogus = 1\n");
        match load_config_str(&text) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, text.lines().count()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn td_needs_stage_positions() {
        let text = MINIMAL.replace("fd_single_frame", "td");
        match load_config_str(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "scan.stage_positions"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn output_kind_checked_against_mode() {
        let text = format!("{MINIMAL}\n[[outputs]]\nkind = \"falloff\"\npath = \"f.json\"\n");
        assert!(matches!(load_config_str(&text), Err(Error::Validation { .. })));
    }

    #[test]
    fn toml_round_trip() {
        let c = load_config_str(MINIMAL).unwrap();
        assert_eq!(load_config_str(&c.to_toml().unwrap()).unwrap(), c);
    }
}
