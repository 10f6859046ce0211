//! Run orchestration: simulate, acquire, rotate, compensate, reconstruct,
//! analyse and write, in that order.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{OutputFormat, OutputKind, OutputSpec, PipelineConfig, PumpCompMode, ScanMode};
use super::format::{write_ascan_csv, write_joint_spectrum, write_matrix_csv, write_rotated, write_trace_csv};
use super::plot::{line_plot, write_pgm, HeatmapAxis, Series};
use crate::acquisition::{
    calibrate_linear, ridge_frame_delays, select_frame, stitch_frames, to_time_histogram, Frame, StitchPlan,
};
use crate::domain::{delay_from_depth, AScan, Interface, JointSpectrum, LayeredObject, Matrix, SpectralGrid};
use crate::error::{Error, Result};
use crate::forward::{
    simulate_classical_fringes, simulate_joint_spectrum, simulate_time_domain, SimulationRequest, TimeDomainTrace,
    Warning,
};
use crate::preprocess::{
    compensate_fibre, compensate_pump, estimate_row_frequencies, fibre_shift_vector, rotate45, PumpCorrection,
    PumpModel, PumpOptions, RotatedSpectrum,
};
use crate::reconstruct::{
    ascan_row_average_with, classical_ascan, falloff_analysis, fourier_map, measure_dip, measure_peak,
    native_depth_bin, predict_artefacts, AScanOptions, ArtefactReport, FalloffReport, FourierMap, PeakReport,
    FALLOFF_SEARCH_HALF_WIDTH,
};

/// Matching tolerance for predicted artefacts, in native depth bins.
pub const ARTEFACT_SEARCH_BINS: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub kind: OutputKind,
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FalloffSummary {
    pub report: FalloffReport,
    /// Same depths without pump compensation, on the same dB scale.
    pub uncompensated: Option<FalloffReport>,
}

/// What the run measured, independent of which files were requested.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub peak: Option<PeakReport>,
    pub dip: Option<PeakReport>,
    pub falloff: Option<FalloffSummary>,
    pub artefacts: Option<ArtefactReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub outputs: Vec<OutputRecord>,
    pub timings: Vec<StageTiming>,
    pub report: RunReport,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Also write a plot next to every output that is not one already.
    pub plot: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &PipelineConfig) -> Result<String> {
    Ok(sha256_hex(config.to_toml()?.as_bytes()))
}

fn staged<T>(stage: &str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage));
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: t.elapsed().as_secs_f64(),
    });
    out
}

pub fn simulation_request(config: &PipelineConfig, object: &LayeredObject) -> Result<SimulationRequest> {
    Ok(SimulationRequest {
        source: config.source,
        object: object.clone(),
        detection: config.detection.clone(),
        reference_delay: config.scan.reference_delay,
        grid: config.grid.grid()?,
        integration_time: config.scan.integration_time,
        seed: config.scan.seed,
    })
}

fn describe(w: &Warning) -> String {
    match w {
        Warning::EnvelopeTruncated { edge_value } => {
            format!("source envelope truncated by the grid (edge value {edge_value:.3})")
        }
        Warning::EnergyBoundExceeded => "interface reflectivities exceed the energy bound".to_string(),
    }
}

pub fn time_bin(config: &PipelineConfig) -> f64 {
    config.processing.time_bin.unwrap_or(config.detection.time_bin)
}

/// Cuts the whole-spectrum histogram into frames stepped along the pair
/// ridge, as a sequence of fixed-window acquisitions would record it.
pub fn acquire_frames(config: &PipelineConfig, hist: &JointSpectrum) -> Result<Vec<Frame>> {
    let det = &config.detection;
    let p = &config.processing;
    let delays = ridge_frame_delays(det, config.grid.center, config.grid.span, p.frame_span, p.frame_overlap)?;
    delays
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let mut f = select_frame(hist, d, det.coincidence_window)?;
            f.index = k;
            Ok(f)
        })
        .collect()
}

/// Turns a wavelength-domain simulation into what the detection chain
/// delivers: time-tagged, framed and stitched as the mode requires, then
/// relabelled to wavelength with the linear fibre calibration.
pub fn acquire(config: &PipelineConfig, js: &JointSpectrum) -> Result<JointSpectrum> {
    match config.scan.mode {
        ScanMode::FdWhole => {
            let hist = to_time_histogram(js, &config.detection, time_bin(config))?;
            let frames = acquire_frames(config, &hist)?;
            let stitched = stitch_frames(&StitchPlan::new(frames))?;
            calibrate_linear(&stitched.spectrum, &config.detection)
        }
        _ if config.processing.acquisition => {
            let hist = to_time_histogram(js, &config.detection, time_bin(config))?;
            calibrate_linear(&hist, &config.detection)
        }
        _ => Ok(js.clone()),
    }
}

fn strongest(object: &LayeredObject) -> &Interface {
    object
        .interfaces
        .iter()
        .max_by(|a, b| a.reflectivity.total_cmp(&b.reflectivity).then(b.position.total_cmp(&a.position)))
        .expect("validated object has interfaces")
}

/// Depth (µm) at which the strongest interface appears in the A-scan.
pub fn expected_depth(object: &LayeredObject, reference_delay: f64) -> f64 {
    (strongest(object).position - reference_delay).abs()
}

pub fn pump_model(config: &PipelineConfig, object: &LayeredObject) -> PumpModel {
    PumpModel {
        imbalance: object.arm_imbalance,
        center_frequency: config.source.center_frequency(),
        design_delay: delay_from_depth(strongest(object).position - config.scan.reference_delay),
    }
}

pub fn pump_options(config: &PipelineConfig) -> PumpOptions {
    PumpOptions {
        mode: config.processing.stretch,
        ..PumpOptions::default()
    }
}

/// Rotation plus whichever compensations the configuration enables.
pub fn preprocess(
    config: &PipelineConfig,
    object: &LayeredObject,
    js: &JointSpectrum,
    pump: PumpCompMode,
) -> Result<RotatedSpectrum> {
    let mut rot = rotate45(js).map_err(|e| e.in_stage("rotate"))?;
    if config.processing.fibre_comp {
        let sv = fibre_shift_vector(&config.detection, &rot);
        rot = compensate_fibre(&rot, &sv).map_err(|e| e.in_stage("compensate_fibre"))?;
    }
    let options = pump_options(config);
    let compensated = match pump {
        PumpCompMode::Off => return Ok(rot),
        PumpCompMode::Data => {
            let profile = estimate_row_frequencies(&rot);
            compensate_pump(&rot, PumpCorrection::Data(&profile), options)
        }
        PumpCompMode::Model => compensate_pump(&rot, PumpCorrection::Model(pump_model(config, object)), options),
    };
    compensated.map_err(|e| e.in_stage("compensate_pump"))
}

pub fn ascan_options(config: &PipelineConfig) -> AScanOptions {
    AScanOptions {
        dc_removal: config.processing.dc_removal,
        ..AScanOptions::default()
    }
}

fn mirror_like(object: &LayeredObject, position: f64) -> LayeredObject {
    let r = strongest(object).reflectivity;
    LayeredObject {
        interfaces: vec![Interface {
            position,
            reflectivity: r,
        }],
        segment_dispersion: Vec::new(),
        arm_imbalance: object.arm_imbalance,
    }
}

/// Full Fourier-domain chain for one object, returning the processed
/// rotated spectrum and its A-scan.
pub fn fd_chain(
    config: &PipelineConfig,
    object: &LayeredObject,
    pump: PumpCompMode,
) -> Result<(JointSpectrum, RotatedSpectrum, AScan, Vec<Warning>)> {
    let sim = simulate_joint_spectrum(&simulation_request(config, object)?).map_err(|e| e.in_stage("simulate"))?;
    let js = acquire(config, &sim.spectrum).map_err(|e| e.in_stage("acquire"))?;
    let rot = preprocess(config, object, &js, pump)?;
    let ascan = ascan_row_average_with(&rot, ascan_options(config)).map_err(|e| e.in_stage("reconstruct"))?;
    Ok((js, rot, ascan, sim.warnings))
}

/// Mirror sweep over the configured depths; with `compare_pump` the same
/// spectra are also processed without pump compensation and measured
/// against the compensated reference height.
pub fn falloff_sweep(config: &PipelineConfig) -> Result<FalloffSummary> {
    let spec = config
        .falloff
        .as_ref()
        .ok_or_else(|| Error::validation("falloff", "no fall-off depths configured"))?;
    let pump = config.processing.pump_comp;
    let compare = spec.compare_pump && pump != PumpCompMode::Off;
    let per_depth: Vec<(AScan, Option<AScan>)> = spec
        .depths
        .par_iter()
        .map(|&depth| {
            let object = mirror_like(&config.object, config.scan.reference_delay + depth);
            let sim = simulate_joint_spectrum(&simulation_request(config, &object)?)?;
            let js = acquire(config, &sim.spectrum)?;
            let options = ascan_options(config);
            let main = ascan_row_average_with(&preprocess(config, &object, &js, pump)?, options)?;
            let raw = if compare {
                Some(ascan_row_average_with(&preprocess(config, &object, &js, PumpCompMode::Off)?, options)?)
            } else {
                None
            };
            Ok((main, raw))
        })
        .collect::<Result<_>>()?;
    let main: Vec<(f64, AScan)> = spec.depths.iter().copied().zip(per_depth.iter().map(|p| p.0.clone())).collect();
    let report = falloff_analysis(&main, None)?;
    let uncompensated = if compare {
        let raw: Vec<(f64, AScan)> = spec
            .depths
            .iter()
            .copied()
            .zip(per_depth.iter().map(|p| p.1.clone().expect("compared")))
            .collect();
        Some(falloff_analysis(&raw, Some(report.reference_height))?)
    } else {
        None
    };
    Ok(FalloffSummary { report, uncompensated })
}

/// Everything a run can emit, computed lazily per mode.
#[derive(Default)]
struct Products {
    joint: Option<JointSpectrum>,
    rotated: Option<RotatedSpectrum>,
    fmap: Option<FourierMap>,
    ascan: Option<AScan>,
    trace: Option<TimeDomainTrace>,
}

pub fn run(config: &PipelineConfig, out_dir: impl AsRef<Path>) -> Result<RunManifest> {
    run_with(config, out_dir, RunOptions::default())
}

pub fn run_with(config: &PipelineConfig, out_dir: impl AsRef<Path>, options: RunOptions) -> Result<RunManifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let mut timings = Vec::new();
    let mut report = RunReport::default();
    let mut products = Products::default();
    let object = &config.object;
    let reference = config.scan.reference_delay;

    match config.scan.mode {
        ScanMode::FdSingleFrame | ScanMode::FdWhole => {
            let (js, rot, ascan, warnings) =
                staged("fd_chain", &mut timings, || fd_chain(config, object, config.processing.pump_comp))?;
            report.warnings = warnings.iter().map(describe).collect();
            let z = expected_depth(object, reference);
            report.peak = measure_peak(&ascan, (z - FALLOFF_SEARCH_HALF_WIDTH, z + FALLOFF_SEARCH_HALF_WIDTH)).ok();
            let wants = |k: OutputKind| config.outputs.iter().any(|o| o.kind == k);
            if wants(OutputKind::FourierMap) {
                products.fmap = Some(staged("fourier_map", &mut timings, || fourier_map(&rot))?);
            }
            if wants(OutputKind::Artefacts) || object.interfaces.len() > 1 {
                let mut artefacts = staged("artefacts", &mut timings, || predict_artefacts(object, &config.source, reference))?;
                artefacts.match_ascan(&ascan, native_depth_bin(&rot), ARTEFACT_SEARCH_BINS);
                report.artefacts = Some(artefacts);
            }
            if config.falloff.is_some() {
                report.falloff = Some(staged("falloff", &mut timings, || falloff_sweep(config))?);
            }
            products.joint = Some(js);
            products.rotated = Some(rot);
            products.ascan = Some(ascan);
        }
        ScanMode::Td => {
            let positions = config.scan.stage_positions.clone().unwrap_or_default();
            let trace = staged("simulate", &mut timings, || {
                simulate_time_domain(&simulation_request(config, object)?, &positions)
            })?;
            let lo = positions.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = positions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            report.dip = measure_dip(&trace, (lo, hi)).ok();
            products.trace = Some(trace);
        }
        ScanMode::Classical => {
            let source = config.classical.as_ref().expect("validated");
            let ascan = staged("classical", &mut timings, || {
                classical_ascan(&simulate_classical_fringes(source, object, reference, &config.grid.grid()?)?)
            })?;
            let z = expected_depth(object, reference);
            report.peak = measure_peak(&ascan, (z - 2.0 * FALLOFF_SEARCH_HALF_WIDTH, z + 2.0 * FALLOFF_SEARCH_HALF_WIDTH)).ok();
            products.ascan = Some(ascan);
        }
    }

    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    staged("write", &mut timings, || {
        for spec in &config.outputs {
            let written = write_output(spec, &products, &report, out_dir, options)?;
            for path in written {
                let bytes = fs::read(&path)?;
                outputs.push(OutputRecord {
                    kind: spec.kind,
                    path: path
                        .strip_prefix(out_dir)
                        .unwrap_or(&path)
                        .to_string_lossy()
                        .into_owned(),
                    sha256: sha256_hex(&bytes),
                });
            }
        }
        Ok(())
    })?;

    let manifest = RunManifest {
        config_hash: config_hash(config)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        timings,
        report,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(out_dir.join("manifest.json"), text)?;
    Ok(manifest)
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn axis(label: &str, g: &SpectralGrid) -> HeatmapAxis {
    HeatmapAxis {
        label: label.to_string(),
        units: g.axis_kind.units().to_string(),
        start: g.start(),
        step: g.step(),
        count: g.n_points,
    }
}

fn depth_axis(label: &str, depths: &[f64]) -> HeatmapAxis {
    HeatmapAxis {
        label: label.to_string(),
        units: "um".to_string(),
        start: depths.first().copied().unwrap_or(0.0),
        step: if depths.len() > 1 { depths[1] - depths[0] } else { 0.0 },
        count: depths.len(),
    }
}

fn pgm_bits(format: OutputFormat) -> u8 {
    if format == OutputFormat::Pgm8 {
        8
    } else {
        16
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn missing(kind: OutputKind) -> Error {
    Error::validation("outputs", format!("{kind:?} is not produced by this scan mode"))
}

/// Files written for one requested output, header and payload files
/// included.
fn write_output(
    spec: &OutputSpec,
    p: &Products,
    report: &RunReport,
    out_dir: &Path,
    options: RunOptions,
) -> Result<Vec<PathBuf>> {
    let path = out_dir.join(&spec.path);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let format = spec.format();
    let mut written = vec![path.clone()];
    let stem = |suffix: &str| {
        let s = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        path.with_file_name(format!("{s}{suffix}"))
    };
    let matrix_out = |m: &Matrix, rows: HeatmapAxis, cols: HeatmapAxis, written: &mut Vec<PathBuf>| -> Result<()> {
        match format {
            OutputFormat::Csv => write_matrix_csv(m, &path)?,
            OutputFormat::Pgm8 | OutputFormat::Pgm16 => {
                write_pgm(m, &path, pgm_bits(format), &rows, &cols)?;
                written.push(stem(".axes.toml"));
            }
            _ => unreachable!("validated format"),
        }
        if options.plot && !matches!(format, OutputFormat::Pgm8 | OutputFormat::Pgm16) {
            let pgm = with_extension(&path, "pgm");
            write_pgm(m, &pgm, 16, &rows, &cols)?;
            written.push(pgm);
            written.push(stem(".axes.toml"));
        }
        Ok(())
    };
    let line_out = |x: &[f64], y: &[f64], title: &str, xl: &str, yl: &str, written: &mut Vec<PathBuf>| -> Result<()> {
        let svg = line_plot(&[Series { label: title, x, y }], title, xl, yl);
        if format == OutputFormat::Svg {
            fs::write(&path, svg)?;
        } else if options.plot {
            let p = with_extension(&path, "svg");
            fs::write(&p, svg)?;
            written.push(p);
        }
        Ok(())
    };

    match spec.kind {
        OutputKind::JointSpectrum => {
            let js = p.joint.as_ref().ok_or_else(|| missing(spec.kind))?;
            if format == OutputFormat::Qjs {
                write_joint_spectrum(js, &path)?;
                written.push(stem(".bin"));
                if options.plot {
                    let pgm = with_extension(&path, "pgm");
                    write_pgm(js.values(), &pgm, 16, &axis("channel 1", &js.axis1), &axis("channel 2", &js.axis2))?;
                    written.push(pgm);
                    written.push(stem(".axes.toml"));
                }
            } else {
                matrix_out(
                    js.values(),
                    axis("channel 1", &js.axis1),
                    axis("channel 2", &js.axis2),
                    &mut written,
                )?;
            }
        }
        OutputKind::Rotated => {
            let rot = p.rotated.as_ref().ok_or_else(|| missing(spec.kind))?;
            if format == OutputFormat::Qjs {
                write_rotated(rot, &path)?;
                written.push(stem(".bin"));
                written.push(stem(".mask.bin"));
                if options.plot {
                    let pgm = with_extension(&path, "pgm");
                    write_pgm(&rot.values, &pgm, 16, &axis("sum frequency", &rot.v_axis), &axis("difference frequency", &rot.u_axis))?;
                    written.push(pgm);
                    written.push(stem(".axes.toml"));
                }
            } else {
                matrix_out(
                    &rot.values,
                    axis("sum frequency", &rot.v_axis),
                    axis("difference frequency", &rot.u_axis),
                    &mut written,
                )?;
            }
        }
        OutputKind::FourierMap => {
            let map = p.fmap.as_ref().ok_or_else(|| missing(spec.kind))?;
            matrix_out(
                &map.values,
                depth_axis("sum-frequency conjugate depth", &map.v_depth),
                depth_axis("depth", &map.u_depth),
                &mut written,
            )?;
        }
        OutputKind::Ascan => {
            let a = p.ascan.as_ref().ok_or_else(|| missing(spec.kind))?;
            match format {
                OutputFormat::Csv => write_ascan_csv(a, &path)?,
                OutputFormat::Json => write_json(
                    &serde_json::json!({ "depth_um": a.depth_axis, "amplitude": a.amplitude }),
                    &path,
                )?,
                _ => {}
            }
            line_out(&a.depth_axis, &a.amplitude, "A-scan", "depth (um)", "amplitude", &mut written)?;
        }
        OutputKind::Trace => {
            let t = p.trace.as_ref().ok_or_else(|| missing(spec.kind))?;
            match format {
                OutputFormat::Csv => write_trace_csv(t, &path)?,
                OutputFormat::Json => write_json(
                    &serde_json::json!({ "stage_position_um": t.stage_positions, "coincidences": t.coincidence_rate }),
                    &path,
                )?,
                _ => {}
            }
            line_out(
                &t.stage_positions,
                &t.coincidence_rate,
                "coincidences",
                "stage position (um)",
                "coincidences",
                &mut written,
            )?;
        }
        OutputKind::Falloff => {
            let f = report.falloff.as_ref().ok_or_else(|| missing(spec.kind))?;
            let curve = |r: &FalloffReport| -> (Vec<f64>, Vec<f64>) {
                r.points.iter().filter(|p| p.height_db.is_finite()).map(|p| (p.depth, p.height_db)).unzip()
            };
            match format {
                OutputFormat::Json => write_json(f, &path)?,
                OutputFormat::Csv => {
                    let mut text = String::from("depth_um,height_db,fwhm_um,uncompensated_height_db\n");
                    for (i, pt) in f.report.points.iter().enumerate() {
                        let raw = f
                            .uncompensated
                            .as_ref()
                            .map(|u| u.points[i].height_db.to_string())
                            .unwrap_or_default();
                        let fwhm = pt.peak.map(|p| p.fwhm.to_string()).unwrap_or_default();
                        text.push_str(&format!("{},{},{},{}\n", pt.depth, pt.height_db, fwhm, raw));
                    }
                    fs::write(&path, text)?;
                }
                _ => {}
            }
            if format == OutputFormat::Svg || options.plot {
                let (x, y) = curve(&f.report);
                let mut series = vec![Series {
                    label: "compensated",
                    x: &x,
                    y: &y,
                }];
                let raw = f.uncompensated.as_ref().map(curve);
                if let Some((rx, ry)) = &raw {
                    series.push(Series {
                        label: "uncompensated",
                        x: rx,
                        y: ry,
                    });
                }
                let svg = line_plot(&series, "fall-off", "depth (um)", "peak height (dB)");
                let target = if format == OutputFormat::Svg {
                    path.clone()
                } else {
                    let p = with_extension(&path, "svg");
                    written.push(p.clone());
                    p
                };
                fs::write(target, svg)?;
            }
        }
        OutputKind::Artefacts => {
            let a = report.artefacts.as_ref().ok_or_else(|| missing(spec.kind))?;
            write_json(a, &path)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::presets::preset;

    #[test]
    fn mirror_preset_runs_and_is_deterministic() {
        let config = preset("mirror").unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m1 = run(&config, a.path()).unwrap();
        let m2 = run(&config, b.path()).unwrap();
        let peak = m1.report.peak.unwrap();
        assert!((peak.position - 78.0).abs() < 1.0, "{peak:?}");
        let sums = |m: &RunManifest| m.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())).collect::<Vec<_>>();
        assert!(!m1.outputs.is_empty());
        assert_eq!(sums(&m1), sums(&m2));
        assert_eq!(m1.config_hash, m2.config_hash);
        assert!(a.path().join("manifest.json").exists());
    }

    #[test]
    fn stage_errors_carry_stage_name() {
        let mut config = preset("mirror").unwrap();
        config.grid.center = 5000.0;
        let dir = tempfile::tempdir().unwrap();
        match run(&config, dir.path()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "simulate"),
            other => panic!("{other:?}"),
        }
    }
}
