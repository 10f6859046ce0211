use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qoct_core::acquisition::{stitch_frames, to_time_histogram, StitchPlan};
use qoct_core::error::{Error, Result};
use qoct_core::forward::simulate_joint_spectrum;
use qoct_core::pipeline::config::{OutputKind, OutputSpec, PipelineConfig, ScanMode};
use qoct_core::pipeline::format::{
    read_joint_spectrum, read_rotated, write_ascan_csv, write_joint_spectrum, write_matrix_csv, write_rotated,
};
use qoct_core::pipeline::plot::{line_plot, write_pgm, HeatmapAxis, Series};
use qoct_core::pipeline::run::{acquire_frames, pump_model, pump_options, simulation_request, time_bin};
use qoct_core::pipeline::{load_config, preset, preset_names, run_with, RunOptions};
use qoct_core::preprocess::{
    compensate_fibre, compensate_pump, estimate_row_frequencies, fibre_shift_vector, rotate45, PumpCorrection,
    RotatedSpectrum, StretchMode,
};
use qoct_core::reconstruct::{ascan_2dft_diagonal_with, ascan_row_average_with, fourier_map, AScanOptions};
use qoct_core::{AScan, JointSpectrum};

/// Thread count for the parallel stages; everything else comes from flags.
const THREADS_ENV: &str = "QOCT_THREADS";

#[derive(Parser)]
#[command(name = "qoct", version, about = "Fourier-domain quantum OCT simulation and reconstruction")]
struct Cli {
    /// Seed for Poisson shot noise; omit for noise-free expectations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Points per wavelength axis.
    #[arg(long, global = true, value_name = "N")]
    grid: Option<usize>,
    #[arg(long, global = true, value_name = "DIR", default_value = "qoct-out")]
    out: PathBuf,
    /// File format for spectra.
    #[arg(long, global = true, value_enum, default_value_t = SpectrumFormat::Qjs)]
    format: SpectrumFormat,
    /// Also write SVG/PGM plots.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpectrumFormat {
    Qjs,
    Csv,
}

#[derive(Args, Clone)]
struct ConfigSource {
    /// Configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PumpMode {
    Data,
    Model,
}

#[derive(Clone, Copy, ValueEnum)]
enum AScanPath {
    RowAverage,
    Diagonal,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a joint spectrum.
    Simulate(ConfigSource),
    /// Simulate the whole spectrum, cut it into frames and stitch them.
    Stitch(ConfigSource),
    /// Rotate a joint spectrum onto difference/sum frequency axes.
    Rotate { input: PathBuf },
    /// Straighten the fibre-bent ridge of a rotated spectrum.
    CompFibre {
        input: PathBuf,
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Equalise row fringe frequencies of a rotated spectrum.
    CompPump {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = PumpMode::Data)]
        mode: PumpMode,
        #[arg(long, value_enum)]
        stretch: Option<Stretch>,
        #[command(flatten)]
        source: ConfigSource,
    },
    /// A-scan of a rotated spectrum.
    Ascan {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = AScanPath::RowAverage)]
        path: AScanPath,
        /// Keep the zero-depth peak.
        #[arg(long)]
        no_dc_removal: bool,
    },
    /// 2D Fourier map of a rotated spectrum.
    Fmap { input: PathBuf },
    /// Fall-off sweep.
    Falloff(ConfigSource),
    /// Predicted and measured artefacts of a layered object.
    Artefacts(ConfigSource),
    /// Classical OCT A-scan.
    Classical(ConfigSource),
    /// Time-domain stage scan.
    Td(ConfigSource),
    /// Run a configuration file end to end.
    Run { config: PathBuf },
    /// Run a built-in preset, or print it with --print.
    Preset {
        name: Option<String>,
        #[arg(long)]
        print: bool,
        #[arg(long)]
        list: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stretch {
    TwoPart,
    Continuous,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::ConfigParse { .. } | Error::Validation { .. } => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn load(cli: &Cli, source: &ConfigSource, default_preset: &str) -> Result<PipelineConfig> {
    let mut config = match (&source.config, &source.preset) {
        (Some(path), _) => read_config(path)?,
        (None, Some(name)) => preset(name).map_err(|e| Error::Validation {
            field: "preset".into(),
            message: e.to_string(),
        })?,
        (None, None) => preset(default_preset)?,
    };
    apply_overrides(cli, &mut config);
    config.validate()?;
    Ok(config)
}

/// An unreadable configuration file is a configuration error, not a stage failure.
fn read_config(path: &Path) -> Result<PipelineConfig> {
    load_config(path).map_err(|e| match e {
        Error::Io(io) => Error::validation("config", format!("{}: {io}", path.display())),
        other => other,
    })
}

fn apply_overrides(cli: &Cli, config: &mut PipelineConfig) {
    if let Some(seed) = cli.seed {
        config.scan.seed = Some(seed);
    }
    if let Some(n) = cli.grid {
        config.grid.n_points = n;
    }
}

fn out_path(cli: &Cli, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out)?;
    Ok(cli.out.join(name))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn axis(label: &str, g: &qoct_core::SpectralGrid) -> HeatmapAxis {
    HeatmapAxis {
        label: label.into(),
        units: g.axis_kind.units().into(),
        start: g.start(),
        step: g.step(),
        count: g.n_points,
    }
}

fn save_spectrum(cli: &Cli, js: &JointSpectrum, stem: &str) -> Result<PathBuf> {
    let path = match cli.format {
        SpectrumFormat::Qjs => {
            let p = out_path(cli, &format!("{stem}.qjs"))?;
            write_joint_spectrum(js, &p)?;
            p
        }
        SpectrumFormat::Csv => {
            let p = out_path(cli, &format!("{stem}.csv"))?;
            write_matrix_csv(js.values(), &p)?;
            p
        }
    };
    if cli.plot {
        write_pgm(
            js.values(),
            out_path(cli, &format!("{stem}.pgm"))?,
            16,
            &axis("channel 1", &js.axis1),
            &axis("channel 2", &js.axis2),
        )?;
    }
    Ok(path)
}

fn save_rotated(cli: &Cli, rot: &RotatedSpectrum, stem: &str) -> Result<PathBuf> {
    let path = match cli.format {
        SpectrumFormat::Qjs => {
            let p = out_path(cli, &format!("{stem}.qjs"))?;
            write_rotated(rot, &p)?;
            p
        }
        SpectrumFormat::Csv => {
            let p = out_path(cli, &format!("{stem}.csv"))?;
            write_matrix_csv(&rot.values, &p)?;
            p
        }
    };
    if cli.plot {
        write_pgm(
            &rot.values,
            out_path(cli, &format!("{stem}.pgm"))?,
            16,
            &axis("sum frequency", &rot.v_axis),
            &axis("difference frequency", &rot.u_axis),
        )?;
    }
    Ok(path)
}

fn save_ascan(cli: &Cli, a: &AScan, stem: &str) -> Result<PathBuf> {
    let p = out_path(cli, &format!("{stem}.csv"))?;
    write_ascan_csv(a, &p)?;
    if cli.plot {
        let svg = line_plot(
            &[Series {
                label: "A-scan",
                x: &a.depth_axis,
                y: &a.amplitude,
            }],
            "A-scan",
            "depth (um)",
            "amplitude",
        );
        std::fs::write(out_path(cli, &format!("{stem}.svg"))?, svg)?;
    }
    Ok(p)
}

fn read_rotated_input(path: &Path) -> Result<RotatedSpectrum> {
    read_rotated(path).map_err(|e| e.in_stage("read"))
}

/// Runs `config` with its outputs replaced by `outputs`.
fn run_only(cli: &Cli, mut config: PipelineConfig, outputs: Vec<OutputSpec>) -> Result<()> {
    config.outputs = outputs;
    config.validate()?;
    let manifest = run_with(&config, &cli.out, RunOptions { plot: cli.plot })?;
    print_json(&manifest.report)
}

fn output(kind: OutputKind, path: &str) -> OutputSpec {
    OutputSpec {
        kind,
        path: path.into(),
        format: None,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(src) => {
            let config = load(cli, src, "mirror")?;
            let sim = simulate_joint_spectrum(&simulation_request(&config, &config.object)?)
                .map_err(|e| e.in_stage("simulate"))?;
            let p = save_spectrum(cli, &sim.spectrum, "joint_spectrum")?;
            println!("{}", p.display());
        }
        Command::Stitch(src) => {
            let mut config = load(cli, src, "whole_spectrum")?;
            config.scan.mode = ScanMode::FdWhole;
            let sim = simulate_joint_spectrum(&simulation_request(&config, &config.object)?)
                .map_err(|e| e.in_stage("simulate"))?;
            let hist = to_time_histogram(&sim.spectrum, &config.detection, time_bin(&config))
                .map_err(|e| e.in_stage("acquire"))?;
            let frames = acquire_frames(&config, &hist).map_err(|e| e.in_stage("acquire"))?;
            let count = frames.len();
            let stitched = stitch_frames(&StitchPlan::new(frames)).map_err(|e| e.in_stage("stitch"))?;
            let p = save_spectrum(cli, &stitched.spectrum, "stitched")?;
            print_json(&serde_json::json!({ "frames": count, "gains": stitched.gains, "path": p }))?;
        }
        Command::Rotate { input } => {
            let js = read_joint_spectrum(input).map_err(|e| e.in_stage("read"))?;
            let rot = rotate45(&js).map_err(|e| e.in_stage("rotate"))?;
            println!("{}", save_rotated(cli, &rot, "rotated")?.display());
        }
        Command::CompFibre { input, source } => {
            let config = load(cli, source, "fibre_comp")?;
            let rot = read_rotated_input(input)?;
            let sv = fibre_shift_vector(&config.detection, &rot);
            let out = compensate_fibre(&rot, &sv).map_err(|e| e.in_stage("compensate_fibre"))?;
            println!("{}", save_rotated(cli, &out, "rotated_fibre")?.display());
        }
        Command::CompPump {
            input,
            mode,
            stretch,
            source,
        } => {
            let mut config = load(cli, source, "pump_comp")?;
            if let Some(s) = stretch {
                config.processing.stretch = match s {
                    Stretch::TwoPart => StretchMode::TwoPart,
                    Stretch::Continuous => StretchMode::Continuous,
                };
            }
            let rot = read_rotated_input(input)?;
            let options = pump_options(&config);
            let out = match mode {
                PumpMode::Data => {
                    let profile = estimate_row_frequencies(&rot);
                    compensate_pump(&rot, PumpCorrection::Data(&profile), options)
                }
                PumpMode::Model => {
                    compensate_pump(&rot, PumpCorrection::Model(pump_model(&config, &config.object)), options)
                }
            }
            .map_err(|e| e.in_stage("compensate_pump"))?;
            println!("{}", save_rotated(cli, &out, "rotated_pump")?.display());
        }
        Command::Ascan {
            input,
            path,
            no_dc_removal,
        } => {
            let rot = read_rotated_input(input)?;
            let options = AScanOptions {
                dc_removal: !no_dc_removal,
                ..AScanOptions::default()
            };
            let a = match path {
                AScanPath::RowAverage => ascan_row_average_with(&rot, options),
                AScanPath::Diagonal => ascan_2dft_diagonal_with(&rot, options),
            }
            .map_err(|e| e.in_stage("reconstruct"))?;
            println!("{}", save_ascan(cli, &a, "ascan")?.display());
        }
        Command::Fmap { input } => {
            let rot = read_rotated_input(input)?;
            let map = fourier_map(&rot).map_err(|e| e.in_stage("fourier_map"))?;
            let depth = |label: &str, d: &[f64]| HeatmapAxis {
                label: label.into(),
                units: "um".into(),
                start: d[0],
                step: d[1] - d[0],
                count: d.len(),
            };
            let p = match cli.format {
                SpectrumFormat::Csv => {
                    let p = out_path(cli, "fourier_map.csv")?;
                    write_matrix_csv(&map.values, &p)?;
                    p
                }
                SpectrumFormat::Qjs => {
                    let p = out_path(cli, "fourier_map.pgm")?;
                    write_pgm(
                        &map.values,
                        &p,
                        16,
                        &depth("sum-frequency conjugate depth", &map.v_depth),
                        &depth("depth", &map.u_depth),
                    )?;
                    p
                }
            };
            println!("{}", p.display());
        }
        Command::Falloff(src) => {
            let config = load(cli, src, "falloff")?;
            if config.falloff.is_none() {
                return Err(Error::Validation {
                    field: "falloff".into(),
                    message: "configuration has no [falloff] table".into(),
                });
            }
            run_only(cli, config, vec![output(OutputKind::Falloff, "falloff.json")])?;
        }
        Command::Artefacts(src) => {
            let config = load(cli, src, "glass")?;
            run_only(
                cli,
                config,
                vec![output(OutputKind::Artefacts, "artefacts.json"), output(OutputKind::Ascan, "ascan.csv")],
            )?;
        }
        Command::Classical(src) => {
            let config = load(cli, src, "classical")?;
            if config.scan.mode != ScanMode::Classical {
                return Err(Error::Validation {
                    field: "scan.mode".into(),
                    message: "classical subcommand needs mode = \"classical\"".into(),
                });
            }
            run_only(cli, config, vec![output(OutputKind::Ascan, "ascan.csv")])?;
        }
        Command::Td(src) => {
            let config = load(cli, src, "time_domain")?;
            if config.scan.mode != ScanMode::Td {
                return Err(Error::Validation {
                    field: "scan.mode".into(),
                    message: "td subcommand needs mode = \"td\"".into(),
                });
            }
            run_only(cli, config, vec![output(OutputKind::Trace, "trace.csv")])?;
        }
        Command::Run { config } => {
            let mut config = read_config(config)?;
            apply_overrides(cli, &mut config);
            config.validate()?;
            let manifest = run_with(&config, &cli.out, RunOptions { plot: cli.plot })?;
            print_json(&manifest)?;
        }
        Command::Preset { name, print, list } => {
            if *list || name.is_none() {
                for n in preset_names() {
                    println!("{n}");
                }
                return Ok(());
            }
            let name = name.as_deref().unwrap_or_default();
            let mut config = preset(name).map_err(|e| Error::Validation {
                field: "preset".into(),
                message: e.to_string(),
            })?;
            apply_overrides(cli, &mut config);
            if *print {
                print!("{}", config.to_toml()?);
                return Ok(());
            }
            config.validate()?;
            let manifest = run_with(&config, &cli.out, RunOptions { plot: cli.plot })?;
            print_json(&manifest)?;
        }
    }
    Ok(())
}
