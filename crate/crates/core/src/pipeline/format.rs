//! On-disk formats.
//!
//! A QJS1 file is a TOML header naming a sibling payload file of row-major
//! little-endian `f64` values. Rotated spectra carry a second payload with
//! one byte per bin for the mask. CSV files hold one matrix row per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{AScan, AxisKind, FrameMeta, JointSpectrum, Matrix, SpectralGrid};
use crate::error::{Error, Result};
use crate::forward::TimeDomainTrace;
use crate::preprocess::RotatedSpectrum;

pub const QJS_MAGIC: &str = "QJS1";
pub const QJS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisHeader {
    kind: String,
    units: String,
    start: f64,
    step: f64,
    count: usize,
    /// Exact centre and span, so the grid is restored bit for bit.
    center: f64,
    span: f64,
}

impl AxisHeader {
    fn from_grid(g: &SpectralGrid) -> Self {
        AxisHeader {
            kind: g.axis_kind.name().to_string(),
            units: g.axis_kind.units().to_string(),
            start: g.start(),
            step: g.step(),
            count: g.n_points,
            center: g.center,
            span: g.span,
        }
    }

    fn to_grid(&self, name: &str) -> Result<SpectralGrid> {
        let kind = AxisKind::parse(&self.kind)
            .ok_or_else(|| Error::Format(format!("{name}: unknown axis kind `{}`", self.kind)))?;
        if self.units != kind.units() {
            return Err(Error::Format(format!("{name}: units `{}` do not match kind `{}`", self.units, self.kind)));
        }
        let g = SpectralGrid::new(kind, self.center, self.span, self.count)?;
        let tol = 1e-9 * self.step.abs().max(1e-300);
        if (g.start() - self.start).abs() > 1e3 * tol || (g.step() - self.step).abs() > tol {
            return Err(Error::Format(format!("{name}: start/step disagree with centre/span")));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    #[serde(default)]
    provenance: Vec<String>,
    axis1: AxisHeader,
    axis2: AxisHeader,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_meta: Option<FrameMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_axis1: Option<AxisHeader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_axis2: Option<AxisHeader>,
}

const KIND_JOINT: &str = "joint_spectrum";
const KIND_ROTATED: &str = "rotated";

fn sibling(path: &Path, suffix: &str) -> (PathBuf, String) {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = format!("{stem}{suffix}");
    (path.with_file_name(&name), name)
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format(format!(
            "payload {} holds {} bytes, header implies {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_header(path: &Path, header: &Header) -> Result<()> {
    let text = toml::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn read_header(path: &Path, kind: &str) -> Result<Header> {
    let text = fs::read_to_string(path)?;
    let header: Header = toml::from_str(&text).map_err(|e| Error::Format(format!("header: {}", e.message())))?;
    if header.format != QJS_MAGIC {
        return Err(Error::Format(format!("expected format {QJS_MAGIC}, found `{}`", header.format)));
    }
    if header.version != QJS_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    if header.kind != kind {
        return Err(Error::Format(format!("expected a {kind} file, found `{}`", header.kind)));
    }
    Ok(header)
}

fn payload_path(header_path: &Path, name: &str) -> PathBuf {
    header_path.with_file_name(name)
}

/// Writes `path` (header) and `<stem>.bin` (payload) next to it.
pub fn write_joint_spectrum(js: &JointSpectrum, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (bin, bin_name) = sibling(path, ".bin");
    write_f64s(&bin, js.values().as_slice())?;
    write_header(
        path,
        &Header {
            format: QJS_MAGIC.into(),
            version: QJS_VERSION,
            kind: KIND_JOINT.into(),
            payload: bin_name,
            mask: None,
            provenance: js.provenance().to_vec(),
            axis1: AxisHeader::from_grid(&js.axis1),
            axis2: AxisHeader::from_grid(&js.axis2),
            frame_meta: js.frame_meta,
            source_axis1: None,
            source_axis2: None,
        },
    )
}

pub fn read_joint_spectrum(path: impl AsRef<Path>) -> Result<JointSpectrum> {
    let path = path.as_ref();
    let h = read_header(path, KIND_JOINT)?;
    let a1 = h.axis1.to_grid("axis1")?;
    let a2 = h.axis2.to_grid("axis2")?;
    let values = read_f64s(&payload_path(path, &h.payload), a1.n_points * a2.n_points)?;
    let mut js = JointSpectrum::new(a1, a2, Matrix::from_vec(a1.n_points, a2.n_points, values)?)?;
    js.frame_meta = h.frame_meta;
    js.set_provenance(h.provenance);
    Ok(js)
}

/// Rows follow the sum-frequency axis, columns the difference frequency.
pub fn write_rotated(rot: &RotatedSpectrum, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (bin, bin_name) = sibling(path, ".bin");
    let (mask, mask_name) = sibling(path, ".mask.bin");
    write_f64s(&bin, rot.values.as_slice())?;
    fs::write(&mask, rot.mask.iter().map(|m| *m as u8).collect::<Vec<u8>>())?;
    write_header(
        path,
        &Header {
            format: QJS_MAGIC.into(),
            version: QJS_VERSION,
            kind: KIND_ROTATED.into(),
            payload: bin_name,
            mask: Some(mask_name),
            provenance: rot.provenance.clone(),
            axis1: AxisHeader::from_grid(&rot.v_axis),
            axis2: AxisHeader::from_grid(&rot.u_axis),
            frame_meta: None,
            source_axis1: Some(AxisHeader::from_grid(&rot.source_axes.0)),
            source_axis2: Some(AxisHeader::from_grid(&rot.source_axes.1)),
        },
    )
}

pub fn read_rotated(path: impl AsRef<Path>) -> Result<RotatedSpectrum> {
    let path = path.as_ref();
    let h = read_header(path, KIND_ROTATED)?;
    let v_axis = h.axis1.to_grid("axis1")?;
    let u_axis = h.axis2.to_grid("axis2")?;
    let (rows, cols) = (v_axis.n_points, u_axis.n_points);
    let values = read_f64s(&payload_path(path, &h.payload), rows * cols)?;
    let mask_name = h.mask.as_deref().ok_or_else(|| Error::Format("rotated file lacks a mask payload".into()))?;
    let mask_bytes = fs::read(payload_path(path, mask_name))?;
    if mask_bytes.len() != rows * cols {
        return Err(Error::Format(format!(
            "mask holds {} bytes, header implies {}",
            mask_bytes.len(),
            rows * cols
        )));
    }
    let source = |a: &Option<AxisHeader>, name: &str| {
        a.as_ref()
            .ok_or_else(|| Error::Format(format!("rotated file lacks {name}")))
            .and_then(|a| a.to_grid(name))
    };
    Ok(RotatedSpectrum {
        values: Matrix::from_vec(rows, cols, values)?,
        u_axis,
        v_axis,
        mask: mask_bytes.iter().map(|b| *b != 0).collect(),
        source_axes: (source(&h.source_axis1, "source_axis1")?, source(&h.source_axis2, "source_axis2")?),
        provenance: h.provenance,
    })
}

/// One matrix row per line; `f64` display is the shortest exact decimal.
pub fn write_matrix_csv(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Format(format!("line {}: expected {c} columns, found {}", i + 1, row.len())));
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), values)
}

fn write_columns(path: &Path, header: &str, x: &[f64], y: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for (a, b) in x.iter().zip(y) {
        writeln!(out, "{a},{b}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ascan_csv(ascan: &AScan, path: impl AsRef<Path>) -> Result<()> {
    write_columns(path.as_ref(), "depth_um,amplitude", &ascan.depth_axis, &ascan.amplitude)
}

pub fn write_trace_csv(trace: &TimeDomainTrace, path: impl AsRef<Path>) -> Result<()> {
    write_columns(
        path.as_ref(),
        "stage_position_um,coincidences",
        &trace.stage_positions,
        &trace.coincidence_rate,
    )
}
