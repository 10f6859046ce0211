//! Shared domain types, unit conventions and grid helpers.
//!
//! Units used throughout the crate:
//!
//! | quantity   | unit |
//! |------------|------|
//! | wavelength | nm   |
//! | frequency  | THz  |
//! | time/delay | ps   |
//! | depth      | µm   |
//! | β₂ / β₃    | fs² / fs³ |
//!
//! Depth is one-way optical path in air, `z = c·t/2`, where `t` is the
//! conjugate of the difference frequency `ν₁ − ν₂`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light expressed as nm·THz (so `ν[THz] = C_NM_THZ / λ[nm]`).
pub const C_NM_THZ: f64 = 299_792.458;
/// Speed of light in µm/ps.
pub const C_UM_PER_PS: f64 = 299.792_458;

const FS2_TO_PS2: f64 = 1e-6;
const FS3_TO_PS3: f64 = 1e-9;

pub fn wavelength_to_frequency(wavelength_nm: f64) -> Result<f64> {
    if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
        return Err(Error::invalid(format!(
            "wavelength must be positive, got {wavelength_nm}"
        )));
    }
    Ok(C_NM_THZ / wavelength_nm)
}

pub fn frequency_to_wavelength(frequency_thz: f64) -> Result<f64> {
    if !(frequency_thz > 0.0) || !frequency_thz.is_finite() {
        return Err(Error::invalid(format!(
            "frequency must be positive, got {frequency_thz}"
        )));
    }
    Ok(C_NM_THZ / frequency_thz)
}

/// Converts a small wavelength bandwidth around `center_nm` to THz (`c·Δλ/λ²`).
pub fn bandwidth_nm_to_thz(center_nm: f64, fwhm_nm: f64) -> f64 {
    C_NM_THZ * fwhm_nm / (center_nm * center_nm)
}

pub fn bandwidth_thz_to_nm(center_nm: f64, fwhm_thz: f64) -> f64 {
    fwhm_thz * center_nm * center_nm / C_NM_THZ
}

/// Round-trip delay (ps) of a one-way optical path offset (µm).
pub fn delay_from_depth(depth_um: f64) -> f64 {
    2.0 * depth_um / C_UM_PER_PS
}

pub fn depth_from_delay(delay_ps: f64) -> f64 {
    C_UM_PER_PS * delay_ps / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// nm
    Wavelength,
    /// THz
    DifferenceFrequency,
    /// THz
    SumFrequency,
    /// ps
    ArrivalTime,
}

impl AxisKind {
    pub fn units(self) -> &'static str {
        match self {
            AxisKind::Wavelength => "nm",
            AxisKind::DifferenceFrequency | AxisKind::SumFrequency => "THz",
            AxisKind::ArrivalTime => "ps",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AxisKind::Wavelength => "wavelength",
            AxisKind::DifferenceFrequency => "difference_frequency",
            AxisKind::SumFrequency => "sum_frequency",
            AxisKind::ArrivalTime => "arrival_time",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wavelength" => Some(AxisKind::Wavelength),
            "difference_frequency" => Some(AxisKind::DifferenceFrequency),
            "sum_frequency" => Some(AxisKind::SumFrequency),
            "arrival_time" => Some(AxisKind::ArrivalTime),
            _ => None,
        }
    }
}

/// A uniform sample axis. For wavelength grids `center`/`span` are in nm, for
/// arrival-time grids in ps and for frequency grids in THz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub center: f64,
    pub span: f64,
    pub n_points: usize,
    pub axis_kind: AxisKind,
}

pub const MIN_GRID_POINTS: usize = 8;

/// Builds a uniform wavelength grid centred on `center` nm.
pub fn make_grid(center: f64, span: f64, n: usize) -> Result<SpectralGrid> {
    SpectralGrid::new(AxisKind::Wavelength, center, span, n)
}

impl SpectralGrid {
    pub fn new(axis_kind: AxisKind, center: f64, span: f64, n_points: usize) -> Result<Self> {
        if n_points < MIN_GRID_POINTS {
            return Err(Error::invalid(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {n_points}"
            )));
        }
        if !(span > 0.0) || !span.is_finite() || !center.is_finite() {
            return Err(Error::invalid(format!("grid span must be positive, got {span}")));
        }
        if axis_kind == AxisKind::Wavelength && !(center - span / 2.0 > 0.0) {
            return Err(Error::invalid(format!(
                "wavelength grid {center}±{} nm reaches non-positive values",
                span / 2.0
            )));
        }
        Ok(SpectralGrid {
            center,
            span,
            n_points,
            axis_kind,
        })
    }

    pub fn from_start_step(axis_kind: AxisKind, start: f64, step: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        let span = step * (n_points - 1) as f64;
        Self::new(axis_kind, start + span / 2.0, span, n_points)
    }

    pub fn start(&self) -> f64 {
        self.center - self.span / 2.0
    }

    pub fn end(&self) -> f64 {
        self.center + self.span / 2.0
    }

    pub fn step(&self) -> f64 {
        self.span / (self.n_points - 1) as f64
    }

    pub fn value(&self, index: usize) -> f64 {
        self.start() + self.step() * index as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.value(i)).collect()
    }

    /// Fractional index of `x` on this axis.
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x - self.start()) / self.step()
    }

    /// Nearest sample index of `x`, or `None` outside the grid.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let f = self.fractional_index(x).round();
        if f < 0.0 || f > (self.n_points - 1) as f64 {
            None
        } else {
            Some(f as usize)
        }
    }

    /// Optical frequency (THz) of each sample of a wavelength grid.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.axis_kind != AxisKind::Wavelength {
            return Err(Error::invalid(format!(
                "frequency conversion needs a wavelength axis, got {}",
                self.axis_kind.name()
            )));
        }
        self.values().into_iter().map(wavelength_to_frequency).collect()
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub delay1: f64,
    pub delay2: f64,
    pub window: f64,
}

/// Coincidence rate (or counts) over two detection axes. Rows follow
/// `axis1` (channel 1), columns follow `axis2`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectrum {
    pub axis1: SpectralGrid,
    pub axis2: SpectralGrid,
    values: Matrix,
    pub frame_meta: Option<FrameMeta>,
    provenance: Vec<String>,
}

impl JointSpectrum {
    pub fn new(axis1: SpectralGrid, axis2: SpectralGrid, values: Matrix) -> Result<Self> {
        if values.shape() != (axis1.n_points, axis2.n_points) {
            return Err(Error::Shape(format!(
                "values are {:?}, axes are {}x{}",
                values.shape(),
                axis1.n_points,
                axis2.n_points
            )));
        }
        if let Some(bad) = values.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!(
                "joint spectrum values must be finite and non-negative, found {bad}"
            )));
        }
        Ok(JointSpectrum {
            axis1,
            axis2,
            values,
            frame_meta: None,
            provenance: Vec::new(),
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    /// Returns a copy carrying new values and one more provenance entry.
    pub fn derive(&self, values: Matrix, step: impl Into<String>) -> Result<Self> {
        let mut out = JointSpectrum::new(self.axis1, self.axis2, values)?;
        out.frame_meta = self.frame_meta;
        out.provenance = self.provenance.clone();
        out.provenance.push(step.into());
        Ok(out)
    }

    pub fn with_provenance(mut self, step: impl Into<String>) -> Self {
        self.provenance.push(step.into());
        self
    }

    pub(crate) fn set_provenance(&mut self, provenance: Vec<String>) {
        self.provenance = provenance;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dispersion {
    /// fs²
    #[serde(default)]
    pub beta2: f64,
    /// fs³
    #[serde(default)]
    pub beta3: f64,
}

impl Dispersion {
    pub fn new(beta2: f64, beta3: f64) -> Self {
        Dispersion { beta2, beta3 }
    }

    pub fn is_zero(&self) -> bool {
        self.beta2 == 0.0 && self.beta3 == 0.0
    }

    /// Spectral phase (rad) at detuning `dnu` THz from the expansion centre.
    pub fn phase(&self, dnu: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * dnu;
        self.beta2 * FS2_TO_PS2 / 2.0 * w * w + self.beta3 * FS3_TO_PS3 / 6.0 * w * w * w
    }

    pub fn beta2_ps2(&self) -> f64 {
        self.beta2 * FS2_TO_PS2
    }

    pub fn beta3_ps3(&self) -> f64 {
        self.beta3 * FS3_TO_PS3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interface {
    /// One-way optical path relative to the reference-arm zero, µm.
    pub position: f64,
    /// Amplitude reflectivity in (0, 1].
    pub reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayeredObject {
    pub interfaces: Vec<Interface>,
    /// One entry per gap between consecutive interfaces (may be empty).
    #[serde(default)]
    pub segment_dispersion: Vec<Dispersion>,
    #[serde(default)]
    pub arm_imbalance: Dispersion,
}

impl LayeredObject {
    pub fn new(interfaces: Vec<Interface>) -> Result<Self> {
        let obj = LayeredObject {
            interfaces,
            segment_dispersion: Vec::new(),
            arm_imbalance: Dispersion::default(),
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn mirror(position: f64) -> Self {
        LayeredObject {
            interfaces: vec![Interface {
                position,
                reflectivity: 1.0,
            }],
            segment_dispersion: Vec::new(),
            arm_imbalance: Dispersion::default(),
        }
    }

    /// Interfaces at `positions` sharing one reflectivity.
    pub fn layers(positions: &[f64], reflectivity: f64) -> Result<Self> {
        Self::new(
            positions
                .iter()
                .map(|&position| Interface {
                    position,
                    reflectivity,
                })
                .collect(),
        )
    }

    pub fn with_arm_imbalance(mut self, imbalance: Dispersion) -> Self {
        self.arm_imbalance = imbalance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.interfaces.is_empty() {
            return Err(Error::validation("object.interfaces", "at least one interface is required"));
        }
        for (i, w) in self.interfaces.windows(2).enumerate() {
            if !(w[1].position > w[0].position) {
                return Err(Error::validation(
                    format!("object.interfaces[{}].position", i + 1),
                    "positions must be strictly increasing",
                ));
            }
        }
        for (i, iface) in self.interfaces.iter().enumerate() {
            if !(iface.reflectivity > 0.0 && iface.reflectivity <= 1.0) {
                return Err(Error::validation(
                    format!("object.interfaces[{i}].reflectivity"),
                    "reflectivity must lie in (0, 1]",
                ));
            }
            if !iface.position.is_finite() {
                return Err(Error::validation(format!("object.interfaces[{i}].position"), "not finite"));
            }
        }
        if !self.segment_dispersion.is_empty()
            && self.segment_dispersion.len() != self.interfaces.len() - 1
        {
            return Err(Error::validation(
                "object.segment_dispersion",
                format!(
                    "expected {} gap entries, got {}",
                    self.interfaces.len() - 1,
                    self.segment_dispersion.len()
                ),
            ));
        }
        Ok(())
    }

    /// `Σ r² > 1` is unphysical but still simulated.
    pub fn exceeds_energy_bound(&self) -> bool {
        self.interfaces.iter().map(|i| i.reflectivity.powi(2)).sum::<f64>() > 1.0
    }

    pub fn reflectivity_sum(&self) -> f64 {
        self.interfaces.iter().map(|i| i.reflectivity).sum()
    }

    /// The object with every position shifted so it is measured relative to
    /// a reference arm offset of `reference_delay` µm.
    pub fn relative_positions(&self, reference_delay: f64) -> Vec<f64> {
        self.interfaces.iter().map(|i| i.position - reference_delay).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Photon centre wavelength, nm.
    pub center_wavelength: f64,
    /// Single-photon intensity FWHM, THz.
    pub diagonal_fwhm: f64,
    /// Joint-spectrum anti-diagonal FWHM at the photon wavelength, nm.
    pub antidiagonal_fwhm: f64,
    pub pump_center: f64,
    pub pump_fwhm: f64,
    /// pairs/s
    pub pair_rate: f64,
    pub hom_visibility: f64,
}

impl SourceSpec {
    /// Single-frame source: 6.3 THz photons, 3.2 nm anti-diagonal, 10 nm pump.
    pub fn single_frame() -> Self {
        SourceSpec {
            center_wavelength: 1550.0,
            diagonal_fwhm: 6.3,
            antidiagonal_fwhm: 3.2,
            pump_center: 775.0,
            pump_fwhm: 10.0,
            pair_rate: 2.0e5,
            hom_visibility: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("source.center_wavelength", self.center_wavelength),
            ("source.diagonal_fwhm", self.diagonal_fwhm),
            ("source.antidiagonal_fwhm", self.antidiagonal_fwhm),
            ("source.pump_center", self.pump_center),
            ("source.pump_fwhm", self.pump_fwhm),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(field, "must be positive"));
            }
        }
        if !(self.pair_rate >= 0.0) {
            return Err(Error::validation("source.pair_rate", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.hom_visibility) {
            return Err(Error::validation("source.hom_visibility", "must lie in [0, 1]"));
        }
        let half = self.center_wavelength / 2.0;
        if (self.pump_center - half).abs() > 0.1 * half {
            return Err(Error::validation(
                "source.pump_center",
                "must be within 10% of half the photon wavelength",
            ));
        }
        Ok(())
    }

    pub fn center_frequency(&self) -> f64 {
        C_NM_THZ / self.center_wavelength
    }

    /// Anti-diagonal envelope FWHM expressed in sum frequency `ν₁ + ν₂` (THz).
    ///
    /// A cut along `λ₁ = λ₂` moves both photons together, so the sum
    /// frequency changes twice as fast as either photon. The pump spectrum
    /// caps the width: a narrowband pump yields a narrow anti-diagonal.
    pub fn sum_frequency_fwhm(&self) -> f64 {
        let from_antidiagonal = 2.0 * bandwidth_nm_to_thz(self.center_wavelength, self.antidiagonal_fwhm);
        let from_pump = bandwidth_nm_to_thz(self.pump_center, self.pump_fwhm);
        from_antidiagonal.min(from_pump)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibreSpec {
    pub length: f64,
    /// `[t₀ (ps), D (ps/nm), S/2 (ps/nm²), …]` in powers of `λ − λ_ref`.
    pub group_delay_coeffs: Vec<f64>,
    pub lambda_ref: f64,
}

impl FibreSpec {
    /// Linear fibre with slope `d` ps/nm.
    pub fn linear(length: f64, t0: f64, d: f64, lambda_ref: f64) -> Self {
        FibreSpec {
            length,
            group_delay_coeffs: vec![t0, d],
            lambda_ref,
        }
    }

    pub fn quadratic(length: f64, t0: f64, d: f64, half_slope: f64, lambda_ref: f64) -> Self {
        FibreSpec {
            length,
            group_delay_coeffs: vec![t0, d, half_slope],
            lambda_ref,
        }
    }

    pub fn t0(&self) -> f64 {
        self.group_delay_coeffs.first().copied().unwrap_or(0.0)
    }

    pub fn linear_slope(&self) -> f64 {
        self.group_delay_coeffs.get(1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpLeak {
    pub channel: u8,
    /// counts/s
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSpec {
    pub fibre1: FibreSpec,
    pub fibre2: FibreSpec,
    /// ps
    pub time_bin: f64,
    /// ps
    #[serde(default = "default_coincidence_window")]
    pub coincidence_window: f64,
    /// nm
    #[serde(default)]
    pub spectral_resolution_fwhm: f64,
    /// counts/s
    #[serde(default)]
    pub background_rate: f64,
    #[serde(default)]
    pub pump_leak: Option<PumpLeak>,
}

fn default_coincidence_window() -> f64 {
    12_500.0
}

impl DetectionSpec {
    /// Two identical 5 km spools calibrated so one 12.5 ns window spans 102 nm.
    pub fn fibre_spools() -> Self {
        let d = 12_500.0 / 102.0;
        let fibre = FibreSpec::quadratic(5.0, 0.0, d, 0.5 * 0.056 * 5.0, 1550.0);
        DetectionSpec {
            fibre1: fibre.clone(),
            fibre2: fibre,
            time_bin: 25.0,
            coincidence_window: 12_500.0,
            spectral_resolution_fwhm: 0.0,
            background_rate: 0.0,
            pump_leak: None,
        }
    }

    /// Ideal detection: linear fibres, no blur, no background.
    pub fn ideal() -> Self {
        let d = 12_500.0 / 102.0;
        let fibre = FibreSpec::linear(5.0, 0.0, d, 1550.0);
        DetectionSpec {
            fibre1: fibre.clone(),
            fibre2: fibre,
            time_bin: 25.0,
            coincidence_window: 12_500.0,
            spectral_resolution_fwhm: 0.0,
            background_rate: 0.0,
            pump_leak: None,
        }
    }

    pub fn with_resolution(mut self, fwhm_nm: f64) -> Self {
        self.spectral_resolution_fwhm = fwhm_nm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_bin > 0.0) {
            return Err(Error::validation("detection.time_bin", "must be positive"));
        }
        if !(self.coincidence_window >= self.time_bin) {
            return Err(Error::validation(
                "detection.coincidence_window",
                "must be at least one time bin",
            ));
        }
        if !(self.spectral_resolution_fwhm >= 0.0) {
            return Err(Error::validation("detection.spectral_resolution_fwhm", "must be >= 0"));
        }
        if !(self.background_rate >= 0.0) {
            return Err(Error::validation("detection.background_rate", "must be >= 0"));
        }
        for (name, f) in [("detection.fibre1", &self.fibre1), ("detection.fibre2", &self.fibre2)] {
            if f.group_delay_coeffs.len() < 2 {
                return Err(Error::validation(
                    format!("{name}.group_delay_coeffs"),
                    "need at least [t0, D]",
                ));
            }
        }
        if let Some(leak) = &self.pump_leak {
            if leak.channel != 1 && leak.channel != 2 {
                return Err(Error::validation("detection.pump_leak.channel", "must be 1 or 2"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AScanKind {
    FdQoct,
    TdQoct,
    Classical,
}

/// Depth profile. `depth_axis` starts at zero and is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct AScan {
    pub depth_axis: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub source_kind: AScanKind,
}

impl AScan {
    pub fn new(depth_axis: Vec<f64>, amplitude: Vec<f64>, source_kind: AScanKind) -> Result<Self> {
        if depth_axis.len() != amplitude.len() || depth_axis.len() < 2 {
            return Err(Error::Shape(format!(
                "depth axis has {} samples, amplitude {}",
                depth_axis.len(),
                amplitude.len()
            )));
        }
        if depth_axis[0] != 0.0 || depth_axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("depth axis must start at 0 and increase"));
        }
        if amplitude.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::invalid("A-scan amplitude must be finite and non-negative"));
        }
        Ok(AScan {
            depth_axis,
            amplitude,
            source_kind,
        })
    }

    pub fn depth_step(&self) -> f64 {
        self.depth_axis[1] - self.depth_axis[0]
    }

    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    /// Linear interpolation of the amplitude at `depth` µm.
    pub fn amplitude_at(&self, depth: f64) -> f64 {
        let f = depth / self.depth_step();
        if f < 0.0 || f > (self.len() - 1) as f64 {
            return 0.0;
        }
        let i = f.floor() as usize;
        if i + 1 >= self.len() {
            return self.amplitude[self.len() - 1];
        }
        let t = f - i as f64;
        self.amplitude[i] * (1.0 - t) + self.amplitude[i + 1] * t
    }
}
