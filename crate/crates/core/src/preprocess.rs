//! Joint-spectrum pre-processing: the 45° rotation onto difference/sum
//! frequency axes, fibre-dispersion compensation by integer column rolls and
//! pump-dispersion compensation by per-row stretching.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::nonlinear_delay;
use crate::domain::{AxisKind, DetectionSpec, Dispersion, JointSpectrum, Matrix, SpectralGrid, C_NM_THZ};
use crate::error::{Error, Result};
use crate::fft::{fft_padded, next_pow2};
use crate::signal::envelope_baseline;

/// Joint spectrum resampled onto difference frequency `u = ν₁ − ν₂`
/// (columns) and sum frequency `v = ν₁ + ν₂` (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedSpectrum {
    pub values: Matrix,
    pub u_axis: SpectralGrid,
    pub v_axis: SpectralGrid,
    /// Row-major; `true` marks bins outside the measured footprint.
    pub mask: Vec<bool>,
    /// Wavelength axes the data came from, for the inverse resampling.
    pub source_axes: (SpectralGrid, SpectralGrid),
    pub provenance: Vec<String>,
}

impl RotatedSpectrum {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn is_masked(&self, r: usize, c: usize) -> bool {
        self.mask[r * self.cols() + c]
    }

    pub fn unmasked_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    /// Column index of zero difference frequency.
    pub fn center_column(&self) -> usize {
        self.u_axis.index_of(0.0).unwrap_or(self.cols() / 2)
    }

    fn derive(&self, values: Matrix, mask: Vec<bool>, step: String) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.push(step);
        RotatedSpectrum {
            values,
            u_axis: self.u_axis,
            v_axis: self.v_axis,
            mask,
            source_axes: self.source_axes,
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftVector {
    /// Cyclic roll per column, in row bins (positive moves data to higher rows).
    pub shifts: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowFrequency {
    /// cycles/THz, i.e. the fringe delay in ps
    pub fringe_frequency: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowFrequencyProfile {
    pub rows: Vec<RowFrequency>,
}

impl RowFrequencyProfile {
    /// The most reliable row: strongest fringe energy among rows whose
    /// confidence is within 10% of the best.
    pub fn reference_row(&self, rot: &RotatedSpectrum) -> Option<usize> {
        let best = self.rows.iter().map(|r| r.confidence).fold(0.0, f64::max);
        if best <= 0.0 {
            return None;
        }
        (0..self.rows.len())
            .filter(|&r| self.rows[r].confidence >= 0.9 * best && self.rows[r].fringe_frequency > 0.0)
            .max_by(|&a, &b| row_energy(rot, a).total_cmp(&row_energy(rot, b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StretchMode {
    /// Split the fringe region at zero difference frequency and resample
    /// each half about that column.
    #[default]
    TwoPart,
    /// Resample the whole row about zero difference frequency.
    Continuous,
}

/// Known interferometer dispersion used to predict each row's fringe delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpModel {
    pub imbalance: Dispersion,
    /// Expansion centre of the dispersion phase (photon centre), THz.
    pub center_frequency: f64,
    /// Fringe delay (ps) of the feature the stretch is tuned for.
    pub design_delay: f64,
}

impl PumpModel {
    /// Extra fringe delay (ps) on the row at sum frequency `sum`.
    ///
    /// With `ν₁,₂ = ν₀ + x ± u` the β₂ phase difference is `8π²β₂xu` and the
    /// β₃ one contributes `8π³β₃x²u`, i.e. delays `2πβ₂x` and `2π²β₃x²`.
    pub fn row_delay_offset(&self, sum: f64) -> f64 {
        let x = (sum - 2.0 * self.center_frequency) / 2.0;
        let pi = std::f64::consts::PI;
        2.0 * pi * self.imbalance.beta2_ps2() * x + 2.0 * pi * pi * self.imbalance.beta3_ps3() * x * x
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PumpCorrection<'a> {
    Data(&'a RowFrequencyProfile),
    Model(PumpModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpOptions {
    pub mode: StretchMode,
    /// Fringe-region threshold as a fraction of the peak column mean.
    pub region_threshold: f64,
    /// Rows below this confidence pass through (data mode).
    pub min_confidence: f64,
}

impl Default for PumpOptions {
    fn default() -> Self {
        PumpOptions {
            mode: StretchMode::TwoPart,
            region_threshold: 0.05,
            min_confidence: 0.2,
        }
    }
}

fn row_energy(rot: &RotatedSpectrum, r: usize) -> f64 {
    rot.values.row(r).iter().map(|v| v * v).sum()
}

/// Local frequency spacing (THz) of one wavelength bin at `lambda`.
fn local_frequency_step(axis: &SpectralGrid, lambda: f64) -> f64 {
    C_NM_THZ * axis.step() / (lambda * lambda)
}

/// Bilinear sample of `m` at fractional `(fr, fc)`; `None` outside.
fn bilinear(m: &Matrix, fr: f64, fc: f64) -> Option<f64> {
    let (rows, cols) = m.shape();
    let eps = 1e-9;
    if !(fr >= -eps && fc >= -eps && fr <= (rows - 1) as f64 + eps && fc <= (cols - 1) as f64 + eps) {
        return None;
    }
    let fr = fr.clamp(0.0, (rows - 1) as f64);
    let fc = fc.clamp(0.0, (cols - 1) as f64);
    let r0 = (fr.floor() as usize).min(rows - 2);
    let c0 = (fc.floor() as usize).min(cols - 2);
    let (tr, tc) = (fr - r0 as f64, fc - c0 as f64);
    let top = m.get(r0, c0) * (1.0 - tc) + m.get(r0, c0 + 1) * tc;
    let bottom = m.get(r0 + 1, c0) * (1.0 - tc) + m.get(r0 + 1, c0 + 1) * tc;
    Some(top * (1.0 - tr) + bottom * tr)
}

fn frequency_range(axis: &SpectralGrid) -> (f64, f64) {
    (C_NM_THZ / axis.end(), C_NM_THZ / axis.start())
}

/// Resamples a wavelength-axis joint spectrum onto uniform difference and
/// sum frequency axes by bilinear interpolation. Values are treated as
/// counts per bin, so each sample is scaled by the ratio of bin areas and
/// the total is preserved. Arrival-time data must be calibrated first.
pub fn rotate45(js: &JointSpectrum) -> Result<RotatedSpectrum> {
    if js.axis1.axis_kind != AxisKind::Wavelength || js.axis2.axis_kind != AxisKind::Wavelength {
        return Err(Error::invalid("rotation needs wavelength axes; calibrate arrival times first"));
    }
    let (lo1, hi1) = frequency_range(&js.axis1);
    let (lo2, hi2) = frequency_range(&js.axis2);
    let (w1, w2) = (hi1 - lo1, hi2 - lo2);
    if w1 / w2 > 2.0 || w2 / w1 > 2.0 {
        return Err(Error::invalid("axis spans differ by more than 2x"));
    }
    let step = 0.5 * (w1 / (js.axis1.n_points - 1) as f64 + w2 / (js.axis2.n_points - 1) as f64);

    let u_half = ((hi1 - lo2).max(hi2 - lo1) / step).floor() as usize;
    let n_u = 2 * u_half + 1;
    let u_axis = SpectralGrid::from_start_step(AxisKind::DifferenceFrequency, -(u_half as f64) * step, step, n_u)?;
    let (v_lo, v_hi) = (lo1 + lo2, hi1 + hi2);
    let v_half = ((v_hi - v_lo) / 2.0 / step).floor() as usize;
    let n_v = 2 * v_half + 1;
    let v_center = 0.5 * (v_lo + v_hi);
    let v_axis = SpectralGrid::from_start_step(AxisKind::SumFrequency, v_center - v_half as f64 * step, step, n_v)?;

    let src = js.values();
    let area = step * step / 2.0;
    let mut values = Matrix::zeros(n_v, n_u);
    let mut mask = vec![false; n_v * n_u];
    values
        .as_mut_slice()
        .par_chunks_mut(n_u)
        .zip(mask.par_chunks_mut(n_u))
        .enumerate()
        .for_each(|(r, (row, mrow))| {
            let v = v_axis.value(r);
            for c in 0..n_u {
                let u = u_axis.value(c);
                let (nu1, nu2) = ((v + u) / 2.0, (v - u) / 2.0);
                let (l1, l2) = (C_NM_THZ / nu1, C_NM_THZ / nu2);
                match bilinear(src, js.axis1.fractional_index(l1), js.axis2.fractional_index(l2)) {
                    Some(x) => {
                        let cell = local_frequency_step(&js.axis1, l1) * local_frequency_step(&js.axis2, l2);
                        row[c] = x * area / cell;
                    }
                    None => mrow[c] = true,
                }
            }
        });
    let mut provenance = js.provenance().to_vec();
    provenance.push("rotate45".into());
    Ok(RotatedSpectrum {
        values,
        u_axis,
        v_axis,
        mask,
        source_axes: (js.axis1, js.axis2),
        provenance,
    })
}

/// Inverse resampling back onto the original wavelength axes. Bins whose
/// interpolation stencil touches the mask are set to zero.
pub fn unrotate45(rot: &RotatedSpectrum) -> Result<JointSpectrum> {
    let (a1, a2) = rot.source_axes;
    let l1 = a1.values();
    let l2 = a2.values();
    let area = rot.u_axis.step() * rot.v_axis.step() / 2.0;
    let cols = rot.cols();
    let mut out = Matrix::zeros(a1.n_points, a2.n_points);
    out.as_mut_slice()
        .par_chunks_mut(a2.n_points)
        .enumerate()
        .for_each(|(i, row)| {
            let nu1 = C_NM_THZ / l1[i];
            for (j, o) in row.iter_mut().enumerate() {
                let nu2 = C_NM_THZ / l2[j];
                let fr = rot.v_axis.fractional_index(nu1 + nu2);
                let fc = rot.u_axis.fractional_index(nu1 - nu2);
                let (r0, c0) = (fr.floor().max(0.0) as usize, fc.floor().max(0.0) as usize);
                let touches_mask = [(r0, c0), (r0 + 1, c0), (r0, c0 + 1), (r0 + 1, c0 + 1)]
                    .iter()
                    .any(|&(r, c)| r >= rot.rows() || c >= cols || rot.mask[r * cols + c]);
                if touches_mask {
                    continue;
                }
                if let Some(x) = bilinear(&rot.values, fr, fc) {
                    let cell = local_frequency_step(&a1, l1[i]) * local_frequency_step(&a2, l2[j]);
                    *o = (x * cell / area).max(0.0);
                }
            }
        });
    let mut js = JointSpectrum::new(a1, a2, out)?;
    js.set_provenance(rot.provenance.clone());
    Ok(js.with_provenance("unrotate45"))
}

/// Column rolls that straighten the ridge bent by the fibres' nonlinear
/// group delay. Each column's ridge point `ν₁,₂ = (v_c ± u)/2` is displaced
/// in sum frequency by `δν₁ + δν₂`, with `δνᵢ = −(c/λᵢ²)·Nᵢ(λᵢ)/Dᵢ` and `Nᵢ`
/// the nonlinear part of fibre `i`'s delay curve.
pub fn fibre_shift_vector(detection: &DetectionSpec, rot: &RotatedSpectrum) -> ShiftVector {
    let v_center = rot.v_axis.center;
    let dv = rot.v_axis.step();
    let rows = rot.rows() as i64;
    let wavelength_error = |fibre: &crate::domain::FibreSpec, nu: f64| {
        let lambda = C_NM_THZ / nu;
        let d = fibre.linear_slope();
        if d == 0.0 {
            return 0.0;
        }
        -(C_NM_THZ / (lambda * lambda)) * nonlinear_delay(fibre, lambda) / d
    };
    let shifts = (0..rot.cols())
        .map(|c| {
            let u = rot.u_axis.value(c);
            let (nu1, nu2) = ((v_center + u) / 2.0, (v_center - u) / 2.0);
            let displacement = wavelength_error(&detection.fibre1, nu1) + wavelength_error(&detection.fibre2, nu2);
            let s = -(displacement / dv).round() as i64;
            s.clamp(-(rows - 1), rows - 1)
        })
        .collect();
    ShiftVector { shifts }
}

/// Cyclically rolls each column (values and mask together) by its shift.
pub fn compensate_fibre(rot: &RotatedSpectrum, sv: &ShiftVector) -> Result<RotatedSpectrum> {
    if sv.shifts.len() != rot.cols() {
        return Err(Error::Shape(format!(
            "shift vector has {} entries for {} columns",
            sv.shifts.len(),
            rot.cols()
        )));
    }
    let (rows, cols) = rot.values.shape();
    let mut values = Matrix::zeros(rows, cols);
    let mut mask = vec![false; rows * cols];
    for (c, &s) in sv.shifts.iter().enumerate() {
        for r in 0..rows {
            let to = (r as i64 + s).rem_euclid(rows as i64) as usize;
            values.set(to, c, rot.values.get(r, c));
            mask[to * cols + c] = rot.mask[r * cols + c];
        }
    }
    let nonzero = sv.shifts.iter().filter(|s| **s != 0).count();
    Ok(rot.derive(values, mask, format!("compensate_fibre(nonzero_shifts={nonzero})")))
}

fn refine_peak(mag: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= mag.len() {
        return k as f64;
    }
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        k as f64
    } else {
        k as f64 + 0.5 * (a - c) / denom
    }
}

/// Dominant fringe frequency of every row (zero-padded transform peak with
/// quadratic refinement). Confidence is the share of the row's non-DC
/// spectral energy inside the peak lobe.
pub fn estimate_row_frequencies(rot: &RotatedSpectrum) -> RowFrequencyProfile {
    let cols = rot.cols();
    let n_fft = 8 * next_pow2(cols);
    let du = rot.u_axis.step();
    let energies: Vec<f64> = (0..rot.rows()).map(|r| row_energy(rot, r)).collect();
    let max_energy = energies.iter().copied().fold(0.0, f64::max);
    let rows = (0..rot.rows())
        .into_par_iter()
        .map(|r| {
            let none = RowFrequency {
                fringe_frequency: 0.0,
                confidence: 0.0,
            };
            let support = (0..cols).filter(|&c| !rot.is_masked(r, c)).count();
            if support < 4 || energies[r] <= 1e-12 * max_energy {
                return none;
            }
            let row = rot.values.row(r);
            let baseline = envelope_baseline(row);
            let centred: Vec<f64> = row.iter().zip(&baseline).map(|(v, b)| v - b).collect();
            let spec = fft_padded(&centred, n_fft);
            let mag: Vec<f64> = spec[..=n_fft / 2].iter().map(|z| z.norm()).collect();
            let lobe = (n_fft as f64 / support as f64).ceil() as usize;
            let k_min = 2 * lobe;
            if k_min + 2 >= mag.len() {
                return none;
            }
            let total: f64 = mag[k_min..].iter().map(|m| m * m).sum();
            if total <= 0.0 {
                return none;
            }
            let kp = (k_min..mag.len())
                .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
                .expect("non-empty search range");
            let peak_energy: f64 = mag[kp.saturating_sub(lobe).max(k_min)..(kp + lobe + 1).min(mag.len())]
                .iter()
                .map(|m| m * m)
                .sum();
            RowFrequency {
                fringe_frequency: refine_peak(&mag, kp) / (n_fft as f64 * du),
                confidence: (peak_energy / total).clamp(0.0, 1.0),
            }
        })
        .collect();
    RowFrequencyProfile { rows }
}

/// Contiguous column span whose mean absolute value exceeds `threshold`
/// times the maximum column mean.
fn fringe_region(rot: &RotatedSpectrum, threshold: f64) -> Option<(usize, usize)> {
    let (rows, cols) = rot.values.shape();
    let means: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| rot.values.get(r, c).abs()).sum::<f64>() / rows as f64)
        .collect();
    let peak = means.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let first = means.iter().position(|m| *m >= threshold * peak)?;
    let last = means.iter().rposition(|m| *m >= threshold * peak)?;
    Some((first, last))
}

fn linear_sample(row: &[f64], x: f64) -> f64 {
    if x < 0.0 || x > (row.len() - 1) as f64 {
        return 0.0;
    }
    let i = (x.floor() as usize).min(row.len() - 2);
    let t = x - i as f64;
    row[i] * (1.0 - t) + row[i + 1] * t
}

/// Resamples `row[lo..=hi]` about `center` so that the fringe frequency is
/// multiplied by `factor`.
fn stretch_row(row: &[f64], out: &mut [f64], center: usize, lo: usize, hi: usize, factor: f64) {
    for c in lo..=hi {
        let x = center as f64 + (c as f64 - center as f64) * factor;
        out[c] = linear_sample(row, x).max(0.0);
    }
}

/// Equalises the fringe frequency of every row to that of a reference row,
/// undoing the row-dependent delay that washes out the row average.
pub fn compensate_pump(rot: &RotatedSpectrum, correction: PumpCorrection, options: PumpOptions) -> Result<RotatedSpectrum> {
    let cols = rot.cols();
    let center = rot.center_column();
    let (lo, hi) = match options.mode {
        StretchMode::Continuous => (0, cols - 1),
        StretchMode::TwoPart => match fringe_region(rot, options.region_threshold) {
            Some((a, b)) => (a.min(center), b.max(center)),
            None => return Ok(rot.derive(rot.values.clone(), rot.mask.clone(), "compensate_pump(empty)".into())),
        },
    };

    let factors: Vec<Option<f64>> = match correction {
        PumpCorrection::Data(profile) => {
            if profile.rows.len() != rot.rows() {
                return Err(Error::Shape("row profile does not match the spectrum".into()));
            }
            let Some(reference) = profile.reference_row(rot) else {
                return Ok(rot.derive(rot.values.clone(), rot.mask.clone(), "compensate_pump(no_reference)".into()));
            };
            let f_ref = profile.rows[reference].fringe_frequency;
            profile
                .rows
                .iter()
                .enumerate()
                .map(|(r, p)| {
                    if p.confidence < options.min_confidence {
                        Ok(None)
                    } else if !(p.fringe_frequency > 0.0) {
                        Err(Error::invalid(format!("row {r} has a confident zero fringe frequency")))
                    } else {
                        Ok(Some(f_ref / p.fringe_frequency))
                    }
                })
                .collect::<Result<_>>()?
        }
        PumpCorrection::Model(model) => {
            let reference = model.design_delay + model.row_delay_offset(2.0 * model.center_frequency);
            (0..rot.rows())
                .map(|r| {
                    let own = model.design_delay + model.row_delay_offset(rot.v_axis.value(r));
                    let s = reference / own;
                    (s.is_finite() && s > 0.0).then_some(s)
                })
                .collect()
        }
    };

    let mut values = rot.values.clone();
    values
        .as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(r, out)| {
            let Some(f) = factors[r] else { return };
            let row = rot.values.row(r);
            match options.mode {
                StretchMode::TwoPart => {
                    stretch_row(row, out, center, lo, center, f);
                    stretch_row(row, out, center, center, hi, f);
                }
                StretchMode::Continuous => stretch_row(row, out, center, lo, hi, f),
            }
            for c in lo..=hi {
                if rot.mask[r * cols + c] {
                    out[c] = 0.0;
                }
            }
        });
    let kind = match correction {
        PumpCorrection::Data(_) => "data",
        PumpCorrection::Model(_) => "model",
    };
    let mode = match options.mode {
        StretchMode::TwoPart => "two_part",
        StretchMode::Continuous => "continuous",
    };
    Ok(rot.derive(values, rot.mask.clone(), format!("compensate_pump({kind}, {mode})")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, LayeredObject, SourceSpec};
    use crate::forward::{simulate_joint_spectrum, SimulationRequest};

    fn mirror_request(z: f64, n: usize, pump_fwhm: f64) -> SimulationRequest {
        SimulationRequest {
            source: SourceSpec {
                pump_fwhm,
                ..SourceSpec::single_frame()
            },
            object: LayeredObject::mirror(z),
            detection: DetectionSpec::ideal(),
            reference_delay: 0.0,
            grid: make_grid(1550.0, 102.0, n).unwrap(),
            integration_time: 1.0,
            seed: None,
        }
    }

    fn smooth(n: usize) -> JointSpectrum {
        let g = make_grid(1550.0, 102.0, n).unwrap();
        let m = Matrix::from_fn(n, n, |i, j| {
            let x = i as f64 / n as f64 - 0.5;
            let y = j as f64 / n as f64 - 0.5;
            (-(x + y).powi(2) * 30.0).exp() * (-(x - y).powi(2) * 3.0).exp()
        });
        JointSpectrum::new(g, g, m).unwrap()
    }

    #[test]
    fn rotation_preserves_total() {
        let js = smooth(128);
        let rot = rotate45(&js).unwrap();
        assert_eq!(rot.rows() % 2, 1);
        assert_eq!(rot.u_axis.index_of(0.0), Some(rot.cols() / 2));
        let rel = (rot.values.sum() - js.total()).abs() / js.total();
        assert!(rel < 0.01, "total changed by {rel}");
        for (v, m) in rot.values.as_slice().iter().zip(&rot.mask) {
            if *m {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn rotation_round_trip() {
        // Two bilinear passes: error scales with curvature times step².
        let js = smooth(128);
        let back = unrotate45(&rotate45(&js).unwrap()).unwrap();
        let peak = js.values().max();
        let mut checked = 0;
        for i in 8..120 {
            for j in 8..120 {
                let (a, b) = (js.values().get(i, j), back.values().get(i, j));
                assert!((a - b).abs() <= 2e-3 * peak, "({i},{j}) {a} vs {b}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn diagonal_constant_input_gives_identical_rows() {
        // f depends on ν₁ − ν₂ only.
        let g = make_grid(1550.0, 102.0, 128).unwrap();
        let nu = g.frequencies().unwrap();
        let m = Matrix::from_fn(128, 128, |i, j| (1.0 + (0.7 * (nu[i] - nu[j])).cos()) * 2.0);
        let js = JointSpectrum::new(g, g, m).unwrap();
        let rot = rotate45(&js).unwrap();
        let mid = rot.rows() / 2;
        let c = rot.center_column() + 3;
        let reference = rot.values.get(mid, c);
        for r in mid - 10..mid + 10 {
            if !rot.is_masked(r, c) {
                assert!((rot.values.get(r, c) - reference).abs() < 0.02 * reference);
            }
        }
    }

    #[test]
    fn mirror_rows_are_sin2_fringes() {
        let sim = simulate_joint_spectrum(&mirror_request(78.0, 256, 0.4)).unwrap();
        let rot = rotate45(&sim.spectrum).unwrap();
        let profile = estimate_row_frequencies(&rot);
        let expected = 2.0 * 78.0 / crate::domain::C_UM_PER_PS;
        let mid = profile.reference_row(&rot).unwrap();
        let f = profile.rows[mid].fringe_frequency;
        assert!((f - expected).abs() / expected < 0.01, "{f} vs {expected}");
        // the sin² fringe vanishes at u = 0
        let c0 = rot.center_column();
        let row_max = rot.values.row(mid).iter().copied().fold(0.0, f64::max);
        // bilinear resampling lifts the zero by the curvature of sin² over one bin
        assert!(rot.values.get(mid, c0) < 1e-2 * row_max);
    }

    #[test]
    fn linear_fibres_need_no_shifts() {
        let rot = rotate45(&smooth(64)).unwrap();
        let sv = fibre_shift_vector(&DetectionSpec::ideal(), &rot);
        assert!(sv.shifts.iter().all(|s| *s == 0));
        let same = compensate_fibre(&rot, &sv).unwrap();
        assert_eq!(same.values, rot.values);
    }

    #[test]
    fn shift_vector_is_antisymmetric_in_slope() {
        let rot = rotate45(&smooth(128)).unwrap();
        let mut det = DetectionSpec::fibre_spools();
        let a = fibre_shift_vector(&det, &rot);
        det.fibre1.group_delay_coeffs[2] *= -1.0;
        det.fibre2.group_delay_coeffs[2] *= -1.0;
        let b = fibre_shift_vector(&det, &rot);
        assert!(a.shifts.iter().any(|s| *s != 0));
        for (x, y) in a.shifts.iter().zip(&b.shifts) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn column_roll_preserves_column_multiset() {
        let rot = rotate45(&smooth(64)).unwrap();
        let sv = ShiftVector {
            shifts: (0..rot.cols()).map(|c| (c as i64 % 7) - 3).collect(),
        };
        let rolled = compensate_fibre(&rot, &sv).unwrap();
        for c in 0..rot.cols() {
            let mut a = rot.values.column(c);
            let mut b = rolled.values.column(c);
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
        assert!(compensate_fibre(&rot, &ShiftVector { shifts: vec![0; 3] }).is_err());
    }

    fn synthetic_rows(slope: f64) -> (RotatedSpectrum, Vec<f64>) {
        let rot = rotate45(&smooth(128)).unwrap();
        let (rows, cols) = rot.values.shape();
        let truth: Vec<f64> = (0..rows).map(|r| 0.8 + slope * (r as f64 / rows as f64 - 0.5)).collect();
        let values = Matrix::from_fn(rows, cols, |r, c| {
            let u = rot.u_axis.value(c);
            let env = (-u * u / 20.0).exp();
            env * (1.0 + (2.0 * std::f64::consts::PI * truth[r] * u).cos())
        });
        let mut out = rot.clone();
        out.values = values;
        out.mask = vec![false; rows * cols];
        (out, truth)
    }

    #[test]
    fn row_frequencies_recovered() {
        let (rot, truth) = synthetic_rows(0.1);
        let profile = estimate_row_frequencies(&rot);
        for (p, t) in profile.rows.iter().zip(&truth) {
            assert!((p.fringe_frequency - t).abs() / t < 0.002, "{} vs {t}", p.fringe_frequency);
            assert!(p.confidence > 0.5);
        }
    }

    #[test]
    fn constant_rows_have_zero_confidence() {
        let (mut rot, _) = synthetic_rows(0.0);
        rot.values = rot.values.map(|_| 3.0);
        let profile = estimate_row_frequencies(&rot);
        assert!(profile.rows.iter().all(|r| r.confidence == 0.0));
    }

    #[test]
    fn uniform_frequency_input_is_unchanged() {
        let (rot, _) = synthetic_rows(0.0);
        let profile = estimate_row_frequencies(&rot);
        let out = compensate_pump(&rot, PumpCorrection::Data(&profile), PumpOptions::default()).unwrap();
        for (a, b) in out.values.as_slice().iter().zip(rot.values.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn data_compensation_equalises_frequencies() {
        let (rot, _) = synthetic_rows(0.06);
        let profile = estimate_row_frequencies(&rot);
        for mode in [StretchMode::TwoPart, StretchMode::Continuous] {
            let options = PumpOptions { mode, ..Default::default() };
            let out = compensate_pump(&rot, PumpCorrection::Data(&profile), options).unwrap();
            let after = estimate_row_frequencies(&out);
            let r0 = profile.reference_row(&rot).unwrap();
            let f_ref = profile.rows[r0].fringe_frequency;
            for p in after.rows.iter().filter(|p| p.confidence > 0.5) {
                assert!((p.fringe_frequency - f_ref).abs() / f_ref < 0.005);
            }
        }
    }

    #[test]
    fn model_offsets_follow_dispersion() {
        let model = PumpModel {
            imbalance: Dispersion::new(10_000.0, 0.0),
            center_frequency: 193.0,
            design_delay: 0.5,
        };
        assert_eq!(model.row_delay_offset(386.0), 0.0);
        let d = model.row_delay_offset(386.2);
        assert!((d - 2.0 * std::f64::consts::PI * 0.01 * 0.1).abs() < 1e-12);
        let odd = PumpModel {
            imbalance: Dispersion::new(0.0, 1.0e5),
            ..model
        };
        assert_eq!(odd.row_delay_offset(386.2), odd.row_delay_offset(385.8));
    }

    #[test]
    fn quadratic_fibre_shifts_match_ridge_centroid() {
        let n = 256;
        let req = mirror_request(0.0, n, 0.05);
        let mut req = SimulationRequest {
            object: LayeredObject::mirror(78.0),
            ..req
        };
        req.detection = DetectionSpec::fibre_spools();
        let js = simulate_joint_spectrum(&req).unwrap().spectrum;
        let hist = crate::acquisition::to_time_histogram(&js, &req.detection, 25.0).unwrap();
        let cal = crate::acquisition::calibrate_linear(&hist, &req.detection).unwrap();
        let rot = rotate45(&cal).unwrap();
        let sv = fibre_shift_vector(&req.detection, &rot);
        let mid = rot.v_axis.fractional_index(2.0 * C_NM_THZ / 1550.0);
        let masses: Vec<f64> = (0..rot.cols()).map(|c| rot.values.column(c).iter().sum()).collect();
        let heaviest = masses.iter().copied().fold(0.0, f64::max);
        let mut compared = 0;
        for c in 0..rot.cols() {
            let col = rot.values.column(c);
            let mass = masses[c];
            if mass < 1e-2 * heaviest {
                continue;
            }
            let centroid = col.iter().enumerate().map(|(r, v)| r as f64 * v).sum::<f64>() / mass;
            let predicted = mid - sv.shifts[c] as f64;
            assert!((centroid - predicted).abs() <= 1.5, "column {c}: {centroid} vs {predicted}");
            compared += 1;
        }
        assert!(compared > 50);
    }
}
