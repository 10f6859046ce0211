//! Depth reconstruction and metrology: A-scans by row averaging or by the
//! central row of the 2D transform, Fourier maps, peak measurements,
//! fall-off analysis, artefact prediction and classical OCT.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::domain::{AScan, AScanKind, LayeredObject, Matrix, SourceSpec, C_NM_THZ, C_UM_PER_PS};
use crate::error::{Error, Result};
use crate::fft::{fft2_padded, fft_padded, next_pow2};
use crate::forward::{ClassicalSpectrum, TimeDomainTrace};
use crate::preprocess::RotatedSpectrum;
use crate::signal::{envelope_baseline, median};

/// Transform length is this many times the next power of two above the
/// number of samples.
pub const DEFAULT_PADDING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AScanOptions {
    /// Subtract a fitted envelope baseline before transforming; off keeps
    /// the zero-depth peak.
    pub dc_removal: bool,
    pub window: Window,
    pub padding: usize,
}

impl Default for AScanOptions {
    fn default() -> Self {
        AScanOptions {
            dc_removal: true,
            window: Window::None,
            padding: DEFAULT_PADDING,
        }
    }
}

fn window_weights(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::None => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1).max(1) as f64).cos())
            .collect(),
    }
}

/// Column means over all rows, masked bins counting as zero. Each column is
/// summed in sorted order so the result depends only on the column's values,
/// not their arrangement.
pub fn column_means(rot: &RotatedSpectrum) -> Vec<f64> {
    let rows = rot.rows() as f64;
    (0..rot.cols())
        .map(|c| {
            let mut col = rot.values.column(c);
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / rows
        })
        .collect()
}

fn depth_axis(n: usize, n_fft: usize, step_thz: f64) -> Vec<f64> {
    (0..n).map(|k| C_UM_PER_PS * k as f64 / (2.0 * n_fft as f64 * step_thz)).collect()
}

fn half_spectrum_ascan(spec: &[Complex64], n_fft: usize, step_thz: f64, kind: AScanKind) -> Result<AScan> {
    let half = n_fft / 2 + 1;
    let amplitude = spec[..half].iter().map(|z| z.norm()).collect();
    AScan::new(depth_axis(half, n_fft, step_thz), amplitude, kind)
}

fn check_unmasked(rot: &RotatedSpectrum) -> Result<()> {
    if rot.cols() < 2 || rot.unmasked_count() == 0 {
        return Err(Error::FullyMasked);
    }
    Ok(())
}

/// Depth spacing of the unpadded transform of `rot`, the intrinsic depth bin.
pub fn native_depth_bin(rot: &RotatedSpectrum) -> f64 {
    C_UM_PER_PS / (2.0 * rot.cols() as f64 * rot.u_axis.step())
}

pub fn ascan_row_average(rot: &RotatedSpectrum) -> Result<AScan> {
    ascan_row_average_with(rot, AScanOptions::default())
}

/// Averages the rows, removes the envelope baseline and transforms along the
/// difference frequency axis. Depth is `z = c·t/2`.
pub fn ascan_row_average_with(rot: &RotatedSpectrum, options: AScanOptions) -> Result<AScan> {
    check_unmasked(rot)?;
    let mut line = column_means(rot);
    if options.dc_removal {
        let baseline = envelope_baseline(&line);
        line.iter_mut().zip(&baseline).for_each(|(v, b)| *v -= b);
    }
    let w = window_weights(options.window, line.len());
    line.iter_mut().zip(&w).for_each(|(v, w)| *v *= w);
    let n_fft = options.padding.max(1) * next_pow2(line.len());
    half_spectrum_ascan(&fft_padded(&line, n_fft), n_fft, rot.u_axis.step(), AScanKind::FdQoct)
}

pub fn ascan_2dft_diagonal(rot: &RotatedSpectrum) -> Result<AScan> {
    ascan_2dft_diagonal_with(rot, AScanOptions::default())
}

/// Zero-frequency row of the 2D transform. The transform is separable, so
/// the columns are transformed first and only the needed output row is then
/// transformed along the difference-frequency axis.
pub fn ascan_2dft_diagonal_with(rot: &RotatedSpectrum, options: AScanOptions) -> Result<AScan> {
    check_unmasked(rot)?;
    let (rows, cols) = rot.values.shape();
    let n_fft = options.padding.max(1) * next_pow2(cols);
    let w = window_weights(options.window, cols);

    let col_fft = FftPlanner::new().plan_fft_forward(rows);
    let mut central = Vec::with_capacity(cols);
    let mut buf = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for (r, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(rot.values.get(r, c) * w[c], 0.0);
        }
        col_fft.process(&mut buf);
        central.push(buf[0] / rows as f64);
    }
    central.resize(n_fft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut central);

    if options.dc_removal {
        let baseline: Vec<f64> = envelope_baseline(&column_means(rot))
            .iter()
            .zip(&w)
            .map(|(b, w)| b * w)
            .collect();
        let shifted = fft_padded(&baseline, n_fft);
        central.iter_mut().zip(&shifted).for_each(|(z, b)| *z -= b);
    }
    half_spectrum_ascan(&central, n_fft, rot.u_axis.step(), AScanKind::FdQoct)
}

/// Centred magnitude of the 2D transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMap {
    pub values: Matrix,
    /// Depth (µm) of each column, conjugate to difference frequency.
    pub u_depth: Vec<f64>,
    /// Depth (µm) of each row, conjugate to sum frequency.
    pub v_depth: Vec<f64>,
}

impl FourierMap {
    /// Row holding zero sum-frequency conjugate.
    pub fn central_row(&self) -> usize {
        self.values.rows() / 2
    }
}

fn centred_depths(n: usize, step_thz: f64) -> Vec<f64> {
    (0..n)
        .map(|k| C_UM_PER_PS * (k as f64 - (n / 2) as f64) / (2.0 * n as f64 * step_thz))
        .collect()
}

pub fn fourier_map(rot: &RotatedSpectrum) -> Result<FourierMap> {
    let (rows, cols) = rot.values.shape();
    if rot.values.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("Fourier map input must be finite"));
    }
    let (nr, nc) = (next_pow2(rows), next_pow2(cols));
    let f = fft2_padded(&rot.values, nr, nc);
    let values = Matrix::from_fn(nr, nc, |r, c| {
        let rr = (r + nr - nr / 2) % nr;
        let cc = (c + nc - nc / 2) % nc;
        f[rr * nc + cc].norm()
    });
    Ok(FourierMap {
        values,
        u_depth: centred_depths(nc, rot.u_axis.step()),
        v_depth: centred_depths(nr, rot.v_axis.step()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakReport {
    pub position: f64,
    pub height: f64,
    pub fwhm: f64,
    /// Tail energy right of the peak over tail energy left of it, each taken
    /// beyond the half-maximum crossing out to five widths.
    pub asymmetry: f64,
}

const TAIL_WIDTHS: f64 = 5.0;

/// Peak metrology on samples `y(x)` with uniform, increasing `x`.
fn peak_metrics(x: &[f64], y: &[f64], window: (f64, f64)) -> Result<PeakReport> {
    let floor = 3.0 * median(y);
    let candidates: Vec<usize> = (0..y.len()).filter(|&i| x[i] >= window.0 && x[i] <= window.1).collect();
    let &k = candidates
        .iter()
        .max_by(|&&a, &&b| y[a].total_cmp(&y[b]))
        .ok_or_else(|| Error::NoPeak(format!("window {:?} holds no samples", window)))?;
    let h = y[k];
    let local_max = (k == 0 || y[k - 1] <= h) && (k + 1 == y.len() || y[k + 1] <= h);
    if !(h > 0.0) || h <= floor || !local_max {
        return Err(Error::NoPeak(format!(
            "maximum {h:.4e} in window {:?} is not a peak above the noise floor {floor:.4e}",
            window
        )));
    }
    let dx = x[1] - x[0];
    let (offset, height) = if k > 0 && k + 1 < y.len() {
        let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let p = 0.5 * (a - c) / denom;
            (p, b - 0.25 * (a - c) * p)
        } else {
            (0.0, b)
        }
    } else {
        (0.0, h)
    };
    let half = height / 2.0;
    let mut l = k;
    while l > 0 && y[l] >= half {
        l -= 1;
    }
    let mut r = k;
    while r + 1 < y.len() && y[r] >= half {
        r += 1;
    }
    if y[l] >= half || y[r] >= half {
        return Err(Error::NoPeak("half maximum is not reached on both sides".into()));
    }
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) / (y[j] - y[i]) * (x[j] - x[i]);
    let left = cross(l, l + 1);
    let right = cross(r - 1, r);
    let fwhm = right - left;

    let tail = |from: f64, to: f64| -> f64 {
        x.iter()
            .zip(y)
            .filter(|(xi, _)| **xi > from.min(to) && **xi < from.max(to))
            .map(|(_, yi)| yi * yi)
            .sum()
    };
    let right_tail = tail(right, right + TAIL_WIDTHS * fwhm);
    let left_tail = tail(left - TAIL_WIDTHS * fwhm, left);
    let asymmetry = match (left_tail > 0.0, right_tail > 0.0) {
        (true, _) => right_tail / left_tail,
        (false, true) => f64::INFINITY,
        (false, false) => 1.0,
    };
    Ok(PeakReport {
        position: x[k] + offset * dx,
        height,
        fwhm,
        asymmetry,
    })
}

/// Strongest peak inside `search_window` (µm).
pub fn measure_peak(ascan: &AScan, search_window: (f64, f64)) -> Result<PeakReport> {
    peak_metrics(&ascan.depth_axis, &ascan.amplitude, search_window)
}

/// Metrology of a coincidence dip: the trace is flipped about its median,
/// the off-dip level for a scan wider than the dip, so the dip becomes a
/// peak in stage position.
pub fn measure_dip(trace: &TimeDomainTrace, search_window: (f64, f64)) -> Result<PeakReport> {
    if trace.stage_positions.len() < 3 {
        return Err(Error::NoPeak("trace too short".into()));
    }
    let baseline = median(&trace.coincidence_rate);
    let depth: Vec<f64> = trace.coincidence_rate.iter().map(|r| baseline - r).collect();
    peak_metrics(&trace.stage_positions, &depth, search_window)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalloffPoint {
    pub depth: f64,
    /// `None` when no peak rises above the noise floor.
    pub peak: Option<PeakReport>,
    /// Peak height relative to the reference, dB (amplitude).
    pub height_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalloffReport {
    pub points: Vec<FalloffPoint>,
    pub reference_height: f64,
    /// Depth (µm) where the peak height first drops 6 dB below the reference.
    pub six_db_range: f64,
    /// Set when the drop is never reached or the heights recover past it.
    pub censored: bool,
}

/// Half-width (µm) of the window searched around each expected depth.
pub const FALLOFF_SEARCH_HALF_WIDTH: f64 = 15.0;

/// Peak height against depth. Heights are referenced to `reference_height`
/// when given (for comparing sets), else to the tallest peak in the set.
pub fn falloff_analysis(ascans: &[(f64, AScan)], reference_height: Option<f64>) -> Result<FalloffReport> {
    if ascans.len() < 3 {
        return Err(Error::invalid("fall-off analysis needs at least three depths"));
    }
    if ascans.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("fall-off depths must increase"));
    }
    let peaks: Vec<Option<PeakReport>> = ascans
        .iter()
        .map(|(d, a)| measure_peak(a, (d - FALLOFF_SEARCH_HALF_WIDTH, d + FALLOFF_SEARCH_HALF_WIDTH)).ok())
        .collect();
    let tallest = peaks.iter().flatten().map(|p| p.height).fold(0.0, f64::max);
    let reference = reference_height.unwrap_or(tallest);
    if !(reference > 0.0) {
        return Err(Error::NoPeak("no peak found at any depth".into()));
    }
    let points: Vec<FalloffPoint> = ascans
        .iter()
        .zip(peaks)
        .map(|((d, _), peak)| FalloffPoint {
            depth: *d,
            height_db: peak.map_or(f64::NEG_INFINITY, |p| 20.0 * (p.height / reference).log10()),
            peak,
        })
        .collect();

    let threshold = -6.0;
    let crossing = points.iter().position(|p| p.height_db < threshold);
    let (six_db_range, mut censored) = match crossing {
        None => (f64::INFINITY, true),
        Some(0) => (points[0].depth, true),
        Some(i) => {
            let (a, b) = (&points[i - 1], &points[i]);
            let range = if b.height_db.is_finite() {
                a.depth + (threshold - a.height_db) / (b.height_db - a.height_db) * (b.depth - a.depth)
            } else {
                b.depth
            };
            (range, false)
        }
    };
    if let Some(i) = crossing {
        if points[i..].iter().any(|p| p.height_db >= threshold) {
            censored = true;
        }
    }
    Ok(FalloffReport {
        points,
        reference_height: reference,
        six_db_range,
        censored,
    })
}

/// Amplitude left at fringe delay `t` (ps) after a Gaussian blur of FWHM `w`
/// (THz) along both detection axes.
fn blur_attenuation(w: f64, t: f64) -> f64 {
    (-(PI * w * t).powi(2) / (2.0 * LN_2)).exp()
}

/// Spectral-resolution FWHM (nm at `center` nm) whose blur alone puts the
/// 6 dB point at `range` µm.
pub fn resolution_for_range(range: f64, center: f64) -> Result<f64> {
    if !(range > 0.0 && center > 0.0) {
        return Err(Error::invalid("range and centre wavelength must be positive"));
    }
    let t = crate::domain::delay_from_depth(range);
    // 6 dB in amplitude is a factor 10^(-6/20); solve blur_attenuation for it.
    let target_ln = 6.0 / 20.0 * 10.0f64.ln();
    let w_thz = (2.0 * LN_2 * target_ln).sqrt() / (PI * t);
    debug_assert!((blur_attenuation(w_thz, t) - (-target_ln).exp()).abs() < 1e-12);
    Ok(crate::domain::bandwidth_thz_to_nm(center, w_thz))
}

/// Inverse of [`resolution_for_range`].
pub fn range_for_resolution(fwhm_nm: f64, center: f64) -> f64 {
    if fwhm_nm <= 0.0 {
        return f64::INFINITY;
    }
    let w = crate::domain::bandwidth_nm_to_thz(center, fwhm_nm);
    let target_ln = 6.0 / 20.0 * 10.0f64.ln();
    let t = (2.0 * LN_2 * target_ln).sqrt() / (PI * w);
    crate::domain::depth_from_delay(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtefactKind {
    Structural,
    Midpoint,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructuralPeak {
    pub interface: usize,
    pub position: f64,
    pub predicted_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairArtefact {
    pub pair: (usize, usize),
    pub position: f64,
    /// Row-averaging suppression `exp(−(π·Δν_a·Δτ)²/(4 ln 2))`.
    pub suppression: f64,
    /// Height relative to the same units as the structural heights.
    pub predicted_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArtefactMatch {
    pub kind: ArtefactKind,
    pub predicted_position: f64,
    pub measured: Option<PeakReport>,
    /// Distance between prediction and measurement in depth bins.
    pub offset_bins: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtefactReport {
    pub structural: Vec<StructuralPeak>,
    pub midpoint: Vec<PairArtefact>,
    pub stationary: Vec<PairArtefact>,
    pub matches: Vec<ArtefactMatch>,
}

/// Suppression of a pair term by averaging rows across the anti-diagonal
/// envelope of FWHM `sum_fwhm` THz; `separation` is the pair's one-way
/// optical separation in µm.
pub fn pair_suppression(sum_fwhm: f64, separation: f64) -> f64 {
    let dtau = separation / C_UM_PER_PS;
    (-(PI * sum_fwhm * dtau).powi(2) / (4.0 * LN_2)).exp()
}

/// Expected peak positions and heights.
///
/// Heights follow the coincidence formula's Fourier components along the
/// difference frequency: an interface contributes `V·r²/2`, a pair's exchange
/// term `V·rᵢrⱼ·|cos a|·s` at the midpoint and its self terms `rᵢrⱼ·|cos a|·s`
/// at half the separation, with `a = 4πν₀Δz/c` and `s` the suppression.
pub fn predict_artefacts(object: &LayeredObject, source: &SourceSpec, reference_delay: f64) -> Result<ArtefactReport> {
    object.validate()?;
    let v = source.hom_visibility;
    let nu0 = source.center_frequency();
    let sum_fwhm = source.sum_frequency_fwhm();
    let ifaces = &object.interfaces;
    let structural = ifaces
        .iter()
        .enumerate()
        .map(|(k, i)| StructuralPeak {
            interface: k,
            position: (i.position - reference_delay).abs(),
            predicted_height: v * i.reflectivity * i.reflectivity / 2.0,
        })
        .collect();
    let mut midpoint = Vec::new();
    let mut stationary = Vec::new();
    for a in 0..ifaces.len() {
        for b in a + 1..ifaces.len() {
            let (zi, zj) = (ifaces[a].position, ifaces[b].position);
            let rr = ifaces[a].reflectivity * ifaces[b].reflectivity;
            let dz = zj - zi;
            let s = pair_suppression(sum_fwhm, dz);
            let carrier = (4.0 * PI * nu0 * dz / C_UM_PER_PS).cos().abs();
            midpoint.push(PairArtefact {
                pair: (a, b),
                position: ((zi + zj) / 2.0 - reference_delay).abs(),
                suppression: s,
                predicted_height: v * rr * carrier * s,
            });
            stationary.push(PairArtefact {
                pair: (a, b),
                position: dz / 2.0,
                suppression: s,
                predicted_height: rr * carrier * s,
            });
        }
    }
    Ok(ArtefactReport {
        structural,
        midpoint,
        stationary,
        matches: Vec::new(),
    })
}

impl ArtefactReport {
    /// Associates every predicted feature with the strongest local maximum
    /// of `ascan` within `tolerance_bins` bins of width `bin` (µm) of it.
    /// Offsets are reported in the same bins.
    pub fn match_ascan(&mut self, ascan: &AScan, bin: f64, tolerance_bins: f64) {
        let dz = bin;
        let predicted = self
            .structural
            .iter()
            .map(|p| (ArtefactKind::Structural, p.position))
            .chain(self.midpoint.iter().map(|p| (ArtefactKind::Midpoint, p.position)))
            .chain(self.stationary.iter().map(|p| (ArtefactKind::Stationary, p.position)));
        self.matches = predicted
            .map(|(kind, position)| {
                let window = (position - tolerance_bins * dz, position + tolerance_bins * dz);
                let measured = measure_peak(ascan, window).ok();
                ArtefactMatch {
                    kind,
                    predicted_position: position,
                    measured,
                    offset_bins: measured.map(|m| (m.position - position).abs() / dz),
                }
            })
            .collect();
    }
}

/// Catmull-Rom cubic interpolation at fractional index `x`.
fn cubic_sample(y: &[f64], x: f64) -> f64 {
    let n = y.len();
    let i = (x.floor() as isize).clamp(0, n as isize - 2);
    let t = x - i as f64;
    let at = |k: isize| y[k.clamp(0, n as isize - 1) as usize];
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    0.5 * (2.0 * p1
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t)
}

/// Resamples a wavelength-uniform interferogram to uniform frequency,
/// removes the source envelope and transforms. Depth is `z = c·t/2`.
pub fn classical_ascan(spec: &ClassicalSpectrum) -> Result<AScan> {
    let n = spec.intensity.len();
    if n != spec.grid.n_points {
        return Err(Error::Shape("intensity length does not match its grid".into()));
    }
    let (nu_lo, nu_hi) = (C_NM_THZ / spec.grid.end(), C_NM_THZ / spec.grid.start());
    let dnu = (nu_hi - nu_lo) / (n - 1) as f64;
    let mut resampled: Vec<f64> = (0..n)
        .map(|k| {
            let lambda = C_NM_THZ / (nu_lo + k as f64 * dnu);
            cubic_sample(&spec.intensity, spec.grid.fractional_index(lambda))
        })
        .collect();
    let baseline = envelope_baseline(&resampled);
    resampled.iter_mut().zip(&baseline).for_each(|(v, b)| *v -= b);
    let n_fft = DEFAULT_PADDING * next_pow2(n);
    half_spectrum_ascan(&fft_padded(&resampled, n_fft), n_fft, dnu, AScanKind::Classical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, DetectionSpec, Interface};
    use crate::forward::{simulate_classical_fringes, simulate_joint_spectrum, ClassicalSource, SimulationRequest};
    use crate::preprocess::rotate45;

    fn narrow() -> SourceSpec {
        SourceSpec {
            pump_fwhm: 0.4,
            ..SourceSpec::single_frame()
        }
    }

    fn rotated(object: LayeredObject, reference_delay: f64, n: usize) -> RotatedSpectrum {
        let req = SimulationRequest {
            source: narrow(),
            object,
            detection: DetectionSpec::ideal(),
            reference_delay,
            grid: make_grid(1550.0, 200.0, n).unwrap(),
            integration_time: 1.0,
            seed: None,
        };
        rotate45(&simulate_joint_spectrum(&req).unwrap().spectrum).unwrap()
    }

    #[test]
    fn mirror_peak_at_depth() {
        let rot = rotated(LayeredObject::mirror(78.0), 0.0, 512);
        let a = ascan_row_average(&rot).unwrap();
        let p = measure_peak(&a, (30.0, 200.0)).unwrap();
        assert!((p.position - 78.0).abs() < a.depth_step());
        let expected = LN_2 * C_UM_PER_PS / (PI * 6.3);
        assert!((p.fwhm - expected).abs() / expected < 0.05, "{}", p.fwhm);
        assert!((0.8..=1.2).contains(&p.asymmetry));
    }

    #[test]
    fn paths_agree() {
        let rot = rotated(LayeredObject::layers(&[50.0, 200.0], 0.2).unwrap(), 0.0, 128);
        for options in [
            AScanOptions::default(),
            AScanOptions {
                dc_removal: false,
                window: Window::Hann,
                padding: 2,
            },
        ] {
            let a = ascan_row_average_with(&rot, options).unwrap();
            let b = ascan_2dft_diagonal_with(&rot, options).unwrap();
            let peak = a.amplitude.iter().copied().fold(0.0, f64::max);
            for (x, y) in a.amplitude.iter().zip(&b.amplitude) {
                assert!((x - y).abs() <= 1e-10 * peak);
            }
        }
    }

    #[test]
    fn constant_spectrum_gives_zero_ascan() {
        let mut rot = rotated(LayeredObject::mirror(78.0), 0.0, 64);
        rot.values = rot.values.map(|_| 2.5);
        rot.mask.iter_mut().for_each(|m| *m = false);
        let a = ascan_row_average(&rot).unwrap();
        assert!(a.amplitude.iter().all(|v| *v < 1e-9));
    }

    #[test]
    fn fully_masked_rejected() {
        let mut rot = rotated(LayeredObject::mirror(78.0), 0.0, 64);
        rot.mask.iter_mut().for_each(|m| *m = true);
        assert!(matches!(ascan_row_average(&rot), Err(Error::FullyMasked)));
        assert!(matches!(ascan_2dft_diagonal(&rot), Err(Error::FullyMasked)));
    }

    #[test]
    fn glass_structure_and_artefacts() {
        let object = LayeredObject::layers(&[50.0, 200.0], 0.2).unwrap();
        let rot = rotated(object.clone(), 0.0, 512);
        let a = ascan_row_average(&rot).unwrap();
        let mut report = predict_artefacts(&object, &narrow(), 0.0).unwrap();
        assert_eq!(report.midpoint[0].position, 125.0);
        assert_eq!(report.stationary[0].position, 75.0);
        report.match_ascan(&a, native_depth_bin(&rot), 3.0);
        for m in &report.matches {
            let off = m.offset_bins.unwrap_or(f64::INFINITY);
            assert!(off <= 1.0, "{:?}", m);
        }
    }

    #[test]
    fn fourier_map_symmetry_and_mirror_elements() {
        let rot = rotated(LayeredObject::mirror(78.0), 0.0, 128);
        let map = fourier_map(&rot).unwrap();
        let (nr, nc) = map.values.shape();
        let peak = map.values.max();
        for r in 1..nr {
            for c in 1..nc {
                let a = map.values.get(r, c);
                let b = map.values.get(nr - r, nc - c);
                assert!((a - b).abs() <= 1e-9 * peak);
            }
        }
        let row = map.central_row();
        let best = (nc / 2 + 4..nc)
            .max_by(|&a, &b| map.values.get(row, a).total_cmp(&map.values.get(row, b)))
            .unwrap();
        assert!((map.u_depth[best] - 78.0).abs() < 2.0 * (map.u_depth[1] - map.u_depth[0]));
    }

    #[test]
    fn peak_metrics_on_gaussian() {
        let x: Vec<f64> = (0..400).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| (-4.0 * LN_2 * (v - 100.0).powi(2) / 100.0).exp()).collect();
        let a = AScan::new(x, y, AScanKind::FdQoct).unwrap();
        let p = measure_peak(&a, (50.0, 150.0)).unwrap();
        assert!((p.position - 100.0).abs() < 1e-6);
        assert!((p.fwhm - 10.0).abs() < 0.05);
        assert!((p.asymmetry - 1.0).abs() < 1e-6);
        assert!(measure_peak(&a, (150.0, 190.0)).is_err());
    }

    #[test]
    fn falloff_without_blur_is_censored() {
        let ascans: Vec<(f64, AScan)> = [40.0, 80.0, 120.0]
            .iter()
            .map(|&z| {
                let rot = rotated(LayeredObject::mirror(z), 0.0, 256);
                (z, ascan_row_average(&rot).unwrap())
            })
            .collect();
        let r = falloff_analysis(&ascans, None).unwrap();
        assert!(r.censored);
        assert!(r.six_db_range.is_infinite());
        assert!(r.points.iter().all(|p| p.height_db > -0.5), "{:?}", r.points);
    }

    #[test]
    fn resolution_range_round_trip() {
        let w = resolution_for_range(240.0, 1550.0).unwrap();
        assert!((w - 1.559).abs() < 0.01, "{w}");
        assert!((range_for_resolution(w, 1550.0) - 240.0).abs() < 1e-9);
        assert!((range_for_resolution(2.0 * w, 1550.0) - 120.0).abs() < 1e-9);
    }

    #[test]
    fn suppression_monotonic_in_thickness() {
        let s = narrow();
        let wide = SourceSpec {
            pump_fwhm: 10.0,
            ..s
        };
        let a = pair_suppression(wide.sum_frequency_fwhm(), 150.0);
        let b = pair_suppression(wide.sum_frequency_fwhm(), 390.0);
        assert!(b < a && a < 1.0);
        let stack = LayeredObject::new(
            [35.0, 185.0, 215.0, 365.0]
                .iter()
                .map(|&position| Interface {
                    position,
                    reflectivity: 0.2,
                })
                .collect(),
        )
        .unwrap();
        let r = predict_artefacts(&stack, &wide, 0.0).unwrap();
        assert_eq!(r.midpoint.len(), 6);
        assert_eq!(r.stationary.len(), 6);
    }

    #[test]
    fn classical_mirror_resolution() {
        let source = ClassicalSource::new(1580.0, 63.0);
        let grid = make_grid(1580.0, 320.0, 2048).unwrap();
        let spec = simulate_classical_fringes(&source, &LayeredObject::mirror(78.0), 0.0, &grid).unwrap();
        let a = classical_ascan(&spec).unwrap();
        let p = measure_peak(&a, (40.0, 200.0)).unwrap();
        let expected = 2.0 * LN_2 * C_UM_PER_PS / (PI * source.frequency_fwhm());
        assert!((p.position - 78.0).abs() < 2.0 * a.depth_step());
        assert!((p.fwhm - expected).abs() / expected < 0.05, "{} vs {expected}", p.fwhm);
    }
}
