//! Physics forward model.
//!
//! The coincidence rate at detected frequencies `(ν₁, ν₂)` for a reference
//! delay `τ` is
//!
//! ```text
//! C(ν₁,ν₂) = E(ν₁,ν₂)·[ |H(ν₁)|² + |H(ν₂)|² − 2V·Re{H(ν₁)H*(ν₂)·e^{−i2π(ν₁−ν₂)τ}} ] / 4
//! ```
//!
//! where `E` is the photon-pair envelope and `H` the object reflectance.
//! The result is blurred by the detection's spectral resolution, scaled to
//! expected counts and optionally Poisson-sampled.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    delay_from_depth, AxisKind, DetectionSpec, JointSpectrum, LayeredObject, Matrix, SourceSpec,
    SpectralGrid, C_NM_THZ, C_UM_PER_PS,
};
use crate::error::{Error, Result};

const FOUR_LN2: f64 = 4.0 * LN_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRequest {
    pub source: SourceSpec,
    pub object: LayeredObject,
    pub detection: DetectionSpec,
    /// Reference-arm offset as one-way optical path, µm.
    pub reference_delay: f64,
    pub grid: SpectralGrid,
    /// s
    pub integration_time: f64,
    /// When set, the expectation is Poisson-sampled with this seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SimulationRequest {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.object.validate()?;
        self.detection.validate()?;
        if self.grid.axis_kind != AxisKind::Wavelength {
            return Err(Error::validation("grid", "simulation grid must be a wavelength axis"));
        }
        if !(self.integration_time >= 0.0) || !self.integration_time.is_finite() {
            return Err(Error::validation("integration_time", "must be finite and >= 0"));
        }
        if !self.reference_delay.is_finite() {
            return Err(Error::validation("reference_delay", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The envelope is still above half maximum on the grid boundary.
    EnvelopeTruncated { edge_value: f64 },
    /// `Σ r² > 1`.
    EnergyBoundExceeded,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub spectrum: JointSpectrum,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainTrace {
    pub stage_positions: Vec<f64>,
    pub coincidence_rate: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSource {
    /// nm
    pub center: f64,
    /// nm, converted to a Gaussian in optical frequency
    pub fwhm: f64,
    #[serde(default = "one")]
    pub reference_reflectivity: f64,
}

fn one() -> f64 {
    1.0
}

impl ClassicalSource {
    pub fn new(center: f64, fwhm: f64) -> Self {
        ClassicalSource {
            center,
            fwhm,
            reference_reflectivity: 1.0,
        }
    }

    pub fn frequency_fwhm(&self) -> f64 {
        crate::domain::bandwidth_nm_to_thz(self.center, self.fwhm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSpectrum {
    pub grid: SpectralGrid,
    pub intensity: Vec<f64>,
}

/// Complex reflectance of a layered object at `nu` THz. Dispersion phases are
/// expanded about `nu0`.
pub fn object_transfer(object: &LayeredObject, nu: f64, nu0: f64) -> Complex64 {
    let dnu = nu - nu0;
    let mut cumulative = object.arm_imbalance.phase(dnu);
    let mut h = Complex64::new(0.0, 0.0);
    for (k, iface) in object.interfaces.iter().enumerate() {
        if k > 0 {
            if let Some(seg) = object.segment_dispersion.get(k - 1) {
                cumulative += seg.phase(dnu);
            }
        }
        let phase = 2.0 * PI * 2.0 * nu * iface.position / C_UM_PER_PS + cumulative;
        h += Complex64::from_polar(iface.reflectivity, phase);
    }
    h
}

fn check_frequency(nu: f64) -> Result<()> {
    if !(100.0..=1000.0).contains(&nu) {
        return Err(Error::invalid(format!("frequency {nu} THz outside the modelled range")));
    }
    Ok(())
}

/// Envelope value at detected frequencies `(nu1, nu2)`, peak 1.
pub fn envelope_value(source: &SourceSpec, nu1: f64, nu2: f64) -> f64 {
    let nu0 = source.center_frequency();
    let sum_fwhm = source.sum_frequency_fwhm();
    let diff_fwhm = 2.0 * source.diagonal_fwhm;
    let s = nu1 + nu2 - 2.0 * nu0;
    let d = nu1 - nu2;
    (-FOUR_LN2 * s * s / (sum_fwhm * sum_fwhm)).exp() * (-FOUR_LN2 * d * d / (diff_fwhm * diff_fwhm)).exp()
}

fn envelope_matrix(source: &SourceSpec, nu: &[f64]) -> Matrix {
    let n = nu.len();
    let mut m = Matrix::zeros(n, n);
    m.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = envelope_value(source, nu[i], nu[j]);
            }
        });
    m
}

fn boundary_max(m: &Matrix) -> f64 {
    let (r, c) = m.shape();
    let mut best = 0.0f64;
    for j in 0..c {
        best = best.max(m.get(0, j)).max(m.get(r - 1, j));
    }
    for i in 0..r {
        best = best.max(m.get(i, 0)).max(m.get(i, c - 1));
    }
    best
}

/// Photon-pair envelope on a square wavelength grid, normalised to max 1.
pub fn joint_envelope(source: &SourceSpec, grid: &SpectralGrid) -> Result<Simulation> {
    source.validate()?;
    let nu = grid.frequencies()?;
    let env = envelope_matrix(source, &nu);
    let peak = env.max();
    let env = if peak > 0.0 { env.map(|v| v / peak) } else { env };
    let mut warnings = Vec::new();
    let edge = boundary_max(&env);
    if edge > 0.5 {
        warnings.push(Warning::EnvelopeTruncated { edge_value: edge });
    }
    let spectrum = JointSpectrum::new(*grid, *grid, env)?.with_provenance("joint_envelope");
    Ok(Simulation { spectrum, warnings })
}

/// Normalised Gaussian kernel (in bins) truncated at ±4σ.
fn gaussian_kernel(fwhm_bins: f64) -> Vec<f64> {
    let sigma = fwhm_bins / (2.0 * (2.0 * LN_2).sqrt());
    let half = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|x| (-(x as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn convolve_zero_padded(input: &[f64], kernel: &[f64], out: &mut [f64]) {
    let half = (kernel.len() / 2) as isize;
    let n = input.len() as isize;
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, w) in kernel.iter().enumerate() {
            let i = k as isize + half - t as isize;
            if (0..n).contains(&i) {
                acc += w * input[i as usize];
            }
        }
        *o = acc;
    }
}

/// Fraction of each bin's mass that the blur keeps on the grid.
fn blur_retention(n: usize, fwhm_bins: f64) -> Vec<f64> {
    if fwhm_bins <= 0.0 {
        return vec![1.0; n];
    }
    let kernel = gaussian_kernel(fwhm_bins);
    let half = (kernel.len() / 2) as isize;
    (0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .filter(|(t, _)| (0..n as isize).contains(&(i - half + *t as isize)))
                .map(|(_, w)| w)
                .sum()
        })
        .collect()
}

/// Separable Gaussian blur along both axes; `fwhm_bins` may differ per axis.
pub fn spectral_blur(m: &Matrix, fwhm_bins_rows: f64, fwhm_bins_cols: f64) -> Matrix {
    let (rows, cols) = m.shape();
    let mut out = m.clone();
    if fwhm_bins_cols > 0.0 {
        let k = gaussian_kernel(fwhm_bins_cols);
        out.as_mut_slice()
            .par_chunks_mut(cols)
            .zip(m.as_slice().par_chunks(cols))
            .for_each(|(o, i)| convolve_zero_padded(i, &k, o));
    }
    if fwhm_bins_rows > 0.0 {
        let k = gaussian_kernel(fwhm_bins_rows);
        let t = out.transpose();
        let mut tout = Matrix::zeros(cols, rows);
        tout.as_mut_slice()
            .par_chunks_mut(rows)
            .zip(t.as_slice().par_chunks(rows))
            .for_each(|(o, i)| convolve_zero_padded(i, &k, o));
        out = tout.transpose();
    }
    out
}

/// Per-grid quantities shared by the joint-spectrum and time-domain routes.
struct Precomputed {
    nu: Vec<f64>,
    envelope: Matrix,
    envelope_sum: f64,
    transfer: Vec<Complex64>,
    blur_bins: f64,
}

impl Precomputed {
    fn new(req: &SimulationRequest) -> Result<Self> {
        req.validate()?;
        let nu = req.grid.frequencies()?;
        for &v in [nu[0], nu[nu.len() - 1]].iter() {
            check_frequency(v)?;
        }
        let nu0 = req.source.center_frequency();
        let envelope = envelope_matrix(&req.source, &nu);
        let envelope_sum = envelope.sum();
        let transfer = nu.iter().map(|&v| object_transfer(&req.object, v, nu0)).collect();
        let blur_bins = req.detection.spectral_resolution_fwhm / req.grid.step();
        Ok(Precomputed {
            nu,
            envelope,
            envelope_sum,
            transfer,
            blur_bins,
        })
    }

    fn scale(&self, req: &SimulationRequest) -> f64 {
        if self.envelope_sum > 0.0 {
            req.source.pair_rate * req.integration_time / self.envelope_sum
        } else {
            0.0
        }
    }

    /// `H(ν)·e^{−i2πντ}` for each grid frequency.
    fn delayed(&self, reference_delay: f64) -> Vec<Complex64> {
        let tau = delay_from_depth(reference_delay);
        self.nu
            .iter()
            .zip(&self.transfer)
            .map(|(&nu, h)| h * Complex64::from_polar(1.0, -2.0 * PI * nu * tau))
            .collect()
    }
}

fn leak_index(n: usize) -> usize {
    // Leaked pump photons are barely dispersed, so they pile up at one
    // calibrated position; the grid centre stands in for it.
    n / 2
}

/// Expected (or sampled) joint spectrum for a request.
pub fn simulate_joint_spectrum(req: &SimulationRequest) -> Result<Simulation> {
    let pre = Precomputed::new(req)?;
    let n = pre.nu.len();
    let v = req.source.hom_visibility;
    let q = pre.delayed(req.reference_delay);
    let h2: Vec<f64> = pre.transfer.iter().map(|h| h.norm_sqr()).collect();
    let scale = pre.scale(req);

    let mut values = Matrix::zeros(n, n);
    values
        .as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, out) in row.iter_mut().enumerate() {
                let interference = (q[i] * q[j].conj()).re;
                let c = pre.envelope.get(i, j) * (h2[i] + h2[j] - 2.0 * v * interference) / 4.0;
                *out = c.max(0.0) * scale;
            }
        });

    let mut values = spectral_blur(&values, pre.blur_bins, pre.blur_bins);
    add_background(&mut values, &req.detection, req.integration_time);

    let mut warnings = Vec::new();
    let peak = pre.envelope.max();
    if peak > 0.0 {
        let edge = boundary_max(&pre.envelope) / peak;
        if edge > 0.5 {
            warnings.push(Warning::EnvelopeTruncated { edge_value: edge });
        }
    }
    if req.object.exceeds_energy_bound() {
        warnings.push(Warning::EnergyBoundExceeded);
    }

    let mut spectrum = JointSpectrum::new(req.grid, req.grid, values)?.with_provenance(format!(
        "simulate(reference_delay={}, integration_time={})",
        req.reference_delay, req.integration_time
    ));
    if let Some(seed) = req.seed {
        spectrum = apply_shot_noise(&spectrum, seed)?;
    }
    Ok(Simulation { spectrum, warnings })
}

fn add_background(values: &mut Matrix, detection: &DetectionSpec, integration_time: f64) {
    let (rows, cols) = values.shape();
    if detection.background_rate > 0.0 {
        let per_bin = detection.background_rate * integration_time / (rows * cols) as f64;
        values.as_mut_slice().iter_mut().for_each(|v| *v += per_bin);
    }
    if let Some(leak) = detection.pump_leak {
        if leak.rate > 0.0 {
            if leak.channel == 1 {
                let r = leak_index(rows);
                let per_bin = leak.rate * integration_time / cols as f64;
                values.row_mut(r).iter_mut().for_each(|v| *v += per_bin);
            } else {
                let c = leak_index(cols);
                let per_bin = leak.rate * integration_time / rows as f64;
                for r in 0..rows {
                    let v = values.get(r, c);
                    values.set(r, c, v + per_bin);
                }
            }
        }
    }
}

fn background_total(detection: &DetectionSpec, integration_time: f64) -> f64 {
    let leak = detection.pump_leak.map(|l| l.rate).unwrap_or(0.0);
    (detection.background_rate + leak) * integration_time
}

/// Total coincidences versus reference-stage position.
///
/// Evaluated without materialising the joint spectrum: the delay factor
/// separates into per-frequency phasors, so each stage position costs one
/// weighted quadratic form over the envelope.
pub fn simulate_time_domain(req: &SimulationRequest, stage_positions: &[f64]) -> Result<TimeDomainTrace> {
    if stage_positions.is_empty() {
        return Err(Error::invalid("time-domain scan needs at least one stage position"));
    }
    if stage_positions.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("stage positions must be finite"));
    }
    let pre = Precomputed::new(req)?;
    let n = pre.nu.len();
    let v = req.source.hom_visibility;
    let scale = pre.scale(req);
    let retention = blur_retention(n, pre.blur_bins);

    // Effective weights once the blur's edge losses are folded in.
    let mut weights = Matrix::zeros(n, n);
    weights
        .as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, w) in row.iter_mut().enumerate() {
                *w = pre.envelope.get(i, j) * retention[i] * retention[j] * scale / 4.0;
            }
        });
    let h2: Vec<f64> = pre.transfer.iter().map(|h| h.norm_sqr()).collect();
    let row_w: Vec<f64> = (0..n).map(|i| weights.row(i).iter().sum()).collect();
    let col_w: Vec<f64> = (0..n).map(|j| (0..n).map(|i| weights.get(i, j)).sum()).collect();
    let self_terms: f64 = (0..n).map(|i| row_w[i] * h2[i] + col_w[i] * h2[i]).sum();
    let extra = background_total(&req.detection, req.integration_time);

    let rates: Vec<f64> = stage_positions
        .par_iter()
        .map(|&pos| {
            let q = pre.delayed(pos);
            let mut cross = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let row = weights.row(i);
                let inner: Complex64 = row.iter().zip(&q).map(|(w, qj)| qj.conj() * *w).sum();
                cross += q[i] * inner;
            }
            self_terms - 2.0 * v * cross.re + extra
        })
        .collect();

    let coincidence_rate = match req.seed {
        Some(seed) => rates
            .iter()
            .enumerate()
            .map(|(k, &lambda)| poisson_sample(seed, k as u64, lambda.max(0.0)))
            .collect(),
        None => rates,
    };
    Ok(TimeDomainTrace {
        stage_positions: stage_positions.to_vec(),
        coincidence_rate,
    })
}

/// Classical spectral-domain OCT interferogram `S₀(ν)·|r_ref + H(ν)e^{−i2πντ}|²`.
pub fn simulate_classical_fringes(
    source: &ClassicalSource,
    object: &LayeredObject,
    reference_delay: f64,
    grid: &SpectralGrid,
) -> Result<ClassicalSpectrum> {
    object.validate()?;
    if !(source.center > 0.0 && source.fwhm > 0.0) {
        return Err(Error::invalid("classical source centre and FWHM must be positive"));
    }
    let nu0 = C_NM_THZ / source.center;
    let fwhm = source.frequency_fwhm();
    let tau = delay_from_depth(reference_delay);
    let intensity = grid
        .frequencies()?
        .into_iter()
        .map(|nu| {
            let s0 = (-FOUR_LN2 * (nu - nu0).powi(2) / (fwhm * fwhm)).exp();
            let h = object_transfer(object, nu, nu0) * Complex64::from_polar(1.0, -2.0 * PI * nu * tau);
            s0 * (h + source.reference_reflectivity).norm_sqr()
        })
        .collect();
    Ok(ClassicalSpectrum {
        grid: *grid,
        intensity,
    })
}

/// Poisson draw keyed by `(seed, index)` so any evaluation order gives the
/// same sample.
pub fn poisson_sample(seed: u64, index: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    match Poisson::new(mean) {
        Ok(dist) => dist.sample(&mut rng),
        Err(_) => mean.round(),
    }
}

/// Independent Poisson sample per bin; `js` must hold expected counts.
pub fn apply_shot_noise(js: &JointSpectrum, seed: u64) -> Result<JointSpectrum> {
    let values = js.values();
    if values.as_slice().iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("expected counts must be non-negative"));
    }
    let cols = values.cols();
    let mut out = Matrix::zeros(values.rows(), cols);
    out.as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, o) in row.iter_mut().enumerate() {
                *o = poisson_sample(seed, (r * cols + c) as u64, values.get(r, c));
            }
        });
    js.derive(out, format!("shot_noise(seed={seed})"))
}

/// Re-applies the recorded deterministic steps that follow the raw
/// expectation. Only `shot_noise(seed=…)` is replayable on its own; other
/// entries must already be part of `raw`.
pub fn replay(raw: &JointSpectrum, steps: &[String]) -> Result<JointSpectrum> {
    let mut out = raw.clone();
    for step in steps {
        if let Some(rest) = step.strip_prefix("shot_noise(seed=") {
            let seed: u64 = rest
                .trim_end_matches(')')
                .parse()
                .map_err(|_| Error::Format(format!("bad provenance entry `{step}`")))?;
            out = apply_shot_noise(&out, seed)?;
        } else {
            return Err(Error::Format(format!("provenance step `{step}` is not replayable")));
        }
    }
    Ok(out)
}
