//! Detection chain: dispersive fibre spools map wavelength to arrival time,
//! a coincidence window selects one frame, and frames are stitched back
//! into a whole joint spectrum.

use std::cmp::Ordering;
use std::io::{Read, Write};

use crate::domain::{
    AxisKind, DetectionSpec, FibreSpec, FrameMeta, JointSpectrum, Matrix, SpectralGrid, C_NM_THZ,
};
use crate::error::{Error, Result};

/// Half-width of the wavelength interval searched when inverting a fibre
/// delay curve, nm.
const INVERSION_HALF_RANGE: f64 = 400.0;
const BISECTION_TOL_NM: f64 = 1e-9;

/// Adjacent-frame overlap that gives nine frames across the whole spectrum.
pub const DEFAULT_FRAME_OVERLAP: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub histogram: JointSpectrum,
    pub delays: (f64, f64),
    pub window: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchPlan {
    pub frames: Vec<Frame>,
    /// Minimum shared bins between neighbours once sorted by delay; empty
    /// means no requirement.
    pub overlap_bins: Vec<usize>,
    /// Known per-frame scale factors applied before gain matching.
    pub normalisation: Vec<f64>,
}

impl StitchPlan {
    pub fn new(frames: Vec<Frame>) -> Self {
        let n = frames.len();
        StitchPlan {
            frames,
            overlap_bins: Vec::new(),
            normalisation: vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stitched {
    pub spectrum: JointSpectrum,
    /// Gain applied to each frame (in the plan's order) by the overlap fit.
    pub gains: Vec<f64>,
}

/// Group delay in ps at wavelength `lambda` nm.
pub fn group_delay(fibre: &FibreSpec, lambda: f64) -> f64 {
    let d = lambda - fibre.lambda_ref;
    fibre.group_delay_coeffs.iter().rev().fold(0.0, |acc, c| acc * d + c)
}

fn group_delay_slope(fibre: &FibreSpec, lambda: f64) -> f64 {
    let d = lambda - fibre.lambda_ref;
    fibre
        .group_delay_coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * d + k as f64 * c)
}

/// Nonlinear part of the delay curve, `t(λ) − t₀ − D·(λ − λ_ref)`.
pub fn nonlinear_delay(fibre: &FibreSpec, lambda: f64) -> f64 {
    group_delay(fibre, lambda) - fibre.t0() - fibre.linear_slope() * (lambda - fibre.lambda_ref)
}

/// Checks the delay curve is strictly monotonic at every sample of `grid`.
pub fn check_monotonic(fibre: &FibreSpec, grid: &SpectralGrid) -> Result<()> {
    let values = grid.values();
    let sign = group_delay_slope(fibre, values[0]).signum();
    if sign == 0.0 {
        return Err(Error::NonMonotonic("zero group-delay slope".into()));
    }
    for w in values.windows(2) {
        let dt = group_delay(fibre, w[1]) - group_delay(fibre, w[0]);
        if dt.signum() != sign || group_delay_slope(fibre, w[1]).signum() != sign {
            return Err(Error::NonMonotonic(format!(
                "group delay turns around near {:.3} nm",
                w[1]
            )));
        }
    }
    Ok(())
}

/// Effective dispersion slope (ps/nm) that makes one coincidence window span
/// `frame_span` nm.
pub fn calibrate_effective_dispersion(frame_span: f64, window: f64) -> Result<f64> {
    if !(frame_span > 0.0) || !(window > 0.0) {
        return Err(Error::invalid("frame span and window must both be positive"));
    }
    Ok(window / frame_span)
}

/// Frames needed to cover `total_span` nm with frames of `frame_span` nm
/// overlapping their neighbours by `overlap` (fraction of a frame).
pub fn frames_needed(total_span: f64, frame_span: f64, overlap: f64) -> Result<usize> {
    if !(frame_span > 0.0) || !(total_span > 0.0) || !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("need positive spans and overlap in [0, 1)"));
    }
    if total_span <= frame_span {
        return Ok(1);
    }
    let step = frame_span * (1.0 - overlap);
    Ok(((total_span - frame_span) / step - 1e-9).ceil() as usize + 1)
}

fn monotonic_range(fibre: &FibreSpec) -> (f64, f64) {
    let sign = group_delay_slope(fibre, fibre.lambda_ref).signum();
    let mut lo = fibre.lambda_ref;
    let mut hi = fibre.lambda_ref;
    let step = 1.0;
    while lo - step > (fibre.lambda_ref - INVERSION_HALF_RANGE).max(step)
        && group_delay_slope(fibre, lo - step).signum() == sign
    {
        lo -= step;
    }
    while hi + step < fibre.lambda_ref + INVERSION_HALF_RANGE
        && group_delay_slope(fibre, hi + step).signum() == sign
    {
        hi += step;
    }
    (lo, hi)
}

/// Inverts the fibre delay curve by bisection over its monotonic range.
pub fn wavelength_from_arrival(fibre: &FibreSpec, t: f64) -> Result<f64> {
    let (mut lo, mut hi) = monotonic_range(fibre);
    let (tlo, thi) = (group_delay(fibre, lo), group_delay(fibre, hi));
    if !t.is_finite() || t < tlo.min(thi) || t > tlo.max(thi) {
        return Err(Error::OutOfWindow(t));
    }
    let increasing = thi > tlo;
    while hi - lo > BISECTION_TOL_NM {
        let mid = 0.5 * (lo + hi);
        let below = group_delay(fibre, mid) < t;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sparse rebinning weights from a wavelength axis to an arrival-time axis.
struct Rebin {
    grid: SpectralGrid,
    /// For each wavelength bin, `(time bin, fraction)` pairs summing to 1.
    weights: Vec<Vec<(usize, f64)>>,
}

fn rebin_axis(axis: &SpectralGrid, fibre: &FibreSpec, time_bin: f64) -> Result<Rebin> {
    check_monotonic(fibre, axis)?;
    let half = axis.step() / 2.0;
    let intervals: Vec<(f64, f64)> = axis
        .values()
        .into_iter()
        .map(|l| {
            let (a, b) = (group_delay(fibre, l - half), group_delay(fibre, l + half));
            (a.min(b), a.max(b))
        })
        .collect();
    let tmin = intervals.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
    let tmax = intervals.iter().map(|i| i.1).fold(f64::NEG_INFINITY, f64::max);
    // Tolerance keeps interval ends that land on a bin edge from opening an
    // empty bin.
    let first = (tmin / time_bin + 1e-9).floor() as i64;
    let last = (tmax / time_bin - 1e-9).ceil() as i64;
    let n = ((last - first) as usize).max(crate::domain::MIN_GRID_POINTS);
    let start = (first as f64 + 0.5) * time_bin;
    let grid = SpectralGrid::from_start_step(AxisKind::ArrivalTime, start, time_bin, n)?;

    let weights = intervals
        .iter()
        .map(|&(a, b)| {
            let width = b - a;
            let i0 = ((a / time_bin).floor() as i64 - first).max(0) as usize;
            let i1 = (((b / time_bin).ceil() as i64 - first) as usize).min(n);
            (i0..i1)
                .filter_map(|k| {
                    let lo = (first + k as i64) as f64 * time_bin;
                    let hi = lo + time_bin;
                    let overlap = b.min(hi) - a.max(lo);
                    (overlap > 1e-9 * time_bin).then(|| (k, overlap / width))
                })
                .collect()
        })
        .collect();
    Ok(Rebin { grid, weights })
}

/// Rebins a wavelength-domain joint spectrum onto uniform arrival-time axes
/// through each channel's fibre, conserving total counts.
pub fn to_time_histogram(js: &JointSpectrum, detection: &DetectionSpec, time_bin: f64) -> Result<JointSpectrum> {
    if js.axis1.axis_kind != AxisKind::Wavelength || js.axis2.axis_kind != AxisKind::Wavelength {
        return Err(Error::invalid("time histogram needs wavelength axes"));
    }
    if !(time_bin > 0.0) {
        return Err(Error::invalid("time bin must be positive"));
    }
    let r1 = rebin_axis(&js.axis1, &detection.fibre1, time_bin)?;
    let r2 = rebin_axis(&js.axis2, &detection.fibre2, time_bin)?;
    let v = js.values();

    // Channel 2 (columns) first, then channel 1 (rows).
    let mut tmp = Matrix::zeros(v.rows(), r2.grid.n_points);
    for i in 0..v.rows() {
        let src = v.row(i);
        let dst = tmp.row_mut(i);
        for (j, w) in r2.weights.iter().enumerate() {
            for &(k, f) in w {
                dst[k] += src[j] * f;
            }
        }
    }
    let mut out = Matrix::zeros(r1.grid.n_points, r2.grid.n_points);
    for (i, w) in r1.weights.iter().enumerate() {
        for &(k, f) in w {
            let src = tmp.row(i).to_vec();
            for (o, s) in out.row_mut(k).iter_mut().zip(&src) {
                *o += s * f;
            }
        }
    }
    let mut hist = JointSpectrum::new(r1.grid, r2.grid, out)?;
    hist.set_provenance(js.provenance().to_vec());
    Ok(hist.with_provenance(format!("to_time_histogram(time_bin={time_bin})")))
}

fn linear_relabel(axis: &SpectralGrid, fibre: &FibreSpec) -> Result<(SpectralGrid, bool)> {
    let d = fibre.linear_slope();
    if d == 0.0 {
        return Err(Error::invalid("fibre has no linear dispersion term"));
    }
    let to_lambda = |t: f64| fibre.lambda_ref + (t - fibre.t0()) / d;
    let (a, b) = (to_lambda(axis.start()), to_lambda(axis.end()));
    let reversed = b < a;
    let (lo, hi) = if reversed { (b, a) } else { (a, b) };
    Ok((
        SpectralGrid::new(AxisKind::Wavelength, 0.5 * (lo + hi), hi - lo, axis.n_points)?,
        reversed,
    ))
}

/// Converts an arrival-time histogram to nominal wavelength axes using only
/// the linear part of each fibre's delay curve. Higher-order fibre terms are
/// left in the data (they bend the ridge) for [`crate::preprocess`] to remove.
pub fn calibrate_linear(js: &JointSpectrum, detection: &DetectionSpec) -> Result<JointSpectrum> {
    if js.axis1.axis_kind != AxisKind::ArrivalTime || js.axis2.axis_kind != AxisKind::ArrivalTime {
        return Err(Error::invalid("linear calibration needs arrival-time axes"));
    }
    let (g1, rev1) = linear_relabel(&js.axis1, &detection.fibre1)?;
    let (g2, rev2) = linear_relabel(&js.axis2, &detection.fibre2)?;
    let (rows, cols) = js.values().shape();
    let v = js.values();
    let m = Matrix::from_fn(rows, cols, |r, c| {
        let rr = if rev1 { rows - 1 - r } else { r };
        let cc = if rev2 { cols - 1 - c } else { c };
        v.get(rr, cc)
    });
    let mut out = JointSpectrum::new(g1, g2, m)?;
    out.frame_meta = js.frame_meta;
    out.set_provenance(js.provenance().to_vec());
    Ok(out.with_provenance("calibrate_linear"))
}

fn crop_range(axis: &SpectralGrid, from: f64, window: f64) -> (usize, usize) {
    let values = axis.values();
    let lo = values.iter().position(|&t| t >= from).unwrap_or(values.len());
    let hi = values.iter().position(|&t| t >= from + window).unwrap_or(values.len());
    (lo, hi.max(lo))
}

/// Crops an arrival-time histogram to `[d1, d1+window) × [d2, d2+window)`.
/// Coincidences outside the window are dropped.
pub fn select_frame(hist: &JointSpectrum, delays: (f64, f64), window: f64) -> Result<Frame> {
    if !(window > 0.0) {
        return Err(Error::invalid("frame window must be positive"));
    }
    let (r0, r1) = crop_range(&hist.axis1, delays.0, window);
    let (c0, c1) = crop_range(&hist.axis2, delays.1, window);
    if r1 == r0 || c1 == c0 {
        return Err(Error::EmptyFrame);
    }
    let (nr, nc) = (r1 - r0, c1 - c0);
    let a1 = SpectralGrid::from_start_step(hist.axis1.axis_kind, hist.axis1.value(r0), hist.axis1.step(), nr)?;
    let a2 = SpectralGrid::from_start_step(hist.axis2.axis_kind, hist.axis2.value(c0), hist.axis2.step(), nc)?;
    let v = hist.values();
    let m = Matrix::from_fn(nr, nc, |r, c| v.get(r0 + r, c0 + c));
    let mut js = JointSpectrum::new(a1, a2, m)?;
    js.set_provenance(hist.provenance().to_vec());
    js.frame_meta = Some(FrameMeta {
        delay1: delays.0,
        delay2: delays.1,
        window,
    });
    let js = js.with_provenance(format!("select_frame(d1={}, d2={}, window={window})", delays.0, delays.1));
    Ok(Frame {
        histogram: js,
        delays,
        window,
        index: 0,
    })
}

/// Channel delays for frames stepped along the photon-pair ridge so that
/// together they cover `total_span` nm around `center` nm.
pub fn ridge_frame_delays(
    detection: &DetectionSpec,
    center: f64,
    total_span: f64,
    frame_span: f64,
    overlap: f64,
) -> Result<Vec<(f64, f64)>> {
    let count = frames_needed(total_span, frame_span, overlap)?;
    let step = if count > 1 {
        (total_span - frame_span) / (count - 1) as f64
    } else {
        0.0
    };
    let nu0 = C_NM_THZ / center;
    let window = detection.coincidence_window;
    Ok((0..count)
        .map(|k| {
            let l1 = center - total_span / 2.0 + frame_span / 2.0 + step * k as f64;
            let l2 = C_NM_THZ / (2.0 * nu0 - C_NM_THZ / l1);
            (
                group_delay(&detection.fibre1, l1) - window / 2.0,
                group_delay(&detection.fibre2, l2) - window / 2.0,
            )
        })
        .collect())
}

fn frame_order(a: &Frame, b: &Frame) -> Ordering {
    a.delays
        .0
        .total_cmp(&b.delays.0)
        .then(a.delays.1.total_cmp(&b.delays.1))
        .then(a.index.cmp(&b.index))
}

fn lattice_offset(axis: &SpectralGrid, origin: f64, step: f64) -> Result<usize> {
    let f = (axis.start() - origin) / step;
    if (f - f.round()).abs() > 1e-6 || f < -1e-6 {
        return Err(Error::Shape("frame bins do not share a common lattice".into()));
    }
    Ok(f.round() as usize)
}

/// Stitches frames onto their union grid. Frames are visited in delay
/// order; each one is gain-matched by least squares against the mosaic on
/// their overlap, then overlaps are averaged.
pub fn stitch_frames(plan: &StitchPlan) -> Result<Stitched> {
    let frames = &plan.frames;
    if frames.is_empty() {
        return Err(Error::invalid("stitching needs at least one frame"));
    }
    if plan.normalisation.len() != frames.len() {
        return Err(Error::invalid("one normalisation factor per frame is required"));
    }
    if plan.normalisation.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("normalisation factors must be positive"));
    }
    let step1 = frames[0].histogram.axis1.step();
    let step2 = frames[0].histogram.axis2.step();
    for f in frames {
        let (s1, s2) = (f.histogram.axis1.step(), f.histogram.axis2.step());
        if ((s1 - step1) / step1).abs() > 1e-9 || ((s2 - step2) / step2).abs() > 1e-9 {
            return Err(Error::Shape("frames have inconsistent bin sizes".into()));
        }
    }
    let origin1 = frames.iter().map(|f| f.histogram.axis1.start()).fold(f64::INFINITY, f64::min);
    let origin2 = frames.iter().map(|f| f.histogram.axis2.start()).fold(f64::INFINITY, f64::min);
    let mut extent1 = 0;
    let mut extent2 = 0;
    let mut offsets = Vec::with_capacity(frames.len());
    for f in frames {
        let o1 = lattice_offset(&f.histogram.axis1, origin1, step1)?;
        let o2 = lattice_offset(&f.histogram.axis2, origin2, step2)?;
        extent1 = extent1.max(o1 + f.histogram.axis1.n_points);
        extent2 = extent2.max(o2 + f.histogram.axis2.n_points);
        offsets.push((o1, o2));
    }

    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by(|&a, &b| frame_order(&frames[a], &frames[b]));

    let mut acc = Matrix::zeros(extent1, extent2);
    let mut count = Matrix::zeros(extent1, extent2);
    let mut gains = vec![1.0; frames.len()];
    for (pos, &k) in order.iter().enumerate() {
        let frame = &frames[k];
        let (o1, o2) = offsets[k];
        let v = frame.histogram.values();
        let norm = plan.normalisation[k];
        let mut num = 0.0;
        let mut den = 0.0;
        let mut shared = 0usize;
        for r in 0..v.rows() {
            for c in 0..v.cols() {
                let n = count.get(o1 + r, o2 + c);
                if n > 0.0 {
                    let mosaic = acc.get(o1 + r, o2 + c) / n;
                    let x = v.get(r, c) * norm;
                    num += mosaic * x;
                    den += x * x;
                    shared += 1;
                }
            }
        }
        if pos > 0 {
            let required = plan.overlap_bins.get(pos - 1).copied().unwrap_or(0);
            if required > 0 && shared == 0 {
                return Err(Error::invalid(format!("frame {} shares no bins with the mosaic", frame.index)));
            }
        }
        let gain = if pos > 0 && den > 0.0 { num / den } else { 1.0 };
        gains[k] = gain;
        for r in 0..v.rows() {
            for c in 0..v.cols() {
                let a = acc.get(o1 + r, o2 + c);
                acc.set(o1 + r, o2 + c, a + v.get(r, c) * norm * gain);
                let n = count.get(o1 + r, o2 + c);
                count.set(o1 + r, o2 + c, n + 1.0);
            }
        }
    }
    let values = Matrix::from_fn(extent1, extent2, |r, c| {
        let n = count.get(r, c);
        if n > 0.0 {
            acc.get(r, c) / n
        } else {
            0.0
        }
    });
    let kind1 = frames[0].histogram.axis1.axis_kind;
    let kind2 = frames[0].histogram.axis2.axis_kind;
    let a1 = SpectralGrid::from_start_step(kind1, origin1, step1, extent1)?;
    let a2 = SpectralGrid::from_start_step(kind2, origin2, step2, extent2)?;
    let spectrum = JointSpectrum::new(a1, a2, values)?.with_provenance(format!("stitch_frames(n={})", frames.len()));
    Ok(Stitched { spectrum, gains })
}

/// One time-tagger record: channel number and timestamp in ps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub channel: u8,
    pub timestamp: u64,
}

/// Bytes per record: `u8` channel then little-endian `u64` timestamp.
pub const EVENT_RECORD_BYTES: usize = 9;

pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> Result<()> {
    for e in events {
        w.write_all(&[e.channel])?;
        w.write_all(&e.timestamp.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_events<R: Read>(mut r: R) -> Result<Vec<Event>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % EVENT_RECORD_BYTES != 0 {
        return Err(Error::Format(format!(
            "event stream length {} is not a multiple of {EVENT_RECORD_BYTES}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(EVENT_RECORD_BYTES)
        .map(|c| Event {
            channel: c[0],
            timestamp: u64::from_le_bytes(c[1..9].try_into().expect("8 bytes")),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventChannels {
    pub trigger: u8,
    pub detector1: u8,
    pub detector2: u8,
}

impl Default for EventChannels {
    fn default() -> Self {
        EventChannels {
            trigger: 0,
            detector1: 1,
            detector2: 2,
        }
    }
}

/// Histograms a time-ordered event stream into one frame. Arrival times are
/// measured from the preceding trigger; the first detection per channel per
/// trigger cycle forms the pair.
pub fn histogram_events(
    events: &[Event],
    channels: EventChannels,
    delays: (f64, f64),
    window: f64,
    time_bin: f64,
) -> Result<Frame> {
    if !(window > 0.0) || !(time_bin > 0.0) {
        return Err(Error::invalid("window and time bin must be positive"));
    }
    let n = (window / time_bin).floor() as usize;
    let a1 = SpectralGrid::from_start_step(AxisKind::ArrivalTime, delays.0 + time_bin / 2.0, time_bin, n)?;
    let a2 = SpectralGrid::from_start_step(AxisKind::ArrivalTime, delays.1 + time_bin / 2.0, time_bin, n)?;
    let mut counts = Matrix::zeros(n, n);

    let mut trigger: Option<u64> = None;
    let mut first: (Option<f64>, Option<f64>) = (None, None);
    let flush = |first: &mut (Option<f64>, Option<f64>), counts: &mut Matrix| {
        if let (Some(t1), Some(t2)) = *first {
            let b1 = ((t1 - delays.0) / time_bin).floor();
            let b2 = ((t2 - delays.1) / time_bin).floor();
            if b1 >= 0.0 && b2 >= 0.0 && (b1 as usize) < n && (b2 as usize) < n {
                let (i, j) = (b1 as usize, b2 as usize);
                counts.set(i, j, counts.get(i, j) + 1.0);
            }
        }
        *first = (None, None);
    };
    for e in events {
        if e.channel == channels.trigger {
            flush(&mut first, &mut counts);
            trigger = Some(e.timestamp);
            continue;
        }
        let Some(t0) = trigger else { continue };
        let t = e.timestamp.saturating_sub(t0) as f64;
        if e.channel == channels.detector1 && first.0.is_none() {
            first.0 = Some(t);
        } else if e.channel == channels.detector2 && first.1.is_none() {
            first.1 = Some(t);
        }
    }
    flush(&mut first, &mut counts);

    let mut js = JointSpectrum::new(a1, a2, counts)?.with_provenance("histogram_events");
    js.frame_meta = Some(FrameMeta {
        delay1: delays.0,
        delay2: delays.1,
        window,
    });
    Ok(Frame {
        histogram: js,
        delays,
        window,
        index: 0,
    })
}
