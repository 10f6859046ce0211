//! Simulation and reconstruction toolkit for Fourier-domain quantum optical
//! coherence tomography.
//!
//! The crate is organised along the processing chain:
//!
//! - [`domain`]: grids, unit conversions and the shared value types.
//! - [`forward`]: two-photon joint spectra, time-domain HOM traces and
//!   classical interferograms for layered objects, plus shot noise.
//! - [`acquisition`]: dispersive-fibre time tagging, framing and stitching.
//! - [`preprocess`]: 45° rotation, fibre- and pump-dispersion compensation.
//! - [`reconstruct`]: A-scans, 2D Fourier maps, peak metrology, fall-off
//!   and artefact prediction.
//! - [`pipeline`]: configuration, file formats, presets and the CLI driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod acquisition;
pub mod domain;
pub mod error;
pub mod fft;
pub mod forward;
pub mod pipeline;
pub mod preprocess;
pub mod reconstruct;
pub mod signal;

pub use domain::{
    AScan, AScanKind, AxisKind, DetectionSpec, Dispersion, FibreSpec, Interface, JointSpectrum,
    LayeredObject, Matrix, SourceSpec, SpectralGrid,
};
pub use error::{Error, Result};
pub use forward::{SimulationRequest, TimeDomainTrace};
