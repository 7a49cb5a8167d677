//! Quantum dynamics on finite boxes: exact evolution, moments, their time
//! averages, the moment/Green's-function inequalities, Green's decay at
//! complex energy, eigenvector profiles and the arithmetic phase test.

pub mod bounds;
pub mod evolution;
pub mod localization;

use thiserror::Error;

use crate::greens::GreenError;
use crate::lattice::GeometryError;
use crate::model::ModelError;

pub use bounds::{
    adaptive_simpson, complex_energy_green_decay, log_grid, moment_green_bound, onset_radius, sne_bound, sne_check, sne_start_time, GreenDecayReport, Margins,
    MomentGreenReport, QuadratureOptions, SneReport,
};
pub use evolution::{evolve_amplitudes, exponential_rule, gauss_laguerre, gauss_legendre, moment_p, moment_series, time_avg_moment, AmplitudeTable, EvolutionData, MomentSeries, TimeAverage};
pub use localization::{arithmetic_phase_test, localization_profile, profiles_from_eigen, EigenProfile, LocalizationSummary, PhaseEvidence, PhaseViolation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("time average disagrees: quadrature {quadrature} vs spectral {spectral} (relative {relative:e})")]
    QuadratureDisagreement { quadrature: f64, spectral: f64, relative: f64 },
    #[error("eigenvalue {eigenvalue} lies outside [{lo}, {hi}]")]
    SpectrumEscapes { eigenvalue: f64, lo: f64, hi: f64 },
    #[error("1/t = {inv_t:e} is outside [{lower:e}, {upper:e})")]
    BracketViolated { inv_t: f64, lower: f64, upper: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
