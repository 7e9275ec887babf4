use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the simulator can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rate: per-bin probability {0} is outside (0, 1)")]
    InvalidRate(f64),
    #[error("invalid probability {0}: must lie in [0, 1)")]
    InvalidProbability(f64),
    #[error("duration {duration_ps} ps is shorter than the bin resolution {bin_ps} ps")]
    DegenerateDuration { duration_ps: u64, bin_ps: u64 },
    #[error("resampling template is empty")]
    EmptyTemplate,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("wavelength {wavelength_um} µm outside Sellmeier validity range [{min_um}, {max_um}] µm")]
    WavelengthOutOfRange { wavelength_um: f64, min_um: f64, max_um: f64 },
    #[error("energy conservation violated: 1/λp - 1/λs - 1/λi = {residual:e} nm⁻¹")]
    EnergyConservation { residual: f64 },
    #[error("no phase-matching root in [{lo} °C, {hi} °C]")]
    NoRootInBracket { lo: f64, hi: f64 },
    #[error("lens aliasing: pitch {pitch_um} µm exceeds Nyquist limit {limit_um} µm at the aperture edge")]
    Aliasing { pitch_um: f64, limit_um: f64 },
    #[error("beam escaped the sampled window: {edge_fraction:.3e} of the power lies at the edges")]
    WindowEscape { edge_fraction: f64 },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("calibration table is not monotone: {0}")]
    NonMonotoneTable(String),
    #[error("value {value} outside calibration range [{lo}, {hi}]")]
    Extrapolation { value: f64, lo: f64, hi: f64 },
    #[error("coincidence peaks could not be resolved: {0}")]
    PeaksUnresolved(String),
    #[error("no flat background region outside the peak exclusion zones")]
    NoFlatRegion,
    #[error("no window placement satisfies the constraints: {0}")]
    Infeasible(String),
    #[error("sifted key is empty")]
    EmptyKey,
    #[error("key length mismatch: alice {alice}, bob {bob}")]
    KeyLengthMismatch { alice: usize, bob: usize },
    #[error("window length {k_s} s exceeds the dataset duration {duration_s} s")]
    KExceedsDuration { k_s: f64, duration_s: f64 },
    #[error("clock mismatch between tag files: {0}")]
    ClockMismatch(String),
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("config parse error in {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },
    #[error("config validation failed:\n  - {}", .0.join("\n  - "))]
    ConfigInvalid(Vec<String>),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}
