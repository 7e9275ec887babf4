//! Single-photon detectors, the time tagger, and background-rate calibration.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::timetag::TimeTagSeries;

/// How the configured jitter figure maps to the Gaussian σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterSigmaConvention {
    /// σ = FWHM / 2.355.
    #[default]
    FwhmStandard,
    /// σ = 2.3 × jitter.
    Multiplied,
}

impl JitterSigmaConvention {
    pub fn sigma(self, jitter_fwhm_ps: f64) -> f64 {
        match self {
            JitterSigmaConvention::FwhmStandard => jitter_fwhm_ps / (8.0 * std::f64::consts::LN_2).sqrt(),
            JitterSigmaConvention::Multiplied => 2.3 * jitter_fwhm_ps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub quantum_efficiency: f64,
    pub dead_time_ps: u64,
    pub jitter_fwhm_ps: f64,
    #[serde(default)]
    pub jitter_sigma_convention: JitterSigmaConvention,
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(Error::param("quantum_efficiency", format!("{} outside (0, 1]", self.quantum_efficiency)));
        }
        if !(self.jitter_fwhm_ps >= 0.0) {
            return Err(Error::param("jitter_fwhm_ps", "must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcspcmSpec {
    pub dead_time_ps: u64,
    pub jitter_fwhm_ps: f64,
    pub sma_loss_db: f64,
    #[serde(default)]
    pub jitter_sigma_convention: JitterSigmaConvention,
}

impl TcspcmSpec {
    /// Channel efficiency 10^(−loss/10).
    pub fn efficiency(&self) -> f64 {
        10f64.powf(-self.sma_loss_db / 10.0)
    }
}

/// Non-paralyzable dead time: a tag closer than `dead_time` to the previous
/// accepted tag is discarded.
pub fn prune_dead_time(tags: &[u64], dead_time: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(tags.len());
    let mut last: Option<u64> = None;
    for &t in tags {
        if last.is_none_or(|l| t - l >= dead_time) {
            out.push(t);
            last = Some(t);
        }
    }
    out
}

/// Gaussian timing smear, then re-sort. Tags pushed outside the span are
/// dropped and coinciding tags are separated by 1 ps.
fn smear(mut tags: Vec<u64>, sigma: f64, duration: u64, rng: &mut RandomStream) -> TimeTagSeries {
    if sigma > 0.0 {
        let mut shifted: Vec<u64> = Vec::with_capacity(tags.len());
        for &t in &tags {
            let s = t as f64 + sigma * rng.standard_normal();
            let s = s.round();
            if s >= 0.0 && s < duration as f64 {
                shifted.push(s as u64);
            }
        }
        shifted.sort_unstable();
        tags = shifted;
    }
    let mut out: Vec<u64> = Vec::with_capacity(tags.len());
    for t in tags {
        let t = match out.last() {
            Some(&p) if t <= p => p + 1,
            _ => t,
        };
        if t < duration {
            out.push(t);
        }
    }
    TimeTagSeries::from_sorted_unchecked(out, duration)
}

/// Quantum efficiency, then dead time, then jitter.
pub fn detect(input: &TimeTagSeries, spec: &DetectorSpec, rng: &mut RandomStream) -> Result<TimeTagSeries> {
    spec.validate()?;
    let kept = input.thin(spec.quantum_efficiency, rng);
    let pruned = prune_dead_time(kept.tags(), spec.dead_time_ps);
    let sigma = spec.jitter_sigma_convention.sigma(spec.jitter_fwhm_ps);
    Ok(smear(pruned, sigma, input.duration(), rng))
}

/// Cable loss thinning, then the tagger's own dead time and jitter.
pub fn tcspcm_record(input: &TimeTagSeries, spec: &TcspcmSpec, rng: &mut RandomStream) -> Result<TimeTagSeries> {
    if !(spec.sma_loss_db >= 0.0) {
        return Err(Error::param("sma_loss_db", "must be ≥ 0"));
    }
    let kept = input.thin(spec.efficiency(), rng);
    let pruned = prune_dead_time(kept.tags(), spec.dead_time_ps);
    let sigma = spec.jitter_sigma_convention.sigma(spec.jitter_fwhm_ps);
    Ok(smear(pruned, sigma, input.duration(), rng))
}

/// Background coincidence level per basis, coincidences per second per ns of
/// time difference, above the level present without background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisLevels {
    pub d0: f64,
    pub d1: f64,
}

impl BasisLevels {
    pub fn get(&self, detector: usize) -> f64 {
        if detector == 0 {
            self.d0
        } else {
            self.d1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub abscissa_hz: f64,
    pub values: BasisLevels,
}

/// Incident background rate ↔ background coincidence level, built at the
/// reference signal rate, plus the signal-rate scaling ratio at fixed incidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundCalibrationTable {
    pub reference_signal_rate_hz: f64,
    pub secondary_incident_rate_hz: f64,
    pub param_hash: String,
    /// incident rate → level.
    pub primary: Vec<CalibrationPoint>,
    /// signal rate → level(signal) / level(reference).
    pub secondary: Vec<CalibrationPoint>,
}

fn check_monotone(points: &[CalibrationPoint], what: &str) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::NonMonotoneTable(format!("{what}: fewer than two points")));
    }
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if !(b.abscissa_hz > a.abscissa_hz) {
            return Err(Error::NonMonotoneTable(format!("{what}: abscissa {} then {}", a.abscissa_hz, b.abscissa_hz)));
        }
        for d in 0..2 {
            if !(b.values.get(d) > a.values.get(d)) {
                return Err(Error::NonMonotoneTable(format!(
                    "{what}: d{d} value {} at {} Hz not above {} at {} Hz",
                    b.values.get(d),
                    b.abscissa_hz,
                    a.values.get(d),
                    a.abscissa_hz
                )));
            }
        }
    }
    Ok(())
}

/// Linear interpolation of `y(x)` on sorted samples.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(Error::Extrapolation { value: x, lo, hi });
    }
    let j = xs.partition_point(|&v| v < x);
    if xs[j] == x {
        return Ok(ys[j]);
    }
    let (x0, x1, y0, y1) = (xs[j - 1], xs[j], ys[j - 1], ys[j]);
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

impl BackgroundCalibrationTable {
    pub fn validate(&self) -> Result<()> {
        check_monotone(&self.primary, "primary grid")?;
        check_monotone(&self.secondary, "secondary grid")
    }

    /// Level-to-rate inversion on the primary grid, divided by the
    /// signal-rate ratio.
    pub fn incident_rate(&self, detector: usize, target_level: f64, signal_rate_hz: f64) -> Result<f64> {
        let levels: Vec<f64> = self.primary.iter().map(|p| p.values.get(detector)).collect();
        let rates: Vec<f64> = self.primary.iter().map(|p| p.abscissa_hz).collect();
        let base = interpolate(&levels, &rates, target_level)?;
        let sx: Vec<f64> = self.secondary.iter().map(|p| p.abscissa_hz).collect();
        let sy: Vec<f64> = self.secondary.iter().map(|p| p.values.get(detector)).collect();
        let ratio = interpolate(&sx, &sy, signal_rate_hz)?;
        Ok(base / ratio)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# background calibration v1");
        let _ = writeln!(s, "# reference_signal_rate_hz={}", self.reference_signal_rate_hz);
        let _ = writeln!(s, "# secondary_incident_rate_hz={}", self.secondary_incident_rate_hz);
        let _ = writeln!(s, "# param_hash={}", self.param_hash);
        let _ = writeln!(s, "grid,abscissa_hz,d0,d1");
        for (name, pts) in [("primary", &self.primary), ("secondary", &self.secondary)] {
            for p in pts {
                let _ = writeln!(s, "{name},{},{},{}", p.abscissa_hz, p.values.d0, p.values.d1);
            }
        }
        s
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let mut header = std::collections::BTreeMap::new();
        let mut primary = Vec::new();
        let mut secondary = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once('=') {
                    header.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            if line.is_empty() || line.starts_with("grid,") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("line {}: expected 4 fields", n + 1)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", n + 1)));
            let p = CalibrationPoint { abscissa_hz: num(f[1])?, values: BasisLevels { d0: num(f[2])?, d1: num(f[3])? } };
            match f[0] {
                "primary" => primary.push(p),
                "secondary" => secondary.push(p),
                other => return Err(bad(format!("line {}: unknown grid '{other}'", n + 1))),
            }
        }
        let get = |k: &str| header.get(k).cloned().ok_or_else(|| bad(format!("missing header {k}")));
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")));
        let table = Self {
            reference_signal_rate_hz: num("reference_signal_rate_hz")?,
            secondary_incident_rate_hz: num("secondary_incident_rate_hz")?,
            param_hash: get("param_hash")?,
            primary,
            secondary,
        };
        table.validate()?;
        Ok(table)
    }
}

/// Grid specification for [`calibrate_background`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationGrid {
    pub reference_signal_rate_hz: f64,
    /// Incident background rates, strictly increasing, first entry 0.
    pub incident_rates_hz: Vec<f64>,
    /// Signal rates for the ratio grid, strictly increasing.
    pub signal_rates_hz: Vec<f64>,
    /// Fixed incidence used for the ratio grid.
    pub secondary_incident_rate_hz: f64,
    /// Simulated span per grid point.
    pub duration_ps: u64,
}

/// Builds the table from a measurement closure.
///
/// `measure(incident_hz, signal_hz, rng)` runs the full pipeline and returns
/// the flat coincidence level per basis. Every call receives a clone of the
/// same stream, so grid points share their random numbers and differences
/// between points reflect the parameter change rather than sampling noise.
pub fn calibrate_background<F>(grid: &CalibrationGrid, param_hash: String, rng: &RandomStream, measure: F) -> Result<BackgroundCalibrationTable>
where
    F: Fn(f64, f64, &mut RandomStream) -> Result<BasisLevels> + Sync,
{
    use rayon::prelude::*;
    if grid.incident_rates_hz.len() < 3 {
        return Err(Error::param("incident_rates_hz", "need at least 3 grid points"));
    }
    if grid.incident_rates_hz[0] != 0.0 {
        return Err(Error::param("incident_rates_hz", "grid must start at 0"));
    }
    let reference = grid.reference_signal_rate_hz;
    let run = |inc: f64, sig: f64| measure(inc, sig, &mut rng.clone());
    let base_ref = run(0.0, reference)?;
    let excess = |v: BasisLevels, base: BasisLevels| BasisLevels { d0: v.d0 - base.d0, d1: v.d1 - base.d1 };
    let primary = grid.incident_rates_hz[1..]
        .par_iter()
        .map(|&inc| Ok(CalibrationPoint { abscissa_hz: inc, values: excess(run(inc, reference)?, base_ref) }))
        .collect::<Result<Vec<_>>>()?;
    let primary: Vec<CalibrationPoint> =
        std::iter::once(CalibrationPoint { abscissa_hz: 0.0, values: BasisLevels { d0: 0.0, d1: 0.0 } }).chain(primary).collect();
    let inc = grid.secondary_incident_rate_hz;
    let at_ref = excess(run(inc, reference)?, base_ref);
    let secondary = grid
        .signal_rates_hz
        .par_iter()
        .map(|&sig| {
            let v = excess(run(inc, sig)?, run(0.0, sig)?);
            Ok(CalibrationPoint { abscissa_hz: sig, values: BasisLevels { d0: v.d0 / at_ref.d0, d1: v.d1 / at_ref.d1 } })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = BackgroundCalibrationTable {
        reference_signal_rate_hz: reference,
        secondary_incident_rate_hz: inc,
        param_hash,
        primary,
        secondary,
    };
    table.validate()?;
    Ok(table)
}

/// Environment variable naming the calibration cache directory.
pub const CACHE_DIR_ENV: &str = "B92SIM_CACHE_DIR";

pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("b92sim-cache"))
}

/// Reads the table cached under `hash`, or builds and stores it.
pub fn load_or_build<F>(dir: &Path, hash: &str, build: F) -> Result<BackgroundCalibrationTable>
where
    F: FnOnce() -> Result<BackgroundCalibrationTable>,
{
    let path = dir.join(format!("bgcal-{hash}.csv"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(t) = BackgroundCalibrationTable::from_csv(&text, &path) {
            if t.param_hash == hash {
                return Ok(t);
            }
        }
    }
    let table = build()?;
    crate::io::write_atomic(&path, |f| f.write_all(table.to_csv().as_bytes()))?;
    Ok(table)
}
