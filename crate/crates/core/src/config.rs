//! Run configuration file (TOML). Units are part of every key name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::OptimizeParams;
use crate::detection::{DetectorSpec, TcspcmSpec};
use crate::error::{Error, Result};
use crate::photonics::{BeamSplitterSpec, CouplerSpec, FibreSpec, FilterSpec, FreeSpaceSpec, HwpSpec, LensSpec, PbsSpec};
use crate::spdc::CrystalData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    /// Crystal data file, relative to the config file's directory.
    pub crystal_file: PathBuf,
    pub crystal_length_mm: f64,
    /// Oven temperature; the phase-matching temperature when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_c: Option<f64>,
    pub pump_wavelength_nm: f64,
    pub pump_power_mw: f64,
    pub pump_waist_um: f64,
    pub coherence_time_ps: f64,
    /// Pair rate of the reference crystal and pump below; fixes the
    /// coupling constant.
    pub reference_pair_rate_hz: f64,
    pub reference_length_mm: f64,
    pub reference_power_mw: f64,
    pub long_pass_filter: FilterSpec,
    pub band_pass_filter: FilterSpec,
    /// Splits signal (H, transmitted) from idler (V, reflected).
    pub pair_pbs: PbsSpec,
    pub collimating_lens: LensSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AliceSection {
    /// Extra delay of the D arm.
    pub delay_ps: u64,
    /// Transmitted share goes to the D arm.
    pub bs1: BeamSplitterSpec,
    pub hwp_d: HwpSpec,
    pub hwp_v: HwpSpec,
    /// Collimating lens to coupler lens.
    pub coupler_distance_mm: f64,
    pub coupler_lens: LensSpec,
    pub herald_coupler: CouplerSpec,
    pub signal_coupler: CouplerSpec,
    pub herald_fibre: FibreSpec,
    pub signal_fibre: FibreSpec,
    /// Only the first output is sent to Bob.
    pub bs2: BeamSplitterSpec,
    pub launch_lens: LensSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub free_space: FreeSpaceSpec,
}

/// Background at Bob's detectors, either as an excess coincidence level per
/// basis (converted through the calibration table) or as incident rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSection {
    /// Excess flat level in the d0 (bit 0) coincidence curve, counts/s/ns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_d0_per_s_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_d1_per_s_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident_rate_d0_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident_rate_d1_hz: Option<f64>,
    #[serde(default)]
    pub herald_incident_rate_hz: f64,
    #[serde(default = "default_calibration_rates")]
    pub calibration_incident_rates_hz: Vec<f64>,
    #[serde(default = "default_calibration_signal_rates")]
    pub calibration_signal_rates_hz: Vec<f64>,
    #[serde(default = "default_calibration_secondary")]
    pub calibration_secondary_incident_rate_hz: f64,
    #[serde(default = "default_calibration_reference")]
    pub calibration_reference_signal_rate_hz: f64,
    #[serde(default = "default_calibration_duration")]
    pub calibration_duration_s: f64,
    #[serde(default = "default_calibration_seed")]
    pub calibration_seed: u64,
}

fn default_calibration_rates() -> Vec<f64> {
    vec![0.0, 2.0e4, 5.0e4, 1.0e5, 2.0e5, 5.0e5, 1.0e6]
}
fn default_calibration_signal_rates() -> Vec<f64> {
    vec![2.0e6, 6.0e6, 12.0e6, 18.0e6, 24.0e6]
}
fn default_calibration_secondary() -> f64 {
    2.0e5
}
fn default_calibration_reference() -> f64 {
    18.0e6
}
fn default_calibration_duration() -> f64 {
    1.0
}
fn default_calibration_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BobSection {
    pub bs: BeamSplitterSpec,
    pub pbs: PbsSpec,
    pub hwp: HwpSpec,
    pub coupler_lens: LensSpec,
    pub coupler: CouplerSpec,
    pub fibre: FibreSpec,
    pub background: BackgroundSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsSection {
    pub herald: DetectorSpec,
    pub d0: DetectorSpec,
    pub d1: DetectorSpec,
    pub tcspcm: TcspcmSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub bin_width_ps: u64,
    pub qber_threshold_pct: f64,
    pub symmetry_tolerance_pct: f64,
    pub step_bins: usize,
    pub initial_width_fwhm: f64,
    pub peak_exclusion_ps: i64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let o = OptimizeParams::default();
        Self {
            bin_width_ps: crate::analysis::DEFAULT_BIN_PS,
            qber_threshold_pct: o.qber_threshold_pct,
            symmetry_tolerance_pct: o.symmetry_tolerance_pct,
            step_bins: o.step_bins,
            initial_width_fwhm: o.initial_width_fwhm,
            peak_exclusion_ps: o.peak_exclusion_ps,
        }
    }
}

impl AnalysisSection {
    pub fn optimize(&self) -> OptimizeParams {
        OptimizeParams {
            qber_threshold_pct: self.qber_threshold_pct,
            symmetry_tolerance_pct: self.symmetry_tolerance_pct,
            step_bins: self.step_bins,
            initial_width_fwhm: self.initial_width_fwhm,
            peak_exclusion_ps: self.peak_exclusion_ps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub duration_s: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Transverse grid for the coupling calculation.
    #[serde(default = "default_field_points")]
    pub field_points: usize,
    #[serde(default = "default_field_pitch")]
    pub field_pitch_um: f64,
}

fn default_field_points() -> usize {
    16384
}
fn default_field_pitch() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub source: SourceSection,
    pub alice: AliceSection,
    pub channel: ChannelSection,
    pub bob: BobSection,
    pub detectors: DetectorsSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    pub run: RunSection,
}

impl RunConfigFile {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text, path)
    }

    /// Violated invariants, one message each.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        let s = &self.source;
        need(s.crystal_length_mm > 0.0, "source.crystal_length_mm must be > 0".into());
        need(s.pump_power_mw >= 0.0, "source.pump_power_mw must be ≥ 0".into());
        need(s.pump_wavelength_nm > 0.0, "source.pump_wavelength_nm must be > 0".into());
        need(s.pump_waist_um > 0.0, "source.pump_waist_um must be > 0".into());
        need(s.coherence_time_ps >= 0.0, "source.coherence_time_ps must be ≥ 0".into());
        need(s.reference_pair_rate_hz >= 0.0, "source.reference_pair_rate_hz must be ≥ 0".into());
        need(s.reference_power_mw > 0.0 && s.reference_length_mm > 0.0, "source reference power and length must be > 0".into());
        let r = &self.run;
        need(r.duration_s > 0.0, "run.duration_s must be > 0".into());
        need(r.iterations >= 1, "run.iterations must be ≥ 1".into());
        need(r.field_points >= 64 && r.field_pitch_um > 0.0, "run field grid needs ≥ 64 points and a positive pitch".into());
        let d = &self.detectors;
        for (name, det) in [("herald", &d.herald), ("d0", &d.d0), ("d1", &d.d1)] {
            if let Err(e) = det.validate() {
                need(false, format!("detectors.{name}: {e}"));
            }
        }
        need(d.tcspcm.sma_loss_db >= 0.0, "detectors.tcspcm.sma_loss_db must be ≥ 0".into());
        let b = &self.bob.background;
        for (name, level, rate) in
            [("d0", b.level_d0_per_s_ns, b.incident_rate_d0_hz), ("d1", b.level_d1_per_s_ns, b.incident_rate_d1_hz)]
        {
            need(
                level.is_some() != rate.is_some(),
                format!("bob.background: give exactly one of level_{name}_per_s_ns and incident_rate_{name}_hz"),
            );
            need(level.is_none_or(|v| v >= 0.0) && rate.is_none_or(|v| v >= 0.0), format!("bob.background {name} values must be ≥ 0"));
        }
        need(b.herald_incident_rate_hz >= 0.0, "bob.background.herald_incident_rate_hz must be ≥ 0".into());
        need(b.calibration_duration_s > 0.0, "bob.background.calibration_duration_s must be > 0".into());
        let a = &self.analysis;
        need(a.bin_width_ps >= 1, "analysis.bin_width_ps must be ≥ 1".into());
        need(a.step_bins >= 1, "analysis.step_bins must be ≥ 1".into());
        need(
            a.qber_threshold_pct > 0.0 && a.qber_threshold_pct <= 100.0,
            "analysis.qber_threshold_pct must lie in (0, 100]".into(),
        );
        need(a.initial_width_fwhm > 0.0, "analysis.initial_width_fwhm must be > 0".into());
        // The two peaks must not overlap: Δt has to exceed the initial window.
        let sig = |fwhm: f64| fwhm * fwhm;
        let peak_fwhm = (sig(d.herald.jitter_fwhm_ps) + sig(d.d0.jitter_fwhm_ps.max(d.d1.jitter_fwhm_ps)) + 2.0 * sig(d.tcspcm.jitter_fwhm_ps)).sqrt();
        need(
            self.alice.delay_ps as f64 > a.initial_width_fwhm * peak_fwhm,
            format!(
                "alice.delay_ps ({}) must exceed the initial coincidence window (≈{:.0} ps)",
                self.alice.delay_ps,
                a.initial_width_fwhm * peak_fwhm
            ),
        );
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// Validated configuration with its crystal data loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct B92Config {
    pub file: RunConfigFile,
    pub crystal: CrystalData,
}

impl B92Config {
    /// Resolves `crystal_file` against `base_dir` and validates everything.
    pub fn new(file: RunConfigFile, base_dir: &Path) -> Result<Self> {
        file.validate().map_err(Error::ConfigInvalid)?;
        let crystal_path = base_dir.join(&file.source.crystal_file);
        let crystal = CrystalData::load(&crystal_path)?;
        Ok(Self { file, crystal })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = RunConfigFile::load(path)?;
        Self::new(file, path.parent().unwrap_or(Path::new(".")))
    }

    /// Time of flight over the channel, ps.
    pub fn flight_time_ps(&self) -> u64 {
        self.file.channel.free_space.delay_ps()
    }

    pub fn delay_ps(&self) -> u64 {
        self.file.alice.delay_ps
    }

    pub fn duration_ps(&self) -> u64 {
        (self.file.run.duration_s * crate::timetag::PS_PER_S).round() as u64
    }

    /// Histogram range around the expected peaks.
    pub fn histogram_range(&self) -> (i64, i64) {
        crate::analysis::default_range(self.flight_time_ps() as i64, self.delay_ps() as i64)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn fixture_path(name: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
    }

    #[test]
    fn fixture_parses_and_validates() {
        let cfg = B92Config::load(&fixture_path("night-20mm.toml")).unwrap();
        assert_eq!(cfg.delay_ps(), 10_000);
        assert_eq!(cfg.flight_time_ps(), 6671);
        assert_eq!(cfg.file.analysis.qber_threshold_pct, 4.8);
    }

    #[test]
    fn round_trip_is_identity() {
        let file = RunConfigFile::load(&fixture_path("night-20mm.toml")).unwrap();
        let again = RunConfigFile::from_toml(&file.to_toml(), Path::new("mem")).unwrap();
        assert_eq!(file, again);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = std::fs::read_to_string(fixture_path("night-20mm.toml")).unwrap();
        let bad = text.replace("[run]\n", "[run]\nbogus_key = 1\n");
        let err = RunConfigFile::from_toml(&bad, Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn missing_key_is_named() {
        let text = std::fs::read_to_string(fixture_path("night-20mm.toml")).unwrap();
        let bad: String = text.lines().filter(|l| !l.starts_with("duration_s")).collect::<Vec<_>>().join("\n");
        let err = RunConfigFile::from_toml(&bad, Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.contains("duration_s"), "{err}");
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut file = RunConfigFile::load(&fixture_path("night-20mm.toml")).unwrap();
        file.run.duration_s = 0.0;
        file.alice.delay_ps = 10;
        let errs = file.validate().unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
    }
}
