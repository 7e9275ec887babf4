//! The full B92 run: source, Alice's preparation, channel, Bob's measurement
//! and detection, ending in three raw tag streams.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    estimate_background_level, optimize_windows, BinWindows, KeyMetrics, PeakHistograms, Setup, Strategy, WindowPair,
};
use crate::config::B92Config;
use crate::detection::{self, BasisLevels, BackgroundCalibrationTable, CalibrationGrid};
use crate::error::{Error, Result};
use crate::photonics::{
    bs_split, coupling_efficiency, free_space_transmit, hwp_project, lens_transform, pbs_split, propagate, CouplerSpec,
    LensSpec, Polarization, PolarizedTagSeries, TransverseField,
};
use crate::rng::{derive_seed, RandomStream};
use crate::spdc::{self, CrystalSpec, PumpSpec, SpectralGrid};
use crate::timetag::{self, SinglePhotonStatModel, ThermalStatModel, TimeTagSeries, PS_PER_S};

/// Per-run draws and realised rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub duration_ps: u64,
    pub temperature_c: f64,
    pub pair_rate_hz: f64,
    pub pairs_emitted: u64,
    pub herald_coupling: f64,
    pub signal_coupling_d: f64,
    pub signal_coupling_v: f64,
    pub bob_coupling_d0: f64,
    pub bob_coupling_d1: f64,
    pub hwp_error_d_deg: f64,
    pub hwp_error_v_deg: f64,
    pub hwp_error_bob_deg: f64,
    pub background_incident_d0_hz: f64,
    pub background_incident_d1_hz: f64,
    pub photons_at_d0: u64,
    pub photons_at_d1: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub alice_herald: TimeTagSeries,
    /// Transmitted arm, bit 0.
    pub bob_d0: TimeTagSeries,
    /// Reflected arm, bit 1.
    pub bob_d1: TimeTagSeries,
    pub metadata: RunMetadata,
}

/// Quantities fixed for a configuration: pair rate, the fields at the coupler
/// planes, and the incident background rates.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub temperature_c: f64,
    pub pair_rate_hz: f64,
    pub alice_field: TransverseField,
    pub bob_field: TransverseField,
    pub background_hz: [f64; 2],
}

fn pump(cfg: &B92Config, power_mw: f64) -> PumpSpec {
    let s = &cfg.file.source;
    PumpSpec { wavelength_nm: s.pump_wavelength_nm, power_mw, waist_um: s.pump_waist_um, polarization: Polarization::H }
}

/// Operating temperature and pair rate, with the coupling constant fixed by
/// the configured reference crystal and pump.
pub fn source_rate(cfg: &B92Config) -> Result<(f64, f64)> {
    let s = &cfg.file.source;
    let crystal = CrystalSpec::new(&cfg.crystal, s.crystal_length_mm)?;
    let reference = CrystalSpec::new(&cfg.crystal, s.reference_length_mm)?;
    let p = pump(cfg, s.pump_power_mw);
    let p_ref = pump(cfg, s.reference_power_mw);
    let grid = SpectralGrid::default();
    let t_ref = spdc::phase_matching_temperature(&reference, &p_ref)?;
    let temperature = match s.temperature_c {
        Some(t) => t,
        None => spdc::phase_matching_temperature(&crystal, &p)?,
    };
    let kappa = spdc::calibrate_coupling_constant(&reference, &p_ref, t_ref, &grid, s.reference_pair_rate_hz)?;
    let rate = spdc::pair_generation_rate(&crystal, &p, temperature, kappa, &grid)?;
    Ok((temperature, rate))
}

fn focus(field: &TransverseField, lens: &LensSpec) -> Result<TransverseField> {
    propagate(&lens_transform(field, lens)?, lens.focal_length_mm)
}

/// Field at Alice's coupler tips: Gaussian mode at the crystal, collimated by
/// the source lens, carried to the coupler lens and focused.
fn alice_field(cfg: &B92Config) -> Result<TransverseField> {
    let f = &cfg.file;
    let signal_nm = 2.0 * f.source.pump_wavelength_nm;
    let start = TransverseField::gaussian(f.source.pump_waist_um, f.run.field_points, f.run.field_pitch_um, signal_nm);
    let at_lens = propagate(&start, f.source.collimating_lens.focal_length_mm)?;
    let collimated = lens_transform(&at_lens, &f.source.collimating_lens)?;
    let at_coupler = propagate(&collimated, f.alice.coupler_distance_mm)?;
    focus(&at_coupler, &f.alice.coupler_lens)
}

/// Field at Bob's coupler tips: fibre mode launched through Alice's output
/// lens, across the channel, focused by Bob's coupler lens.
fn bob_field(cfg: &B92Config) -> Result<TransverseField> {
    let f = &cfg.file;
    let signal_nm = 2.0 * f.source.pump_wavelength_nm;
    let mode = TransverseField::gaussian(f.alice.signal_coupler.mode_field_radius_um, f.run.field_points, f.run.field_pitch_um, signal_nm);
    let at_lens = propagate(&mode, f.alice.launch_lens.focal_length_mm)?;
    let launched = lens_transform(&at_lens, &f.alice.launch_lens)?;
    let at_bob = propagate(&launched, f.channel.free_space.length_m * 1e3)?;
    focus(&at_bob, &f.bob.coupler_lens)
}

fn couple(field: &TransverseField, spec: &CouplerSpec, rng: &mut RandomStream) -> Result<f64> {
    let loss = spec.coupling_loss.check("coupling_loss")?;
    Ok(coupling_efficiency(field, spec.mode_field_radius_um, spec.sample_offset(rng), loss))
}

/// Hash of every parameter that shapes the calibration measurement.
pub fn calibration_hash(cfg: &B92Config) -> String {
    let mut f = cfg.file.clone();
    let bg = &mut f.bob.background;
    bg.level_d0_per_s_ns = None;
    bg.level_d1_per_s_ns = None;
    bg.incident_rate_d0_hz = None;
    bg.incident_rate_d1_hz = None;
    f.source.pump_power_mw = f.source.reference_power_mw;
    f.source.crystal_length_mm = f.source.reference_length_mm;
    f.run.seed = 0;
    f.run.iterations = 1;
    f.run.duration_s = 1.0;
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(f.to_toml().as_bytes());
    h.update(format!("{:?}", cfg.crystal).as_bytes());
    let digest = h.finalize();
    digest[..12].iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds (or reads from the cache) the background calibration table.
pub fn background_table(cfg: &B92Config, alice: &TransverseField, bob: &TransverseField) -> Result<BackgroundCalibrationTable> {
    let hash = calibration_hash(cfg);
    let bg = &cfg.file.bob.background;
    let grid = CalibrationGrid {
        reference_signal_rate_hz: bg.calibration_reference_signal_rate_hz,
        incident_rates_hz: bg.calibration_incident_rates_hz.clone(),
        signal_rates_hz: bg.calibration_signal_rates_hz.clone(),
        secondary_incident_rate_hz: bg.calibration_secondary_incident_rate_hz,
        duration_ps: (bg.calibration_duration_s * PS_PER_S).round() as u64,
    };
    detection::load_or_build(&detection::cache_dir(), &hash, || {
        let temperature = source_rate(cfg)?.0;
        let rng = RandomStream::new(bg.calibration_seed);
        detection::calibrate_background(&grid, hash.clone(), &rng, |inc, sig, r| {
            let prep = Prepared {
                temperature_c: temperature,
                pair_rate_hz: sig,
                alice_field: alice.clone(),
                bob_field: bob.clone(),
                background_hz: [inc, inc],
            };
            let out = simulate(cfg, &prep, grid.duration_ps, r)?;
            background_levels(cfg, &out)
        })
    })
}

/// Flat coincidence level per basis, counts/s/ns.
pub fn background_levels(cfg: &B92Config, out: &RunOutput) -> Result<BasisLevels> {
    let bin = cfg.file.analysis.bin_width_ps;
    let h = PeakHistograms::build(&out.alice_herald, &out.bob_d0, &out.bob_d1, bin, cfg.histogram_range());
    let t = cfg.flight_time_ps() as i64;
    let dt = cfg.delay_ps() as i64;
    let peaks = [t, t + dt];
    let scale = h.duration_s * bin as f64 / 1e3;
    let d0 = estimate_background_level(&h.bit0, &peaks, dt / 2)?.mean / scale;
    let d1 = estimate_background_level(&h.bit1, &peaks, dt / 2)?.mean / scale;
    Ok(BasisLevels { d0, d1 })
}

pub fn prepare(cfg: &B92Config) -> Result<Prepared> {
    let (temperature_c, pair_rate_hz) = source_rate(cfg)?;
    let alice = alice_field(cfg)?;
    let bob = bob_field(cfg)?;
    let bg = &cfg.file.bob.background;
    let mut background_hz = [bg.incident_rate_d0_hz.unwrap_or(0.0), bg.incident_rate_d1_hz.unwrap_or(0.0)];
    let levels = [bg.level_d0_per_s_ns, bg.level_d1_per_s_ns];
    if levels.iter().any(Option::is_some) {
        let table = background_table(cfg, &alice, &bob)?;
        for (d, level) in levels.iter().enumerate() {
            if let Some(level) = level {
                background_hz[d] = table.incident_rate(d, *level, pair_rate_hz)?;
            }
        }
    }
    Ok(Prepared { temperature_c, pair_rate_hz, alice_field: alice, bob_field: bob, background_hz })
}

fn background(rate_hz: f64, duration: u64, rng: &mut RandomStream) -> Result<TimeTagSeries> {
    if rate_hz == 0.0 || duration == 0 {
        return Ok(TimeTagSeries::empty(duration));
    }
    timetag::generate_thermal_background_tags(&ThermalStatModel::from_rate(rate_hz, 1), duration, rng)
}

fn detect_chain(photons: &TimeTagSeries, spec: &detection::DetectorSpec, cfg: &B92Config, rng: &mut RandomStream) -> Result<TimeTagSeries> {
    let detected = detection::detect(photons, spec, rng)?;
    detection::tcspcm_record(&detected, &cfg.file.detectors.tcspcm, rng)
}

/// Runs the pipeline once with the rates in `prep`. Every stage draws from
/// its own named substream of `root`.
pub fn simulate(cfg: &B92Config, prep: &Prepared, duration: u64, root: &RandomStream) -> Result<RunOutput> {
    let f = &cfg.file;
    let s = &f.source;
    let stream = |name: &str| root.named(name);

    let mut r = stream("alignment");
    let herald_coupling = couple(&prep.alice_field, &f.alice.herald_coupler, &mut r)?;
    let signal_coupling_d = couple(&prep.alice_field, &f.alice.signal_coupler, &mut r)?;
    let signal_coupling_v = couple(&prep.alice_field, &f.alice.signal_coupler, &mut r)?;
    let bob_coupling_d0 = couple(&prep.bob_field, &f.bob.coupler, &mut r)?;
    let bob_coupling_d1 = couple(&prep.bob_field, &f.bob.coupler, &mut r)?;
    let hwp_error_d_deg = f.alice.hwp_d.sample_error(&mut r);
    let hwp_error_v_deg = f.alice.hwp_v.sample_error(&mut r);
    let hwp_error_bob_deg = f.bob.hwp.sample_error(&mut r);

    let pairs = if prep.pair_rate_hz > 0.0 && duration > 0 {
        let model = SinglePhotonStatModel::new(prep.pair_rate_hz, s.coherence_time_ps);
        timetag::generate_single_photon_tags(&model, duration, &mut stream("pairs"))?
    } else {
        TimeTagSeries::empty(duration)
    };
    let pairs_emitted = pairs.len() as u64;
    let filters = s.long_pass_filter.transmission
        * s.long_pass_filter.insertion_loss.transmission()
        * s.band_pass_filter.transmission
        * s.band_pass_filter.insertion_loss.transmission();
    let pbs_pass = 1.0 - s.pair_pbs.loss.check("pair_pbs.loss")?;

    // Idler: reflected at the pair PBS, coupled, detected as the herald.
    let idler_survival = filters * pbs_pass * (1.0 - s.pair_pbs.transmit_probability(Polarization::V))
        * herald_coupling
        * f.alice.herald_fibre.survival()?;
    let idler = pairs.thin(idler_survival, &mut stream("idler"));
    let idler = timetag::merge(&idler, &background(f.bob.background.herald_incident_rate_hz, duration, &mut stream("background-herald"))?);
    let alice_herald = detect_chain(&idler, &f.detectors.herald, cfg, &mut stream("detect-herald"))?;

    // Signal: transmitted at the pair PBS, then Alice's random choice.
    let mut r = stream("signal");
    let signal_survival = filters * pbs_pass * s.pair_pbs.transmit_probability(Polarization::H);
    let signal = PolarizedTagSeries::uniform(pairs.thin(signal_survival, &mut r), Polarization::H);
    drop(pairs);
    let (to_d, to_v) = bs_split(&signal, &f.alice.bs1, &mut r)?;
    drop(signal);
    let fibre = f.alice.signal_fibre.survival()?;
    let d_arm = hwp_project(&to_d, &f.alice.hwp_d, hwp_error_d_deg, &mut r)?
        .with_bit(0)
        .attenuate(signal_coupling_d * fibre, &mut r)
        .delay(f.alice.delay_ps);
    let v_arm = hwp_project(&to_v, &f.alice.hwp_v, hwp_error_v_deg, &mut r)?.with_bit(1).attenuate(signal_coupling_v * fibre, &mut r);
    let (sent, _) = bs_split(&d_arm.merge(&v_arm), &f.alice.bs2, &mut r)?;
    let received = free_space_transmit(&sent, &f.channel.free_space, &mut r)?;

    // Bob: transmitted arm PBS → d0, reflected arm HWP + PBS → d1.
    let mut r = stream("bob");
    let bob_fibre = f.bob.fibre.survival()?;
    let (arm0, arm1) = bs_split(&received, &f.bob.bs, &mut r)?;
    let to_d0 = pbs_split(&arm0, &f.bob.pbs, &mut r)?.0.attenuate(bob_coupling_d0 * bob_fibre, &mut r).into_series();
    let rotated = hwp_project(&arm1, &f.bob.hwp, hwp_error_bob_deg, &mut r)?;
    let to_d1 = pbs_split(&rotated, &f.bob.pbs, &mut r)?.0.attenuate(bob_coupling_d1 * bob_fibre, &mut r).into_series();
    let photons_at_d0 = to_d0.len() as u64;
    let photons_at_d1 = to_d1.len() as u64;

    let at_d0 = timetag::merge(&to_d0, &background(prep.background_hz[0], duration, &mut stream("background-d0"))?);
    let at_d1 = timetag::merge(&to_d1, &background(prep.background_hz[1], duration, &mut stream("background-d1"))?);
    let bob_d0 = detect_chain(&at_d0, &f.detectors.d0, cfg, &mut stream("detect-d0"))?;
    let bob_d1 = detect_chain(&at_d1, &f.detectors.d1, cfg, &mut stream("detect-d1"))?;

    Ok(RunOutput {
        alice_herald,
        bob_d0,
        bob_d1,
        metadata: RunMetadata {
            seed: root.seed(),
            duration_ps: duration,
            temperature_c: prep.temperature_c,
            pair_rate_hz: prep.pair_rate_hz,
            pairs_emitted,
            herald_coupling,
            signal_coupling_d,
            signal_coupling_v,
            bob_coupling_d0,
            bob_coupling_d1,
            hwp_error_d_deg,
            hwp_error_v_deg,
            hwp_error_bob_deg,
            background_incident_d0_hz: prep.background_hz[0],
            background_incident_d1_hz: prep.background_hz[1],
            photons_at_d0,
            photons_at_d1,
        },
    })
}

pub fn run_b92(cfg: &B92Config, seed: u64) -> Result<RunOutput> {
    let prep = prepare(cfg)?;
    simulate(cfg, &prep, cfg.duration_ps(), &RandomStream::new(seed))
}

/// Seed of iteration `i` under `master`.
pub fn iteration_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, i as u64)
}

/// `iterations` independent runs; results are in iteration order.
pub fn run_b92_batch(cfg: &B92Config, iterations: usize) -> Result<Vec<RunOutput>> {
    if iterations == 0 {
        return Err(Error::param("iterations", "must be ≥ 1"));
    }
    let prep = prepare(cfg)?;
    let master = cfg.file.run.seed;
    let duration = cfg.duration_ps();
    (0..iterations)
        .into_par_iter()
        .map(|i| simulate(cfg, &prep, duration, &RandomStream::new(iteration_seed(master, i))))
        .collect()
}

/// Result of one strategy on one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub windows_ps: WindowPair,
    #[serde(skip)]
    pub windows: Option<BinWindows>,
    #[serde(skip)]
    pub setup: Option<Setup>,
    pub metrics: KeyMetrics,
}

pub fn histograms(cfg: &B92Config, out: &RunOutput) -> PeakHistograms {
    PeakHistograms::build(&out.alice_herald, &out.bob_d0, &out.bob_d1, cfg.file.analysis.bin_width_ps, cfg.histogram_range())
}

pub fn analyze(cfg: &B92Config, hist: &PeakHistograms, strategy: Strategy) -> Result<StrategyResult> {
    let (setup, w, metrics) = optimize_windows(hist, strategy, &cfg.file.analysis.optimize())?;
    Ok(StrategyResult { windows_ps: hist.markers(&w), windows: Some(w), setup: Some(setup), metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests::fixture_path;
    use crate::config::RunConfigFile;

    fn ideal_config() -> B92Config {
        let path = fixture_path("night-20mm.toml");
        let mut f = RunConfigFile::load(&path).unwrap();
        f.run.duration_s = 0.002;
        f.source.pump_power_mw = 3.0;
        let bg = &mut f.bob.background;
        bg.level_d0_per_s_ns = None;
        bg.level_d1_per_s_ns = None;
        bg.incident_rate_d0_hz = Some(0.0);
        bg.incident_rate_d1_hz = Some(0.0);
        for d in [&mut f.detectors.herald, &mut f.detectors.d0, &mut f.detectors.d1] {
            d.quantum_efficiency = 1.0;
            d.dead_time_ps = 0;
            d.jitter_fwhm_ps = 0.0;
        }
        f.detectors.tcspcm.dead_time_ps = 0;
        f.detectors.tcspcm.jitter_fwhm_ps = 0.0;
        f.detectors.tcspcm.sma_loss_db = 0.0;
        f.bob.pbs.extinction_ratio = 1e300;
        B92Config::new(f, path.parent().unwrap()).unwrap()
    }

    #[test]
    fn zero_pump_gives_empty_outputs() {
        let mut cfg = ideal_config();
        cfg.file.source.pump_power_mw = 0.0;
        let out = run_b92(&cfg, 1).unwrap();
        assert!(out.alice_herald.is_empty() && out.bob_d0.is_empty() && out.bob_d1.is_empty());
    }

    /// No loss anywhere on the herald side and mode-matched couplers.
    fn lossless(cfg: &mut B92Config) -> Prepared {
        let f = &mut cfg.file;
        f.source.long_pass_filter.transmission = 1.0;
        f.source.band_pass_filter.transmission = 1.0;
        f.source.pair_pbs.extinction_ratio = 1e300;
        f.source.pair_pbs.loss = crate::photonics::Loss::NONE;
        for c in [&mut f.alice.herald_coupler, &mut f.alice.signal_coupler, &mut f.bob.coupler] {
            c.coupling_loss = crate::photonics::Loss::NONE;
            c.least_count_um = 1e-12;
        }
        for fib in [&mut f.alice.herald_fibre, &mut f.alice.signal_fibre, &mut f.bob.fibre] {
            fib.loss_per_m = 0.0;
            fib.mating_loss = crate::photonics::Loss::NONE;
        }
        let mode = TransverseField::gaussian(2.5, 1024, 0.25, 810.0);
        Prepared {
            temperature_c: 44.4,
            pair_rate_hz: source_rate(cfg).unwrap().1,
            alice_field: mode.clone(),
            bob_field: mode,
            background_hz: [0.0, 0.0],
        }
    }

    #[test]
    fn ideal_pipeline_offsets_are_exact() {
        let mut cfg = ideal_config();
        let prep = lossless(&mut cfg);
        let out = simulate(&cfg, &prep, cfg.duration_ps(), &RandomStream::new(7)).unwrap();
        assert_eq!(out.alice_herald.len() as u64, out.metadata.pairs_emitted);
        let t = cfg.flight_time_ps();
        let dt = cfg.delay_ps();
        let heralds: std::collections::HashSet<u64> = out.alice_herald.tags().iter().copied().collect();
        assert!(!out.bob_d0.is_empty() && !out.bob_d1.is_empty());
        for &b in out.bob_d0.tags().iter().chain(out.bob_d1.tags()) {
            let has = |off: u64| b.checked_sub(off).is_some_and(|a| heralds.contains(&a));
            assert!(has(t) || has(t + dt), "tag {b} has no herald at T or T+Δt");
        }
    }

    #[test]
    fn bob_never_sees_more_photons_than_emitted() {
        let cfg = ideal_config();
        let out = run_b92(&cfg, 3).unwrap();
        assert!(out.bob_d0.len() + out.bob_d1.len() <= out.metadata.pairs_emitted as usize);
    }

    #[test]
    fn batch_is_deterministic_and_matches_single_run() {
        let cfg = ideal_config();
        let a = run_b92_batch(&cfg, 2).unwrap();
        let b = run_b92_batch(&cfg, 2).unwrap();
        assert_eq!(a, b);
        let single = run_b92(&cfg, iteration_seed(cfg.file.run.seed, 0)).unwrap();
        assert_eq!(a[0], single);
        assert_ne!(a[0].alice_herald, a[1].alice_herald);
    }

    #[test]
    fn source_rate_hits_reference_on_reference_setup() {
        let cfg = ideal_config();
        let mut f = cfg.file.clone();
        f.source.pump_power_mw = f.source.reference_power_mw;
        f.source.crystal_length_mm = f.source.reference_length_mm;
        f.source.temperature_c = None;
        let c = B92Config { file: f, crystal: cfg.crystal.clone() };
        let (t, rate) = source_rate(&c).unwrap();
        assert!((rate - c.file.source.reference_pair_rate_hz).abs() < 1e-6 * rate);
        assert!((t - 44.4).abs() < 0.1);
    }

    #[test]
    fn calibration_hash_ignores_levels_and_seed() {
        let cfg = ideal_config();
        let mut other = cfg.clone();
        other.file.run.seed += 1;
        other.file.bob.background.incident_rate_d0_hz = Some(5.0);
        assert_eq!(calibration_hash(&cfg), calibration_hash(&other));
        other.file.detectors.d0.quantum_efficiency = 0.5;
        assert_ne!(calibration_hash(&cfg), calibration_hash(&other));
    }
}
