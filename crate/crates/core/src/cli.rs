//! Batch front end: `simulate`, `analyze`, `bootstrap` and `phase-match`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{bootstrap_sd_over_mean, fit, BootstrapCurve, PeakHistograms, SiftedEvents, Strategy};
use crate::config::B92Config;
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_string_atomic};
use crate::photonics::Polarization;
use crate::protocol::{self, analyze, RunOutput};
use crate::report::{summarize, Summary};
use crate::rng::RandomStream;
use crate::spdc::{self, CrystalData, CrystalSpec, PumpSpec, SpectralGrid};
use crate::timetag::{TagFile, TimeTagSeries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConfigParse { .. } | Error::ConfigInvalid(_) => EXIT_CONFIG,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "b92sim", version, about = "Heralded single-photon B92 link simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline and analyse every iteration.
    Simulate(SimulateArgs),
    /// Analyse three recorded tag files.
    Analyze(AnalyzeArgs),
    /// SD/mean of the key rate against run length.
    Bootstrap(BootstrapArgs),
    /// Phase-matching temperature and spectra for a crystal.
    PhaseMatch(PhaseMatchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StrategyChoice {
    A,
    B,
    Both,
}

impl StrategyChoice {
    fn list(self) -> Vec<Strategy> {
        match self {
            StrategyChoice::A => vec![Strategy::A],
            StrategyChoice::B => vec![Strategy::B],
            StrategyChoice::Both => vec![Strategy::A, Strategy::B],
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, value_enum, default_value = "both")]
    pub strategy: StrategyChoice,
    #[arg(long)]
    pub qber_threshold: Option<f64>,
    /// Skip writing the raw tag files.
    #[arg(long)]
    pub no_tags: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub herald: PathBuf,
    #[arg(long)]
    pub d0: PathBuf,
    #[arg(long)]
    pub d1: PathBuf,
    /// Supplies the histogram range and analysis settings.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "a")]
    pub strategy: StrategyChoice,
    #[arg(long)]
    pub qber_threshold: Option<f64>,
    /// Writes the metrics record here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Simulate datasets from this config.
    #[arg(long)]
    pub config: PathBuf,
    /// Directories holding herald.ttag, d0.ttag and d1.ttag; when absent the
    /// datasets are simulated.
    #[arg(long, num_args = 1..)]
    pub tag_dirs: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub datasets: usize,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub k_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub k_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k_step: f64,
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PhaseMatchArgs {
    #[arg(long)]
    pub crystal: PathBuf,
    #[arg(long, default_value_t = 405.0)]
    pub pump_nm: f64,
    #[arg(long, default_value_t = 20.0)]
    pub length_mm: f64,
    /// Writes delta_k.csv and spectrum.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Analyze(a) => cmd_analyze(&a).map(|_| EXIT_OK),
        Command::Bootstrap(a) => cmd_bootstrap(&a).map(|_| EXIT_OK),
        Command::PhaseMatch(a) => cmd_phase_match(&a, &mut std::io::stdout()).map(|_| EXIT_OK),
    }
}

const CHANNEL_HERALD: u32 = 0;
const CHANNEL_D0: u32 = 1;
const CHANNEL_D1: u32 = 2;

pub fn load_config(path: &Path, qber_threshold: Option<f64>) -> Result<B92Config> {
    let mut cfg = B92Config::load(path)?;
    if let Some(q) = qber_threshold {
        cfg.file.analysis.qber_threshold_pct = q;
        cfg.file.validate().map_err(Error::ConfigInvalid)?;
    }
    Ok(cfg)
}

fn write_histogram(path: &Path, h: &PeakHistograms) -> Result<()> {
    write_atomic(path, |f| {
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "bin_center_ps,bit0,bit1")?;
        for i in 0..h.bit0.len() {
            writeln!(w, "{},{},{}", h.bit0.bin_center(i), h.bit0.counts[i], h.bit1.counts[i])?;
        }
        w.flush()
    })
}

fn save_run(dir: &Path, out: &RunOutput) -> Result<()> {
    for (name, channel, series) in
        [("herald.ttag", CHANNEL_HERALD, &out.alice_herald), ("d0.ttag", CHANNEL_D0, &out.bob_d0), ("d1.ttag", CHANNEL_D1, &out.bob_d1)]
    {
        TagFile { channel, series: series.clone() }.save(&dir.join(name))?;
    }
    Ok(())
}

/// Simulates, analyses and writes `summary.json`, per-run histograms and
/// (optionally) tag files. Returns exit status 3 when any run had no
/// feasible window.
pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let mut cfg = load_config(&a.config, a.qber_threshold)?;
    if let Some(s) = a.seed {
        cfg.file.run.seed = s;
    }
    if let Some(n) = a.iterations {
        cfg.file.run.iterations = n;
    }
    if let Some(d) = a.duration_s {
        cfg.file.run.duration_s = d;
    }
    cfg.file.validate().map_err(Error::ConfigInvalid)?;
    let summary = simulate_summary(&cfg, &a.strategy.list(), Some(&a.out), !a.no_tags)?;
    Ok(if summary.any_infeasible() { EXIT_INFEASIBLE } else { EXIT_OK })
}

/// Batch run plus analysis; artifacts go to `out` when given.
pub fn simulate_summary(cfg: &B92Config, strategies: &[Strategy], out: Option<&Path>, tags: bool) -> Result<Summary> {
    let outputs = protocol::run_b92_batch(cfg, cfg.file.run.iterations)?;
    let summary = summarize(cfg, &outputs, strategies)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for (i, o) in outputs.iter().enumerate() {
            let run_dir = dir.join(format!("run-{i:03}"));
            std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(format!("creating {}", run_dir.display()), e))?;
            if tags {
                save_run(&run_dir, o)?;
            }
            write_histogram(&run_dir.join("histogram.csv"), &protocol::histograms(cfg, o))?;
        }
        write_string_atomic(&dir.join("summary.json"), &summary.to_json())?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeRecord {
    pub duration_s: f64,
    pub herald_count: usize,
    pub d0_count: usize,
    pub d1_count: usize,
    pub strategy_a: Option<protocol::StrategyResult>,
    pub strategy_b: Option<protocol::StrategyResult>,
}

fn load_streams(herald: &Path, d0: &Path, d1: &Path) -> Result<(TimeTagSeries, TimeTagSeries, TimeTagSeries)> {
    let h = TagFile::load(herald)?.series;
    let a = TagFile::load(d0)?.series;
    let b = TagFile::load(d1)?.series;
    if h.duration() != a.duration() || h.duration() != b.duration() {
        return Err(Error::ClockMismatch(format!(
            "durations differ: herald {} ps, d0 {} ps, d1 {} ps",
            h.duration(),
            a.duration(),
            b.duration()
        )));
    }
    Ok((h, a, b))
}

/// Analyses recorded tags with the settings and histogram range of a config.
pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<AnalyzeRecord> {
    let cfg = load_config(&a.config, a.qber_threshold)?;
    let (h, d0, d1) = load_streams(&a.herald, &a.d0, &a.d1)?;
    if d0.is_empty() && d1.is_empty() {
        return Err(Error::EmptyKey);
    }
    let hist = PeakHistograms::build(&h, &d0, &d1, cfg.file.analysis.bin_width_ps, cfg.histogram_range());
    let list = a.strategy.list();
    let pick = |s: Strategy| -> Result<Option<protocol::StrategyResult>> {
        if list.contains(&s) {
            analyze(&cfg, &hist, s).map(Some)
        } else {
            Ok(None)
        }
    };
    let record = AnalyzeRecord {
        duration_s: h.duration_s(),
        herald_count: h.len(),
        d0_count: d0.len(),
        d1_count: d1.len(),
        strategy_a: pick(Strategy::A)?,
        strategy_b: pick(Strategy::B)?,
    };
    let json = serde_json::to_string_pretty(&record).expect("record serialises") + "\n";
    match &a.out {
        Some(p) => write_string_atomic(p, &json)?,
        None => print!("{json}"),
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub curve: BootstrapCurve,
    pub fit: Option<fit::ExpFit>,
    pub spearman_rho: f64,
    pub spearman_p: f64,
}

fn k_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && step > 0.0) {
        return Err(Error::param("k", "need 0 < k_min ≤ k_max and k_step > 0"));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}

/// Sifted events of one dataset with strategy-A windows.
pub fn sifted_dataset(cfg: &B92Config, h: &TimeTagSeries, d0: &TimeTagSeries, d1: &TimeTagSeries) -> Result<SiftedEvents> {
    let hist = PeakHistograms::build(h, d0, d1, cfg.file.analysis.bin_width_ps, cfg.histogram_range());
    let r = analyze(cfg, &hist, Strategy::A)?;
    SiftedEvents::new(h, d0, d1, &r.windows_ps)
}

/// Curve, fit and trend statistics for sifted datasets.
pub fn bootstrap_report(datasets: &[SiftedEvents], ks: &[f64], iterations: usize, seed: u64) -> Result<BootstrapReport> {
    let curve = bootstrap_sd_over_mean(datasets, ks, iterations, &RandomStream::new(seed).named("bootstrap"))?;
    let x: Vec<f64> = curve.points.iter().map(|p| p.k_s).collect();
    let y: Vec<f64> = curve.points.iter().map(|p| p.sd_over_mean_pct).collect();
    let fit = if x.len() >= 4 { fit::fit_exponential_offset(&x, &y).ok() } else { None };
    let (rho, p) = if x.len() >= 3 { fit::spearman(&x, &y)? } else { (0.0, 1.0) };
    Ok(BootstrapReport { curve, fit, spearman_rho: rho, spearman_p: p })
}

pub fn cmd_bootstrap(a: &BootstrapArgs) -> Result<BootstrapReport> {
    let mut cfg = load_config(&a.config, None)?;
    if let Some(d) = a.duration_s {
        cfg.file.run.duration_s = d;
    }
    if let Some(s) = a.seed {
        cfg.file.run.seed = s;
    }
    cfg.file.validate().map_err(Error::ConfigInvalid)?;
    let ks = k_grid(a.k_min, a.k_max, a.k_step)?;
    let datasets: Vec<SiftedEvents> = if a.tag_dirs.is_empty() {
        let prep = protocol::prepare(&cfg)?;
        (0..a.datasets)
            .map(|i| {
                let seed = protocol::iteration_seed(cfg.file.run.seed, i);
                let o = protocol::simulate(&cfg, &prep, cfg.duration_ps(), &RandomStream::new(seed))?;
                sifted_dataset(&cfg, &o.alice_herald, &o.bob_d0, &o.bob_d1)
            })
            .collect::<Result<_>>()?
    } else {
        a.tag_dirs
            .iter()
            .map(|d| {
                let (h, d0, d1) = load_streams(&d.join("herald.ttag"), &d.join("d0.ttag"), &d.join("d1.ttag"))?;
                sifted_dataset(&cfg, &h, &d0, &d1)
            })
            .collect::<Result<_>>()?
    };
    let report = bootstrap_report(&datasets, &ks, a.iterations, cfg.file.run.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
    write_atomic(&a.out.join("bootstrap.csv"), |f| report.curve.write_csv(f))?;
    let json = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
    write_string_atomic(&a.out.join("bootstrap_fit.json"), &json)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseMatchReport {
    pub temperature_c: f64,
    pub delta_k_at_temperature: f64,
}

/// Solves the phase-matching temperature and optionally writes Δk(T) and the
/// spectrum |ψ(λ_s)|² at that temperature.
pub fn cmd_phase_match<W: Write>(a: &PhaseMatchArgs, stdout: &mut W) -> Result<PhaseMatchReport> {
    let data = CrystalData::load(&a.crystal)?;
    let crystal = CrystalSpec::new(&data, a.length_mm)?;
    let pump = PumpSpec { wavelength_nm: a.pump_nm, power_mw: 0.0, waist_um: 1.0, polarization: Polarization::H };
    let t = spdc::phase_matching_temperature(&crystal, &pump)?;
    let dk = spdc::degenerate_mismatch(&crystal, &pump, t)?;
    writeln!(stdout, "phase-matching temperature: {t:.2} °C (Δk = {dk:.3e} µm⁻¹)").map_err(|e| Error::io("stdout", e))?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut s = String::from("temperature_c,delta_k_per_um\n");
        for i in 0..=400 {
            let temp = i as f64 * 0.5;
            s += &format!("{temp},{}\n", spdc::degenerate_mismatch(&crystal, &pump, temp)?);
        }
        write_string_atomic(&dir.join("delta_k.csv"), &s)?;
        let amp = spdc::joint_amplitude(&crystal, &pump, t, &SpectralGrid::default())?;
        let mut s = String::from("signal_nm,intensity\n");
        for (w, p) in amp.omega_s.iter().zip(&amp.psi) {
            s += &format!("{},{}\n", spdc::nm_of_omega(*w), p * p);
        }
        write_string_atomic(&dir.join("spectrum.csv"), &s)?;
    }
    Ok(PhaseMatchReport { temperature_c: t, delta_k_at_temperature: dk })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_grid_is_inclusive() {
        assert_eq!(k_grid(1.0, 3.0, 1.0).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(k_grid(0.5, 1.0, 0.25).unwrap(), vec![0.5, 0.75, 1.0]);
        assert!(k_grid(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::ConfigInvalid(vec![])), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Infeasible("x".into())), EXIT_INFEASIBLE);
        assert_eq!(exit_code(&Error::EmptyKey), EXIT_OTHER);
    }
}
