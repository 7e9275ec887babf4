//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test --release --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use b92sim::analysis::fit::{fit_exponential, ExpFit};
use b92sim::analysis::Strategy;
use b92sim::cli::{self, BootstrapArgs, PhaseMatchArgs};
use b92sim::detection::{detect, prune_dead_time, DetectorSpec, TcspcmSpec};
use b92sim::protocol::source_rate;
use b92sim::report::Summary;
use b92sim::rng::RandomStream;
use b92sim::timetag::{conditional_emission_counts, generate_single_photon_tags, inter_arrival_histogram, SinglePhotonStatModel, TimeTagSeries};
use common::{fixture, oracle_mismatches};

const SEED: u64 = 7;
const PS_PER_S: u64 = 1_000_000_000_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn all(v: &[Verdict]) -> Verdict {
    verdict(v.iter().all(|x| x.pass), v.iter().map(|x| x.detail.as_str()).collect::<Vec<_>>().join("; "))
}

/// Binomial z-score of `hits` out of `trials` at probability `p`, 0 < p < 1.
fn within_3_sigma(hits: u64, trials: u64, p: f64) -> (bool, f64) {
    let z = (hits as f64 - trials as f64 * p) / (trials as f64 * p * (1.0 - p)).sqrt();
    (z.abs() <= 3.0, z)
}

fn c1_phase_match() -> Verdict {
    let args = PhaseMatchArgs { crystal: fixture("../data/ppktp.toml"), pump_nm: 405.0, length_mm: 20.0, out: None };
    match cli::cmd_phase_match(&args, &mut std::io::sink()) {
        Ok(r) => verdict((r.temperature_c - 44.4).abs() <= 0.5, format!("T_pm {:.3} °C (44.4 ± 0.5)", r.temperature_c)),
        Err(e) => verdict(false, format!("error: {e}")),
    }
}

fn single_photon_stream(rate_hz: f64, coherence_ps: f64, label: &str) -> TimeTagSeries {
    let model = SinglePhotonStatModel::new(rate_hz, coherence_ps);
    generate_single_photon_tags(&model, PS_PER_S, &mut RandomStream::new(SEED).named(label)).unwrap()
}

fn c2_antibunching() -> Verdict {
    let t_coh = 10.0;
    let model = SinglePhotonStatModel::new(1e7, t_coh);
    let s = single_photon_stream(1e7, t_coh, "antibunching");
    let same_bin = s.tags().windows(2).filter(|w| w[0] >= w[1]).count();
    let p = model.saturation_probability();
    let first = 3 * t_coh as u64 + 1;
    let (mut hits, mut trials) = (0, 0);
    for off in first..first + 30 {
        let (h, t) = conditional_emission_counts(&s, off);
        hits += h;
        trials += t;
    }
    let (ok, z) = within_3_sigma(hits, trials, p);
    all(&[
        verdict(same_bin == 0, format!("{} tags, {same_bin} same-bin pairs", s.len())),
        verdict(ok, format!("offsets {first}..{} ps: {hits}/{trials} hits, p̂ {:.3e} vs {p:.0e} (z {z:+.2})", first + 29, hits as f64 / trials as f64)),
    ])
}

fn gap_fit(s: &TimeTagSeries, bin_ps: u64, mean_gaps: f64) -> ExpFit {
    let h = inter_arrival_histogram(s, bin_ps).unwrap();
    let mean_gap = s.duration() as f64 / s.len() as f64;
    let n = ((mean_gaps * mean_gap / bin_ps as f64) as usize).min(h.len());
    let x: Vec<f64> = (0..n).map(|i| h.bin_center(i) / 1000.0).collect();
    let y: Vec<f64> = h.counts[..n].iter().map(|&c| c as f64).collect();
    fit_exponential(&x, &y).unwrap()
}

fn c3_inter_arrival() -> Verdict {
    let sim = single_photon_stream(1e7, 10.0, "inter-arrival");
    let f1 = gap_fit(&sim, 1000, 5.0);
    let cfg = cli::load_config(&fixture("night-20mm.toml"), None).unwrap();
    let (_, rate) = source_rate(&cfg).unwrap();
    let pairs = single_photon_stream(rate, cfg.file.source.coherence_time_ps, "inter-arrival-fixture");
    let f2 = gap_fit(&pairs, cfg.file.analysis.bin_width_ps, 3.0);
    all(&[
        verdict(f1.r_squared >= 0.99, format!("1 ns bins: R² {:.5}, rate {:.4}/ns", f1.r_squared, f1.rate)),
        verdict(f2.r_squared >= 0.99, format!("{} ps bins at {:.2} MHz: R² {:.5}", cfg.file.analysis.bin_width_ps, rate / 1e6, f2.r_squared)),
    ])
}

fn c4_detectors() -> Verdict {
    let dead = 45_000;
    let input = single_photon_stream(5e7, 10.0, "dead-time");
    let spec = DetectorSpec { quantum_efficiency: 1.0, dead_time_ps: dead, jitter_fwhm_ps: 0.0, jitter_sigma_convention: Default::default() };
    let detected = detect(&input, &spec, &mut RandomStream::new(SEED).named("detect")).unwrap();
    let pruned = prune_dead_time(input.tags(), dead);
    let min_gap = |t: &[u64]| t.windows(2).map(|w| w[1] - w[0]).min().unwrap();
    let (g1, g2) = (min_gap(detected.tags()), min_gap(&pruned));

    let qe = 0.65;
    let kept = input.thin(qe, &mut RandomStream::new(SEED).named("qe"));
    let (ok_qe, z) = within_3_sigma(kept.len() as u64, input.len() as u64, qe);

    let expected = [(0.0, 1.0), (3.0, 0.501_187_233_627_272_2), (10.0, 0.1)];
    let eff: Vec<(f64, f64, f64)> = expected
        .iter()
        .map(|&(db, want)| (db, TcspcmSpec { dead_time_ps: 0, jitter_fwhm_ps: 0.0, sma_loss_db: db, jitter_sigma_convention: Default::default() }.efficiency(), want))
        .collect();
    all(&[
        verdict(g1 >= dead && g2 >= dead, format!("min gap {g1} ps detected, {g2} ps pruned (≥ {dead})")),
        verdict(ok_qe, format!("QE {qe}: {}/{} kept (z {z:+.2})", kept.len(), input.len())),
        verdict(
            eff.iter().all(|(_, got, want)| got == want),
            format!("TCSPCM efficiency {}", eff.iter().map(|(db, got, _)| format!("{db} dB → {got}")).collect::<Vec<_>>().join(", ")),
        ),
    ])
}

fn fixture_summary() -> b92sim::Result<Summary> {
    let cfg = cli::load_config(&fixture("night-20mm.toml"), None)?;
    cli::simulate_summary(&cfg, &[Strategy::A, Strategy::B], None, false)
}

fn c5_table(s: &Summary) -> Verdict {
    let a = s.strategy_a.as_ref().unwrap();
    let (Some(k), Some(q), Some(y)) = (a.key_rate_khz, a.qber_pct, a.asymmetry_pct) else {
        return verdict(false, "strategy A infeasible on every run");
    };
    all(&[
        verdict(a.feasible_runs == s.iterations, format!("{}/{} runs feasible", a.feasible_runs, s.iterations)),
        verdict((k.mean - 52.83).abs() <= 3.0, format!("key {:.2} ± {:.2} kHz (52.83 ± 3)", k.mean, k.sd)),
        verdict((q.mean - 4.79).abs() <= 0.05, format!("QBER {:.3} % (4.79 ± 0.05)", q.mean)),
        verdict((y.mean - 50.1).abs() <= 0.5, format!("asymmetry {:.2} % (50.1 ± 0.5)", y.mean)),
    ])
}

fn c6_b_vs_a(s: &Summary) -> Verdict {
    let cfg = cli::load_config(&fixture("night-20mm.toml"), None).unwrap();
    let (a, b) = (s.strategy_a.as_ref().unwrap(), s.strategy_b.as_ref().unwrap());
    let (Some(ka), Some(kb), Some(yb)) = (a.key_rate_khz, b.key_rate_khz, b.asymmetry_pct) else {
        return verdict(false, "a strategy was infeasible on every run");
    };
    let qbers = s.runs.iter().flat_map(|r| [&r.strategy_a, &r.strategy_b]).flatten().filter_map(|o| o.metrics()).map(|m| m.qber_pct);
    let worst = qbers.fold(0.0, f64::max);
    let imbalance = cfg.file.alice.bs1.ratio - 0.5;
    all(&[
        verdict(b.feasible_runs == s.iterations, format!("{}/{} B runs feasible", b.feasible_runs, s.iterations)),
        verdict(kb.mean >= ka.mean, format!("B {:.2} kHz ≥ A {:.2} kHz", kb.mean, ka.mean)),
        verdict(worst <= s.qber_threshold_pct, format!("max QBER {worst:.3} % (≤ {})", s.qber_threshold_pct)),
        verdict((yb.mean - 50.0) * imbalance > 0.0, format!("B asymmetry {:.2} % with bit-0 splitter share {}", yb.mean, cfg.file.alice.bs1.ratio)),
    ])
}

fn c7_oracle() -> Verdict {
    let parts: Vec<Verdict> = [Strategy::A, Strategy::B]
        .into_iter()
        .map(|s| {
            let m = oracle_mismatches(s, 0..50);
            let extra = if m.is_empty() { String::new() } else { format!(" [{}]", m.join(", ")) };
            verdict(m.is_empty(), format!("{s:?}: {}/50 within 99 % of exhaustive{extra}", 50 - m.len()))
        })
        .collect();
    all(&parts)
}

fn c8_bootstrap() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (k_min, k_max) = (1.0, 14.0);
    let args = BootstrapArgs {
        config: fixture("bootstrap-2mw.toml"),
        tag_dirs: vec![],
        datasets: 20,
        duration_s: None,
        k_min,
        k_max,
        k_step: 1.0,
        iterations: 20,
        seed: None,
        out: dir.path().to_path_buf(),
    };
    let r = match cli::cmd_bootstrap(&args) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("error: {e}")),
    };
    let at10 = r.curve.points.iter().find(|p| p.k_s == 10.0).map(|p| p.sd_over_mean_pct);
    let saturating = r.fit.is_some_and(|f| f.amplitude > 0.0 && f.rate > 0.0 && (-f.rate * (k_max - k_min)).exp() <= 0.1);
    all(&[
        verdict(r.spearman_rho < 0.0 && r.spearman_p < 0.01, format!("Spearman ρ {:.3}, p {:.1e}", r.spearman_rho, r.spearman_p)),
        verdict(
            saturating,
            match r.fit {
                Some(f) => format!("fit {:.3}·exp(−{:.3}k) + {:.4}, R² {:.3}, residual decay {:.3} (≤ 0.1)", f.amplitude, f.rate, f.offset, f.r_squared, (-f.rate * (k_max - k_min)).exp()),
                None => "no fit".into(),
            },
        ),
        verdict(at10.is_some_and(|v| v < 0.1), format!("SD/M at 10 s {:.4} % (< 0.1)", at10.unwrap_or(f64::NAN))),
    ])
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

enum Limit {
    Secs(u64),
    Shared(usize),
    Trivial,
}

fn report(n: usize, name: &str, v: Verdict, took: Duration, limit: Limit) -> bool {
    let in_time = match limit {
        Limit::Secs(s) => took <= Duration::from_secs(s),
        _ => true,
    };
    let pass = v.pass && in_time;
    let limit = match limit {
        Limit::Secs(s) => format!("limit {s} s"),
        Limit::Shared(c) => format!("shared with criterion {c}"),
        Limit::Trivial => "no limit".into(),
    };
    let late = if in_time { "" } else { " OVER TIME" };
    println!("criterion {n} {} {name}: {} [{:.1} s, {limit}{late}]", if pass { "PASS" } else { "FAIL" }, v.detail, took.as_secs_f64());
    pass
}

fn main() {
    let mut ok = true;
    let (v, t) = timed(c1_phase_match);
    ok &= report(1, "phase matching", v, t, Limit::Secs(1));
    let (v, t) = timed(c2_antibunching);
    ok &= report(2, "anti-bunching", v, t, Limit::Secs(30));
    let (v, t) = timed(c3_inter_arrival);
    ok &= report(3, "inter-arrival exponential", v, t, Limit::Secs(30));
    let (v, t) = timed(c4_detectors);
    ok &= report(4, "detector contracts", v, t, Limit::Secs(10));

    let (first, t5) = timed(fixture_summary);
    match &first {
        Ok(s) => {
            ok &= report(5, "fixture strategy A", c5_table(s), t5, Limit::Secs(600));
            ok &= report(6, "strategy B vs A", c6_b_vs_a(s), t5, Limit::Shared(5));
        }
        Err(e) => {
            ok &= report(5, "fixture strategy A", verdict(false, format!("error: {e}")), t5, Limit::Secs(600));
            ok &= report(6, "strategy B vs A", verdict(false, "no fixture summary"), t5, Limit::Shared(5));
        }
    }

    let (v, t) = timed(c7_oracle);
    ok &= report(7, "optimizer oracle", v, t, Limit::Secs(120));
    let (v, t) = timed(c8_bootstrap);
    ok &= report(8, "bootstrap curve", v, t, Limit::Secs(300));

    let (v, t) = timed(|| match (&first, fixture_summary()) {
        (Ok(a), Ok(b)) => {
            let (ja, jb) = (a.to_json(), b.to_json());
            verdict(ja == jb, format!("{} bytes, {}", ja.len(), if ja == jb { "identical" } else { "differ" }))
        }
        (_, Err(e)) => verdict(false, format!("error: {e}")),
        (Err(_), _) => verdict(false, "no first summary"),
    });
    ok &= report(9, "determinism", v, t, Limit::Trivial);

    if !ok {
        std::process::exit(1);
    }
}
