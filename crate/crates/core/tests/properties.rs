mod common;

use b92sim::analysis::{bootstrap_sd_over_mean, coincidence_histogram, initial_windows, optimize_windows, OptimizeParams, SiftedEvents, Strategy as Optimizer, Tally, WindowPair};
use b92sim::config::RunConfigFile;
use b92sim::detection::prune_dead_time;
use b92sim::rng::RandomStream;
use b92sim::timetag::{apply_delay, merge, TimeTagSeries};
use b92sim::Error;
use common::{fixture, naive_histogram, synthetic_histograms, synthetic_params};
use proptest::prelude::*;

const SPAN: u64 = 1_000_000;

fn series(max_len: usize) -> impl Strategy<Value = TimeTagSeries> {
    prop::collection::btree_set(0..SPAN, 0..max_len).prop_map(|s| TimeTagSeries::new(s.into_iter().collect(), SPAN).unwrap())
}

fn strictly_increasing(s: &TimeTagSeries) -> bool {
    s.tags().windows(2).all(|w| w[0] < w[1]) && s.tags().last().is_none_or(|&t| t < s.duration())
}

proptest! {
    #[test]
    fn histogram_matches_naive(a in series(1000), b in series(1000), bin in 1u64..200, lo in -20_000i64..0, width in 1i64..40_000) {
        let range = (lo, lo + width);
        let h = coincidence_histogram(&a, &b, bin, range);
        prop_assert_eq!(h.counts, naive_histogram(a.tags(), b.tags(), bin, range));
    }

    #[test]
    fn merge_and_delay_keep_order(a in series(500), b in series(500), d in 0..SPAN) {
        let m = merge(&a, &b);
        prop_assert!(strictly_increasing(&m));
        prop_assert!(m.len() <= a.len() + b.len());
        prop_assert!(strictly_increasing(&apply_delay(&a, d)));
    }

    #[test]
    fn delays_compose(a in series(500), x in 0..SPAN, y in 0..SPAN) {
        prop_assert_eq!(apply_delay(&apply_delay(&a, x), y), apply_delay(&a, x + y));
    }

    #[test]
    fn pruning_is_idempotent(a in series(2000), dead in 1u64..50_000) {
        let once = prune_dead_time(a.tags(), dead);
        prop_assert!(once.windows(2).all(|w| w[1] - w[0] >= dead));
        prop_assert_eq!(prune_dead_time(&once, dead), once.clone());
        prop_assert_eq!(once.first(), a.tags().first());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimizers_respect_constraints(seed in 0u64..10_000, q in 1.0f64..8.0, tol in 0.05f64..1.0) {
        let h = synthetic_histograms(seed);
        let p = OptimizeParams { qber_threshold_pct: q, symmetry_tolerance_pct: tol, ..synthetic_params() };
        let caps = initial_windows(&h, &p).unwrap().caps;
        for s in [Optimizer::A, Optimizer::B] {
            match optimize_windows(&h, s, &p) {
                Ok((_, w, m)) => {
                    let t = Tally::from_histograms(&h, &w);
                    prop_assert!(w.is_ordered() && w.l1 >= caps.l1 && w.r1 <= caps.r1 && w.l2 >= caps.l2 && w.r2 <= caps.r2);
                    prop_assert!(t.qber_pct() <= q);
                    prop_assert_eq!(m.key_length, t.key());
                    match s {
                        Optimizer::A => prop_assert!((t.asymmetry_pct() - 50.0).abs() <= tol),
                        Optimizer::B => prop_assert_eq!(w.r1 - w.l1, w.r2 - w.l2),
                    }
                }
                Err(Error::Infeasible(_)) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), duration in 0.01f64..100.0, q in 0.1f64..20.0, bin in 1u64..100, ratio in 0.01f64..0.99) {
        let mut cfg = RunConfigFile::load(&fixture("night-20mm.toml")).unwrap();
        cfg.run.seed = seed;
        cfg.run.duration_s = duration;
        cfg.analysis.qber_threshold_pct = q;
        cfg.analysis.bin_width_ps = bin;
        cfg.alice.bs1.ratio = ratio;
        let back = RunConfigFile::from_toml(&cfg.to_toml(), "round-trip.toml".as_ref()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

/// Sifted datasets with different heralding rates; every herald has a
/// bit-1 detection 500 ps later.
fn datasets() -> Vec<SiftedEvents> {
    let windows = WindowPair { w_l1: 0, w_r1: 1000, w_l2: 1000, w_r2: 2000 };
    let duration = 3 * 1_000_000_000_000;
    (0..6)
        .map(|i| {
            let mut r = RandomStream::new(i);
            let mean_gap = 1e12 / (1e4 * (1.0 + i as f64));
            let mut t = 0.0;
            let mut tags = Vec::new();
            loop {
                t += -mean_gap * r.uniform_open0().ln() + 1000.0;
                if t >= (duration - 1000) as f64 {
                    break;
                }
                tags.push(t as u64);
            }
            let h = TimeTagSeries::new(tags.clone(), duration).unwrap();
            let d1 = TimeTagSeries::new(tags.iter().map(|t| t + 500).collect(), duration).unwrap();
            SiftedEvents::new(&h, &TimeTagSeries::empty(duration), &d1, &windows).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn bootstrap_ignores_dataset_order(order in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let base = datasets();
        let shuffled: Vec<SiftedEvents> = order.iter().map(|&i| base[i].clone()).collect();
        let ks = [0.5, 1.0, 2.0];
        let rng = RandomStream::new(99);
        let a = bootstrap_sd_over_mean(&base, &ks, 4000, &rng).unwrap();
        let b = bootstrap_sd_over_mean(&shuffled, &ks, 4000, &rng).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            prop_assert!((x.mean_khz - y.mean_khz).abs() <= 0.05 * x.mean_khz);
            prop_assert!((x.sd_over_mean_pct - y.sd_over_mean_pct).abs() <= 0.05 * x.sd_over_mean_pct, "k {}: {} vs {}", x.k_s, x.sd_over_mean_pct, y.sd_over_mean_pct);
        }
    }
}
