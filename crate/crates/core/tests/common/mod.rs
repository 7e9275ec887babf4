//! Helpers shared by the integration and acceptance tests: fixture paths,
//! synthetic two-peak histograms and brute-force window oracles.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::path::PathBuf;

use b92sim::analysis::{initial_windows, optimize_windows, BinWindows, CoincidenceHistogram, OptimizeParams, PeakHistograms, Setup, Strategy, Tally};
use b92sim::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub const SYNTH_BIN_PS: u64 = 13;
pub const SYNTH_BINS: usize = 260;
pub const SYNTH_PEAK_SPACING: f64 = 100.0;

/// Optimiser settings matched to [`synthetic_histograms`].
pub fn synthetic_params() -> OptimizeParams {
    OptimizeParams { peak_exclusion_ps: 40 * SYNTH_BIN_PS as i64, ..Default::default() }
}

/// Poisson-sampled two-peak histograms: a bit-1 peak near bin 80 and a bit-0
/// peak 100 bins later, each leaking a little into the other detector, over
/// flat accidentals of 0.3-3 % of the peak height. Widths keep the initial
/// windows under 50 bins.
pub fn synthetic_histograms(seed: u64) -> PeakHistograms {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = rng.random_range(75.0..85.0);
    let c2 = c1 + SYNTH_PEAK_SPACING + rng.random_range(-3.0..3.0);
    let sigma = rng.random_range(1.8..3.0);
    let h1 = rng.random_range(300.0..1500.0);
    let h2 = rng.random_range(300.0..1500.0);
    let leak = rng.random_range(0.002..0.02);
    let bg0 = h2 * rng.random_range(0.003..0.03);
    let bg1 = h1 * rng.random_range(0.003..0.03);
    let g = |x: f64, c: f64| (-(x - c).powi(2) / (2.0 * sigma * sigma)).exp();
    let mut sample = |mean: f64| if mean > 0.0 { Poisson::new(mean).unwrap().sample(&mut rng) as u64 } else { 0 };
    let mut bit0 = Vec::with_capacity(SYNTH_BINS);
    let mut bit1 = Vec::with_capacity(SYNTH_BINS);
    for i in 0..SYNTH_BINS {
        let x = i as f64 + 0.5;
        bit0.push(sample(bg0 + h2 * g(x, c2) + leak * h1 * g(x, c1)));
        bit1.push(sample(bg1 + h1 * g(x, c1) + leak * h2 * g(x, c2)));
    }
    let hist = |counts| CoincidenceHistogram { bin_width: SYNTH_BIN_PS, origin: 0, counts };
    PeakHistograms { bit0: hist(bit0), bit1: hist(bit1), duration_s: 1.0 }
}

fn prefix(c: &[u64]) -> Vec<u64> {
    let mut p = vec![0];
    for &x in c {
        p.push(p.last().unwrap() + x);
    }
    p
}

struct Sums {
    p0: Vec<u64>,
    p1: Vec<u64>,
}

impl Sums {
    fn new(h: &PeakHistograms) -> Self {
        Self { p0: prefix(&h.bit0.counts), p1: prefix(&h.bit1.counts) }
    }

    fn tally(&self, l1: usize, r1: usize, l2: usize, r2: usize) -> Tally {
        Tally {
            right1: self.p1[r1] - self.p1[l1],
            wrong1: self.p0[r1] - self.p0[l1],
            right2: self.p0[r2] - self.p0[l2],
            wrong2: self.p1[r2] - self.p1[l2],
        }
    }
}

fn better(t: &Tally, best: &Option<(BinWindows, Tally)>) -> bool {
    best.as_ref().is_none_or(|(_, b)| (t.key(), Reverse(t.errors())) > (b.key(), Reverse(b.errors())))
}

/// Every ordered window pair inside the initial windows that meets the
/// strategy-A constraints; returns the largest key.
pub fn exhaustive_a(h: &PeakHistograms, setup: &Setup, p: &OptimizeParams) -> Option<(BinWindows, Tally)> {
    let s = Sums::new(h);
    let c = setup.caps;
    let mut best = None;
    for l1 in c.l1..c.r1 {
        for r1 in l1 + 1..=c.r1 {
            for l2 in c.l2.max(r1)..c.r2 {
                for r2 in l2 + 1..=c.r2 {
                    let t = s.tally(l1, r1, l2, r2);
                    if t.feasible_a(p) && better(&t, &best) {
                        best = Some((BinWindows { l1, r1, l2, r2 }, t));
                    }
                }
            }
        }
    }
    best
}

/// Every equal-width window pair inside the initial windows that meets the
/// strategy-B constraint; returns the largest key.
pub fn exhaustive_b(h: &PeakHistograms, setup: &Setup, p: &OptimizeParams) -> Option<(BinWindows, Tally)> {
    let s = Sums::new(h);
    let c = setup.caps;
    let max_span = (c.r1 - c.l1).min(c.r2 - c.l2);
    let mut best = None;
    for span in 1..=max_span {
        for l1 in c.l1..=c.r1 - span {
            for l2 in c.l2.max(l1 + span)..=c.r2 - span {
                let t = s.tally(l1, l1 + span, l2, l2 + span);
                if t.feasible_b(p) && better(&t, &best) {
                    best = Some((BinWindows { l1, r1: l1 + span, l2, r2: l2 + span }, t));
                }
            }
        }
    }
    best
}

/// Runs `strategy` on the synthetic histogram of each seed against the
/// matching exhaustive search. Returns one line per seed where the optimiser
/// falls below 99 % of the best key or disagrees on feasibility; panics if it
/// returns windows that break the constraints.
pub fn oracle_mismatches(strategy: Strategy, seeds: std::ops::Range<u64>) -> Vec<String> {
    let p = synthetic_params();
    let mut out = Vec::new();
    for seed in seeds {
        let h = synthetic_histograms(seed);
        let setup = initial_windows(&h, &p).unwrap();
        assert!(setup.caps.r1 - setup.caps.l1 <= 50 && setup.caps.r2 - setup.caps.l2 <= 50, "seed {seed}: {:?}", setup.caps);
        let oracle = match strategy {
            Strategy::A => exhaustive_a(&h, &setup, &p),
            Strategy::B => exhaustive_b(&h, &setup, &p),
        };
        match (optimize_windows(&h, strategy, &p), oracle) {
            (Ok((_, w, m)), Some((_, best))) => {
                let t = Tally::from_histograms(&h, &w);
                let feasible = match strategy {
                    Strategy::A => t.feasible_a(&p),
                    Strategy::B => t.feasible_b(&p) && w.r1 - w.l1 == w.r2 - w.l2,
                };
                assert!(feasible, "seed {seed}: {w:?} violates the constraints");
                if (m.key_length as f64) < 0.99 * best.key() as f64 {
                    out.push(format!("seed {seed}: greedy {} vs exhaustive {}", m.key_length, best.key()));
                }
            }
            (Err(Error::Infeasible(_)), None) => {}
            (got, want) => out.push(format!("seed {seed}: greedy {got:?}, exhaustive {want:?}")),
        }
    }
    out
}

/// Quadratic all-pairs reference for the coincidence histogram.
pub fn naive_histogram(alice: &[u64], bob: &[u64], bin_width: u64, range: (i64, i64)) -> Vec<u64> {
    let bins = ((range.1 - range.0) as u64).div_ceil(bin_width) as usize;
    let mut counts = vec![0; bins];
    for &a in alice {
        for &b in bob {
            let d = b as i64 - a as i64;
            if d >= range.0 && d < range.1 {
                counts[((d - range.0) as u64 / bin_width) as usize] += 1;
            }
        }
    }
    counts
}
