//! Coincidence analysis: histograms, sifting, key metrics, window optimisation
//! and bootstrap statistics.

mod bootstrap;
pub mod fit;
mod optimize;

use serde::{Deserialize, Serialize};

pub use crate::histogram::CoincidenceHistogram;
pub use bootstrap::{bootstrap_sd_over_mean, BootstrapCurve, BootstrapPoint, SiftedEvents};
pub use optimize::{
    initial_windows, optimize_strategy_a, optimize_strategy_b, optimize_windows, BinWindows, OptimizeParams, Setup, Strategy,
    Tally,
};

use crate::error::{Error, Result};
use crate::timetag::{TimeTagSeries, PS_PER_S};

/// Default histogram bin width, ps.
pub const DEFAULT_BIN_PS: u64 = 13;

/// Histogram of `bob − alice` for all pairs with the difference in `[lo, hi)`.
pub fn coincidence_histogram(alice: &TimeTagSeries, bob: &TimeTagSeries, bin_width: u64, range: (i64, i64)) -> CoincidenceHistogram {
    let mut h = CoincidenceHistogram::spanning(bin_width, range.0, range.1);
    for_each_difference(alice.tags(), bob.tags(), range, |d| h.add(d));
    h
}

/// Calls `f(bob − alice)` for every pair with the difference in `[lo, hi)`.
///
/// Two-pointer sweep: for each bob tag `b` the admissible alice tags lie in
/// `(b − hi, b − lo]`, a window that only moves forward.
pub(crate) fn for_each_difference<F: FnMut(i64)>(alice: &[u64], bob: &[u64], range: (i64, i64), mut f: F) {
    let (lo, hi) = range;
    let mut start = 0usize;
    for &b in bob {
        let b = b as i64;
        while start < alice.len() && (alice[start] as i64) <= b - hi {
            start += 1;
        }
        let mut j = start;
        while j < alice.len() {
            let d = b - alice[j] as i64;
            if d < lo {
                break;
            }
            f(d);
            j += 1;
        }
    }
}

/// Coincidence window markers in ps of time difference; each window is
/// half-open `[left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPair {
    pub w_l1: i64,
    pub w_r1: i64,
    pub w_l2: i64,
    pub w_r2: i64,
}

impl WindowPair {
    pub fn validate(&self) -> Result<()> {
        if self.w_l1 < self.w_r1 && self.w_r1 <= self.w_l2 && self.w_l2 < self.w_r2 {
            Ok(())
        } else {
            Err(Error::param("windows", format!("markers must satisfy l1 < r1 ≤ l2 < r2, got {self:?}")))
        }
    }

    /// 1 for the first window, 0 for the second, `None` outside both.
    pub fn alice_bit(&self, d: i64) -> Option<u8> {
        if d >= self.w_l1 && d < self.w_r1 {
            Some(1)
        } else if d >= self.w_l2 && d < self.w_r2 {
            Some(0)
        } else {
            None
        }
    }

    pub fn span(&self) -> (i64, i64) {
        (self.w_l1, self.w_r2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyMetrics {
    pub key_rate_khz: f64,
    pub qber_pct: f64,
    /// Share of bit 0 among error-free sifted bits, percent.
    pub asymmetry_pct: f64,
    pub key_length: u64,
}

/// Sifted keys aligned by event, ordered by Bob's detection time.
///
/// A coincidence in the first window gives Alice bit 1, in the second bit 0;
/// Bob's bit is the detector that fired (d1 → 1, d0 → 0).
pub fn sift(alice_herald: &TimeTagSeries, bob_d0: &TimeTagSeries, bob_d1: &TimeTagSeries, windows: &WindowPair) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut events = coincidences(alice_herald, bob_d0, bob_d1, windows)?;
    events.sort_by_key(|e| (e.bob_ps, e.bob_bit));
    Ok(events.into_iter().map(|e| (e.alice_bit, e.bob_bit)).unzip())
}

/// One herald–detection pair inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Coincidence {
    pub herald_ps: u64,
    pub bob_ps: u64,
    pub alice_bit: u8,
    pub bob_bit: u8,
}

/// All in-window coincidences, d0 first then d1, each in Bob-time order.
pub(crate) fn coincidences(alice_herald: &TimeTagSeries, bob_d0: &TimeTagSeries, bob_d1: &TimeTagSeries, windows: &WindowPair) -> Result<Vec<Coincidence>> {
    windows.validate()?;
    let mut events = Vec::new();
    let a = alice_herald.tags();
    let range = windows.span();
    for (bob, bob_bit) in [(bob_d0, 0u8), (bob_d1, 1u8)] {
        let mut start = 0usize;
        for &b in bob.tags() {
            let bi = b as i64;
            while start < a.len() && (a[start] as i64) <= bi - range.1 {
                start += 1;
            }
            let mut j = start;
            while j < a.len() {
                let d = bi - a[j] as i64;
                if d < range.0 {
                    break;
                }
                if let Some(alice_bit) = windows.alice_bit(d) {
                    events.push(Coincidence { herald_ps: a[j], bob_ps: b, alice_bit, bob_bit });
                }
                j += 1;
            }
        }
    }
    Ok(events)
}

pub fn compute_metrics(alice_key: &[u8], bob_key: &[u8], duration_s: f64) -> Result<KeyMetrics> {
    if alice_key.len() != bob_key.len() {
        return Err(Error::KeyLengthMismatch { alice: alice_key.len(), bob: bob_key.len() });
    }
    if alice_key.is_empty() {
        return Err(Error::EmptyKey);
    }
    let n = alice_key.len() as u64;
    let errors = alice_key.iter().zip(bob_key).filter(|(a, b)| a != b).count() as u64;
    let zeros_ok = alice_key.iter().zip(bob_key).filter(|(a, b)| a == b && **a == 0).count() as u64;
    Ok(metrics_from_counts(n, errors, zeros_ok, duration_s))
}

pub(crate) fn metrics_from_counts(key: u64, errors: u64, zeros_ok: u64, duration_s: f64) -> KeyMetrics {
    let ok = key - errors;
    KeyMetrics {
        key_rate_khz: key as f64 / duration_s / 1e3,
        qber_pct: if key == 0 { 0.0 } else { errors as f64 / key as f64 * 100.0 },
        asymmetry_pct: if ok == 0 { 0.0 } else { zeros_ok as f64 / ok as f64 * 100.0 },
        key_length: key,
    }
}

/// Flat background estimate: mean count per bin and the upper bound
/// mean + 3·√mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundLevel {
    pub mean: f64,
    pub upper: f64,
    pub bins: usize,
}

/// Mean of the bins farther than `peak_exclusion` from every listed peak.
pub fn estimate_background_level(hist: &CoincidenceHistogram, peaks_ps: &[i64], peak_exclusion: i64) -> Result<BackgroundLevel> {
    let mut sum = 0u64;
    let mut n = 0usize;
    for (i, &c) in hist.counts.iter().enumerate() {
        let lo = hist.bin_start(i);
        let hi = lo + hist.bin_width as i64;
        if peaks_ps.iter().all(|&p| hi <= p - peak_exclusion || lo > p + peak_exclusion) {
            sum += c;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoFlatRegion);
    }
    let mean = sum as f64 / n as f64;
    Ok(BackgroundLevel { mean, upper: mean + 3.0 * mean.sqrt(), bins: n })
}

/// Bin indices of the two coincidence maxima, in time order.
///
/// The second maximum is searched outside ±`exclusion` ps of the first and
/// must stand clear of the noise floor (median + 6·√median + 3).
pub fn detect_peak_bins(hist: &CoincidenceHistogram, exclusion: i64) -> Result<(usize, usize)> {
    if hist.is_empty() {
        return Err(Error::PeaksUnresolved("empty histogram".into()));
    }
    let argmax = |skip: &dyn Fn(usize) -> bool| {
        let mut best: Option<usize> = None;
        for (i, &c) in hist.counts.iter().enumerate() {
            if skip(i) {
                continue;
            }
            if best.is_none_or(|b| c > hist.counts[b]) {
                best = Some(i);
            }
        }
        best
    };
    let first = argmax(&|_| false).unwrap();
    let excl_bins = (exclusion as u64).div_ceil(hist.bin_width) as usize;
    let second = argmax(&|i: usize| i.abs_diff(first) <= excl_bins)
        .ok_or_else(|| Error::PeaksUnresolved("no bins outside the first peak's exclusion zone".into()))?;
    let mut sorted = hist.counts.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2] as f64;
    let floor = median + 6.0 * median.sqrt() + 3.0;
    if (hist.counts[second] as f64) <= floor {
        return Err(Error::PeaksUnresolved(format!(
            "second maximum {} does not exceed the noise floor {floor:.1}",
            hist.counts[second]
        )));
    }
    Ok((first.min(second), first.max(second)))
}

/// Peak positions (bin centres, ps) in time order.
pub fn detect_peaks(hist: &CoincidenceHistogram, exclusion: i64) -> Result<(f64, f64)> {
    let (a, b) = detect_peak_bins(hist, exclusion)?;
    Ok((hist.bin_center(a), hist.bin_center(b)))
}

/// Per-detector coincidence curves on a common grid: `bit0` from d0, `bit1`
/// from d1, both against the herald.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakHistograms {
    pub bit0: CoincidenceHistogram,
    pub bit1: CoincidenceHistogram,
    pub duration_s: f64,
}

impl PeakHistograms {
    pub fn build(alice: &TimeTagSeries, bob_d0: &TimeTagSeries, bob_d1: &TimeTagSeries, bin_width: u64, range: (i64, i64)) -> Self {
        Self {
            bit0: coincidence_histogram(alice, bob_d0, bin_width, range),
            bit1: coincidence_histogram(alice, bob_d1, bin_width, range),
            duration_s: alice.duration() as f64 / PS_PER_S,
        }
    }

    pub fn combined(&self) -> CoincidenceHistogram {
        self.bit0.sum(&self.bit1)
    }

    /// Markers in ps for bin-index windows.
    pub fn markers(&self, w: &BinWindows) -> WindowPair {
        let s = |i: usize| self.bit0.bin_start(i);
        WindowPair { w_l1: s(w.l1), w_r1: s(w.r1), w_l2: s(w.l2), w_r2: s(w.r2) }
    }

    /// Metrics from the histogram areas, identical to sifting with the same
    /// markers.
    pub fn metrics(&self, w: &BinWindows) -> KeyMetrics {
        let t = Tally::from_histograms(self, w);
        metrics_from_counts(t.key(), t.errors(), t.right2, self.duration_s)
    }
}

/// Default histogram range around the expected peaks: [T − Δt, T + 2Δt).
pub fn default_range(t_ps: i64, delta_t_ps: i64) -> (i64, i64) {
    (t_ps - delta_t_ps, t_ps + 2 * delta_t_ps)
}
