//! Coincidence-window optimisation.
//!
//! Windows are handled as half-open bin-index ranges on the common histogram
//! grid. Window 1 sits on the earlier peak (Alice bit 1), window 2 on the later
//! one (Alice bit 0). Correct counts are d1 in window 1 and d0 in window 2.

use serde::{Deserialize, Serialize};

use super::{estimate_background_level, KeyMetrics, PeakHistograms, WindowPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    A,
    B,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "A" | "a" => Ok(Strategy::A),
            "B" | "b" => Ok(Strategy::B),
            _ => Err(format!("unknown strategy '{s}', expected A or B")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeParams {
    pub qber_threshold_pct: f64,
    /// Strategy A accepts |asymmetry − 50| up to this many percentage points.
    pub symmetry_tolerance_pct: f64,
    /// Marker move, in bins.
    pub step_bins: usize,
    /// Initial window width in multiples of the peak FWHM.
    pub initial_width_fwhm: f64,
    /// Exclusion half-width around each peak for peak search and background
    /// estimation, ps.
    pub peak_exclusion_ps: i64,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self {
            qber_threshold_pct: 4.8,
            symmetry_tolerance_pct: 0.2,
            step_bins: 1,
            initial_width_fwhm: 6.0,
            peak_exclusion_ps: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinWindows {
    pub l1: usize,
    pub r1: usize,
    pub l2: usize,
    pub r2: usize,
}

impl BinWindows {
    pub fn is_ordered(&self) -> bool {
        self.l1 < self.r1 && self.r1 <= self.l2 && self.l2 < self.r2
    }

    fn inside(&self, caps: &BinWindows) -> bool {
        self.is_ordered() && self.l1 >= caps.l1 && self.r1 <= caps.r1 && self.l2 >= caps.l2 && self.r2 <= caps.r2
    }
}

/// Window areas: correct and wrong counts per window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub right1: u64,
    pub wrong1: u64,
    pub right2: u64,
    pub wrong2: u64,
}

impl Tally {
    pub fn from_histograms(h: &PeakHistograms, w: &BinWindows) -> Self {
        let s = |c: &[u64], l: usize, r: usize| c[l..r].iter().sum::<u64>();
        Tally {
            right1: s(&h.bit1.counts, w.l1, w.r1),
            wrong1: s(&h.bit0.counts, w.l1, w.r1),
            right2: s(&h.bit0.counts, w.l2, w.r2),
            wrong2: s(&h.bit1.counts, w.l2, w.r2),
        }
    }

    pub fn key(&self) -> u64 {
        self.right1 + self.wrong1 + self.right2 + self.wrong2
    }

    pub fn errors(&self) -> u64 {
        self.wrong1 + self.wrong2
    }

    pub fn qber_pct(&self) -> f64 {
        pct(self.errors(), self.key())
    }

    pub fn qber1_pct(&self) -> f64 {
        pct(self.wrong1, self.right1 + self.wrong1)
    }

    /// Share of bit 0 among error-free bits.
    pub fn asymmetry_pct(&self) -> f64 {
        pct(self.right2, self.right1 + self.right2)
    }

    /// Distance outside the strategy-A constraints, in percentage points.
    pub fn violation_a(&self, p: &OptimizeParams) -> f64 {
        (self.qber_pct() - p.qber_threshold_pct).max(0.0) + ((self.asymmetry_pct() - 50.0).abs() - p.symmetry_tolerance_pct).max(0.0)
    }

    /// Distance outside the strategy-B constraint, in percentage points.
    pub fn violation_b(&self, p: &OptimizeParams) -> f64 {
        (self.qber_pct() - p.qber_threshold_pct).max(0.0)
    }

    /// Constraint set shared by strategy A and its oracle.
    pub fn feasible_a(&self, p: &OptimizeParams) -> bool {
        self.key() > 0 && self.qber_pct() <= p.qber_threshold_pct && (self.asymmetry_pct() - 50.0).abs() <= p.symmetry_tolerance_pct
    }

    /// Constraint set shared by strategy B and its oracle.
    pub fn feasible_b(&self, p: &OptimizeParams) -> bool {
        self.key() > 0 && self.qber_pct() <= p.qber_threshold_pct
    }
}

fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 * 100.0 / den as f64
    }
}

/// Prefix sums for O(1) window areas.
struct Areas {
    p0: Vec<u64>,
    p1: Vec<u64>,
}

impl Areas {
    fn new(h: &PeakHistograms) -> Self {
        let prefix = |c: &[u64]| {
            let mut p = Vec::with_capacity(c.len() + 1);
            p.push(0);
            for &x in c {
                p.push(p.last().unwrap() + x);
            }
            p
        };
        Self { p0: prefix(&h.bit0.counts), p1: prefix(&h.bit1.counts) }
    }

    fn tally(&self, w: &BinWindows) -> Tally {
        Tally {
            right1: self.p1[w.r1] - self.p1[w.l1],
            wrong1: self.p0[w.r1] - self.p0[w.l1],
            right2: self.p0[w.r2] - self.p0[w.l2],
            wrong2: self.p1[w.r2] - self.p1[w.l2],
        }
    }
}

/// Peak bins and the initial (widest) windows that bound every search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Setup {
    pub peak1: usize,
    pub peak2: usize,
    pub caps: BinWindows,
}

fn fwhm_bins(counts: &[u64], peak: usize, baseline: f64) -> usize {
    let half = baseline + (counts[peak] as f64 - baseline) / 2.0;
    let mut r = peak;
    while r + 1 < counts.len() && counts[r + 1] as f64 >= half {
        r += 1;
    }
    let mut l = peak;
    while l > 0 && counts[l - 1] as f64 >= half {
        l -= 1;
    }
    r - l + 1
}

/// Detects both peaks and places windows `initial_width_fwhm` FWHM wide
/// around them, clipped to the grid and split at the midpoint if they meet.
pub fn initial_windows(h: &PeakHistograms, p: &OptimizeParams) -> Result<Setup> {
    let comb = h.combined();
    let (peak1, peak2) = super::detect_peak_bins(&comb, p.peak_exclusion_ps)?;
    let mut sorted = comb.counts.clone();
    sorted.sort_unstable();
    let baseline = sorted[sorted.len() / 2] as f64;
    let n = comb.len();
    let cap = |peak: usize| {
        let half = ((p.initial_width_fwhm * fwhm_bins(&comb.counts, peak, baseline) as f64) / 2.0).ceil() as usize;
        (peak.saturating_sub(half), (peak + half + 1).min(n))
    };
    let (l1, mut r1) = cap(peak1);
    let (mut l2, r2) = cap(peak2);
    if r1 > l2 {
        let mid = (peak1 + peak2).div_ceil(2);
        r1 = mid;
        l2 = mid;
    }
    Ok(Setup { peak1, peak2, caps: BinWindows { l1, r1, l2, r2 } })
}

/// Search objective. Points meeting the constraints rank above those that do
/// not; among feasible points more key wins, then fewer errors, then wider
/// windows; among the rest the smaller constraint violation wins.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Score(u8, f64, f64, usize);

impl Score {
    fn of(w: &BinWindows, t: &Tally, violation: f64) -> Self {
        if violation <= 0.0 && t.key() > 0 {
            Score(1, t.key() as f64, -(t.errors() as f64), (w.r1 - w.l1) + (w.r2 - w.l2))
        } else {
            Score(0, -violation, t.key() as f64, 0)
        }
    }

    fn feasible(&self) -> bool {
        self.0 == 1
    }
}

/// Steepest-ascent search over integer coordinates. A move shifts any subset
/// of the coordinates by ±step. `eval` scores admissible coordinates.
fn local_search<F>(start: Vec<i64>, step: i64, eval: &F) -> (Vec<i64>, Score)
where
    F: Fn(&[i64]) -> Option<Score>,
{
    let mut cur_score = eval(&start).expect("local search must start from an admissible point");
    let mut cur = start;
    let n = cur.len() as u32;
    let moves: Vec<Vec<i64>> = (1..3usize.pow(n))
        .map(|code| (0..n).map(|k| (code / 3usize.pow(k) % 3) as i64 - 1).map(|d| d * step).collect())
        .collect();
    loop {
        let mut best: Option<(Vec<i64>, Score)> = None;
        for m in &moves {
            let cand: Vec<i64> = cur.iter().zip(m).map(|(c, d)| c + d).collect();
            if let Some(s) = eval(&cand) {
                if s > cur_score && best.as_ref().is_none_or(|(_, bs)| s > *bs) {
                    best = Some((cand, s));
                }
            }
        }
        match best {
            Some((c, s)) => {
                cur = c;
                cur_score = s;
            }
            None => return (cur, cur_score),
        }
    }
}

/// Local searches from the best few distinct starts.
const RESTARTS: usize = 8;
/// Strategy A has many more near-equivalent starts and kinks.
const RESTARTS_A: usize = 32;

fn refine<F>(mut starts: Vec<(Vec<i64>, Score)>, step: i64, eval: F) -> Option<(Vec<i64>, Score)>
where
    F: Fn(&[i64]) -> Option<Score>,
{
    starts.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    starts.dedup_by(|a, b| a.0 == b.0);
    let mut best: Option<(Vec<i64>, Score)> = None;
    for (c, _) in starts.into_iter().take(RESTARTS) {
        let r = local_search(c, step, &eval);
        if best.as_ref().is_none_or(|b| r.1 > b.1) {
            best = Some(r);
        }
    }
    best
}

fn to_windows(c: &[i64]) -> Option<BinWindows> {
    if c.iter().any(|&v| v < 0) {
        return None;
    }
    Some(BinWindows { l1: c[0] as usize, r1: c[1] as usize, l2: c[2] as usize, r2: c[3] as usize })
}

fn coords(w: &BinWindows) -> Vec<i64> {
    vec![w.l1 as i64, w.r1 as i64, w.l2 as i64, w.r2 as i64]
}

/// Stops of a symmetric inward walk from `[l, r)` towards `peak`, each with
/// its one-step edge variants.
fn shrink_path(l: usize, r: usize, peak: usize, step: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut s = 0;
    while l + s <= peak && r > peak + s {
        for dl in [-(step as i64), 0, step as i64] {
            for dr in [-(step as i64), 0, step as i64] {
                let (a, b) = ((l + s) as i64 + dl, (r - s) as i64 + dr);
                if a >= l as i64 && b <= r as i64 && a < b {
                    out.push((a as usize, b as usize));
                }
            }
        }
        s += step;
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Best placement of the free window's markers within `[lo, hi)`; `make`
/// builds the pair from them.
fn sweep<M, R>(caps: &BinWindows, step: usize, make: M, lo: usize, hi: usize, rank: &R) -> Option<(BinWindows, Score)>
where
    M: Fn(usize, usize) -> BinWindows,
    R: Fn(&BinWindows) -> Score,
{
    let mut best: Option<(BinWindows, Score)> = None;
    let mut l = lo;
    while l < hi {
        let mut r = hi;
        while r > l {
            let w = make(l, r);
            if w.inside(caps) {
                let s = rank(&w);
                if best.as_ref().is_none_or(|(_, b)| s > *b) {
                    best = Some((w, s));
                }
            }
            r = r.saturating_sub(step);
        }
        l += step;
    }
    best
}

/// Strategy A: maximise the key under the QBER bound with a ≈50:50 key.
///
/// 1. Walk window 1 inwards from the initial width, both markers one step at
///    a time towards the peak. Every stop, and its one-step edge variants, is
///    a candidate.
/// 2. For each candidate sweep the window-2 markers over the initial window
///    for the largest key meeting the overall QBER and symmetry bounds. The
///    bound applies to the pair: a first window slightly over the QBER limit
///    can be paid for by a cleaner second one.
/// 3. Repeat 1-2 with the roles of the windows swapped. The smaller peak
///    limits a balanced key, so it is the one worth walking.
/// 4. From the best few placements, alternate a joint refinement of all four
///    markers with a fresh sweep of each window against the other until the
///    key stops improving.
pub fn optimize_strategy_a(h: &PeakHistograms, p: &OptimizeParams) -> Result<(WindowPair, KeyMetrics)> {
    let setup = initial_windows(h, p)?;
    let w = strategy_a_bins(h, &setup, p)?;
    Ok((h.markers(&w), h.metrics(&w)))
}

pub(crate) fn strategy_a_bins(h: &PeakHistograms, setup: &Setup, p: &OptimizeParams) -> Result<BinWindows> {
    let areas = Areas::new(h);
    let caps = setup.caps;
    let step = p.step_bins.max(1);
    let rank = |w: &BinWindows| {
        let t = areas.tally(w);
        Score::of(w, &t, t.violation_a(p))
    };
    let mut starts = Vec::new();
    for (l1, r1) in shrink_path(caps.l1, caps.r1, setup.peak1, step) {
        starts.extend(sweep(&caps, step, |l2, r2| BinWindows { l1, r1, l2, r2 }, caps.l2.max(r1), caps.r2, &rank));
    }
    for (l2, r2) in shrink_path(caps.l2, caps.r2, setup.peak2, step) {
        starts.extend(sweep(&caps, step, |l1, r1| BinWindows { l1, r1, l2, r2 }, caps.l1, caps.r1.min(l2), &rank));
    }
    starts.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| coords(&a.0).cmp(&coords(&b.0))));
    starts.dedup_by(|a, b| a.0 == b.0);
    let eval = |c: &[i64]| {
        let w = to_windows(c)?;
        w.inside(&caps).then(|| rank(&w))
    };
    let mut best: Option<(BinWindows, Score)> = None;
    for (mut w, mut s) in starts.into_iter().take(RESTARTS_A) {
        loop {
            let (c, ls) = local_search(coords(&w), step as i64, &eval);
            let mut cur = (to_windows(&c).unwrap(), ls);
            let BinWindows { l2, r2, .. } = cur.0;
            if let Some(x) = sweep(&caps, step, |l1, r1| BinWindows { l1, r1, l2, r2 }, caps.l1, caps.r1.min(l2), &rank) {
                if x.1 > cur.1 {
                    cur = x;
                }
            }
            let BinWindows { l1, r1, .. } = cur.0;
            if let Some(x) = sweep(&caps, step, |l2, r2| BinWindows { l1, r1, l2, r2 }, caps.l2.max(r1), caps.r2, &rank) {
                if x.1 > cur.1 {
                    cur = x;
                }
            }
            if cur.1 <= s {
                break;
            }
            (w, s) = cur;
        }
        if best.as_ref().is_none_or(|b| s > b.1) {
            best = Some((w, s));
        }
    }
    let best = best.map(|(w, s)| (coords(&w), s));
    match best {
        Some((c, s)) if s.feasible() => Ok(to_windows(&c).unwrap()),
        _ => Err(Error::Infeasible("no window pair meets the QBER and symmetry bounds".into())),
    }
}

/// Strategy B: maximise the key under the QBER bound only.
///
/// 1. Each window is shrunk symmetrically to its best signal-to-noise ratio,
///    the area above the background upper bound over the area below it.
///    Ties keep the wider window; zero background keeps the initial width.
/// 2. Both windows are given a common width about their centres. Every width
///    up to the initial one is tried against the QBER bound.
/// 3. At each width the windows are slid to their best positions, one at a
///    time. Positions and the common width are then refined jointly from the
///    best few widths.
pub fn optimize_strategy_b(h: &PeakHistograms, p: &OptimizeParams) -> Result<(WindowPair, KeyMetrics)> {
    let setup = initial_windows(h, p)?;
    let w = strategy_b_bins(h, &setup, p)?;
    Ok((h.markers(&w), h.metrics(&w)))
}

pub(crate) fn strategy_b_bins(h: &PeakHistograms, setup: &Setup, p: &OptimizeParams) -> Result<BinWindows> {
    let comb = h.combined();
    let peaks_ps = [comb.bin_center(setup.peak1) as i64, comb.bin_center(setup.peak2) as i64];
    let upper = estimate_background_level(&comb, &peaks_ps, p.peak_exclusion_ps / 2).map(|b| b.upper)?;
    let areas = Areas::new(h);
    let caps = setup.caps;
    let step = p.step_bins.max(1);
    let snr = |l: usize, r: usize| {
        let (mut above, mut below) = (0.0, 0.0);
        for &c in &comb.counts[l..r] {
            let c = c as f64;
            above += (c - upper).max(0.0);
            below += c.min(upper);
        }
        if below == 0.0 {
            f64::INFINITY
        } else {
            above / below
        }
    };
    let best_snr = |l0: usize, r0: usize, peak: usize| {
        let mut best = (l0, r0, snr(l0, r0));
        let mut s = step;
        while l0 + s <= peak && r0 > peak + s {
            let v = snr(l0 + s, r0 - s);
            if v > best.2 {
                best = (l0 + s, r0 - s, v);
            }
            s += step;
        }
        (best.0, best.1)
    };
    let (l1, r1) = best_snr(caps.l1, caps.r1, setup.peak1);
    let (l2, r2) = best_snr(caps.l2, caps.r2, setup.peak2);
    let c1 = (l1 + r1) as f64 / 2.0;
    let c2 = (l2 + r2) as f64 / 2.0;

    // Coordinates: [start1, start2, span].
    let max_span = (caps.r1 - caps.l1).min(caps.r2 - caps.l2);
    let place = |span: usize| -> Option<BinWindows> {
        let fit = |centre: f64, lo: usize, hi: usize| {
            let start = (centre - span as f64 / 2.0).round().max(lo as f64) as usize;
            let start = start.min(hi.checked_sub(span)?);
            (start >= lo).then_some(start)
        };
        let s1 = fit(c1, caps.l1, caps.r1)?;
        let s2 = fit(c2, caps.l2, caps.r2)?;
        let w = BinWindows { l1: s1, r1: s1 + span, l2: s2, r2: s2 + span };
        w.inside(&caps).then_some(w)
    };
    let from = |c: &[i64]| -> Option<BinWindows> {
        if c.iter().any(|&v| v < 0) || c[2] <= 0 {
            return None;
        }
        let w = BinWindows { l1: c[0] as usize, r1: (c[0] + c[2]) as usize, l2: c[1] as usize, r2: (c[1] + c[2]) as usize };
        w.inside(&caps).then_some(w)
    };
    let rank = |w: &BinWindows| {
        let t = areas.tally(w);
        Score::of(w, &t, t.violation_b(p))
    };
    let starts: Vec<(Vec<i64>, Score)> = (1..=max_span)
        .step_by(step)
        .filter_map(place)
        .map(|w| {
            // Slide each window across its cap with the other held, until
            // neither move helps.
            let span = w.r1 - w.l1;
            let mut cur = (w, rank(&w));
            loop {
                let prev = cur.1;
                for first in [true, false] {
                    let (lo, hi) = if first { (caps.l1, caps.r1.min(cur.0.l2)) } else { (caps.l2.max(cur.0.r1), caps.r2) };
                    let mut s = lo;
                    while s + span <= hi {
                        let cand = if first {
                            BinWindows { l1: s, r1: s + span, ..cur.0 }
                        } else {
                            BinWindows { l2: s, r2: s + span, ..cur.0 }
                        };
                        let sc = rank(&cand);
                        if sc > cur.1 {
                            cur = (cand, sc);
                        }
                        s += step;
                    }
                }
                if cur.1 <= prev {
                    break;
                }
            }
            let w = cur.0;
            (vec![w.l1 as i64, w.l2 as i64, span as i64], cur.1)
        })
        .collect();
    if starts.is_empty() {
        return Err(Error::Infeasible("windows cannot be width-matched".into()));
    }
    match refine(starts, step as i64, |c| from(c).map(|w| rank(&w))) {
        Some((c, s)) if s.feasible() => Ok(from(&c).unwrap()),
        _ => Err(Error::Infeasible("no common window width meets the QBER bound".into())),
    }
}

/// Runs either strategy and also returns the bin-level windows and setup.
pub fn optimize_windows(h: &PeakHistograms, strategy: Strategy, p: &OptimizeParams) -> Result<(Setup, BinWindows, KeyMetrics)> {
    let setup = initial_windows(h, p)?;
    let w = match strategy {
        Strategy::A => strategy_a_bins(h, &setup, p)?,
        Strategy::B => strategy_b_bins(h, &setup, p)?,
    };
    Ok((setup, w, h.metrics(&w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::CoincidenceHistogram;

    fn hists(bit0: Vec<u64>, bit1: Vec<u64>) -> PeakHistograms {
        PeakHistograms {
            bit0: CoincidenceHistogram { bin_width: 13, origin: 0, counts: bit0 },
            bit1: CoincidenceHistogram { bin_width: 13, origin: 0, counts: bit1 },
            duration_s: 1.0,
        }
    }

    fn gauss(n: usize, centre: f64, sigma: f64, height: f64) -> Vec<u64> {
        (0..n).map(|i| (height * (-(i as f64 + 0.5 - centre).powi(2) / (2.0 * sigma * sigma)).exp()).round() as u64).collect()
    }

    #[test]
    fn noiseless_symmetric_peaks_keep_full_windows() {
        let n = 400;
        let h = hists(gauss(n, 300.0, 4.0, 1000.0), gauss(n, 100.0, 4.0, 1000.0));
        let p = OptimizeParams { peak_exclusion_ps: 100 * 13, ..Default::default() };
        let (w, m) = optimize_strategy_a(&h, &p).unwrap();
        assert_eq!(m.qber_pct, 0.0);
        assert_eq!(m.asymmetry_pct, 50.0);
        let setup = initial_windows(&h, &p).unwrap();
        let total: u64 = h.bit0.counts.iter().chain(&h.bit1.counts).sum();
        assert_eq!(m.key_length, total);
        assert_eq!(w, h.markers(&setup.caps));
    }

    #[test]
    fn zero_background_b_keeps_initial_span() {
        let n = 400;
        let h = hists(gauss(n, 300.0, 4.0, 1200.0), gauss(n, 100.0, 4.0, 800.0));
        let p = OptimizeParams { peak_exclusion_ps: 100 * 13, ..Default::default() };
        let (setup, w, m) = optimize_windows(&h, Strategy::B, &p).unwrap();
        assert_eq!(m.qber_pct, 0.0);
        assert_eq!(w.r1 - w.l1, (setup.caps.r1 - setup.caps.l1).min(setup.caps.r2 - setup.caps.l2));
        assert!(m.asymmetry_pct > 55.0);
    }

    #[test]
    fn tally_matches_histogram_areas() {
        let h = hists(vec![1, 2, 3, 4, 5, 6], vec![6, 5, 4, 3, 2, 1]);
        let w = BinWindows { l1: 0, r1: 2, l2: 3, r2: 6 };
        let t = Areas::new(&h).tally(&w);
        assert_eq!(t, Tally::from_histograms(&h, &w));
        assert_eq!(t, Tally { right1: 11, wrong1: 3, right2: 15, wrong2: 6 });
    }

    #[test]
    fn infeasible_when_errors_dominate() {
        let n = 400;
        let flat = vec![50u64; n];
        let mut b1 = gauss(n, 100.0, 4.0, 100.0);
        b1.iter_mut().zip(&flat).for_each(|(a, b)| *a += b);
        let mut b0 = gauss(n, 300.0, 4.0, 100.0);
        b0.iter_mut().zip(&flat).for_each(|(a, b)| *a += b);
        let h = hists(b0, b1);
        let p = OptimizeParams { peak_exclusion_ps: 100 * 13, qber_threshold_pct: 0.1, ..Default::default() };
        assert!(matches!(optimize_strategy_a(&h, &p), Err(Error::Infeasible(_))));
    }
}
