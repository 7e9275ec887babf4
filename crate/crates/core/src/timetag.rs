//! Picosecond photon time-tag streams: generation, transformation, file I/O.
//!
//! A source is modelled on a grid of `bin_resolution` picosecond bins. An ideal
//! single-photon source fills each bin with probability `p`, except that right
//! after an emission the probability is suppressed and recovers over the
//! coherence time (anti-bunching). Thermal background fills bins independently
//! with one photon (probability `P1`) or two photons (probability `P1²`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::histogram::CoincidenceHistogram;
use crate::rng::RandomStream;

pub const PS_PER_S: f64 = 1e12;

/// Strictly increasing picosecond time tags inside `[0, duration)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagSeries {
    tags: Vec<u64>,
    duration: u64,
}

impl TimeTagSeries {
    /// Validates ordering and span.
    pub fn new(tags: Vec<u64>, duration: u64) -> Result<Self> {
        if let Some(w) = tags.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::param("tags", format!("not strictly increasing at {} -> {}", w[0], w[1])));
        }
        if let Some(&last) = tags.last() {
            if last >= duration {
                return Err(Error::param("tags", format!("tag {last} outside span {duration}")));
            }
        }
        Ok(Self { tags, duration })
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_sorted_unchecked(tags: Vec<u64>, duration: u64) -> Self {
        debug_assert!(tags.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(tags.last().is_none_or(|&t| t < duration));
        Self { tags, duration }
    }

    pub fn empty(duration: u64) -> Self {
        Self { tags: Vec::new(), duration }
    }

    pub fn tags(&self) -> &[u64] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<u64> {
        self.tags
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn duration_s(&self) -> f64 {
        self.duration as f64 / PS_PER_S
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Index range of tags in `[start, end)`, found by binary search.
    pub fn index_range(&self, start: u64, end: u64) -> std::ops::Range<usize> {
        let lo = self.tags.partition_point(|&t| t < start);
        let hi = self.tags.partition_point(|&t| t < end);
        lo..hi.max(lo)
    }

    /// Tags in `[start, end)` re-based to start at zero.
    pub fn window(&self, start: u64, end: u64) -> TimeTagSeries {
        let end = end.min(self.duration);
        let r = self.index_range(start, end);
        let tags = self.tags[r].iter().map(|t| t - start).collect();
        TimeTagSeries { tags, duration: end.saturating_sub(start) }
    }

    /// Keeps each tag independently with probability `keep`.
    pub fn thin(&self, keep: f64, rng: &mut RandomStream) -> TimeTagSeries {
        if keep >= 1.0 {
            return self.clone();
        }
        if keep <= 0.0 {
            return TimeTagSeries::empty(self.duration);
        }
        let tags = self.tags.iter().copied().filter(|_| rng.bernoulli(keep)).collect();
        TimeTagSeries { tags, duration: self.duration }
    }
}

/// Ideal single-photon source statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePhotonStatModel {
    pub mean_rate_hz: f64,
    pub coherence_time_ps: f64,
    pub bin_resolution_ps: u64,
}

impl SinglePhotonStatModel {
    pub fn new(mean_rate_hz: f64, coherence_time_ps: f64) -> Self {
        Self { mean_rate_hz, coherence_time_ps, bin_resolution_ps: 1 }
    }

    /// Saturation probability per bin.
    pub fn saturation_probability(&self) -> f64 {
        self.mean_rate_hz * self.bin_resolution_ps as f64 / PS_PER_S
    }

    /// Relative emission probability `τ` ps after a previous emission.
    ///
    /// Half-normal CDF with σ = t_coh / 3: zero at τ = 0, above 0.997 at
    /// τ = t_coh, one to machine precision past 3·t_coh.
    pub fn recovery(&self, tau_ps: f64) -> f64 {
        if tau_ps <= 0.0 {
            return 0.0;
        }
        let sigma = self.coherence_time_ps / 3.0;
        if sigma <= 0.0 || tau_ps > 9.0 * sigma {
            return 1.0;
        }
        erf(tau_ps / (std::f64::consts::SQRT_2 * sigma))
    }

    /// Conditional per-bin emission probability Pr(t₁+τ | t₁).
    pub fn conditional_probability(&self, tau_ps: f64) -> f64 {
        self.saturation_probability() * self.recovery(tau_ps)
    }
}

/// Thermal (super-Poissonian) background statistics, truncated at two photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalStatModel {
    pub mean_rate_hz: f64,
    pub bin_resolution_ps: u64,
    /// Probability that a bin holds exactly one photon.
    pub single_event_probability: f64,
    /// Mean photon number of the Bose-Einstein distribution. Informational:
    /// the sampler uses Pr(2) = P1² and never reads this.
    pub mean_photon_number: Option<f64>,
}

impl ThermalStatModel {
    /// Solves `P1 + 2·P1² = rate × bin` for `P1`.
    pub fn from_rate(mean_rate_hz: f64, bin_resolution_ps: u64) -> Self {
        let r = mean_rate_hz * bin_resolution_ps as f64 / PS_PER_S;
        let p1 = if r > 0.0 { 2.0 * r / (1.0 + (1.0 + 8.0 * r).sqrt()) } else { 0.0 };
        Self { mean_rate_hz, bin_resolution_ps, single_event_probability: p1, mean_photon_number: None }
    }

    pub fn two_photon_probability(&self) -> f64 {
        self.single_event_probability * self.single_event_probability
    }

    /// Expected photons per bin, `P1 + 2·P1²`.
    pub fn photons_per_bin(&self) -> f64 {
        self.single_event_probability + 2.0 * self.two_photon_probability()
    }
}

/// Bins to the next success of a Bernoulli(p) scan, always ≥ 1.
#[inline]
fn geometric_gap(ln_q: f64, rng: &mut RandomStream) -> u64 {
    let g = (rng.uniform_open0().ln() / ln_q).floor();
    if g >= 1.8e19 {
        u64::MAX / 2
    } else {
        g as u64 + 1
    }
}

fn check_duration(duration: u64, bin: u64) -> Result<u64> {
    if bin == 0 {
        return Err(Error::param("bin_resolution_ps", "must be at least 1 ps"));
    }
    if duration < bin {
        return Err(Error::DegenerateDuration { duration_ps: duration, bin_ps: bin });
    }
    Ok(duration / bin)
}

/// Time tags of an ideal single-photon source.
///
/// Proposals are drawn by geometric gap sampling at the saturation probability
/// `p` and each proposal is accepted with the recovery probability relative
/// to the last accepted emission. This realises an independent per-bin success
/// probability `p · recovery(τ)` without visiting all bins.
pub fn generate_single_photon_tags(
    model: &SinglePhotonStatModel,
    duration: u64,
    rng: &mut RandomStream,
) -> Result<TimeTagSeries> {
    if duration == 0 {
        return Ok(TimeTagSeries::empty(0));
    }
    let p = model.saturation_probability();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidRate(p));
    }
    if model.coherence_time_ps < 0.0 {
        return Err(Error::param("coherence_time_ps", "must be non-negative"));
    }
    let bin = model.bin_resolution_ps;
    let bins = check_duration(duration, bin)?;
    let ln_q = (-p).ln_1p();
    let mut tags = Vec::with_capacity((p * bins as f64 * 1.01) as usize + 16);
    let mut pos: u64 = 0;
    let mut first = true;
    let mut last: Option<u64> = None;
    loop {
        let gap = geometric_gap(ln_q, rng);
        pos = if first { gap - 1 } else { pos.saturating_add(gap) };
        first = false;
        if pos >= bins {
            break;
        }
        let accept = match last {
            None => true,
            Some(l) => {
                let r = model.recovery(((pos - l) * bin) as f64);
                r >= 1.0 || rng.bernoulli(r)
            }
        };
        if accept {
            tags.push(pos * bin);
            last = Some(pos);
        }
    }
    Ok(TimeTagSeries::from_sorted_unchecked(tags, duration))
}

/// Time tags of a thermal background source.
///
/// A two-photon event produces tags at `t` and `t + 1` ps.
pub fn generate_thermal_background_tags(
    model: &ThermalStatModel,
    duration: u64,
    rng: &mut RandomStream,
) -> Result<TimeTagSeries> {
    let p1 = model.single_event_probability;
    let occupied = p1 + p1 * p1;
    if !(0.0..1.0).contains(&p1) || occupied >= 1.0 {
        return Err(Error::InvalidProbability(p1));
    }
    if duration == 0 || p1 == 0.0 {
        return Ok(TimeTagSeries::empty(duration));
    }
    let bin = model.bin_resolution_ps;
    let bins = check_duration(duration, bin)?;
    let ln_q = (-occupied).ln_1p();
    let double = p1 / (1.0 + p1);
    let mut tags: Vec<u64> = Vec::with_capacity((occupied * bins as f64 * 1.01) as usize + 16);
    let mut pos: u64 = 0;
    let mut first = true;
    loop {
        let gap = geometric_gap(ln_q, rng);
        pos = if first { gap - 1 } else { pos.saturating_add(gap) };
        first = false;
        if pos >= bins {
            break;
        }
        let mut t = pos * bin;
        if let Some(&prev) = tags.last() {
            t = t.max(prev + 1);
        }
        let two = rng.bernoulli(double);
        for k in 0..if two { 2 } else { 1 } {
            let tk = t + k;
            if tk < duration {
                tags.push(tk);
            }
        }
    }
    Ok(TimeTagSeries::from_sorted_unchecked(tags, duration))
}

/// Gap blocks used by [`resample_tags`].
pub const RESAMPLE_BLOCK: usize = 32;

/// Fresh series with the template's inter-arrival statistics.
///
/// Block bootstrap over the template's consecutive gaps: blocks of
/// [`RESAMPLE_BLOCK`] gaps are drawn with replacement and chained until the
/// span is filled, so the tag count varies from call to call.
pub fn resample_tags(template: &TimeTagSeries, duration: u64, rng: &mut RandomStream) -> Result<TimeTagSeries> {
    if template.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    let src = template.tags();
    let gaps: Vec<u64> = if src.len() == 1 {
        vec![template.duration().max(1)]
    } else {
        src.windows(2).map(|w| w[1] - w[0]).collect()
    };
    let n = gaps.len();
    let block = RESAMPLE_BLOCK.min(n);
    let mean_gap = gaps.iter().sum::<u64>() as f64 / n as f64;
    let mut tags = Vec::with_capacity((duration as f64 / mean_gap * 1.05) as usize + 16);
    // Stationary start: the first tag lands uniformly inside a sampled gap.
    let g0 = gaps[rng.range_inclusive(0, n as u64 - 1) as usize];
    let mut t = (rng.uniform() * g0 as f64) as u64;
    'outer: loop {
        let start = rng.range_inclusive(0, (n - block) as u64) as usize;
        for &g in &gaps[start..start + block] {
            if t >= duration {
                break 'outer;
            }
            tags.push(t);
            t = t.saturating_add(g);
        }
    }
    Ok(TimeTagSeries::from_sorted_unchecked(tags, duration))
}

/// Sorted union. On equal timestamps the `a` tag is placed first; any tag that
/// collides with the previously placed one moves 1 ps past it, and a moved tag
/// that leaves the span is dropped.
pub fn merge(a: &TimeTagSeries, b: &TimeTagSeries) -> TimeTagSeries {
    let duration = a.duration.max(b.duration);
    let (x, y) = (a.tags(), b.tags());
    let mut out = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0, 0);
    while i < x.len() || j < y.len() {
        let take_a = j >= y.len() || (i < x.len() && x[i] <= y[j]);
        let mut t = if take_a { x[i] } else { y[j] };
        if let Some(&prev) = out.last() {
            if t <= prev {
                t = prev + 1;
            }
        }
        if take_a {
            i += 1;
        } else {
            j += 1;
        }
        if t < duration {
            out.push(t);
        }
    }
    TimeTagSeries::from_sorted_unchecked(out, duration)
}

/// Shifts every tag by `delta` ps; tags pushed past the span are dropped.
pub fn apply_delay(series: &TimeTagSeries, delta: u64) -> TimeTagSeries {
    if delta == 0 {
        return series.clone();
    }
    let limit = series.duration.saturating_sub(delta);
    let tags = series.tags.iter().take_while(|&&t| t < limit).map(|t| t + delta).collect();
    TimeTagSeries::from_sorted_unchecked(tags, series.duration)
}

/// Histogram of consecutive differences `t[n+1] - t[n]`.
pub fn inter_arrival_histogram(series: &TimeTagSeries, bin_width: u64) -> Result<CoincidenceHistogram> {
    if bin_width == 0 {
        return Err(Error::param("bin_width", "must be at least 1 ps"));
    }
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!("{} tags, need at least 2", series.len())));
    }
    let max_gap = series.tags.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    let mut h = CoincidenceHistogram::zeros(bin_width, 0, (max_gap / bin_width + 1) as usize);
    for w in series.tags.windows(2) {
        h.counts[((w[1] - w[0]) / bin_width) as usize] += 1;
    }
    Ok(h)
}

/// Empirical Pr(tag at t+τ | tag at t): returns (successes, trials).
///
/// Trials are all tags with `t + τ` inside the span.
pub fn conditional_emission_counts(series: &TimeTagSeries, offset: u64) -> (u64, u64) {
    let tags = series.tags();
    let mut j = 0;
    let (mut hits, mut trials) = (0u64, 0u64);
    for &t in tags {
        let target = t + offset;
        if target >= series.duration {
            break;
        }
        trials += 1;
        while j < tags.len() && tags[j] < target {
            j += 1;
        }
        if j < tags.len() && tags[j] == target {
            hits += 1;
        }
    }
    (hits, trials)
}

/// On-disk encoding of a tag file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagFormat {
    Csv,
    Binary,
}

impl TagFormat {
    /// `.csv` is text, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TagFormat::Csv,
            _ => TagFormat::Binary,
        }
    }
}

/// A time-tag series together with the channel it was recorded on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagFile {
    pub channel: u32,
    pub series: TimeTagSeries,
}

const BINARY_MAGIC: &[u8; 8] = b"TTAGv001";
const CSV_HEADER: &str = "# timetags v1";

impl TagFile {
    pub fn write_to<W: Write>(&self, w: W, format: TagFormat) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        match format {
            TagFormat::Csv => {
                writeln!(w, "{CSV_HEADER} duration_ps={} channel={}", self.series.duration, self.channel)?;
                for t in self.series.tags() {
                    writeln!(w, "{t}")?;
                }
            }
            TagFormat::Binary => {
                w.write_all(BINARY_MAGIC)?;
                w.write_all(&self.channel.to_le_bytes())?;
                w.write_all(&[0u8; 4])?;
                w.write_all(&self.series.duration.to_le_bytes())?;
                w.write_all(&(self.series.len() as u64).to_le_bytes())?;
                for t in self.series.tags() {
                    w.write_all(&t.to_le_bytes())?;
                }
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(r: R, format: TagFormat, path: &Path) -> Result<TagFile> {
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let mut r = BufReader::new(r);
        match format {
            TagFormat::Csv => {
                let mut header = String::new();
                r.read_line(&mut header).map_err(|e| Error::io(path.display().to_string(), e))?;
                let rest = header
                    .trim_end()
                    .strip_prefix(CSV_HEADER)
                    .ok_or_else(|| bad(format!("missing header line '{CSV_HEADER} ...'")))?;
                let (mut duration, mut channel) = (None, None);
                for field in rest.split_whitespace() {
                    match field.split_once('=') {
                        Some(("duration_ps", v)) => duration = v.parse::<u64>().ok(),
                        Some(("channel", v)) => channel = v.parse::<u32>().ok(),
                        _ => return Err(bad(format!("unexpected header field '{field}'"))),
                    }
                }
                let duration = duration.ok_or_else(|| bad("header lacks duration_ps".into()))?;
                let channel = channel.ok_or_else(|| bad("header lacks channel".into()))?;
                let mut tags = Vec::new();
                for (n, line) in r.lines().enumerate() {
                    let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    let t = line.parse::<u64>().map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
                    tags.push(t);
                }
                let series = TimeTagSeries::new(tags, duration).map_err(|e| bad(e.to_string()))?;
                Ok(TagFile { channel, series })
            }
            TagFormat::Binary => {
                let mut head = [0u8; 32];
                r.read_exact(&mut head).map_err(|e| bad(format!("truncated header: {e}")))?;
                if &head[..8] != BINARY_MAGIC {
                    return Err(bad("bad magic".into()));
                }
                let channel = u32::from_le_bytes(head[8..12].try_into().unwrap());
                let duration = u64::from_le_bytes(head[16..24].try_into().unwrap());
                let count = u64::from_le_bytes(head[24..32].try_into().unwrap()) as usize;
                let mut buf = vec![0u8; count * 8];
                r.read_exact(&mut buf).map_err(|e| bad(format!("truncated body: {e}")))?;
                let tags = buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
                let series = TimeTagSeries::new(tags, duration).map_err(|e| bad(e.to_string()))?;
                Ok(TagFile { channel, series })
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, |f| self.write_to(f, TagFormat::from_path(path)))
    }

    pub fn load(path: &Path) -> Result<TagFile> {
        let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(f, TagFormat::from_path(path), path)
    }
}
