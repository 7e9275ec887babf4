//! Run-time stability of the key rate: random k-second slices of each
//! dataset, averaged over datasets, repeated, and summarised as SD/mean.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{coincidences, WindowPair};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::timetag::{TimeTagSeries, PS_PER_S};

/// Sifted events of one dataset, ordered by herald time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiftedEvents {
    herald: Vec<u64>,
    bob: Vec<u64>,
    max_lag: u64,
    duration: u64,
}

impl SiftedEvents {
    pub fn new(herald: &TimeTagSeries, d0: &TimeTagSeries, d1: &TimeTagSeries, windows: &WindowPair) -> Result<Self> {
        let mut ev = coincidences(herald, d0, d1, windows)?;
        ev.sort_by_key(|e| (e.herald_ps, e.bob_ps));
        let max_lag = ev.iter().map(|e| e.bob_ps.saturating_sub(e.herald_ps)).max().unwrap_or(0);
        Ok(Self {
            herald: ev.iter().map(|e| e.herald_ps).collect(),
            bob: ev.iter().map(|e| e.bob_ps).collect(),
            max_lag,
            duration: herald.duration(),
        })
    }

    pub fn len(&self) -> usize {
        self.herald.len()
    }

    pub fn is_empty(&self) -> bool {
        self.herald.is_empty()
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    /// Events with the herald at or after `start` and Bob's detection before
    /// `start + len`.
    pub fn count_in(&self, start: u64, len: u64) -> u64 {
        let end = start + len;
        let lo = self.herald.partition_point(|&a| a < start);
        let hi = self.herald.partition_point(|&a| a < end);
        let mut n = (hi - lo) as u64;
        let mut j = hi;
        while j > lo && self.herald[j - 1] + self.max_lag >= end {
            j -= 1;
            if self.bob[j] >= end {
                n -= 1;
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPoint {
    pub k_s: f64,
    pub mean_khz: f64,
    pub sd_khz: f64,
    pub sd_over_mean_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCurve {
    pub datasets: usize,
    pub iterations: usize,
    pub points: Vec<BootstrapPoint>,
}

impl BootstrapCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k_s,mean_khz,sd_khz,sd_over_mean_pct")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.k_s, p.mean_khz, p.sd_khz, p.sd_over_mean_pct)?;
        }
        Ok(())
    }
}

/// For each k: every iteration draws one uniform start per dataset, takes the
/// key rate of that k-second slice, and averages over datasets. The curve
/// reports SD/mean of the iteration averages. Iterations run in parallel on
/// per-(k, iteration) substreams and are reduced in order.
pub fn bootstrap_sd_over_mean(datasets: &[SiftedEvents], k_values_s: &[f64], iterations: usize, rng: &RandomStream) -> Result<BootstrapCurve> {
    if datasets.is_empty() {
        return Err(Error::InsufficientData("no datasets".into()));
    }
    if iterations == 0 {
        return Err(Error::param("iterations", "must be at least 1"));
    }
    let min_duration = datasets.iter().map(|d| d.duration).min().unwrap();
    let mut points = Vec::with_capacity(k_values_s.len());
    for (ki, &k_s) in k_values_s.iter().enumerate() {
        if !(k_s > 0.0) {
            return Err(Error::param("k", format!("window length must be positive, got {k_s}")));
        }
        let k = (k_s * PS_PER_S).round() as u64;
        if k > min_duration {
            return Err(Error::KExceedsDuration { k_s, duration_s: min_duration as f64 / PS_PER_S });
        }
        let k_rng = rng.substream(ki as u64);
        let means: Vec<f64> = (0..iterations)
            .into_par_iter()
            .map(|it| {
                let mut r = k_rng.substream(it as u64);
                let total: f64 = datasets
                    .iter()
                    .map(|d| {
                        let start = r.range_inclusive(0, d.duration - k);
                        d.count_in(start, k) as f64 / k_s / 1e3
                    })
                    .sum();
                total / datasets.len() as f64
            })
            .collect();
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let sd = if means.len() > 1 { (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        let ratio = if mean > 0.0 { sd / mean * 100.0 } else { 0.0 };
        points.push(BootstrapPoint { k_s, mean_khz: mean, sd_khz: sd, sd_over_mean_pct: ratio });
    }
    Ok(BootstrapCurve { datasets: datasets.len(), iterations, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(pairs: &[(u64, u64)], duration: u64) -> SiftedEvents {
        let max_lag = pairs.iter().map(|p| p.1 - p.0).max().unwrap_or(0);
        SiftedEvents { herald: pairs.iter().map(|p| p.0).collect(), bob: pairs.iter().map(|p| p.1).collect(), max_lag, duration }
    }

    #[test]
    fn slice_excludes_events_straddling_the_end() {
        let e = events(&[(5, 10), (15, 30), (18, 19), (40, 45)], 50);
        assert_eq!(e.count_in(0, 20), 2);
        assert_eq!(e.count_in(0, 31), 3);
        assert_eq!(e.count_in(6, 40), 3);
        assert_eq!(e.count_in(16, 29), 1);
        assert_eq!(e.count_in(0, 50), 4);
    }

    #[test]
    fn full_duration_window_has_zero_spread() {
        let pairs: Vec<(u64, u64)> = (0..1000).map(|i| (i * 1_000_000_000, i * 1_000_000_000 + 7000)).collect();
        let e = events(&pairs, PS_PER_S as u64);
        let c = bootstrap_sd_over_mean(&[e.clone(), e], &[1.0], 10, &RandomStream::new(3)).unwrap();
        assert_eq!(c.points[0].sd_over_mean_pct, 0.0);
        assert!((c.points[0].mean_khz - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_longer_than_dataset_is_rejected() {
        let e = events(&[(1, 2)], 1_000);
        assert!(matches!(bootstrap_sd_over_mean(&[e], &[1.0], 3, &RandomStream::new(1)), Err(Error::KExceedsDuration { .. })));
    }

    #[test]
    fn sifted_events_from_tags() {
        let h = TimeTagSeries::new(vec![100, 1000], 5000).unwrap();
        let d0 = TimeTagSeries::new(vec![130], 5000).unwrap();
        let d1 = TimeTagSeries::new(vec![1010, 1100], 5000).unwrap();
        let w = WindowPair { w_l1: 0, w_r1: 20, w_l2: 20, w_r2: 40 };
        let e = SiftedEvents::new(&h, &d0, &d1, &w).unwrap();
        assert_eq!(e.herald, vec![100, 1000]);
        assert_eq!(e.bob, vec![130, 1010]);
        assert_eq!(e.max_lag, 30);
    }
}
