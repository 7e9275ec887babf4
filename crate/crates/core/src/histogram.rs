use std::io::Write;

use serde::{Deserialize, Serialize};

/// Binned counts of time differences.
///
/// Bin `i` covers `[origin + i * bin_width, origin + (i + 1) * bin_width)` ps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width: u64,
    pub origin: i64,
    pub counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn zeros(bin_width: u64, origin: i64, bins: usize) -> Self {
        assert!(bin_width > 0, "bin width must be positive");
        Self { bin_width, origin, counts: vec![0; bins] }
    }

    /// Histogram spanning `[lo, hi)` ps; the last bin may extend past `hi`.
    pub fn spanning(bin_width: u64, lo: i64, hi: i64) -> Self {
        let span = (hi - lo).max(0) as u64;
        let bins = span.div_ceil(bin_width) as usize;
        Self::zeros(bin_width, lo, bins)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Exclusive upper edge of the last bin.
    pub fn end(&self) -> i64 {
        self.origin + (self.counts.len() as u64 * self.bin_width) as i64
    }

    pub fn bin_of(&self, value: i64) -> Option<usize> {
        if value < self.origin {
            return None;
        }
        let idx = ((value - self.origin) as u64 / self.bin_width) as usize;
        (idx < self.counts.len()).then_some(idx)
    }

    pub fn add(&mut self, value: i64) {
        if let Some(i) = self.bin_of(value) {
            self.counts[i] += 1;
        }
    }

    pub fn bin_start(&self, i: usize) -> i64 {
        self.origin + (i as u64 * self.bin_width) as i64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) as f64 + self.bin_width as f64 / 2.0
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin-wise sum of two histograms on the same grid.
    pub fn sum(&self, other: &Self) -> Self {
        assert_eq!(self.bin_width, other.bin_width);
        assert_eq!(self.origin, other.origin);
        assert_eq!(self.counts.len(), other.counts.len());
        Self {
            bin_width: self.bin_width,
            origin: self.origin,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_center_ps,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.bin_center(i), c)?;
        }
        Ok(())
    }
}
