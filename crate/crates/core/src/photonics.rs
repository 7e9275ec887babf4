//! Passive optics acting on tagged photon streams and on sampled transverse fields.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::timetag::TimeTagSeries;

pub const FIBRE_GROUP_INDEX: f64 = 1.46;
const C_M_PER_PS: f64 = 299_792_458.0e-12;

/// Linear polarization label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    D,
    V,
    A,
}

impl Polarization {
    pub fn angle_deg(self) -> f64 {
        match self {
            Polarization::H => 0.0,
            Polarization::D => 45.0,
            Polarization::V => 90.0,
            Polarization::A => 135.0,
        }
    }

    fn index(self) -> i64 {
        match self {
            Polarization::H => 0,
            Polarization::D => 1,
            Polarization::V => 2,
            Polarization::A => 3,
        }
    }

    fn from_index(i: i64) -> Self {
        match i.rem_euclid(4) {
            0 => Polarization::H,
            1 => Polarization::D,
            2 => Polarization::V,
            _ => Polarization::A,
        }
    }

    pub fn orthogonal(self) -> Self {
        Self::from_index(self.index() + 2)
    }

    /// Output of an ideal half-wave plate with fast axis at `axis_deg`
    /// (a multiple of 22.5°): angle ↦ 2·axis − angle.
    pub fn reflect_about(self, axis_deg: f64) -> Result<Self> {
        let steps = axis_deg / 22.5;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::param("angle_deg", format!("{axis_deg}° does not map the H/V/D/A labels onto each other")));
        }
        Ok(Self::from_index(steps.round() as i64 - self.index()))
    }
}

/// Loss given either in dB or as a lost fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Loss {
    Db(f64),
    Fraction(f64),
}

impl Loss {
    pub const NONE: Loss = Loss::Fraction(0.0);

    /// Lost fraction, 1 − 10^(−dB/10) for dB inputs.
    pub fn fraction(self) -> f64 {
        match self {
            Loss::Db(db) => 1.0 - 10f64.powf(-db / 10.0),
            Loss::Fraction(f) => f,
        }
    }

    pub fn transmission(self) -> f64 {
        1.0 - self.fraction()
    }

    pub fn check(self, name: &'static str) -> Result<f64> {
        let f = self.fraction();
        if !(0.0..1.0).contains(&f) {
            return Err(Error::param(name, format!("lost fraction {f} outside [0, 1)")));
        }
        Ok(f)
    }
}

impl Default for Loss {
    fn default() -> Self {
        Loss::NONE
    }
}

/// Photon tags with their polarization and, once encoded, the bit value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizedTagSeries {
    pub tags: Vec<u64>,
    pub polarization: Vec<Polarization>,
    pub bit: Vec<Option<u8>>,
    pub duration: u64,
}

impl PolarizedTagSeries {
    pub fn uniform(series: TimeTagSeries, polarization: Polarization) -> Self {
        let duration = series.duration();
        let tags = series.into_tags();
        let n = tags.len();
        Self { tags, polarization: vec![polarization; n], bit: vec![None; n], duration }
    }

    pub fn empty(duration: u64) -> Self {
        Self { tags: Vec::new(), polarization: Vec::new(), bit: Vec::new(), duration }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Drops polarization and bit annotations.
    pub fn into_series(self) -> TimeTagSeries {
        TimeTagSeries::from_sorted_unchecked(self.tags, self.duration)
    }

    pub fn with_bit(mut self, bit: u8) -> Self {
        self.bit.iter_mut().for_each(|b| *b = Some(bit));
        self
    }

    fn push_from(&mut self, other: &Self, i: usize) {
        self.tags.push(other.tags[i]);
        self.polarization.push(other.polarization[i]);
        self.bit.push(other.bit[i]);
    }

    /// Routes each tag to `Some(true)` (first output), `Some(false)` (second
    /// output) or `None` (lost).
    fn route<F>(&self, mut choose: F) -> (Self, Self)
    where
        F: FnMut(Polarization) -> Option<bool>,
    {
        let mut a = Self::empty(self.duration);
        let mut b = Self::empty(self.duration);
        for i in 0..self.len() {
            match choose(self.polarization[i]) {
                Some(true) => a.push_from(self, i),
                Some(false) => b.push_from(self, i),
                None => {}
            }
        }
        (a, b)
    }

    pub fn attenuate(&self, survival: f64, rng: &mut RandomStream) -> Self {
        if survival >= 1.0 {
            return self.clone();
        }
        self.route(|_| rng.bernoulli(survival).then_some(true)).0
    }

    /// Shifts all tags later by `delta` ps, dropping those leaving the span.
    pub fn delay(mut self, delta: u64) -> Self {
        if delta == 0 {
            return self;
        }
        let limit = self.duration.saturating_sub(delta);
        let keep = self.tags.partition_point(|&t| t < limit);
        self.tags.truncate(keep);
        self.polarization.truncate(keep);
        self.bit.truncate(keep);
        self.tags.iter_mut().for_each(|t| *t += delta);
        self
    }

    /// Time-ordered union; equal timestamps are separated by 1 ps.
    pub fn merge(&self, other: &Self) -> Self {
        let duration = self.duration.max(other.duration);
        let mut out = Self::empty(duration);
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let take_self = j >= other.len() || (i < self.len() && self.tags[i] <= other.tags[j]);
            let (src, k) = if take_self { (self, &mut i) } else { (other, &mut j) };
            let mut t = src.tags[*k];
            if let Some(&prev) = out.tags.last() {
                t = t.max(prev + 1);
            }
            if t < duration {
                out.tags.push(t);
                out.polarization.push(src.polarization[*k]);
                out.bit.push(src.bit[*k]);
            }
            *k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSplitterSpec {
    /// Transmitted share of the surviving photons.
    pub ratio: f64,
    #[serde(default)]
    pub loss: Loss,
}

/// Each tag survives `loss`, then transmits with probability `ratio`.
pub fn bs_split(
    input: &PolarizedTagSeries,
    spec: &BeamSplitterSpec,
    rng: &mut RandomStream,
) -> Result<(PolarizedTagSeries, PolarizedTagSeries)> {
    if !(spec.ratio > 0.0 && spec.ratio < 1.0) {
        return Err(Error::param("ratio", format!("{} outside (0, 1)", spec.ratio)));
    }
    let survive = 1.0 - spec.loss.check("loss")?;
    Ok(input.route(|_| {
        if survive < 1.0 && !rng.bernoulli(survive) {
            return None;
        }
        Some(rng.bernoulli(spec.ratio))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbsSpec {
    /// Power extinction ratio, e.g. 1000 for 1000:1.
    pub extinction_ratio: f64,
    #[serde(default)]
    pub loss: Loss,
}

impl PbsSpec {
    /// Probability that a surviving photon of this polarization transmits.
    pub fn transmit_probability(&self, p: Polarization) -> f64 {
        let leak = 1.0 / self.extinction_ratio;
        match p {
            Polarization::H => 1.0 - leak,
            Polarization::V => leak,
            Polarization::D | Polarization::A => 0.5,
        }
    }
}

/// H-transmitting polarizing splitter. Outputs are relabelled H and V.
pub fn pbs_split(
    input: &PolarizedTagSeries,
    spec: &PbsSpec,
    rng: &mut RandomStream,
) -> Result<(PolarizedTagSeries, PolarizedTagSeries)> {
    if !(spec.extinction_ratio > 1.0) {
        return Err(Error::param("extinction_ratio", format!("{} must exceed 1", spec.extinction_ratio)));
    }
    let survive = 1.0 - spec.loss.check("loss")?;
    let (mut t, mut r) = input.route(|p| {
        if survive < 1.0 && !rng.bernoulli(survive) {
            return None;
        }
        Some(rng.bernoulli(spec.transmit_probability(p)))
    });
    t.polarization.iter_mut().for_each(|p| *p = Polarization::H);
    r.polarization.iter_mut().for_each(|p| *p = Polarization::V);
    Ok((t, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwpSpec {
    pub angle_deg: f64,
    /// Mount least count; the axis error has σ = least_count / 2.
    pub least_count_deg: f64,
    #[serde(default)]
    pub loss: Loss,
}

impl HwpSpec {
    /// Axis error for one run.
    pub fn sample_error(&self, rng: &mut RandomStream) -> f64 {
        rng.normal(0.0, self.least_count_deg / 2.0)
    }
}

/// Half-wave plate with a fixed axis error `error_deg`.
///
/// The ideal output label is kept with probability cos²(2ε) and replaced by
/// its orthogonal partner otherwise.
pub fn hwp_project(
    input: &PolarizedTagSeries,
    spec: &HwpSpec,
    error_deg: f64,
    rng: &mut RandomStream,
) -> Result<PolarizedTagSeries> {
    if !(spec.least_count_deg > 0.0) {
        return Err(Error::param("least_count_deg", "must be > 0"));
    }
    let survive = 1.0 - spec.loss.check("loss")?;
    let leak = (2.0 * error_deg.to_radians()).sin().powi(2);
    let map: Vec<Polarization> = [Polarization::H, Polarization::D, Polarization::V, Polarization::A]
        .iter()
        .map(|p| p.reflect_about(spec.angle_deg))
        .collect::<Result<_>>()?;
    let mut out = input.attenuate(survive, rng);
    for p in out.polarization.iter_mut() {
        let ideal = map[p.index() as usize];
        *p = if leak > 0.0 && rng.bernoulli(leak) { ideal.orthogonal() } else { ideal };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default)]
    pub insertion_loss: Loss,
    /// Passband transmission fraction.
    pub transmission: f64,
}

pub fn filter_transmit(input: &PolarizedTagSeries, spec: &FilterSpec, rng: &mut RandomStream) -> Result<PolarizedTagSeries> {
    if !(0.0..=1.0).contains(&spec.transmission) {
        return Err(Error::param("transmission", format!("{} outside [0, 1]", spec.transmission)));
    }
    let survive = spec.transmission * (1.0 - spec.insertion_loss.check("insertion_loss")?);
    Ok(input.attenuate(survive, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibreSpec {
    pub length_m: f64,
    /// Lost fraction per metre.
    #[serde(default)]
    pub loss_per_m: f64,
    #[serde(default)]
    pub mating_loss: Loss,
}

impl FibreSpec {
    pub fn survival(&self) -> Result<f64> {
        if !(self.length_m >= 0.0) || !(0.0..1.0).contains(&self.loss_per_m) {
            return Err(Error::param("fibre", "length_m must be ≥ 0 and loss_per_m in [0, 1)"));
        }
        Ok((1.0 - self.mating_loss.check("mating_loss")?) * (1.0 - self.loss_per_m).powf(self.length_m))
    }

    pub fn delay_ps(&self) -> u64 {
        (self.length_m * FIBRE_GROUP_INDEX / C_M_PER_PS).round() as u64
    }
}

/// Loss plus group delay of a fibre; polarization is untouched.
pub fn fibre_transmit(input: &PolarizedTagSeries, spec: &FibreSpec, rng: &mut RandomStream) -> Result<PolarizedTagSeries> {
    Ok(input.attenuate(spec.survival()?, rng).delay(spec.delay_ps()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSpaceSpec {
    pub length_m: f64,
    #[serde(default)]
    pub loss: Loss,
}

impl FreeSpaceSpec {
    pub fn delay_ps(&self) -> u64 {
        (self.length_m / C_M_PER_PS).round() as u64
    }
}

pub fn free_space_transmit(
    input: &PolarizedTagSeries,
    spec: &FreeSpaceSpec,
    rng: &mut RandomStream,
) -> Result<PolarizedTagSeries> {
    if !(spec.length_m >= 0.0) {
        return Err(Error::param("length_m", "must be ≥ 0"));
    }
    let survive = 1.0 - spec.loss.check("loss")?;
    Ok(input.attenuate(survive, rng).delay(spec.delay_ps()))
}

/// Complex field on a uniform 1-D transverse grid centred on the axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TransverseField {
    pub samples: Vec<Complex64>,
    pub pitch_um: f64,
    pub wavelength_nm: f64,
}

impl TransverseField {
    /// Gaussian amplitude exp(−x²/w²) with a flat phase (a waist).
    pub fn gaussian(waist_um: f64, points: usize, pitch_um: f64, wavelength_nm: f64) -> Self {
        let mut f = Self { samples: vec![Complex64::new(0.0, 0.0); points], pitch_um, wavelength_nm };
        for i in 0..points {
            let x = f.x(i);
            f.samples[i] = Complex64::new((-(x * x) / (waist_um * waist_um)).exp(), 0.0);
        }
        f
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Position of sample `i` in µm.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.samples.len() / 2) as f64) * self.pitch_um
    }

    pub fn half_width_um(&self) -> f64 {
        (self.samples.len() / 2) as f64 * self.pitch_um
    }

    /// Σ|E|²·pitch.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|e| e.norm_sqr()).sum::<f64>() * self.pitch_um
    }

    /// 1/e² intensity radius from the second moment, exact for Gaussians.
    pub fn beam_radius_um(&self) -> f64 {
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (i, e) in self.samples.iter().enumerate() {
            let (x, w) = (self.x(i), e.norm_sqr());
            m0 += w;
            m1 += w * x;
            m2 += w * x * x;
        }
        let mean = m1 / m0;
        2.0 * (m2 / m0 - mean * mean).sqrt()
    }

    fn edge_fraction(&self) -> f64 {
        let n = self.samples.len();
        let band = (n / 20).max(1);
        let edge: f64 = self.samples[..band].iter().chain(&self.samples[n - band..]).map(|e| e.norm_sqr()).sum();
        let total: f64 = self.samples.iter().map(|e| e.norm_sqr()).sum();
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }
}

/// Power fraction allowed in the outer 5% bands after propagation.
pub const ESCAPE_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensSpec {
    pub focal_length_mm: f64,
    /// Clear aperture diameter.
    pub aperture_mm: f64,
    #[serde(default)]
    pub material_loss: Loss,
}

/// Thin lens: exp(−iπx²/(λf)) inside the aperture, zero outside.
pub fn lens_transform(field: &TransverseField, spec: &LensSpec) -> Result<TransverseField> {
    if !(spec.aperture_mm > 0.0) {
        return Err(Error::param("aperture_mm", "must be > 0"));
    }
    let amp = (1.0 - spec.material_loss.check("material_loss")?).sqrt();
    let lambda_um = field.wavelength_nm * 1e-3;
    let f_um = spec.focal_length_mm * 1e3;
    let half_ap = spec.aperture_mm * 1e3 / 2.0;
    if f_um.is_finite() {
        let edge = half_ap.min(field.half_width_um());
        let limit = lambda_um * f_um.abs() / (2.0 * edge);
        if field.pitch_um > limit {
            return Err(Error::Aliasing { pitch_um: field.pitch_um, limit_um: limit });
        }
    }
    let mut out = field.clone();
    for i in 0..out.len() {
        let x = out.x(i);
        if x.abs() > half_ap {
            out.samples[i] = Complex64::new(0.0, 0.0);
        } else if f_um.is_finite() {
            out.samples[i] *= Complex64::from_polar(amp, -PI * x * x / (lambda_um * f_um));
        } else {
            out.samples[i] *= amp;
        }
    }
    Ok(out)
}

/// Paraxial free-space propagation by the angular-spectrum method with the
/// Fresnel transfer function exp(−iπλz·f_x²).
pub fn propagate(field: &TransverseField, distance_mm: f64) -> Result<TransverseField> {
    if !(distance_mm >= 0.0) {
        return Err(Error::param("distance_mm", "must be ≥ 0"));
    }
    if distance_mm == 0.0 {
        return Ok(field.clone());
    }
    let n = field.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // Shift so the optical axis sits at index 0 for the FFT.
    let mut buf: Vec<Complex64> = field.samples.clone();
    buf.rotate_left(n / 2);
    fwd.process(&mut buf);
    let lambda_um = field.wavelength_nm * 1e-3;
    let z_um = distance_mm * 1e3;
    let df = 1.0 / (n as f64 * field.pitch_um);
    for (k, v) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let fx = kk * df;
        *v *= Complex64::from_polar(1.0 / n as f64, -PI * lambda_um * z_um * fx * fx);
    }
    inv.process(&mut buf);
    buf.rotate_right(n / 2);
    let out = TransverseField { samples: buf, pitch_um: field.pitch_um, wavelength_nm: field.wavelength_nm };
    let edge = out.edge_fraction();
    if edge > ESCAPE_LIMIT {
        return Err(Error::WindowEscape { edge_fraction: edge });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerSpec {
    pub mode_field_radius_um: f64,
    /// Positioner least count; misalignment has σ = least_count / 2.
    pub least_count_um: f64,
    #[serde(default)]
    pub coupling_loss: Loss,
}

impl CouplerSpec {
    pub fn sample_offset(&self, rng: &mut RandomStream) -> f64 {
        rng.normal(0.0, self.least_count_um / 2.0)
    }
}

/// Normalised overlap of the field with the fibre mode exp(−(x−δ)²/w²).
pub fn coupling_efficiency(field: &TransverseField, mode_field_radius_um: f64, offset_um: f64, coupling_loss: f64) -> f64 {
    let w2 = mode_field_radius_um * mode_field_radius_um;
    let mut overlap = Complex64::new(0.0, 0.0);
    let (mut pe, mut pm) = (0.0, 0.0);
    for (i, e) in field.samples.iter().enumerate() {
        let d = field.x(i) - offset_um;
        let m = (-(d * d) / w2).exp();
        overlap += e * m;
        pe += e.norm_sqr();
        pm += m * m;
    }
    if pe == 0.0 || pm == 0.0 {
        return 0.0;
    }
    (overlap.norm_sqr() / (pe * pm)).min(1.0) * (1.0 - coupling_loss)
}

/// Coupling efficiency with a misalignment drawn for this run.
pub fn fibre_couple(field: &TransverseField, spec: &CouplerSpec, rng: &mut RandomStream) -> Result<f64> {
    if !(spec.mode_field_radius_um > 0.0) {
        return Err(Error::param("mode_field_radius_um", "must be > 0"));
    }
    if !(spec.least_count_um > 0.0) {
        return Err(Error::param("least_count_um", "must be > 0"));
    }
    let loss = spec.coupling_loss.check("coupling_loss")?;
    let delta = spec.sample_offset(rng);
    Ok(coupling_efficiency(field, spec.mode_field_radius_um, delta, loss))
}
