//! Type-II collinear degenerate down-conversion in a periodically poled crystal.
//!
//! Wavelengths are in nm at the API and converted to µm for the dispersion
//! formulas. Temperatures are in °C, wave-vector mismatch in µm⁻¹.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonics::Polarization;

/// Speed of light in µm/fs.
pub const C_UM_PER_FS: f64 = 0.299_792_458;
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
pub const C_M_PER_S: f64 = 299_792_458.0;

/// Dispersion formula of one crystal axis (λ in µm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SellmeierForm {
    /// n² = A + B/(1 − C/λ²) − D·λ²
    OnePole { a: f64, b: f64, c: f64, d: f64 },
    /// n² = A + B/(1 − C/λ²) − D/(1 − E/λ²) − F·λ²
    TwoPole { a: f64, b: f64, c: f64, d: f64, e: f64, f: f64 },
}

/// Sellmeier base plus thermal correction for one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierCoefficients {
    pub dispersion: SellmeierForm,
    /// n1(λ) = Σ a_m / λ^m, first-order temperature coefficient.
    pub thermal_n1: Vec<f64>,
    /// n2(λ) = Σ b_m / λ^m, second-order temperature coefficient.
    pub thermal_n2: Vec<f64>,
    /// Inclusive validity range in µm.
    pub valid_um: [f64; 2],
}

fn poly_inv(coeffs: &[f64], l: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc / l + c)
}

impl SellmeierCoefficients {
    /// Refractive index at the reference temperature.
    pub fn base_index(&self, l_um: f64) -> f64 {
        let l2 = l_um * l_um;
        let n2 = match self.dispersion {
            SellmeierForm::OnePole { a, b, c, d } => a + b / (1.0 - c / l2) - d * l2,
            SellmeierForm::TwoPole { a, b, c, d, e, f } => a + b / (1.0 - c / l2) - d / (1.0 - e / l2) - f * l2,
        };
        n2.sqrt()
    }

    pub fn n1(&self, l_um: f64) -> f64 {
        poly_inv(&self.thermal_n1, l_um)
    }

    pub fn n2(&self, l_um: f64) -> f64 {
        poly_inv(&self.thermal_n2, l_um)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisMapping {
    pub pump: String,
    pub signal: String,
    pub idler: String,
}

/// Crystal data file contents: poling, thermal expansion, dispersion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalData {
    pub name: String,
    pub poling_period_um: f64,
    pub reference_temperature_c: f64,
    /// Linear thermal expansion of the poling period, 1/°C.
    pub alpha_per_c: f64,
    /// Quadratic thermal expansion of the poling period, 1/°C².
    pub beta_per_c2: f64,
    pub axes: AxisMapping,
    pub sellmeier: BTreeMap<String, SellmeierCoefficients>,
}

impl CrystalData {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let data: CrystalData =
            toml::from_str(text).map_err(|e| Error::ConfigParse { path: path.to_path_buf(), reason: e.to_string() })?;
        data.validate().map_err(Error::ConfigInvalid)?;
        Ok(data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if !(self.poling_period_um > 0.0) {
            errs.push(format!("poling_period_um must be > 0, got {}", self.poling_period_um));
        }
        for (role, axis) in [("pump", &self.axes.pump), ("signal", &self.axes.signal), ("idler", &self.axes.idler)] {
            if !self.sellmeier.contains_key(axis) {
                errs.push(format!("axes.{role} = '{axis}' has no [sellmeier.{axis}] table"));
            }
        }
        for (name, s) in &self.sellmeier {
            if !(s.valid_um[0] > 0.0 && s.valid_um[0] < s.valid_um[1]) {
                errs.push(format!("sellmeier.{name}.valid_um must be an increasing positive pair"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// A crystal of given length built from a data file.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalSpec {
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub reference_temperature_c: f64,
    pub alpha_per_c: f64,
    pub beta_per_c2: f64,
    pub pump_axis: SellmeierCoefficients,
    pub signal_axis: SellmeierCoefficients,
    pub idler_axis: SellmeierCoefficients,
}

impl CrystalSpec {
    pub fn new(data: &CrystalData, length_mm: f64) -> Result<Self> {
        if !(length_mm > 0.0) {
            return Err(Error::param("length_mm", format!("must be > 0, got {length_mm}")));
        }
        data.validate().map_err(Error::ConfigInvalid)?;
        let axis = |k: &String| data.sellmeier[k].clone();
        Ok(Self {
            length_mm,
            poling_period_um: data.poling_period_um,
            reference_temperature_c: data.reference_temperature_c,
            alpha_per_c: data.alpha_per_c,
            beta_per_c2: data.beta_per_c2,
            pump_axis: axis(&data.axes.pump),
            signal_axis: axis(&data.axes.signal),
            idler_axis: axis(&data.axes.idler),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub wavelength_nm: f64,
    pub power_mw: f64,
    pub waist_um: f64,
    pub polarization: Polarization,
}

impl PumpSpec {
    /// Pump photon flux N_p = P·λ/(h·c), photons/s.
    pub fn photon_flux(&self) -> f64 {
        self.power_mw * 1e-3 * self.wavelength_nm * 1e-9 / (PLANCK_J_S * C_M_PER_S)
    }

    /// Angular frequency in rad/fs.
    pub fn omega(&self) -> f64 {
        omega_of_nm(self.wavelength_nm)
    }
}

pub fn omega_of_nm(wavelength_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_UM_PER_FS / (wavelength_nm * 1e-3)
}

pub fn nm_of_omega(omega: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_UM_PER_FS / omega * 1e3
}

/// n(λ, T) = n(λ, T₀) + n1(λ)(T − T₀) + n2(λ)(T − T₀)².
pub fn refractive_index(coeffs: &SellmeierCoefficients, wavelength_nm: f64, temperature_c: f64, t0_c: f64) -> Result<f64> {
    let l = wavelength_nm * 1e-3;
    let [lo, hi] = coeffs.valid_um;
    if !(l >= lo && l <= hi) {
        return Err(Error::WavelengthOutOfRange { wavelength_um: l, min_um: lo, max_um: hi });
    }
    let dt = temperature_c - t0_c;
    Ok(coeffs.base_index(l) + coeffs.n1(l) * dt + coeffs.n2(l) * dt * dt)
}

/// Λ(T) = Λ₀{1 + α(T − T₀) + β(T − T₀)²}, µm.
pub fn poling_period(crystal: &CrystalSpec, temperature_c: f64) -> f64 {
    let dt = temperature_c - crystal.reference_temperature_c;
    crystal.poling_period_um * (1.0 + crystal.alpha_per_c * dt + crystal.beta_per_c2 * dt * dt)
}

/// Relative tolerance on 1/λp = 1/λs + 1/λi.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

/// Collinear wave-vector mismatch Δk = k_p − k_s − k_i − 2π/Λ(T), µm⁻¹.
pub fn phase_mismatch(
    crystal: &CrystalSpec,
    pump: &PumpSpec,
    signal_nm: f64,
    idler_nm: f64,
    temperature_c: f64,
) -> Result<f64> {
    let residual = 1.0 / pump.wavelength_nm - 1.0 / signal_nm - 1.0 / idler_nm;
    if residual.abs() > ENERGY_TOLERANCE / pump.wavelength_nm {
        return Err(Error::EnergyConservation { residual });
    }
    let t0 = crystal.reference_temperature_c;
    let np = refractive_index(&crystal.pump_axis, pump.wavelength_nm, temperature_c, t0)?;
    let ns = refractive_index(&crystal.signal_axis, signal_nm, temperature_c, t0)?;
    let ni = refractive_index(&crystal.idler_axis, idler_nm, temperature_c, t0)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let k = |n: f64, nm: f64| two_pi * n / (nm * 1e-3);
    Ok(k(np, pump.wavelength_nm) - k(ns, signal_nm) - k(ni, idler_nm) - two_pi / poling_period(crystal, temperature_c))
}

/// Degenerate Δk(T) at λs = λi = 2λp.
pub fn degenerate_mismatch(crystal: &CrystalSpec, pump: &PumpSpec, temperature_c: f64) -> Result<f64> {
    let l = 2.0 * pump.wavelength_nm;
    phase_mismatch(crystal, pump, l, l, temperature_c)
}

pub const SEARCH_BRACKET_C: (f64, f64) = (0.0, 200.0);
pub const TEMPERATURE_TOLERANCE_C: f64 = 0.01;

/// Degenerate phase-matching temperature by bisection on [0, 200] °C.
pub fn phase_matching_temperature(crystal: &CrystalSpec, pump: &PumpSpec) -> Result<f64> {
    let (mut lo, mut hi) = SEARCH_BRACKET_C;
    let f = |t| degenerate_mismatch(crystal, pump, t);
    let flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoRootInBracket { lo, hi });
    }
    let neg_lo = flo < 0.0;
    while hi - lo > TEMPERATURE_TOLERANCE_C {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Signal angular-frequency grid in rad/fs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    /// Half width around degeneracy, in nm of signal wavelength.
    pub half_width_nm: f64,
    /// Odd, so that degeneracy is a sample.
    pub points: usize,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self { half_width_nm: 6.0, points: 4001 }
    }
}

/// ψ(ω_s) sampled on a uniform grid; ω_i = ω_p − ω_s.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAmplitude {
    pub omega_s: Vec<f64>,
    pub psi: Vec<f64>,
    pub step: f64,
}

impl JointAmplitude {
    pub fn intensity(&self) -> impl Iterator<Item = f64> + '_ {
        self.psi.iter().map(|p| p * p)
    }

    /// ∫|ψ|² dω_s by the trapezoidal rule.
    pub fn integral(&self) -> f64 {
        let n = self.psi.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.intensity().sum();
        let ends = 0.5 * (self.psi[0].powi(2) + self.psi[n - 1].powi(2));
        (inner - ends) * self.step
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.psi.iter().enumerate() {
            if p * p > self.psi[best] * self.psi[best] {
                best = i;
            }
        }
        best
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// ψ(ω_s) = L · sinc(Δk(ω_s, ω_p − ω_s) · L / 2), L in mm.
///
/// The amplitude carries a factor L so that the integrated pair probability
/// grows linearly with crystal length.
pub fn joint_amplitude(crystal: &CrystalSpec, pump: &PumpSpec, temperature_c: f64, grid: &SpectralGrid) -> Result<JointAmplitude> {
    mismatch_amplitude(crystal.length_mm, grid, pump, |ls, li| phase_mismatch(crystal, pump, ls, li, temperature_c))
}

fn mismatch_amplitude<F>(length_mm: f64, grid: &SpectralGrid, pump: &PumpSpec, dk: F) -> Result<JointAmplitude>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    if grid.points < 3 || grid.points.is_multiple_of(2) {
        return Err(Error::param("points", "spectral grid needs an odd count of at least 3"));
    }
    let wp = pump.omega();
    let wd = 0.5 * wp;
    let ld = 2.0 * pump.wavelength_nm;
    let half = wd - omega_of_nm(ld + grid.half_width_nm);
    let m = (grid.points / 2) as isize;
    let step = half / m as f64;
    let l_um = length_mm * 1e3;
    let mut omega_s = Vec::with_capacity(grid.points);
    let mut psi = Vec::with_capacity(grid.points);
    for j in -m..=m {
        let ws = wd + j as f64 * step;
        let wi = wp - ws;
        // Wavelengths from frequencies keep energy conservation exact.
        let (ls, li) = (nm_of_omega(ws), nm_of_omega(wi));
        let d = dk(ls, li)?;
        omega_s.push(ws);
        psi.push(length_mm * sinc(d * l_um / 2.0));
    }
    Ok(JointAmplitude { omega_s, psi, step })
}

/// R_T = κ · N_p · ∫|ψ|² dω_s, pairs/s.
pub fn pair_generation_rate(
    crystal: &CrystalSpec,
    pump: &PumpSpec,
    temperature_c: f64,
    coupling_constant: f64,
    grid: &SpectralGrid,
) -> Result<f64> {
    if pump.power_mw == 0.0 {
        return Ok(0.0);
    }
    let amp = joint_amplitude(crystal, pump, temperature_c, grid)?;
    Ok(coupling_constant * pump.photon_flux() * amp.integral())
}

/// κ such that `pair_generation_rate` equals `target_rate_hz` for this
/// reference crystal and pump.
pub fn calibrate_coupling_constant(
    crystal: &CrystalSpec,
    pump: &PumpSpec,
    temperature_c: f64,
    grid: &SpectralGrid,
    target_rate_hz: f64,
) -> Result<f64> {
    if !(pump.power_mw > 0.0) {
        return Err(Error::param("power_mw", "reference pump power must be positive"));
    }
    let amp = joint_amplitude(crystal, pump, temperature_c, grid)?;
    Ok(target_rate_hz / (pump.photon_flux() * amp.integral()))
}
