//! Curve fits and rank statistics used by the diagnostics.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// y = amplitude·exp(−rate·x) + offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
    pub r_squared: f64,
}

impl ExpFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (-self.rate * x).exp() + self.offset
    }
}

struct ExpProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    p: DVector<f64>,
    with_offset: bool,
}

impl ExpProblem<'_> {
    fn offset(&self) -> f64 {
        if self.with_offset {
            self.p[2]
        } else {
            0.0
        }
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for ExpProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (a, b, c) = (self.p[0], self.p[1], self.offset());
        Some(DVector::from_iterator(self.x.len(), self.x.iter().zip(self.y).map(|(&x, &y)| a * (-b * x).exp() + c - y)))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let (a, b) = (self.p[0], self.p[1]);
        let mut j = DMatrix::zeros(self.x.len(), self.p.len());
        for (i, &x) in self.x.iter().enumerate() {
            let e = (-b * x).exp();
            j[(i, 0)] = e;
            j[(i, 1)] = -a * x * e;
            if self.with_offset {
                j[(i, 2)] = 1.0;
            }
        }
        Some(j)
    }
}

fn r_squared(x: &[f64], y: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(&x, &y)| (y - f(x)).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn check_xy(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::param("fit", format!("x has {} points, y has {}", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::InsufficientData(format!("{} points, need at least {min}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::param("fit", "non-finite input"));
    }
    Ok(())
}

/// Log-linear least squares on the positive points, used as the starting
/// guess for the nonlinear fit.
fn log_linear(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, &y)| y > 0.0).map(|(&x, &y)| (x, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Some(((my - slope * mx).exp(), -slope))
}

fn run(x: &[f64], y: &[f64], p0: Vec<f64>, with_offset: bool) -> Result<ExpFit> {
    let problem = ExpProblem { x, y, p: DVector::from_vec(p0), with_offset };
    let (solved, report) = LevenbergMarquardt::new().minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::InsufficientData(format!("exponential fit did not converge: {:?}", report.termination)));
    }
    let mut fit = ExpFit { amplitude: solved.p[0], rate: solved.p[1], offset: solved.offset(), r_squared: 0.0 };
    if !(fit.amplitude.is_finite() && fit.rate.is_finite() && fit.offset.is_finite()) {
        return Err(Error::InsufficientData("exponential fit diverged".into()));
    }
    fit.r_squared = r_squared(x, y, |v| fit.eval(v));
    Ok(fit)
}

/// Fits y = a·exp(−b·x).
pub fn fit_exponential(x: &[f64], y: &[f64]) -> Result<ExpFit> {
    check_xy(x, y, 3)?;
    let (a, b) = log_linear(x, y).unwrap_or((y.iter().cloned().fold(0.0, f64::max), 0.0));
    run(x, y, vec![a, b], false)
}

/// Fits y = a·exp(−b·x) + c.
pub fn fit_exponential_offset(x: &[f64], y: &[f64]) -> Result<ExpFit> {
    check_xy(x, y, 4)?;
    let c0 = y[y.len() - 1];
    let span = x[x.len() - 1] - x[0];
    let rate0 = if span != 0.0 { 3.0 / span.abs() } else { 1.0 };
    let a0 = (y[0] - c0) * (rate0 * x[0]).exp();
    run(x, y, vec![a0, rate0, c0], true)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation and its two-sided p-value (t approximation).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_xy(x, y, 3)?;
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok((0.0, 1.0));
    }
    let rho = cov / (vx * vy).sqrt();
    if rho.abs() >= 1.0 {
        return Ok((rho.signum(), 0.0));
    }
    let df = n - 2.0;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::param("spearman", e.to_string()))?;
    Ok((rho, 2.0 * dist.sf(t.abs())))
}
