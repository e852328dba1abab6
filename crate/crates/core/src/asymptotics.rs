//! Growth classification of scalar ε-nets.
//!
//! A net `ε ↦ v(ε)` is sampled on a geometric [`EpsilonGrid`] and tested,
//! in order, for negligibility up to a fixed order, logarithmic growth, and
//! power-law moderateness.

use crate::error::{Error, Result};

/// Geometric sequence `ε_j = eps_start * ratio^j`, `j = 0..count`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonGrid {
    eps_start: f64,
    ratio: f64,
    count: usize,
}

impl EpsilonGrid {
    pub fn new(eps_start: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(eps_start > 0.0 && eps_start <= 1.0) {
            return Err(Error::InvalidGrid(format!("eps_start must lie in (0, 1], got {eps_start}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidGrid(format!("ratio must lie in (0, 1), got {ratio}")));
        }
        if count < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4 points, got {count}")));
        }
        let last = eps_start * ratio.powi(count as i32 - 1);
        if last <= 0.0 {
            return Err(Error::InvalidGrid("grid underflows to zero".into()));
        }
        Ok(Self { eps_start, ratio, count })
    }

    pub fn eps_start(&self) -> f64 {
        self.eps_start
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.eps_start * self.ratio.powi(j as i32)).collect()
    }
}

impl Default for EpsilonGrid {
    /// `ε_j = 2^-j`, `j = 4..=19`.
    fn default() -> Self {
        Self { eps_start: 2f64.powi(-4), ratio: 0.5, count: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Maximum fit residual (in natural-log units) accepted as a power law.
    pub slope_tol: f64,
    /// Highest order `p` for which `ε^-p |v(ε)|` must decay.
    pub p_max: u32,
    /// Allowed drift of `|v(ε)| / |ln ε|` relative to its first-grid value.
    pub log_ratio_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { slope_tol: 0.05, p_max: 10, log_ratio_tol: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    /// Power-law growth `O(ε^-q)` with the fitted exponent (may be negative).
    Moderate(f64),
    /// `Θ(|ln ε|)` growth on the grid.
    LogGrowth,
    /// `ε^-p |v| -> 0` passes for every `p <= p_max`.
    NegligibleUpTo(u32),
    Indeterminate,
}

impl Verdict {
    /// Short label used in reports, e.g. `Moderate(2.9999)`.
    pub fn label(&self) -> String {
        match self {
            Verdict::Moderate(q) => format!("Moderate({q:.4})"),
            Verdict::LogGrowth => "LogGrowth".into(),
            Verdict::NegligibleUpTo(p) => format!("NegligibleUpTo({p})"),
            Verdict::Indeterminate => "Indeterminate".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Least-squares exponent of `|v|` against `1/ε`, when at least four
    /// samples are nonzero.
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    /// Fitted constant `C` in `|v| ≈ C ε^-q`.
    pub constant: Option<f64>,
    /// `max |v| / |ln ε|` over the grid.
    pub log_ratio_max: f64,
    /// Every sample was exactly zero.
    pub all_zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthClass {
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// Evaluates the net on every grid point, rejecting non-finite values.
pub fn sample<F>(net: F, grid: &EpsilonGrid) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    grid.values()
        .into_iter()
        .map(|eps| {
            let v = net(eps);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::non_finite(format!("net at eps = {eps:e}")))
            }
        })
        .collect()
}

/// Least-squares fit of `ln|v|` against `ln(1/ε)`, dropping zero samples.
pub fn fit_exponent(eps: &[f64], values: &[f64]) -> Result<ExponentFit> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::non_finite(format!("sample {v}")));
    }
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(_, v)| **v != 0.0)
        .map(|(e, v)| ((1.0 / e).ln(), v.abs().ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientSamples { found: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts.iter().map(|p| (p.1 - intercept - slope * p.0).abs()).fold(0.0, f64::max);
    Ok(ExponentFit { slope, intercept, residual })
}

/// `(slope, residual)` of the log-log fit of the net over the grid.
pub fn estimate_exponent<F>(net: F, grid: &EpsilonGrid) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let values = sample(net, grid)?;
    let fit = fit_exponent(&grid.values(), &values)?;
    Ok((fit.slope, fit.residual))
}

pub fn classify<F>(net: F, grid: &EpsilonGrid, opts: &ClassifyOptions) -> Result<GrowthClass>
where
    F: Fn(f64) -> f64,
{
    let values = sample(net, grid)?;
    classify_samples(&grid.values(), &values, opts)
}

/// Classifies pre-computed samples `values[j] = v(eps[j])`.
pub fn classify_samples(eps: &[f64], values: &[f64], opts: &ClassifyOptions) -> Result<GrowthClass> {
    if eps.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: eps.len(), got: values.len() });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::non_finite(format!("sample {v}")));
    }
    if eps.len() < 4 {
        return Err(Error::InsufficientSamples { found: eps.len() });
    }

    let fit = fit_exponent(eps, values).ok();
    let ratios: Vec<f64> = eps.iter().zip(values).map(|(e, v)| v.abs() / e.ln().abs()).collect();
    let diagnostics = Diagnostics {
        slope: fit.map(|f| f.slope),
        residual: fit.map(|f| f.residual),
        constant: fit.map(|f| f.intercept.exp()),
        log_ratio_max: ratios.iter().copied().fold(0.0, f64::max),
        all_zero: values.iter().all(|v| *v == 0.0),
    };
    let done = |verdict| Ok(GrowthClass { verdict, diagnostics });

    if is_negligible(eps, values, opts.p_max) {
        return done(Verdict::NegligibleUpTo(opts.p_max));
    }
    if is_log_growth(&ratios, opts.log_ratio_tol) {
        return done(Verdict::LogGrowth);
    }
    match fit {
        Some(f) if f.residual <= opts.slope_tol => done(Verdict::Moderate(f.slope)),
        _ => done(Verdict::Indeterminate),
    }
}

/// For each `p <= p_max`, `ε_j^-p |v_j|` is non-increasing along the grid
/// and below one at its last point. Computed in the log domain.
fn is_negligible(eps: &[f64], values: &[f64], p_max: u32) -> bool {
    let log_abs: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    (0..=p_max).all(|p| {
        let scaled: Vec<f64> = eps
            .iter()
            .zip(&log_abs)
            .map(|(e, lv)| if *lv == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lv - p as f64 * e.ln() })
            .collect();
        let non_increasing = scaled.windows(2).all(|w| w[1] <= w[0]);
        non_increasing && *scaled.last().unwrap() < 0.0
    })
}

/// `r_j = |v_j| / |ln ε_j|` stays within a factor `tol` of `r_0` in both
/// directions and varies by at most 2x over the last half of the grid.
fn is_log_growth(ratios: &[f64], tol: f64) -> bool {
    let r0 = ratios[0];
    if r0 <= 0.0 {
        return false;
    }
    if ratios.iter().any(|r| *r > tol * r0 || *r < r0 / tol) {
        return false;
    }
    let tail = &ratios[ratios.len() / 2..];
    let max = tail.iter().copied().fold(f64::MIN, f64::max);
    let min = tail.iter().copied().fold(f64::MAX, f64::min);
    min > 0.0 && max / min <= 2.0
}
