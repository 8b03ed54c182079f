//! Spatial decay of adoption with distance to the nearest adopter.
//!
//! Adoption outcomes are binned by distance and the binned rates are fitted
//! by weighted least squares (bin counts as weights). Each functional form
//! is fitted, and its R-squared reported, on its own scale: log rates for
//! the exponential, log-log for the power law, levels for the linear form.
//! Binned rates are fitted instead of individual outcomes with controls,
//! because only the binned fit gives a curve-level R-squared.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{min_distance_to_set, DistanceMatrix};
use crate::panel::{AdoptionPanel, TechId, Year};

/// Default bin width in km.
pub const DEFAULT_BIN_WIDTH_KM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBin {
    /// Bin midpoint.
    pub distance_km: f64,
    pub rate: f64,
    pub count: usize,
}

/// Binned adoption rate by distance, distances strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    bins: Vec<DecayBin>,
}

impl DecayCurve {
    pub fn new(bins: Vec<DecayBin>) -> Result<Self> {
        if bins.windows(2).any(|w| !(w[0].distance_km < w[1].distance_km)) {
            return Err(Error::Input("bin distances must be strictly increasing".into()));
        }
        if let Some(b) = bins.iter().find(|b| !(0.0..=1.0).contains(&b.rate) || b.count == 0) {
            return Err(Error::Input(format!("bin at {} km has rate {} and count {}", b.distance_km, b.rate, b.count)));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[DecayBin] {
        &self.bins
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayForm {
    Exponential,
    Power,
    Linear,
}

impl DecayForm {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential => "exponential",
            Self::Power => "power",
            Self::Linear => "linear",
        }
    }
}

/// Fitted decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub form: DecayForm,
    /// Decay parameter: kappa (per km) for exponential, exponent alpha for
    /// power, slope beta (per km) for linear. Positive means decaying.
    pub kappa: f64,
    pub u0: f64,
    pub r_squared: f64,
    pub kappa_stderr: f64,
    /// Boundary distance, exponential form only.
    pub d_star: Option<f64>,
    pub epsilon: Option<f64>,
    /// Bins excluded because the form is undefined there.
    pub dropped_bins: usize,
}

/// Distance beyond which spillovers fall below the fraction `epsilon`.
pub fn spatial_boundary(kappa: f64, epsilon: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa = {kappa} must be positive")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    Ok(-epsilon.ln() / kappa)
}

/// Mean outcome per distance bin; empty bins are omitted.
pub fn bin_adoption_by_distance(distances: &[f64], outcomes: &[bool], bin_width: f64) -> Result<DecayCurve> {
    if distances.len() != outcomes.len() {
        return Err(Error::Input(format!("{} distances but {} outcomes", distances.len(), outcomes.len())));
    }
    if distances.is_empty() {
        return Err(Error::Input("no observations to bin".into()));
    }
    if !(bin_width > 0.0) {
        return Err(Error::Input(format!("bin width {bin_width} must be positive")));
    }
    let mut acc: std::collections::BTreeMap<u64, (usize, usize)> = Default::default();
    for (&d, &y) in distances.iter().zip(outcomes) {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Input(format!("distance {d} is not a finite nonnegative number")));
        }
        let e = acc.entry((d / bin_width).floor() as u64).or_default();
        e.0 += 1;
        e.1 += y as usize;
    }
    let bins = acc
        .into_iter()
        .map(|(k, (n, a))| DecayBin { distance_km: (k as f64 + 0.5) * bin_width, rate: a as f64 / n as f64, count: n })
        .collect();
    DecayCurve::new(bins)
}

struct Wls {
    intercept: f64,
    slope: f64,
    r2: f64,
    slope_se: f64,
}

fn wls(x: &[f64], y: &[f64], w: &[f64]) -> Result<Wls> {
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxx += w[i] * (x[i] - xm).powi(2);
        sxy += w[i] * (x[i] - xm) * (y[i] - ym);
        syy += w[i] * (y[i] - ym).powi(2);
    }
    if !(sxx > 0.0) {
        return Err(Error::Estimation("regressor has no variation across bins".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = (0..x.len()).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    let dof = x.len() as f64 - 2.0;
    let slope_se = if dof > 0.0 { (rss / dof / sxx).sqrt() } else { f64::NAN };
    Ok(Wls { intercept, slope, r2, slope_se })
}

/// Log-linear fit of `rate = u0 exp(-kappa d)`.
pub fn fit_exponential(curve: &DecayCurve, epsilon: f64) -> Result<DecayFit> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    let kept: Vec<&DecayBin> = curve.bins.iter().filter(|b| b.rate > 0.0).collect();
    let dropped = curve.bins.len() - kept.len();
    if kept.len() < 3 {
        return Err(Error::Input(format!("exponential fit needs 3 bins with positive rate, got {}", kept.len())));
    }
    let x: Vec<f64> = kept.iter().map(|b| b.distance_km).collect();
    let y: Vec<f64> = kept.iter().map(|b| b.rate.ln()).collect();
    let w: Vec<f64> = kept.iter().map(|b| b.count as f64).collect();
    let f = wls(&x, &y, &w)?;
    let kappa = -f.slope;
    if !(kappa > 0.0) {
        return Err(Error::Estimation(format!("no decay detected (slope {})", f.slope)));
    }
    Ok(DecayFit {
        form: DecayForm::Exponential,
        kappa,
        u0: f.intercept.exp(),
        r_squared: f.r2,
        kappa_stderr: f.slope_se,
        d_star: Some(spatial_boundary(kappa, epsilon)?),
        epsilon: Some(epsilon),
        dropped_bins: dropped,
    })
}

/// Log-log fit of `rate = u0 d^(-alpha)`; bins at zero distance or zero rate are dropped.
pub fn fit_power(curve: &DecayCurve) -> Result<DecayFit> {
    let kept: Vec<&DecayBin> = curve.bins.iter().filter(|b| b.rate > 0.0 && b.distance_km > 0.0).collect();
    if kept.len() < 3 {
        return Err(Error::Input(format!("power fit needs 3 usable bins, got {}", kept.len())));
    }
    let x: Vec<f64> = kept.iter().map(|b| b.distance_km.ln()).collect();
    let y: Vec<f64> = kept.iter().map(|b| b.rate.ln()).collect();
    let w: Vec<f64> = kept.iter().map(|b| b.count as f64).collect();
    let f = wls(&x, &y, &w)?;
    Ok(DecayFit {
        form: DecayForm::Power,
        kappa: -f.slope,
        u0: f.intercept.exp(),
        r_squared: f.r2,
        kappa_stderr: f.slope_se,
        d_star: None,
        epsilon: None,
        dropped_bins: curve.bins.len() - kept.len(),
    })
}

/// Level fit of `rate = u0 - beta d`.
pub fn fit_linear(curve: &DecayCurve) -> Result<DecayFit> {
    if curve.bins.len() < 3 {
        return Err(Error::Input(format!("linear fit needs 3 bins, got {}", curve.bins.len())));
    }
    let x: Vec<f64> = curve.bins.iter().map(|b| b.distance_km).collect();
    let y: Vec<f64> = curve.bins.iter().map(|b| b.rate).collect();
    let w: Vec<f64> = curve.bins.iter().map(|b| b.count as f64).collect();
    let f = wls(&x, &y, &w)?;
    Ok(DecayFit {
        form: DecayForm::Linear,
        kappa: -f.slope,
        u0: f.intercept,
        r_squared: f.r2,
        kappa_stderr: f.slope_se,
        d_star: None,
        epsilon: None,
        dropped_bins: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternativeFits {
    pub exponential: DecayFit,
    pub power: DecayFit,
    pub linear: DecayFit,
    /// Highest R-squared; ties go to the exponential, then power.
    pub best: DecayForm,
}

/// Fit all three forms and pick the best by R-squared on each form's own scale.
pub fn fit_alternatives(curve: &DecayCurve, epsilon: f64) -> Result<AlternativeFits> {
    let exponential = fit_exponential(curve, epsilon)?;
    let power = fit_power(curve)?;
    let linear = fit_linear(curve)?;
    let mut best = (DecayForm::Exponential, exponential.r_squared);
    for f in [&power, &linear] {
        if f.r_squared > best.1 {
            best = (f.form, f.r_squared);
        }
    }
    Ok(AlternativeFits { exponential, power, linear, best: best.0 })
}

/// Pooled (distance, outcome) sample over `years`: for each year `t`, the
/// firms not yet adopted at `t - 1`, their distance to the nearest adopter
/// at `t - 1`, and whether they adopted by `t`. Years without prior
/// adopters are skipped and returned separately.
pub fn decay_sample(
    panel: &AdoptionPanel,
    dm: &DistanceMatrix,
    tech: TechId,
    years: std::ops::RangeInclusive<Year>,
) -> Result<(Vec<f64>, Vec<bool>, Vec<Year>)> {
    if dm.n() != panel.n_firms() {
        return Err(Error::Input("distance matrix and panel disagree on firm count".into()));
    }
    let mut d = Vec::new();
    let mut y = Vec::new();
    let mut skipped = Vec::new();
    for t in years {
        if !panel.covers(t) || !panel.covers(t - 1) {
            return Err(Error::Input(format!("panel does not cover {}..={t}", t - 1)));
        }
        let prev = panel.year_slice(tech, t - 1);
        if !prev.iter().any(|&a| a) {
            skipped.push(t);
            continue;
        }
        let cur = panel.year_slice(tech, t);
        let mins = min_distance_to_set(dm, prev, false);
        for i in 0..panel.n_firms() {
            if !prev[i] {
                d.push(mins[i].expect("nonempty adopter set"));
                y.push(cur[i]);
            }
        }
    }
    Ok((d, y, skipped))
}
