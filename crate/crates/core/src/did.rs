//! Event-study estimators: traditional, spatial-adjusted and network-adjusted
//! difference-in-differences with fixed effects, plus lead-based pre-trend
//! tests, placebo timing and the dual-channel R² comparison.
//!
//! Every estimator first builds a [`Design`]: one row per firm-year with the
//! outcome, regressors and observation weight. Fitting a design on a list of
//! firm indices (with repeats) is what the cluster bootstrap resamples, so
//! regressors such as the nearest-adopter distance are computed once on the
//! original data and travel with their firm.
//!
//! Outcomes are adoption indicators in `{0, 1}` (linear probability model);
//! effects are reported in percentage points.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::bootstrap::{cluster_bootstrap, cluster_bootstrap_many, BootstrapResult};
use crate::error::{Error, Result};
use crate::geo::{min_distance_to_set, DistanceMatrix};
use crate::panel::{AdoptionPanel, TechId, Year};

const DEMEAN_TOL: f64 = 1e-12;
const DEMEAN_MAX_ITER: usize = 100_000;

/// Event timing and the pre/post windows around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSpec {
    pub event_year: Year,
    pub pre_start: Year,
    pub pre_end: Year,
    pub post_start: Year,
    pub post_end: Year,
}

impl Default for EventSpec {
    fn default() -> Self {
        Self { event_year: 2020, pre_start: 2017, pre_end: 2019, post_start: 2020, post_end: 2023 }
    }
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pre_start > self.pre_end || self.post_start > self.post_end {
            return Err(Error::Input(format!("empty event window in {self:?}")));
        }
        if self.pre_end >= self.event_year || self.post_start != self.event_year {
            return Err(Error::Input(format!(
                "pre window must end before {} and post window start at it",
                self.event_year
            )));
        }
        Ok(())
    }

    fn years(&self) -> impl Iterator<Item = Year> + '_ {
        (self.pre_start..=self.pre_end).chain(self.post_start..=self.post_end)
    }

    fn check_covered(&self, panel: &AdoptionPanel) -> Result<()> {
        self.validate()?;
        if !panel.covers(self.pre_start) || !panel.covers(self.post_end) {
            return Err(Error::Input(format!(
                "panel {}..={} does not cover window {}..={}",
                panel.first_year(),
                panel.last_year(),
                self.pre_start,
                self.post_end
            )));
        }
        Ok(())
    }

    /// Window for a placebo event at `year` with the same lengths as `self`,
    /// truncated so it never spans the real event and stays inside
    /// `first..=last` (the year before the window must exist too, since the
    /// spatial regressor looks one year back). `None` when fewer than two pre
    /// years or no post year remain.
    pub fn placebo(&self, year: Year, first: Year, last: Year) -> Option<EventSpec> {
        if year == self.event_year {
            return Some(self.clone());
        }
        let pre_len = self.pre_end - self.pre_start + 1;
        let post_len = self.post_end - self.post_start + 1;
        let mut pre_start = (year - pre_len).max(first + 1);
        let mut post_end = (year + post_len - 1).min(last);
        if year < self.event_year {
            post_end = post_end.min(self.event_year - 1);
        } else {
            pre_start = pre_start.max(self.event_year);
        }
        let spec = EventSpec { event_year: year, pre_start, pre_end: year - 1, post_start: year, post_end };
        (year - pre_start >= 2 && post_end >= year).then_some(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DidMethod {
    Traditional,
    Spatial,
    Network,
}

impl DidMethod {
    pub fn name(self) -> &'static str {
        match self {
            DidMethod::Traditional => "traditional",
            DidMethod::Spatial => "spatial",
            DidMethod::Network => "network",
        }
    }
}

/// One DID estimate in percentage points. The interval is present only when
/// bootstrapped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DidEstimate {
    pub method: DidMethod,
    pub effect_pp: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_obs: usize,
}

impl DidEstimate {
    fn with_ci(mut self, b: &BootstrapResult) -> Self {
        self.ci_low = Some(b.ci_low);
        self.ci_high = Some(b.ci_high);
        self
    }

    /// True when a bootstrap interval exists and excludes zero.
    pub fn significant(&self) -> bool {
        matches!((self.ci_low, self.ci_high), (Some(lo), Some(hi)) if lo > 0.0 || hi < 0.0)
    }
}

/// Which fixed effects to sweep out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedEffects {
    Firm,
    FirmYear,
}

/// Long-format regression data, rows grouped by firm.
#[derive(Debug, Clone)]
pub struct Design {
    names: Vec<String>,
    fe: FixedEffects,
    n_years: usize,
    firm_rows: Vec<Range<usize>>,
    year: Vec<usize>,
    weight: Vec<f64>,
    y: Vec<f64>,
    /// Row-major, `names.len()` entries per row.
    x: Vec<f64>,
    /// Years dropped while building, with the reason.
    pub notes: Vec<String>,
}

/// Result of a fixed-effects weighted least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    /// Weighted residual sum of squares.
    pub rss: f64,
    /// Weighted total sum of squares of the demeaned outcome.
    pub tss: f64,
    pub n_obs: usize,
    /// Residual degrees of freedom after fixed effects and regressors.
    pub df: usize,
}

impl FeFit {
    /// Share of within variation explained by the regressors.
    pub fn within_r2(&self) -> f64 {
        if self.tss > 0.0 {
            1.0 - self.rss / self.tss
        } else {
            0.0
        }
    }
}

struct DesignBuilder {
    names: Vec<String>,
    fe: FixedEffects,
    years: Vec<Year>,
    rows: Vec<Vec<(usize, f64, f64, Vec<f64>)>>,
    notes: Vec<String>,
}

impl DesignBuilder {
    fn new(n_firms: usize, names: &[&str], fe: FixedEffects, years: Vec<Year>) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            fe,
            years,
            rows: vec![Vec::new(); n_firms],
            notes: Vec::new(),
        }
    }

    fn push(&mut self, firm: usize, year: Year, weight: f64, y: f64, x: Vec<f64>) {
        debug_assert_eq!(x.len(), self.names.len());
        let t = self.years.iter().position(|&v| v == year).expect("year in design");
        self.rows[firm].push((t, weight, y, x));
    }

    fn finish(self) -> Design {
        let p = self.names.len();
        let mut d = Design {
            names: self.names,
            fe: self.fe,
            n_years: self.years.len(),
            firm_rows: Vec::with_capacity(self.rows.len()),
            year: Vec::new(),
            weight: Vec::new(),
            y: Vec::new(),
            x: Vec::new(),
            notes: self.notes,
        };
        for rows in self.rows {
            let start = d.y.len();
            for (t, w, y, x) in rows {
                d.year.push(t);
                d.weight.push(w);
                d.y.push(y);
                d.x.extend_from_slice(&x);
            }
            d.firm_rows.push(start..d.y.len());
        }
        debug_assert_eq!(d.x.len(), d.y.len() * p);
        d
    }
}

/// Sweep firm (and optionally year) weighted means out of every column by
/// alternating projections until all group means are below tolerance.
fn demean(
    cols: &mut [Vec<f64>],
    firm: &[usize],
    n_firm: usize,
    year: Option<(&[usize], usize)>,
    w: &[f64],
) -> Result<()> {
    let group_totals = |g: &[usize], k: usize| {
        let mut t = vec![0.0; k];
        for (i, &gi) in g.iter().enumerate() {
            t[gi] += w[i];
        }
        t
    };
    let wf = group_totals(firm, n_firm);
    let wy = year.map(|(g, k)| group_totals(g, k));
    let sweep = |col: &mut [f64], g: &[usize], tot: &[f64]| -> f64 {
        let mut s = vec![0.0; tot.len()];
        for (i, &gi) in g.iter().enumerate() {
            s[gi] += w[i] * col[i];
        }
        let mut worst: f64 = 0.0;
        for (sg, &tg) in s.iter_mut().zip(tot) {
            *sg = if tg > 0.0 { *sg / tg } else { 0.0 };
            worst = worst.max(sg.abs());
        }
        for (i, &gi) in g.iter().enumerate() {
            col[i] -= s[gi];
        }
        worst
    };
    for col in cols.iter_mut() {
        let scale = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut converged = false;
        for _ in 0..DEMEAN_MAX_ITER {
            let mf = sweep(col, firm, &wf);
            let my = match (&year, &wy) {
                (Some((g, _)), Some(tot)) => sweep(col, g, tot),
                _ => 0.0,
            };
            if year.is_none() || mf.max(my) <= DEMEAN_TOL * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Estimation("fixed-effect demeaning did not converge".into()));
        }
    }
    Ok(())
}

impl Design {
    pub fn n_firms(&self) -> usize {
        self.firm_rows.len()
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Same rows with only the listed regressors.
    pub fn restrict(&self, keep: &[&str]) -> Result<Design> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|k| {
                self.names
                    .iter()
                    .position(|n| n == k)
                    .ok_or_else(|| Error::Input(format!("design has no regressor {k}")))
            })
            .collect::<Result<_>>()?;
        let p = self.names.len();
        let mut x = Vec::with_capacity(self.y.len() * idx.len());
        for r in 0..self.y.len() {
            x.extend(idx.iter().map(|&j| self.x[r * p + j]));
        }
        Ok(Design { names: idx.iter().map(|&j| self.names[j].clone()).collect(), x, ..self.clone() })
    }

    /// Fit on all firms, or on a resample given as firm indices (repeats
    /// become separate fixed-effect groups).
    pub fn fit(&self, firms: Option<&[usize]>) -> Result<FeFit> {
        let all: Vec<usize>;
        let firms = match firms {
            Some(f) => f,
            None => {
                all = (0..self.n_firms()).collect();
                &all
            }
        };
        let p = self.names.len();
        let n: usize = firms.iter().map(|&f| self.firm_rows[f].len()).sum();
        let mut group = Vec::with_capacity(n);
        let mut year = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); p + 1];
        let mut n_groups = 0;
        for &f in firms {
            let rows = self.firm_rows[f].clone();
            if rows.is_empty() {
                continue;
            }
            for r in rows {
                group.push(n_groups);
                year.push(self.year[r]);
                w.push(self.weight[r]);
                cols[0].push(self.y[r]);
                for j in 0..p {
                    cols[j + 1].push(self.x[r * p + j]);
                }
            }
            n_groups += 1;
        }
        if n == 0 {
            return Err(Error::Estimation("design has no observations".into()));
        }
        if cols[0].iter().all(|&v| v == cols[0][0]) {
            return Err(Error::Estimation(format!("outcome is constant ({}) in every row", cols[0][0])));
        }
        let raw_ss: Vec<f64> = cols.iter().map(|c| c.iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>()).collect();
        let mut years_present = vec![false; self.n_years];
        year.iter().for_each(|&t| years_present[t] = true);
        let two_way = self.fe == FixedEffects::FirmYear;
        demean(&mut cols, &group, n_groups, two_way.then_some((&year[..], self.n_years)), &w)?;

        let mut tss: f64 = cols[0].iter().zip(&w).map(|(v, wi)| wi * v * v).sum();
        // no firm changes status beyond the fixed effects: an exact fit with zero effects
        if !(tss > 1e-14 * raw_ss[0].max(1.0)) {
            cols[0].iter_mut().for_each(|v| *v = 0.0);
            tss = 0.0;
        }
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DVector::<f64>::zeros(p);
        for i in 0..n {
            for a in 0..p {
                let xa = w[i] * cols[a + 1][i];
                xty[a] += xa * cols[0][i];
                for b in 0..=a {
                    xtx[(a, b)] += xa * cols[b + 1][i];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[(b, a)] = xtx[(a, b)];
            }
            if !(xtx[(a, a)] > 1e-12 * raw_ss[a + 1].max(f64::MIN_POSITIVE)) {
                return Err(Error::Estimation(format!("regressor {} has no within variation", self.names[a])));
            }
        }
        // scale to unit diagonal before factoring so the collinearity check is unit-free
        let d: Vec<f64> = (0..p).map(|a| xtx[(a, a)].sqrt()).collect();
        let scaled = DMatrix::from_fn(p, p, |a, b| xtx[(a, b)] / (d[a] * d[b]));
        let chol = nalgebra::linalg::Cholesky::new(scaled.clone())
            .filter(|c| c.l().diagonal().iter().all(|&v| v * v > 1e-10))
            .ok_or_else(|| Error::Estimation(format!("regressors {} are collinear", self.names.join(", "))))?;
        let rhs = DVector::from_fn(p, |a, _| xty[a] / d[a]);
        let beta_s = chol.solve(&rhs);
        let coef: Vec<f64> = (0..p).map(|a| beta_s[a] / d[a]).collect();
        let mut rss = 0.0;
        for i in 0..n {
            let fit: f64 = (0..p).map(|a| coef[a] * cols[a + 1][i]).sum();
            let r = cols[0][i] - fit;
            rss += w[i] * r * r;
        }
        let absorbed = n_groups + if two_way { years_present.iter().filter(|&&b| b).count() - 1 } else { 0 };
        let df = n
            .checked_sub(absorbed + p)
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::Estimation(format!("{n} observations leave no residual degrees of freedom")))?;
        let sigma2 = rss / df as f64;
        let inv = chol.inverse();
        let se = (0..p).map(|a| (sigma2 * inv[(a, a)]).sqrt() / d[a]).collect();
        Ok(FeFit { names: self.names.clone(), coef, se, rss, tss, n_obs: n, df })
    }
}

fn check_inputs(panel: &AdoptionPanel, tech: TechId, treated: &[bool]) -> Result<()> {
    if tech >= panel.techs().len() {
        return Err(Error::Input(format!("tech index {tech} out of range")));
    }
    if treated.len() != panel.n_firms() {
        return Err(Error::Input(format!(
            "treated flags cover {} firms, panel has {}",
            treated.len(),
            panel.n_firms()
        )));
    }
    Ok(())
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Firms within `radius_km` of any seed firm (seeds included).
pub fn treated_within(dm: &DistanceMatrix, seeds: &[bool], radius_km: f64) -> Vec<bool> {
    min_distance_to_set(dm, seeds, false).into_iter().map(|d| d.is_some_and(|d| d <= radius_km)).collect()
}

/// Design for `y = a_i + g_t + delta * treated_i * post_t`.
pub fn traditional_design(panel: &AdoptionPanel, tech: TechId, spec: &EventSpec, treated: &[bool]) -> Result<Design> {
    check_inputs(panel, tech, treated)?;
    spec.check_covered(panel)?;
    let years: Vec<Year> = spec.years().collect();
    let mut b = DesignBuilder::new(panel.n_firms(), &["treated_post"], FixedEffects::FirmYear, years.clone());
    for &t in &years {
        let post = t >= spec.post_start;
        for i in 0..panel.n_firms() {
            b.push(i, t, 1.0, indicator(panel.adopted(tech, t, i)), vec![indicator(treated[i] && post)]);
        }
    }
    Ok(b.finish())
}

/// Traditional design plus the distance to the nearest other adopter in the
/// previous year, with rows weighted by `exp(-kappa_hat * d)`. Years without
/// a previous-year adopter are dropped and noted.
pub fn spatial_design(
    panel: &AdoptionPanel,
    tech: TechId,
    spec: &EventSpec,
    treated: &[bool],
    kappa_hat: f64,
    dm: &DistanceMatrix,
) -> Result<Design> {
    check_inputs(panel, tech, treated)?;
    spec.check_covered(panel)?;
    if !(kappa_hat > 0.0) {
        return Err(Error::Domain(format!("kappa_hat must be positive, got {kappa_hat}")));
    }
    if dm.n() != panel.n_firms() {
        return Err(Error::Input("distance matrix and panel disagree on firm count".into()));
    }
    let years: Vec<Year> = spec.years().collect();
    let mut b =
        DesignBuilder::new(panel.n_firms(), &["treated_post", "distance_km"], FixedEffects::FirmYear, years.clone());
    for &t in &years {
        if !panel.covers(t - 1) {
            b.notes.push(format!("{t}: no previous year in panel"));
            continue;
        }
        let prev = panel.year_slice(tech, t - 1);
        if !prev.iter().any(|&a| a) {
            b.notes.push(format!("{t}: no adopters in {}", t - 1));
            continue;
        }
        let post = t >= spec.post_start;
        let dmin = min_distance_to_set(dm, prev, true);
        for i in 0..panel.n_firms() {
            if let Some(d) = dmin[i] {
                let x = vec![indicator(treated[i] && post), d];
                b.push(i, t, (-kappa_hat * d).exp(), indicator(panel.adopted(tech, t, i)), x);
            }
        }
    }
    Ok(b.finish())
}

/// Traditional design on the outcome divided by `lambda2(t) / lambda2(base_year)`.
pub fn network_design(
    panel: &AdoptionPanel,
    tech: TechId,
    spec: &EventSpec,
    treated: &[bool],
    lambda2: &BTreeMap<Year, f64>,
    base_year: Year,
) -> Result<Design> {
    check_inputs(panel, tech, treated)?;
    spec.check_covered(panel)?;
    let base = lambda2
        .get(&base_year)
        .copied()
        .filter(|v| *v > 0.0)
        .ok_or_else(|| Error::Domain(format!("lambda2 in base year {base_year} is missing or not positive")))?;
    let years: Vec<Year> = spec.years().collect();
    let mut b = DesignBuilder::new(panel.n_firms(), &["treated_post"], FixedEffects::FirmYear, years.clone());
    for &t in &years {
        let l = lambda2
            .get(&t)
            .copied()
            .filter(|v| *v > 0.0)
            .ok_or_else(|| Error::Domain(format!("lambda2 for {t} is missing or not positive")))?;
        let post = t >= spec.post_start;
        for i in 0..panel.n_firms() {
            let y = indicator(panel.adopted(tech, t, i)) * base / l;
            b.push(i, t, 1.0, y, vec![indicator(treated[i] && post)]);
        }
    }
    Ok(b.finish())
}

fn point(design: &Design, method: DidMethod) -> Result<DidEstimate> {
    let fit = design.fit(None)?;
    Ok(DidEstimate { method, effect_pp: 100.0 * fit.coef[0], ci_low: None, ci_high: None, n_obs: fit.n_obs })
}

/// Effect of the treated-post indicator with firm and year fixed effects.
pub fn traditional_did(panel: &AdoptionPanel, tech: TechId, spec: &EventSpec, treated: &[bool]) -> Result<DidEstimate> {
    point(&traditional_design(panel, tech, spec, treated)?, DidMethod::Traditional)
}

pub fn spatial_did(
    panel: &AdoptionPanel,
    tech: TechId,
    spec: &EventSpec,
    treated: &[bool],
    kappa_hat: f64,
    dm: &DistanceMatrix,
) -> Result<DidEstimate> {
    point(&spatial_design(panel, tech, spec, treated, kappa_hat, dm)?, DidMethod::Spatial)
}

/// The rescaled outcome is continuous, not binary.
pub fn network_did(
    panel: &AdoptionPanel,
    tech: TechId,
    spec: &EventSpec,
    treated: &[bool],
    lambda2: &BTreeMap<Year, f64>,
    base_year: Year,
) -> Result<DidEstimate> {
    point(&network_design(panel, tech, spec, treated, lambda2, base_year)?, DidMethod::Network)
}

/// Point estimate with a firm-cluster percentile interval.
pub fn bootstrap_did(design: &Design, method: DidMethod, reps: usize, level: f64, seed: u64) -> Result<DidEstimate> {
    let est = point(design, method)?;
    let b = cluster_bootstrap(design.n_firms(), reps, level, seed, |idx| Ok(100.0 * design.fit(Some(idx))?.coef[0]))?;
    Ok(est.with_ci(&b))
}

/// Relative bias of the traditional estimate, `1 - spatial / traditional`.
pub fn relative_bias(traditional: f64, spatial: f64) -> f64 {
    (traditional - spatial) / traditional
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadCoefficient {
    /// Years before the event.
    pub lead: usize,
    pub year: Year,
    pub coef_pp: f64,
    pub se_pp: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrendTest {
    pub leads: Vec<LeadCoefficient>,
    pub f_stat: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
}

/// Upper tail of F(d1, d2) at `f`.
pub fn f_test_p_value(f: f64, d1: usize, d2: usize) -> Result<f64> {
    let dist = FisherSnedecor::new(d1 as f64, d2 as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(if f <= 0.0 { 1.0 } else { dist.sf(f) })
}

fn two_sided_t(t: f64, df: usize) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(2.0 * dist.sf(t.abs()))
}

/// Joint F test of lead indicators `treated * 1{t = event - k}`, `k = 1..=n_leads`.
///
/// The sample starts `n_leads + 1` years before the event (or at the pre
/// window start if earlier) so at least one pre year is the reference.
/// `outcome` maps `(firm, year)` to the dependent variable; use
/// [`adoption_outcome`] for the panel indicator.
pub fn pretrend_test_with(
    n_firms: usize,
    outcome: impl Fn(usize, Year) -> f64,
    spec: &EventSpec,
    treated: &[bool],
    n_leads: usize,
) -> Result<PretrendTest> {
    spec.validate()?;
    let pre_len = (spec.pre_end - spec.pre_start + 1) as usize;
    if n_leads == 0 || n_leads > pre_len {
        return Err(Error::Input(format!("n_leads must be in 1..={pre_len}, got {n_leads}")));
    }
    if treated.len() != n_firms {
        return Err(Error::Input("treated flags do not match firm count".into()));
    }
    let start = spec.pre_start.min(spec.event_year - n_leads as Year - 1);
    let years: Vec<Year> = (start..=spec.pre_end).chain(spec.post_start..=spec.post_end).collect();
    let mut names: Vec<String> = (1..=n_leads).map(|k| format!("lead_{k}")).collect();
    names.push("treated_post".into());
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut b = DesignBuilder::new(n_firms, &name_refs, FixedEffects::FirmYear, years.clone());
    for &t in &years {
        for i in 0..n_firms {
            let mut x: Vec<f64> =
                (1..=n_leads).map(|k| indicator(treated[i] && t == spec.event_year - k as Year)).collect();
            x.push(indicator(treated[i] && t >= spec.post_start));
            b.push(i, t, 1.0, outcome(i, t), x);
        }
    }
    let design = b.finish();
    let full = design.fit(None)?;
    let restricted = design.restrict(&["treated_post"])?.fit(None)?;
    let q = n_leads;
    let f_stat = ((restricted.rss - full.rss) / q as f64) / (full.rss / full.df as f64);
    let leads = (0..n_leads)
        .map(|k| {
            Ok(LeadCoefficient {
                lead: k + 1,
                year: spec.event_year - (k + 1) as Year,
                coef_pp: 100.0 * full.coef[k],
                se_pp: 100.0 * full.se[k],
                p_value: two_sided_t(full.coef[k] / full.se[k], full.df)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PretrendTest { leads, f_stat, df_num: q, df_den: full.df, p_value: f_test_p_value(f_stat, q, full.df)? })
}

/// Adoption indicator of `tech` as an outcome for [`pretrend_test_with`].
pub fn adoption_outcome(panel: &AdoptionPanel, tech: TechId) -> impl Fn(usize, Year) -> f64 + '_ {
    move |i, t| indicator(panel.adopted(tech, t, i))
}

pub fn pretrend_test(
    panel: &AdoptionPanel,
    tech: TechId,
    spec: &EventSpec,
    treated: &[bool],
    n_leads: usize,
) -> Result<PretrendTest> {
    check_inputs(panel, tech, treated)?;
    let start = spec.pre_start.min(spec.event_year - n_leads as Year - 1);
    if !panel.covers(start) || !panel.covers(spec.post_end) {
        return Err(Error::Input(format!("panel does not cover {start}..={}", spec.post_end)));
    }
    pretrend_test_with(panel.n_firms(), adoption_outcome(panel, tech), spec, treated, n_leads)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicEffect {
    pub year: Year,
    /// `year - event_year`.
    pub relative_year: i32,
    pub coef_pp: f64,
    pub se_pp: f64,
}

/// Year-by-year effects `treated * 1{t = year}` over the event window, with
/// the last pre year as the omitted reference (reported as zero).
pub fn dynamic_effects(
    panel: &AdoptionPanel,
    tech: TechId,
    spec: &EventSpec,
    treated: &[bool],
) -> Result<Vec<DynamicEffect>> {
    check_inputs(panel, tech, treated)?;
    spec.check_covered(panel)?;
    let years: Vec<Year> = spec.years().collect();
    let shown: Vec<Year> = years.iter().copied().filter(|&t| t != spec.pre_end).collect();
    let names: Vec<String> = shown.iter().map(|t| format!("treated_{t}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut b = DesignBuilder::new(panel.n_firms(), &name_refs, FixedEffects::FirmYear, years.clone());
    for &t in &years {
        for i in 0..panel.n_firms() {
            let x = shown.iter().map(|&s| indicator(treated[i] && s == t)).collect();
            b.push(i, t, 1.0, indicator(panel.adopted(tech, t, i)), x);
        }
    }
    let fit = b.finish().fit(None)?;
    let mut out: Vec<DynamicEffect> = shown
        .iter()
        .enumerate()
        .map(|(k, &year)| DynamicEffect {
            year,
            relative_year: year - spec.event_year,
            coef_pp: 100.0 * fit.coef[k],
            se_pp: 100.0 * fit.se[k],
        })
        .collect();
    out.push(DynamicEffect {
        year: spec.pre_end,
        relative_year: spec.pre_end - spec.event_year,
        coef_pp: 0.0,
        se_pp: 0.0,
    });
    out.sort_by_key(|e| e.year);
    Ok(out)
}

/// Inputs shared by placebo runs over several techs.
pub struct PlaceboInputs<'a> {
    pub panel: &'a AdoptionPanel,
    pub dm: &'a DistanceMatrix,
    pub treated: &'a [bool],
    /// `(tech, kappa_hat)` pairs to pool.
    pub techs: &'a [(TechId, f64)],
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboResult {
    pub year: Year,
    pub window: (Year, Year, Year),
    /// Mean over the pooled techs.
    pub traditional: DidEstimate,
    pub spatial: DidEstimate,
    pub significant: bool,
}

/// Traditional and spatial DID at each placebo year, averaged over techs,
/// with a joint firm bootstrap. Infeasible windows are skipped and listed in
/// the second return value.
pub fn placebo_test(
    inputs: &PlaceboInputs,
    actual: &EventSpec,
    years: &[Year],
) -> Result<(Vec<PlaceboResult>, Vec<Year>)> {
    let panel = inputs.panel;
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for &year in years {
        let Some(spec) = actual.placebo(year, panel.first_year(), panel.last_year()) else {
            skipped.push(year);
            continue;
        };
        let mut designs = Vec::new();
        for &(tech, kappa) in inputs.techs {
            designs.push(traditional_design(panel, tech, &spec, inputs.treated)?);
            designs.push(spatial_design(panel, tech, &spec, inputs.treated, kappa, inputs.dm)?);
        }
        let k = inputs.techs.len() as f64;
        let stat = |idx: Option<&[usize]>| -> Result<Vec<f64>> {
            let mut v = [0.0, 0.0];
            for (j, d) in designs.iter().enumerate() {
                v[j % 2] += 100.0 * d.fit(idx)?.coef[0] / k;
            }
            Ok(v.to_vec())
        };
        let n_obs = |m: usize| designs.iter().skip(m).step_by(2).map(Design::n_obs).sum();
        let b =
            cluster_bootstrap_many(panel.n_firms(), inputs.reps, inputs.level, inputs.seed, 2, |idx| stat(Some(idx)))?;
        let make = |m: usize, method| DidEstimate {
            method,
            effect_pp: b[m].point,
            ci_low: Some(b[m].ci_low),
            ci_high: Some(b[m].ci_high),
            n_obs: n_obs(m),
        };
        let traditional = make(0, DidMethod::Traditional);
        let spatial = make(1, DidMethod::Spatial);
        let significant = traditional.significant();
        out.push(PlaceboResult {
            year,
            window: (spec.pre_start, year, spec.post_end),
            traditional,
            spatial,
            significant,
        });
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualChannelR2 {
    pub r2_spatial: f64,
    pub r2_network: f64,
    pub r2_both: f64,
    /// `r2_both - max(r2_spatial, r2_network)`.
    pub improvement: f64,
    pub n_obs: usize,
}

/// Within-firm R² of adoption hazards on the spatial channel (distance to
/// the nearest previous-year adopter), the network channel (previous-year
/// adopter-weighted degree and the current-year `lambda2`), and both.
///
/// The sample is the risk set: firm-years whose firm had not adopted by the
/// previous year. Only firm effects are swept out, since year effects would
/// absorb `lambda2`. `exposure[k][i]` is firm `i`'s weighted degree in the
/// tech network of year `first_year + k`.
pub fn dual_channel_r2(
    panel: &AdoptionPanel,
    tech: TechId,
    dm: &DistanceMatrix,
    exposure: &[Vec<f64>],
    lambda2: &BTreeMap<Year, f64>,
) -> Result<DualChannelR2> {
    if dm.n() != panel.n_firms() || exposure.len() != panel.n_years() {
        return Err(Error::Input("distance matrix or exposure does not match the panel".into()));
    }
    let years: Vec<Year> = panel.years().skip(1).collect();
    let names = ["distance_km", "exposure", "lambda2"];
    let mut b = DesignBuilder::new(panel.n_firms(), &names, FixedEffects::Firm, years.clone());
    for &t in &years {
        let prev = panel.year_slice(tech, t - 1);
        if !prev.iter().any(|&a| a) {
            continue;
        }
        let l2 = *lambda2.get(&t).ok_or_else(|| Error::Input(format!("lambda2 missing for {t}")))?;
        let ex = &exposure[(t - 1 - panel.first_year()) as usize];
        let dmin = min_distance_to_set(dm, prev, false);
        for i in 0..panel.n_firms() {
            if !prev[i] {
                let d = dmin[i].expect("adopters exist");
                b.push(i, t, 1.0, indicator(panel.adopted(tech, t, i)), vec![d, ex[i], l2]);
            }
        }
    }
    let design = b.finish();
    let both = design.fit(None)?;
    let spatial = design.restrict(&["distance_km"])?.fit(None)?;
    let network = design.restrict(&["exposure", "lambda2"])?.fit(None)?;
    let (rs, rn, rb) = (spatial.within_r2(), network.within_r2(), both.within_r2());
    Ok(DualChannelR2 { r2_spatial: rs, r2_network: rn, r2_both: rb, improvement: rb - rs.max(rn), n_obs: both.n_obs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn design_from(n: usize, years: &[Year], treated: &[bool], event: Year, y: impl Fn(usize, Year) -> f64) -> Design {
        let mut b = DesignBuilder::new(n, &["treated_post"], FixedEffects::FirmYear, years.to_vec());
        for &t in years {
            for i in 0..n {
                b.push(i, t, 1.0, y(i, t), vec![indicator(treated[i] && t >= event)]);
            }
        }
        b.finish()
    }

    #[test]
    fn balanced_two_by_two_matches_cell_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let treated: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let vals: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let d = design_from(n, &[2019, 2020], &treated, 2020, |i, t| vals[i][(t - 2019) as usize]);
        let fit = d.fit(None).unwrap();
        let mean = |g: bool, t: usize| {
            let v: Vec<f64> = (0..n).filter(|&i| treated[i] == g).map(|i| vals[i][t]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let want = (mean(true, 1) - mean(true, 0)) - (mean(false, 1) - mean(false, 0));
        assert!((fit.coef[0] - want).abs() < 1e-12, "{} vs {want}", fit.coef[0]);
    }

    #[test]
    fn fixed_effects_alone_give_zero_effect() {
        let n = 30;
        let treated: Vec<bool> = (0..n).map(|i| i < 15).collect();
        let years: Vec<Year> = (2017..=2023).collect();
        let d = design_from(n, &years, &treated, 2020, |i, t| {
            0.01 * i as f64 + 0.03 * (t - 2017) as f64 + if i % 2 == 0 { 0.2 } else { 0.0 }
        });
        // outcome is exactly additive, so the within outcome is zero
        let fit = d.fit(None).unwrap();
        assert_eq!((fit.coef[0], fit.tss, fit.within_r2()), (0.0, 0.0, 0.0));
        // everyone adopted: nothing to compare
        assert!(matches!(design_from(n, &years, &treated, 2020, |_, _| 1.0).fit(None), Err(Error::Estimation(_))));
        let d = design_from(n, &years, &treated, 2020, |i, t| {
            0.01 * i as f64 + 0.03 * (t - 2017) as f64 + 1e-3 * ((i * 7 + t as usize) % 5) as f64 * indicator(t == 2018)
        });
        let fit = d.fit(None).unwrap();
        assert!(fit.coef[0].abs() < 2e-3);
    }

    #[test]
    fn constructed_five_point_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let treated: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let years: Vec<Year> = (2017..=2023).collect();
        let fe: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let d = design_from(n, &years, &treated, 2020, |i, t| {
            fe[i] + 0.02 * (t - 2017) as f64 + if treated[i] && t >= 2020 { 0.05 } else { 0.0 }
        });
        let fit = d.fit(None).unwrap();
        assert!((100.0 * fit.coef[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn dynamic_effects_trace_a_step() {
        let n = 40;
        let mut p = AdoptionPanel::new(n, 2016, 2023, vec!["x".into()]).unwrap();
        let treated: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        for t in 2016..=2023 {
            for i in 0..n {
                // half the treated firms adopt in 2021; one firm per group adopts early
                let on = (i % 4 == 0 && t >= 2021) || ((i == 1 || i == 2) && t >= 2018);
                p.set(0, t, i, on);
            }
        }
        let eff = dynamic_effects(&p, 0, &EventSpec::default(), &treated).unwrap();
        let years: Vec<Year> = eff.iter().map(|e| e.year).collect();
        assert_eq!(years, (2017..=2023).collect::<Vec<_>>());
        for e in &eff {
            let want = if e.year >= 2021 { 50.0 } else { 0.0 };
            assert!((e.coef_pp - want).abs() < 1e-9, "{e:?}");
        }
        assert_eq!(eff[2].relative_year, -1);
    }

    #[test]
    fn weighted_demeaning_zeroes_group_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (nf, ny) = (25, 6);
        let mut firm = Vec::new();
        let mut year = Vec::new();
        let mut w = Vec::new();
        let mut col = Vec::new();
        for i in 0..nf {
            for t in 0..ny {
                // unbalanced: drop some cells
                if (i + t) % 7 == 3 {
                    continue;
                }
                firm.push(i);
                year.push(t);
                w.push(rng.random_range(0.05..1.0));
                col.push(rng.random_range(-3.0..3.0));
            }
        }
        let mut cols = vec![col];
        demean(&mut cols, &firm, nf, Some((&year, ny)), &w).unwrap();
        for (g, k) in [(&firm, nf), (&year, ny)] {
            let mut s = vec![0.0; k];
            let mut tw = vec![0.0; k];
            for (r, &gi) in g.iter().enumerate() {
                s[gi] += w[r] * cols[0][r];
                tw[gi] += w[r];
            }
            assert!(s.iter().zip(&tw).all(|(a, b)| (a / b).abs() <= 1e-10));
        }
    }

    fn toy_panel(n: usize, seed: u64) -> (AdoptionPanel, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = AdoptionPanel::new(n, 2014, 2023, vec!["a".into()]).unwrap();
        let treated: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        for i in 0..n {
            let mut on = rng.random::<f64>() < 0.1;
            for t in 2014..=2023 {
                let hazard = 0.08 + if treated[i] && t >= 2020 { 0.1 } else { 0.0 };
                on = on || rng.random::<f64>() < hazard;
                p.set(0, t, i, on);
            }
        }
        (p, treated)
    }

    #[test]
    fn constant_lambda2_network_equals_traditional() {
        let (p, treated) = toy_panel(80, 1);
        let spec = EventSpec::default();
        let l2: BTreeMap<Year, f64> = p.years().map(|y| (y, 7.5)).collect();
        let a = traditional_did(&p, 0, &spec, &treated).unwrap();
        let b = network_did(&p, 0, &spec, &treated, &l2, 2019).unwrap();
        assert!((a.effect_pp - b.effect_pp).abs() < 1e-10);
        // doubling lambda2 after the event halves post outcomes and pulls the estimate down
        let l2: BTreeMap<Year, f64> = p.years().map(|y| (y, if y >= 2020 { 15.0 } else { 7.5 })).collect();
        let c = network_did(&p, 0, &spec, &treated, &l2, 2019).unwrap();
        assert!(c.effect_pp < a.effect_pp);
        let missing: BTreeMap<Year, f64> = BTreeMap::new();
        assert!(matches!(network_did(&p, 0, &spec, &treated, &missing, 2019), Err(Error::Domain(_))));
    }

    #[test]
    fn spatial_with_tiny_kappa_and_irrelevant_distance_tracks_traditional() {
        let (p, treated) = toy_panel(300, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = p.n_firms();
        let pts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let dm = DistanceMatrix::from_rows(n, (0..n * n).map(|k| (pts[k / n] - pts[k % n]).abs()).collect()).unwrap();
        let spec = EventSpec::default();
        let a = traditional_did(&p, 0, &spec, &treated).unwrap();
        let b = spatial_did(&p, 0, &spec, &treated, 1e-9, &dm).unwrap();
        assert!((a.effect_pp - b.effect_pp).abs() < 1.5, "{} vs {}", a.effect_pp, b.effect_pp);
    }

    #[test]
    fn treated_within_radius() {
        let dm = DistanceMatrix::from_rows(3, vec![0.0, 10.0, 50.0, 10.0, 0.0, 40.0, 50.0, 40.0, 0.0]).unwrap();
        assert_eq!(treated_within(&dm, &[true, false, false], 20.0), vec![true, true, false]);
        assert_eq!(treated_within(&dm, &[false, false, false], 20.0), vec![false; 3]);
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        let p = AdoptionPanel::new(10, 2015, 2023, vec!["a".into()]).unwrap();
        let treated = vec![true; 10];
        assert!(matches!(traditional_did(&p, 0, &EventSpec::default(), &treated), Err(Error::Estimation(_))));
        let bad = EventSpec { pre_end: 2020, ..Default::default() };
        assert!(traditional_did(&p, 0, &bad, &treated).is_err());
        assert!(traditional_did(&p, 0, &EventSpec::default(), &treated[..5]).is_err());
    }

    #[test]
    fn f_p_value_matches_closed_form() {
        // for d1 = 2 the F survival function is (d2 / (d2 + 2f))^(d2 / 2)
        for &(f, d2) in &[(0.5, 7usize), (3.2, 20), (10.0, 4), (1.0, 100)] {
            let want = (d2 as f64 / (d2 as f64 + 2.0 * f)).powf(d2 as f64 / 2.0);
            let got = f_test_p_value(f, 2, d2).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
        }
        assert_eq!(f_test_p_value(0.0, 3, 10).unwrap(), 1.0);
    }

    #[test]
    fn pretrend_detects_linear_trend() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 200;
        let treated: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let fe: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let noise: Vec<f64> = (0..n * 20)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.05 * z
            })
            .collect();
        let y = |trend: f64| {
            let (fe, noise, treated) = (&fe, &noise, &treated);
            move |i: usize, t: Year| {
                let k = (t - 2010) as usize;
                fe[i] + 0.01 * k as f64 + noise[i * 20 + k] + if treated[i] { trend * k as f64 } else { 0.0 }
            }
        };
        let spec = EventSpec::default();
        let null = pretrend_test_with(n, y(0.0), &spec, &treated, 3).unwrap();
        let alt = pretrend_test_with(n, y(0.02), &spec, &treated, 3).unwrap();
        assert_eq!(null.leads.len(), 3);
        assert_eq!(null.leads[0].year, 2019);
        assert!(alt.p_value < 1e-4 && null.p_value > 0.05 && alt.f_stat > null.f_stat, "{alt:?} {null:?}");
        assert!(pretrend_test_with(n, y(0.0), &spec, &treated, 4).is_err());
    }

    #[test]
    fn placebo_windows_stay_clear_of_the_event() {
        let s = EventSpec::default();
        let w = s.placebo(2015, 2010, 2023).unwrap();
        assert_eq!((w.pre_start, w.pre_end, w.post_start, w.post_end), (2012, 2014, 2015, 2018));
        let w = s.placebo(2017, 2010, 2023).unwrap();
        assert_eq!((w.pre_start, w.post_end), (2014, 2019));
        let w = s.placebo(2022, 2010, 2023).unwrap();
        assert_eq!((w.pre_start, w.pre_end, w.post_end), (2020, 2021, 2023));
        assert!(s.placebo(2021, 2010, 2023).is_none());
        assert!(s.placebo(2011, 2010, 2023).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bias_is_unit_free(t in 0.1f64..50.0, s in -10.0f64..10.0) {
            prop_assert!((relative_bias(t, s) - relative_bias(t / 100.0, s / 100.0)).abs() < 1e-12);
        }

        #[test]
        fn redundant_network_channel_adds_nothing(seed in any::<u64>()) {
            // outcome driven by distance only; network regressors are pure noise
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let mut p = AdoptionPanel::new(n, 2018, 2023, vec!["a".into()]).unwrap();
            let pts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..200.0)).collect();
            let dm = DistanceMatrix::from_rows(n, (0..n * n).map(|k| (pts[k / n] - pts[k % n]).abs()).collect()).unwrap();
            p.set(0, 2018, 0, true);
            for t in 2019..=2023 {
                let prev = p.year_slice(0, t - 1).to_vec();
                let d = min_distance_to_set(&dm, &prev, false);
                for i in 0..n {
                    let on = prev[i] || rng.random::<f64>() < (-0.03 * d[i].unwrap()).exp();
                    p.set(0, t, i, on);
                }
            }
            let exposure: Vec<Vec<f64>> = (0..6).map(|_| (0..n).map(|_| rng.random()).collect()).collect();
            let l2: BTreeMap<Year, f64> = (2018..=2023).map(|y| (y, rng.random_range(1.0..2.0))).collect();
            if let Ok(r) = dual_channel_r2(&p, 0, &dm, &exposure, &l2) {
                prop_assert!(r.improvement >= -1e-12);
                prop_assert!(r.r2_both + 1e-12 >= r.r2_spatial);
            }
        }
    }
}
