//! End-to-end analysis of a dataset and its rendering to result files.
//!
//! [`analyze`] runs the requested stages (decay fits, lambda_2 series,
//! event study, dual-channel R²) and [`render`] turns the result into JSON
//! and CSV files, each carrying the schema version. Stages run per
//! technology in parallel but results are collected in technology order,
//! so output bytes depend only on the inputs and the configuration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{
    bin_adoption_by_distance, decay_sample, fit_alternatives, spatial_boundary, AlternativeFits, DecayCurve,
    DEFAULT_BIN_WIDTH_KM,
};
use crate::did::{
    bootstrap_did, dual_channel_r2, dynamic_effects, network_design, placebo_test, pretrend_test, relative_bias,
    spatial_design, traditional_design, treated_within, DidEstimate, DidMethod, DualChannelR2, DynamicEffect,
    EventSpec, PlaceboInputs, PlaceboResult, PretrendTest,
};
use crate::error::{Error, Result};
use crate::geo::{distance_matrix, DistanceKernel, DistanceMatrix};
use crate::io::{cell, json_bytes, sha256_hex, Dataset, Table};
use crate::panel::{TechId, Year};
use crate::simulate::SCHEMA_VERSION;
use crate::spectral::{
    build_laplacian, dense_spectrum, lambda2_lanczos, mixing_time, tech_weighted_network, MultiplierScheme,
    DEFAULT_DENSE_CAP, DEFAULT_LANCZOS_TOL,
};

/// Analysis parameters. Every field has a default, so a partial JSON
/// document is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Threshold for the spatial boundary and the mixing time.
    pub epsilon: f64,
    pub bin_width_km: f64,
    pub multiplier: MultiplierScheme,
    pub lanczos_tol: f64,
    /// Largest network solved densely when Lanczos fails to converge.
    pub dense_cap: usize,
    pub event: EventSpec,
    pub n_leads: usize,
    /// Placebo event years; the actual event year may be included for reference.
    pub placebo_years: Vec<Year>,
    pub bootstrap_reps: usize,
    pub level: f64,
    pub seed: u64,
    /// Treated firms lie within this distance of a shock seed firm; `None`
    /// uses the spatial boundary at `epsilon` for the mean fitted kappa.
    pub treatment_radius_km: Option<f64>,
    /// Shock seed firm ids; `None` takes them from the generation log.
    pub shock_firms: Option<Vec<u32>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            bin_width_km: DEFAULT_BIN_WIDTH_KM,
            multiplier: MultiplierScheme::default(),
            lanczos_tol: DEFAULT_LANCZOS_TOL,
            dense_cap: DEFAULT_DENSE_CAP,
            event: EventSpec::default(),
            n_leads: 3,
            placebo_years: vec![2015, 2017, 2020, 2022],
            bootstrap_reps: crate::bootstrap::DEFAULT_REPLICATES,
            level: 0.95,
            seed: 20240501,
            treatment_radius_km: None,
            shock_firms: None,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon = {} outside (0, 1)", self.epsilon));
        }
        if !(self.bin_width_km > 0.0) {
            return bad(format!("bin_width_km = {} must be positive", self.bin_width_km));
        }
        if !(self.lanczos_tol > 0.0) {
            return bad(format!("lanczos_tol = {} must be positive", self.lanczos_tol));
        }
        if self.bootstrap_reps == 0 {
            return bad("bootstrap_reps must be positive".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level = {} outside (0, 1)", self.level));
        }
        if let Some(r) = self.treatment_radius_km {
            if !(r > 0.0) {
                return bad(format!("treatment_radius_km = {r} must be positive"));
            }
        }
        self.multiplier.validate()?;
        self.event.validate()
    }
}

/// Which parts of the analysis to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub decay: bool,
    pub spectral: bool,
    pub event_study: bool,
    pub dual_channel: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { decay: true, spectral: true, event_study: true, dual_channel: true };
    pub const DECAY: Stages = Stages { decay: true, spectral: false, event_study: false, dual_channel: false };
    pub const SPECTRAL: Stages = Stages { decay: false, spectral: true, event_study: false, dual_channel: false };
    pub const EVENT_STUDY: Stages = Stages { decay: false, spectral: false, event_study: true, dual_channel: false };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayResult {
    pub tech: String,
    pub n_obs: usize,
    /// Years without previous-year adopters.
    pub skipped_years: Vec<Year>,
    pub fits: AlternativeFits,
    pub curve: DecayCurve,
}

/// One technology-year of the adopter-weighted network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lambda2Row {
    pub year: Year,
    pub tech: String,
    pub lambda2: f64,
    pub mixing_time_e: f64,
    /// Lanczos iterations; 0 when the dense solver was used.
    pub n_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingSummary {
    pub tech: String,
    pub first_year: Year,
    pub last_year: Year,
    pub lambda2_first: f64,
    pub lambda2_last: f64,
    pub growth_pct: f64,
    pub tau_first: f64,
    pub tau_last: f64,
    pub tau_reduction_pct: f64,
    /// Correlation of lambda_2 with the adoption rate across years.
    pub corr_adoption: f64,
    /// Change from the year before the event to the event year, if covered.
    pub event_change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Treatment {
    pub shock_firms: usize,
    pub radius_km: f64,
    /// Mean fitted kappa over the event-study techs, when the radius is derived from it.
    pub kappa_mean: Option<f64>,
    pub treated: usize,
    pub control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TechEvent {
    pub tech: String,
    pub kappa_hat: f64,
    pub traditional: DidEstimate,
    pub spatial: DidEstimate,
    pub network: DidEstimate,
    pub relative_bias: f64,
    pub pretrend: PretrendTest,
    pub dynamic: Vec<DynamicEffect>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudy {
    pub event: EventSpec,
    pub treatment: Treatment,
    pub techs: Vec<TechEvent>,
    /// Techs left out, with the reason.
    pub excluded: Vec<(String, String)>,
    pub mean_relative_bias: f64,
    pub placebos: Vec<PlaceboResult>,
    pub placebo_skipped: Vec<Year>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualChannelRow {
    pub tech: String,
    #[serde(flatten)]
    pub r2: DualChannelR2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Report {
    pub decay: Option<Vec<DecayResult>>,
    pub lambda2: Option<Vec<Lambda2Row>>,
    pub mixing: Option<Vec<MixingSummary>>,
    pub event_study: Option<EventStudy>,
    pub dual_channel: Option<Vec<DualChannelRow>>,
}

/// lambda_2 by Lanczos, falling back to the dense solver within the cap.
fn lambda2_of(l: &crate::spectral::LaplacianMatrix, cfg: &AnalysisConfig) -> Result<(f64, usize)> {
    match lambda2_lanczos(l, l.n(), cfg.lanczos_tol) {
        Ok(r) => Ok((r.lambda2, r.iterations)),
        Err(Error::Convergence { .. }) if l.n() <= cfg.dense_cap => {
            Ok((dense_spectrum(l, cfg.dense_cap)?.lambda2(), 0))
        }
        Err(e) => Err(e),
    }
}

pub fn decay_stage(ds: &Dataset, dm: &DistanceMatrix, cfg: &AnalysisConfig) -> Result<Vec<DecayResult>> {
    let p = &ds.panel;
    (0..p.techs().len())
        .into_par_iter()
        .map(|k| {
            let (d, y, skipped) = decay_sample(p, dm, k, p.first_year() + 1..=p.last_year())?;
            let curve = bin_adoption_by_distance(&d, &y, cfg.bin_width_km)?;
            let fits = fit_alternatives(&curve, cfg.epsilon)
                .map_err(|e| Error::Estimation(format!("decay fit for {}: {e}", p.techs()[k])))?;
            Ok(DecayResult { tech: p.techs()[k].clone(), n_obs: d.len(), skipped_years: skipped, fits, curve })
        })
        .collect()
}

pub fn spectral_stage(ds: &Dataset, cfg: &AnalysisConfig) -> Result<Vec<Lambda2Row>> {
    let p = &ds.panel;
    let cells: Vec<(TechId, Year)> = (0..p.techs().len()).flat_map(|k| p.years().map(move |y| (k, y))).collect();
    cells
        .into_par_iter()
        .map(|(k, year)| {
            let net = &ds.networks[(year - p.first_year()) as usize];
            let l = build_laplacian(&tech_weighted_network(net, p, k, year, &cfg.multiplier)?)
                .map_err(|e| Error::Connectivity(format!("{} network in {year}: {e}", p.techs()[k])))?;
            let (lambda2, n_iter) = lambda2_of(&l, cfg)?;
            Ok(Lambda2Row {
                year,
                tech: p.techs()[k].clone(),
                lambda2,
                mixing_time_e: mixing_time(lambda2, cfg.epsilon)?,
                n_iter,
            })
        })
        .collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// lambda_2 by year for each tech.
fn series_by_tech(rows: &[Lambda2Row]) -> BTreeMap<&str, BTreeMap<Year, f64>> {
    let mut out: BTreeMap<&str, BTreeMap<Year, f64>> = BTreeMap::new();
    for r in rows {
        out.entry(r.tech.as_str()).or_default().insert(r.year, r.lambda2);
    }
    out
}

pub fn mixing_summaries(ds: &Dataset, rows: &[Lambda2Row], cfg: &AnalysisConfig) -> Result<Vec<MixingSummary>> {
    let p = &ds.panel;
    let series = series_by_tech(rows);
    p.techs()
        .iter()
        .enumerate()
        .map(|(k, tech)| {
            let s = &series[tech.as_str()];
            let (first, last) = (p.first_year(), p.last_year());
            let (l0, l1) = (s[&first], s[&last]);
            let (t0, t1) = (mixing_time(l0, cfg.epsilon)?, mixing_time(l1, cfg.epsilon)?);
            let l2: Vec<f64> = s.values().copied().collect();
            let rates: Vec<f64> = p.years().map(|y| p.rate(k, y)).collect();
            let ev = cfg.event.event_year;
            let event_change_pct = match (s.get(&(ev - 1)), s.get(&ev)) {
                (Some(a), Some(b)) => Some(100.0 * (b / a - 1.0)),
                _ => None,
            };
            Ok(MixingSummary {
                tech: tech.clone(),
                first_year: first,
                last_year: last,
                lambda2_first: l0,
                lambda2_last: l1,
                growth_pct: 100.0 * (l1 / l0 - 1.0),
                tau_first: t0,
                tau_last: t1,
                tau_reduction_pct: 100.0 * (1.0 - t1 / t0),
                corr_adoption: correlation(&l2, &rates),
                event_change_pct,
            })
        })
        .collect()
}

/// Techs with adopters in the year before the event window, so every window
/// year has a previous-year adopter set.
fn event_techs(ds: &Dataset, spec: &EventSpec) -> (Vec<TechId>, Vec<(String, String)>) {
    let p = &ds.panel;
    let mut keep = Vec::new();
    let mut excluded = Vec::new();
    for (k, tech) in p.techs().iter().enumerate() {
        let y = spec.pre_start - 1;
        if !p.covers(y) {
            excluded.push((tech.clone(), format!("panel does not cover {y}")));
        } else if p.rate(k, y) == 0.0 {
            excluded.push((tech.clone(), format!("no adopters in {y}, before the pre-period")));
        } else {
            keep.push(k);
        }
    }
    (keep, excluded)
}

/// Treated group for the event study and the techs it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub treated: Vec<bool>,
    pub summary: Treatment,
    pub techs: Vec<TechId>,
    /// Techs left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

/// Firms within the treatment radius of the shock seed firms. Without a
/// configured radius it is the spatial boundary of the mean fitted kappa over
/// the event-study techs.
pub fn assign_treatment(
    ds: &Dataset,
    dm: &DistanceMatrix,
    cfg: &AnalysisConfig,
    decay: &[DecayResult],
) -> Result<Assignment> {
    let p = &ds.panel;
    let ids = match (&cfg.shock_firms, ds.shock_firms()) {
        (Some(ids), _) => ids.as_slice(),
        (None, Some(ids)) => ids,
        (None, None) => {
            return Err(Error::Config(
                "event study needs shock seed firms: set shock_firms or provide a generation log".into(),
            ))
        }
    };
    let mut seeds = vec![false; p.n_firms()];
    for id in ids {
        let i = ds.firms.index_of(*id).ok_or_else(|| Error::Input(format!("shock firm {id} not in the firm table")))?;
        seeds[i] = true;
    }
    let (techs, excluded) = event_techs(ds, &cfg.event);
    if techs.is_empty() {
        return Err(Error::Input("no technology has adopters before the event window".into()));
    }
    let (radius_km, kappa_mean) = match cfg.treatment_radius_km {
        Some(r) => (r, None),
        None => {
            let m = techs.iter().map(|&k| decay[k].fits.exponential.kappa).sum::<f64>() / techs.len() as f64;
            (spatial_boundary(m, cfg.epsilon)?, Some(m))
        }
    };
    let treated = treated_within(dm, &seeds, radius_km);
    let n_treated = treated.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == p.n_firms() {
        return Err(Error::Input(format!(
            "treatment radius {radius_km:.1} km leaves {n_treated} of {} firms treated",
            p.n_firms()
        )));
    }
    let summary = Treatment {
        shock_firms: ids.len(),
        radius_km,
        kappa_mean,
        treated: n_treated,
        control: p.n_firms() - n_treated,
    };
    Ok(Assignment { treated, summary, techs, excluded })
}

pub fn event_stage(
    ds: &Dataset,
    dm: &DistanceMatrix,
    cfg: &AnalysisConfig,
    decay: &[DecayResult],
    lambda2: &[Lambda2Row],
) -> Result<EventStudy> {
    let p = &ds.panel;
    let spec = &cfg.event;
    let Assignment { treated, summary, techs, excluded } = assign_treatment(ds, dm, cfg, decay)?;
    let kappa = |k: TechId| decay[k].fits.exponential.kappa;
    let series = series_by_tech(lambda2);
    let per_tech: Vec<TechEvent> = techs
        .par_iter()
        .map(|&k| {
            let name = &p.techs()[k];
            let with = |e: Error| Error::Estimation(format!("{name}: {e}"));
            let (reps, level, seed) = (cfg.bootstrap_reps, cfg.level, cfg.seed);
            let trad = traditional_design(p, k, spec, &treated)?;
            let traditional = bootstrap_did(&trad, DidMethod::Traditional, reps, level, seed).map_err(with)?;
            let sp = spatial_design(p, k, spec, &treated, kappa(k), dm)?;
            let spatial = bootstrap_did(&sp, DidMethod::Spatial, reps, level, seed).map_err(with)?;
            let nw = network_design(p, k, spec, &treated, &series[name.as_str()], spec.pre_end)?;
            let network = bootstrap_did(&nw, DidMethod::Network, reps, level, seed).map_err(with)?;
            Ok(TechEvent {
                tech: name.clone(),
                kappa_hat: kappa(k),
                relative_bias: relative_bias(traditional.effect_pp, spatial.effect_pp),
                traditional,
                spatial,
                network,
                pretrend: pretrend_test(p, k, spec, &treated, cfg.n_leads).map_err(with)?,
                dynamic: dynamic_effects(p, k, spec, &treated).map_err(with)?,
            })
        })
        .collect::<Result<_>>()?;
    let mean_relative_bias = per_tech.iter().map(|t| t.relative_bias).sum::<f64>() / per_tech.len() as f64;
    let pooled: Vec<(TechId, f64)> = techs.iter().map(|&k| (k, kappa(k))).collect();
    let inputs = PlaceboInputs {
        panel: p,
        dm,
        treated: &treated,
        techs: &pooled,
        reps: cfg.bootstrap_reps,
        level: cfg.level,
        seed: cfg.seed,
    };
    let (placebos, placebo_skipped) = placebo_test(&inputs, spec, &cfg.placebo_years)?;
    Ok(EventStudy {
        event: spec.clone(),
        treatment: summary,
        techs: per_tech,
        excluded,
        mean_relative_bias,
        placebos,
        placebo_skipped,
    })
}

/// Weighted degree of every firm in each year's adopter-weighted network.
fn exposure(ds: &Dataset, k: TechId, cfg: &AnalysisConfig) -> Result<Vec<Vec<f64>>> {
    let p = &ds.panel;
    p.years()
        .map(|year| {
            let net =
                tech_weighted_network(&ds.networks[(year - p.first_year()) as usize], p, k, year, &cfg.multiplier)?;
            let mut s = vec![0.0; p.n_firms()];
            for e in net.edges() {
                s[e.i] += e.weight;
                s[e.j] += e.weight;
            }
            Ok(s)
        })
        .collect()
}

pub fn dual_channel_stage(
    ds: &Dataset,
    dm: &DistanceMatrix,
    cfg: &AnalysisConfig,
    lambda2: &[Lambda2Row],
) -> Result<Vec<DualChannelRow>> {
    let p = &ds.panel;
    let series = series_by_tech(lambda2);
    (0..p.techs().len())
        .into_par_iter()
        .map(|k| {
            let name = &p.techs()[k];
            let r2 = dual_channel_r2(p, k, dm, &exposure(ds, k, cfg)?, &series[name.as_str()])
                .map_err(|e| Error::Estimation(format!("{name}: {e}")))?;
            Ok(DualChannelRow { tech: name.clone(), r2 })
        })
        .collect()
}

/// Run the requested stages. The event study needs decay fits and lambda_2
/// series and computes them if they were not requested.
pub fn analyze(ds: &Dataset, cfg: &AnalysisConfig, stages: Stages) -> Result<Report> {
    cfg.validate()?;
    if ds.networks.len() != ds.panel.n_years() {
        return Err(Error::Input(format!("{} networks for {} panel years", ds.networks.len(), ds.panel.n_years())));
    }
    let need_dm = stages.decay || stages.event_study || stages.dual_channel;
    let dm = if need_dm { Some(distance_matrix(&ds.firms, DistanceKernel::Haversine)?) } else { None };
    let need_decay = stages.decay || stages.event_study;
    let need_l2 = stages.spectral || stages.event_study || stages.dual_channel;
    let decay = if need_decay { Some(decay_stage(ds, dm.as_ref().expect("distances"), cfg)?) } else { None };
    let l2 = if need_l2 { Some(spectral_stage(ds, cfg)?) } else { None };
    let mut report = Report::default();
    if stages.spectral {
        report.mixing = Some(mixing_summaries(ds, l2.as_ref().expect("lambda2"), cfg)?);
    }
    if stages.event_study {
        let dm = dm.as_ref().expect("distances");
        report.event_study =
            Some(event_stage(ds, dm, cfg, decay.as_ref().expect("decay"), l2.as_ref().expect("lambda2"))?);
    }
    if stages.dual_channel {
        report.dual_channel =
            Some(dual_channel_stage(ds, dm.as_ref().expect("distances"), cfg, l2.as_ref().expect("lambda2"))?);
    }
    if stages.decay {
        report.decay = decay;
    }
    if stages.spectral {
        report.lambda2 = l2;
    }
    Ok(report)
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: &'a str,
    #[serde(flatten)]
    body: T,
}

fn json<T: Serialize>(name: &str, body: T) -> Result<(String, Vec<u8>)> {
    Ok((name.to_string(), json_bytes(&Versioned { schema_version: SCHEMA_VERSION, body })?))
}

#[derive(Serialize)]
struct Rows<'a, T: Serialize> {
    rows: &'a [T],
}

fn estimate_row(t: &mut Table, tech: &str, e: &DidEstimate, bias: Option<f64>) {
    t.push(vec![
        tech.to_string(),
        e.method.name().to_string(),
        e.effect_pp.to_string(),
        cell(e.ci_low),
        cell(e.ci_high),
        e.n_obs.to_string(),
        cell(bias),
    ]);
}

/// Result files in a fixed order: `(file name, contents)`.
pub fn render(report: &Report) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    if let Some(decay) = &report.decay {
        let fits: Vec<_> = decay
            .iter()
            .map(|d| serde_json::json!({"tech": d.tech, "n_obs": d.n_obs, "skipped_years": d.skipped_years, "fits": d.fits}))
            .collect();
        out.push(json("decay_fits.json", Rows { rows: &fits })?);
        let mut t = Table::new(&[
            "tech",
            "n_obs",
            "n_bins",
            "kappa",
            "u0",
            "r2_exponential",
            "d_star_km",
            "r2_power",
            "r2_linear",
            "best",
        ]);
        for d in decay {
            let f = &d.fits;
            t.push(vec![
                d.tech.clone(),
                d.n_obs.to_string(),
                d.curve.bins().len().to_string(),
                f.exponential.kappa.to_string(),
                f.exponential.u0.to_string(),
                f.exponential.r_squared.to_string(),
                cell(f.exponential.d_star),
                f.power.r_squared.to_string(),
                f.linear.r_squared.to_string(),
                f.best.name().to_string(),
            ]);
        }
        out.push(("decay_fits.csv".into(), t.to_bytes()));
        let mut t = Table::new(&["tech", "distance_km", "rate", "count", "fitted_exponential"]);
        for d in decay {
            let e = &d.fits.exponential;
            for b in d.curve.bins() {
                let fitted = e.u0 * (-e.kappa * b.distance_km).exp();
                t.push(vec![
                    d.tech.clone(),
                    b.distance_km.to_string(),
                    b.rate.to_string(),
                    b.count.to_string(),
                    fitted.to_string(),
                ]);
            }
        }
        out.push(("decay_curves.csv".into(), t.to_bytes()));
    }
    if let Some(rows) = &report.lambda2 {
        out.push(json("lambda2_series.json", Rows { rows })?);
        let mut t = Table::new(&["tech", "year", "lambda2", "mixing_time_e", "n_iter"]);
        for r in rows {
            t.push(vec![
                r.tech.clone(),
                r.year.to_string(),
                r.lambda2.to_string(),
                r.mixing_time_e.to_string(),
                r.n_iter.to_string(),
            ]);
        }
        out.push(("lambda2_series.csv".into(), t.to_bytes()));
    }
    if let Some(rows) = &report.mixing {
        out.push(json("mixing_times.json", Rows { rows })?);
        let mut t = Table::new(&[
            "tech",
            "first_year",
            "last_year",
            "lambda2_first",
            "lambda2_last",
            "growth_pct",
            "tau_first",
            "tau_last",
            "tau_reduction_pct",
            "corr_adoption",
            "event_change_pct",
        ]);
        for r in rows {
            t.push(vec![
                r.tech.clone(),
                r.first_year.to_string(),
                r.last_year.to_string(),
                r.lambda2_first.to_string(),
                r.lambda2_last.to_string(),
                r.growth_pct.to_string(),
                r.tau_first.to_string(),
                r.tau_last.to_string(),
                r.tau_reduction_pct.to_string(),
                r.corr_adoption.to_string(),
                cell(r.event_change_pct),
            ]);
        }
        out.push(("mixing_times.csv".into(), t.to_bytes()));
    }
    if let Some(es) = &report.event_study {
        let summary = serde_json::json!({
            "event": es.event,
            "treatment": es.treatment,
            "excluded": es.excluded,
            "mean_relative_bias": es.mean_relative_bias,
            "techs": es.techs.iter().map(|t| serde_json::json!({
                "tech": t.tech,
                "kappa_hat": t.kappa_hat,
                "traditional": t.traditional,
                "spatial": t.spatial,
                "network": t.network,
                "relative_bias": t.relative_bias,
            })).collect::<Vec<_>>(),
        });
        out.push(json("event_study.json", summary)?);
        let mut t = Table::new(&["tech", "method", "effect_pp", "ci_low", "ci_high", "n_obs", "relative_bias"]);
        for te in &es.techs {
            estimate_row(&mut t, &te.tech, &te.traditional, None);
            estimate_row(&mut t, &te.tech, &te.spatial, Some(te.relative_bias));
            estimate_row(&mut t, &te.tech, &te.network, None);
        }
        out.push(("event_study.csv".into(), t.to_bytes()));

        let mut t = Table::new(&["tech", "year", "relative_year", "coef_pp", "se_pp"]);
        for te in &es.techs {
            for d in &te.dynamic {
                t.push(vec![
                    te.tech.clone(),
                    d.year.to_string(),
                    d.relative_year.to_string(),
                    d.coef_pp.to_string(),
                    d.se_pp.to_string(),
                ]);
            }
        }
        out.push(("dynamic_effects.csv".into(), t.to_bytes()));

        let pre: Vec<_> = es.techs.iter().map(|t| serde_json::json!({"tech": t.tech, "test": t.pretrend})).collect();
        out.push(json("pretrends.json", Rows { rows: &pre })?);
        let mut t = Table::new(&[
            "tech",
            "lead",
            "year",
            "coef_pp",
            "se_pp",
            "p_value",
            "f_stat",
            "df_num",
            "df_den",
            "joint_p_value",
        ]);
        for te in &es.techs {
            let pt = &te.pretrend;
            for l in &pt.leads {
                t.push(vec![
                    te.tech.clone(),
                    l.lead.to_string(),
                    l.year.to_string(),
                    l.coef_pp.to_string(),
                    l.se_pp.to_string(),
                    l.p_value.to_string(),
                    pt.f_stat.to_string(),
                    pt.df_num.to_string(),
                    pt.df_den.to_string(),
                    pt.p_value.to_string(),
                ]);
            }
        }
        out.push(("pretrends.csv".into(), t.to_bytes()));

        out.push(json("placebos.json", serde_json::json!({"rows": es.placebos, "skipped_years": es.placebo_skipped}))?);
        let mut t =
            Table::new(&["year", "pre_start", "post_end", "method", "effect_pp", "ci_low", "ci_high", "significant"]);
        for r in &es.placebos {
            for e in [&r.traditional, &r.spatial] {
                t.push(vec![
                    r.year.to_string(),
                    r.window.0.to_string(),
                    r.window.2.to_string(),
                    e.method.name().to_string(),
                    e.effect_pp.to_string(),
                    cell(e.ci_low),
                    cell(e.ci_high),
                    e.significant().to_string(),
                ]);
            }
        }
        out.push(("placebos.csv".into(), t.to_bytes()));
    }
    if let Some(rows) = &report.dual_channel {
        out.push(json("dual_channel_r2.json", Rows { rows })?);
        let mut t = Table::new(&["tech", "r2_spatial", "r2_network", "r2_both", "improvement", "n_obs"]);
        for r in rows {
            let x = &r.r2;
            t.push(vec![
                r.tech.clone(),
                x.r2_spatial.to_string(),
                x.r2_network.to_string(),
                x.r2_both.to_string(),
                x.improvement.to_string(),
                x.n_obs.to_string(),
            ]);
        }
        out.push(("dual_channel_r2.csv".into(), t.to_bytes()));
    }
    Ok(out)
}

/// `{file name: sha256}` over rendered files.
pub fn digests(files: &[(String, Vec<u8>)]) -> BTreeMap<String, String> {
    files.iter().map(|(n, b)| (n.clone(), sha256_hex(b))).collect()
}
