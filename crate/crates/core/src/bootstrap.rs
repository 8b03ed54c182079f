//! Firm-cluster percentile bootstrap.
//!
//! A replicate draws `n` firm indices with replacement and hands them to the
//! statistic, which must carry every panel row of each drawn firm (repeats
//! count as separate firms). Replicate `r` uses stream `r` of a ChaCha8
//! generator seeded with the root seed, so results do not depend on thread
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geo::DistanceMatrix;
use crate::panel::AdoptionPanel;
use crate::spectral::YearNetwork;

pub const DEFAULT_REPLICATES: usize = 1000;
/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Statistic on the original sample.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Standard deviation of the successful replicates.
    pub se: f64,
    pub level: f64,
    pub replicates: usize,
    pub failed: usize,
}

/// Firm indices for replicate `r`.
pub fn resample(n: usize, seed: u64, r: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `ceil(q * len)`-th order statistic of sorted data (1-based, clamped).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Bootstrap a vector-valued statistic of width `k`, resampling firms once
/// per replicate for all components.
pub fn cluster_bootstrap_many<F>(
    n_firms: usize,
    reps: usize,
    level: f64,
    seed: u64,
    k: usize,
    stat: F,
) -> Result<Vec<BootstrapResult>>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if n_firms == 0 || reps == 0 || k == 0 {
        return Err(Error::Domain("bootstrap needs firms, replicates and a statistic".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level {level} outside (0, 1)")));
    }
    let identity: Vec<usize> = (0..n_firms).collect();
    let point = stat(&identity)?;
    if point.len() != k {
        return Err(Error::Input(format!("statistic returned {} values, expected {k}", point.len())));
    }
    let draws: Vec<std::result::Result<Vec<f64>, String>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let idx = resample(n_firms, seed, r);
            match stat(&idx) {
                Ok(v) if v.len() == k && v.iter().all(|x| x.is_finite()) => Ok(v),
                Ok(_) => Err(format!("replicate {r}: non-finite or misshaped statistic")),
                Err(e) => Err(format!("replicate {r}: {e}")),
            }
        })
        .collect();
    let failed = draws.iter().filter(|d| d.is_err()).count();
    if failed as f64 > MAX_FAILURE_SHARE * reps as f64 {
        let first = draws.iter().find_map(|d| d.as_ref().err().cloned()).unwrap_or_default();
        return Err(Error::Inference { failed, replicates: reps, first });
    }
    let ok: Vec<&Vec<f64>> = draws.iter().filter_map(|d| d.as_ref().ok()).collect();
    let alpha = 1.0 - level;
    Ok((0..k)
        .map(|j| {
            let mut v: Vec<f64> = ok.iter().map(|d| d[j]).collect();
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64;
            BootstrapResult {
                point: point[j],
                ci_low: nearest_rank(&v, alpha / 2.0),
                ci_high: nearest_rank(&v, 1.0 - alpha / 2.0),
                se: var.sqrt(),
                level,
                replicates: reps,
                failed,
            }
        })
        .collect())
}

/// Percentile interval for a scalar statistic of resampled firm indices.
pub fn cluster_bootstrap<F>(n_firms: usize, reps: usize, level: f64, seed: u64, stat: F) -> Result<BootstrapResult>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    let mut v = cluster_bootstrap_many(n_firms, reps, level, seed, 1, |idx| stat(idx).map(|s| vec![s]))?;
    Ok(v.remove(0))
}

/// Panel data that can be restricted to a resample of firms.
#[derive(Debug, Clone)]
pub struct PanelBundle {
    pub panel: AdoptionPanel,
    pub distances: Option<DistanceMatrix>,
    pub networks: Vec<YearNetwork>,
}

impl PanelBundle {
    /// Copy holding the listed firms in order; repeated firms become distinct
    /// firms with no edge between copies.
    pub fn select(&self, idx: &[usize]) -> PanelBundle {
        PanelBundle {
            panel: self.panel.select_firms(idx),
            distances: self.distances.as_ref().map(|d| d.select(idx)),
            networks: self.networks.iter().map(|n| n.select(idx)).collect(),
        }
    }
}

/// Bootstrap a statistic computed on resampled bundles.
pub fn bootstrap_bundle<F>(bundle: &PanelBundle, reps: usize, level: f64, seed: u64, stat: F) -> Result<BootstrapResult>
where
    F: Fn(&PanelBundle) -> Result<f64> + Sync,
{
    cluster_bootstrap(bundle.panel.n_firms(), reps, level, seed, |idx| stat(&bundle.select(idx)))
}
