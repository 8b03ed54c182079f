//! Synthetic firm panels under discrete dual-channel diffusion.
//!
//! Each year a technology's propensity field starts from the adopter
//! indicator, is integrated over one year of
//! `du/dt = -nu L_spatial u - c L_network u + f` with adopters held at 1,
//! and every non-adopter then adopts with probability equal to its
//! propensity. The spatial Laplacian uses the kernel `exp(-kappa d)`; the
//! network Laplacian is rebuilt each year from the adopter-weighted
//! supply-chain graph. Diffusion follows the dissipative sign convention
//! (`-L u`, i.e. `+nu` times the Laplace operator in the continuum).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::decay::spatial_boundary;
use crate::error::{Error, Result};
use crate::geo::{distance_matrix, min_distance_to_set, DistanceKernel, DistanceMatrix, FirmTable, GeoPoint};
use crate::panel::{AdoptionPanel, Year};
use crate::spectral::{
    build_laplacian, lambda2_lanczos, reweight, Edge, LaplacianMatrix, MultiplierScheme, YearNetwork,
    DEFAULT_LANCZOS_TOL,
};

pub const SCHEMA_VERSION: &str = "dualchannel/1";

/// One simulated technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechSpec {
    pub name: String,
    /// First year with adopters; earlier years are all zero.
    pub intro_year: Year,
    /// Share of firms seeded as adopters in the intro year (or the first panel year if later).
    pub seed_fraction: f64,
    /// Multiplier on the spatial diffusion coefficient for this technology.
    #[serde(default = "one")]
    pub nu_scale: f64,
    /// Baseline external forcing per year, applied to every firm.
    #[serde(default)]
    pub forcing: f64,
}

fn one() -> f64 {
    1.0
}

/// Exogenous shock from `year` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockSpec {
    pub year: Year,
    /// Share of firms in the shock seed set.
    pub seed_fraction: f64,
    /// Extra forcing per year from `year` on, at full strength on shock seed
    /// firms and decaying as `exp(-kappa d)` with distance to the nearest one.
    pub forcing_boost: f64,
    /// Years the boost lasts; `None` keeps it on to the end of the panel.
    /// Adoption is absorbing, so the adoption gap it opens persists either way.
    pub boost_years: Option<u32>,
    /// Edge-weight multiplier applied from `year` on and never reverted.
    pub consolidation: f64,
}

impl Default for ShockSpec {
    fn default() -> Self {
        Self { year: 2020, seed_fraction: 0.05, forcing_boost: 3.0, boost_years: Some(2), consolidation: 1.245 }
    }
}

impl ShockSpec {
    /// Whether the forcing boost is on in `year`.
    pub fn boost_active(&self, year: Year) -> bool {
        year >= self.year && self.boost_years.is_none_or(|k| year < self.year + k as Year)
    }

    /// Weight multiplier in `year`.
    pub fn consolidation_factor(&self, year: Year) -> f64 {
        if year >= self.year {
            self.consolidation
        } else {
            1.0
        }
    }
}

/// Firm locations: a mix of uniform background and Gaussian clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeographySpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub clusters: usize,
    pub cluster_sigma_km: f64,
    /// Share of firms placed uniformly over the box instead of in a cluster.
    pub background_fraction: f64,
}

impl Default for GeographySpec {
    fn default() -> Self {
        Self {
            lat_min: 33.0,
            lat_max: 41.0,
            lon_min: 131.0,
            lon_max: 141.0,
            clusters: 8,
            cluster_sigma_km: 25.0,
            background_fraction: 1.0,
        }
    }
}

/// Supply-chain graph targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub target_density: f64,
    pub target_degree: f64,
    /// Share of edges kept from one year to the next. Turnover is done by
    /// degree-preserving swaps.
    pub persistence: f64,
    pub weight_median_musd: f64,
    pub weight_log_sd: f64,
    /// Edge-weight multiplier reached in the last year, growing
    /// geometrically from 1 in the first year.
    pub weight_trend: f64,
    /// Log-sd of firm connection propensities; drives degree skew.
    pub propensity_log_sd: f64,
    pub max_retries: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            target_density: 0.059,
            target_degree: 29.2,
            persistence: 0.85,
            weight_median_musd: 130.0,
            weight_log_sd: 0.64,
            weight_trend: 1.446,
            propensity_log_sd: 0.3,
            max_retries: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_firms: usize,
    pub first_year: Year,
    pub last_year: Year,
    pub technologies: Vec<TechSpec>,
    /// Spatial diffusion coefficient per year.
    pub nu: f64,
    /// Spatial kernel rate per km.
    pub kappa: f64,
    /// Pairs farther apart get no spatial weight; `None` means the boundary
    /// distance at the 1% threshold for `kappa`.
    pub cutoff_km: Option<f64>,
    /// Absorption rate, reported only: the continuum decay rate is
    /// `sqrt(absorption / nu)`.
    pub absorption: f64,
    /// Weight on the network Laplacian (per million currency units of edge weight).
    pub network_coupling: f64,
    pub steps_per_year: usize,
    pub shock: Option<ShockSpec>,
    pub geography: GeographySpec,
    pub network: NetworkSpec,
    pub multiplier: MultiplierScheme,
    pub seed: u64,
    /// Compute the per-year lambda_2 of every technology network.
    pub trace_lambda2: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let tech = |name: &str, intro_year, seed_fraction, nu_scale| TechSpec {
            name: name.into(),
            intro_year,
            seed_fraction,
            nu_scale,
            forcing: 0.0,
        };
        Self {
            n_firms: 500,
            first_year: 2010,
            last_year: 2023,
            technologies: vec![
                tech("artificial_intelligence", 2010, 0.12, 1.1),
                tech("big_data_analytics", 2010, 0.18, 1.3),
                tech("blockchain", 2010, 0.05, 1.5),
                tech("cloud_computing", 2010, 0.27, 1.4),
                tech("generative_ai", 2020, 0.06, 5.0),
                tech("iot", 2010, 0.15, 1.2),
            ],
            nu: 0.25,
            kappa: 0.055,
            cutoff_km: None,
            absorption: 0.25 * 0.055 * 0.055,
            network_coupling: 2e-6,
            steps_per_year: 10,
            shock: Some(ShockSpec::default()),
            geography: GeographySpec::default(),
            network: NetworkSpec::default(),
            multiplier: MultiplierScheme::default(),
            seed: 20240501,
            trace_lambda2: true,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_year as f64
    }

    pub fn effective_cutoff(&self) -> Result<f64> {
        match self.cutoff_km {
            Some(c) => Ok(c),
            None => spatial_boundary(self.kappa, 0.01),
        }
    }

    /// Secular edge-weight multiplier in `year`.
    pub fn trend_factor(&self, year: Year) -> f64 {
        let s = (year - self.first_year) as f64 / (self.last_year - self.first_year) as f64;
        self.network.weight_trend.powf(s.clamp(0.0, 1.0))
    }

    pub fn n_edges(&self) -> usize {
        (self.network.target_degree * self.n_firms as f64 / 2.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_firms < 2 {
            return bad(format!("n_firms = {} leaves no network to build", self.n_firms));
        }
        if self.last_year <= self.first_year {
            return bad(format!("years {}..={} need at least two years", self.first_year, self.last_year));
        }
        if self.technologies.is_empty() {
            return bad("no technologies configured".into());
        }
        for t in &self.technologies {
            if !(0.0..=1.0).contains(&t.seed_fraction) || t.nu_scale < 0.0 || t.forcing < 0.0 {
                return bad(format!("technology {} has invalid parameters", t.name));
            }
            if t.intro_year > self.last_year {
                return bad(format!("technology {} starts after the panel ends", t.name));
            }
        }
        let mut names: Vec<&str> = self.technologies.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("technology names must be unique".into());
        }
        if !(self.nu >= 0.0 && self.kappa > 0.0 && self.network_coupling >= 0.0) {
            return bad("nu and network_coupling must be nonnegative and kappa positive".into());
        }
        if self.steps_per_year == 0 {
            return bad("steps_per_year must be positive".into());
        }
        let n = &self.network;
        if !(n.target_density > 0.0 && n.target_density < 1.0) {
            return bad(format!("target_density {} outside (0, 1)", n.target_density));
        }
        if !(0.0..=1.0).contains(&n.persistence) || n.weight_median_musd <= 0.0 || n.weight_trend <= 0.0 {
            return bad("network persistence must lie in [0, 1] and weights be positive".into());
        }
        let max_edges = self.n_firms * (self.n_firms - 1) / 2;
        if self.n_edges() < self.n_firms - 1 || self.n_edges() > max_edges {
            return bad(format!("target degree {} cannot give a connected simple graph", n.target_degree));
        }
        if let Some(s) = &self.shock {
            if !(0.0..=1.0).contains(&s.seed_fraction) || s.forcing_boost < 0.0 || s.consolidation <= 0.0 {
                return bad("shock parameters out of range".into());
            }
        }
        let g = &self.geography;
        GeoPoint::new(g.lat_min, g.lon_min)?;
        GeoPoint::new(g.lat_max, g.lon_max)?;
        if !(g.lat_min < g.lat_max && g.lon_min < g.lon_max) || !(0.0..=1.0).contains(&g.background_fraction) {
            return bad("geography box or background share invalid".into());
        }
        if g.background_fraction < 1.0 && (g.clusters == 0 || g.cluster_sigma_km <= 0.0) {
            return bad("clustered geography needs clusters and a positive spread".into());
        }
        self.multiplier.validate()
    }
}

/// Laplacian of the kernel `exp(-kappa d)` over pairs no farther than `cutoff`.
pub fn spatial_laplacian(firms: &FirmTable, kappa: f64, cutoff: f64) -> Result<LaplacianMatrix> {
    let dm = distance_matrix(firms, DistanceKernel::Haversine)?;
    spatial_laplacian_from_distances(&dm, kappa, cutoff)
}

pub fn spatial_laplacian_from_distances(dm: &DistanceMatrix, kappa: f64, cutoff: f64) -> Result<LaplacianMatrix> {
    if !(kappa > 0.0) || !(cutoff >= 0.0) {
        return Err(Error::Domain(format!("kappa = {kappa} must be positive and cutoff = {cutoff} nonnegative")));
    }
    let n = dm.n();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dm.get(i, j);
            let w = (-kappa * d).exp();
            if d <= cutoff && w > 0.0 {
                pairs.push((i, j, w));
            }
        }
    }
    let edges = pairs.iter().map(|&(i, j, weight)| Edge { i, j, weight }).collect();
    let net = YearNetwork::new(n, edges)?;
    if !net.is_connected() {
        return Err(Error::Connectivity(format!(
            "spatial kernel graph has {} components at cutoff {cutoff:.1} km; use a larger cutoff",
            net.component_count()
        )));
    }
    Ok(LaplacianMatrix::from_weighted_pairs(n, &pairs))
}

fn stability_check(ls: &LaplacianMatrix, ln: &LaplacianMatrix, coupling: f64, dt: f64) -> Result<()> {
    let bound = dt * (ls.max_abs_row_sum() + coupling * ln.max_abs_row_sum());
    if !(dt > 0.0) || bound >= 2.0 {
        return Err(Error::Config(format!("explicit Euler unstable: dt * max row sum = {bound:.4} must be below 2")));
    }
    Ok(())
}

fn euler_step(
    u: &[f64],
    ls: &LaplacianMatrix,
    ln: &LaplacianMatrix,
    coupling: f64,
    f: &[f64],
    dt: f64,
    buf: &mut [f64],
) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    ls.matvec(u, &mut out);
    ln.matvec(u, buf);
    for i in 0..n {
        out[i] = (u[i] + dt * (-out[i] - coupling * buf[i] + f[i])).clamp(0.0, 1.0);
    }
    out
}

/// One explicit Euler step of the dual-channel system, clamped to `[0, 1]`.
pub fn step_dual(
    u: &[f64],
    l_spatial: &LaplacianMatrix,
    l_network: &LaplacianMatrix,
    coupling: f64,
    f: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let n = u.len();
    if l_spatial.n() != n || l_network.n() != n || f.len() != n {
        return Err(Error::Input("state, forcing and Laplacians must share one dimension".into()));
    }
    stability_check(l_spatial, l_network, coupling, dt)?;
    let mut buf = vec![0.0; n];
    Ok(euler_step(u, l_spatial, l_network, coupling, f, dt, &mut buf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lambda2Point {
    pub tech: String,
    pub year: Year,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkYearSummary {
    pub year: Year,
    pub edges: usize,
    pub density: f64,
    pub average_degree: f64,
    pub mean_weight_musd: f64,
    /// Share of the previous year's edges still present.
    pub persistence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub schema_version: String,
    pub config: SimConfig,
    pub cutoff_km: f64,
    pub geography_attempts: usize,
    pub shock_firms: Vec<u32>,
    pub networks: Vec<NetworkYearSummary>,
    pub lambda2_trace: Vec<Lambda2Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub firms: FirmTable,
    pub panel: AdoptionPanel,
    /// One network per panel year, in order.
    pub networks: Vec<YearNetwork>,
    pub log: GenerationLog,
}

impl SyntheticDataset {
    pub fn network(&self, year: Year) -> &YearNetwork {
        &self.networks[(year - self.panel.first_year()) as usize]
    }
}

// independent random streams so that toggling one feature leaves the others' draws intact
const STREAM_GEO: u64 = 1;
const STREAM_NET: u64 = 2;
const STREAM_SEEDS: u64 = 3;
const STREAM_ADOPT: u64 = 4;
const STREAM_SHOCK: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn sample_geography(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<FirmTable> {
    let g = &cfg.geography;
    let km_per_deg = crate::geo::EARTH_RADIUS_KM.to_radians();
    let centers: Vec<(f64, f64)> = (0..g.clusters.max(1))
        .map(|_| (rng.random_range(g.lat_min..g.lat_max), rng.random_range(g.lon_min..g.lon_max)))
        .collect();
    let normal = Normal::new(0.0, g.cluster_sigma_km.max(1e-9)).expect("positive sd");
    let mut pts = Vec::with_capacity(cfg.n_firms);
    for _ in 0..cfg.n_firms {
        let p = if rng.random::<f64>() < g.background_fraction {
            (rng.random_range(g.lat_min..g.lat_max), rng.random_range(g.lon_min..g.lon_max))
        } else {
            let c = centers[rng.random_range(0..centers.len())];
            let lat = c.0 + normal.sample(rng) / km_per_deg;
            let lon = c.1 + normal.sample(rng) / (km_per_deg * c.0.to_radians().cos());
            (lat.clamp(-90.0, 90.0), lon.clamp(-180.0, 180.0))
        };
        pts.push(GeoPoint::new(p.0, p.1)?);
    }
    FirmTable::new((0..cfg.n_firms as u32).collect(), pts)
}

struct NetworkDraw {
    base: Vec<YearNetwork>,
    persistence: Vec<Option<f64>>,
}

fn add_edges(
    edges: &mut std::collections::BTreeMap<(usize, usize), f64>,
    target: usize,
    picker: &rand_distr::weighted::WeightedAliasIndex<f64>,
    weight: &LogNormal<f64>,
    rng: &mut ChaCha8Rng,
) {
    while edges.len() < target {
        let a = picker.sample(rng);
        let b = picker.sample(rng);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !edges.contains_key(&key) {
            edges.insert(key, weight.sample(rng));
        }
    }
}

/// Replace about `1 - persistence` of the edges by double-edge swaps, which
/// keep every firm's degree. A swapped edge carries the weight of the edge
/// it came from.
fn rewire(
    prev: &std::collections::BTreeMap<(usize, usize), f64>,
    persistence: f64,
    rng: &mut ChaCha8Rng,
) -> std::collections::BTreeMap<(usize, usize), f64> {
    let mut untouched: Vec<(usize, usize)> = prev.keys().copied().collect();
    let target = ((1.0 - persistence) * untouched.len() as f64).round() as usize;
    let mut edges = prev.clone();
    let mut replaced = 0;
    let mut attempts = 0;
    while replaced < target && untouched.len() >= 2 && attempts < 50 * prev.len() {
        attempts += 1;
        let x = rng.random_range(0..untouched.len());
        let y = rng.random_range(0..untouched.len());
        if x == y {
            continue;
        }
        let ((a, b), (c, d)) = (untouched[x], untouched[y]);
        let (p, q, r, s) = if rng.random::<bool>() { (a, d, c, b) } else { (a, c, b, d) };
        let (e1, e2) = ((p.min(q), p.max(q)), (r.min(s), r.max(s)));
        if p == q || r == s || e1 == e2 || edges.contains_key(&e1) || edges.contains_key(&e2) {
            continue;
        }
        edges.remove(&(a, b));
        edges.remove(&(c, d));
        edges.insert(e1, prev[&(a, b)]);
        edges.insert(e2, prev[&(c, d)]);
        untouched.swap_remove(x.max(y));
        untouched.swap_remove(x.min(y));
        replaced += 2;
    }
    edges
}

fn to_network(n: usize, edges: &std::collections::BTreeMap<(usize, usize), f64>) -> YearNetwork {
    YearNetwork::new(n, edges.iter().map(|(&(i, j), &weight)| Edge { i, j, weight }).collect())
        .expect("generated edges satisfy invariants")
}

fn sample_networks(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<NetworkDraw> {
    let spec = &cfg.network;
    let n = cfg.n_firms;
    let target = cfg.n_edges();
    let density = 2.0 * target as f64 / (n as f64 * (n as f64 - 1.0));
    if (density - spec.target_density).abs() > 0.002 {
        return Err(Error::Generation(format!(
            "density {density:.4} at mean degree {} misses target {} by more than 0.2pp",
            spec.target_degree, spec.target_density
        )));
    }
    let prop = LogNormal::new(0.0, spec.propensity_log_sd).map_err(|e| Error::Config(e.to_string()))?;
    let theta: Vec<f64> = (0..n).map(|_| prop.sample(rng)).collect();
    let picker = rand_distr::weighted::WeightedAliasIndex::new(theta).map_err(|e| Error::Config(e.to_string()))?;
    let weight =
        LogNormal::new(spec.weight_median_musd.ln(), spec.weight_log_sd).map_err(|e| Error::Config(e.to_string()))?;

    let years = (cfg.last_year - cfg.first_year + 1) as usize;
    let mut base = Vec::with_capacity(years);
    let mut persistence = vec![None];
    let mut current = None;
    for y in 0..years {
        let mut ok = None;
        for _ in 0..spec.max_retries.max(1) {
            let edges = match &current {
                None => {
                    let mut edges = std::collections::BTreeMap::new();
                    add_edges(&mut edges, target, &picker, &weight, rng);
                    edges
                }
                Some(prev) => rewire(prev, spec.persistence, rng),
            };
            if to_network(n, &edges).is_connected() {
                ok = Some(edges);
                break;
            }
        }
        let edges = ok.ok_or_else(|| {
            Error::Generation(format!("no connected network after {} attempts in year index {y}", spec.max_retries))
        })?;
        if let Some(prev) = &current {
            let prev: &std::collections::BTreeMap<(usize, usize), f64> = prev;
            let kept = prev.keys().filter(|k| edges.contains_key(k)).count();
            persistence.push(Some(kept as f64 / prev.len() as f64));
        }
        base.push(to_network(n, &edges));
        current = Some(edges);
    }
    Ok(NetworkDraw { base, persistence })
}

fn consolidate(net: &YearNetwork, factor: f64) -> YearNetwork {
    if factor == 1.0 {
        return net.clone();
    }
    let edges = net.edges().iter().map(|e| Edge { weight: e.weight * factor, ..*e }).collect();
    YearNetwork::new(net.n(), edges).expect("scaled weights stay positive")
}

/// Simulate a full dataset. Identical configurations give identical output.
pub fn generate(cfg: &SimConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let n = cfg.n_firms;
    let cutoff = cfg.effective_cutoff()?;

    let mut geo_rng = stream(cfg.seed, STREAM_GEO);
    let mut attempts = 0;
    let (firms, dm, ls) = loop {
        attempts += 1;
        let firms = sample_geography(cfg, &mut geo_rng)?;
        let dm = distance_matrix(&firms, DistanceKernel::Haversine)?;
        match spatial_laplacian_from_distances(&dm, cfg.kappa, cutoff) {
            Ok(l) => break (firms, dm, l),
            Err(Error::Connectivity(msg)) if attempts >= cfg.network.max_retries.max(1) => {
                return Err(Error::Generation(format!("geography after {attempts} attempts: {msg}")));
            }
            Err(Error::Connectivity(_)) => continue,
            Err(e) => return Err(e),
        }
    };

    let draw = sample_networks(cfg, &mut stream(cfg.seed, STREAM_NET))?;
    let networks: Vec<YearNetwork> = draw
        .base
        .iter()
        .enumerate()
        .map(|(k, net)| {
            let year = cfg.first_year + k as Year;
            let shock = cfg.shock.as_ref().map_or(1.0, |s| s.consolidation_factor(year));
            consolidate(net, cfg.trend_factor(year) * shock)
        })
        .collect();

    let mut shock_rng = stream(cfg.seed, STREAM_SHOCK);
    let shock_set: Vec<bool> = match &cfg.shock {
        Some(s) => (0..n).map(|_| shock_rng.random::<f64>() < s.seed_fraction).collect(),
        None => vec![false; n],
    };
    let shock_field: Vec<f64> = min_distance_to_set(&dm, &shock_set, false)
        .into_iter()
        .map(|d| d.map_or(0.0, |d| (-cfg.kappa * d).exp()))
        .collect();

    let names: Vec<String> = cfg.technologies.iter().map(|t| t.name.clone()).collect();
    let mut panel = AdoptionPanel::new(n, cfg.first_year, cfg.last_year, names)?;
    let mut seed_rng = stream(cfg.seed, STREAM_SEEDS);
    let mut adopt_rng = stream(cfg.seed, STREAM_ADOPT);
    let dt = cfg.dt();
    let mut buf = vec![0.0; n];

    for (k, tech) in cfg.technologies.iter().enumerate() {
        let seeds: Vec<f64> = (0..n).map(|_| seed_rng.random::<f64>()).collect();
        let draws: Vec<Vec<f64>> =
            panel.years().map(|_| (0..n).map(|_| adopt_rng.random::<f64>()).collect()).collect::<Vec<_>>();
        let start = tech.intro_year.max(cfg.first_year);
        for i in 0..n {
            if seeds[i] < tech.seed_fraction {
                panel.set(k, start, i, true);
            }
        }
        let ls_k = ls.scaled(cfg.nu * tech.nu_scale);
        for year in (start + 1)..=cfg.last_year {
            let prev: Vec<bool> = panel.year_slice(k, year - 1).to_vec();
            let net = reweight(&networks[(year - cfg.first_year) as usize], &prev, &cfg.multiplier);
            let pairs: Vec<(usize, usize, f64)> = net.edges().iter().map(|e| (e.i, e.j, e.weight)).collect();
            let ln = LaplacianMatrix::from_weighted_pairs(n, &pairs);
            stability_check(&ls_k, &ln, cfg.network_coupling, dt)?;
            let forcing: Vec<f64> = (0..n)
                .map(|i| {
                    let boost = match &cfg.shock {
                        Some(s) if s.boost_active(year) => s.forcing_boost * shock_field[i],
                        _ => 0.0,
                    };
                    tech.forcing + boost
                })
                .collect();
            let mut u: Vec<f64> = prev.iter().map(|&a| a as u8 as f64).collect();
            for _ in 0..cfg.steps_per_year {
                u = euler_step(&u, &ls_k, &ln, cfg.network_coupling, &forcing, dt, &mut buf);
                for (x, &a) in u.iter_mut().zip(&prev) {
                    if a {
                        *x = 1.0;
                    }
                }
            }
            let draw = &draws[(year - cfg.first_year) as usize];
            let cur = panel.year_slice_mut(k, year);
            for i in 0..n {
                cur[i] = prev[i] || draw[i] < u[i];
            }
        }
    }

    let mut lambda2_trace = Vec::new();
    if cfg.trace_lambda2 {
        for (k, tech) in cfg.technologies.iter().enumerate() {
            for year in panel.years() {
                let net =
                    reweight(&networks[(year - cfg.first_year) as usize], panel.year_slice(k, year), &cfg.multiplier);
                let l = build_laplacian(&net)?;
                let r = lambda2_lanczos(&l, n, DEFAULT_LANCZOS_TOL)?;
                lambda2_trace.push(Lambda2Point { tech: tech.name.clone(), year, lambda2: r.lambda2 });
            }
        }
    }

    let summaries = networks
        .iter()
        .zip(&draw.persistence)
        .enumerate()
        .map(|(k, (net, p))| {
            let m = net.edges().len();
            NetworkYearSummary {
                year: cfg.first_year + k as Year,
                edges: m,
                density: 2.0 * m as f64 / (n as f64 * (n as f64 - 1.0)),
                average_degree: 2.0 * m as f64 / n as f64,
                mean_weight_musd: net.edges().iter().map(|e| e.weight).sum::<f64>() / m as f64,
                persistence: *p,
            }
        })
        .collect();

    let shock_firms = (0..n).filter(|&i| shock_set[i]).map(|i| firms.ids[i]).collect();
    Ok(SyntheticDataset {
        log: GenerationLog {
            schema_version: SCHEMA_VERSION.into(),
            config: cfg.clone(),
            cutoff_km: cutoff,
            geography_attempts: attempts,
            shock_firms,
            networks: summaries,
            lambda2_trace,
        },
        firms,
        panel,
        networks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_firms(n: usize, seed: u64) -> FirmTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| GeoPoint::new(rng.random_range(35.0..36.0), rng.random_range(135.0..136.0)).unwrap())
            .collect();
        FirmTable::new((0..n as u32).collect(), pts).unwrap()
    }

    fn zero_laplacian(n: usize) -> LaplacianMatrix {
        LaplacianMatrix::from_weighted_pairs(n, &[])
    }

    #[test]
    fn kernel_pair_weight() {
        let firms =
            FirmTable::new(vec![0, 1], vec![GeoPoint::new(35.0, 135.0).unwrap(), GeoPoint::new(35.0, 135.5).unwrap()])
                .unwrap();
        let d = crate::geo::haversine(firms.points[0], firms.points[1]).unwrap();
        let l = spatial_laplacian(&firms, 0.0435, f64::INFINITY).unwrap();
        assert!((l.get(0, 1) + (-0.0435 * d).exp()).abs() < 1e-15);
        assert!(spatial_laplacian(&firms, 0.0435, d / 2.0).is_err());
    }

    #[test]
    fn kernel_vanishes_for_large_kappa() {
        let firms = small_firms(6, 1);
        let l = spatial_laplacian(&firms, 8.0, f64::INFINITY).unwrap();
        assert!(l.max_abs_entry() < 1e-20);
    }

    #[test]
    fn kernel_matches_brute_force() {
        let firms = small_firms(10, 2);
        let l = spatial_laplacian(&firms, 0.05, f64::INFINITY).unwrap();
        for i in 0..10 {
            let mut row = 0.0;
            for j in 0..10 {
                if i != j {
                    let w = (-0.05 * crate::geo::haversine(firms.points[i], firms.points[j]).unwrap()).exp();
                    assert!((l.get(i, j) + w).abs() < 1e-14);
                    row += w;
                }
            }
            assert!((l.get(i, i) - row).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_state_is_fixed() {
        let firms = small_firms(12, 3);
        let ls = spatial_laplacian(&firms, 0.05, f64::INFINITY).unwrap();
        let ln = ls.scaled(0.5);
        let u = vec![0.37; 12];
        let next = step_dual(&u, &ls, &ln, 0.3, &vec![0.0; 12], 0.05).unwrap();
        assert!(next.iter().all(|v| (v - 0.37).abs() < 1e-14));
    }

    #[test]
    fn mass_conserved_without_forcing_or_coupling() {
        let firms = small_firms(12, 4);
        let ls = spatial_laplacian(&firms, 0.05, f64::INFINITY).unwrap();
        let u: Vec<f64> = (0..12).map(|i| 0.2 + 0.05 * i as f64).collect();
        let next = step_dual(&u, &ls, &zero_laplacian(12), 0.0, &vec![0.0; 12], 0.05).unwrap();
        assert!((next.iter().sum::<f64>() - u.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn unstable_step_refused() {
        let firms = small_firms(8, 5);
        let ls = spatial_laplacian(&firms, 0.001, f64::INFINITY).unwrap();
        let dt = 2.5 / ls.max_abs_row_sum();
        let r = step_dual(&vec![0.5; 8], &ls, &zero_laplacian(8), 0.0, &vec![0.0; 8], dt);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn step_halving_converges() {
        let firms = small_firms(20, 6);
        let ls = spatial_laplacian(&firms, 0.02, f64::INFINITY).unwrap().scaled(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<(usize, usize, f64)> =
            (1..20).map(|v| (rng.random_range(0..v), v, rng.random_range(0.5..2.0))).collect();
        let ln = LaplacianMatrix::from_weighted_pairs(20, &pairs);
        let f: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..0.01)).collect();
        let u0: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..0.6)).collect();
        let dt = 0.01;
        let mut a = u0.clone();
        for _ in 0..100 {
            a = step_dual(&a, &ls, &ln, 0.1, &f, dt).unwrap();
        }
        let mut b = u0;
        for _ in 0..1000 {
            b = step_dual(&b, &ls, &ln, 0.1, &f, dt / 10.0).unwrap();
        }
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap <= 5.0 * dt, "gap {gap}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn forcing_one_firm_never_lowers_others(seed in any::<u64>(), who in 0usize..15, extra in 0.0f64..1.0) {
            let firms = small_firms(15, seed);
            let ls = spatial_laplacian(&firms, 0.05, f64::INFINITY).unwrap().scaled(0.3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let u: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..1.0)).collect();
            let f: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..0.1)).collect();
            let mut g = f.clone();
            g[who] += extra;
            let a = step_dual(&u, &ls, &zero_laplacian(15), 0.0, &f, 0.05).unwrap();
            let b = step_dual(&u, &ls, &zero_laplacian(15), 0.0, &g, 0.05).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(y >= x);
            }
        }
    }

    fn small_config() -> SimConfig {
        SimConfig {
            n_firms: 120,
            // 600 edges: mean degree 10, density 1200 / (120 * 119)
            network: NetworkSpec { target_density: 0.084, target_degree: 10.0, ..Default::default() },
            geography: GeographySpec {
                lat_min: 34.0,
                lat_max: 37.0,
                lon_min: 134.0,
                lon_max: 137.0,
                ..Default::default()
            },
            trace_lambda2: true,
            ..Default::default()
        }
    }

    #[test]
    fn small_generation_is_deterministic_and_monotone() {
        let cfg = small_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.panel.is_monotone());
        assert!(a.networks.iter().all(YearNetwork::is_connected));
        assert_eq!(a.log.lambda2_trace.len(), 6 * 14);
        let genai = a.panel.tech_id("generative_ai").unwrap();
        assert!((2010..2020).all(|y| a.panel.rate(genai, y) == 0.0));
    }

    #[test]
    fn turnover_keeps_degrees_and_persistence() {
        let ds = generate(&small_config()).unwrap();
        let degrees = |net: &YearNetwork| {
            let mut d = vec![0usize; net.n()];
            for e in net.edges() {
                d[e.i] += 1;
                d[e.j] += 1;
            }
            d
        };
        let first = degrees(&ds.networks[0]);
        assert!(ds.networks.iter().all(|n| degrees(n) == first));
        for s in &ds.log.networks[1..] {
            let p = s.persistence.unwrap();
            assert!((p - 0.85).abs() < 0.02, "persistence {p}");
        }
    }

    #[test]
    fn lambda2_trace_monotone_on_fixed_network() {
        // with no turnover the only changes are added adopters and growing weights
        let mut cfg = small_config();
        cfg.network.persistence = 1.0;
        let ds = generate(&cfg).unwrap();
        for tech in ds.panel.techs() {
            let l2: Vec<f64> = ds.log.lambda2_trace.iter().filter(|p| &p.tech == tech).map(|p| p.lambda2).collect();
            assert!(l2.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)), "{tech}: {l2:?}");
        }
    }

    #[test]
    fn shock_raises_post_event_adoption() {
        // at full scale every tech still has unadopted seed firms in 2019
        let cfg = SimConfig { trace_lambda2: false, ..Default::default() };
        let on = generate(&cfg).unwrap();
        let off = generate(&SimConfig { shock: None, ..cfg }).unwrap();
        for k in 0..on.panel.techs().len() {
            let post = |d: &SyntheticDataset| (2021..=2023).map(|y| d.panel.rate(k, y)).sum::<f64>();
            assert!(post(&on) > post(&off), "tech {k}: {} vs {}", post(&on), post(&off));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = SimConfig { n_firms: 1, ..Default::default() };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let cfg = SimConfig { steps_per_year: 1, nu: 50.0, ..small_config() };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let mut cfg = small_config();
        cfg.network.target_density = 0.5;
        assert!(matches!(generate(&cfg), Err(Error::Generation(_))));
    }

    #[test]
    fn weight_growth_matches_trend_and_shock() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.trend_factor(2010), 1.0);
        assert!((cfg.trend_factor(2023) - 1.446).abs() < 1e-12);
        let s = cfg.shock.clone().unwrap();
        assert_eq!(s.consolidation_factor(2019), 1.0);
        assert_eq!(s.consolidation_factor(2020), 1.245);
        assert_eq!(s.consolidation_factor(2023), 1.245);
        // together the two give the 2010 to 2023 growth in mean transaction size
        assert!((cfg.trend_factor(2023) * s.consolidation_factor(2023) - 1.8).abs() < 1e-3);
    }

    #[test]
    fn boost_window() {
        let mut s = ShockSpec::default();
        let on: Vec<Year> = (2018..=2023).filter(|&y| s.boost_active(y)).collect();
        assert_eq!(on, [2020, 2021]);
        s.boost_years = None;
        assert!(s.boost_active(2023) && !s.boost_active(2019));
    }
}
