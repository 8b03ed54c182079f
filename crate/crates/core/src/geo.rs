//! Great-circle distances, distance matrices and distance to the nearest adopter.

use crate::error::{Error, Result};
use crate::panel::{AdoptionPanel, TechId, Year};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A point on the sphere in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        let p = Self { latitude, longitude };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Domain(format!("latitude {} outside [-90, 90]", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Domain(format!("longitude {} outside [-180, 180]", self.longitude)));
        }
        Ok(())
    }
}

/// Haversine great-circle distance in km.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(haversine_unchecked(a, b))
}

fn haversine_unchecked(a: GeoPoint, b: GeoPoint) -> f64 {
    let (pa, pb) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dphi = pb - pa;
    let dlam = (b.longitude - a.longitude).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + pa.cos() * pb.cos() * (dlam / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Firms with their locations. Row `i` is firm index `i` everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmTable {
    pub ids: Vec<u32>,
    pub points: Vec<GeoPoint>,
}

impl FirmTable {
    pub fn new(ids: Vec<u32>, points: Vec<GeoPoint>) -> Result<Self> {
        if ids.len() != points.len() {
            return Err(Error::Input("firm ids and points differ in length".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::Input(format!("duplicate firm_id {id}")));
            }
        }
        for p in &points {
            p.validate()?;
        }
        Ok(Self { ids, points })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }
}

/// How pairwise distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceKernel {
    #[default]
    Haversine,
    /// Planar distance after an equirectangular projection about the mean latitude.
    Euclidean,
}

/// Dense symmetric distance matrix in km with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Build from a full row-major matrix, checking the invariants.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Input(format!("expected {} entries, got {}", n * n, data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Input(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = data[i * n + j];
                if !(v >= 0.0) || v != data[j * n + i] {
                    return Err(Error::Input(format!("entry ({i},{j}) negative or asymmetric")));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Matrix over (possibly repeated) firm indices. Copies of one firm sit at distance 0.
    pub fn select(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let mut data = vec![0.0; m * m];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                data[a * m + b] = self.get(i, j);
            }
        }
        Self { n: m, data }
    }
}

/// Pairwise distances between all firms.
pub fn distance_matrix(firms: &FirmTable, kernel: DistanceKernel) -> Result<DistanceMatrix> {
    let n = firms.len();
    if n < 2 {
        return Err(Error::Input(format!("distance matrix needs at least 2 firms, got {n}")));
    }
    for p in &firms.points {
        p.validate()?;
    }
    let pts = &firms.points;
    let dist: Box<dyn Fn(usize, usize) -> f64> = match kernel {
        DistanceKernel::Haversine => Box::new(|i, j| haversine_unchecked(pts[i], pts[j])),
        DistanceKernel::Euclidean => {
            let lat0 = (pts.iter().map(|p| p.latitude).sum::<f64>() / n as f64).to_radians();
            let xy: Vec<(f64, f64)> = pts
                .iter()
                .map(|p| {
                    (EARTH_RADIUS_KM * p.longitude.to_radians() * lat0.cos(), EARTH_RADIUS_KM * p.latitude.to_radians())
                })
                .collect();
            Box::new(move |i, j| ((xy[i].0 - xy[j].0).powi(2) + (xy[i].1 - xy[j].1).powi(2)).sqrt())
        }
    };
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(i, j);
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}

/// Which year's adopters define the reference set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdopterReference {
    /// Adopters at `year - 1`.
    #[default]
    PreviousYear,
    /// Adopters at `year` itself.
    SameYear,
}

/// Per-firm minimum distance to the members of `set`. With `exclude_self`, a
/// firm in the set measures to the nearest *other* member. `None` where the
/// candidate set is empty.
pub fn min_distance_to_set(dm: &DistanceMatrix, set: &[bool], exclude_self: bool) -> Vec<Option<f64>> {
    assert_eq!(set.len(), dm.n(), "set length must match matrix size");
    let members: Vec<usize> = (0..set.len()).filter(|&j| set[j]).collect();
    (0..dm.n())
        .map(|i| {
            let row = dm.row(i);
            members.iter().filter(|&&j| !(exclude_self && j == i)).map(|&j| row[j]).min_by(f64::total_cmp)
        })
        .collect()
}

/// Distance from every non-adopter at `year` to its nearest adopter in the
/// reference year. Returns `(firm index, km)` pairs.
pub fn nearest_adopter_distance(
    panel: &AdoptionPanel,
    dm: &DistanceMatrix,
    tech: TechId,
    year: Year,
    reference: AdopterReference,
) -> Result<Vec<(usize, f64)>> {
    if dm.n() != panel.n_firms() {
        return Err(Error::Input(format!("distance matrix has {} firms, panel has {}", dm.n(), panel.n_firms())));
    }
    let ref_year = match reference {
        AdopterReference::PreviousYear => year - 1,
        AdopterReference::SameYear => year,
    };
    if !panel.covers(year) || !panel.covers(ref_year) {
        return Err(Error::Input(format!("year {year} needs panel coverage of {ref_year}..={year}")));
    }
    let adopters = panel.year_slice(tech, ref_year);
    if !adopters.iter().any(|&a| a) {
        return Err(Error::UndefinedDistance { tech, year: ref_year });
    }
    let current = panel.year_slice(tech, year);
    let mins = min_distance_to_set(dm, adopters, false);
    Ok((0..panel.n_firms()).filter(|&i| !current[i]).map(|i| (i, mins[i].expect("adopter set is nonempty"))).collect())
}
