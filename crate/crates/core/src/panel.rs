//! Firm x year x technology cumulative adoption indicators.

use crate::error::{Error, Result};

/// Index of a technology within a panel.
pub type TechId = usize;
/// Calendar year.
pub type Year = i32;

/// Cumulative binary adoption panel. Firms are indexed `0..n_firms` in the
/// same order as the accompanying firm table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdoptionPanel {
    n_firms: usize,
    first_year: Year,
    n_years: usize,
    techs: Vec<String>,
    // [tech][year][firm]
    data: Vec<bool>,
}

impl AdoptionPanel {
    /// All-zero panel.
    pub fn new(n_firms: usize, first_year: Year, last_year: Year, techs: Vec<String>) -> Result<Self> {
        if last_year < first_year {
            return Err(Error::Input(format!("year range {first_year}..={last_year} is empty")));
        }
        if techs.is_empty() {
            return Err(Error::Input("panel needs at least one technology".into()));
        }
        let n_years = (last_year - first_year + 1) as usize;
        Ok(Self { n_firms, first_year, n_years, data: vec![false; techs.len() * n_years * n_firms], techs })
    }

    pub fn n_firms(&self) -> usize {
        self.n_firms
    }

    pub fn first_year(&self) -> Year {
        self.first_year
    }

    pub fn last_year(&self) -> Year {
        self.first_year + self.n_years as Year - 1
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn years(&self) -> impl Iterator<Item = Year> + '_ {
        self.first_year..=self.last_year()
    }

    pub fn techs(&self) -> &[String] {
        &self.techs
    }

    pub fn tech_id(&self, name: &str) -> Option<TechId> {
        self.techs.iter().position(|t| t == name)
    }

    pub fn covers(&self, year: Year) -> bool {
        year >= self.first_year && year <= self.last_year()
    }

    fn offset(&self, tech: TechId, year: Year) -> usize {
        assert!(tech < self.techs.len(), "tech {tech} out of range");
        assert!(self.covers(year), "year {year} outside panel");
        (tech * self.n_years + (year - self.first_year) as usize) * self.n_firms
    }

    /// Adoption indicators of every firm for one tech-year.
    pub fn year_slice(&self, tech: TechId, year: Year) -> &[bool] {
        let o = self.offset(tech, year);
        &self.data[o..o + self.n_firms]
    }

    pub fn year_slice_mut(&mut self, tech: TechId, year: Year) -> &mut [bool] {
        let o = self.offset(tech, year);
        &mut self.data[o..o + self.n_firms]
    }

    pub fn adopted(&self, tech: TechId, year: Year, firm: usize) -> bool {
        self.year_slice(tech, year)[firm]
    }

    pub fn set(&mut self, tech: TechId, year: Year, firm: usize, value: bool) {
        self.year_slice_mut(tech, year)[firm] = value;
    }

    /// Share of firms adopted.
    pub fn rate(&self, tech: TechId, year: Year) -> f64 {
        let s = self.year_slice(tech, year);
        s.iter().filter(|&&a| a).count() as f64 / self.n_firms as f64
    }

    /// True if no firm ever un-adopts.
    pub fn is_monotone(&self) -> bool {
        (0..self.techs.len()).all(|k| {
            self.years().skip(1).all(|y| {
                let prev = self.year_slice(k, y - 1);
                let cur = self.year_slice(k, y);
                prev.iter().zip(cur).all(|(&p, &c)| !p || c)
            })
        })
    }

    /// Panel restricted to (possibly repeated) firm indices, in the given order.
    pub fn select_firms(&self, idx: &[usize]) -> Self {
        let mut out = Self {
            n_firms: idx.len(),
            first_year: self.first_year,
            n_years: self.n_years,
            techs: self.techs.clone(),
            data: vec![false; self.techs.len() * self.n_years * idx.len()],
        };
        for k in 0..self.techs.len() {
            for y in self.years() {
                let src = self.year_slice(k, y);
                let dst = out.year_slice_mut(k, y);
                for (d, &i) in dst.iter_mut().zip(idx) {
                    *d = src[i];
                }
            }
        }
        out
    }
}
