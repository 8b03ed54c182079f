//! Delimited-text and JSON storage for datasets and reports.
//!
//! Every file starts with a `# schema: dualchannel/1` comment line followed
//! by a header row. Readers accept files without the comment (external
//! data) but reject a different schema version, and report problems with
//! the file path and line number. Floats are written in Rust's shortest
//! round-trip form, so a write/read cycle is bit-exact.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{FirmTable, GeoPoint};
use crate::panel::{AdoptionPanel, Year};
use crate::simulate::{GenerationLog, SyntheticDataset, SCHEMA_VERSION};
use crate::spectral::{Edge, YearNetwork};

pub const FIRMS_FILE: &str = "firms.csv";
pub const PANEL_FILE: &str = "panel.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const LOG_FILE: &str = "generation_log.json";

pub const FIRMS_HEADER: [&str; 3] = ["firm_id", "latitude", "longitude"];
pub const PANEL_HEADER: [&str; 4] = ["firm_id", "year", "tech", "adopted"];
pub const EDGES_HEADER: [&str; 4] = ["year", "firm_i", "firm_j", "weight_musd"];

const SCHEMA_PREFIX: &str = "# schema: ";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn schema_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Schema { path: path.display().to_string(), msg: msg.into() }
}

/// In-memory CSV table with the schema line and header.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{SCHEMA_PREFIX}{SCHEMA_VERSION}\n").into_bytes();
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        out.extend(w.into_inner().expect("in-memory flush"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| io_err(path, e))
    }
}

/// Float cell; `None` becomes an empty field.
pub fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Input(format!("json encoding: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, json_bytes(value)?).map_err(|e| io_err(path, e))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parsed rows with their 1-based line numbers.
struct Rows {
    path: PathBuf,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Rows {
    fn err(&self, line: u64, msg: impl std::fmt::Display) -> Error {
        schema_err(&self.path, format!("line {line}: {msg}"))
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Rows> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if let Some(first) = text.lines().next() {
        if let Some(v) = first.strip_prefix(SCHEMA_PREFIX) {
            if v.trim() != SCHEMA_VERSION {
                return Err(schema_err(path, format!("line 1: schema {} is not {SCHEMA_VERSION}", v.trim())));
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let got = rdr.headers().map_err(|e| schema_err(path, e.to_string()))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(schema_err(
            path,
            format!("header is [{}], expected [{}]", got.iter().collect::<Vec<_>>().join(","), header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema_err(path, format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(Rows { path: path.to_path_buf(), rows })
}

fn parse<T: std::str::FromStr>(rows: &Rows, line: u64, rec: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
    let raw = &rec[col];
    raw.parse().map_err(|_| rows.err(line, format!("{name} = {raw:?} is not valid")))
}

pub fn read_firms(path: &Path) -> Result<FirmTable> {
    let rows = read_rows(path, &FIRMS_HEADER)?;
    if rows.rows.is_empty() {
        return Err(schema_err(path, "no firms"));
    }
    let mut ids = Vec::new();
    let mut pts = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in &rows.rows {
        let id: u32 = parse(&rows, *line, rec, 0, "firm_id")?;
        let lat: f64 = parse(&rows, *line, rec, 1, "latitude")?;
        let lon: f64 = parse(&rows, *line, rec, 2, "longitude")?;
        if let Some(prev) = seen.insert(id, *line) {
            return Err(rows.err(*line, format!("firm_id {id} already defined on line {prev}")));
        }
        ids.push(id);
        pts.push(GeoPoint::new(lat, lon).map_err(|e| rows.err(*line, e))?);
    }
    FirmTable::new(ids, pts)
}

pub fn firms_table(firms: &FirmTable) -> Table {
    let mut t = Table::new(&FIRMS_HEADER);
    for (id, p) in firms.ids.iter().zip(&firms.points) {
        t.push(vec![id.to_string(), p.latitude.to_string(), p.longitude.to_string()]);
    }
    t
}

fn firm_index(firms: &FirmTable) -> HashMap<u32, usize> {
    firms.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
}

/// Read a complete cumulative panel. Technologies keep their order of first
/// appearance; every firm x year x tech cell must appear exactly once.
pub fn read_panel(path: &Path, firms: &FirmTable) -> Result<AdoptionPanel> {
    let rows = read_rows(path, &PANEL_HEADER)?;
    if rows.rows.is_empty() {
        return Err(schema_err(path, "no panel rows"));
    }
    let index = firm_index(firms);
    let mut techs: Vec<String> = Vec::new();
    let mut parsed = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        let id: u32 = parse(&rows, *line, rec, 0, "firm_id")?;
        let year: Year = parse(&rows, *line, rec, 1, "year")?;
        let tech = rec[2].to_string();
        let adopted = match &rec[3] {
            "0" => false,
            "1" => true,
            other => return Err(rows.err(*line, format!("adopted = {other:?} must be 0 or 1"))),
        };
        let firm = *index.get(&id).ok_or_else(|| rows.err(*line, format!("firm_id {id} not in the firm table")))?;
        if tech.is_empty() {
            return Err(rows.err(*line, "empty tech name"));
        }
        let k = match techs.iter().position(|t| *t == tech) {
            Some(k) => k,
            None => {
                techs.push(tech);
                techs.len() - 1
            }
        };
        parsed.push((*line, firm, year, k, adopted));
    }
    let first = parsed.iter().map(|r| r.2).min().expect("nonempty");
    let last = parsed.iter().map(|r| r.2).max().expect("nonempty");
    let mut panel = AdoptionPanel::new(firms.len(), first, last, techs.clone())?;
    let mut seen: HashMap<(usize, Year, usize), u64> = HashMap::new();
    for &(line, firm, year, k, adopted) in &parsed {
        if let Some(prev) = seen.insert((firm, year, k), line) {
            return Err(rows.err(line, format!("duplicate of line {prev}")));
        }
        panel.set(k, year, firm, adopted);
    }
    let expected = firms.len() * panel.n_years() * techs.len();
    if seen.len() != expected {
        return Err(schema_err(
            path,
            format!("{} rows cover {} of the {expected} firm-year-tech cells", parsed.len(), seen.len()),
        ));
    }
    for (k, tech) in techs.iter().enumerate() {
        for year in (first + 1)..=last {
            let prev = panel.year_slice(k, year - 1);
            if let Some(i) = (0..firms.len()).find(|&i| prev[i] && !panel.adopted(k, year, i)) {
                let line = seen[&(i, year, k)];
                return Err(rows.err(
                    line,
                    format!("firm {} un-adopts {tech} in {year}; adoption must be cumulative", firms.ids[i]),
                ));
            }
        }
    }
    Ok(panel)
}

pub fn panel_table(panel: &AdoptionPanel, firms: &FirmTable) -> Table {
    let mut t = Table::new(&PANEL_HEADER);
    for (i, id) in firms.ids.iter().enumerate() {
        for year in panel.years() {
            for (k, tech) in panel.techs().iter().enumerate() {
                t.push(vec![
                    id.to_string(),
                    year.to_string(),
                    tech.clone(),
                    (panel.adopted(k, year, i) as u8).to_string(),
                ]);
            }
        }
    }
    t
}

/// Read one network per year of `years`. An empty file, or a year without
/// edges, is an error.
pub fn read_edges(path: &Path, firms: &FirmTable, years: std::ops::RangeInclusive<Year>) -> Result<Vec<YearNetwork>> {
    let rows = read_rows(path, &EDGES_HEADER)?;
    if rows.rows.is_empty() {
        return Err(schema_err(path, "edge list is empty"));
    }
    let index = firm_index(firms);
    let mut by_year: BTreeMap<Year, Vec<Edge>> = BTreeMap::new();
    let mut seen: HashMap<(Year, usize, usize), u64> = HashMap::new();
    for (line, rec) in &rows.rows {
        let year: Year = parse(&rows, *line, rec, 0, "year")?;
        let a: u32 = parse(&rows, *line, rec, 1, "firm_i")?;
        let b: u32 = parse(&rows, *line, rec, 2, "firm_j")?;
        let w: f64 = parse(&rows, *line, rec, 3, "weight_musd")?;
        if !years.contains(&year) {
            return Err(
                rows.err(*line, format!("year {year} outside the panel years {}..={}", years.start(), years.end()))
            );
        }
        let lookup = |id: u32| {
            index.get(&id).copied().ok_or_else(|| rows.err(*line, format!("firm_id {id} not in the firm table")))
        };
        let (i, j) = (lookup(a)?, lookup(b)?);
        if i == j {
            return Err(rows.err(*line, format!("self loop on firm {a}")));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(rows.err(*line, format!("weight_musd = {w} must be positive")));
        }
        let (i, j) = (i.min(j), i.max(j));
        if let Some(prev) = seen.insert((year, i, j), *line) {
            return Err(rows.err(*line, format!("edge {a}-{b} in {year} repeats line {prev}")));
        }
        by_year.entry(year).or_default().push(Edge { i, j, weight: w });
    }
    years
        .map(|y| {
            let edges = by_year.remove(&y).ok_or_else(|| schema_err(path, format!("no edges for year {y}")))?;
            YearNetwork::new(firms.len(), edges).map_err(|e| schema_err(path, e.to_string()))
        })
        .collect()
}

pub fn edges_table(networks: &[YearNetwork], first_year: Year, firms: &FirmTable) -> Table {
    let mut t = Table::new(&EDGES_HEADER);
    for (k, net) in networks.iter().enumerate() {
        let year = first_year + k as Year;
        for e in net.edges() {
            t.push(vec![
                year.to_string(),
                firms.ids[e.i].to_string(),
                firms.ids[e.j].to_string(),
                e.weight.to_string(),
            ]);
        }
    }
    t
}

/// Dataset as read from disk. The generation log is optional so external
/// data can be analysed too.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub firms: FirmTable,
    pub panel: AdoptionPanel,
    pub networks: Vec<YearNetwork>,
    pub log: Option<GenerationLog>,
}

impl Dataset {
    /// Ids of the shock seed firms recorded by the simulator, if any.
    pub fn shock_firms(&self) -> Option<&[u32]> {
        self.log.as_ref().map(|l| l.shock_firms.as_slice())
    }
}

impl From<SyntheticDataset> for Dataset {
    fn from(d: SyntheticDataset) -> Self {
        Self { firms: d.firms, panel: d.panel, networks: d.networks, log: Some(d.log) }
    }
}

/// Firms, panel, edges and generation log as `(file name, contents)`.
pub fn dataset_files(ds: &SyntheticDataset) -> Result<Vec<(String, Vec<u8>)>> {
    Ok(vec![
        (FIRMS_FILE.into(), firms_table(&ds.firms).to_bytes()),
        (PANEL_FILE.into(), panel_table(&ds.panel, &ds.firms).to_bytes()),
        (EDGES_FILE.into(), edges_table(&ds.networks, ds.panel.first_year(), &ds.firms).to_bytes()),
        (LOG_FILE.into(), json_bytes(&ds.log)?),
    ])
}

/// Write [`dataset_files`] into `dir`.
pub fn write_dataset(dir: &Path, ds: &SyntheticDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (name, bytes) in dataset_files(ds)? {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let firms = read_firms(&dir.join(FIRMS_FILE))?;
    let panel = read_panel(&dir.join(PANEL_FILE), &firms)?;
    let networks = read_edges(&dir.join(EDGES_FILE), &firms, panel.first_year()..=panel.last_year())?;
    let log_path = dir.join(LOG_FILE);
    let log = if log_path.exists() {
        let text = fs::read_to_string(&log_path).map_err(|e| io_err(&log_path, e))?;
        let log: GenerationLog =
            serde_json::from_str(&text).map_err(|e| schema_err(&log_path, format!("line {}: {e}", e.line())))?;
        if log.schema_version != SCHEMA_VERSION {
            return Err(schema_err(&log_path, format!("schema {} is not {SCHEMA_VERSION}", log.schema_version)));
        }
        Some(log)
    } else {
        None
    };
    Ok(Dataset { firms, panel, networks, log })
}
