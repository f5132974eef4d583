//! Sensor CSV ingestion onto a regular half-hour grid.
//!
//! Input files carry one row per measurement with the columns `area_nm`,
//! `measure_dt`, `TSP`, `SOx` and `NOx` (renameable through [`ColumnMap`]).
//! [`parse_csv`] turns rows into [`RawRecord`]s; [`regularize`] lays them on a
//! gap-free 30-minute grid where absent timestamps become explicit missing
//! entries.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

pub const STEP_MINUTES: i64 = 30;
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("required column `{0}` is absent from the header")]
    MalformedHeader(String),
    #[error("row {row}: bad timestamp `{value}` ({reason})")]
    BadTimestamp {
        row: u64,
        value: String,
        reason: String,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("timestamp {0} appears more than once")]
    DuplicateTimestamp(String),
    #[error("no records to regularize")]
    EmptyInput,
    #[error("need at least 2 distinct timestamps, found {0}")]
    TooFewTimestamps(usize),
    #[error("records mix stations `{0}` and `{1}`")]
    MixedStations(String, String),
    #[error("variable {variable} has {missing} missing values; impute first")]
    IncompleteVariable { variable: Pollutant, missing: usize },
}

/// The three pollutant channels of a station file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pollutant {
    #[serde(rename = "TSP")]
    Tsp,
    #[serde(rename = "SOx")]
    Sox,
    #[serde(rename = "NOx")]
    Nox,
}

impl Pollutant {
    pub const ALL: [Pollutant; 3] = [Pollutant::Tsp, Pollutant::Sox, Pollutant::Nox];

    pub fn name(self) -> &'static str {
        match self {
            Pollutant::Tsp => "TSP",
            Pollutant::Sox => "SOx",
            Pollutant::Nox => "NOx",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variable `{0}` (expected TSP, SOx or NOx)")]
pub struct UnknownVariable(pub String);

impl FromStr for Pollutant {
    type Err = UnknownVariable;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pollutant::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownVariable(s.to_string()))
    }
}

/// Header names for each logical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub area_nm: String,
    pub measure_dt: String,
    pub tsp: String,
    pub sox: String,
    pub nox: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            area_nm: "area_nm".into(),
            measure_dt: "measure_dt".into(),
            tsp: "TSP".into(),
            sox: "SOx".into(),
            nox: "NOx".into(),
        }
    }
}

/// One parsed data row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub area_nm: String,
    pub measure_dt: NaiveDateTime,
    pub tsp: Option<f64>,
    pub sox: Option<f64>,
    pub nox: Option<f64>,
}

impl RawRecord {
    pub fn reading(&self, p: Pollutant) -> Option<f64> {
        match p {
            Pollutant::Tsp => self.tsp,
            Pollutant::Sox => self.sox,
            Pollutant::Nox => self.nox,
        }
    }
}

/// Parsed rows plus the number of non-empty cells that could not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub records: Vec<RawRecord>,
    /// Non-empty pollutant cells that were non-numeric, non-finite or negative.
    pub invalid_cells: usize,
}

pub fn parse_timestamp(value: &str) -> Result<NaiveDateTime, String> {
    let ts = NaiveDateTime::parse_from_str(value.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| format!("expected YYYY-MM-DD HH:MM: {e}"))?;
    if ts.minute() % STEP_MINUTES as u32 != 0 {
        return Err(format!("minute {} is off the 30-minute grid", ts.minute()));
    }
    Ok(ts)
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

fn parse_reading(cell: &str, invalid: &mut usize) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return None;
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Some(v),
        _ => {
            *invalid += 1;
            None
        }
    }
}

pub fn parse_csv(path: &Path, columns: &ColumnMap) -> Result<ParsedCsv, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_reader(file, columns)
}

/// Parses CSV text from any reader. Row numbers in errors are 1-based file
/// lines, so the first data row is row 2.
pub fn parse_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<ParsedCsv, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MalformedHeader(name.to_string()))
    };
    let area_col = find(&columns.area_nm)?;
    let dt_col = find(&columns.measure_dt)?;
    let tsp_col = find(&columns.tsp)?;
    let sox_col = find(&columns.sox)?;
    let nox_col = find(&columns.nox)?;

    let mut records = Vec::new();
    let mut invalid_cells = 0usize;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| row.get(i).unwrap_or("");
        let dt_raw = cell(dt_col);
        let measure_dt = parse_timestamp(dt_raw).map_err(|reason| IngestError::BadTimestamp {
            row: line,
            value: dt_raw.to_string(),
            reason,
        })?;
        records.push(RawRecord {
            area_nm: cell(area_col).trim().to_string(),
            measure_dt,
            tsp: parse_reading(cell(tsp_col), &mut invalid_cells),
            sox: parse_reading(cell(sox_col), &mut invalid_cells),
            nox: parse_reading(cell(nox_col), &mut invalid_cells),
        });
    }
    if invalid_cells > 0 {
        log::warn!("{invalid_cells} non-numeric or negative readings treated as missing");
    }
    Ok(ParsedCsv {
        records,
        invalid_cells,
    })
}

/// Readings on a gap-free 30-minute grid. Entry `k` of every channel belongs
/// to `start + k * 30min`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub station: String,
    pub start: NaiveDateTime,
    channels: [Vec<Option<f64>>; 3],
}

impl TimeSeries {
    /// Builds a series from per-channel values, which must share one length.
    pub fn new(
        station: impl Into<String>,
        start: NaiveDateTime,
        tsp: Vec<Option<f64>>,
        sox: Vec<Option<f64>>,
        nox: Vec<Option<f64>>,
    ) -> Self {
        assert!(
            tsp.len() == sox.len() && sox.len() == nox.len(),
            "channel lengths differ"
        );
        Self {
            station: station.into(),
            start,
            channels: [tsp, sox, nox],
        }
    }

    /// Convenience constructor for a single fully observed channel; the other
    /// two channels are left missing.
    pub fn from_values(start: NaiveDateTime, p: Pollutant, values: &[f64]) -> Self {
        let mut channels: [Vec<Option<f64>>; 3] = Default::default();
        for (i, ch) in channels.iter_mut().enumerate() {
            *ch = if i == p.index() {
                values.iter().copied().map(Some).collect()
            } else {
                vec![None; values.len()]
            };
        }
        Self {
            station: String::new(),
            start,
            channels,
        }
    }

    pub fn step() -> Duration {
        Duration::minutes(STEP_MINUTES)
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, k: usize) -> NaiveDateTime {
        self.start + Duration::minutes(STEP_MINUTES * k as i64)
    }

    pub fn values(&self, p: Pollutant) -> &[Option<f64>] {
        &self.channels[p.index()]
    }

    pub fn values_mut(&mut self, p: Pollutant) -> &mut [Option<f64>] {
        &mut self.channels[p.index()]
    }

    pub fn n_present(&self, p: Pollutant) -> usize {
        self.values(p).iter().filter(|v| v.is_some()).count()
    }

    pub fn n_missing(&self, p: Pollutant) -> usize {
        self.len() - self.n_present(p)
    }

    pub fn present_values(&self, p: Pollutant) -> Vec<f64> {
        self.values(p).iter().flatten().copied().collect()
    }

    /// The channel as plain reals; fails if anything is still missing.
    pub fn complete_values(&self, p: Pollutant) -> Result<Vec<f64>, IngestError> {
        let missing = self.n_missing(p);
        if missing > 0 {
            return Err(IngestError::IncompleteVariable {
                variable: p,
                missing,
            });
        }
        Ok(self.present_values(p))
    }

    /// One record per grid point, including points where every reading is
    /// missing.
    pub fn to_records(&self) -> Vec<RawRecord> {
        (0..self.len())
            .map(|k| RawRecord {
                area_nm: self.station.clone(),
                measure_dt: self.timestamp(k),
                tsp: self.channels[0][k],
                sox: self.channels[1][k],
                nox: self.channels[2][k],
            })
            .collect()
    }

    /// Writes the series in the input schema with default column names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        let cols = ColumnMap::default();
        w.write_record([&cols.area_nm, &cols.measure_dt, &cols.tsp, &cols.sox, &cols.nox])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for k in 0..self.len() {
            w.write_record([
                self.station.clone(),
                format_timestamp(&self.timestamp(k)),
                cell(self.channels[0][k]),
                cell(self.channels[1][k]),
                cell(self.channels[2][k]),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Places records on a gap-free 30-minute grid from the earliest to the
/// latest timestamp. Input order does not matter.
pub fn regularize(records: &[RawRecord]) -> Result<TimeSeries, IngestError> {
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let station = records[0].area_nm.clone();
    if let Some(other) = records.iter().find(|r| r.area_nm != station) {
        return Err(IngestError::MixedStations(station, other.area_nm.clone()));
    }

    let mut order: Vec<&RawRecord> = records.iter().collect();
    order.sort_by_key(|r| r.measure_dt);
    if let Some(w) = order.windows(2).find(|w| w[0].measure_dt == w[1].measure_dt) {
        return Err(IngestError::DuplicateTimestamp(format_timestamp(&w[0].measure_dt)));
    }
    if order.len() < 2 {
        return Err(IngestError::TooFewTimestamps(order.len()));
    }

    let start = order[0].measure_dt;
    let end = order[order.len() - 1].measure_dt;
    let len = ((end - start).num_minutes() / STEP_MINUTES) as usize + 1;
    let mut channels: [Vec<Option<f64>>; 3] = [vec![None; len], vec![None; len], vec![None; len]];
    for r in order {
        let k = ((r.measure_dt - start).num_minutes() / STEP_MINUTES) as usize;
        for p in Pollutant::ALL {
            channels[p.index()][k] = r.reading(p);
        }
    }
    Ok(TimeSeries {
        station,
        start,
        channels,
    })
}
