//! PSMSL annual tide-gauge files: parsing, RLR datum correction and decadal
//! averaging.
//!
//! Annual files are semicolon-separated with four fields per line
//! (`year; rlr height in mm; missing days; quality flag`) and the sentinel
//! `-99999` marking a missing height. Station coordinates come from a sidecar
//! catalogue CSV with columns `station_id,name,latitude,longitude`; the data
//! file for a station is `<station_id>.rlrdata` in the same directory.

use super::IngestError;
use crate::data::{site_key, DataType, Observation, SiteMeta};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

/// Region label used in the canonical site key of tide-gauge sites, which
/// have no region column of their own.
pub const TIDE_GAUGE_REGION: &str = "Tide Gauge";

const RLR_OFFSET_MM: f64 = 7000.0;
const MISSING_SENTINEL: f64 = -99999.0;
/// Floor on the decadal-average vertical error, metres (5 mm).
const MIN_FRAGMENT_RSL_ERR: f64 = 0.005;

/// Station metadata from the catalogue CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StationMeta {
    pub station_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnualRow {
    pub year: i32,
    /// RLR height in mm; `None` when the file carried the missing sentinel.
    pub rlr_mm: Option<f64>,
    pub missing_days: u32,
    pub quality_flag: String,
}

/// One station's parsed annual series.
#[derive(Debug, Clone, PartialEq)]
pub struct PsmslAnnualRecord {
    pub station_id: String,
    pub station_name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub rows: Vec<AnnualRow>,
}

impl PsmslAnnualRecord {
    /// Count of non-missing annual values.
    pub fn n_years(&self) -> usize {
        self.rows.iter().filter(|r| r.rlr_mm.is_some()).count()
    }

    pub fn site_id(&self) -> String {
        site_key(&self.station_name, TIDE_GAUGE_REGION)
    }
}

/// URL under which the PSMSL archive serves the annual RLR file for a
/// station. Network access is out of scope here; a directory of
/// pre-downloaded files laid out the same way replaces it.
pub fn psmsl_annual_url(station_id: &str) -> String {
    format!("https://psmsl.org/data/obtaining/rlr.annual.data/{station_id}.rlrdata")
}

pub fn parse_psmsl_annual<P: AsRef<Path>>(
    path: P,
    station: &StationMeta,
) -> Result<PsmslAnnualRecord, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|_| IngestError::FileNotFound(path.to_path_buf()))?;
    parse_psmsl_annual_reader(file, station)
}

pub fn parse_psmsl_annual_reader<R: Read>(
    reader: R,
    station: &StationMeta,
) -> Result<PsmslAnnualRecord, IngestError> {
    let mut rows: Vec<AnnualRow> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(';').map(|f| f.trim()).collect();
        if fields.len() != 4 {
            return Err(IngestError::MalformedLine {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let year: i32 = fields[0].parse().map_err(|_| IngestError::MalformedLine {
            line: line_no,
            reason: format!("bad year {:?}", fields[0]),
        })?;
        let height: f64 = fields[1].parse().map_err(|_| IngestError::MalformedLine {
            line: line_no,
            reason: format!("bad height {:?}", fields[1]),
        })?;
        let missing_days: u32 = fields[2].parse().map_err(|_| IngestError::MalformedLine {
            line: line_no,
            reason: format!("bad missing-day count {:?}", fields[2]),
        })?;
        if let Some(last) = rows.last() {
            if year <= last.year {
                return Err(IngestError::MalformedLine {
                    line: line_no,
                    reason: format!("year {} not after {}", year, last.year),
                });
            }
        }
        rows.push(AnnualRow {
            year,
            rlr_mm: if height == MISSING_SENTINEL { None } else { Some(height) },
            missing_days,
            quality_flag: fields[3].to_string(),
        });
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(PsmslAnnualRecord {
        station_id: station.station_id.clone(),
        station_name: station.name.clone(),
        latitude: station.latitude,
        longitude: station.longitude,
        rows,
    })
}

/// Reverts the RLR datum (7000 mm) and converts to metres; missing rows are
/// dropped. Affine and order-preserving.
pub fn rlr_to_rsl(record: &PsmslAnnualRecord) -> Vec<(i32, f64)> {
    record
        .rows
        .iter()
        .filter_map(|r| r.rlr_mm.map(|h| (r.year, (h - RLR_OFFSET_MM) / 1000.0)))
        .collect()
}

/// Decadally averaged slice of a tide-gauge series, shaped like a proxy
/// observation fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct TideGaugeFragment {
    /// Window midpoint, years CE.
    pub age: f64,
    /// Window mean, metres.
    pub rsl: f64,
    /// max(window sd, 5 mm), metres.
    pub rsl_err: f64,
    /// window length / 4, years.
    pub age_err: f64,
}

/// Averages an annual series over consecutive calendar-aligned windows of
/// `window_years` (window start = floor(year/window)*window). Each window
/// holding at least one value yields one fragment at the window midpoint.
pub fn decadal_average(
    series: &[(i32, f64)],
    window_years: u32,
) -> Result<Vec<TideGaugeFragment>, IngestError> {
    assert!(window_years >= 1, "window_years must be >= 1");
    if series.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    let w = window_years as i32;
    let mut windows: std::collections::BTreeMap<i32, Vec<f64>> = std::collections::BTreeMap::new();
    for &(year, rsl) in series {
        let start = year.div_euclid(w) * w;
        windows.entry(start).or_default().push(rsl);
    }
    let fragments = windows
        .into_iter()
        .map(|(start, values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = if values.len() > 1 {
                let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                (ss / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            TideGaugeFragment {
                age: start as f64 + (window_years as f64 - 1.0) / 2.0,
                rsl: mean,
                rsl_err: sd.max(MIN_FRAGMENT_RSL_ERR),
                age_err: window_years as f64 / 4.0,
            }
        })
        .collect();
    Ok(fragments)
}

/// Full per-station pipeline: datum correction, decadal averaging, and
/// conversion into observations plus a site entry.
pub fn gauge_observations(
    record: &PsmslAnnualRecord,
    window_years: u32,
) -> Result<(Vec<Observation>, SiteMeta), IngestError> {
    let series = rlr_to_rsl(record);
    let fragments = decadal_average(&series, window_years)?;
    let site_id = record.site_id();
    let observations = fragments
        .into_iter()
        .map(|f| Observation {
            site_id: site_id.clone(),
            region: TIDE_GAUGE_REGION.to_string(),
            latitude: record.latitude,
            longitude: record.longitude,
            rsl: f.rsl,
            rsl_err: f.rsl_err,
            age: f.age,
            age_err: f.age_err,
            data_type: DataType::TideGaugeData,
        })
        .collect();
    let meta = SiteMeta {
        site_id,
        latitude: record.latitude,
        longitude: record.longitude,
        linear_rate: None,
        linear_rate_err: None,
        data_type: DataType::TideGaugeData,
    };
    Ok((observations, meta))
}

pub fn read_station_catalogue<P: AsRef<Path>>(path: P) -> Result<Vec<StationMeta>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|_| IngestError::FileNotFound(path.to_path_buf()))?;
    read_station_catalogue_reader(file)
}

pub fn read_station_catalogue_reader<R: Read>(reader: R) -> Result<Vec<StationMeta>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|_| IngestError::MissingColumn("header row".to_string()))?
        .clone();
    let idx = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (ci, ni, la, lo) = (idx("station_id")?, idx("name")?, idx("latitude")?, idx("longitude")?);
    let mut stations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|_| IngestError::ParseError {
            row,
            column: "(record)".to_string(),
        })?;
        let parse = |col: usize, name: &str| -> Result<f64, IngestError> {
            record
                .get(col)
                .unwrap_or("")
                .parse()
                .map_err(|_| IngestError::ParseError {
                    row,
                    column: name.to_string(),
                })
        };
        stations.push(StationMeta {
            station_id: record.get(ci).unwrap_or("").to_string(),
            name: record.get(ni).unwrap_or("").to_string(),
            latitude: parse(la, "latitude")?,
            longitude: parse(lo, "longitude")?,
        });
    }
    Ok(stations)
}

/// Loads every catalogued station whose `<station_id>.rlrdata` file exists in
/// `dir`. Stations without a data file are skipped with a warning, so a
/// partial local mirror of the archive is usable.
pub fn load_psmsl_dir<P: AsRef<Path>>(dir: P) -> Result<Vec<PsmslAnnualRecord>, IngestError> {
    let dir = dir.as_ref();
    let stations = read_station_catalogue(dir.join("catalogue.csv"))?;
    let mut records = Vec::new();
    for station in &stations {
        let path = dir.join(format!("{}.rlrdata", station.station_id));
        if !path.exists() {
            log::warn!(
                "station {} ({}) listed in catalogue but {} is absent; skipping",
                station.station_id,
                station.name,
                path.display()
            );
            continue;
        }
        records.push(parse_psmsl_annual(&path, station)?);
    }
    Ok(records)
}
