//! Data ingestion: proxy CSV files, local PSMSL annual tide-gauge archives,
//! datum correction, decadal averaging, gauge selection and linear-rate
//! estimation.

mod gauges;
mod proxy;
mod psmsl;
mod rates;

pub use gauges::{great_circle_deg, select_tide_gauges, GaugeSelection};
pub use proxy::{load_proxy_csv, load_proxy_reader};
pub use psmsl::{
    decadal_average, gauge_observations, load_psmsl_dir, parse_psmsl_annual,
    parse_psmsl_annual_reader, psmsl_annual_url, read_station_catalogue,
    read_station_catalogue_reader, AnnualRow, PsmslAnnualRecord, StationMeta, TideGaugeFragment,
    TIDE_GAUGE_REGION,
};
pub use rates::{estimate_linear_rates, load_gia_csv, load_gia_reader, weighted_least_squares};

use crate::data::{validate_dataset, DataError, Dataset};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("missing required column {0}")]
    MissingColumn(String),

    #[error("row {row}: cannot parse column {column}")]
    ParseError { row: usize, column: String },

    #[error("line {line}: malformed annual record ({reason})")]
    MalformedLine { line: usize, reason: String },

    #[error("annual file contains no data lines")]
    EmptyFile,

    #[error("annual series is empty")]
    EmptySeries,

    #[error("no tide gauge named {0} in the loaded archive")]
    UnknownGaugeName(String),

    #[error("site {0}: fewer than 3 usable observations and no user-supplied linear rate")]
    InsufficientData(String),

    #[error("tide gauges requested but no selection mechanism enabled")]
    NoSelectionMechanism,

    #[error(transparent)]
    Data(#[from] DataError),
}

/// Converts the selected tide-gauge records into decadally averaged
/// observations and merges them into the dataset, re-validating the result.
pub fn attach_tide_gauges(
    data: Dataset,
    selected: &[PsmslAnnualRecord],
    sediment_average_years: u32,
) -> Result<Dataset, IngestError> {
    let mut observations = data.observations;
    let mut sites = data.sites;
    for record in selected {
        let (obs, meta) = gauge_observations(record, sediment_average_years)?;
        if sites.iter().any(|s| s.site_id == meta.site_id) {
            continue;
        }
        observations.extend(obs);
        sites.push(meta);
    }
    Ok(validate_dataset(Dataset {
        observations,
        sites,
    })?)
}
