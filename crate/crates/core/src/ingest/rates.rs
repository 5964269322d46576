//! Per-site long-term linear rates.
//!
//! Proxy sites without user-supplied rates get a weighted-least-squares slope
//! of RSL on age, restricted to pre-1800 CE data when enough such points
//! exist, so that the estimate reflects the slow isostatic trend rather than
//! modern acceleration. Tide-gauge sites take their rate from a user-provided
//! GIA model table with a fixed 0.3 mm/yr uncertainty.

use super::IngestError;
use crate::data::{DataType, Dataset};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

/// Cutoff for the empirical proxy rate: only ages at or before this are used
/// when at least `MIN_POINTS` of them exist.
const PRE_INDUSTRIAL_CUTOFF: f64 = 1800.0;
const MIN_POINTS: usize = 3;
/// Uncertainty attached to GIA-table rates, mm/yr.
const GIA_RATE_ERR: f64 = 0.3;

/// Weighted least squares of `y` on `x` with weights `w` (inverse variances).
/// Returns `(slope, slope standard error)`; the standard error is scaled by
/// the weighted residual variance, so exactly collinear data report zero.
pub fn weighted_least_squares(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let xbar = x.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>() / sw;
    let ybar = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(xi, wi)| wi * (xi - xbar).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((xi, yi), wi)| wi * (xi - xbar) * (yi - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((xi, yi), wi)| wi * (yi - intercept - slope * xi).powi(2))
        .sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let se = (rss / dof / sxx).sqrt();
    (slope, se)
}

/// Fills in `linear_rate` / `linear_rate_err` on every site that does not
/// already carry user-supplied values.
pub fn estimate_linear_rates(
    data: Dataset,
    gia_table: Option<&HashMap<String, (f64, f64)>>,
) -> Result<Dataset, IngestError> {
    let observations = data.observations;
    let mut sites = data.sites;

    for site in &mut sites {
        if site.linear_rate.is_some() && site.linear_rate_err.is_some() {
            continue;
        }
        match site.data_type {
            DataType::ProxyRecord => {
                let rows: Vec<(f64, f64, f64)> = observations
                    .iter()
                    .filter(|o| o.site_id == site.site_id)
                    .map(|o| (o.age, o.rsl, o.rsl_err))
                    .collect();
                let early: Vec<(f64, f64, f64)> = rows
                    .iter()
                    .cloned()
                    .filter(|(age, _, _)| *age <= PRE_INDUSTRIAL_CUTOFF)
                    .collect();
                let used = if early.len() >= MIN_POINTS { early } else { rows };
                if used.len() < MIN_POINTS {
                    return Err(IngestError::InsufficientData(site.site_id.clone()));
                }
                let x: Vec<f64> = used.iter().map(|r| r.0).collect();
                let y: Vec<f64> = used.iter().map(|r| r.1).collect();
                let w: Vec<f64> = used
                    .iter()
                    .map(|r| {
                        let err = if r.2 > 0.0 { r.2 } else { 1e-6 };
                        1.0 / (err * err)
                    })
                    .collect();
                let (slope_m_per_yr, se_m_per_yr) = weighted_least_squares(&x, &y, &w);
                site.linear_rate = Some(slope_m_per_yr * 1000.0);
                // a zero standard error would fail dataset validation; keep a
                // tiny floor for exactly collinear inputs
                site.linear_rate_err = Some((se_m_per_yr * 1000.0).max(1e-9));
            }
            DataType::TideGaugeData => {
                let entry = gia_table.and_then(|t| {
                    t.get(&site.site_id).or_else(|| {
                        site.site_id
                            .rsplit_once(", ")
                            .and_then(|(name, _)| t.get(name))
                    })
                });
                match entry {
                    Some((rate, err)) => {
                        site.linear_rate = Some(*rate);
                        site.linear_rate_err = Some(if *err > 0.0 { *err } else { GIA_RATE_ERR });
                    }
                    None => return Err(IngestError::InsufficientData(site.site_id.clone())),
                }
            }
        }
    }

    Ok(Dataset {
        observations,
        sites,
    })
}

/// Reads a GIA rate table CSV with columns `name,rate` and an optional `err`
/// column (defaults to 0.3 mm/yr).
pub fn load_gia_csv<P: AsRef<Path>>(path: P) -> Result<HashMap<String, (f64, f64)>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|_| IngestError::FileNotFound(path.to_path_buf()))?;
    load_gia_reader(file)
}

pub fn load_gia_reader<R: Read>(reader: R) -> Result<HashMap<String, (f64, f64)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|_| IngestError::MissingColumn("header row".to_string()))?
        .clone();
    let name_col = headers
        .iter()
        .position(|h| h == "name")
        .ok_or_else(|| IngestError::MissingColumn("name".to_string()))?;
    let rate_col = headers
        .iter()
        .position(|h| h == "rate")
        .ok_or_else(|| IngestError::MissingColumn("rate".to_string()))?;
    let err_col = headers.iter().position(|h| h == "err");

    let mut table = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|_| IngestError::ParseError {
            row,
            column: "(record)".to_string(),
        })?;
        let rate: f64 = record
            .get(rate_col)
            .unwrap_or("")
            .parse()
            .map_err(|_| IngestError::ParseError {
                row,
                column: "rate".to_string(),
            })?;
        let err = match err_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => s.parse().map_err(|_| IngestError::ParseError {
                row,
                column: "err".to_string(),
            })?,
            None => GIA_RATE_ERR,
        };
        table.insert(record.get(name_col).unwrap_or("").to_string(), (rate, err));
    }
    Ok(table)
}
