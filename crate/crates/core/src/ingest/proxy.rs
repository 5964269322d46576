//! Proxy CSV loader.
//!
//! Expected header (any column order): Region, Site, Latitude, Longitude,
//! RSL, RSL_err, Age, Age_err. Optional linear_rate / linear_rate_err columns
//! are honored and attached to the site table.

use super::IngestError;
use crate::data::{site_key, validate_dataset, DataType, Dataset, Observation};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

const REQUIRED: [&str; 8] = [
    "Region",
    "Site",
    "Latitude",
    "Longitude",
    "RSL",
    "RSL_err",
    "Age",
    "Age_err",
];

pub fn load_proxy_csv<P: AsRef<Path>>(path: P) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|_| IngestError::FileNotFound(path.to_path_buf()))?;
    load_proxy_reader(file)
}

pub fn load_proxy_reader<R: Read>(reader: R) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|_| IngestError::MissingColumn("header row".to_string()))?
        .clone();
    let mut col: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        col.insert(h, i);
    }
    for name in REQUIRED {
        if !col.contains_key(name) {
            return Err(IngestError::MissingColumn(name.to_string()));
        }
    }
    let rate_col = col.get("linear_rate").copied();
    let rate_err_col = col.get("linear_rate_err").copied();

    let mut observations = Vec::new();
    // first-seen user-supplied rate per site
    let mut user_rates: HashMap<String, (f64, f64)> = HashMap::new();

    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|_| IngestError::ParseError {
            row,
            column: "(record)".to_string(),
        })?;
        let field = |name: &str| -> &str { record.get(col[name]).unwrap_or("") };
        let num = |name: &str| -> Result<f64, IngestError> {
            field(name).parse::<f64>().map_err(|_| IngestError::ParseError {
                row,
                column: name.to_string(),
            })
        };

        let site = field("Site").to_string();
        let region = field("Region").to_string();
        let site_id = site_key(&site, &region);
        observations.push(Observation {
            site_id: site_id.clone(),
            region,
            latitude: num("Latitude")?,
            longitude: num("Longitude")?,
            rsl: num("RSL")?,
            rsl_err: num("RSL_err")?,
            age: num("Age")?,
            age_err: num("Age_err")?,
            data_type: DataType::ProxyRecord,
        });

        if let (Some(rc), Some(rec)) = (rate_col, rate_err_col) {
            let r = record.get(rc).unwrap_or("");
            let e = record.get(rec).unwrap_or("");
            if !r.is_empty() && !e.is_empty() {
                let r: f64 = r.parse().map_err(|_| IngestError::ParseError {
                    row,
                    column: "linear_rate".to_string(),
                })?;
                let e: f64 = e.parse().map_err(|_| IngestError::ParseError {
                    row,
                    column: "linear_rate_err".to_string(),
                })?;
                user_rates.entry(site_id).or_insert((r, e));
            }
        }
    }

    let mut data = validate_dataset(Dataset {
        observations,
        sites: Vec::new(),
    })?;
    for s in &mut data.sites {
        if let Some((r, e)) = user_rates.get(&s.site_id) {
            s.linear_rate = Some(*r);
            s.linear_rate_err = Some(*e);
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
Region,Site,Latitude,Longitude,RSL,RSL_err,Age,Age_err
North Carolina,Cedar Island,34.971,-76.38,-0.12,0.06,2005,2.25
North Carolina,Cedar Island,34.971,-76.38,-0.14,0.06,1996,2.0
North Carolina,Cedar Island,34.971,-76.38,-0.16,0.06,1988,5.0
";

    #[test]
    fn loads_small_file() {
        let d = load_proxy_reader(SMALL.as_bytes()).unwrap();
        assert_eq!(d.n_observations(), 3);
        assert_eq!(d.n_sites(), 1);
        assert_eq!(d.sites[0].site_id, "Cedar Island, North Carolina");
        assert_eq!(d.observations[0].age, 1988.0); // sorted ascending
    }

    #[test]
    fn missing_column_is_named() {
        let text = "Region,Site,Latitude,Longitude,RSL,RSL_err,Age\nr,s,0,0,0,0,0\n";
        match load_proxy_reader(text.as_bytes()) {
            Err(IngestError::MissingColumn(c)) => assert_eq!(c, "Age_err"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let text = "\
Region,Site,Latitude,Longitude,RSL,RSL_err,Age,Age_err
r,s,0,0,0.1,0.05,1900,5
r,s,0,0,oops,0.05,1950,5
";
        match load_proxy_reader(text.as_bytes()) {
            Err(IngestError::ParseError { row, column }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "RSL");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn user_rate_columns_attach_to_sites() {
        let text = "\
Region,Site,Latitude,Longitude,RSL,RSL_err,Age,Age_err,linear_rate,linear_rate_err
r,s,1,2,0.1,0.05,1900,5,0.9,0.2
r,s,1,2,0.2,0.05,1950,5,0.9,0.2
";
        let d = load_proxy_reader(text.as_bytes()).unwrap();
        assert_eq!(d.sites[0].linear_rate, Some(0.9));
        assert_eq!(d.sites[0].linear_rate_err, Some(0.2));
    }
}
