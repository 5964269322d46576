//! Tide-gauge selection: by name, nearest to a proxy site, or all gauges
//! within a fixed great-circle radius.

use super::psmsl::PsmslAnnualRecord;
use super::IngestError;
use crate::data::SiteMeta;
use std::collections::BTreeMap;

/// How tide gauges are chosen from the loaded archive.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSelection {
    /// Station names to include unconditionally (exact match).
    pub named_list: Vec<String>,
    /// For each proxy site, include the nearest gauge with a long enough record.
    pub nearest_to_proxy: bool,
    /// Include every gauge with a long enough record within `radius_deg` of any proxy site.
    pub all_within_radius: bool,
    /// A gauge must have strictly more than this many annual values.
    pub min_years: u32,
    /// Great-circle radius, degrees of arc.
    pub radius_deg: f64,
    /// Averaging window for the annual series, years.
    pub sediment_average_years: u32,
}

impl Default for GaugeSelection {
    fn default() -> Self {
        GaugeSelection {
            named_list: Vec::new(),
            nearest_to_proxy: false,
            all_within_radius: false,
            min_years: 20,
            radius_deg: 1.0,
            sediment_average_years: 10,
        }
    }
}

impl GaugeSelection {
    pub fn any_enabled(&self) -> bool {
        !self.named_list.is_empty() || self.nearest_to_proxy || self.all_within_radius
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !self.any_enabled() {
            return Err(IngestError::NoSelectionMechanism);
        }
        assert!(self.min_years >= 1, "min_years must be >= 1");
        assert!(self.radius_deg > 0.0, "radius_deg must be > 0");
        assert!(
            self.sediment_average_years >= 1,
            "sediment_average_years must be >= 1"
        );
        Ok(())
    }
}

/// Great-circle central angle between two points, in degrees of arc
/// (haversine form; multiply by pi/180 * 6371 km for a distance).
pub fn great_circle_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let rad = std::f64::consts::PI / 180.0;
    let dlat = (lat2 - lat1) * rad / 2.0;
    let dlon = (lon2 - lon1) * rad / 2.0;
    let a = dlat.sin().powi(2) + (lat1 * rad).cos() * (lat2 * rad).cos() * dlon.sin().powi(2);
    2.0 * a.sqrt().min(1.0).asin() / rad
}

/// Applies the selection rules and returns the union of the selected records,
/// deduplicated by station id and sorted for determinism.
pub fn select_tide_gauges(
    proxy_sites: &[SiteMeta],
    gauges: &[PsmslAnnualRecord],
    sel: &GaugeSelection,
) -> Result<Vec<PsmslAnnualRecord>, IngestError> {
    sel.validate()?;
    let mut chosen: BTreeMap<String, PsmslAnnualRecord> = BTreeMap::new();

    for name in &sel.named_list {
        let gauge = gauges
            .iter()
            .find(|g| &g.station_name == name)
            .ok_or_else(|| IngestError::UnknownGaugeName(name.clone()))?;
        chosen.entry(gauge.station_id.clone()).or_insert_with(|| gauge.clone());
    }

    let long_enough: Vec<&PsmslAnnualRecord> = gauges
        .iter()
        .filter(|g| g.n_years() > sel.min_years as usize)
        .collect();

    if sel.nearest_to_proxy {
        for site in proxy_sites {
            let nearest = long_enough.iter().min_by(|a, b| {
                let da = great_circle_deg(site.latitude, site.longitude, a.latitude, a.longitude);
                let db = great_circle_deg(site.latitude, site.longitude, b.latitude, b.longitude);
                da.partial_cmp(&db)
                    .unwrap()
                    .then(a.station_id.cmp(&b.station_id))
            });
            if let Some(g) = nearest {
                chosen.entry(g.station_id.clone()).or_insert_with(|| (*g).clone());
            }
        }
    }

    if sel.all_within_radius {
        for g in &long_enough {
            let within = proxy_sites.iter().any(|site| {
                great_circle_deg(site.latitude, site.longitude, g.latitude, g.longitude)
                    <= sel.radius_deg
            });
            if within {
                chosen.entry(g.station_id.clone()).or_insert_with(|| (*g).clone());
            }
        }
    }

    Ok(chosen.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataType;
    use crate::ingest::psmsl::AnnualRow;

    fn gauge(id: &str, name: &str, lat: f64, lon: f64, years: usize) -> PsmslAnnualRecord {
        PsmslAnnualRecord {
            station_id: id.to_string(),
            station_name: name.to_string(),
            latitude: lat,
            longitude: lon,
            rows: (0..years)
                .map(|i| AnnualRow {
                    year: 1950 + i as i32,
                    rlr_mm: Some(7000.0 + i as f64),
                    missing_days: 0,
                    quality_flag: "000".to_string(),
                })
                .collect(),
        }
    }

    fn proxy(lat: f64, lon: f64) -> SiteMeta {
        SiteMeta {
            site_id: "P, R".to_string(),
            latitude: lat,
            longitude: lon,
            linear_rate: None,
            linear_rate_err: None,
            data_type: DataType::ProxyRecord,
        }
    }

    #[test]
    fn nearest_prefers_the_closer_long_record() {
        let sites = vec![proxy(34.971, -76.38)];
        let gauges = vec![
            gauge("1", "NEARBY", 34.971 + 0.5, -76.38, 25),
            gauge("2", "FARAWAY", 34.971 + 2.0, -76.38, 50),
        ];
        let sel = GaugeSelection {
            nearest_to_proxy: true,
            ..GaugeSelection::default()
        };
        let out = select_tide_gauges(&sites, &gauges, &sel).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].station_name, "NEARBY");
    }

    #[test]
    fn short_records_are_excluded_by_the_twenty_year_rule() {
        let sites = vec![proxy(47.24, -53.96)];
        let gauges = vec![gauge("9", "SHORT", 47.3, -53.99, 15)];
        let sel = GaugeSelection {
            all_within_radius: true,
            ..GaugeSelection::default()
        };
        let out = select_tide_gauges(&sites, &gauges, &sel).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn named_union_with_radius_deduplicates() {
        let sites = vec![proxy(47.24, -53.96)];
        let gauges = vec![
            gauge("393", "ARGENTIA", 47.3, -53.99, 50),
            gauge("12", "BREST", 48.383, -4.495, 100),
        ];
        let sel = GaugeSelection {
            named_list: vec!["ARGENTIA".to_string()],
            all_within_radius: true,
            ..GaugeSelection::default()
        };
        let out = select_tide_gauges(&sites, &gauges, &sel).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].station_name, "ARGENTIA");
    }

    #[test]
    fn unknown_name_is_an_error() {
        let sel = GaugeSelection {
            named_list: vec!["NOWHERE".to_string()],
            ..GaugeSelection::default()
        };
        match select_tide_gauges(&[], &[], &sel) {
            Err(IngestError::UnknownGaugeName(n)) => assert_eq!(n, "NOWHERE"),
            other => panic!("expected UnknownGaugeName, got {other:?}"),
        }
    }

    #[test]
    fn no_mechanism_is_an_error() {
        assert!(matches!(
            select_tide_gauges(&[], &[], &GaugeSelection::default()),
            Err(IngestError::NoSelectionMechanism)
        ));
    }

    #[test]
    fn distance_is_symmetric_and_zero_at_identity() {
        let d = great_circle_deg(47.3, -53.99, 47.3, -53.99);
        assert!(d.abs() < 1e-12);
        let a = great_circle_deg(10.0, 20.0, 11.0, 21.0);
        let b = great_circle_deg(11.0, 21.0, 10.0, 20.0);
        assert!((a - b).abs() < 1e-12);
        // one degree of latitude is one degree of arc
        assert!((great_circle_deg(0.0, 0.0, 1.0, 0.0) - 1.0).abs() < 1e-9);
    }
}
