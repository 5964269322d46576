//! Domain types shared by every model: observations, sites, validated
//! datasets, prediction grids and run configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

pub const AGE_UNIT: &str = "Common Era";

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DataError {
    #[error("dataset contains no observations")]
    MissingData,

    #[error("missing required column {0}")]
    MissingColumn(String),

    #[error("observation {row}: column {column} is not finite")]
    NonFiniteValue { row: usize, column: String },

    #[error("observation {row}: column {column} is negative but must be >= 0")]
    NegativeError { row: usize, column: String },

    #[error("observation {row}: latitude/longitude outside [-90,90] x [-180,180]")]
    CoordinateOutOfRange { row: usize },

    #[error("observation {row}: site {site_id} has no matching site entry")]
    UnknownSite { row: usize, site_id: String },

    #[error("site {site_id} appears more than once in the site table")]
    DuplicateSite { site_id: String },

    #[error("site {site_id} has {count} observation(s); at least 2 are required")]
    TooFewObservations { site_id: String, count: usize },

    #[error("site {site_id}: linear_rate_err must be > 0 when linear_rate is present")]
    InvalidLinearRate { site_id: String },

    #[error("prediction grid resolution must be > 0")]
    NonPositiveResolution,

    #[error("invalid model configuration: {0}")]
    InvalidSpec(String),
}

/// Provenance of a record: dated geological proxy or instrumental tide gauge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    ProxyRecord,
    TideGaugeData,
}

impl DataType {
    pub fn label(self) -> &'static str {
        match self {
            DataType::ProxyRecord => "ProxyRecord",
            DataType::TideGaugeData => "TideGaugeData",
        }
    }
}

/// One dated relative sea-level measurement with 1-sd errors in both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Canonical site key, `"Site, Region"`.
    pub site_id: String,
    pub region: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Relative sea level, metres.
    pub rsl: f64,
    /// 1 sd error on `rsl`, metres.
    pub rsl_err: f64,
    /// Age, years CE.
    pub age: f64,
    /// 1 sd error on `age`, years.
    pub age_err: f64,
    pub data_type: DataType,
}

/// Builds the canonical site key used throughout the crate.
pub fn site_key(site: &str, region: &str) -> String {
    format!("{}, {}", site.trim(), region.trim())
}

/// Per-site metadata, including the empirically estimated or user-supplied
/// long-term linear rate (mm/yr) used by the GAM decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeta {
    pub site_id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// mm/yr.
    pub linear_rate: Option<f64>,
    /// mm/yr, 1 sd.
    pub linear_rate_err: Option<f64>,
    pub data_type: DataType,
}

/// Validated collection of observations plus site metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub sites: Vec<SiteMeta>,
}

impl Dataset {
    /// Assembles and validates a dataset in one step, deriving the site table
    /// from the observations.
    pub fn from_observations(observations: Vec<Observation>) -> Result<Self, DataError> {
        validate_dataset(Dataset {
            observations,
            sites: Vec::new(),
        })
    }

    pub fn age_unit(&self) -> &'static str {
        AGE_UNIT
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, site_id: &str) -> Option<&SiteMeta> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }

    /// Indices of the observations belonging to one site, in canonical order.
    pub fn site_rows(&self, site_id: &str) -> Vec<usize> {
        self.observations
            .iter()
            .enumerate()
            .filter(|(_, o)| o.site_id == site_id)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_linear_rates(&self) -> bool {
        !self.sites.is_empty()
            && self
                .sites
                .iter()
                .all(|s| s.linear_rate.is_some() && s.linear_rate_err.is_some())
    }

    pub fn has_tide_gauges(&self) -> bool {
        self.sites.iter().any(|s| s.data_type == DataType::TideGaugeData)
    }

    /// SHA-256 over a canonical text rendering; stable across runs for
    /// identical data.
    pub fn fingerprint(&self) -> String {
        let mut text = String::new();
        for o in &self.observations {
            let _ = writeln!(
                text,
                "{}|{:e}|{:e}|{:e}|{:e}|{:e}|{:e}|{}",
                o.site_id, o.latitude, o.longitude, o.rsl, o.rsl_err, o.age, o.age_err,
                o.data_type.label()
            );
        }
        for s in &self.sites {
            let _ = writeln!(
                text,
                "{}|{:e}|{:e}|{:?}|{:?}|{}",
                s.site_id, s.latitude, s.longitude, s.linear_rate, s.linear_rate_err,
                s.data_type.label()
            );
        }
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }
}

/// Validates and canonicalizes a dataset.
///
/// Observations are sorted by site then age; the site table is derived from
/// the observations when empty, otherwise every observation must resolve to
/// exactly one site entry. Idempotent.
pub fn validate_dataset(raw: Dataset) -> Result<Dataset, DataError> {
    if raw.observations.is_empty() {
        return Err(DataError::MissingData);
    }
    for (i, o) in raw.observations.iter().enumerate() {
        let row = i + 1;
        for (name, v) in [
            ("RSL", o.rsl),
            ("RSL_err", o.rsl_err),
            ("Age", o.age),
            ("Age_err", o.age_err),
            ("Latitude", o.latitude),
            ("Longitude", o.longitude),
        ] {
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    row,
                    column: name.to_string(),
                });
            }
        }
        if o.rsl_err < 0.0 {
            return Err(DataError::NegativeError {
                row,
                column: "RSL_err".to_string(),
            });
        }
        if o.age_err < 0.0 {
            return Err(DataError::NegativeError {
                row,
                column: "Age_err".to_string(),
            });
        }
        if !(-90.0..=90.0).contains(&o.latitude) || !(-180.0..=180.0).contains(&o.longitude) {
            return Err(DataError::CoordinateOutOfRange { row });
        }
    }

    let mut sites = raw.sites;
    if sites.is_empty() {
        let mut derived: BTreeMap<String, SiteMeta> = BTreeMap::new();
        for o in &raw.observations {
            derived.entry(o.site_id.clone()).or_insert_with(|| SiteMeta {
                site_id: o.site_id.clone(),
                latitude: o.latitude,
                longitude: o.longitude,
                linear_rate: None,
                linear_rate_err: None,
                data_type: o.data_type,
            });
        }
        sites = derived.into_values().collect();
    } else {
        let mut seen = std::collections::BTreeSet::new();
        for s in &sites {
            if !seen.insert(s.site_id.clone()) {
                return Err(DataError::DuplicateSite {
                    site_id: s.site_id.clone(),
                });
            }
        }
        for (i, o) in raw.observations.iter().enumerate() {
            if !seen.contains(&o.site_id) {
                return Err(DataError::UnknownSite {
                    row: i + 1,
                    site_id: o.site_id.clone(),
                });
            }
        }
    }

    for s in &sites {
        if let Some(_rate) = s.linear_rate {
            match s.linear_rate_err {
                Some(e) if e > 0.0 => {}
                _ => {
                    return Err(DataError::InvalidLinearRate {
                        site_id: s.site_id.clone(),
                    })
                }
            }
        }
    }

    let mut observations = raw.observations;
    observations.sort_by(|a, b| {
        a.site_id
            .cmp(&b.site_id)
            .then(a.age.partial_cmp(&b.age).unwrap())
    });
    sites.sort_by(|a, b| a.site_id.cmp(&b.site_id));

    for s in &sites {
        let count = observations.iter().filter(|o| o.site_id == s.site_id).count();
        if count < 2 {
            return Err(DataError::TooFewObservations {
                site_id: s.site_id.clone(),
                count,
            });
        }
    }

    Ok(Dataset {
        observations,
        sites,
    })
}

/// Text report on a validated dataset.
pub fn describe(data: &Dataset) -> String {
    let n_proxy = data
        .sites
        .iter()
        .filter(|s| s.data_type == DataType::ProxyRecord)
        .count();
    let n_tg = data.n_sites() - n_proxy;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "This is a valid input dataset with {} observations and {} site(s).",
        data.n_observations(),
        data.n_sites()
    );
    let _ = writeln!(
        out,
        "There are {} proxy site(s) and {} tide gauge site(s).",
        n_proxy, n_tg
    );
    let _ = writeln!(out, "The age units are; {}.", data.age_unit());
    if data.has_tide_gauges() {
        let _ = writeln!(out, "Decadally averaged tide gauge data was included.");
    } else {
        let _ = writeln!(
            out,
            "Decadally averaged tide gauge data was not included. It is recommended for the ni_gam_decomp model."
        );
    }
    if data.has_linear_rates() {
        let _ = writeln!(out, "The linear_rate and linear_rate_err have been included.");
    } else {
        let _ = writeln!(
            out,
            "The linear_rate or linear_rate_err was not included. It is required for the ni_gam_decomp model."
        );
    }
    out
}

/// One evaluation point of the per-site prediction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub site_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub data_type: DataType,
    pub age: f64,
}

/// Evenly spaced per-site ages at which posterior fields are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionGrid {
    pub rows: Vec<GridRow>,
    pub resolution_years: f64,
}

impl PredictionGrid {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn site_rows(&self, site_id: &str) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.site_id == site_id)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Builds the per-site arithmetic age grid spanning each site's observed age
/// range. When the span is not a multiple of the resolution the exact maximum
/// age is appended as a short final step, so record ends are always covered.
pub fn build_prediction_grid(
    data: &Dataset,
    resolution_years: f64,
) -> Result<PredictionGrid, DataError> {
    if !(resolution_years > 0.0) {
        return Err(DataError::NonPositiveResolution);
    }
    let mut rows = Vec::new();
    for site in &data.sites {
        let ages: Vec<f64> = data
            .observations
            .iter()
            .filter(|o| o.site_id == site.site_id)
            .map(|o| o.age)
            .collect();
        let min = ages.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = ages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tol = resolution_years * 1e-9;
        let steps = ((max - min) / resolution_years + tol).floor() as usize;
        let mut site_ages: Vec<f64> = (0..=steps)
            .map(|k| min + k as f64 * resolution_years)
            .collect();
        if max - site_ages[site_ages.len() - 1] > tol {
            site_ages.push(max);
        }
        for age in site_ages {
            rows.push(GridRow {
                site_id: site.site_id.clone(),
                latitude: site.latitude,
                longitude: site.longitude,
                data_type: site.data_type,
                age,
            });
        }
    }
    Ok(PredictionGrid {
        rows,
        resolution_years,
    })
}

/// The six model types, keyed by their user-facing codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelType {
    EivSlrT,
    EivCpT,
    EivIgpT,
    NiSplineT,
    NiSplineSt,
    NiGamDecomp,
}

impl ModelType {
    pub fn code(self) -> &'static str {
        match self {
            ModelType::EivSlrT => "eiv_slr_t",
            ModelType::EivCpT => "eiv_cp_t",
            ModelType::EivIgpT => "eiv_igp_t",
            ModelType::NiSplineT => "ni_spline_t",
            ModelType::NiSplineSt => "ni_spline_st",
            ModelType::NiGamDecomp => "ni_gam_decomp",
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        Some(match code {
            "eiv_slr_t" => ModelType::EivSlrT,
            "eiv_cp_t" => ModelType::EivCpT,
            "eiv_igp_t" => ModelType::EivIgpT,
            "ni_spline_t" => ModelType::NiSplineT,
            "ni_spline_st" => ModelType::NiSplineSt,
            "ni_gam_decomp" => ModelType::NiGamDecomp,
            _ => return None,
        })
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelType::EivSlrT => "Errors-in-variables simple linear regression",
            ModelType::EivCpT => "Errors-in-variables change point model",
            ModelType::EivIgpT => "Errors-in-variables integrated Gaussian process",
            ModelType::NiSplineT => "Noisy Input spline in time",
            ModelType::NiSplineSt => "Noisy Input spline in space and time",
            ModelType::NiGamDecomp => "Noisy Input generalised additive model decomposition",
        }
    }

    /// Noisy-input models are fitted twice, with a corrective variance term
    /// computed between the passes.
    pub fn is_noisy_input(self) -> bool {
        matches!(
            self,
            ModelType::NiSplineT | ModelType::NiSplineSt | ModelType::NiGamDecomp
        )
    }

    pub const ALL: [ModelType; 6] = [
        ModelType::EivSlrT,
        ModelType::EivCpT,
        ModelType::EivIgpT,
        ModelType::NiSplineT,
        ModelType::NiSplineSt,
        ModelType::NiGamDecomp,
    ];
}

/// Model choice plus sampler and output settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_type: ModelType,
    /// Number of change points for `eiv_cp_t` (1, 2 or 3).
    pub n_cp: usize,
    /// Basis size for the temporal spline and the GAM regional spline.
    pub knots_time: usize,
    /// Basis size of the tensor-product time margin.
    pub knots_tensor_time: usize,
    pub knots_lon: usize,
    pub knots_lat: usize,
    pub n_chains: usize,
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub ci_level: f64,
    pub grid_resolution_years: f64,
    pub rng_seed: u64,
}

impl ModelSpec {
    pub fn new(model_type: ModelType) -> Self {
        ModelSpec {
            model_type,
            n_cp: 1,
            knots_time: 20,
            knots_tensor_time: 12,
            knots_lon: 4,
            knots_lat: 4,
            n_chains: 3,
            n_iterations: 5000,
            n_burnin: 1000,
            thin: 4,
            ci_level: 0.95,
            grid_resolution_years: 50.0,
            rng_seed: 1234,
        }
    }

    /// Retained draws per chain; validation guarantees this divides evenly.
    pub fn retained_per_chain(&self) -> usize {
        (self.n_iterations - self.n_burnin) / self.thin
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: String| Err(DataError::InvalidSpec(msg));
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return fail(format!("ci_level must be in (0,1), got {}", self.ci_level));
        }
        if !(self.grid_resolution_years > 0.0) {
            return Err(DataError::NonPositiveResolution);
        }
        if self.n_chains == 0 {
            return fail("n_chains must be >= 1".to_string());
        }
        if self.n_iterations <= self.n_burnin {
            return fail(format!(
                "n_iterations ({}) must exceed n_burnin ({})",
                self.n_iterations, self.n_burnin
            ));
        }
        if self.thin == 0 {
            return fail("thin must be >= 1".to_string());
        }
        let kept = self.n_iterations - self.n_burnin;
        if kept % self.thin != 0 {
            return fail(format!(
                "(n_iterations - n_burnin) = {} is not a multiple of thin = {}",
                kept, self.thin
            ));
        }
        if self.model_type == ModelType::EivCpT && !(1..=3).contains(&self.n_cp) {
            return fail(format!("n_cp must be 1, 2 or 3, got {}", self.n_cp));
        }
        Ok(())
    }
}
