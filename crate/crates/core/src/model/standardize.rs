//! Internal scaling: ages are centered and scaled by the observation mean/sd,
//! RSL is centered only (so the known vertical errors stay in metres). The
//! transform record converts every output back exactly.

use crate::data::Dataset;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardize {
    pub age_mean: f64,
    pub age_sd: f64,
    pub rsl_mean: f64,
}

/// Fits the transform on a dataset's observations.
pub fn standardize(data: &Dataset) -> Standardize {
    let n = data.n_observations() as f64;
    let ages: Vec<f64> = data.observations.iter().map(|o| o.age).collect();
    let rsls: Vec<f64> = data.observations.iter().map(|o| o.rsl).collect();
    let age_mean = ages.iter().sum::<f64>() / n;
    let rsl_mean = rsls.iter().sum::<f64>() / n;
    let var = ages.iter().map(|a| (a - age_mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let age_sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    Standardize {
        age_mean,
        age_sd,
        rsl_mean,
    }
}

impl Standardize {
    pub fn to_std_age(&self, age: f64) -> f64 {
        (age - self.age_mean) / self.age_sd
    }

    pub fn from_std_age(&self, t: f64) -> f64 {
        t * self.age_sd + self.age_mean
    }

    pub fn center_rsl(&self, rsl: f64) -> f64 {
        rsl - self.rsl_mean
    }

    pub fn uncenter_rsl(&self, v: f64) -> f64 {
        v + self.rsl_mean
    }

    /// Converts a slope per standardized-age unit into mm/yr.
    pub fn rate_to_mm_per_yr(&self, rate_std: f64) -> f64 {
        rate_std / self.age_sd * 1000.0
    }

    /// Converts a physical rate in mm/yr into the standardized slope.
    pub fn rate_from_mm_per_yr(&self, rate_mm_yr: f64) -> f64 {
        rate_mm_yr / 1000.0 * self.age_sd
    }
}
