//! Bayesian models of relative sea-level (RSL) change.
//!
//! The crate fits six model families to proxy and tide-gauge RSL data with
//! measurement error in both axes, and turns the posterior draws into
//! plot-ready level and rate curves:
//!
//! * `eiv_slr_t` — errors-in-variables linear regression,
//! * `eiv_cp_t` — errors-in-variables change point model (1-3 change points),
//! * `eiv_igp_t` — errors-in-variables integrated Gaussian process,
//! * `ni_spline_t` — noisy-input penalized spline in time,
//! * `ni_spline_st` — noisy-input tensor spline in space and time,
//! * `ni_gam_decomp` — noisy-input GAM decomposing RSL into regional,
//!   linear-local, site-offset and non-linear local components.
//!
//! Typical use: load data with [`ingest`], fit with [`fit::fit_model`], then
//! read the [`posterior`] field summaries or export them through the CLI.

pub mod basis;
pub mod data;
pub mod fit;
pub mod ingest;
pub mod model;
pub mod posterior;
pub mod sampler;

pub use data::{
    build_prediction_grid, describe, validate_dataset, DataError, DataType, Dataset, ModelSpec,
    ModelType, Observation, PredictionGrid, SiteMeta,
};
pub use fit::{fit_model, FitError, FitOutput};
pub use model::{build_model, ModelError, ModelGraph, Standardize};
pub use sampler::{run_chains, PosteriorDraws, SampleError};
