//! The six model families, each expressed as parameter blocks with priors and
//! log-densities for the sampler, plus deterministic field evaluators for the
//! prediction grid.
//!
//! All models share the same data level: `y_i ~ N(f_i, sigma_y^2 + s_{y,i}^2
//! [+ ni_extra_i])`. The errors-in-variables family treats each noisy age as
//! a latent parameter with prior `N(observed age, age_err^2)`; the noisy-input
//! family instead inflates the output variance from a first-pass fit (see
//! [`ni_variance_inflation`]).

mod cp;
mod gam;
mod igp;
mod linear_gaussian;
mod noisy_input;
mod quadrature;
mod slr;
mod spline;
mod standardize;

pub use cp::CpModel;
pub use gam::GamModel;
pub use igp::IgpModel;
pub use noisy_input::ni_variance_inflation;
pub use quadrature::IgpQuadrature;
pub use slr::SlrModel;
pub use spline::{SplineStModel, SplineTModel};
pub use standardize::{standardize, Standardize};

use crate::basis::BasisError;
use crate::data::{DataError, Dataset, ModelSpec, ModelType, PredictionGrid};
use crate::posterior::Component;
use crate::sampler::{MetropolisBlock, SamplerModel};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("model/data mismatch: {0}")]
    ModelDataMismatch(String),

    #[error(transparent)]
    Basis(#[from] BasisError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("prediction grid does not match the one this model was built on")]
    GridMismatch,

    #[error("component {0:?} is only available for the ni_gam_decomp model")]
    WrongModelType(Component),

    #[error("no tunable parameter named {0}")]
    UnknownParameter(String),
}

/// Prior variance for location-scale regression coefficients
/// (intercepts, slopes, the anchor of the random-walk spline prior):
/// Normal(0, 10^2) in standardized units.
pub(crate) const COEF_PRIOR_VAR: f64 = 100.0;
/// Half-Normal scale for standard-deviation parameters and the IGP rate
/// variance.
pub(crate) const SD_PRIOR_SCALE: f64 = 10.0;

pub(crate) fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

pub(crate) fn log_half_normal(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (2.0 / ((2.0 * std::f64::consts::PI).sqrt() * scale)).ln() - 0.5 * (x / scale).powi(2)
}

/// Standardized observations and bookkeeping shared by every model.
#[derive(Debug, Clone)]
pub(crate) struct ModelContext {
    /// Standardized observed ages.
    pub t_std: Vec<f64>,
    /// Centered RSL, metres.
    pub y: Vec<f64>,
    /// Known variance floor per observation: `s_y^2 + ni_extra`, metres^2.
    pub var_floor: Vec<f64>,
    /// Noisy-input corrective variance (zero on EIV models and first passes).
    pub extra_var: Vec<f64>,
    /// Standardized age error sd per observation.
    pub s_t_std: Vec<f64>,
    /// Observation rows with a positive age error (these get latent ages).
    pub latent_rows: Vec<usize>,
    /// Position of each row within `latent_rows`, if any.
    pub latent_pos: Vec<Option<usize>>,
    /// Site index per observation (into the dataset's site order).
    pub site_of: Vec<usize>,
    pub site_ids: Vec<String>,
    pub std: Standardize,
    /// The grid this model was built on, for later consistency checks.
    pub grid: PredictionGrid,
    pub grid_ages_std: Vec<f64>,
    pub grid_site: Vec<usize>,
    pub sigma_y_init: f64,
    /// Parameters held fixed (name, value); excluded from sampling.
    pub pins: Vec<(String, f64)>,
}

impl ModelContext {
    pub(crate) fn new(
        data: &Dataset,
        grid: &PredictionGrid,
        extra_var: Option<&[f64]>,
    ) -> Result<Self, ModelError> {
        let std = standardize(data);
        let n = data.n_observations();
        let extra = match extra_var {
            Some(e) => {
                if e.len() != n {
                    return Err(ModelError::ModelDataMismatch(format!(
                        "corrective variance has {} entries for {} observations",
                        e.len(),
                        n
                    )));
                }
                e.to_vec()
            }
            None => vec![0.0; n],
        };

        let site_ids: Vec<String> = data.sites.iter().map(|s| s.site_id.clone()).collect();
        let site_index = |id: &str| site_ids.iter().position(|s| s == id).unwrap();

        let t_std: Vec<f64> = data.observations.iter().map(|o| std.to_std_age(o.age)).collect();
        let y: Vec<f64> = data.observations.iter().map(|o| std.center_rsl(o.rsl)).collect();
        let var_floor: Vec<f64> = data
            .observations
            .iter()
            .zip(&extra)
            .map(|(o, e)| o.rsl_err * o.rsl_err + e)
            .collect();
        let s_t_std: Vec<f64> = data
            .observations
            .iter()
            .map(|o| o.age_err / std.age_sd)
            .collect();
        let mut latent_rows = Vec::new();
        let mut latent_pos = vec![None; n];
        for (i, s) in s_t_std.iter().enumerate() {
            if *s > 0.0 {
                latent_pos[i] = Some(latent_rows.len());
                latent_rows.push(i);
            }
        }
        let site_of: Vec<usize> = data
            .observations
            .iter()
            .map(|o| site_index(&o.site_id))
            .collect();

        let grid_ages_std: Vec<f64> = grid.rows.iter().map(|r| std.to_std_age(r.age)).collect();
        let grid_site: Vec<usize> = grid.rows.iter().map(|r| site_index(&r.site_id)).collect();

        let ybar = y.iter().sum::<f64>() / n as f64;
        let ysd = (y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0))
            .sqrt();
        let sigma_y_init = (0.5 * ysd).max(1e-3);

        Ok(ModelContext {
            t_std,
            y,
            var_floor,
            extra_var: extra,
            s_t_std,
            latent_rows,
            latent_pos,
            site_of,
            site_ids,
            std,
            grid: grid.clone(),
            grid_ages_std,
            grid_site,
            sigma_y_init,
            pins: Vec::new(),
        })
    }

    pub(crate) fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Latent age of a row given the current state, or the observed age for
    /// rows without age error.
    pub(crate) fn age_of(&self, state: &[f64], latent_offset: usize, row: usize) -> f64 {
        match self.latent_pos[row] {
            Some(pos) => state[latent_offset + pos],
            None => self.t_std[row],
        }
    }

    pub(crate) fn latent_names(&self) -> Vec<String> {
        self.latent_rows.iter().map(|r| format!("t_{}", r + 1)).collect()
    }

    pub(crate) fn latent_blocks(&self, latent_offset: usize) -> Vec<MetropolisBlock> {
        self.latent_rows
            .iter()
            .enumerate()
            .map(|(pos, &row)| {
                MetropolisBlock::scalar(
                    format!("t_{}", row + 1),
                    latent_offset + pos,
                    crate::sampler::Support::Real,
                    self.s_t_std[row].max(1e-6),
                )
            })
            .collect()
    }

    pub(crate) fn log_age_prior(&self, row: usize, t: f64) -> f64 {
        let s = self.s_t_std[row];
        log_normal_pdf(t, self.t_std[row], s * s)
    }

    pub(crate) fn is_pinned(&self, name: &str) -> bool {
        self.pins.iter().any(|(n, _)| n == name)
    }

    pub(crate) fn apply_pins(&self, names: &[String], state: &mut [f64]) {
        for (name, value) in &self.pins {
            if let Some(i) = names.iter().position(|n| n == name) {
                state[i] = *value;
            }
        }
    }
}

/// A built model: parameter layout, priors, sampler updates and grid
/// evaluators for one of the six model types.
#[derive(Debug, Clone)]
pub enum ModelGraph {
    Slr(SlrModel),
    Cp(CpModel),
    Igp(IgpModel),
    SplineT(SplineTModel),
    SplineSt(SplineStModel),
    Gam(GamModel),
}

/// Builds the model graph for `spec` over validated data and its grid.
pub fn build_model(
    spec: &ModelSpec,
    data: &Dataset,
    grid: &PredictionGrid,
) -> Result<ModelGraph, ModelError> {
    build_model_with_extra(spec, data, grid, None)
}

/// As [`build_model`], with a per-observation corrective variance from a
/// noisy-input first pass.
pub fn build_model_with_extra(
    spec: &ModelSpec,
    data: &Dataset,
    grid: &PredictionGrid,
    extra_var: Option<&[f64]>,
) -> Result<ModelGraph, ModelError> {
    spec.validate()?;
    if matches!(spec.model_type, ModelType::NiSplineSt | ModelType::NiGamDecomp)
        && data.n_sites() < 2
    {
        return Err(ModelError::ModelDataMismatch(format!(
            "the {} model needs at least 2 sites, got {}",
            spec.model_type.code(),
            data.n_sites()
        )));
    }
    if spec.model_type == ModelType::NiGamDecomp && !data.has_linear_rates() {
        return Err(ModelError::ModelDataMismatch(
            "the linear_rate or linear_rate_err was not included. It is required for the ni_gam_decomp model"
                .to_string(),
        ));
    }
    let ctx = ModelContext::new(data, grid, extra_var)?;
    Ok(match spec.model_type {
        ModelType::EivSlrT => ModelGraph::Slr(SlrModel::new(ctx)),
        ModelType::EivCpT => ModelGraph::Cp(CpModel::new(ctx, spec.n_cp)),
        ModelType::EivIgpT => ModelGraph::Igp(IgpModel::new(ctx)),
        ModelType::NiSplineT => ModelGraph::SplineT(SplineTModel::new(ctx, spec.knots_time)?),
        ModelType::NiSplineSt => ModelGraph::SplineSt(SplineStModel::new(
            ctx,
            data,
            spec.knots_tensor_time,
            spec.knots_lon,
            spec.knots_lat,
        )?),
        ModelType::NiGamDecomp => ModelGraph::Gam(GamModel::new(
            ctx,
            data,
            spec.knots_time,
            spec.knots_tensor_time,
            spec.knots_lon,
            spec.knots_lat,
        )?),
    })
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            ModelGraph::Slr($m) => $body,
            ModelGraph::Cp($m) => $body,
            ModelGraph::Igp($m) => $body,
            ModelGraph::SplineT($m) => $body,
            ModelGraph::SplineSt($m) => $body,
            ModelGraph::Gam($m) => $body,
        }
    };
}

impl ModelGraph {
    pub fn model_type(&self) -> ModelType {
        match self {
            ModelGraph::Slr(_) => ModelType::EivSlrT,
            ModelGraph::Cp(_) => ModelType::EivCpT,
            ModelGraph::Igp(_) => ModelType::EivIgpT,
            ModelGraph::SplineT(_) => ModelType::NiSplineT,
            ModelGraph::SplineSt(_) => ModelType::NiSplineSt,
            ModelGraph::Gam(_) => ModelType::NiGamDecomp,
        }
    }

    pub(crate) fn ctx(&self) -> &ModelContext {
        dispatch!(self, m => m.ctx())
    }

    fn ctx_mut(&mut self) -> &mut ModelContext {
        dispatch!(self, m => m.ctx_mut())
    }

    pub fn standardize(&self) -> &Standardize {
        &self.ctx().std
    }

    /// Holds a Metropolis-updated scalar fixed at `value` (useful for prior
    /// sensitivity checks and validation against closed forms).
    pub fn pin_parameter(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        let known = {
            let blocks = dispatch!(&*self, m => m.metropolis_blocks());
            blocks.iter().any(|b| b.name == name)
        };
        if !known {
            return Err(ModelError::UnknownParameter(name.to_string()));
        }
        self.ctx_mut().pins.push((name.to_string(), value));
        Ok(())
    }

    /// True when the model decomposes the field into GAM components.
    pub fn supports_components(&self) -> bool {
        matches!(self, ModelGraph::Gam(_))
    }

    pub fn matches_grid(&self, grid: &PredictionGrid) -> bool {
        &self.ctx().grid == grid
    }

    pub fn grid_len(&self) -> usize {
        self.ctx().grid_ages_std.len()
    }

    /// Noisy-input corrective variance this graph was built with.
    pub fn extra_variance(&self) -> &[f64] {
        &self.ctx().extra_var
    }

    /// Total per-observation likelihood variance at a given `sigma_y`:
    /// `sigma_y^2 + s_y^2 + ni_extra`.
    pub fn likelihood_variances(&self, sigma_y: f64) -> Vec<f64> {
        self.ctx()
            .var_floor
            .iter()
            .map(|c| sigma_y * sigma_y + c)
            .collect()
    }

    /// Evaluates one draw's total level field on the grid, metres.
    pub(crate) fn level_draw(&self, state: &[f64], out: &mut [f64]) {
        dispatch!(self, m => m.level_draw(state, out))
    }

    /// Evaluates one draw's total rate field on the grid, mm/yr.
    pub(crate) fn rate_draw(&self, state: &[f64], out: &mut [f64]) {
        dispatch!(self, m => m.rate_draw(state, out))
    }

    /// GAM component fields for one draw (levels in metres, rates in mm/yr).
    pub(crate) fn component_draw(
        &self,
        state: &[f64],
        component: Component,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        match self {
            ModelGraph::Gam(m) => m.component_draw(state, component, out),
            _ => Err(ModelError::WrongModelType(component)),
        }
    }

    /// Point evaluation of one draw's mean level at an age (years CE), metres.
    pub fn level_at(&self, state: &[f64], site_id: &str, age: f64) -> Result<f64, ModelError> {
        dispatch!(self, m => m.level_at(state, site_id, age))
    }
}

impl SamplerModel for ModelGraph {
    fn parameter_names(&self) -> Vec<String> {
        dispatch!(self, m => m.parameter_names())
    }

    fn initial_state(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        dispatch!(self, m => m.initial_state(rng))
    }

    fn metropolis_blocks(&self) -> Vec<MetropolisBlock> {
        dispatch!(self, m => m.metropolis_blocks())
    }

    fn block_log_density(&self, block: &MetropolisBlock, state: &[f64]) -> f64 {
        dispatch!(self, m => m.block_log_density(block, state))
    }

    fn conjugate_update(&self, state: &mut [f64], rng: &mut ChaCha20Rng) -> Result<(), String> {
        dispatch!(self, m => m.conjugate_update(state, rng))
    }
}
