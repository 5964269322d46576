//! Errors-in-variables change point model: a continuous piecewise-linear
//! mean with 1-3 ordered change points, the first segment value free and the
//! later segment values derived from continuity.

use super::linear_gaussian::conjugate_gaussian_draw;
use super::{log_half_normal, log_normal_pdf, ModelContext, ModelError, COEF_PRIOR_VAR, SD_PRIOR_SCALE};
use crate::basis::quantile_sorted;
use crate::sampler::{MetropolisBlock, Support};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct CpModel {
    ctx: ModelContext,
    n_cp: usize,
    /// Standardized age range for the ordered-uniform change point prior.
    age_lo: f64,
    age_hi: f64,
}

/// Continuous piecewise-linear mean: `alpha1` is the value at the first
/// change point, `betas[j]` the slope of segment `j` (one more segment than
/// change points), later change point values derived by continuity.
pub(crate) fn cp_mean(alpha1: f64, betas: &[f64], lambdas: &[f64], t: f64) -> f64 {
    if t <= lambdas[0] {
        return alpha1 + betas[0] * (t - lambdas[0]);
    }
    let mut level = alpha1;
    let mut prev = lambdas[0];
    for j in 1..lambdas.len() {
        if t <= lambdas[j] {
            return level + betas[j] * (t - prev);
        }
        level += betas[j] * (lambdas[j] - prev);
        prev = lambdas[j];
    }
    level + betas[lambdas.len()] * (t - prev)
}

/// Coefficients of `cp_mean` as a linear function of `(alpha1, betas...)`.
fn cp_design_row(lambdas: &[f64], t: f64, row: &mut [f64]) {
    row.fill(0.0);
    row[0] = 1.0;
    if t <= lambdas[0] {
        row[1] = t - lambdas[0];
        return;
    }
    let mut prev = lambdas[0];
    for j in 1..lambdas.len() {
        if t <= lambdas[j] {
            row[1 + j] = t - prev;
            return;
        }
        row[1 + j] = lambdas[j] - prev;
        prev = lambdas[j];
    }
    row[1 + lambdas.len()] = t - prev;
}

impl CpModel {
    pub(crate) fn new(ctx: ModelContext, n_cp: usize) -> Self {
        let age_lo = ctx.t_std.iter().cloned().fold(f64::INFINITY, f64::min);
        let age_hi = ctx.t_std.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        CpModel {
            ctx,
            n_cp,
            age_lo,
            age_hi,
        }
    }

    pub(crate) fn ctx(&self) -> &ModelContext {
        &self.ctx
    }

    pub(crate) fn ctx_mut(&mut self) -> &mut ModelContext {
        &mut self.ctx
    }

    fn n_beta(&self) -> usize {
        self.n_cp + 1
    }

    fn idx_lambda(&self, k: usize) -> usize {
        1 + self.n_beta() + k
    }

    fn idx_sigma(&self) -> usize {
        1 + self.n_beta() + self.n_cp
    }

    fn latent_offset(&self) -> usize {
        self.idx_sigma() + 1
    }

    fn lambdas<'a>(&self, state: &'a [f64]) -> &'a [f64] {
        &state[self.idx_lambda(0)..self.idx_lambda(0) + self.n_cp]
    }

    fn betas<'a>(&self, state: &'a [f64]) -> &'a [f64] {
        &state[1..1 + self.n_beta()]
    }

    fn mean_at_std(&self, state: &[f64], t: f64) -> f64 {
        cp_mean(state[0], self.betas(state), self.lambdas(state), t)
    }

    fn loglik_row(&self, state: &[f64], row: usize) -> f64 {
        let t = self.ctx.age_of(state, self.latent_offset(), row);
        let mean = self.mean_at_std(state, t);
        let sigma = state[self.idx_sigma()];
        log_normal_pdf(self.ctx.y[row], mean, sigma * sigma + self.ctx.var_floor[row])
    }

    fn loglik(&self, state: &[f64]) -> f64 {
        (0..self.ctx.n_obs()).map(|i| self.loglik_row(state, i)).sum()
    }

    fn log_lambda_prior(&self, lambdas: &[f64]) -> f64 {
        let mut prev = self.age_lo;
        for &l in lambdas {
            if l < prev || l > self.age_hi {
                return f64::NEG_INFINITY;
            }
            prev = l;
        }
        // flat over the ordered region
        0.0
    }

    pub(crate) fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["alpha_1".to_string()];
        for j in 1..=self.n_beta() {
            names.push(format!("beta_{j}"));
        }
        for k in 1..=self.n_cp {
            names.push(format!("lambda_{k}"));
        }
        names.push("sigma_y".to_string());
        names.extend(self.ctx.latent_names());
        names
    }

    pub(crate) fn initial_state(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let mut state = vec![0.0; self.latent_offset() + self.ctx.latent_rows.len()];
        let mut sorted = self.ctx.t_std.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let spread = (self.age_hi - self.age_lo).max(1e-6);
        let mut lambdas: Vec<f64> = (1..=self.n_cp)
            .map(|k| {
                let q = quantile_sorted(&sorted, k as f64 / (self.n_cp + 1) as f64);
                let z: f64 = rng.sample(StandardNormal);
                (q + 0.02 * spread * z).clamp(self.age_lo, self.age_hi)
            })
            .collect();
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, l) in lambdas.into_iter().enumerate() {
            state[self.idx_lambda(k)] = l;
        }
        let z: f64 = rng.sample(StandardNormal);
        state[self.idx_sigma()] = self.ctx.sigma_y_init * (0.3 * z).exp();
        let off = self.latent_offset();
        for (pos, &row) in self.ctx.latent_rows.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            state[off + pos] = self.ctx.t_std[row] + 0.5 * self.ctx.s_t_std[row] * z;
        }
        self.ctx.apply_pins(&self.parameter_names(), &mut state);
        state
    }

    pub(crate) fn metropolis_blocks(&self) -> Vec<MetropolisBlock> {
        let mut blocks = Vec::new();
        let spread = (self.age_hi - self.age_lo).max(1e-6);
        for k in 0..self.n_cp {
            let name = format!("lambda_{}", k + 1);
            if !self.ctx.is_pinned(&name) {
                blocks.push(MetropolisBlock::scalar(
                    name,
                    self.idx_lambda(k),
                    Support::Real,
                    0.05 * spread,
                ));
            }
        }
        if !self.ctx.is_pinned("sigma_y") {
            blocks.push(MetropolisBlock::scalar(
                "sigma_y",
                self.idx_sigma(),
                Support::Positive,
                0.2,
            ));
        }
        blocks.extend(self.ctx.latent_blocks(self.latent_offset()));
        blocks
    }

    pub(crate) fn block_log_density(&self, block: &MetropolisBlock, state: &[f64]) -> f64 {
        if block.name.starts_with("lambda_") {
            let prior = self.log_lambda_prior(self.lambdas(state));
            if prior == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            return self.loglik(state) + prior;
        }
        if block.name == "sigma_y" {
            return self.loglik(state) + log_half_normal(state[self.idx_sigma()], SD_PRIOR_SCALE);
        }
        let pos = block.indices[0] - self.latent_offset();
        let row = self.ctx.latent_rows[pos];
        self.loglik_row(state, row) + self.ctx.log_age_prior(row, state[block.indices[0]])
    }

    pub(crate) fn conjugate_update(
        &self,
        state: &mut [f64],
        rng: &mut ChaCha20Rng,
    ) -> Result<(), String> {
        let n = self.ctx.n_obs();
        let p = 1 + self.n_beta();
        let lambdas = self.lambdas(state).to_vec();
        let mut x = DMatrix::zeros(n, p);
        let mut row = vec![0.0; p];
        for i in 0..n {
            let t = self.ctx.age_of(state, self.latent_offset(), i);
            cp_design_row(&lambdas, t, &mut row);
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        let sigma = state[self.idx_sigma()];
        let obs_var: Vec<f64> = self
            .ctx
            .var_floor
            .iter()
            .map(|c| sigma * sigma + c)
            .collect();
        let prior_prec = DMatrix::identity(p, p) / COEF_PRIOR_VAR;
        let draw = conjugate_gaussian_draw(
            &x,
            &self.ctx.y,
            &obs_var,
            &prior_prec,
            &DVector::zeros(p),
            rng,
        )?;
        state[..p].copy_from_slice(draw.as_slice());
        Ok(())
    }

    pub(crate) fn level_draw(&self, state: &[f64], out: &mut [f64]) {
        for (k, &t) in self.ctx.grid_ages_std.iter().enumerate() {
            out[k] = self.ctx.std.uncenter_rsl(self.mean_at_std(state, t));
        }
    }

    /// Rate is the slope of the segment containing each grid age: a step
    /// function with jumps at the sampled change points.
    pub(crate) fn rate_draw(&self, state: &[f64], out: &mut [f64]) {
        let lambdas = self.lambdas(state);
        let betas = self.betas(state);
        for (k, &t) in self.ctx.grid_ages_std.iter().enumerate() {
            let seg = lambdas.iter().take_while(|&&l| t > l).count();
            out[k] = self.ctx.std.rate_to_mm_per_yr(betas[seg]);
        }
    }

    pub(crate) fn level_at(
        &self,
        state: &[f64],
        _site_id: &str,
        age: f64,
    ) -> Result<f64, ModelError> {
        let t = self.ctx.std.to_std_age(age);
        Ok(self.ctx.std.uncenter_rsl(self.mean_at_std(state, t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_prediction_grid, site_key, DataType, Dataset, ModelSpec, ModelType, Observation};
    use crate::model::build_model;
    use crate::sampler::SamplerModel;

    #[test]
    fn mean_is_continuous_at_every_change_point() {
        let alpha1 = -0.4;
        let betas = [0.2, 1.1, -0.5, 2.0];
        let lambdas = [-1.0, 0.2, 0.9];
        for &l in &lambdas {
            let left = cp_mean(alpha1, &betas, &lambdas, l - 1e-9);
            let right = cp_mean(alpha1, &betas, &lambdas, l + 1e-9);
            assert!((left - right).abs() < 1e-8, "jump at {l}");
        }
        // value at the first change point is alpha1 exactly
        assert_eq!(cp_mean(alpha1, &betas, &lambdas, lambdas[0]), alpha1);
    }

    #[test]
    fn design_row_reproduces_the_mean() {
        let alpha1 = 0.3;
        let betas = [0.5, -0.2, 1.5];
        let lambdas = [-0.5, 0.7];
        let mut row = vec![0.0; 4];
        for t in [-2.0, -0.5, 0.0, 0.7, 1.9] {
            cp_design_row(&lambdas, t, &mut row);
            let via_row = row[0] * alpha1
                + row[1] * betas[0]
                + row[2] * betas[1]
                + row[3] * betas[2];
            let direct = cp_mean(alpha1, &betas, &lambdas, t);
            assert!((via_row - direct).abs() < 1e-12, "t={t}");
        }
    }

    fn cp_data() -> Dataset {
        // slope change at 1500 CE, no age error
        let obs: Vec<Observation> = (0..60)
            .map(|i| {
                let age = 1000.0 + 1000.0 * i as f64 / 59.0;
                let rsl = if age <= 1500.0 {
                    0.0005 * (age - 1500.0)
                } else {
                    0.003 * (age - 1500.0)
                };
                Observation {
                    site_id: site_key("S", "R"),
                    region: "R".to_string(),
                    latitude: 0.0,
                    longitude: 0.0,
                    rsl,
                    rsl_err: 0.02,
                    age,
                    age_err: 0.0,
                    data_type: DataType::ProxyRecord,
                }
            })
            .collect();
        Dataset::from_observations(obs).unwrap()
    }

    #[test]
    fn parameter_set_for_two_change_points() {
        let data = cp_data();
        let mut spec = ModelSpec::new(ModelType::EivCpT);
        spec.n_cp = 2;
        let grid = build_prediction_grid(&data, 100.0).unwrap();
        let graph = build_model(&spec, &data, &grid).unwrap();
        assert_eq!(
            graph.parameter_names(),
            vec!["alpha_1", "beta_1", "beta_2", "beta_3", "lambda_1", "lambda_2", "sigma_y"]
        );
    }

    #[test]
    fn ordered_prior_rejects_disorder() {
        let data = cp_data();
        let mut spec = ModelSpec::new(ModelType::EivCpT);
        spec.n_cp = 2;
        let grid = build_prediction_grid(&data, 100.0).unwrap();
        let graph = build_model(&spec, &data, &grid).unwrap();
        if let crate::model::ModelGraph::Cp(m) = &graph {
            assert_eq!(m.log_lambda_prior(&[0.5, -0.5]), f64::NEG_INFINITY);
            assert_eq!(m.log_lambda_prior(&[-0.5, 0.5]), 0.0);
            assert_eq!(m.log_lambda_prior(&[-99.0, 0.5]), f64::NEG_INFINITY);
        } else {
            panic!("expected CP graph");
        }
    }
}
