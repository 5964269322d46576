//! Errors-in-variables simple linear regression: `f(t) = alpha + beta t`
//! with latent true ages for observations that carry age error.

use super::linear_gaussian::conjugate_gaussian_draw;
use super::{log_half_normal, log_normal_pdf, ModelContext, ModelError, COEF_PRIOR_VAR, SD_PRIOR_SCALE};
use crate::sampler::{MetropolisBlock, Support};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

const IDX_ALPHA: usize = 0;
const IDX_BETA: usize = 1;
const IDX_SIGMA_Y: usize = 2;
const LATENT_OFFSET: usize = 3;

#[derive(Debug, Clone)]
pub struct SlrModel {
    ctx: ModelContext,
}

impl SlrModel {
    pub(crate) fn new(ctx: ModelContext) -> Self {
        SlrModel { ctx }
    }

    pub(crate) fn ctx(&self) -> &ModelContext {
        &self.ctx
    }

    pub(crate) fn ctx_mut(&mut self) -> &mut ModelContext {
        &mut self.ctx
    }

    fn loglik_row(&self, state: &[f64], row: usize) -> f64 {
        let t = self.ctx.age_of(state, LATENT_OFFSET, row);
        let mean = state[IDX_ALPHA] + state[IDX_BETA] * t;
        let sigma = state[IDX_SIGMA_Y];
        log_normal_pdf(self.ctx.y[row], mean, sigma * sigma + self.ctx.var_floor[row])
    }

    fn loglik(&self, state: &[f64]) -> f64 {
        (0..self.ctx.n_obs()).map(|i| self.loglik_row(state, i)).sum()
    }

    pub(crate) fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["alpha".to_string(), "beta".to_string(), "sigma_y".to_string()];
        names.extend(self.ctx.latent_names());
        names
    }

    pub(crate) fn initial_state(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let mut state = vec![0.0; LATENT_OFFSET + self.ctx.latent_rows.len()];
        let z: f64 = rng.sample(StandardNormal);
        state[IDX_SIGMA_Y] = self.ctx.sigma_y_init * (0.3 * z).exp();
        for (pos, &row) in self.ctx.latent_rows.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            state[LATENT_OFFSET + pos] = self.ctx.t_std[row] + 0.5 * self.ctx.s_t_std[row] * z;
        }
        self.ctx.apply_pins(&self.parameter_names(), &mut state);
        state
    }

    pub(crate) fn metropolis_blocks(&self) -> Vec<MetropolisBlock> {
        let mut blocks = Vec::new();
        if !self.ctx.is_pinned("sigma_y") {
            blocks.push(MetropolisBlock::scalar("sigma_y", IDX_SIGMA_Y, Support::Positive, 0.2));
        }
        blocks.extend(self.ctx.latent_blocks(LATENT_OFFSET));
        blocks
    }

    pub(crate) fn block_log_density(&self, block: &MetropolisBlock, state: &[f64]) -> f64 {
        if block.name == "sigma_y" {
            return self.loglik(state) + log_half_normal(state[IDX_SIGMA_Y], SD_PRIOR_SCALE);
        }
        // latent age block: one likelihood row plus the age prior
        let pos = block.indices[0] - LATENT_OFFSET;
        let row = self.ctx.latent_rows[pos];
        self.loglik_row(state, row) + self.ctx.log_age_prior(row, state[block.indices[0]])
    }

    pub(crate) fn conjugate_update(
        &self,
        state: &mut [f64],
        rng: &mut ChaCha20Rng,
    ) -> Result<(), String> {
        let n = self.ctx.n_obs();
        let x = DMatrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                1.0
            } else {
                self.ctx.age_of(state, LATENT_OFFSET, i)
            }
        });
        let sigma = state[IDX_SIGMA_Y];
        let obs_var: Vec<f64> = self
            .ctx
            .var_floor
            .iter()
            .map(|c| sigma * sigma + c)
            .collect();
        let prior_prec = DMatrix::identity(2, 2) / COEF_PRIOR_VAR;
        let draw = conjugate_gaussian_draw(
            &x,
            &self.ctx.y,
            &obs_var,
            &prior_prec,
            &DVector::zeros(2),
            rng,
        )?;
        state[IDX_ALPHA] = draw[0];
        state[IDX_BETA] = draw[1];
        Ok(())
    }

    pub(crate) fn level_draw(&self, state: &[f64], out: &mut [f64]) {
        for (k, &t) in self.ctx.grid_ages_std.iter().enumerate() {
            out[k] = self
                .ctx
                .std
                .uncenter_rsl(state[IDX_ALPHA] + state[IDX_BETA] * t);
        }
    }

    pub(crate) fn rate_draw(&self, state: &[f64], out: &mut [f64]) {
        let rate = self.ctx.std.rate_to_mm_per_yr(state[IDX_BETA]);
        out.fill(rate);
    }

    pub(crate) fn level_at(
        &self,
        state: &[f64],
        _site_id: &str,
        age: f64,
    ) -> Result<f64, ModelError> {
        let t = self.ctx.std.to_std_age(age);
        Ok(self
            .ctx
            .std
            .uncenter_rsl(state[IDX_ALPHA] + state[IDX_BETA] * t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_prediction_grid, site_key, DataType, Dataset, ModelSpec, ModelType, Observation};
    use crate::model::build_model;
    use crate::sampler::run_chains;
    use nalgebra::Cholesky;
    use rand::SeedableRng;

    fn line_data(n: usize, age_err: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let obs: Vec<Observation> = (0..n)
            .map(|i| {
                let age = 1000.0 + 1000.0 * (i as f64 / (n - 1) as f64);
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.02;
                Observation {
                    site_id: site_key("S", "R"),
                    region: "R".to_string(),
                    latitude: 30.0,
                    longitude: -70.0,
                    rsl: 0.0015 * (age - 1500.0) + noise,
                    rsl_err: 0.02 + 0.0005 * i as f64,
                    age,
                    age_err,
                    data_type: DataType::ProxyRecord,
                }
            })
            .collect();
        Dataset::from_observations(obs).unwrap()
    }

    /// With zero age error and sigma_y pinned, every retained draw of
    /// (alpha, beta) is an exact draw from the closed-form Gaussian
    /// posterior of a Bayesian weighted linear regression.
    #[test]
    fn reduces_to_weighted_linear_regression() {
        let data = line_data(50, 0.0, 3);
        let mut spec = ModelSpec::new(ModelType::EivSlrT);
        spec.n_chains = 2;
        spec.n_iterations = 2200;
        spec.n_burnin = 200;
        spec.thin = 2;
        spec.rng_seed = 5;
        let grid = build_prediction_grid(&data, 100.0).unwrap();
        let mut graph = build_model(&spec, &data, &grid).unwrap();
        let sigma_fixed = 0.03;
        graph.pin_parameter("sigma_y", sigma_fixed).unwrap();
        let draws = run_chains(&graph, &spec, "t").unwrap();

        // closed form in standardized space
        let std = graph.standardize();
        let n = data.n_observations();
        let x = DMatrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                1.0
            } else {
                std.to_std_age(data.observations[i].age)
            }
        });
        let mut xs = x.clone();
        let mut ys = DVector::zeros(n);
        for i in 0..n {
            let o = &data.observations[i];
            let v = sigma_fixed * sigma_fixed + o.rsl_err * o.rsl_err;
            let w = 1.0 / v.sqrt();
            xs.row_mut(i).scale_mut(w);
            ys[i] = std.center_rsl(o.rsl) * w;
        }
        let lambda = xs.tr_mul(&xs) + DMatrix::identity(2, 2) / COEF_PRIOR_VAR;
        let chol = Cholesky::new(lambda).unwrap();
        let mean = chol.solve(&xs.tr_mul(&ys));
        let cov = chol.inverse();

        for (k, name) in ["alpha", "beta"].iter().enumerate() {
            let v = draws.pooled(name).unwrap();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let mcse = (cov[(k, k)] / v.len() as f64).sqrt();
            assert!(
                (m - mean[k]).abs() < 3.0 * mcse,
                "{name}: {m} vs {} (mcse {mcse})",
                mean[k]
            );
        }
        // pinned parameter stays put
        let sig = draws.pooled("sigma_y").unwrap();
        assert!(sig.iter().all(|&v| v == sigma_fixed));
    }

    #[test]
    fn latent_ages_only_for_noisy_rows() {
        let data = line_data(10, 0.0, 1);
        let spec = ModelSpec::new(ModelType::EivSlrT);
        let grid = build_prediction_grid(&data, 100.0).unwrap();
        let graph = build_model(&spec, &data, &grid).unwrap();
        use crate::sampler::SamplerModel;
        assert_eq!(graph.parameter_names(), vec!["alpha", "beta", "sigma_y"]);

        let noisy = line_data(10, 5.0, 1);
        let graph = build_model(&spec, &noisy, &grid).unwrap();
        assert_eq!(graph.parameter_names().len(), 13);
        assert!(graph.parameter_names().contains(&"t_1".to_string()));
    }

    #[test]
    fn two_point_dataset_builds_a_proper_graph() {
        let obs: Vec<Observation> = (0..2)
            .map(|i| Observation {
                site_id: site_key("S", "R"),
                region: "R".to_string(),
                latitude: 0.0,
                longitude: 0.0,
                rsl: 0.01 * i as f64,
                rsl_err: 0.05,
                age: 1900.0 + 100.0 * i as f64,
                age_err: 0.0,
                data_type: DataType::ProxyRecord,
            })
            .collect();
        let data = Dataset::from_observations(obs).unwrap();
        let mut spec = ModelSpec::new(ModelType::EivSlrT);
        spec.n_iterations = 200;
        spec.n_burnin = 100;
        spec.thin = 1;
        spec.n_chains = 1;
        let grid = build_prediction_grid(&data, 50.0).unwrap();
        let graph = build_model(&spec, &data, &grid).unwrap();
        let draws = run_chains(&graph, &spec, "t").unwrap();
        assert_eq!(draws.n_total_draws(), 100);
    }
}
