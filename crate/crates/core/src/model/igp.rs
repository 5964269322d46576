//! Errors-in-variables integrated Gaussian process: a GP prior on the rate
//! of change, integrated (trapezoid quadrature on a fixed node set) to give
//! the level, plus an intercept.

use super::linear_gaussian::conjugate_gaussian_draw;
use super::quadrature::IgpQuadrature;
use super::{log_half_normal, log_normal_pdf, ModelContext, ModelError, COEF_PRIOR_VAR, SD_PRIOR_SCALE};
use crate::sampler::{MetropolisBlock, Support};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Quadrature nodes for the rate process.
const N_NODES: usize = 100;
/// Relative jitter added to the GP covariance diagonal.
const COV_JITTER: f64 = 1e-8;

const IDX_ALPHA: usize = 0;
const P_OFFSET: usize = 1;

#[derive(Debug, Clone)]
pub struct IgpModel {
    ctx: ModelContext,
    quad: IgpQuadrature,
    /// Squared node distances, for the covariance `nu2 * rho^(d^2)`.
    dist2: DMatrix<f64>,
    /// Cumulative-integral rows for observations without age error.
    l_fixed: Vec<Option<Vec<f64>>>,
    l_grid: DMatrix<f64>,
    interp_grid: DMatrix<f64>,
}

impl IgpModel {
    pub(crate) fn new(ctx: ModelContext) -> Self {
        // the node range must hold every latent age the sampler can accept
        // (prior truncated at 4 sd) and the whole grid
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &t) in ctx.t_std.iter().enumerate() {
            lo = lo.min(t - 4.0 * ctx.s_t_std[i]);
            hi = hi.max(t + 4.0 * ctx.s_t_std[i]);
        }
        for &t in &ctx.grid_ages_std {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        let pad = 1e-6 * (hi - lo).max(1e-6);
        let quad = IgpQuadrature::new(lo - pad, hi + pad, N_NODES);

        let n_nodes = quad.n();
        let mut dist2 = DMatrix::zeros(n_nodes, n_nodes);
        for a in 0..n_nodes {
            for b in 0..n_nodes {
                let d = quad.nodes()[a] - quad.nodes()[b];
                dist2[(a, b)] = d * d;
            }
        }
        let l_fixed: Vec<Option<Vec<f64>>> = ctx
            .t_std
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if ctx.latent_pos[i].is_none() {
                    Some(quad.cumulative_row(t))
                } else {
                    None
                }
            })
            .collect();
        let l_grid = quad.cumulative_matrix(&ctx.grid_ages_std);
        let interp_grid = quad.interp_matrix(&ctx.grid_ages_std);
        IgpModel {
            ctx,
            quad,
            dist2,
            l_fixed,
            l_grid,
            interp_grid,
        }
    }

    pub(crate) fn ctx(&self) -> &ModelContext {
        &self.ctx
    }

    pub(crate) fn ctx_mut(&mut self) -> &mut ModelContext {
        &mut self.ctx
    }

    pub fn quadrature(&self) -> &IgpQuadrature {
        &self.quad
    }

    fn n_nodes(&self) -> usize {
        self.quad.n()
    }

    fn idx_rho(&self) -> usize {
        P_OFFSET + self.n_nodes()
    }

    fn idx_nu2(&self) -> usize {
        self.idx_rho() + 1
    }

    fn idx_sigma(&self) -> usize {
        self.idx_nu2() + 1
    }

    fn latent_offset(&self) -> usize {
        self.idx_sigma() + 1
    }

    fn p_values<'a>(&self, state: &'a [f64]) -> &'a [f64] {
        &state[P_OFFSET..P_OFFSET + self.n_nodes()]
    }

    /// `nu2 * rho^(d^2)` with a small diagonal jitter.
    pub(crate) fn covariance(&self, rho: f64, nu2: f64) -> DMatrix<f64> {
        let n = self.n_nodes();
        let log_rho = rho.ln();
        let mut k = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = nu2 * (self.dist2[(a, b)] * log_rho).exp();
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        let jitter = COV_JITTER * nu2 + 1e-12;
        for a in 0..n {
            k[(a, a)] += jitter;
        }
        k
    }

    fn log_gp_prior(&self, state: &[f64]) -> f64 {
        let rho = state[self.idx_rho()];
        let nu2 = state[self.idx_nu2()];
        if !(0.0 < rho && rho < 1.0) || nu2 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let k = self.covariance(rho, nu2);
        let chol = match Cholesky::new(k) {
            Some(c) => c,
            None => return f64::NEG_INFINITY,
        };
        let p = DVector::from_column_slice(self.p_values(state));
        let alpha = match chol.l().solve_lower_triangular(&p) {
            Some(v) => v,
            None => return f64::NEG_INFINITY,
        };
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        let n = self.n_nodes() as f64;
        -0.5 * n * (2.0 * std::f64::consts::PI).ln() - log_det - 0.5 * alpha.norm_squared()
    }

    fn mean_row(&self, state: &[f64], row: usize) -> f64 {
        let p = self.p_values(state);
        let dot = |l: &[f64]| -> f64 { l.iter().zip(p).map(|(w, v)| w * v).sum() };
        let integral = match &self.l_fixed[row] {
            Some(l) => dot(l),
            None => {
                let t = self.ctx.age_of(state, self.latent_offset(), row);
                dot(&self.quad.cumulative_row(t))
            }
        };
        state[IDX_ALPHA] + integral
    }

    fn loglik_row(&self, state: &[f64], row: usize) -> f64 {
        let sigma = state[self.idx_sigma()];
        log_normal_pdf(
            self.ctx.y[row],
            self.mean_row(state, row),
            sigma * sigma + self.ctx.var_floor[row],
        )
    }

    fn loglik(&self, state: &[f64]) -> f64 {
        (0..self.ctx.n_obs()).map(|i| self.loglik_row(state, i)).sum()
    }

    pub(crate) fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["alpha".to_string()];
        for j in 1..=self.n_nodes() {
            names.push(format!("p_{j}"));
        }
        names.push("rho".to_string());
        names.push("nu2".to_string());
        names.push("sigma_y".to_string());
        names.extend(self.ctx.latent_names());
        names
    }

    pub(crate) fn initial_state(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let mut state = vec![0.0; self.latent_offset() + self.ctx.latent_rows.len()];
        let z: f64 = rng.sample(StandardNormal);
        state[self.idx_rho()] = (0.5 + 0.1 * z).clamp(0.05, 0.95);
        let z: f64 = rng.sample(StandardNormal);
        state[self.idx_nu2()] = (0.3 * z).exp();
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
        for (name, idx, support, scale) in [
            ("rho", self.idx_rho(), Support::UnitInterval, 0.5),
            ("nu2", self.idx_nu2(), Support::Positive, 0.5),
            ("sigma_y", self.idx_sigma(), Support::Positive, 0.2),
        ] {
            if !self.ctx.is_pinned(name) {
                blocks.push(MetropolisBlock::scalar(name, idx, support, scale));
            }
        }
        blocks.extend(self.ctx.latent_blocks(self.latent_offset()));
        blocks
    }

    pub(crate) fn block_log_density(&self, block: &MetropolisBlock, state: &[f64]) -> f64 {
        match block.name.as_str() {
            // rho has a flat prior on (0,1); the transform keeps it inside
            "rho" => self.log_gp_prior(state),
            "nu2" => self.log_gp_prior(state) + log_half_normal(state[self.idx_nu2()], SD_PRIOR_SCALE),
            "sigma_y" => self.loglik(state) + log_half_normal(state[self.idx_sigma()], SD_PRIOR_SCALE),
            _ => {
                let pos = block.indices[0] - self.latent_offset();
                let row = self.ctx.latent_rows[pos];
                let t = state[block.indices[0]];
                let (lo, hi) = self.quad.range();
                if t < lo || t > hi {
                    return f64::NEG_INFINITY;
                }
                self.loglik_row(state, row) + self.ctx.log_age_prior(row, t)
            }
        }
    }

    pub(crate) fn conjugate_update(
        &self,
        state: &mut [f64],
        rng: &mut ChaCha20Rng,
    ) -> Result<(), String> {
        let n = self.ctx.n_obs();
        let n_nodes = self.n_nodes();
        let p_dim = n_nodes + 1;

        let mut x = DMatrix::zeros(n, p_dim);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            let row = match &self.l_fixed[i] {
                Some(l) => l.clone(),
                None => {
                    let t = self.ctx.age_of(state, self.latent_offset(), i);
                    self.quad.cumulative_row(t)
                }
            };
            for (j, v) in row.iter().enumerate() {
                x[(i, 1 + j)] = *v;
            }
        }

        let rho = state[self.idx_rho()];
        let nu2 = state[self.idx_nu2()];
        let k = self.covariance(rho, nu2);
        let chol = Cholesky::new(k).ok_or("igp: covariance not positive definite")?;
        let k_inv = chol.inverse();
        let mut prior_prec = DMatrix::zeros(p_dim, p_dim);
        prior_prec[(0, 0)] = 1.0 / COEF_PRIOR_VAR;
        prior_prec
            .view_mut((1, 1), (n_nodes, n_nodes))
            .copy_from(&k_inv);

        let sigma = state[self.idx_sigma()];
        let obs_var: Vec<f64> = self
            .ctx
            .var_floor
            .iter()
            .map(|c| sigma * sigma + c)
            .collect();
        let draw = conjugate_gaussian_draw(
            &x,
            &self.ctx.y,
            &obs_var,
            &prior_prec,
            &DVector::zeros(p_dim),
            rng,
        )?;
        state[..p_dim].copy_from_slice(draw.as_slice());
        Ok(())
    }

    pub(crate) fn level_draw(&self, state: &[f64], out: &mut [f64]) {
        let p = DVector::from_column_slice(self.p_values(state));
        let f = &self.l_grid * p;
        for (k, v) in f.iter().enumerate() {
            out[k] = self.ctx.std.uncenter_rsl(state[IDX_ALPHA] + v);
        }
    }

    /// The rate field is the sampled rate process interpolated at the grid
    /// ages; at node ages it equals the sampled node values exactly.
    pub(crate) fn rate_draw(&self, state: &[f64], out: &mut [f64]) {
        let p = DVector::from_column_slice(self.p_values(state));
        let r = &self.interp_grid * p;
        for (k, v) in r.iter().enumerate() {
            out[k] = self.ctx.std.rate_to_mm_per_yr(*v);
        }
    }

    pub(crate) fn level_at(
        &self,
        state: &[f64],
        _site_id: &str,
        age: f64,
    ) -> Result<f64, ModelError> {
        let t = self.ctx.std.to_std_age(age);
        let row = self.quad.cumulative_row(t);
        let integral: f64 = row.iter().zip(self.p_values(state)).map(|(w, v)| w * v).sum();
        Ok(self.ctx.std.uncenter_rsl(state[IDX_ALPHA] + integral))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_prediction_grid, site_key, DataType, Dataset, ModelSpec, ModelType, Observation};
    use crate::model::build_model;

    fn small_data() -> Dataset {
        let obs: Vec<Observation> = (0..12)
            .map(|i| Observation {
                site_id: site_key("S", "R"),
                region: "R".to_string(),
                latitude: 0.0,
                longitude: 0.0,
                rsl: 0.001 * 100.0 * i as f64,
                rsl_err: 0.03,
                age: 1000.0 + 100.0 * i as f64,
                age_err: 3.0,
                data_type: DataType::ProxyRecord,
            })
            .collect();
        Dataset::from_observations(obs).unwrap()
    }

    fn igp_graph() -> IgpModel {
        let data = small_data();
        let spec = ModelSpec::new(ModelType::EivIgpT);
        let grid = build_prediction_grid(&data, 100.0).unwrap();
        match build_model(&spec, &data, &grid).unwrap() {
            crate::model::ModelGraph::Igp(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn covariance_is_symmetric_positive_definite() {
        let m = igp_graph();
        let k = m.covariance(0.3, 1.7);
        assert!((&k - k.transpose()).amax() < 1e-12);
        assert!(Cholesky::new(k).is_some());
    }

    /// The implied covariance of the level at two times is the double
    /// integral of the rate covariance; the operator route (L K L') must
    /// agree with brute-force double summation.
    #[test]
    fn level_covariance_matches_double_summation() {
        let m = igp_graph();
        let k = m.covariance(0.4, 0.9);
        let ta = m.ctx.grid_ages_std[1];
        let tb = m.ctx.grid_ages_std[4];
        let la = m.quad.cumulative_row(ta);
        let lb = m.quad.cumulative_row(tb);
        // operator route
        let la_v = DVector::from_column_slice(&la);
        let lb_v = DVector::from_column_slice(&lb);
        let via_ops = (la_v.transpose() * &k * lb_v)[(0, 0)];
        // brute force
        let mut brute = 0.0;
        for a in 0..m.n_nodes() {
            for b in 0..m.n_nodes() {
                brute += la[a] * k[(a, b)] * lb[b];
            }
        }
        assert!((via_ops - brute).abs() < 1e-10 * brute.abs().max(1.0));
    }

    #[test]
    fn node_range_covers_observations_grid_and_latent_span() {
        let m = igp_graph();
        let (lo, hi) = m.quad.range();
        for (i, &t) in m.ctx.t_std.iter().enumerate() {
            assert!(t - 4.0 * m.ctx.s_t_std[i] >= lo);
            assert!(t + 4.0 * m.ctx.s_t_std[i] <= hi);
        }
        for &t in &m.ctx.grid_ages_std {
            assert!(t >= lo && t <= hi);
        }
    }

    #[test]
    fn rate_draw_at_nodes_returns_sampled_values() {
        let m = igp_graph();
        let names = m.parameter_names();
        let mut state = vec![0.0; names.len()];
        state[m.idx_rho()] = 0.5;
        state[m.idx_nu2()] = 1.0;
        state[m.idx_sigma()] = 0.01;
        for j in 0..m.n_nodes() {
            state[P_OFFSET + j] = (j as f64 * 0.1).sin();
        }
        // pick a grid age and verify the interpolated rate lies between the
        // bracketing node values, converted to mm/yr
        let mut out = vec![0.0; m.ctx.grid_ages_std.len()];
        m.rate_draw(&state, &mut out);
        let t = m.ctx.grid_ages_std[2];
        let row = m.quad.interp_row(t);
        let expect: f64 = row
            .iter()
            .zip(m.p_values(&state))
            .map(|(w, v)| w * v)
            .sum();
        assert!((out[2] - m.ctx.std.rate_to_mm_per_yr(expect)).abs() < 1e-12);
    }
}
