//! Multi-chain MCMC driver: exact Gibbs draws for conjugate Gaussian blocks,
//! adaptive random-walk Metropolis for everything else.
//!
//! Chains are independent workers seeded `rng_seed + chain_index`, so a run
//! is fully deterministic for a given seed. Proposal scales adapt by
//! Robbins-Monro during burn-in only; the retained chain comes from a fixed
//! kernel.

pub mod diagnostics;

pub use diagnostics::{
    effective_sample_size, gelman_rubin, render_summary_table, summarize_draws, DiagnosticsError,
    Summary, SummaryRow, VariableFilter,
};

use crate::data::ModelSpec;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SampleError {
    #[error("non-finite log density in chain {chain} at iteration {iteration}, block {block}")]
    NumericalFailure {
        chain: usize,
        iteration: usize,
        block: String,
    },

    #[error("invalid sampler settings: {0}")]
    InvalidSpec(String),
}

/// Parameter support for the random-walk proposal transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Real,
    /// Proposals walk on `ln x`.
    Positive,
    /// Proposals walk on `logit x`.
    UnitInterval,
}

impl Support {
    fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Support::Real => x,
            Support::Positive => x.ln(),
            Support::UnitInterval => (x / (1.0 - x)).ln(),
        }
    }

    fn from_unconstrained(self, u: f64) -> f64 {
        match self {
            Support::Real => u,
            Support::Positive => u.exp(),
            Support::UnitInterval => 1.0 / (1.0 + (-u).exp()),
        }
    }

    /// log |dx/du| at x, the density correction for walking on u.
    fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Support::Real => 0.0,
            Support::Positive => x.ln(),
            Support::UnitInterval => x.ln() + (1.0 - x).ln(),
        }
    }
}

/// One random-walk Metropolis block over a set of state indices.
#[derive(Debug, Clone)]
pub struct MetropolisBlock {
    pub name: String,
    pub indices: Vec<usize>,
    pub support: Support,
    pub initial_scale: f64,
}

impl MetropolisBlock {
    pub fn scalar(name: impl Into<String>, index: usize, support: Support, scale: f64) -> Self {
        MetropolisBlock {
            name: name.into(),
            indices: vec![index],
            support,
            initial_scale: scale,
        }
    }
}

const TARGET_ACCEPT_SCALAR: f64 = 0.44;
const TARGET_ACCEPT_BLOCK: f64 = 0.234;

/// Contract between a model and the generic sampler.
///
/// The state is a flat parameter vector whose layout the model owns.
/// `conjugate_update` performs the model's exact Gaussian draws in place;
/// `block_log_density` returns every log-posterior term that depends on the
/// given Metropolis block (likelihood rows it touches plus its priors).
pub trait SamplerModel: Sync {
    fn parameter_names(&self) -> Vec<String>;
    fn initial_state(&self, rng: &mut ChaCha20Rng) -> Vec<f64>;
    fn metropolis_blocks(&self) -> Vec<MetropolisBlock>;
    fn block_log_density(&self, block: &MetropolisBlock, state: &[f64]) -> f64;
    fn conjugate_update(&self, state: &mut [f64], rng: &mut ChaCha20Rng) -> Result<(), String>;
}

/// Per-chain, per-parameter retained draws plus run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub parameter_names: Vec<String>,
    /// One matrix per chain, draws x parameters.
    pub chains: Vec<DMatrix<f64>>,
    pub spec: ModelSpec,
    pub data_fingerprint: String,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn retained_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.nrows())
    }

    pub fn n_total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.nrows()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    /// Per-chain series for one variable.
    pub fn chains_for(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        let idx = self.index_of(name)?;
        Some(
            self.chains
                .iter()
                .map(|c| c.column(idx).iter().cloned().collect())
                .collect(),
        )
    }

    /// All chains pooled, chain order then draw order.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.index_of(name)?;
        let mut out = Vec::with_capacity(self.n_total_draws());
        for c in &self.chains {
            out.extend(c.column(idx).iter().cloned());
        }
        Some(out)
    }

    /// Names reported by the default summary: the `sigma_*` family.
    pub fn hyperparameter_names(&self) -> Vec<String> {
        self.parameter_names
            .iter()
            .filter(|n| n.starts_with("sigma_"))
            .cloned()
            .collect()
    }

    /// All chains stacked into one matrix (total draws x parameters).
    pub fn stacked(&self) -> DMatrix<f64> {
        let cols = self.parameter_names.len();
        let mut out = DMatrix::zeros(self.n_total_draws(), cols);
        let mut row = 0;
        for c in &self.chains {
            out.rows_mut(row, c.nrows()).copy_from(c);
            row += c.nrows();
        }
        out
    }
}

/// Runs `spec.n_chains` independent chains and collects the retained draws.
pub fn run_chains<M: SamplerModel>(
    model: &M,
    spec: &ModelSpec,
    data_fingerprint: &str,
) -> Result<PosteriorDraws, SampleError> {
    spec.validate()
        .map_err(|e| SampleError::InvalidSpec(e.to_string()))?;
    let names = model.parameter_names();

    let results: Vec<Result<DMatrix<f64>, SampleError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..spec.n_chains)
            .map(|chain| scope.spawn(move || run_one_chain(model, spec, chain)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain panicked")).collect()
    });

    let mut chains = Vec::with_capacity(spec.n_chains);
    for r in results {
        chains.push(r?);
    }
    debug_assert!(chains.iter().all(|c| c.ncols() == names.len()));

    Ok(PosteriorDraws {
        parameter_names: names,
        chains,
        spec: spec.clone(),
        data_fingerprint: data_fingerprint.to_string(),
    })
}

fn run_one_chain<M: SamplerModel>(
    model: &M,
    spec: &ModelSpec,
    chain: usize,
) -> Result<DMatrix<f64>, SampleError> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.rng_seed.wrapping_add(chain as u64));
    let mut state = model.initial_state(&mut rng);
    let blocks = model.metropolis_blocks();
    let mut scales: Vec<f64> = blocks.iter().map(|b| b.initial_scale).collect();
    let mut adapt_steps: Vec<u64> = vec![0; blocks.len()];

    let retained = spec.retained_per_chain();
    let mut draws = DMatrix::zeros(retained, state.len());
    let mut kept = 0;

    for iteration in 1..=spec.n_iterations {
        model
            .conjugate_update(&mut state, &mut rng)
            .map_err(|block| SampleError::NumericalFailure {
                chain,
                iteration,
                block,
            })?;

        let adapting = iteration <= spec.n_burnin;
        for (bi, block) in blocks.iter().enumerate() {
            metropolis_step(
                model,
                block,
                &mut state,
                &mut scales[bi],
                &mut adapt_steps[bi],
                adapting,
                &mut rng,
            )
            .map_err(|block| SampleError::NumericalFailure {
                chain,
                iteration,
                block,
            })?;
        }

        if iteration > spec.n_burnin && (iteration - spec.n_burnin) % spec.thin == 0 {
            for (j, v) in state.iter().enumerate() {
                draws[(kept, j)] = *v;
            }
            kept += 1;
        }
    }
    debug_assert_eq!(kept, retained);
    Ok(draws)
}

fn metropolis_step<M: SamplerModel>(
    model: &M,
    block: &MetropolisBlock,
    state: &mut [f64],
    scale: &mut f64,
    adapt_steps: &mut u64,
    adapting: bool,
    rng: &mut ChaCha20Rng,
) -> Result<(), String> {
    let target = if block.indices.len() == 1 {
        TARGET_ACCEPT_SCALAR
    } else {
        TARGET_ACCEPT_BLOCK
    };

    let current: Vec<f64> = block.indices.iter().map(|&i| state[i]).collect();
    let mut current_ld = model.block_log_density(block, state);
    for &x in &current {
        current_ld += block.support.log_jacobian(x);
    }
    if current_ld.is_nan() || current_ld == f64::INFINITY {
        return Err(block.name.clone());
    }

    let proposal: Vec<f64> = current
        .iter()
        .map(|&x| {
            let z: f64 = rng.sample(StandardNormal);
            block
                .support
                .from_unconstrained(block.support.to_unconstrained(x) + *scale * z)
        })
        .collect();

    let mut accept_prob = 0.0;
    let proposal_ok = proposal.iter().all(|v| v.is_finite());
    if proposal_ok {
        for (&i, &v) in block.indices.iter().zip(&proposal) {
            state[i] = v;
        }
        let mut prop_ld = model.block_log_density(block, state);
        for &x in &proposal {
            prop_ld += block.support.log_jacobian(x);
        }
        if prop_ld.is_nan() {
            return Err(block.name.clone());
        }
        let log_alpha = prop_ld - current_ld;
        accept_prob = log_alpha.min(0.0).exp();
        let u: f64 = rng.random();
        if !(u.ln() < log_alpha) {
            // reject: restore
            for (&i, &v) in block.indices.iter().zip(&current) {
                state[i] = v;
            }
        }
    }

    if adapting {
        *adapt_steps += 1;
        let gamma = (*adapt_steps as f64).powf(-0.6);
        let log_scale = (scale.ln() + gamma * (accept_prob - target)).clamp(-15.0, 5.0);
        *scale = log_scale.exp();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ModelType;

    /// Toy conjugate model: y_i ~ N(mu, s2) with prior mu ~ N(m0, v0) and a
    /// half-Normal-ish nuisance tau updated by Metropolis (independent of y)
    /// so both update paths are exercised.
    struct ToyModel {
        y: Vec<f64>,
        s2: f64,
        m0: f64,
        v0: f64,
    }

    impl SamplerModel for ToyModel {
        fn parameter_names(&self) -> Vec<String> {
            vec!["mu".to_string(), "sigma_tau".to_string()]
        }

        fn initial_state(&self, _rng: &mut ChaCha20Rng) -> Vec<f64> {
            vec![0.0, 1.0]
        }

        fn metropolis_blocks(&self) -> Vec<MetropolisBlock> {
            vec![MetropolisBlock::scalar("sigma_tau", 1, Support::Positive, 0.3)]
        }

        fn block_log_density(&self, _block: &MetropolisBlock, state: &[f64]) -> f64 {
            let tau = state[1];
            -0.5 * (tau / 2.0).powi(2)
        }

        fn conjugate_update(
            &self,
            state: &mut [f64],
            rng: &mut ChaCha20Rng,
        ) -> Result<(), String> {
            let n = self.y.len() as f64;
            let prec = n / self.s2 + 1.0 / self.v0;
            let mean = (self.y.iter().sum::<f64>() / self.s2 + self.m0 / self.v0) / prec;
            let z: f64 = rng.sample(StandardNormal);
            state[0] = mean + z / prec.sqrt();
            Ok(())
        }
    }

    fn toy_spec() -> ModelSpec {
        let mut spec = ModelSpec::new(ModelType::EivSlrT);
        spec.n_chains = 3;
        spec.n_iterations = 3000;
        spec.n_burnin = 1000;
        spec.thin = 2;
        spec.rng_seed = 99;
        spec
    }

    #[test]
    fn conjugate_toy_matches_analytic_posterior() {
        let model = ToyModel {
            y: vec![1.2, 0.8, 1.1, 0.9, 1.0, 1.3],
            s2: 0.25,
            m0: 0.0,
            v0: 100.0,
        };
        let spec = toy_spec();
        let draws = run_chains(&model, &spec, "toy").unwrap();
        assert_eq!(draws.n_total_draws(), 3000);

        let n = model.y.len() as f64;
        let prec = n / model.s2 + 1.0 / model.v0;
        let mean = (model.y.iter().sum::<f64>() / model.s2) / prec;
        let mu = draws.pooled("mu").unwrap();
        let mu_hat = mu.iter().sum::<f64>() / mu.len() as f64;
        let sd = (1.0 / prec).sqrt();
        let mcse = sd / (mu.len() as f64).sqrt();
        assert!(
            (mu_hat - mean).abs() < 3.0 * mcse,
            "posterior mean {mu_hat} vs analytic {mean} (mcse {mcse})"
        );
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let model = ToyModel {
            y: vec![0.5, 0.7, 0.4],
            s2: 0.1,
            m0: 0.0,
            v0: 10.0,
        };
        let spec = toy_spec();
        let a = run_chains(&model, &spec, "toy").unwrap();
        let b = run_chains(&model, &spec, "toy").unwrap();
        for (ca, cb) in a.chains.iter().zip(&b.chains) {
            assert_eq!(ca.len(), cb.len());
            for (x, y) in ca.iter().zip(cb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn positive_support_parameters_stay_positive() {
        let model = ToyModel {
            y: vec![0.5, 0.7, 0.4],
            s2: 0.1,
            m0: 0.0,
            v0: 10.0,
        };
        let draws = run_chains(&model, &toy_spec(), "toy").unwrap();
        let tau = draws.pooled("sigma_tau").unwrap();
        assert!(tau.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn retention_schedule_counts() {
        let mut spec = toy_spec();
        spec.n_chains = 2;
        spec.n_iterations = 120;
        spec.n_burnin = 20;
        spec.thin = 4;
        let model = ToyModel {
            y: vec![0.0, 1.0],
            s2: 1.0,
            m0: 0.0,
            v0: 1.0,
        };
        let draws = run_chains(&model, &spec, "toy").unwrap();
        assert_eq!(draws.retained_per_chain(), 25);
        assert_eq!(draws.n_total_draws(), 50);
    }
}
