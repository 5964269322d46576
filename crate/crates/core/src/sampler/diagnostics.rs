//! Convergence diagnostics and posterior summaries: split-chain R-hat,
//! effective sample size, and the summary table.

use super::PosteriorDraws;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("too few draws: need {needed}, got {got}")]
    TooFewDraws { needed: usize, got: usize },
}

pub const VERDICT_OK: &str = "No convergence issues detected.";
pub const VERDICT_BAD: &str = "Convergence issues detected, a longer run is necessary.";
const RHAT_THRESHOLD: f64 = 1.1;
/// Normal-consistency constant for the median absolute deviation.
const MAD_SCALE: f64 = 1.4826;

/// Split-chain potential scale reduction factor.
///
/// Each chain is halved; R-hat is the usual between/within variance ratio
/// over the half-chains. A single chain is accepted when it has at least 8
/// draws (its two halves then act as the chains).
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    let halves = split_in_half(chains)?;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = halves.iter().map(|c| sample_variance(c)).collect();
    let w = mean(&vars);
    let var_of_means = sample_variance(&means);
    if w == 0.0 {
        return Ok(if var_of_means == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + var_of_means;
    Ok((var_plus / w).sqrt())
}

fn split_in_half(chains: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DiagnosticsError> {
    if chains.is_empty() {
        return Err(DiagnosticsError::TooFewDraws { needed: 4, got: 0 });
    }
    let shortest = chains.iter().map(|c| c.len()).min().unwrap();
    let needed = if chains.len() == 1 { 8 } else { 4 };
    if shortest < needed {
        return Err(DiagnosticsError::TooFewDraws {
            needed,
            got: shortest,
        });
    }
    let half = shortest / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    Ok(out)
}

/// Effective sample size from the combined-chain autocorrelation sum,
/// truncated at the first negative pair sum (initial positive sequence).
/// A zero-variance input returns the total draw count with a warning.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    if chains.is_empty() {
        return Err(DiagnosticsError::TooFewDraws { needed: 8, got: 0 });
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap();
    if n < 8 {
        return Err(DiagnosticsError::TooFewDraws { needed: 8, got: n });
    }
    let m = chains.len();
    let total = (m * n) as f64;

    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let vars: Vec<f64> = chains.iter().map(|c| sample_variance(&c[..n])).collect();
    let w = mean(&vars);
    let var_plus = if m > 1 {
        (n as f64 - 1.0) / n as f64 * w + sample_variance(&means)
    } else {
        w
    };
    if !(var_plus > 0.0) || w < 1e-300 {
        log::warn!("effective_sample_size: zero-variance draws carry no autocorrelation information");
        return Ok(total);
    }

    // biased autocovariances per chain
    let acov = |c: &[f64], mu: f64, t: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - t {
            s += (c[i] - mu) * (c[i + t] - mu);
        }
        s / n as f64
    };

    let rho = |t: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| acov(&c[..n], mu, t))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut tau = 1.0;
    let mut t = 1;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        tau += 2.0 * pair;
        t += 2;
    }
    Ok((total / tau).clamp(1.0, total))
}

/// Linear-interpolation quantile (the common "type 7" rule).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    crate::basis::quantile_sorted(&sorted, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variable: String,
    pub mean: f64,
    pub sd: f64,
    pub mad: f64,
    pub q5: f64,
    pub q95: f64,
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariableFilter {
    /// The `sigma_*` family (the default).
    Hyperparameters,
    Named(Vec<String>),
    All,
}

impl VariableFilter {
    fn select(&self, names: &[String]) -> Vec<String> {
        match self {
            VariableFilter::Hyperparameters => names
                .iter()
                .filter(|n| n.starts_with("sigma_"))
                .cloned()
                .collect(),
            VariableFilter::Named(list) => names
                .iter()
                .filter(|n| list.iter().any(|l| l == *n))
                .cloned()
                .collect(),
            VariableFilter::All => names.to_vec(),
        }
    }
}

/// Summarizes the selected variables and reports the convergence verdict
/// over their R-hat values.
pub fn summarize_draws(draws: &PosteriorDraws, filter: &VariableFilter) -> Summary {
    let selected = filter.select(&draws.parameter_names);
    let mut rows = Vec::with_capacity(selected.len());
    for name in selected {
        let pooled = draws.pooled(&name).expect("selected name exists");
        let per_chain = draws.chains_for(&name).expect("selected name exists");
        let m = mean(&pooled);
        let sd = sample_variance(&pooled).sqrt();
        let med = quantile(&pooled, 0.5);
        let mad = {
            let dev: Vec<f64> = pooled.iter().map(|v| (v - med).abs()).collect();
            MAD_SCALE * quantile(&dev, 0.5)
        };
        let rhat = gelman_rubin(&per_chain).unwrap_or(f64::NAN);
        rows.push(SummaryRow {
            variable: name,
            mean: m,
            sd,
            mad,
            q5: quantile(&pooled, 0.05),
            q95: quantile(&pooled, 0.95),
            rhat,
        });
    }
    let converged = rows
        .iter()
        .all(|r| r.rhat.is_finite() && r.rhat < RHAT_THRESHOLD);
    Summary {
        rows,
        verdict: if converged { VERDICT_OK } else { VERDICT_BAD }.to_string(),
    }
}

/// Renders the summary the way the CLI prints it: the verdict, then one row
/// per variable with columns (variable, mean, sd, mad, q5, q95, rhat).
pub fn render_summary_table(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str(&summary.verdict);
    out.push('\n');
    out.push_str(&format!(
        "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}\n",
        "variable", "mean", "sd", "mad", "q5", "q95", "rhat"
    ));
    for r in &summary.rows {
        out.push_str(&format!(
            "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}\n",
            r.variable,
            sig(r.mean),
            sig(r.sd),
            sig(r.mad),
            sig(r.q5),
            sig(r.q95),
            format!("{:.3}", r.rhat),
        ));
    }
    out
}

fn sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-4..1e6).contains(&a) {
        let digits = (4 - a.log10().floor() as i32 - 1).max(0) as usize;
        format!("{v:.digits$}")
    } else {
        format!("{v:.3e}")
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}
