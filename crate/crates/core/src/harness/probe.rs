use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::confidence::{ConfidenceParams, Variant};
use crate::error::{invalid, Error, Result};
use crate::numeric::{mean_sd, quantile};
use crate::predictor::{run_summary, RunConfig};
use crate::rng;

pub const MIN_PROBE_TRIALS: usize = 1000;

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let mid = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

/// Empirical CDF of the always-+1 payoff at a binomial quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileCheck {
    pub q: f64,
    /// Payoff `2k − T` at the exact binomial quantile `k`.
    pub payoff: f64,
    pub expected_cdf: f64,
    pub empirical_cdf: f64,
    /// Binomial standard deviation of the empirical CDF.
    pub sigma: f64,
    pub pass: bool,
}

/// Fair-coin tail report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub horizon: usize,
    pub log_inv_z: f64,
    pub trials: usize,
    pub seed: u64,
    /// `2·sqrt(T·ln(1/Z))`.
    pub threshold: f64,
    pub exceed_count: usize,
    pub exceed_prob: f64,
    pub exceed_ci: (f64, f64),
    /// Mean predictor gain on trials where always-+1 exceeded the threshold.
    pub mean_gain_when_exceeded: Option<f64>,
    /// Mean of (always-+1 payoff − predictor gain) on those trials.
    pub mean_regret_when_exceeded: Option<f64>,
    pub mean_gain: f64,
    /// 99th percentile of the predictor's maximum prefix loss.
    pub loss_q99: f64,
    pub splus_quantiles: Vec<QuantileCheck>,
    pub splus_pass: bool,
}

/// Runs the tuned predictor (`L = √T`, `n = T`) on `trials` fair-coin
/// sequences and reports how often always-+1 gains more than
/// `2·sqrt(T·ln(1/Z))`, together with the predictor's gain there.
pub fn lower_bound_probe(horizon: usize, z: f64, trials: usize, seed: u64) -> Result<LowerBoundReport> {
    if trials < MIN_PROBE_TRIALS {
        return Err(Error::Precondition(format!(
            "{trials} trials are fewer than the required {MIN_PROBE_TRIALS}"
        )));
    }
    if horizon == 0 {
        return Err(invalid("T", "horizon must be positive"));
    }
    let t = horizon as f64;
    let params = ConfidenceParams::new(z, t.sqrt(), t, Variant::RampExp)?;
    let lz = params.log_inv_z();
    let config = RunConfig::plain(params);
    let threshold = 2.0 * (t * lz).sqrt();
    let runs: Result<Vec<(f64, f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i);
            let seq: Vec<f64> = (0..horizon)
                .map(|_| if r.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let s = run_summary(&seq, &config)?;
            Ok((s.sum_b, s.final_gain, s.max_prefix_loss))
        })
        .collect();
    let runs = runs?;
    let exceeded: Vec<&(f64, f64, f64)> = runs.iter().filter(|r| r.0 > threshold).collect();
    let exceed_count = exceeded.len();
    let (mean_gain_when_exceeded, mean_regret_when_exceeded) = if exceeded.is_empty() {
        (None, None)
    } else {
        let g: Vec<f64> = exceeded.iter().map(|r| r.1).collect();
        let rg: Vec<f64> = exceeded.iter().map(|r| r.0 - r.1).collect();
        (Some(mean_sd(&g).0), Some(mean_sd(&rg).0))
    };
    let gains: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let losses: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let payoffs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let splus_quantiles = splus_binomial_check(&payoffs, horizon)?;
    Ok(LowerBoundReport {
        horizon,
        log_inv_z: lz,
        trials,
        seed,
        threshold,
        exceed_count,
        exceed_prob: exceed_count as f64 / trials as f64,
        exceed_ci: wilson_interval(exceed_count, trials),
        mean_gain_when_exceeded,
        mean_regret_when_exceeded,
        mean_gain: mean_sd(&gains).0,
        loss_q99: quantile(&losses, 0.99),
        splus_pass: splus_quantiles.iter().all(|c| c.pass),
        splus_quantiles,
    })
}

/// Compares the empirical law of the always-+1 payoff `2K − T` with
/// `K ~ Binomial(T, 1/2)` at several quantiles, to 4σ.
pub fn splus_binomial_check(payoffs: &[f64], horizon: usize) -> Result<Vec<QuantileCheck>> {
    let bin = Binomial::new(0.5, horizon as u64).map_err(|e| invalid("T", e.to_string()))?;
    let n = payoffs.len() as f64;
    Ok([0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99]
        .into_iter()
        .map(|q| {
            let k = bin.inverse_cdf(q);
            let payoff = 2.0 * k as f64 - horizon as f64;
            let expected_cdf = bin.cdf(k);
            let empirical_cdf = payoffs.iter().filter(|&&p| p <= payoff + 1e-9).count() as f64 / n;
            let sigma = (expected_cdf * (1.0 - expected_cdf) / n).sqrt();
            QuantileCheck {
                q,
                payoff,
                expected_cdf,
                empirical_cdf,
                sigma,
                pass: (empirical_cdf - expected_cdf).abs() <= 4.0 * sigma,
            }
        })
        .collect())
}
