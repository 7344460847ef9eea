//! Randomized ±1 betting.
//!
//! The magnitude `|g(x)|` is used as the probability of placing a unit bet in
//! the direction of `g(x)`. This supports per-trade transaction costs and a
//! loss-capping stop rule.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::confidence::{ConfidenceParams, Variant};
use crate::error::{bounded, finite, invalid, Error, Result};
use crate::numeric::{mean_sd, quantile, KahanSum};
use crate::predictor::{PredictorState, Schedule};
use crate::rng::{self, Rng};

/// Default stop-rule multiplier `C`.
pub const STOP_MULTIPLIER: f64 = 4.0;

/// Stops betting once the realized loss exceeds `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub threshold: f64,
}

impl StopRule {
    /// Threshold `C·ln(1/δ)/ε`.
    pub fn new(epsilon: f64, delta: f64, c: f64) -> Result<Self> {
        finite("epsilon", epsilon)?;
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("C", format!("must be positive, got {c}")));
        }
        Ok(Self {
            threshold: c * (1.0 / delta).ln() / epsilon,
        })
    }

    /// `δ = ε` and `C = 4`: threshold `4·ln(1/ε)/ε`.
    pub fn tuned(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, epsilon, STOP_MULTIPLIER)
    }

    /// True when `loss` exceeds the threshold.
    pub fn triggered(&self, loss: f64) -> bool {
        loss > self.threshold
    }
}

/// One randomized step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedStep {
    pub t: u64,
    pub b: f64,
    pub confidence: f64,
    /// Realized bet in {−1, 0, +1}.
    pub bet: f64,
    pub traded: bool,
    pub cumulative_cost: f64,
    /// `Σ B·b`, before costs.
    pub gross_gain: f64,
    /// Gross gain minus costs.
    pub net_gain: f64,
    pub stopped: bool,
}

/// Randomized betting state around a deterministic predictor.
#[derive(Debug, Clone)]
pub struct RandomizedBetState {
    inner: PredictorState,
    rng: Rng,
    cost: f64,
    stop: Option<StopRule>,
    gross: KahanSum,
    cum_cost: f64,
    trades: u64,
    stopped: bool,
}

impl RandomizedBetState {
    pub fn new(params: ConfidenceParams, cost: f64, rng: Rng) -> Result<Self> {
        finite("cost", cost)?;
        if !(0.0..=1.0).contains(&cost) {
            return Err(invalid("c", format!("cost must lie in [0, 1], got {cost}")));
        }
        let inner = PredictorState::new(params, Schedule::constant(&params))?.without_potential();
        Ok(Self {
            inner,
            rng,
            cost,
            stop: None,
            gross: KahanSum::new(),
            cum_cost: 0.0,
            trades: 0,
            stopped: false,
        })
    }

    pub fn with_stop_rule(mut self, rule: StopRule) -> Self {
        self.stop = Some(rule);
        self
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn trades(&self) -> u64 {
        self.trades
    }

    pub fn gross_gain(&self) -> f64 {
        self.gross.value()
    }

    pub fn net_gain(&self) -> f64 {
        self.gross.value() - self.cum_cost
    }

    pub fn cumulative_cost(&self) -> f64 {
        self.cum_cost
    }

    /// Current confidence `g(x)`.
    pub fn confidence(&self) -> f64 {
        self.inner.confidence()
    }

    pub fn deviation(&self) -> f64 {
        self.inner.deviation()
    }

    /// Draws the bet from `g(x)` and then consumes `b`. Errors once the stop
    /// rule has fired.
    pub fn randomized_step(&mut self, b: f64) -> Result<RandomizedStep> {
        if self.stopped {
            return Err(Error::Stopped);
        }
        let t = self.inner.t() + 1;
        bounded(t, b, 1.0)?;
        let g = self.inner.confidence();
        let u: f64 = self.rng.random();
        let bet = if u < g.abs() { g.signum() } else { 0.0 };
        let traded = bet != 0.0;
        if traded {
            self.trades += 1;
            self.cum_cost += self.cost;
        }
        self.gross.add(bet * b);
        self.inner.step(b)?;
        if let Some(rule) = self.stop {
            if rule.triggered(-self.gross.value()) {
                self.stopped = true;
            }
        }
        Ok(RandomizedStep {
            t,
            b,
            confidence: g,
            bet,
            traded,
            cumulative_cost: self.cum_cost,
            gross_gain: self.gross.value(),
            net_gain: self.net_gain(),
            stopped: self.stopped,
        })
    }
}

/// Confidence parameters for betting with per-trade cost `c` over horizon
/// `T`: the transaction shape with `ε = 2c`, or the ramp with `L = √T`,
/// `n = T` when `c = 0`.
pub fn cost_params(cost: f64, horizon: f64, log_inv_z: f64) -> Result<ConfidenceParams> {
    if cost > 0.0 {
        ConfidenceParams::transaction_ramp(2.0 * cost, horizon, log_inv_z)
    } else {
        ConfidenceParams::from_log_inv_z(log_inv_z, horizon.sqrt(), horizon, Variant::RampExp)
    }
}

/// Summary of a cost-adjusted run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub steps: u64,
    pub gross_gain: f64,
    pub net_gain: f64,
    pub total_cost: f64,
    pub trades: u64,
    /// Step after which betting stopped.
    pub stopped_at: Option<u64>,
    /// Largest realized gross loss over prefixes.
    pub max_loss: f64,
    pub seed: u64,
}

/// Trace of a cost-adjusted run. Steps after a stop carry a zero bet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTrace {
    pub steps: Vec<RandomizedStep>,
    pub summary: CostSummary,
}

impl CostTrace {
    /// Writes the versioned trace CSV with the randomized columns.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "#lhv1 rng={} seed={}", rng::RNG_NAME, self.summary.seed)?;
        writeln!(
            w,
            "t,b,confidence,bet,traded,cumulative_cost,gross_gain,net_gain,stopped"
        )?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{:?},{:?},{},{},{:?},{:?},{:?},{}",
                s.t,
                s.b,
                s.confidence,
                s.bet,
                u8::from(s.traded),
                s.cumulative_cost,
                s.gross_gain,
                s.net_gain,
                u8::from(s.stopped)
            )?;
        }
        Ok(())
    }
}

/// Runs randomized betting with costs over a sequence using stream `seed`.
pub fn run_with_costs(
    sequence: &[f64],
    params: ConfidenceParams,
    cost: f64,
    stop: Option<StopRule>,
    seed: u64,
    record: bool,
) -> Result<CostTrace> {
    let mut st = RandomizedBetState::new(params, cost, rng::stream(seed, 0))?;
    if let Some(r) = stop {
        st = st.with_stop_rule(r);
    }
    let mut steps = Vec::with_capacity(if record { sequence.len() } else { 0 });
    let mut stopped_at = None;
    let mut max_loss = 0.0f64;
    for (i, &b) in sequence.iter().enumerate() {
        let rec = if st.is_stopped() {
            bounded(i as u64 + 1, b, 1.0)?;
            RandomizedStep {
                t: i as u64 + 1,
                b,
                confidence: 0.0,
                bet: 0.0,
                traded: false,
                cumulative_cost: st.cumulative_cost(),
                gross_gain: st.gross_gain(),
                net_gain: st.net_gain(),
                stopped: true,
            }
        } else {
            let r = st.randomized_step(b)?;
            if r.stopped {
                stopped_at = Some(r.t);
            }
            r
        };
        max_loss = max_loss.max(-rec.gross_gain);
        if record {
            steps.push(rec);
        }
    }
    Ok(CostTrace {
        steps,
        summary: CostSummary {
            steps: sequence.len() as u64,
            gross_gain: st.gross_gain(),
            net_gain: st.net_gain(),
            total_cost: st.cumulative_cost(),
            trades: st.trades(),
            stopped_at,
            max_loss,
            seed,
        },
    })
}

/// A betting strategy that commits to a bet before each payoff.
pub trait Bettor {
    /// Places a bet, then observes `b`; returns the realized payoff.
    fn step(&mut self, b: f64) -> Result<f64>;
}

impl Bettor for RandomizedBetState {
    fn step(&mut self, b: f64) -> Result<f64> {
        if self.is_stopped() {
            return Ok(0.0);
        }
        Ok(self.randomized_step(b)?.bet * b)
    }
}

/// Never bets.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverBet;

impl Bettor for NeverBet {
    fn step(&mut self, _b: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Always bets +1.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysPlus;

impl Bettor for AlwaysPlus {
    fn step(&mut self, b: f64) -> Result<f64> {
        Ok(b)
    }
}

/// Empirical upper-tail quantile of loss against biased coins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub epsilon: f64,
    pub delta: f64,
    pub horizon: usize,
    pub trials: usize,
    /// Empirical `(1−δ)`-quantile of the maximum prefix loss.
    pub loss_quantile: f64,
    /// 95% distribution-free interval for that quantile (order statistics).
    pub quantile_ci: (f64, f64),
    /// `loss_quantile / (ln(1/δ)/ε)`.
    pub scaled_quantile: f64,
    pub mean_gain: f64,
    /// Mean regret to always betting +1.
    pub mean_regret: f64,
}

/// Runs `trials` independent biased-coin games (`P(+1) = (1+ε)/2`) of length
/// `horizon` against bettors from `factory(trial)`.
pub fn loss_tail_probe<B, F>(
    factory: F,
    epsilon: f64,
    delta: f64,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<TailReport>
where
    B: Bettor,
    F: Fn(u64) -> Result<B> + Sync,
{
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let need = (100.0 / delta).ceil() as usize;
    if trials < need {
        return Err(Error::Precondition(format!(
            "{trials} trials are fewer than ceil(100/delta) = {need}"
        )));
    }
    let p_up = 0.5 * (1.0 + epsilon);
    let results: Result<Vec<(f64, f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut coins = rng::stream(seed, 2 * i + 1);
            let mut bettor = factory(i)?;
            let (mut gain, mut sum_b, mut max_loss) = (0.0, 0.0, 0.0f64);
            for _ in 0..horizon {
                let b = if coins.random::<f64>() < p_up { 1.0 } else { -1.0 };
                gain += bettor.step(b)?;
                sum_b += b;
                max_loss = max_loss.max(-gain);
            }
            Ok((max_loss, gain, sum_b))
        })
        .collect();
    let results = results?;
    let losses: Vec<f64> = results.iter().map(|r| r.0).collect();
    let q = quantile(&losses, 1.0 - delta);
    let (lo, hi) = order_statistic_ci(&losses, 1.0 - delta);
    let gains: Vec<f64> = results.iter().map(|r| r.1).collect();
    let regrets: Vec<f64> = results.iter().map(|r| r.2 - r.1).collect();
    Ok(TailReport {
        epsilon,
        delta,
        horizon,
        trials,
        loss_quantile: q,
        quantile_ci: (lo, hi),
        scaled_quantile: q / ((1.0 / delta).ln() / epsilon),
        mean_gain: mean_sd(&gains).0,
        mean_regret: mean_sd(&regrets).0,
    })
}

/// 95% confidence interval for the `q`-quantile from order statistics, with
/// ranks taken from Binomial(n, q).
pub fn order_statistic_ci(values: &[f64], q: f64) -> (f64, f64) {
    let n = values.len();
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let bin = Binomial::new(q, n as u64).expect("valid binomial");
    let lo = bin.inverse_cdf(0.025) as usize;
    let hi = (bin.inverse_cdf(0.975) as usize + 1).min(n);
    (v[lo.saturating_sub(1).min(n - 1)], v[hi - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::derive_params;

    #[test]
    fn degenerate_confidences() {
        let p = derive_params(100.0, 0.1).unwrap();
        let mut st = RandomizedBetState::new(p, 0.0, rng::stream(1, 0)).unwrap();
        for _ in 0..100 {
            assert_eq!(st.randomized_step(0.0).unwrap().bet, 0.0);
        }
        let mut st = RandomizedBetState::new(p, 0.0, rng::stream(1, 0)).unwrap();
        for _ in 0..200 {
            st.randomized_step(1.0).unwrap();
        }
        assert_eq!(st.confidence(), 1.0);
        for _ in 0..100 {
            assert_eq!(st.randomized_step(1.0).unwrap().bet, 1.0);
        }
    }

    #[test]
    fn trade_count_matches_summed_confidence() {
        // Trades are Bernoulli(|g_t|); the count concentrates around Σ|g_t|.
        let p = cost_params(0.0, 200_000.0, 3.0).unwrap();
        let mut st = RandomizedBetState::new(p, 0.0, rng::stream(4, 0)).unwrap();
        let (mut mean, mut var, mut trades) = (0.0, 0.0, 0u64);
        for i in 0..200_000u64 {
            let b = if i % 5 < 3 { 1.0 } else { -1.0 };
            let g = st.confidence().abs();
            mean += g;
            var += g * (1.0 - g);
            if st.randomized_step(b).unwrap().traded {
                trades += 1;
            }
        }
        assert!(var > 100.0);
        assert!((trades as f64 - mean).abs() <= 5.0 * var.sqrt(), "{trades} vs {mean}");
    }

    #[test]
    fn stop_rule_examples() {
        let r = StopRule::tuned(0.1).unwrap();
        assert!((r.threshold - 4.0 * 10f64.ln() / 0.1).abs() < 1e-12);
        assert!(!r.triggered(92.0));
        assert!(r.triggered(92.2));

        // Alternating payoffs against the step shape lose about |g(1)| every other step.
        let small = StopRule::new(1.0, 0.5, 1.0).unwrap();
        let p = ConfidenceParams::from_log_inv_z(1.0, 10.0, 100.0, Variant::StepExp).unwrap();
        let mut st = RandomizedBetState::new(p, 0.0, rng::stream(2, 0))
            .unwrap()
            .with_stop_rule(small);
        for i in 0..300 {
            st.randomized_step(if i % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
            if st.is_stopped() {
                break;
            }
        }
        assert!(st.is_stopped());
        assert!(-st.gross_gain() > small.threshold);
        assert!(-st.gross_gain() <= small.threshold + 1.0);
        assert!(matches!(st.randomized_step(1.0), Err(Error::Stopped)));
    }

    #[test]
    fn zero_cost_run_matches_randomized_predictor() {
        let p = cost_params(0.0, 1000.0, 5.0).unwrap();
        let seq: Vec<f64> = (0..1000).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let a = run_with_costs(&seq, p, 0.0, None, 9, true).unwrap();
        assert_eq!(a.summary.total_cost, 0.0);
        assert_eq!(a.summary.net_gain, a.summary.gross_gain);
        let b = run_with_costs(&seq, p, 0.0, None, 9, false).unwrap();
        assert_eq!(a.summary, b.summary);
        let mut out = Vec::new();
        a.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("#lhv1"));
        assert_eq!(text.lines().count(), 1002);
    }

    #[test]
    fn probe_requires_enough_trials() {
        assert!(loss_tail_probe(|_| Ok(NeverBet), 0.1, 0.01, 10, 50, 0).is_err());
        let r = loss_tail_probe(|_| Ok(NeverBet), 0.1, 0.1, 10, 1000, 0).unwrap();
        assert_eq!(r.loss_quantile, 0.0);
        assert!(r.mean_regret > 0.0);
    }
}
