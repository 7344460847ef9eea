//! The discounted-deviation predictor.
//!
//! At each step the predictor bets `g(x_t)` on the coming payoff `b_t`, then
//! moves its deviation to `x_{t+1} = ρ_t·x_t + b_t`. The clipped variant stops
//! growing `x` once it is saturated and the payoff pushes further outward.

pub mod seqfile;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceParams;
use crate::error::{bounded, finite, invalid, Error, Result};
use crate::numeric::KahanSum;

/// Discount schedule `ρ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Fixed `ρ`, plain update.
    Constant { rho: f64 },
    /// `ρ_t = 1 − |b_t|^p / n`, plain update.
    PNorm { p: f64, n: f64 },
    /// Fixed `ρ`, clipped update.
    ClippedConstant { rho: f64 },
}

impl Schedule {
    /// Constant schedule with the window of `params`.
    pub fn constant(params: &ConfidenceParams) -> Self {
        Schedule::Constant { rho: params.rho() }
    }

    /// Clipped schedule with the window of `params`.
    pub fn clipped(params: &ConfidenceParams) -> Self {
        Schedule::ClippedConstant { rho: params.rho() }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant { rho } | Schedule::ClippedConstant { rho } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(invalid("rho", format!("must lie in [0, 1), got {rho}")));
                }
            }
            Schedule::PNorm { p, n } => {
                rho_pnorm(0.0, p, n)?;
            }
        }
        Ok(())
    }

    /// Discount applied after observing `b`.
    pub fn rho_for(&self, b: f64) -> f64 {
        match *self {
            Schedule::Constant { rho } | Schedule::ClippedConstant { rho } => rho,
            Schedule::PNorm { p, n } => 1.0 - b.abs().powf(p) / n,
        }
    }

    pub fn is_clipped(&self) -> bool {
        matches!(self, Schedule::ClippedConstant { .. })
    }
}

/// `1 − |b|^p / n` for `p ∈ (0, 2]`, `|b| ≤ 1`, `n ≥ 1`.
pub fn rho_pnorm(b: f64, p: f64, n: f64) -> Result<f64> {
    finite("p", p)?;
    finite("n", n)?;
    if !(p > 0.0 && p <= 2.0) {
        return Err(invalid("p", format!("exponent must lie in (0, 2], got {p}")));
    }
    if !(n >= 1.0) {
        return Err(invalid("n", format!("window must be at least 1, got {n}")));
    }
    let b = bounded(0, b, 1.0)?;
    Ok(1.0 - b.abs().powf(p) / n)
}

/// One recorded step. `x` is the deviation the bet was based on, `x_next`
/// the deviation after the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based step index.
    pub t: u64,
    /// Payoff as supplied (unscaled).
    pub b: f64,
    /// Bet `g(x)` placed before `b` was revealed.
    pub confidence: f64,
    pub x: f64,
    pub x_next: f64,
    /// `confidence · b`.
    pub gain: f64,
    /// Potential of `x_next`.
    pub phi: f64,
    /// Discount used for this update.
    pub rho: f64,
    /// True when the clipped rule dropped `b` from the deviation.
    pub banked: bool,
}

/// Aggregate figures of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: u64,
    pub final_gain: f64,
    /// `max(0, max_t −gain_{1..t})`.
    pub max_prefix_loss: f64,
    pub max_abs_x: f64,
    pub sum_b: f64,
}

/// Ordered step records plus their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Payoffs were divided by `scale` on ingestion; gains are reported
    /// multiplied back.
    pub scale: f64,
    pub steps: Vec<TraceStep>,
    pub summary: TraceSummary,
}

impl Trace {
    /// Builds a trace and computes its summary.
    pub fn from_steps(scale: f64, steps: Vec<TraceStep>) -> Self {
        let summary = summarize(&steps);
        Trace { scale, steps, summary }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn summarize(steps: &[TraceStep]) -> TraceSummary {
    let mut gain = KahanSum::new();
    let mut sum_b = KahanSum::new();
    let mut max_loss = 0.0f64;
    let mut max_x = 0.0f64;
    for s in steps {
        gain.add(s.gain);
        sum_b.add(s.b);
        max_loss = max_loss.max(-gain.value());
        max_x = max_x.max(s.x.abs()).max(s.x_next.abs());
    }
    TraceSummary {
        steps: steps.len() as u64,
        final_gain: gain.value(),
        max_prefix_loss: max_loss,
        max_abs_x: max_x,
        sum_b: sum_b.value(),
    }
}

/// Mutable predictor state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorState {
    params: ConfidenceParams,
    schedule: Schedule,
    scale: f64,
    x: f64,
    t: u64,
    cum_gain: KahanSum,
    potential: f64,
    track_potential: bool,
}

impl PredictorState {
    pub fn new(params: ConfidenceParams, schedule: Schedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            params,
            schedule,
            scale: 1.0,
            x: 0.0,
            t: 0,
            cum_gain: KahanSum::new(),
            potential: 0.0,
            track_potential: true,
        })
    }

    /// Disables the per-step potential quadrature; recorded `phi` becomes
    /// NaN. For Monte Carlo loops that never read it.
    pub fn without_potential(mut self) -> Self {
        self.track_potential = false;
        self.potential = f64::NAN;
        self
    }

    /// Accepts payoffs in `[−m, m]`, dividing them by `m` before use.
    pub fn with_scale(mut self, m: f64) -> Result<Self> {
        finite("M", m)?;
        if !(m > 0.0) {
            return Err(invalid("M", format!("scale must be positive, got {m}")));
        }
        self.scale = m;
        Ok(self)
    }

    pub fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    /// Current deviation (in scaled units).
    pub fn deviation(&self) -> f64 {
        self.x
    }

    /// Steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Cumulative gain in unscaled payoff units.
    pub fn cum_gain(&self) -> f64 {
        self.cum_gain.value() * self.scale
    }

    /// `Φ` of the current deviation.
    pub fn potential(&self) -> f64 {
        self.potential
    }

    /// Bet for the next step; depends only on past payoffs.
    pub fn confidence(&self) -> f64 {
        self.params.g(self.x)
    }

    /// Plain update: always `x ← ρ·x + b`.
    pub fn step(&mut self, b: f64) -> Result<TraceStep> {
        self.advance(b, false)
    }

    /// Clipped update: `x ← ρ·x` when `|x| ≥ U` and `g(x)·b ≥ 0`.
    pub fn step_clipped(&mut self, b: f64) -> Result<TraceStep> {
        self.advance(b, true)
    }

    /// Uses the update selected by the schedule.
    pub fn step_scheduled(&mut self, b: f64) -> Result<TraceStep> {
        let clipped = self.schedule.is_clipped();
        self.advance(b, clipped)
    }

    fn advance(&mut self, b_raw: f64, clipped: bool) -> Result<TraceStep> {
        let t = self.t + 1;
        bounded(t, b_raw, self.scale)?;
        let b = b_raw / self.scale;
        let x = self.x;
        let confidence = self.params.g(x);
        let gain = confidence * b;
        let rho = self.schedule.rho_for(b);
        let banked = clipped && x.abs() >= self.params.u() && gain >= 0.0 && b != 0.0;
        let x_next = if banked { rho * x } else { rho * x + b };
        self.x = x_next;
        self.t = t;
        self.cum_gain.add(gain);
        if self.track_potential {
            self.potential = self.params.potential(x_next);
        }
        Ok(TraceStep {
            t,
            b: b_raw,
            confidence,
            x,
            x_next,
            gain: gain * self.scale,
            phi: self.potential,
            rho,
            banked,
        })
    }
}

/// Run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ConfidenceParams,
    pub schedule: Schedule,
    /// Payoff bound `M`; 1 for payoffs already in `[−1, 1]`.
    pub scale: f64,
}

impl RunConfig {
    /// Constant schedule with the window of `params`, unit scale.
    pub fn plain(params: ConfidenceParams) -> Self {
        Self {
            params,
            schedule: Schedule::constant(&params),
            scale: 1.0,
        }
    }

    /// Clipped schedule with the window of `params`, unit scale.
    pub fn clipped(params: ConfidenceParams) -> Self {
        Self {
            params,
            schedule: Schedule::clipped(&params),
            scale: 1.0,
        }
    }
}

/// Runs the predictor over a whole sequence and records every step.
pub fn run(sequence: &[f64], config: &RunConfig) -> Result<Trace> {
    let mut state = PredictorState::new(config.params, config.schedule)?.with_scale(config.scale)?;
    let mut steps = Vec::with_capacity(sequence.len());
    for &b in sequence {
        steps.push(state.step_scheduled(b)?);
    }
    Ok(Trace::from_steps(config.scale, steps))
}

/// Summary of a run without recording steps or potentials.
pub fn run_summary(sequence: &[f64], config: &RunConfig) -> Result<TraceSummary> {
    let mut state = PredictorState::new(config.params, config.schedule)?
        .with_scale(config.scale)?
        .without_potential();
    let mut gain = KahanSum::new();
    let mut sum_b = KahanSum::new();
    let mut max_loss = 0.0f64;
    let mut max_x = 0.0f64;
    for &b in sequence {
        let s = state.step_scheduled(b)?;
        gain.add(s.gain);
        sum_b.add(s.b);
        max_loss = max_loss.max(-gain.value());
        max_x = max_x.max(s.x_next.abs());
    }
    Ok(TraceSummary {
        steps: sequence.len() as u64,
        final_gain: gain.value(),
        max_prefix_loss: max_loss,
        max_abs_x: max_x,
        sum_b: sum_b.value(),
    })
}

/// `|Σ_{j<T} (1−ρ_j)·x_j + x_T − Σ_j b_j|` in scaled units, where `x_j` is
/// the deviation after step `j`.
///
/// Only meaningful for unclipped schedules.
pub fn telescoping_check(trace: &Trace) -> Result<f64> {
    let steps = &trace.steps;
    let last = steps
        .last()
        .ok_or_else(|| Error::Precondition("telescoping check needs a nonempty trace".into()))?;
    let mut lhs = KahanSum::new();
    let mut rhs = KahanSum::new();
    for w in steps.windows(2) {
        // ρ applied at step j+1 multiplies the deviation left by step j.
        lhs.add((1.0 - w[1].rho) * w[0].x_next);
    }
    lhs.add(last.x_next);
    for s in steps {
        rhs.add(s.b / trace.scale);
    }
    Ok((lhs.value() - rhs.value()).abs())
}

/// Relative tolerance reference `1 + Σ|b_j|` for [`telescoping_check`].
pub fn telescoping_scale(trace: &Trace) -> f64 {
    1.0 + trace.steps.iter().map(|s| (s.b / trace.scale).abs()).sum::<f64>()
}

/// Smallest smoothing factor for which the smoothed floor is guaranteed.
pub fn min_smoothing(rho: f64, clipped: bool) -> f64 {
    if clipped {
        rho
    } else {
        1.0 - (1.0 - rho) / 2.0
    }
}

fn constant_rho(trace: &Trace) -> Result<f64> {
    let rho = trace.steps.first().map(|s| s.rho).unwrap_or(0.0);
    if trace.steps.iter().any(|s| s.rho != rho) {
        return Err(Error::Precondition(
            "smoothed payoff floor needs a constant discount".into(),
        ));
    }
    Ok(rho)
}

/// Worst margin of `Σ_j η^{t−j}·g_j·b_j − (Φ_{t+1} − Z'/(1−ρ))` over
/// prefixes, for a constant-discount trace.
///
/// `η` must be at least `1 − (1−ρ)/2` for the plain update and at least `ρ`
/// for the clipped one. Returns 0 for an empty trace.
pub fn smoothed_gain_floor(trace: &Trace, params: &ConfidenceParams, eta: f64, clipped: bool) -> Result<f64> {
    finite("eta", eta)?;
    if trace.is_empty() {
        return Ok(0.0);
    }
    let rho = constant_rho(trace)?;
    let floor = min_smoothing(rho, clipped);
    if !(eta >= floor && eta <= 1.0) {
        return Err(invalid(
            "eta",
            format!("smoothing factor {eta} outside the safe range [{floor}, 1]"),
        ));
    }
    Ok(smoothed_margin(trace, params, eta, rho))
}

fn smoothed_margin(trace: &Trace, params: &ConfidenceParams, eta: f64, rho: f64) -> f64 {
    let allowance = params.loss_allowance() / (1.0 - rho);
    let mut smoothed = 0.0;
    let mut worst = f64::INFINITY;
    for s in &trace.steps {
        smoothed = eta * smoothed + s.gain / trace.scale;
        worst = worst.min(smoothed - (s.phi - allowance));
    }
    worst
}

/// Worst margin over prefixes of the gain floor
/// `gain_T ≥ Σ_{t≤T} ρ̄·x_t·g(x_t)·(1 − h(x_t)) + Φ(x_{T+1}) − Z'·T`,
/// with `x_t` the deviation each bet used.
pub fn potential_gain_floor(trace: &Trace, params: &ConfidenceParams) -> f64 {
    let rho_bar = params.rho_bar();
    let zp = params.loss_allowance();
    let mut gain = KahanSum::new();
    let mut banked = KahanSum::new();
    let mut worst = f64::INFINITY;
    for (i, s) in trace.steps.iter().enumerate() {
        gain.add(s.gain / trace.scale);
        banked.add(rho_bar * s.x * params.g(s.x) * (1.0 - params.h(s.x)));
        let rhs = banked.value() + s.phi - zp * (i + 1) as f64;
        worst = worst.min(gain.value() - rhs);
    }
    if trace.is_empty() {
        0.0
    } else {
        worst
    }
}

/// Worst margin over prefixes of the smoothed-deviation floor
/// `gain_T ≥ Σ_{t<T} (|x̃_t| − θ)⁺ + (|x̃_T| − θ)⁺/ρ̄ − e·Z·T/√n`,
/// where `x̃_t = ρ̄·x_t` and `θ = 2·sqrt(ln(1/Z)/n)`.
pub fn smoothed_deviation_floor(trace: &Trace, params: &ConfidenceParams) -> f64 {
    let rho_bar = params.rho_bar();
    let n = params.n();
    let theta = 2.0 * (params.log_inv_z() / n).sqrt();
    let per_step = (1.0 - params.log_inv_z()).exp() / n.sqrt();
    let mut gain = KahanSum::new();
    let mut past = KahanSum::new();
    let mut worst = f64::INFINITY;
    for (i, s) in trace.steps.iter().enumerate() {
        gain.add(s.gain / trace.scale);
        let excess = (rho_bar * s.x_next.abs() - theta).max(0.0);
        let rhs = past.value() + excess / rho_bar - per_step * (i + 1) as f64;
        worst = worst.min(gain.value() - rhs);
        past.add(excess);
    }
    if trace.is_empty() {
        0.0
    } else {
        worst
    }
}

/// Regret floor for tuned parameters: the gain must be at least
/// `|Σb| − 4εT − e^{1−ε²T}·√T`.
pub fn tuned_gain_floor(sum_b: f64, horizon: f64, epsilon: f64) -> f64 {
    sum_b.abs() - 4.0 * epsilon * horizon - tuned_loss_bound(horizon, epsilon)
}

/// Loss bound for tuned parameters, `e^{1−ε²T}·√T`.
pub fn tuned_loss_bound(horizon: f64, epsilon: f64) -> f64 {
    (1.0 - epsilon * epsilon * horizon).exp() * horizon.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::{derive_params, Variant};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_pm(seed: u64, len: usize) -> Vec<f64> {
        let mut r = rng::stream(seed, 0);
        (0..len).map(|_| r.random_range(-1.0..=1.0)).collect()
    }

    #[test]
    fn step_examples() {
        let p = derive_params(100.0, 0.1).unwrap();
        let mut s = PredictorState::new(p, Schedule::Constant { rho: 0.9 }).unwrap();
        let r = s.step(1.0).unwrap();
        assert_eq!(r.confidence, p.g(0.0));
        assert_eq!(s.deviation(), 1.0);

        let mut s = PredictorState::new(p, Schedule::Constant { rho: 0.9 }).unwrap();
        s.x = p.u() + 3.0;
        let r = s.step(1.0).unwrap();
        assert_eq!(r.confidence, 1.0);
        assert_eq!(r.gain, 1.0);
    }

    #[test]
    fn rejects_out_of_range_payoffs() {
        let p = derive_params(100.0, 0.1).unwrap();
        let mut s = PredictorState::new(p, Schedule::constant(&p)).unwrap();
        let e = s.step(1.5).unwrap_err();
        assert!(matches!(e, Error::OutOfRange { bound, .. } if bound == 1.0));
        assert!(matches!(s.step(f64::NAN), Err(Error::NonFinite { .. })));
        assert_eq!(s.t(), 0);
    }

    #[test]
    fn clipped_examples() {
        let p = derive_params(100.0, 0.1).unwrap();
        let rho = p.rho();
        let start = p.u() + 1.0;
        let mut s = PredictorState::new(p, Schedule::clipped(&p)).unwrap();
        s.x = start;
        let r = s.step_clipped(1.0).unwrap();
        assert_eq!(r.x_next, rho * start);
        assert_eq!(r.gain, 1.0);
        assert!(r.banked);

        s.x = start;
        let r = s.step_clipped(-1.0).unwrap();
        assert_eq!(r.x_next, rho * start - 1.0);
        assert!(!r.banked);

        let mut a = PredictorState::new(p, Schedule::clipped(&p)).unwrap();
        let mut b = PredictorState::new(p, Schedule::constant(&p)).unwrap();
        assert_eq!(a.step_clipped(1.0).unwrap(), b.step(1.0).unwrap());
    }

    #[test]
    fn rho_pnorm_examples() {
        assert_eq!(rho_pnorm(0.0, 1.0, 100.0).unwrap(), 1.0);
        assert_eq!(rho_pnorm(1.0, 1.0, 100.0).unwrap(), 0.99);
        assert_eq!(rho_pnorm(0.5, 2.0, 100.0).unwrap(), 0.9975);
        assert!(rho_pnorm(0.5, 2.5, 100.0).is_err());
        assert!(rho_pnorm(0.5, 0.0, 100.0).is_err());
    }

    #[test]
    fn all_ones_matches_geometric_closed_form() {
        let p = derive_params(200.0, 0.1).unwrap();
        let trace = run(&[1.0; 200], &RunConfig::plain(p)).unwrap();
        let rho = p.rho();
        let closed = (1.0 - rho.powi(200)) / (1.0 - rho);
        assert!((trace.steps[199].x_next - closed).abs() < 1e-10);
    }

    #[test]
    fn summary_fast_path_matches_trace() {
        let p = derive_params(2000.0, 0.1).unwrap();
        let seq = random_pm(9, 2000);
        let a = run(&seq, &RunConfig::plain(p)).unwrap().summary;
        let b = run_summary(&seq, &RunConfig::plain(p)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_zeros_is_inert() {
        let p = derive_params(1000.0, 0.1).unwrap();
        let trace = run(&[0.0; 1000], &RunConfig::plain(p)).unwrap();
        assert_eq!(trace.summary.final_gain, 0.0);
        assert!(trace.steps.iter().all(|s| s.x_next == 0.0));
    }

    #[test]
    fn empty_run() {
        let p = derive_params(1000.0, 0.1).unwrap();
        let trace = run(&[], &RunConfig::plain(p)).unwrap();
        assert!(trace.is_empty());
        assert_eq!(trace.summary.final_gain, 0.0);
        assert!(telescoping_check(&trace).is_err());
    }

    #[test]
    fn alternating_loss_is_tiny() {
        let p = derive_params(1000.0, 0.1).unwrap();
        let seq: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let trace = run(&seq, &RunConfig::plain(p)).unwrap();
        assert!(trace.summary.max_prefix_loss <= std::f64::consts::E * p.z() * 1000f64.sqrt());
    }

    #[test]
    fn all_ones_meets_tuned_floor() {
        let p = derive_params(10_000.0, 0.05).unwrap();
        let trace = run(&[1.0; 10_000], &RunConfig::plain(p)).unwrap();
        assert!(trace.summary.final_gain >= tuned_gain_floor(10_000.0, 10_000.0, 0.05));
        assert!(trace.summary.final_gain >= 7999.0);
    }

    #[test]
    fn telescoping_base_case() {
        let p = derive_params(100.0, 0.1).unwrap();
        let trace = run(&[0.37], &RunConfig::plain(p)).unwrap();
        assert_eq!(telescoping_check(&trace).unwrap(), 0.0);
    }

    #[test]
    fn telescoping_constant_and_pnorm() {
        let p = derive_params(1000.0, 0.1).unwrap();
        for seed in 0..5 {
            let seq = random_pm(seed, 1000);
            for sched in [
                Schedule::constant(&p),
                Schedule::PNorm { p: 1.0, n: 1000.0 },
                Schedule::PNorm { p: 2.0, n: 1000.0 },
            ] {
                let cfg = RunConfig {
                    params: p,
                    schedule: sched,
                    scale: 1.0,
                };
                let trace = run(&seq, &cfg).unwrap();
                let res = telescoping_check(&trace).unwrap();
                assert!(res <= 1e-9 * telescoping_scale(&trace), "{sched:?}: {res}");
            }
        }
    }

    /// `x_t = Σ_{j≤t} b_j·Π_{i=j+1}^{t} ρ_i`, evaluated directly.
    fn product_expansion(bs: &[f64], rhos: &[f64], t: usize) -> f64 {
        (0..=t).map(|j| bs[j] * rhos[j + 1..=t].iter().product::<f64>()).sum()
    }

    #[test]
    fn pnorm_deviation_matches_product_expansion() {
        let p = derive_params(1000.0, 0.1).unwrap();
        let seq = random_pm(11, 300);
        let cfg = RunConfig {
            params: p,
            schedule: Schedule::PNorm { p: 1.5, n: 50.0 },
            scale: 1.0,
        };
        let trace = run(&seq, &cfg).unwrap();
        let rhos: Vec<f64> = trace.steps.iter().map(|s| s.rho).collect();
        for t in [0, 1, 17, 150, 299] {
            let oracle = product_expansion(&seq, &rhos, t);
            assert!((trace.steps[t].x_next - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn scale_is_applied_and_unapplied() {
        let p = derive_params(1000.0, 0.1).unwrap();
        let seq = random_pm(3, 500);
        let scaled: Vec<f64> = seq.iter().map(|b| 4.0 * b).collect();
        let a = run(&seq, &RunConfig::plain(p)).unwrap();
        let b = run(
            &scaled,
            &RunConfig {
                scale: 4.0,
                ..RunConfig::plain(p)
            },
        )
        .unwrap();
        assert!((4.0 * a.summary.final_gain - b.summary.final_gain).abs() < 1e-9);
        assert!(run(
            &[4.5],
            &RunConfig {
                scale: 4.0,
                ..RunConfig::plain(p)
            }
        )
        .is_err());
    }

    #[test]
    fn smoothed_floor_examples() {
        let p = derive_params(1000.0, 0.1).unwrap();
        let zeros = run(&[0.0; 100], &RunConfig::plain(p)).unwrap();
        let m = smoothed_gain_floor(&zeros, &p, 1.0, false).unwrap();
        assert!((m - p.loss_allowance() * p.n()).abs() < 1e-12);

        let ones = run(&[1.0; 1000], &RunConfig::clipped(p)).unwrap();
        assert!(smoothed_gain_floor(&ones, &p, p.rho(), true).unwrap() >= 0.0);

        let plain = run(&[1.0; 10], &RunConfig::plain(p)).unwrap();
        let e = smoothed_gain_floor(&plain, &p, p.rho(), false).unwrap_err();
        assert!(e.to_string().contains("safe range"), "{e}");
    }

    #[test]
    fn clipped_and_plain_agree_below_saturation() {
        let p = derive_params(1000.0, 0.1).unwrap();
        let seq = random_pm(5, 1000);
        let a = run(&seq, &RunConfig::plain(p)).unwrap();
        let b = run(&seq, &RunConfig::clipped(p)).unwrap();
        assert!(a.summary.max_abs_x < p.u());
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn potential_floor_on_all_ones() {
        let p = ConfidenceParams::from_log_inv_z(4.0, 20.0, 400.0, Variant::RampExp).unwrap();
        let trace = run(&[1.0; 3000], &RunConfig::plain(p)).unwrap();
        let a = potential_gain_floor(&trace, &p);
        let b = smoothed_deviation_floor(&trace, &p);
        assert!(a >= -1e-9 && b >= -1e-9, "{a} {b}");
    }

    #[test]
    fn step_shape_pays_for_its_jump_at_zero() {
        // g jumps from −Z to Z at 0 while g(0) = 0, so the first step from
        // x = 0 costs ∫₀¹ g slightly above Z.
        let p = ConfidenceParams::from_log_inv_z(4.0, 20.0, 400.0, Variant::StepExp).unwrap();
        let trace = run(&[1.0; 10], &RunConfig::plain(p)).unwrap();
        let m = potential_gain_floor(&trace, &p);
        assert!(m < 0.0 && m > -p.z() * 1e-3, "{m}");
    }

    proptest! {
        #[test]
        fn online_contract(prefix in proptest::collection::vec(-1.0f64..=1.0, 1..200),
                           a in proptest::collection::vec(-1.0f64..=1.0, 1..50),
                           b in proptest::collection::vec(-1.0f64..=1.0, 1..50)) {
            let p = derive_params(400.0, 0.1).unwrap();
            let mut sa = prefix.clone(); sa.extend(&a);
            let mut sb = prefix.clone(); sb.extend(&b);
            let ta = run(&sa, &RunConfig::plain(p)).unwrap();
            let tb = run(&sb, &RunConfig::plain(p)).unwrap();
            for i in 0..=prefix.len() {
                prop_assert_eq!(ta.steps[i].confidence, tb.steps[i].confidence);
            }
        }

        #[test]
        fn deviation_bounded_by_window(seq in proptest::collection::vec(-1.0f64..=1.0, 0..500)) {
            let p = ConfidenceParams::from_log_inv_z(1.0, 7.0, 40.0, Variant::RampExp).unwrap();
            let trace = run(&seq, &RunConfig::plain(p)).unwrap();
            prop_assert!(trace.summary.max_abs_x <= p.n() + 1.0);
        }

        #[test]
        fn gain_reproducible_from_steps(seq in proptest::collection::vec(-1.0f64..=1.0, 1..500)) {
            let p = derive_params(400.0, 0.1).unwrap();
            let mut st = PredictorState::new(p, Schedule::constant(&p)).unwrap();
            let mut steps = Vec::new();
            for &b in &seq { steps.push(st.step(b).unwrap()); }
            let trace = Trace::from_steps(1.0, steps);
            prop_assert!((trace.summary.final_gain - st.cum_gain()).abs() <= 1e-9);
            for s in &trace.steps { prop_assert_eq!(s.gain, s.confidence * s.b); }
        }

        #[test]
        fn loss_and_regret_bounds(seq in proptest::collection::vec(prop_oneof![Just(1.0f64), Just(-1.0f64), -1.0f64..=1.0], 1..1500)) {
            let t = 1500.0;
            let eps = 0.1;
            let p = derive_params(t, eps).unwrap();
            let trace = run(&seq, &RunConfig::plain(p)).unwrap();
            prop_assert!(trace.summary.max_prefix_loss <= tuned_loss_bound(t, eps) + 1e-6);
            let horizon = seq.len() as f64;
            prop_assert!(trace.summary.final_gain >= trace.summary.sum_b.abs() - 4.0 * eps * t.max(horizon) - tuned_loss_bound(t, eps));
        }

        #[test]
        fn potential_floor_holds(seq in proptest::collection::vec(-1.0f64..=1.0, 1..800)) {
            let p = ConfidenceParams::from_log_inv_z(2.0, 15.0, 200.0, Variant::RampExp).unwrap();
            let trace = run(&seq, &RunConfig::plain(p)).unwrap();
            prop_assert!(potential_gain_floor(&trace, &p) >= -1e-9);
            let m = smoothed_deviation_floor(&trace, &p);
            prop_assert!(m >= -1e-9, "{}", m);
        }
    }
}
