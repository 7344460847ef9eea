//! Acceptance criteria A1–A11. Every criterion returns one
//! [`CriterionResult`] whose checks carry the measured value and the frozen
//! threshold.

use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibration::{self, Calibration, A5_C, A6_C};
use super::experiment::{strategy_rows, BoundCheck};
use super::generate::Generator;
use super::probe::lower_bound_probe;
use crate::bandit::{bandit_regret_report, expected_estimate, BanditOptions, BanditState, RegretStudy};
use crate::combiner::{build_multiscale_tree, windowed_regret_audit, Interval};
use crate::confidence::{derive_params, ConfidenceParams, Variant};
use crate::error::{Error, Result};
use crate::numeric::mean_sd;
use crate::oco::{
    greedy_projection, static_regret_bound, EtaSchedule, FeasibleSet, LossFamily, Scenario, ShiftConstants,
};
use crate::predictor::{run, run_summary, telescoping_check, telescoping_scale, RunConfig, Schedule, Trace};
use crate::randomized::{
    cost_params, loss_tail_probe, run_with_costs, NeverBet, RandomizedBetState, StopRule, STOP_MULTIPLIER,
};
use crate::rng;
use crate::uniformity::{audit, cross_scale_check, AuditConfig};

pub const ALL: [&str; 11] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11"];
pub const CORE: [&str; 5] = ["A1", "A2", "A3", "A4", "A5"];

/// Deliberate defects for checking that the suite catches them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    #[default]
    None,
    /// Deviation update `x ← ρx − b` instead of `ρx + b`.
    FlipUpdateSign,
}

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub title: String,
    pub checks: Vec<BoundCheck>,
    pub seeds: String,
    pub elapsed_s: f64,
    pub limit_s: f64,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl CriterionResult {
    fn finish(
        id: &str,
        title: &str,
        seeds: String,
        limit_s: f64,
        started: Instant,
        mut checks: Vec<BoundCheck>,
        notes: Vec<String>,
    ) -> Self {
        let elapsed_s = started.elapsed().as_secs_f64();
        checks.push(BoundCheck::at_most("runtime_s", elapsed_s, limit_s));
        let pass = checks.iter().all(|c| c.pass);
        Self {
            id: id.into(),
            title: title.into(),
            checks,
            seeds,
            elapsed_s,
            limit_s,
            notes,
            pass,
        }
    }

    /// `PASS A1 ...` line followed by one indented line per check.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{} {} {} ({:.2} s, seeds {})\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed_s,
            self.seeds
        );
        for c in &self.checks {
            s.push_str(&format!(
                "    {} {}: {:.6e} {} {:.6e}\n",
                if c.pass { "ok  " } else { "FAIL" },
                c.name,
                c.value,
                c.relation,
                c.threshold
            ));
        }
        for n in &self.notes {
            s.push_str(&format!("    note: {n}\n"));
        }
        s
    }
}

/// Expands `core`, `all` or a comma-separated list such as `A1,A7`.
pub fn select(selector: &str) -> Result<Vec<&'static str>> {
    match selector.trim().to_ascii_lowercase().as_str() {
        "core" => Ok(CORE.to_vec()),
        "all" => Ok(ALL.to_vec()),
        list => list
            .split(',')
            .map(|s| {
                let s = s.trim().to_ascii_uppercase();
                ALL.iter()
                    .copied()
                    .find(|id| *id == s)
                    .ok_or_else(|| Error::Parse(format!("unknown criterion {s:?}; expected core, all or A1..A11")))
            })
            .collect(),
    }
}

pub fn run_criterion(id: &str, cal: &Calibration, mutation: Mutation) -> Result<CriterionResult> {
    match id {
        "A1" => a1(),
        "A2" => a2(),
        "A3" => a3(mutation),
        "A4" => a4(cal),
        "A5" => a5(),
        "A6" => a6(),
        "A7" => a7(cal),
        "A8" => a8(),
        "A9" => a9(),
        "A10" => a10(cal),
        "A11" => a11(),
        other => Err(Error::Parse(format!("unknown criterion {other:?}"))),
    }
}

/// Runs the selected criteria in order with the frozen constants.
pub fn accept(selector: &str, mutation: Mutation) -> Result<Vec<CriterionResult>> {
    let cal = calibration::frozen();
    select(selector)?
        .into_iter()
        .map(|id| run_criterion(id, &cal, mutation))
        .collect()
}

fn fair_coins(seed: u64, horizon: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, 0);
    (0..horizon)
        .map(|_| if r.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

pub fn a1() -> Result<CriterionResult> {
    let started = Instant::now();
    let (t, eps) = (10_000usize, 0.05);
    let params = derive_params(t as f64, eps)?;
    let cfg = RunConfig::plain(params);
    let floor = 7999.0;
    let plus = run_summary(&vec![1.0; t], &cfg)?;
    let minus = run_summary(&vec![-1.0; t], &cfg)?;
    let losses = (0..1000u64)
        .into_par_iter()
        .map(|s| run_summary(&fair_coins(s, t), &cfg).map(|r| r.max_prefix_loss))
        .collect::<Result<Vec<_>>>()?;
    let worst = losses.iter().copied().fold(0.0, f64::max);
    let checks = vec![
        BoundCheck::at_least("all_ones_gain", plus.final_gain, floor),
        BoundCheck::at_least("all_minus_ones_gain", minus.final_gain, floor),
        BoundCheck::at_most("fair_coin_max_prefix_loss", worst, 0.01),
    ];
    Ok(CriterionResult::finish(
        "A1",
        "regret/loss tradeoff",
        "0..1000".into(),
        5.0,
        started,
        checks,
        vec![],
    ))
}

/// `(ln(1/Z), n)` pairs for the drift scan, spanning `Z ∈ [1e−12, e^{−1}]`
/// and `n ∈ [40·ln(1/Z), 10^6]`.
pub const A2_SETTINGS: [(f64, f64); 10] = [
    (1.0, 40.0),
    (1.0, 1e6),
    (27.631_021_115_928_547, 1106.0),
    (27.631_021_115_928_547, 2000.0),
    (9.210_340_371_976_184, 369.0),
    (9.210_340_371_976_184, 3000.0),
    (4.605_170_185_988_091, 185.0),
    (4.605_170_185_988_091, 10_000.0),
    (18.420_680_743_952_367, 737.0),
    (2.0, 2000.0),
];

pub fn a2() -> Result<CriterionResult> {
    let started = Instant::now();
    let mut cases = Vec::new();
    for &(lz, n) in &A2_SETTINGS {
        for v in [Variant::StepExp, Variant::RampExp] {
            cases.push((lz, n, v));
        }
    }
    let reports = cases
        .par_iter()
        .map(|&(lz, n, v)| {
            let p = ConfidenceParams::from_log_inv_z(lz, n.sqrt(), n, v)?;
            let zp = match v {
                Variant::StepExp => p.z(),
                _ => p.loss_allowance(),
            };
            p.check_drift_condition(zp, 1.0, 1e-3)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for ((lz, n, v), r) in cases.iter().zip(&reports) {
        let tag = format!("{v:?}_lz{lz:.3}_n{n}");
        checks.push(BoundCheck::at_most(
            &format!("max_violation_{tag}"),
            r.max_violation,
            0.0,
        ));
        if r.max_violation > 0.0 {
            notes.push(format!(
                "{tag}: worst x = {:.3}; off the saturation edge the max slack is {:.3e}",
                r.worst_x, r.max_violation_off_edge
            ));
        }
    }
    Ok(CriterionResult::finish(
        "A2",
        "drift condition",
        "deterministic".into(),
        60.0,
        started,
        checks,
        notes,
    ))
}

/// Runs the predictor with the deviation update's sign flipped: the
/// recorded bets follow `x ← ρx − b`.
fn run_mutated(seq: &[f64], cfg: &RunConfig) -> Result<Trace> {
    let neg: Vec<f64> = seq.iter().map(|b| -b).collect();
    let mut steps = run(&neg, cfg)?.steps;
    for (s, &b) in steps.iter_mut().zip(seq) {
        s.b = b;
        s.gain = b * s.confidence;
    }
    Ok(Trace::from_steps(cfg.scale, steps))
}

pub fn a3(mutation: Mutation) -> Result<CriterionResult> {
    let started = Instant::now();
    let t = 1000usize;
    let n = 100.0f64;
    let params = ConfidenceParams::from_log_inv_z(2.0, n.sqrt(), n, Variant::RampExp)?;
    let schedules = [
        ("constant", Schedule::constant(&params)),
        ("pnorm_p1", Schedule::PNorm { p: 1.0, n }),
        ("pnorm_p2", Schedule::PNorm { p: 2.0, n }),
    ];
    let mut checks = Vec::new();
    for (name, schedule) in schedules {
        let cfg = RunConfig {
            params,
            schedule,
            scale: 1.0,
        };
        let worst = (0..100u64)
            .into_par_iter()
            .map(|s| {
                let mut r = rng::stream(s, 0);
                let seq: Vec<f64> = (0..t).map(|_| r.random_range(-1.0..=1.0)).collect();
                let trace = match mutation {
                    Mutation::None => run(&seq, &cfg)?,
                    Mutation::FlipUpdateSign => run_mutated(&seq, &cfg)?,
                };
                Ok(telescoping_check(&trace)? / telescoping_scale(&trace))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        checks.push(BoundCheck::at_most(&format!("relative_residual_{name}"), worst, 1e-9));
    }
    Ok(CriterionResult::finish(
        "A3",
        "telescoping identities",
        "0..100".into(),
        5.0,
        started,
        checks,
        vec![],
    ))
}

pub fn a4(cal: &Calibration) -> Result<CriterionResult> {
    let started = Instant::now();
    let t = calibration::A4_T as f64;
    let z = calibration::A4_Z;
    let c = cal.a4_c.value;
    let cp = cal.a4_c_prime;
    let (gain, min_prefix) = calibration::a4_run(0.0, 1.0)?;
    let (swapped, swapped_min) = calibration::a4_run(0.0, -1.0)?;
    let floor = -cp * z * t.sqrt();
    let checks = vec![
        BoundCheck::at_least("improver_gain", gain, t - c * (t * -z.ln()).sqrt()),
        BoundCheck::at_least("improver_min_prefix_gain", min_prefix, floor),
        BoundCheck::at_least("swapped_gain", swapped, floor),
        BoundCheck::at_least("swapped_min_prefix_gain", swapped_min, floor),
    ];
    Ok(CriterionResult::finish(
        "A4",
        "pairwise combiner",
        "deterministic".into(),
        5.0,
        started,
        checks,
        vec![],
    ))
}

/// Five ±1 strategies; on interval `j` strategy `j` has mean 0.5 and the
/// others mean 0.
pub fn a5_rows(seed: u64, horizon: usize, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<Interval>) {
    let mut r = rng::stream(seed, 0);
    let bounds = Generator::intervals(k, horizon);
    let mut rows = Vec::with_capacity(horizon);
    for (j, &(a, b)) in bounds.iter().enumerate() {
        for _ in a..b {
            rows.push(
                (0..n)
                    .map(|i| {
                        let p = if i == j % n { 0.75 } else { 0.5 };
                        if r.random::<f64>() < p {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect(),
            );
        }
    }
    let partition = bounds
        .into_iter()
        .enumerate()
        .map(|(j, (start, end))| Interval {
            start,
            end,
            strategy: j % n,
        })
        .collect();
    (rows, partition)
}

pub fn a5() -> Result<CriterionResult> {
    let started = Instant::now();
    let (n, t, k) = (5usize, 10_000usize, 4usize);
    let z = ((n * t) as f64).powi(-2);
    let reports = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let (rows, partition) = a5_rows(s, t, n, k);
            let root = build_multiscale_tree(n, t, z)?.run(&rows)?;
            windowed_regret_audit(&root, &rows, &partition, A5_C)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = reports
        .iter()
        .map(|r| r.total_regret / r.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let failing = reports.iter().filter(|r| !r.pass).count();
    let checks = vec![
        BoundCheck::at_most("worst_regret_over_bound", worst, 1.0),
        BoundCheck::at_most("failing_seeds", failing as f64, 0.0),
    ];
    Ok(CriterionResult::finish(
        "A5",
        "windowed regret",
        "0..50".into(),
        120.0,
        started,
        checks,
        vec![],
    ))
}

pub fn a6() -> Result<CriterionResult> {
    let started = Instant::now();
    let (n, t) = (3usize, 1usize << 14);
    let lz = 2.0 * ((n * t) as f64).ln();
    let generator = Generator::Shifting {
        k: 4,
        levels: vec![0.4, 0.0, -0.4],
    };
    let per_seed = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let rows = strategy_rows(&generator, n, t, s)?;
            let root = build_multiscale_tree(n, t, (-lz).exp())?.run(&rows)?;
            let mut cfg = AuditConfig::new(lz, n, t, A6_C);
            cfg.seed = s;
            let mut worst = f64::NEG_INFINITY;
            for i in 0..n {
                let residual: Vec<f64> = rows.iter().zip(&root).map(|(r, p)| r[i] - p).collect();
                worst = worst.max(audit(&residual, &cfg)?.worst_ratio);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = per_seed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cross = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(s, 1);
            let series: Vec<f64> = (0..500).map(|_| r.random_range(-1.0..=1.0)).collect();
            let rho1 = r.random_range(0.5..0.999);
            let rho2 = r.random_range(0.0..rho1);
            cross_scale_check(&series, rho1, rho2).map(|c| c.max_residual)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let checks = vec![
        BoundCheck::at_most("worst_uniformity_ratio", worst, A6_C),
        BoundCheck::at_most("cross_scale_residual", cross, 1e-9),
    ];
    Ok(CriterionResult::finish(
        "A6",
        "Z-uniformity",
        "0..20; triples 0..100".into(),
        120.0,
        started,
        checks,
        vec![],
    ))
}

pub fn a7(cal: &Calibration) -> Result<CriterionResult> {
    let started = Instant::now();
    let worst = (0..20u64)
        .into_par_iter()
        .map(calibration::a7_ratio)
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![BoundCheck::at_most("worst_excess_ratio", worst, cal.a7_c.value)];
    Ok(CriterionResult::finish(
        "A7",
        "noise-like prediction",
        "0..20".into(),
        60.0,
        started,
        checks,
        vec![],
    ))
}

pub fn a8() -> Result<CriterionResult> {
    let started = Instant::now();
    let (c, t, seeds) = (0.05, 10_000usize, 200u64);
    let tf = t as f64;
    let lz_fair = 1e4f64.ln();
    let fair_params = cost_params(c, tf, lz_fair)?;
    let ones_params = cost_params(c, tf, 1.0)?;
    let stop = StopRule::tuned(2.0 * c)?;
    let ones = vec![1.0; t];
    let runs = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let seq = fair_coins(s, t);
            let fair = run_with_costs(&seq, fair_params, c, None, s, false)?.summary.net_gain;
            let one = run_with_costs(&ones, ones_params, c, None, s, false)?.summary.net_gain;
            let stopped = run_with_costs(&seq, fair_params, c, Some(stop), s, false)?
                .summary
                .max_loss;
            Ok((fair, one, stopped))
        })
        .collect::<Result<Vec<_>>>()?;
    let se = |v: &[f64]| mean_sd(v).1 / (v.len() as f64).sqrt();
    let fair: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let one: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let worst_loss = runs.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![
        BoundCheck::at_least(
            "fair_coin_mean_net_gain",
            mean_sd(&fair).0,
            -3.0 * c * (-lz_fair).exp() * tf - 3.0 * se(&fair),
        ),
        BoundCheck::at_least(
            "all_ones_mean_net_gain",
            mean_sd(&one).0,
            tf - 4.0 * c * tf - 3.0 * se(&one),
        ),
        BoundCheck::at_most("stop_rule_worst_loss", worst_loss, stop.threshold + 1.0),
    ];
    Ok(CriterionResult::finish(
        "A8",
        "transaction costs",
        "0..200".into(),
        60.0,
        started,
        checks,
        vec![],
    ))
}

pub fn a9() -> Result<CriterionResult> {
    let started = Instant::now();
    let mut means = vec![0.5; 10];
    means[0] = 0.7;
    let study = RegretStudy {
        means,
        horizons: vec![10_000, 40_000, 160_000],
        seeds: 100,
        seed: 0,
        log_inv_z_margin: 1.0,
        k: 10.0,
        options: BanditOptions {
            waive_window_floor: true,
        },
    };
    let report = bandit_regret_report(&study)?;
    // Unbiasedness at the probabilities a live run reaches.
    let mut st = BanditState::with_options(10, 10_000, 2.0 * 1e5f64.ln() + 1.0, study.options, rng::stream(0, 7))?;
    let mut r = rng::stream(0, 8);
    let mut worst_ulps = 0.0f64;
    for _ in 0..200 {
        let rewards: Vec<f64> = (0..10).map(|_| r.random::<f64>()).collect();
        let e = expected_estimate(&rewards, st.probabilities());
        for (a, b) in e.iter().zip(&rewards) {
            if *b != 0.0 {
                worst_ulps = worst_ulps.max((a - b).abs() / (b.abs() * f64::EPSILON));
            }
        }
        st.step_row(&rewards)?;
    }
    let worst_loss = report
        .rows
        .iter()
        .map(|h| h.mean_vs_average - h.loss_floor)
        .fold(f64::INFINITY, f64::min);
    let checks = vec![
        BoundCheck::at_most("loglog_regret_slope", report.slope.unwrap_or(f64::INFINITY), 0.75),
        BoundCheck::at_least("min_vs_average_minus_floor", worst_loss, 0.0),
        BoundCheck::at_most("estimator_bias_ulps", worst_ulps, 4.0),
    ];
    let notes = report
        .rows
        .iter()
        .map(|h| {
            format!(
                "T = {}: mean regret {:.1} ± {:.1}, gamma {:.4}",
                h.horizon, h.mean_regret, h.regret_se, h.gamma
            )
        })
        .collect();
    Ok(CriterionResult::finish(
        "A9",
        "bandit scaling",
        "0..100 per horizon".into(),
        600.0,
        started,
        checks,
        notes,
    ))
}

pub fn a10(cal: &Calibration) -> Result<CriterionResult> {
    let started = Instant::now();
    let t = 10_000usize;
    let stat = Scenario::shifting(FeasibleSet::cube(2, 1.0), LossFamily::Quadratic, t, 1, 0.0, 0)?;
    let z = stat.targets();
    let gp = greedy_projection(&stat, &z, EtaSchedule::InvSqrt)?;
    let bound = static_regret_bound(stat.set.diameter(), stat.gradient_bound(&z), t);
    let k = ShiftConstants {
        k1: cal.a10_k1.value,
        k2: 1.0,
        k3: 1.0,
    };
    let ratios = (0..50u64)
        .into_par_iter()
        .map(|s| calibration::a10_measure(s).map(|(r, b)| r / b.total(&k)))
        .collect::<Result<Vec<f64>>>()?;
    let worst = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![
        BoundCheck::at_most("static_gp_regret", gp.static_regret(&stat, &z), bound),
        BoundCheck::at_most("shifting_regret_over_bound", worst, 1.0),
    ];
    Ok(CriterionResult::finish(
        "A10",
        "online convex optimization",
        "static 0; shifting 0..50".into(),
        120.0,
        started,
        checks,
        vec![],
    ))
}

pub fn a11() -> Result<CriterionResult> {
    let started = Instant::now();
    let t = 10_000usize;
    let lb = lower_bound_probe(t, 1e-2, 10_000, 0)?;
    let (eps, delta) = (0.1, 0.01);
    let stop = StopRule::new(eps, delta, STOP_MULTIPLIER)?;
    let params = cost_params(0.0, t as f64, eps * eps * t as f64)?;
    let ours = loss_tail_probe(
        |i| Ok(RandomizedBetState::new(params, 0.0, rng::stream(1, i))?.with_stop_rule(stop)),
        eps,
        delta,
        t,
        10_000,
        2,
    )?;
    let never = loss_tail_probe(|_| Ok(NeverBet), eps, delta, t, 10_000, 3)?;
    let checks = vec![
        BoundCheck::at_most(
            "tail_quantile_vs_stop_threshold",
            ours.loss_quantile,
            stop.threshold + 1.0,
        ),
        BoundCheck::at_least(
            "splus_binomial_quantiles_within_4sigma",
            lb.splus_quantiles.iter().filter(|c| c.pass).count() as f64,
            lb.splus_quantiles.len() as f64,
        ),
        BoundCheck::at_most("never_bet_tail_quantile", never.loss_quantile, 0.0),
    ];
    let notes = vec![
        format!(
            "P(S+ > {:.1}) = {:.4} (95% CI {:.4}..{:.4}); mean regret there {:?}",
            lb.threshold, lb.exceed_prob, lb.exceed_ci.0, lb.exceed_ci.1, lb.mean_regret_when_exceeded
        ),
        format!(
            "loss q{:.2} = {:.3} (CI {:.3}..{:.3}), scaled by ε/ln(1/δ): {:.3}",
            1.0 - delta,
            ours.loss_quantile,
            ours.quantile_ci.0,
            ours.quantile_ci.1,
            ours.scaled_quantile
        ),
    ];
    Ok(CriterionResult::finish(
        "A11",
        "lower-bound probes",
        "probe 0; tails 1..3".into(),
        120.0,
        started,
        checks,
        notes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_expands() {
        assert_eq!(select("core").unwrap(), CORE.to_vec());
        assert_eq!(select("all").unwrap().len(), 11);
        assert_eq!(select("a1, A10").unwrap(), vec!["A1", "A10"]);
        assert!(select("A12").unwrap_err().to_string().contains("A12"));
    }

    #[test]
    fn sign_bug_breaks_telescoping() {
        let r = a3(Mutation::FlipUpdateSign).unwrap();
        assert!(!r.pass);
        assert!(r.render().starts_with("FAIL A3"));
    }

    #[test]
    fn a5_rows_match_partition() {
        let (rows, part) = a5_rows(0, 400, 5, 4);
        assert_eq!(rows.len(), 400);
        assert_eq!(part.iter().map(|i| i.strategy).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(part.last().unwrap().end, 400);
    }
}
