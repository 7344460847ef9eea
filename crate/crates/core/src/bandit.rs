//! Partial-information arms.
//!
//! Importance-weighted reward estimates, scaled into `[0, 1]`, feed a linear
//! comparison tree whose base leaf is the uniform average of the estimates.
//! Sampling mixes the tree's distribution with uniform exploration.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combiner::{ComparisonTree, NodeConfig, NodeDiscount, NodeRule};
use crate::confidence::WINDOW_FLOOR;
use crate::error::{invalid, Error, Result};
use crate::numeric::{mean_sd, ols_slope};
use crate::rng::{self, Rng};

pub const GAMMA_MIN: f64 = 1e-6;
pub const GAMMA_MAX: f64 = 0.5;

/// Exploration rate `γ` with `γ^{3/2} = sqrt(N·ln(1/Z)/T)`.
pub fn exploration_rate(arms: usize, horizon: usize, log_inv_z: f64) -> f64 {
    (arms as f64 * log_inv_z / horizon as f64).powf(1.0 / 3.0)
}

/// Construction options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BanditOptions {
    /// Skip the inner window floor `Tγ/N ≥ 40·ln(1/Z)`.
    pub waive_window_floor: bool,
}

/// One bandit step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditStep {
    pub t: u64,
    pub arm: usize,
    pub reward: f64,
    /// Sampling probability of the chosen arm.
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct BanditState {
    arms: usize,
    horizon: usize,
    log_inv_z: f64,
    gamma: f64,
    inner_window: f64,
    tree: Option<ComparisonTree>,
    p: Vec<f64>,
    leaf: Vec<f64>,
    payoffs: Vec<f64>,
    cum_reward: f64,
    t: u64,
    rng: Rng,
}

impl BanditState {
    /// `bandit_init` with the default options.
    pub fn new(arms: usize, horizon: usize, z: f64, rng: Rng) -> Result<Self> {
        Self::with_options(arms, horizon, z.recip().ln(), BanditOptions::default(), rng)
    }

    pub fn with_options(arms: usize, horizon: usize, log_inv_z: f64, opts: BanditOptions, rng: Rng) -> Result<Self> {
        if arms == 0 {
            return Err(invalid("N", "at least one arm required"));
        }
        if horizon == 0 {
            return Err(invalid("T", "horizon must be positive"));
        }
        if !log_inv_z.is_finite() {
            return Err(Error::NonFinite {
                what: "ln(1/Z)",
                value: log_inv_z,
            });
        }
        let nt = (arms * horizon) as f64;
        if !(log_inv_z > 2.0 * nt.ln()) {
            return Err(Error::Precondition(format!(
                "Z = e^-{log_inv_z} must be below (N·T)^-2 = e^-{}",
                2.0 * nt.ln()
            )));
        }
        let gamma = exploration_rate(arms, horizon, log_inv_z);
        if !(GAMMA_MIN..=GAMMA_MAX).contains(&gamma) {
            return Err(Error::Precondition(format!(
                "exploration rate {gamma} lies outside [{GAMMA_MIN}, {GAMMA_MAX}]; (N, T, Z) is misconfigured"
            )));
        }
        let inner_window = horizon as f64 * gamma / arms as f64;
        if !opts.waive_window_floor && inner_window < WINDOW_FLOOR * log_inv_z {
            return Err(Error::Precondition(format!(
                "inner window T·γ/N = {inner_window} is below 40·ln(1/Z) = {}",
                WINDOW_FLOOR * log_inv_z
            )));
        }
        let tree = if arms == 1 {
            None
        } else {
            let mut cfg =
                NodeConfig::new(log_inv_z, inner_window, NodeRule::Plain).with_discount(NodeDiscount::PNorm { p: 1.0 });
            cfg.waive_window_floor = opts.waive_window_floor;
            let order: Vec<usize> = (0..=arms).collect();
            Some(ComparisonTree::linear(&order, arms + 1, &cfg)?)
        };
        Ok(Self {
            arms,
            horizon,
            log_inv_z,
            gamma,
            inner_window,
            tree,
            p: vec![1.0 / arms as f64; arms],
            leaf: vec![0.0; arms + 1],
            payoffs: vec![0.0; arms + 1],
            cum_reward: 0.0,
            t: 0,
            rng,
        })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn log_inv_z(&self) -> f64 {
        self.log_inv_z
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn inner_window(&self) -> f64 {
        self.inner_window
    }

    /// Sampling distribution for the coming step.
    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn cum_reward(&self) -> f64 {
        self.cum_reward
    }

    /// Samples an arm, reveals only its reward, and updates.
    pub fn step(&mut self, mut reveal: impl FnMut(usize) -> f64) -> Result<BanditStep> {
        let t = self.t + 1;
        let arm = self.sample();
        let reward = reveal(arm);
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::OutOfRange {
                step: t,
                value: reward,
                bound: 1.0,
            });
        }
        let probability = self.p[arm];
        self.t = t;
        self.cum_reward += reward;
        if let Some(tree) = self.tree.as_mut() {
            let scale = self.gamma / self.arms as f64;
            self.payoffs.iter_mut().for_each(|v| *v = 0.0);
            let y = scale * reward / probability;
            self.payoffs[arm + 1] = y;
            self.payoffs[0] = y / self.arms as f64;
            tree.observe(&self.payoffs)?;
            tree.leaf_weights(&mut self.leaf)?;
            let base = self.leaf[0] / self.arms as f64;
            for i in 0..self.arms {
                let r = self.leaf[i + 1] + base;
                self.p[i] = (1.0 - self.gamma) * r + self.gamma / self.arms as f64;
            }
        }
        Ok(BanditStep {
            t,
            arm,
            reward,
            probability,
        })
    }

    /// Step against a full reward row, of which only the chosen entry is read.
    pub fn step_row(&mut self, rewards: &[f64]) -> Result<BanditStep> {
        if rewards.len() != self.arms {
            return Err(Error::Dimension {
                expected: self.arms,
                got: rewards.len(),
            });
        }
        self.step(|i| rewards[i])
    }

    fn sample(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.p.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.arms - 1
    }
}

/// Importance-weighted estimate after playing `arm` under `p`.
pub fn estimate(arm: usize, reward: f64, p: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; p.len()];
    x[arm] = reward / p[arm];
    x
}

/// `E[x̂]` under `p` by summing over every possible chosen arm.
pub fn expected_estimate(rewards: &[f64], p: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; p.len()];
    for (k, &pk) in p.iter().enumerate() {
        for (ei, xi) in e.iter_mut().zip(estimate(k, rewards[k], p)) {
            *ei += pk * xi;
        }
    }
    e
}

/// Reads a `T × N` reward matrix from CSV. Lines starting with `#` are
/// skipped; a non-numeric first row is treated as a header.
pub fn read_reward_matrix(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first().map(Vec::len) {
                    if row.len() != first {
                        return Err(Error::Dimension {
                            expected: first,
                            got: row.len(),
                        });
                    }
                }
                for &r in &row {
                    if !(0.0..=1.0).contains(&r) {
                        return Err(Error::Parse(format!(
                            "{}: reward {r} on row {} lies outside [0, 1]",
                            path.display(),
                            i + 1
                        )));
                    }
                }
                rows.push(row);
            }
            Err(_) if i == 0 => {}
            Err(e) => return Err(Error::Parse(format!("{}: row {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

/// Mean regret at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub horizon: usize,
    pub log_inv_z: f64,
    pub gamma: f64,
    /// `T·μ* − Σ_t Σ_i p_{t,i}·μ_i`, averaged over seeds.
    pub mean_regret: f64,
    pub regret_se: f64,
    /// `Σ_t Σ_i p_{t,i}·μ_i − T·mean(μ)`, averaged over seeds.
    pub mean_vs_average: f64,
    pub vs_average_se: f64,
    /// `−k·Z·N·T`.
    pub loss_floor: f64,
}

/// Regret scaling across horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditReport {
    pub means: Vec<f64>,
    pub seeds: usize,
    pub k: f64,
    pub rows: Vec<HorizonResult>,
    /// Least-squares slope of `ln(mean regret)` against `ln T`.
    pub slope: Option<f64>,
    pub loss_pass: bool,
}

/// Setup for [`bandit_regret_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretStudy {
    /// Bernoulli mean of each arm.
    pub means: Vec<f64>,
    pub horizons: Vec<usize>,
    pub seeds: usize,
    pub seed: u64,
    /// `ln(1/Z)` is `2·ln(N·T) + margin` at each horizon.
    pub log_inv_z_margin: f64,
    pub k: f64,
    pub options: BanditOptions,
}

/// Runs Bernoulli arms at each horizon over many seeds and fits the log-log
/// regret slope. Regret is measured against arm means (pseudo-regret),
/// with each step scored by `Σ p_i·μ_i` under the pre-step probabilities.
pub fn bandit_regret_report(study: &RegretStudy) -> Result<BanditReport> {
    let n = study.means.len();
    if study.horizons.len() < 3 {
        return Err(Error::Precondition("at least three horizons are required".into()));
    }
    let (lo, hi) = study
        .horizons
        .iter()
        .fold((usize::MAX, 0), |(a, b), &t| (a.min(t), b.max(t)));
    if (hi as f64) < 10.0 * lo as f64 {
        return Err(Error::Precondition("horizons must span at least one decade".into()));
    }
    if study.seeds < 100 {
        return Err(Error::Precondition(format!(
            "{} seeds given, at least 100 required",
            study.seeds
        )));
    }
    if !(study.log_inv_z_margin > 0.0) {
        return Err(invalid("margin", "must be positive so Z < (N·T)^-2"));
    }
    let best = study.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let avg = study.means.iter().sum::<f64>() / n as f64;
    let mut rows = Vec::new();
    for (hi_idx, &horizon) in study.horizons.iter().enumerate() {
        let log_inv_z = 2.0 * ((n * horizon) as f64).ln() + study.log_inv_z_margin;
        let runs: Result<Vec<(f64, f64)>> = (0..study.seeds as u64)
            .into_par_iter()
            .map(|s| {
                let id = (hi_idx as u64) << 32 | s;
                let mut st =
                    BanditState::with_options(n, horizon, log_inv_z, study.options, rng::stream(study.seed, 2 * id))?;
                let mut coins = rng::stream(study.seed, 2 * id + 1);
                let mut pulled = 0.0;
                for _ in 0..horizon {
                    // Conditional expectation of the pulled mean given the
                    // history; same expectation, no arm-sampling noise.
                    pulled += st
                        .probabilities()
                        .iter()
                        .zip(&study.means)
                        .map(|(p, m)| p * m)
                        .sum::<f64>();
                    st.step(|i| {
                        if coins.random::<f64>() < study.means[i] {
                            1.0
                        } else {
                            0.0
                        }
                    })?;
                }
                Ok((best * horizon as f64 - pulled, pulled - avg * horizon as f64))
            })
            .collect();
        let runs = runs?;
        let regrets: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let vs: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let (mr, sr) = mean_sd(&regrets);
        let (mv, sv) = mean_sd(&vs);
        let root = (study.seeds as f64).sqrt();
        rows.push(HorizonResult {
            horizon,
            log_inv_z,
            gamma: exploration_rate(n, horizon, log_inv_z),
            mean_regret: mr,
            regret_se: sr / root,
            mean_vs_average: mv,
            vs_average_se: sv / root,
            loss_floor: -study.k * (-log_inv_z).exp() * (n * horizon) as f64,
        });
    }
    let slope = if rows.iter().all(|r| r.mean_regret > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| (r.horizon as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_regret.ln()).collect();
        Some(ols_slope(&xs, &ys))
    } else {
        None
    };
    let loss_pass = rows.iter().all(|r| r.mean_vs_average >= r.loss_floor);
    Ok(BanditReport {
        means: study.means.clone(),
        seeds: study.seeds,
        k: study.k,
        rows,
        slope,
        loss_pass,
    })
}
