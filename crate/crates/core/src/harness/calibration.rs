//! Frozen constants for the acceptance criteria and the routine that
//! regenerates them.
//!
//! Calibration runs on seeds disjoint from the acceptance seeds and freezes
//! `SAFETY ×` the worst measured ratio. Acceptance reads only the checked-in
//! values.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combiner::{CombinerNode, NodeRule};
use crate::confidence::{ConfidenceParams, Variant};
use crate::error::Result;
use crate::oco::{adaptive_grid_run, eta_grid, shift_bound, FeasibleSet, LossFamily, Scenario};
use crate::rng;
use crate::uniformity::noise_like_predict;

/// Windowed-regret constant, fixed in advance.
pub const A5_C: f64 = 8.0;
/// Uniformity constant, fixed in advance.
pub const A6_C: f64 = 4.0;
/// Multiplier applied to the worst calibration measurement.
pub const SAFETY: f64 = 2.0;
/// First calibration seed; acceptance seeds stay below it.
pub const CALIBRATION_SEED_BASE: u64 = 10_000;
pub const CALIBRATION_SEEDS: u64 = 20;

const FROZEN: &str = include_str!("../../calibration.json");

/// One frozen constant with the measurement it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub measured: f64,
}

impl Constant {
    fn from_measured(measured: f64) -> Self {
        // Three significant figures, rounded up.
        let raw = SAFETY * measured;
        let unit = 10f64.powi(raw.abs().log10().floor() as i32 - 2);
        let value = if raw > 0.0 { (raw / unit).ceil() * unit } else { 0.0 };
        Self { value, measured }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub safety: f64,
    pub seeds: (u64, u64),
    /// Pairwise combiner: `T − gain ≤ c·sqrt(T·ln(1/Z))`.
    pub a4_c: Constant,
    /// Pairwise combiner base dominance: `gain ≥ −c'·Z·√T`. Not measured;
    /// `e` from the loss allowance of the ramp shape.
    pub a4_c_prime: f64,
    /// Noise-like prediction: excess discounted error over `sqrt(n·ln T)`.
    pub a7_c: Constant,
    /// Path-term constant of the shifting OCO bound, with the window and
    /// tail constants fixed at 1.
    pub a10_k1: Constant,
}

impl Calibration {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes") + "\n"
    }
}

/// Checked-in constants.
pub fn frozen() -> Calibration {
    serde_json::from_str(FROZEN).expect("checked-in calibration.json parses")
}

pub const A4_T: usize = 10_000;
pub const A4_Z: f64 = 1e-4;

/// Pairwise node used by A4: plain rule, ramp shape, `n = T`, `L = √T`.
pub fn a4_node() -> Result<CombinerNode> {
    let n = A4_T as f64;
    let p = ConfidenceParams::new(A4_Z, n.sqrt(), n, Variant::RampExp)?;
    Ok(CombinerNode::new(p, NodeRule::Plain))
}

/// Combined gain and minimum prefix gain of the A4 node on constant
/// strategies `s1`, `s2`.
pub fn a4_run(s1: f64, s2: f64) -> Result<(f64, f64)> {
    let mut node = a4_node()?;
    let (mut gain, mut min_prefix) = (0.0f64, 0.0f64);
    for _ in 0..A4_T {
        gain += node.combine_pair_step(s1, s2)?.mixed;
        min_prefix = min_prefix.min(gain);
    }
    Ok((gain, min_prefix))
}

pub const A7_T: usize = 10_000;
pub const A7_N: f64 = 512.0;
pub const A7_DELTA: f64 = 1.0 / 32.0;

/// `ln(1/Z)` for A7: the largest `Z` the window admits, `Z = e^{−n/40}`.
pub fn a7_log_inv_z() -> f64 {
    A7_N / 40.0
}

/// Piecewise-constant levels in `[−0.7, 0.7]` over 5 segments plus uniform
/// noise of half-width 0.2.
pub fn a7_signal(seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0);
    let k = 5;
    let levels: Vec<f64> = (0..k).map(|_| r.random_range(-0.7..=0.7)).collect();
    (0..A7_T)
        .map(|t| {
            let level = levels[t * k / A7_T];
            (level + r.random_range(-0.2..=0.2)).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Worst excess ratio of the noise-like predictor on `a7_signal(seed)`.
pub fn a7_ratio(seed: u64) -> Result<f64> {
    let rep = noise_like_predict(&a7_signal(seed), A7_N, a7_log_inv_z(), f64::INFINITY, A7_DELTA)?;
    Ok(rep.worst_excess_ratio)
}

pub const A10_T: usize = 10_000;
pub const A10_K: usize = 4;
pub const A10_NOISE: f64 = 0.3;
pub const A10_LOG_INV_Z: f64 = 6.907_755_278_982_137; // ln(1000)

pub fn a10_scenario(seed: u64) -> Result<Scenario> {
    Scenario::shifting(
        FeasibleSet::cube(2, 1.0),
        LossFamily::Quadratic,
        A10_T,
        A10_K,
        A10_NOISE,
        seed,
    )
}

/// Dynamic regret of the grid run against the piecewise comparator, and
/// the bound's terms.
pub fn a10_measure(seed: u64) -> Result<(f64, crate::oco::ShiftBound)> {
    let s = a10_scenario(seed)?;
    let z = s.targets();
    let grid = adaptive_grid_run(&s, &z, &eta_grid(s.horizon), A10_LOG_INV_Z)?;
    let comp = s.piecewise_comparator(&z);
    let regret = grid.combined.regret_against(&s, &z, &comp);
    Ok((regret, shift_bound(&s, &z, &comp, A10_LOG_INV_Z)))
}

/// Smallest `k1` with `regret ≤ k1·path + window + tail`.
pub fn a10_k1_needed(regret: f64, b: &crate::oco::ShiftBound) -> f64 {
    ((regret - b.window_term - b.tail_term) / b.path_term).max(0.0)
}

/// Measures every calibrated constant on the calibration seeds.
pub fn calibrate() -> Result<Calibration> {
    let seeds: Vec<u64> = (CALIBRATION_SEED_BASE..CALIBRATION_SEED_BASE + CALIBRATION_SEEDS).collect();
    let (gain, _) = a4_run(0.0, 1.0)?;
    let t = A4_T as f64;
    let a4 = (t - gain) / (t * -A4_Z.ln()).sqrt();
    let a7 = seeds
        .par_iter()
        .map(|&s| a7_ratio(s))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let a10 = seeds
        .par_iter()
        .map(|&s| a10_measure(s).map(|(r, b)| a10_k1_needed(r, &b)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Calibration {
        safety: SAFETY,
        seeds: (CALIBRATION_SEED_BASE, CALIBRATION_SEED_BASE + CALIBRATION_SEEDS),
        a4_c: Constant::from_measured(a4),
        a4_c_prime: std::f64::consts::E,
        a7_c: Constant::from_measured(a7),
        a10_k1: Constant::from_measured(a10),
    })
}

/// Markdown table for CALIBRATION.md.
pub fn to_markdown(c: &Calibration) -> String {
    let mut s = String::from("| constant | frozen | measured |\n|---|---|---|\n");
    for (name, k) in [("A4 c", c.a4_c), ("A7 c", c.a7_c), ("A10 k1", c.a10_k1)] {
        s.push_str(&format!("| {name} | {} | {:.6} |\n", k.value, k.measured));
    }
    s.push_str(&format!("| A4 c' | {:.6} | not measured |\n", c.a4_c_prime));
    s.push_str(&format!("| A5 c | {A5_C} | fixed |\n| A6 c | {A6_C} | fixed |\n"));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_values_parse_and_exceed_measurements() {
        let c = frozen();
        assert_eq!(c.safety, SAFETY);
        for k in [c.a4_c, c.a7_c, c.a10_k1] {
            assert!(k.value >= k.measured, "{k:?}");
        }
        assert!(c.seeds.0 >= CALIBRATION_SEED_BASE);
    }

    #[test]
    fn a4_measurement_is_reproduced() {
        let (gain, _) = a4_run(0.0, 1.0).unwrap();
        let t = A4_T as f64;
        let c = (t - gain) / (t * -A4_Z.ln()).sqrt();
        assert!((c - frozen().a4_c.measured).abs() < 1e-9);
    }

    #[test]
    fn a7_signal_is_deterministic_and_bounded() {
        let a = a7_signal(3);
        assert_eq!(a, a7_signal(3));
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }
}
