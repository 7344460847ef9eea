//! Smoothed payoffs and uniformity audits.
//!
//! A residual stream `r_t = s_{i,t} − s_{*,t}` is uniform at scale
//! `ρ = 1 − 1/n` when its discounted sum `Σ_j ρ^{t−j}·r_j` never exceeds
//! `c·sqrt(n·ln(1/Z))`. Equivalently, the normalized smoothed value
//! `s̃_t = (1−ρ)·Σ_j ρ^{t−j}·r_j` stays below `c·sqrt(ln(1/Z)/n)`. Both forms
//! yield the same ratio, which is what [`audit`] reports.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::combiner::{build_multiscale_tree_with, MultiScaleOptions, NodeRule};
use crate::confidence::WINDOW_FLOOR;
use crate::error::{finite, invalid, Error, Result};
use crate::rng;

/// Normalized geometric average of a series at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedSeries {
    pub rho: f64,
    /// `s̃_t` for `t = 1..=T`.
    pub values: Vec<f64>,
}

/// `s̃_t = ρ·s̃_{t−1} + (1−ρ)·s_t` with `s̃_0 = 0`.
pub fn smooth(series: &[f64], rho: f64) -> Result<SmoothedSeries> {
    finite("rho", rho)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid("rho", format!("scale must lie in [0, 1), got {rho}")));
    }
    let mut acc = 0.0;
    let values = series
        .iter()
        .map(|&s| {
            acc = rho * acc + (1.0 - rho) * s;
            acc
        })
        .collect();
    Ok(SmoothedSeries { rho, values })
}

/// Result of [`cross_scale_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossScaleReport {
    /// Largest `|lhs − rhs|` over `t`.
    pub max_residual: f64,
    /// Smallest mixing coefficient (must be ≥ 0).
    pub min_coefficient: f64,
    /// `|Σ coefficients − 1|` over the infinite horizon.
    pub coefficient_sum_error: f64,
}

/// Checks that the `ρ1`-smoothed series is a convex combination of lagged
/// `ρ2`-smoothed values:
/// `s̃¹_t = (1−ρ1)/(1−ρ2)·[s̃²_t + (ρ1−ρ2)·Σ_{j=1}^{t−1} ρ1^{j−1}·s̃²_{t−j}]`.
pub fn cross_scale_check(series: &[f64], rho1: f64, rho2: f64) -> Result<CrossScaleReport> {
    if !(rho1 < 1.0 && rho1 > rho2 && rho2 >= 0.0) {
        return Err(invalid(
            "rho",
            format!("need 1 > rho1 > rho2 ≥ 0, got rho1 = {rho1}, rho2 = {rho2}"),
        ));
    }
    let a = smooth(series, rho1)?.values;
    let b = smooth(series, rho2)?.values;
    let lead = (1.0 - rho1) / (1.0 - rho2);
    let mut lagged = 0.0; // Σ_{j≥1} ρ1^{j−1}·s̃²_{t−j}
    let mut max_residual = 0.0f64;
    for t in 0..a.len() {
        let rhs = lead * (b[t] + (rho1 - rho2) * lagged);
        max_residual = max_residual.max((a[t] - rhs).abs());
        lagged = b[t] + rho1 * lagged;
    }
    let min_coefficient = lead.min(lead * (rho1 - rho2));
    let total = lead * (1.0 + (rho1 - rho2) / (1.0 - rho1));
    Ok(CrossScaleReport {
        max_residual,
        min_coefficient,
        coefficient_sum_error: (total - 1.0).abs(),
    })
}

/// Audit settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub log_inv_z: f64,
    pub n_strategies: usize,
    pub horizon: usize,
    pub c: f64,
    /// Number of sampled non-dyadic scales above the floor.
    pub extra_scales: usize,
    pub seed: u64,
    /// Enforce `Z ≤ (N·T)^{-2}`.
    pub enforce_z_bound: bool,
}

impl AuditConfig {
    pub fn new(log_inv_z: f64, n_strategies: usize, horizon: usize, c: f64) -> Self {
        Self {
            log_inv_z,
            n_strategies,
            horizon,
            c,
            extra_scales: 10,
            seed: 0,
            enforce_z_bound: true,
        }
    }
}

/// Audit outcome at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleResult {
    pub n: f64,
    pub dyadic: bool,
    /// `max_t s̃_t / sqrt(ln(1/Z)/n)`.
    pub worst_ratio: f64,
    /// 1-based step of `worst_ratio`.
    pub worst_t: usize,
    /// `max_t |s̃_t| / sqrt(ln(1/Z)/n)`, reported only.
    pub worst_abs_ratio: f64,
    /// Normalized smoothed values per step.
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Uniformity audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub log_inv_z: f64,
    pub c: f64,
    pub scales: Vec<ScaleResult>,
    pub worst_ratio: f64,
    pub worst_scale: f64,
    pub pass: bool,
}

impl UniformityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `t,n,dyadic,smoothed,unnormalized,ratio` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,n,dyadic,smoothed,unnormalized,ratio")?;
        for s in &self.scales {
            let unit = (self.log_inv_z / s.n).sqrt();
            for (i, v) in s.values.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{:e},{:e},{:e}",
                    i + 1,
                    s.n,
                    u8::from(s.dyadic),
                    v,
                    v * s.n,
                    v / unit
                )?;
            }
        }
        Ok(())
    }
}

/// Scales audited for a given floor: dyadic `2^j` up to `2^{⌈log₂T⌉}` plus
/// `extra` log-uniform samples between the floor and the largest window.
pub fn audit_scales(log_inv_z: f64, horizon: usize, extra: usize, seed: u64) -> Vec<(f64, bool)> {
    let floor = WINDOW_FLOOR * log_inv_z;
    let jmax = (horizon.max(2) as f64).log2().ceil() as i32;
    let mut out: Vec<(f64, bool)> = (1..=jmax)
        .map(|j| 2f64.powi(j))
        .filter(|&n| n >= floor * (1.0 - 1e-12))
        .map(|n| (n, true))
        .collect();
    let top = 2f64.powi(jmax);
    if floor < top {
        let mut r = rng::stream(seed, 0x5ca1e);
        let (lo, hi) = (floor.ln(), top.ln());
        let mut k = 0;
        while k < extra {
            let n = r.random_range(lo..hi).exp();
            if (n.log2() - n.log2().round()).abs() > 1e-9 {
                out.push((n, false));
                k += 1;
            }
        }
    }
    out
}

/// Audits one residual stream at every dyadic scale above the
/// `40·ln(1/Z)` floor and at `extra_scales` sampled non-dyadic scales.
pub fn audit(residual: &[f64], cfg: &AuditConfig) -> Result<UniformityReport> {
    finite("ln(1/Z)", cfg.log_inv_z)?;
    if cfg.n_strategies == 0 || cfg.horizon == 0 {
        return Err(invalid("N, T", "need at least one strategy and one step"));
    }
    let bound = 2.0 * ((cfg.n_strategies * cfg.horizon) as f64).ln();
    if cfg.enforce_z_bound && cfg.log_inv_z < bound * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "Z = e^-{} exceeds (N·T)^-2 = e^-{bound}",
            cfg.log_inv_z
        )));
    }
    let mut scales = Vec::new();
    for (n, dyadic) in audit_scales(cfg.log_inv_z, cfg.horizon, cfg.extra_scales, cfg.seed) {
        let values = smooth(residual, 1.0 - 1.0 / n)?.values;
        let unit = (cfg.log_inv_z / n).sqrt();
        let (mut worst, mut worst_t, mut worst_abs) = (f64::NEG_INFINITY, 0, 0.0f64);
        for (i, v) in values.iter().enumerate() {
            let r = v / unit;
            if r > worst {
                worst = r;
                worst_t = i + 1;
            }
            worst_abs = worst_abs.max(r.abs());
        }
        scales.push(ScaleResult {
            n,
            dyadic,
            worst_ratio: worst,
            worst_t,
            worst_abs_ratio: worst_abs,
            values,
        });
    }
    let (worst_ratio, worst_scale) = scales
        .iter()
        .map(|s| (s.worst_ratio, s.n))
        .fold((f64::NEG_INFINITY, f64::NAN), |a, b| if b.0 > a.0 { b } else { a });
    Ok(UniformityReport {
        log_inv_z: cfg.log_inv_z,
        c: cfg.c,
        pass: worst_ratio <= cfg.c,
        scales,
        worst_ratio,
        worst_scale,
    })
}

/// Constant-predictor grid `−1, −1+δ, …, 1`.
pub fn prediction_grid(delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("delta", format!("grid step must lie in (0, 1], got {delta}")));
    }
    let k = (2.0 / delta).round() as usize;
    Ok((0..=k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect())
}

/// Output of [`noise_like_predict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLikeReport {
    /// Prediction for each step, emitted before the step's value.
    pub predictions: Vec<f64>,
    /// Discounted absolute error of the predictions at the final step.
    pub final_error: f64,
    /// Smallest discounted error of any grid constant at the final step.
    pub final_best_error: f64,
    /// `max_t (E_alg(t) − min_z E_z(t)) / sqrt(n·ln T)`.
    pub worst_excess_ratio: f64,
    pub worst_t: usize,
    pub c: f64,
    pub pass: bool,
}

/// Predicts a real signal in `[−1, 1]` by combining a grid of constant
/// predictors (payoff `1 − |b − z|`) in a multiscale tree, and checks that
/// the discounted error at scale `n` stays within `c·sqrt(n·ln T)` of the
/// best grid constant at every step.
///
/// Requires `n ≥ 40·ln(1/Z)`.
pub fn noise_like_predict(signal: &[f64], n: f64, log_inv_z: f64, c: f64, delta: f64) -> Result<NoiseLikeReport> {
    finite("n", n)?;
    if n < WINDOW_FLOOR * log_inv_z * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "window n = {n} is below 40·ln(1/Z) = {}",
            WINDOW_FLOOR * log_inv_z
        )));
    }
    let grid = prediction_grid(delta)?;
    let t_len = signal.len();
    if t_len < 2 {
        return Err(invalid("signal", "need at least two steps"));
    }
    let opts = MultiScaleOptions {
        rule: NodeRule::Clipped,
        enforce_z_bound: false,
    };
    let mut tree = build_multiscale_tree_with(grid.len(), t_len, log_inv_z, opts)?;
    let rho = 1.0 - 1.0 / n;
    let scale = (n * (t_len as f64).ln()).sqrt();
    let mut w = vec![0.0; grid.len()];
    let mut payoffs = vec![0.0; grid.len()];
    let mut err_z = vec![0.0; grid.len()];
    let mut err_alg = 0.0;
    let mut predictions = Vec::with_capacity(t_len);
    let (mut worst, mut worst_t) = (f64::NEG_INFINITY, 0);
    for (t, &b) in signal.iter().enumerate() {
        crate::error::bounded(t as u64 + 1, b, 1.0)?;
        tree.leaf_weights(&mut w)?;
        let pred: f64 = w.iter().zip(&grid).map(|(wi, z)| wi * z).sum();
        predictions.push(pred);
        for (k, z) in grid.iter().enumerate() {
            let e = (b - z).abs();
            payoffs[k] = 1.0 - e;
            err_z[k] = rho * err_z[k] + e;
        }
        err_alg = rho * err_alg + (b - pred).abs();
        tree.observe(&payoffs)?;
        let best = err_z.iter().copied().fold(f64::INFINITY, f64::min);
        let r = (err_alg - best) / scale;
        if r > worst {
            worst = r;
            worst_t = t + 1;
        }
    }
    Ok(NoiseLikeReport {
        predictions,
        final_error: err_alg,
        final_best_error: err_z.iter().copied().fold(f64::INFINITY, f64::min),
        worst_excess_ratio: worst,
        worst_t,
        c,
        pass: worst <= c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coin(seed: u64, t: usize) -> Vec<f64> {
        let mut r = rng::stream(seed, 1);
        (0..t).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect()
    }

    /// `(1−ρ)·Σ_{j≤t} ρ^{t−j}·s_j` evaluated term by term.
    fn direct(series: &[f64], rho: f64, t: usize) -> f64 {
        (0..=t).map(|j| series[j] * rho.powi((t - j) as i32)).sum::<f64>() * (1.0 - rho)
    }

    #[test]
    fn smooth_examples() {
        let s = smooth(&[0.7; 50], 0.9).unwrap();
        for (t, v) in s.values.iter().enumerate() {
            assert!((v - 0.7 * (1.0 - 0.9f64.powi(t as i32 + 1))).abs() < 1e-12);
        }
        let raw = coin(1, 20);
        assert_eq!(smooth(&raw, 0.0).unwrap().values, raw);
        assert!(smooth(&raw, 1.0).is_err());

        let raw: Vec<f64> = coin(2, 500).iter().map(|v| v * 0.37).collect();
        let s = smooth(&raw, 0.99).unwrap();
        assert!((s.values[499] - direct(&raw, 0.99, 499)).abs() < 1e-12);
    }

    /// Right-hand side of the cross-scale identity as an explicit double sum.
    fn rhs_double_sum(series: &[f64], r1: f64, r2: f64, t: usize) -> f64 {
        let lead = (1.0 - r1) / (1.0 - r2);
        let mut acc = direct(series, r2, t);
        for j in 1..=t {
            acc += (r1 - r2) * r1.powi(j as i32 - 1) * direct(series, r2, t - j);
        }
        lead * acc
    }

    #[test]
    fn cross_scale_matches_double_sum_oracle() {
        let s = coin(3, 200);
        for t in [0, 1, 50, 199] {
            let lhs = direct(&s, 0.99, t);
            assert!((lhs - rhs_double_sum(&s, 0.99, 0.9, t)).abs() < 1e-12);
        }
        let r = cross_scale_check(&coin(4, 1000), 0.99, 0.9).unwrap();
        assert!(r.max_residual <= 1e-9);
        assert!(r.min_coefficient >= 0.0);
        assert!(r.coefficient_sum_error <= 1e-12);
    }

    #[test]
    fn cross_scale_edge_cases() {
        let s = coin(5, 100);
        assert!(cross_scale_check(&s, 0.9, 0.9).is_err());
        assert!(cross_scale_check(&s, 0.9, 0.0).unwrap().max_residual < 1e-12);
        let r = cross_scale_check(&[0.4; 300], 0.95, 0.5).unwrap();
        assert!(r.max_residual < 1e-12);
    }

    #[test]
    fn audit_null_model_and_negative_control() {
        let t = 1 << 12;
        let lz = 2.0 * (3.0 * t as f64).ln();
        let cfg = AuditConfig::new(lz, 3, t, 4.0);
        let r = audit(&coin(6, t), &cfg).unwrap();
        assert!(r.pass, "{}", r.worst_ratio);
        assert_eq!(r.scales.iter().filter(|s| !s.dyadic).count(), 10);

        let biased: Vec<f64> = coin(7, t).iter().map(|v| 0.5 * v + 0.5).collect();
        let r = audit(&biased, &cfg).unwrap();
        assert!(!r.pass);
        assert!(r.worst_scale >= 1024.0, "{}", r.worst_scale);

        assert!(audit(&coin(6, t), &AuditConfig::new(5.0, 3, t, 4.0)).is_err());
    }

    #[test]
    fn audit_csv_has_every_point() {
        let t = 256;
        let mut cfg = AuditConfig::new(1.0, 1, t, 4.0);
        cfg.enforce_z_bound = false;
        cfg.extra_scales = 2;
        let r = audit(&coin(8, t), &cfg).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let lines = String::from_utf8(out).unwrap().lines().count();
        assert_eq!(lines, 1 + t * r.scales.len());
        assert!(!r.to_json().contains("values"));
    }

    #[test]
    fn constant_signal_converges_to_quantization_floor() {
        let sig = vec![0.5; 4000];
        let r = noise_like_predict(&sig, 512.0, 512.0 / 40.0, 8.0, 1.0 / 32.0).unwrap();
        assert!(r.pass, "{}", r.worst_excess_ratio);
        // Per-step error is within the guarantee of the best constant.
        let n = 512.0;
        let per_step = r.final_error / n;
        assert!(per_step <= 2.0 * (4000f64.ln() / n).sqrt());
        let first = r.predictions[0];
        let last = *r.predictions.last().unwrap();
        assert!((last - 0.5).abs() < (first - 0.5).abs());
    }

    #[test]
    fn noise_like_rejects_small_window() {
        assert!(noise_like_predict(&[0.0; 10], 100.0, 10.0, 1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn smoothing_is_bounded(v in proptest::collection::vec(-1.0f64..=1.0, 1..300), rho in 0.0f64..0.999) {
            let m = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let s = smooth(&v, rho).unwrap();
            prop_assert!(s.values.iter().all(|x| x.abs() <= m + 1e-15));
        }

        #[test]
        fn cross_scale_identity(v in proptest::collection::vec(-1.0f64..=1.0, 1..400), a in 0.0f64..0.999, b in 0.0f64..0.999) {
            prop_assume!((a - b).abs() > 1e-6);
            let (r1, r2) = if a > b { (a, b) } else { (b, a) };
            let r = cross_scale_check(&v, r1, r2).unwrap();
            prop_assert!(r.max_residual <= 1e-9);
            prop_assert!(r.min_coefficient >= 0.0);
            prop_assert!(r.coefficient_sum_error <= 1e-12);
        }
    }
}
