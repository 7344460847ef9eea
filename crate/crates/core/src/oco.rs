//! Online convex optimization over boxes and balls.
//!
//! Greedy projection takes a gradient step and projects back onto the
//! feasible set. [`adaptive_grid_run`] runs one greedy projection per learning
//! rate `2^{-j}` and mixes their decisions with a multiscale comparison tree.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::combiner::{build_multiscale_tree_with, MultiScaleOptions, NodeRule};
use crate::error::{finite, invalid, Error, Result};
use crate::numeric::KahanSum;
use crate::rng;

/// Projection tolerance for feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl FeasibleSet {
    pub fn cube(d: usize, half_width: f64) -> Self {
        Self::Box {
            lo: vec![-half_width; d],
            hi: vec![half_width; d],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(invalid("F", "box bounds must be non-empty and of equal length"));
                }
                if lo
                    .iter()
                    .zip(hi)
                    .any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h))
                {
                    return Err(invalid("F", "box needs finite lo ≤ hi in every coordinate"));
                }
            }
            Self::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("F", "ball center must be finite and non-empty"));
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(invalid("F", "ball radius must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    /// Diameter `‖F‖`.
    pub fn diameter(&self) -> f64 {
        match self {
            Self::Box { lo, hi } => dist(lo, hi),
            Self::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            Self::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            Self::Ball { center, .. } => center.clone(),
        }
    }

    /// Euclidean projection.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Self::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            Self::Ball { center, radius } => {
                let off: Vec<f64> = y.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&off);
                if r <= *radius {
                    y.to_vec()
                } else {
                    let s = radius / r;
                    center.iter().zip(&off).map(|(c, o)| c + s * o).collect()
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Self::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            Self::Ball { center, radius } => dist(x, center) <= radius + tol,
        }
    }
}

/// `x_{t+1} = P(x_t − η·∇c_t(x_t))`.
pub fn gp_step(set: &FeasibleSet, x: &[f64], gradient: &[f64], eta: f64) -> Result<Vec<f64>> {
    if gradient.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: gradient.len(),
        });
    }
    for &g in gradient {
        finite("gradient", g)?;
    }
    finite("eta", eta)?;
    let y: Vec<f64> = x.iter().zip(gradient).map(|(a, g)| a - eta * g).collect();
    Ok(set.project(&y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    /// `‖x − z_t‖²/2`.
    Quadratic,
    /// `⟨z_t, x⟩`.
    Linear,
    /// `Σ_i |x_i − z_{t,i}|`.
    Abs,
}

impl LossFamily {
    pub fn value(self, x: &[f64], z: &[f64]) -> f64 {
        match self {
            Self::Quadratic => 0.5 * x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            Self::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
            Self::Abs => x.iter().zip(z).map(|(a, b)| (a - b).abs()).sum(),
        }
    }

    pub fn gradient(self, x: &[f64], z: &[f64]) -> Vec<f64> {
        match self {
            Self::Quadratic => x.iter().zip(z).map(|(a, b)| a - b).collect(),
            Self::Linear => z.to_vec(),
            Self::Abs => x
                .iter()
                .zip(z)
                .map(|(a, b)| {
                    if a > b {
                        1.0
                    } else if a < b {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }
}

/// Interval `[start, next start)` with a fixed target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub target: Vec<f64>,
}

/// A loss sequence on a feasible set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub set: FeasibleSet,
    pub loss: LossFamily,
    pub horizon: usize,
    /// Piecewise-constant target path; the first segment starts at 0.
    pub segments: Vec<Segment>,
    /// Per-coordinate uniform jitter added to the target at each step.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    /// `k` segments of equal length with targets drawn uniformly from the
    /// inner 80% of a box (or ball).
    pub fn shifting(
        set: FeasibleSet,
        loss: LossFamily,
        horizon: usize,
        k: usize,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || k > horizon {
            return Err(invalid("k", format!("need 1 ≤ k ≤ T, got {k}")));
        }
        set.validate()?;
        let mut r = rng::stream(seed, 0);
        let c = set.center();
        let segments = (0..k)
            .map(|j| {
                let target = match &set {
                    FeasibleSet::Box { lo, hi } => lo
                        .iter()
                        .zip(hi)
                        .zip(&c)
                        .map(|((l, h), m)| m + 0.8 * (h - l) * (r.random::<f64>() - 0.5))
                        .collect(),
                    FeasibleSet::Ball { center, radius } => loop {
                        let v: Vec<f64> = center
                            .iter()
                            .map(|m| m + 0.8 * radius * (2.0 * r.random::<f64>() - 1.0))
                            .collect();
                        if dist(&v, center) <= 0.8 * radius {
                            break v;
                        }
                    },
                };
                Segment {
                    start: j * horizon / k,
                    target,
                }
            })
            .collect();
        let s = Self {
            set,
            loss,
            horizon,
            segments,
            noise,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.set.validate()?;
        let d = self.set.dim();
        if self.segments.first().map(|s| s.start) != Some(0) {
            return Err(invalid("segments", "the first segment must start at 0"));
        }
        for w in self.segments.windows(2) {
            if w[1].start <= w[0].start || w[1].start >= self.horizon {
                return Err(invalid("segments", "starts must increase and lie inside the horizon"));
            }
        }
        for s in &self.segments {
            if s.target.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: s.target.len(),
                });
            }
            if s.target.iter().any(|v| !v.is_finite()) {
                return Err(invalid("target", "must be finite"));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(invalid("noise", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Segment boundaries as half-open ranges.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(self.segments.len());
        for (j, s) in self.segments.iter().enumerate() {
            let end = self.segments.get(j + 1).map_or(self.horizon, |n| n.start);
            out.push((s.start, end));
        }
        out
    }

    /// Per-step targets, jittered and, for quadratic and absolute losses,
    /// projected into `F`.
    pub fn targets(&self) -> Vec<Vec<f64>> {
        let mut r = rng::stream(self.seed, 1);
        let mut out = Vec::with_capacity(self.horizon);
        for (j, (a, b)) in self.intervals().into_iter().enumerate() {
            let base = &self.segments[j].target;
            for _ in a..b {
                let z: Vec<f64> = base
                    .iter()
                    .map(|v| v + self.noise * (2.0 * r.random::<f64>() - 1.0))
                    .collect();
                out.push(match self.loss {
                    LossFamily::Linear => z,
                    _ => self.set.project(&z),
                });
            }
        }
        out
    }

    /// Gradient bound `‖∇c‖` on `F` for the given targets.
    pub fn gradient_bound(&self, targets: &[Vec<f64>]) -> f64 {
        match self.loss {
            LossFamily::Quadratic => self.set.diameter(),
            LossFamily::Abs => (self.set.dim() as f64).sqrt(),
            LossFamily::Linear => targets.iter().map(|z| norm(z)).fold(0.0, f64::max),
        }
    }

    /// `M_c = ‖F‖·‖∇c‖ + max_t |c_t(center)|`, which bounds `|c_t|` on `F`.
    pub fn loss_scale(&self, targets: &[Vec<f64>]) -> f64 {
        let c = self.set.center();
        let c_ref = targets.iter().map(|z| self.loss.value(&c, z).abs()).fold(0.0, f64::max);
        (self.set.diameter() * self.gradient_bound(targets) + c_ref).max(f64::MIN_POSITIVE)
    }

    /// Best fixed point in `F` for the losses on `targets`.
    pub fn best_fixed_point(&self, targets: &[Vec<f64>]) -> Vec<f64> {
        let d = self.set.dim();
        if targets.is_empty() {
            return self.set.center();
        }
        match self.loss {
            LossFamily::Quadratic => {
                let mut m = vec![0.0; d];
                for z in targets {
                    m.iter_mut().zip(z).for_each(|(a, b)| *a += b);
                }
                m.iter_mut().for_each(|a| *a /= targets.len() as f64);
                self.set.project(&m)
            }
            LossFamily::Linear => {
                let mut s = vec![0.0; d];
                for z in targets {
                    s.iter_mut().zip(z).for_each(|(a, b)| *a += b);
                }
                match &self.set {
                    FeasibleSet::Box { lo, hi } => s
                        .iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(v, (l, h))| if *v > 0.0 { *l } else { *h })
                        .collect(),
                    FeasibleSet::Ball { center, radius } => {
                        let n = norm(&s);
                        if n == 0.0 {
                            center.clone()
                        } else {
                            center.iter().zip(&s).map(|(c, v)| c - radius * v / n).collect()
                        }
                    }
                }
            }
            LossFamily::Abs => {
                let med: Vec<f64> = (0..d)
                    .map(|i| {
                        let mut col: Vec<f64> = targets.iter().map(|z| z[i]).collect();
                        col.sort_by(|a, b| a.total_cmp(b));
                        col[col.len() / 2]
                    })
                    .collect();
                // Exact on a box; on a ball this is a feasible comparator only.
                self.set.project(&med)
            }
        }
    }

    /// Per-segment best fixed points, one comparator per step.
    pub fn piecewise_comparator(&self, targets: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.horizon);
        for (a, b) in self.intervals() {
            let u = self.best_fixed_point(&targets[a..b]);
            out.extend(std::iter::repeat_n(u, b - a));
        }
        out
    }
}

/// Learning-rate schedule for greedy projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSchedule {
    Constant {
        eta: f64,
    },
    /// `η_t = t^{-1/2}`.
    InvSqrt,
}

impl EtaSchedule {
    pub fn at(self, t: usize) -> f64 {
        match self {
            Self::Constant { eta } => eta,
            Self::InvSqrt => 1.0 / (t as f64).sqrt(),
        }
    }
}

/// Decisions and losses of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcoRun {
    pub points: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    /// Largest gradient norm observed.
    pub max_gradient: f64,
}

impl OcoRun {
    pub fn total_loss(&self) -> f64 {
        let mut k = KahanSum::new();
        self.losses.iter().for_each(|&l| k.add(l));
        k.value()
    }

    pub fn all_feasible(&self, set: &FeasibleSet) -> bool {
        self.points.iter().all(|x| set.contains(x, FEASIBILITY_TOL))
    }

    /// `Σ c_t(x_t) − min_{x∈F} Σ c_t(x)`.
    pub fn static_regret(&self, scenario: &Scenario, targets: &[Vec<f64>]) -> f64 {
        let u = scenario.best_fixed_point(targets);
        self.total_loss() - targets.iter().map(|z| scenario.loss.value(&u, z)).sum::<f64>()
    }

    /// Regret against a per-step comparator sequence.
    pub fn regret_against(&self, scenario: &Scenario, targets: &[Vec<f64>], comparator: &[Vec<f64>]) -> f64 {
        self.total_loss()
            - targets
                .iter()
                .zip(comparator)
                .map(|(z, u)| scenario.loss.value(u, z))
                .sum::<f64>()
    }
}

/// Path length `Σ d(u_t, u_{t+1})`.
pub fn path_length(points: &[Vec<f64>]) -> f64 {
    points.windows(2).map(|w| dist(&w[0], &w[1])).sum()
}

/// Greedy projection from the center of `F`.
pub fn greedy_projection(scenario: &Scenario, targets: &[Vec<f64>], eta: EtaSchedule) -> Result<OcoRun> {
    let mut x = scenario.set.center();
    let mut run = OcoRun {
        points: Vec::with_capacity(targets.len()),
        losses: Vec::with_capacity(targets.len()),
        max_gradient: 0.0,
    };
    for (t, z) in targets.iter().enumerate() {
        let g = scenario.loss.gradient(&x, z);
        run.max_gradient = run.max_gradient.max(norm(&g));
        run.losses.push(scenario.loss.value(&x, z));
        let next = gp_step(&scenario.set, &x, &g, eta.at(t + 1))?;
        run.points.push(std::mem::replace(&mut x, next));
    }
    Ok(run)
}

/// Learning rates `2^{-j}`, `j = 1..=⌈log₂ T⌉`.
pub fn eta_grid(horizon: usize) -> Vec<f64> {
    let m = (horizon as f64).log2().ceil().max(1.0) as i32;
    (1..=m).map(|j| 2f64.powi(-j)).collect()
}

/// Outcome of the adaptive grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    /// Mixed decisions.
    pub combined: OcoRun,
    pub etas: Vec<f64>,
    /// Window exponents kept after the `40·ln(1/Z)` floor.
    pub window_exponents: Vec<u32>,
    /// Total loss of each learning rate on its own.
    pub leaf_losses: Vec<f64>,
    /// `max_t [c_t(Σ w·x) − Σ w·c_t(x)]`; non-positive for convex losses.
    pub max_jensen_gap: f64,
    pub loss_scale: f64,
}

/// Greedy projection at every rate in `etas`, mixed by a multiscale tree with
/// windows `2^i ≥ 40·ln(1/Z)` on payoffs `−c_t/M_c`.
pub fn adaptive_grid_run(scenario: &Scenario, targets: &[Vec<f64>], etas: &[f64], log_inv_z: f64) -> Result<GridRun> {
    if etas.is_empty() {
        return Err(invalid("etas", "at least one learning rate required"));
    }
    let horizon = targets.len().max(2);
    let opts = MultiScaleOptions {
        rule: NodeRule::Clipped,
        enforce_z_bound: false,
    };
    let mut tree = build_multiscale_tree_with(etas.len(), horizon, log_inv_z, opts)?;
    let window_exponents = crate::combiner::multiscale_exponents(horizon, log_inv_z);
    let m_c = scenario.loss_scale(targets);
    let k = etas.len();
    let mut xs = vec![scenario.set.center(); k];
    let mut w = vec![0.0; k];
    let mut pay = vec![0.0; k];
    let mut leaf_losses = vec![KahanSum::new(); k];
    let mut combined = OcoRun {
        points: Vec::with_capacity(targets.len()),
        losses: Vec::with_capacity(targets.len()),
        max_gradient: 0.0,
    };
    let mut max_jensen_gap = f64::NEG_INFINITY;
    let d = scenario.set.dim();
    for z in targets {
        tree.leaf_weights(&mut w)?;
        let mut mix = vec![0.0; d];
        let mut mixed_loss = 0.0;
        for s in 0..k {
            let c = scenario.loss.value(&xs[s], z);
            pay[s] = (-c / m_c).clamp(-1.0, 1.0);
            leaf_losses[s].add(c);
            mixed_loss += w[s] * c;
            mix.iter_mut().zip(&xs[s]).for_each(|(a, b)| *a += w[s] * b);
        }
        let c_mix = scenario.loss.value(&mix, z);
        max_jensen_gap = max_jensen_gap.max(c_mix - mixed_loss);
        let g_mix = scenario.loss.gradient(&mix, z);
        combined.max_gradient = combined.max_gradient.max(norm(&g_mix));
        combined.losses.push(c_mix);
        combined.points.push(mix);
        tree.observe(&pay)?;
        for s in 0..k {
            let g = scenario.loss.gradient(&xs[s], z);
            xs[s] = gp_step(&scenario.set, &xs[s], &g, etas[s])?;
        }
    }
    Ok(GridRun {
        combined,
        etas: etas.to_vec(),
        window_exponents,
        leaf_losses: leaf_losses.iter().map(KahanSum::value).collect(),
        max_jensen_gap,
        loss_scale: m_c,
    })
}

/// `‖F‖²√T/2 + (√T − 1/2)·‖∇c‖²`.
pub fn static_regret_bound(diameter: f64, gradient_bound: f64, horizon: usize) -> f64 {
    let r = (horizon as f64).sqrt();
    diameter * diameter * r / 2.0 + (r - 0.5) * gradient_bound * gradient_bound
}

/// Constants of the shifting-target regret form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// Per-interval terms of the shifting-target bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftBound {
    /// Path-length rate `γ_j` of each interval.
    pub gammas: Vec<f64>,
    /// `Σ_j ‖F‖‖∇c‖·γ_j^{-1/2}·|I_j|`.
    pub path_term: f64,
    /// `Σ_j ‖F‖‖∇c‖·γ_j^{1/2}·|I_j|`, reported alongside.
    pub path_term_sqrt_gamma: f64,
    /// `Σ_j sqrt(|I_j|·ln(1/Z))`.
    pub window_term: f64,
    /// `Z·T·(ln T)²`.
    pub tail_term: f64,
}

impl ShiftBound {
    pub fn total(&self, k: &ShiftConstants) -> f64 {
        k.k1 * self.path_term + k.k2 * self.window_term + k.k3 * self.tail_term
    }
}

/// Bound terms for a scenario. The path length budgeted to interval `I_j` is
/// the comparator's movement into and within it, at least `‖F‖`, so
/// `γ_j = max(P_j, ‖F‖)/(‖F‖·|I_j|)`.
pub fn shift_bound(scenario: &Scenario, targets: &[Vec<f64>], comparator: &[Vec<f64>], log_inv_z: f64) -> ShiftBound {
    let f = scenario.set.diameter().max(f64::MIN_POSITIVE);
    let g = scenario.gradient_bound(targets);
    let mut gammas = Vec::new();
    let (mut path_term, mut path_term_sqrt_gamma, mut window_term) = (0.0, 0.0, 0.0);
    for (a, b) in scenario.intervals() {
        let len = (b - a) as f64;
        let from = a.saturating_sub(1);
        let p = path_length(&comparator[from..b]);
        let gamma = p.max(f) / (f * len);
        gammas.push(gamma);
        path_term += f * g * gamma.powf(-0.5) * len;
        path_term_sqrt_gamma += f * g * gamma.sqrt() * len;
        window_term += (len * log_inv_z).sqrt();
    }
    let t = targets.len() as f64;
    ShiftBound {
        gammas,
        path_term,
        path_term_sqrt_gamma,
        window_term,
        tail_term: (-log_inv_z).exp() * t * t.ln().powi(2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad(noise: f64, k: usize, t: usize, seed: u64) -> Scenario {
        Scenario::shifting(FeasibleSet::cube(2, 1.0), LossFamily::Quadratic, t, k, noise, seed).unwrap()
    }

    #[test]
    fn projection_examples() {
        let b = FeasibleSet::cube(2, 1.0);
        assert_eq!(b.project(&[3.0, 0.5]), vec![1.0, 0.5]);
        assert_eq!(b.project(&[0.2, -0.3]), vec![0.2, -0.3]);
        let ball = FeasibleSet::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let p = ball.project(&[3.0, 4.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert!((b.diameter() - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gp_step_examples() {
        let b = FeasibleSet::cube(2, 1.0);
        assert_eq!(gp_step(&b, &[0.1, 0.2], &[0.0, 0.0], 0.5).unwrap(), vec![0.1, 0.2]);
        assert_eq!(
            gp_step(&b, &[0.0, 0.0], &[0.5, -0.25], 0.5).unwrap(),
            vec![-0.25, 0.125]
        );
        assert!(gp_step(&b, &[0.0, 0.0], &[f64::NAN, 0.0], 0.5).is_err());
    }

    #[test]
    fn static_quadratic_regret_bound() {
        let s = quad(0.3, 1, 10_000, 5);
        let z = s.targets();
        let run = greedy_projection(&s, &z, EtaSchedule::InvSqrt).unwrap();
        assert!(run.all_feasible(&s.set));
        let bound = static_regret_bound(s.set.diameter(), s.gradient_bound(&z), s.horizon);
        let r = run.static_regret(&s, &z);
        assert!(r <= bound, "{r} > {bound}");
        assert!(run.max_gradient <= s.gradient_bound(&z) + 1e-12);
    }

    #[test]
    fn single_cell_is_plain_greedy_projection() {
        let s = quad(0.2, 3, 2000, 1);
        let z = s.targets();
        let grid = adaptive_grid_run(&s, &z, &[0.125], 3.0).unwrap();
        let plain = greedy_projection(&s, &z, EtaSchedule::Constant { eta: 0.125 }).unwrap();
        assert_eq!(grid.combined.points, plain.points);
    }

    #[test]
    fn grid_mix_is_feasible_and_jensen_holds() {
        for loss in [LossFamily::Quadratic, LossFamily::Abs, LossFamily::Linear] {
            let s = Scenario::shifting(FeasibleSet::cube(3, 2.0), loss, 3000, 4, 0.2, 8).unwrap();
            let z = s.targets();
            let g = adaptive_grid_run(&s, &z, &eta_grid(s.horizon), 4.0).unwrap();
            assert!(g.combined.all_feasible(&s.set));
            assert!(g.max_jensen_gap <= 1e-12, "{loss:?}: {}", g.max_jensen_gap);
        }
    }

    #[test]
    fn stationary_grid_stays_within_mixing_cost_of_best_cell() {
        // The mixture pays at most about M_c·sqrt(T·ln(1/Z)) over the best cell.
        let lz = 1e3f64.ln();
        for seed in 0..50 {
            let s = quad(0.5, 1, 10_000, seed);
            let z = s.targets();
            let g = adaptive_grid_run(&s, &z, &eta_grid(s.horizon), lz).unwrap();
            let opt: f64 = {
                let u = s.best_fixed_point(&z);
                z.iter().map(|t| s.loss.value(&u, t)).sum()
            };
            let best = g.leaf_losses.iter().cloned().fold(f64::INFINITY, f64::min) - opt;
            let ours = g.combined.total_loss() - opt;
            let slack = g.loss_scale * (s.horizon as f64 * lz).sqrt();
            assert!(
                ours <= best + slack,
                "seed {seed}: {ours} vs best cell {best} + {slack}"
            );
        }
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = quad(0.1, 4, 1000, 2);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
        let bad = text.replace("\"start\":0", "\"start\":5");
        assert!(Scenario::from_json(&bad).is_err());
    }

    #[test]
    fn piecewise_comparator_and_bound_terms() {
        let s = quad(0.0, 4, 1000, 3);
        let z = s.targets();
        let u = s.piecewise_comparator(&z);
        assert_eq!(u.len(), 1000);
        for (a, b) in s.intervals() {
            for i in 0..2 {
                assert!((u[a][i] - z[a][i]).abs() < 1e-12);
                assert!((u[b - 1][i] - z[b - 1][i]).abs() < 1e-12);
            }
        }
        let b = shift_bound(&s, &z, &u, 5.0);
        assert_eq!(b.gammas.len(), 4);
        assert!(b.gammas.iter().all(|&g| g > 0.0));
        assert!((b.window_term - 4.0 * (250.0f64 * 5.0).sqrt()).abs() < 1e-9);
    }

    fn set_strategy() -> impl Strategy<Value = FeasibleSet> {
        prop_oneof![
            proptest::collection::vec((-3.0f64..0.0, 0.0f64..3.0), 1..4).prop_map(|v| FeasibleSet::Box {
                lo: v.iter().map(|p| p.0).collect(),
                hi: v.iter().map(|p| p.1).collect(),
            }),
            (proptest::collection::vec(-2.0f64..2.0, 1..4), 0.0f64..3.0)
                .prop_map(|(center, radius)| FeasibleSet::Ball { center, radius }),
        ]
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_optimal(set in set_strategy(), seed in 0u64..10_000) {
            let d = set.dim();
            let mut r = rng::stream(seed, 0);
            let y: Vec<f64> = (0..d).map(|_| 10.0 * (r.random::<f64>() - 0.5)).collect();
            let p = set.project(&y);
            prop_assert!(set.contains(&p, FEASIBILITY_TOL));
            let pp = set.project(&p);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let dp = dist(&p, &y);
            for _ in 0..1000 {
                let q: Vec<f64> = (0..d).map(|_| 10.0 * (r.random::<f64>() - 0.5)).collect();
                let q = set.project(&q);
                prop_assert!(dp <= dist(&q, &y) + 1e-12);
            }
        }
    }
}
