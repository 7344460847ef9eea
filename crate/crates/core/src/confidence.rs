//! Confidence functions.
//!
//! A [`ConfidenceParams`] value fixes the loss scale `Z`, the deviation scale
//! `L`, the window `n` and the function shape. From those it evaluates the
//! bet size `g(x)`, the step function `h(x)`, the potential
//! `Φ(x) = |∫₀ˣ g|`, and scans the drift condition that makes `Φ` a valid
//! potential for the discounted update.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{finite, invalid, Error, Result};
use crate::numeric::adaptive_simpson;

/// Window floor multiplier: windows must satisfy `n ≥ 40·ln(1/Z)`.
pub const WINDOW_FLOOR: f64 = 40.0;

/// Smallest admissible `ln(1/Z)`, i.e. `Z ≤ e^{-1}`.
pub const MIN_LOG_INV_Z: f64 = 1.0;

/// Absolute tolerance of the potential quadrature.
pub const POTENTIAL_TOL: f64 = 1e-12;

const REL_SLACK: f64 = 1e-12;

/// Shape of the confidence function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// `sign(x)·exp(ln Z + (x/2L)²)` below `U`, saturated beyond.
    StepExp,
    /// Linear ramp `e^{1/4}·Z·x/L` on `|x| ≤ L`, then as `StepExp`.
    RampExp,
    /// One-sided shape for betting under transaction costs: linear up to
    /// `εT`, exponential on `[εT, εT + U]`, saturated beyond.
    TransactionRamp { epsilon: f64, horizon: f64 },
}

/// One-sided limit selector for derivatives at breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Parameters of a confidence function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    log_inv_z: f64,
    scale: f64,
    window: f64,
    variant: Variant,
}

impl ConfidenceParams {
    /// Validated constructor from `Z`, `L`, `n`.
    pub fn new(z: f64, l: f64, n: f64, variant: Variant) -> Result<Self> {
        finite("Z", z)?;
        if !(z > 0.0) {
            return Err(invalid("Z", format!("must be positive, got {z}")));
        }
        Self::from_log_inv_z(-z.ln(), l, n, variant)
    }

    /// Validated constructor from `ln(1/Z)`; exact for `Z` below `f64` range.
    pub fn from_log_inv_z(log_inv_z: f64, l: f64, n: f64, variant: Variant) -> Result<Self> {
        let p = Self::new_unchecked(log_inv_z, l, n, variant)?;
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters without the window-floor and scale conditions.
    ///
    /// Only finiteness and positivity are checked. Used for negative controls
    /// of the drift checker and by callers that document a waived floor.
    pub fn new_unchecked(log_inv_z: f64, l: f64, n: f64, variant: Variant) -> Result<Self> {
        finite("ln(1/Z)", log_inv_z)?;
        finite("L", l)?;
        finite("n", n)?;
        if !(log_inv_z > 0.0) {
            return Err(invalid("Z", "ln(1/Z) must be positive"));
        }
        if !(l > 0.0) {
            return Err(invalid("L", format!("must be positive, got {l}")));
        }
        if !(n >= 1.0) {
            return Err(invalid("n", format!("window must be at least 1, got {n}")));
        }
        if let Variant::TransactionRamp { epsilon, horizon } = variant {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
            }
            if !(horizon >= 1.0 && horizon.is_finite()) {
                return Err(invalid("T", format!("horizon must be at least 1, got {horizon}")));
            }
        }
        Ok(Self {
            log_inv_z,
            scale: l,
            window: n,
            variant,
        })
    }

    /// Parameters for the transaction-cost shape: `L = 2√T`, `n = T`.
    pub fn transaction_ramp(epsilon: f64, horizon: f64, log_inv_z: f64) -> Result<Self> {
        finite("T", horizon)?;
        Self::from_log_inv_z(
            log_inv_z,
            2.0 * horizon.sqrt(),
            horizon,
            Variant::TransactionRamp { epsilon, horizon },
        )
    }

    /// Checks `Z ≤ e^{-1}`, `n ≥ 40·ln(1/Z)` and `L² ≥ n`.
    pub fn validate(&self) -> Result<()> {
        if self.log_inv_z < MIN_LOG_INV_Z * (1.0 - REL_SLACK) {
            return Err(Error::Precondition(format!(
                "loss scale Z = e^-{} exceeds e^-1",
                self.log_inv_z
            )));
        }
        let floor = WINDOW_FLOOR * self.log_inv_z;
        if self.window < floor * (1.0 - REL_SLACK) {
            return Err(Error::Precondition(format!(
                "window n = {} is below 40·ln(1/Z) = {floor}",
                self.window
            )));
        }
        if self.scale * self.scale < self.window * (1.0 - REL_SLACK) {
            return Err(Error::Precondition(format!(
                "deviation scale L = {} violates 1/n ≥ 1/L² for n = {}",
                self.scale, self.window
            )));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// `ln(1/Z)`.
    pub fn log_inv_z(&self) -> f64 {
        self.log_inv_z
    }

    /// `Z`; underflows to 0 for `ln(1/Z) > ~745`.
    pub fn z(&self) -> f64 {
        (-self.log_inv_z).exp()
    }

    /// Deviation scale `L`.
    pub fn l(&self) -> f64 {
        self.scale
    }

    /// Window `n = 1/(1−ρ)`.
    pub fn n(&self) -> f64 {
        self.window
    }

    pub fn rho(&self) -> f64 {
        1.0 - 1.0 / self.window
    }

    /// `ρ̄ = 1 − ρ`.
    pub fn rho_bar(&self) -> f64 {
        1.0 / self.window
    }

    /// Width of the exponential band, `U = 2L·sqrt(ln(1/Z))`.
    pub fn u(&self) -> f64 {
        2.0 * self.scale * self.log_inv_z.sqrt()
    }

    /// Point above which `g ≡ 1`.
    pub fn saturation(&self) -> f64 {
        match self.variant {
            Variant::TransactionRamp { epsilon, horizon } => epsilon * horizon + self.u(),
            _ => self.u(),
        }
    }

    /// Per-step loss allowance `Z'` paired with the variant: `Z` for the step
    /// shape, `e·ρ̄·L·Z` for the ramps.
    pub fn loss_allowance(&self) -> f64 {
        match self.variant {
            Variant::StepExp => self.z(),
            _ => (1.0 - self.log_inv_z).exp() * self.rho_bar() * self.scale,
        }
    }

    /// Rejects non-finite input, otherwise [`g`](Self::g).
    pub fn eval_g(&self, x: f64) -> Result<f64> {
        Ok(self.g(finite("deviation", x)?))
    }

    /// Confidence `g(x) ∈ [−1, 1]`. Returns 0 at `x = 0`.
    pub fn g(&self, x: f64) -> f64 {
        let two_l = 2.0 * self.scale;
        match self.variant {
            Variant::StepExp | Variant::RampExp => {
                let a = x.abs();
                if a == 0.0 {
                    return 0.0;
                }
                if a >= self.u() {
                    return 1f64.copysign(x);
                }
                let e = if self.variant == Variant::RampExp && a <= self.scale {
                    0.25 - self.log_inv_z + (a / self.scale).ln()
                } else {
                    let r = a / two_l;
                    r * r - self.log_inv_z
                };
                e.min(0.0).exp().copysign(x)
            }
            Variant::TransactionRamp { epsilon, horizon } => {
                let et = epsilon * horizon;
                if x >= self.saturation() {
                    1.0
                } else if x >= et {
                    let r = (x - et) / two_l;
                    (r * r - self.log_inv_z).min(0.0).exp()
                } else if x == 0.0 {
                    0.0
                } else {
                    let e = (x.abs() / et).ln() - self.log_inv_z;
                    e.min(0.0).exp().copysign(x)
                }
            }
        }
    }

    /// Step function `h`: 1 inside the band, 0 beyond saturation, and 1/2 on
    /// the exponential band of the transaction shape.
    pub fn h(&self, x: f64) -> f64 {
        match self.variant {
            Variant::StepExp | Variant::RampExp => {
                if x.abs() < self.u() {
                    1.0
                } else {
                    0.0
                }
            }
            Variant::TransactionRamp { epsilon, horizon } => {
                if x < epsilon * horizon {
                    1.0
                } else if x < self.saturation() {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Rejects non-finite input, otherwise [`h`](Self::h).
    pub fn eval_h(&self, x: f64) -> Result<f64> {
        Ok(self.h(finite("deviation", x)?))
    }

    /// Breakpoints where `g` changes formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        let u = self.u();
        match self.variant {
            Variant::StepExp => vec![-u, 0.0, u],
            Variant::RampExp => vec![-u, -self.scale, 0.0, self.scale, u],
            Variant::TransactionRamp { epsilon, horizon } => {
                let et = epsilon * horizon;
                // Below −εT·e^{ln(1/Z)} the linear piece is clamped at −1.
                let clamp = -et * self.log_inv_z.exp();
                let mut v = vec![0.0, et, et + u];
                if clamp.is_finite() {
                    v.insert(0, clamp);
                }
                v
            }
        }
    }

    /// One-sided derivative `g'(s±)`; nonnegative since `g` is nondecreasing.
    pub fn g_prime(&self, s: f64, side: Side) -> f64 {
        let l = self.scale;
        let inv4l2 = 1.0 / (4.0 * l * l);
        let left = side == Side::Left;
        // `below(a, b)`: s is in the piece ending at breakpoint b.
        let below = |a: f64, b: f64| a < b || (a == b && left);
        match self.variant {
            Variant::StepExp | Variant::RampExp => {
                let a = s.abs();
                // Mirror the side for negative s so it refers to |s|.
                let left_a = if s < 0.0 { !left } else { left };
                let below = |b: f64| a < b || (a == b && left_a);
                if self.variant == Variant::RampExp && below(l) {
                    return (0.25 - self.log_inv_z).exp() / l;
                }
                if !below(self.u()) {
                    return 0.0;
                }
                let r = a / (2.0 * l);
                2.0 * a * inv4l2 * (r * r - self.log_inv_z).min(0.0).exp()
            }
            Variant::TransactionRamp { epsilon, horizon } => {
                let et = epsilon * horizon;
                let sat = et + self.u();
                if below(s, et) {
                    let clamp = -et * self.log_inv_z.exp();
                    if below(s, clamp) {
                        0.0
                    } else {
                        (-self.log_inv_z).exp() / et
                    }
                } else if below(s, sat) {
                    let d = s - et;
                    let r = d / (2.0 * l);
                    2.0 * d * inv4l2 * (r * r - self.log_inv_z).min(0.0).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Potential `Φ(x) = |∫₀ˣ g(s) ds|`.
    ///
    /// Adaptive Simpson on each smooth piece, exact linear growth where `g`
    /// is saturated.
    pub fn potential(&self, x: f64) -> f64 {
        if x == 0.0 || !x.is_finite() {
            return if x == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let f = |s: f64| self.g(s);
        let (lo, hi) = if x > 0.0 { (0.0, x) } else { (x, 0.0) };
        let mut cuts: Vec<f64> = self.breakpoints().into_iter().filter(|&b| b > lo && b < hi).collect();
        cuts.insert(0, lo);
        cuts.push(hi);
        let sat = self.saturation();
        // Below `neg_sat` the function is clamped at −1.
        let neg_sat = match self.variant {
            Variant::TransactionRamp { epsilon, horizon } => -epsilon * horizon * self.log_inv_z.exp(),
            _ => -sat,
        };
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a >= sat {
                total += b - a;
            } else if b <= neg_sat {
                total -= b - a;
            } else {
                total += adaptive_simpson(&f, a, b, POTENTIAL_TOL);
            }
        }
        total.abs()
    }

    /// Drift-condition slack at one deviation `x`:
    /// `max_{s∈[ρx−Δ, ρx+Δ]} g'(s)(s−x)²/2 − ρ̄·x·g(x)·h(x) − Z'`.
    ///
    /// The inner maximum uses `sub_points` equal intervals plus all
    /// breakpoints inside the range, taking both one-sided limits there.
    pub fn drift_slack(&self, x: f64, z_prime: f64, delta: f64, sub_points: usize) -> f64 {
        let rho = self.rho();
        let a = rho * x - delta;
        let b = rho * x + delta;
        let val = |s: f64, side: Side| {
            let d = s - x;
            self.g_prime(s, side) * d * d * 0.5
        };
        let mut m = val(a, Side::Right).max(val(b, Side::Left));
        let h = (b - a) / sub_points as f64;
        for k in 1..sub_points {
            let s = a + k as f64 * h;
            m = m.max(val(s, Side::Right));
        }
        for bp in self.breakpoints() {
            if bp > a && bp < b {
                m = m.max(val(bp, Side::Left)).max(val(bp, Side::Right));
            }
        }
        m - self.rho_bar() * x * self.g(x) * self.h(x) - z_prime
    }

    /// Scans the drift condition over `[lo − 2, hi + 2]` where `[lo, hi]` is
    /// the non-saturated range (`[−U, U]` for the odd shapes).
    pub fn check_drift_condition(&self, z_prime: f64, delta: f64, grid_step: f64) -> Result<DriftReport> {
        finite("Z'", z_prime)?;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(invalid("Delta", format!("must lie in (0, 1], got {delta}")));
        }
        if !(grid_step > 0.0 && grid_step <= 1e-2) {
            return Err(invalid("grid_step", format!("must lie in (0, 1e-2], got {grid_step}")));
        }
        let (lo, hi) = match self.variant {
            Variant::TransactionRamp { .. } => (-self.u() - 2.0, self.saturation() + 2.0),
            _ => (-self.u() - 2.0, self.u() + 2.0),
        };
        let points = ((hi - lo) / grid_step).floor() as usize + 1;
        let u = self.u();
        let rho = self.rho();
        // Points just past saturation whose next step can fall back inside.
        let edge = |x: f64| {
            let a = x.abs();
            a >= u && rho * a - delta < u
        };
        const SUB: usize = 100;
        const CHUNK: usize = 4096;
        let chunks = points.div_ceil(CHUNK);
        let partial: Vec<Worst> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut w = Worst::default();
                let end = ((c + 1) * CHUNK).min(points);
                for i in c * CHUNK..end {
                    let x = lo + i as f64 * grid_step;
                    let v = self.drift_slack(x, z_prime, delta, SUB);
                    w.push(x, v, edge(x));
                }
                w
            })
            .collect();
        let mut w = Worst::default();
        for p in partial {
            w.merge(p);
        }
        Ok(DriftReport {
            grid_lo: lo,
            grid_hi: lo + (points - 1) as f64 * grid_step,
            grid_step,
            grid_points: points,
            max_violation: w.all.0,
            worst_x: w.all.1,
            max_violation_off_edge: w.off_edge.0,
            worst_x_off_edge: w.off_edge.1,
            z_prime,
            delta,
        })
    }
}

#[derive(Clone, Copy)]
struct Worst {
    all: (f64, f64),
    off_edge: (f64, f64),
}

impl Default for Worst {
    fn default() -> Self {
        Self {
            all: (f64::NEG_INFINITY, f64::NAN),
            off_edge: (f64::NEG_INFINITY, f64::NAN),
        }
    }
}

impl Worst {
    fn push(&mut self, x: f64, v: f64, on_edge: bool) {
        if v > self.all.0 {
            self.all = (v, x);
        }
        if !on_edge && v > self.off_edge.0 {
            self.off_edge = (v, x);
        }
    }

    fn merge(&mut self, o: Worst) {
        if o.all.0 > self.all.0 {
            self.all = o.all;
        }
        if o.off_edge.0 > self.off_edge.0 {
            self.off_edge = o.off_edge;
        }
    }
}

/// Result of a drift-condition scan. Positive violations mean the condition
/// fails somewhere on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// First grid point.
    pub grid_lo: f64,
    /// Last grid point.
    pub grid_hi: f64,
    pub grid_step: f64,
    pub grid_points: usize,
    /// Maximum slack over the grid.
    pub max_violation: f64,
    /// Grid point attaining `max_violation`.
    pub worst_x: f64,
    /// Maximum slack excluding the saturation edge `U ≤ |x| < (U+Δ)/ρ`.
    pub max_violation_off_edge: f64,
    pub worst_x_off_edge: f64,
    /// Per-step loss allowance used.
    pub z_prime: f64,
    /// Maximum step magnitude used.
    pub delta: f64,
}

/// Parameters tuned for horizon `T` and regret rate `ε`: `Z = e^{−ε²T}`,
/// `n = T`, `L = √T`, ramp shape.
pub fn derive_params(horizon: f64, epsilon: f64) -> Result<ConfidenceParams> {
    finite("T", horizon)?;
    finite("epsilon", epsilon)?;
    if !(horizon >= 1.0) {
        return Err(invalid("T", format!("horizon must be at least 1, got {horizon}")));
    }
    let min_eps = 1.0 / horizon.sqrt();
    if epsilon < min_eps * (1.0 - REL_SLACK) {
        return Err(Error::Precondition(format!(
            "epsilon = {epsilon} is below 1/sqrt(T) = {min_eps}"
        )));
    }
    let log_inv_z = (epsilon * epsilon * horizon).max(MIN_LOG_INV_Z);
    ConfidenceParams::from_log_inv_z(log_inv_z, horizon.sqrt(), horizon, Variant::RampExp)
}
