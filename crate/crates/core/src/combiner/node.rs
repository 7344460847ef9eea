use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceParams;
use crate::error::{bounded, Result};

/// Update rule of a combination node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRule {
    /// Always `x ← ρ·x + (s2 − s1)`.
    Plain,
    /// Stops growing `x` once saturated in the improver's favour.
    Clipped,
}

/// Discount used by a combination node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeDiscount {
    /// `ρ = 1 − 1/n`.
    Constant,
    /// `ρ = 1 − |d/2|^p / n` where `d = s2 − s1`.
    PNorm { p: f64 },
}

/// Mixture weight of the improver: `g(x/2)` for `x > 0`, else 0.
pub fn g_bar(params: &ConfidenceParams, x: f64) -> f64 {
    if x > 0.0 {
        params.g(x / 2.0)
    } else {
        0.0
    }
}

/// Result of one pairwise step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStep {
    /// `(1 − p2)·s1 + p2·s2`.
    pub mixed: f64,
    /// Weight `p2` on the improver, fixed before the payoffs were seen.
    pub weight: f64,
}

/// Combines a base strategy (left) with an improver (right).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinerNode {
    params: ConfidenceParams,
    rule: NodeRule,
    discount: NodeDiscount,
    x: f64,
    t: u64,
}

impl CombinerNode {
    pub fn new(params: ConfidenceParams, rule: NodeRule) -> Self {
        Self {
            params,
            rule,
            discount: NodeDiscount::Constant,
            x: 0.0,
            t: 0,
        }
    }

    pub fn with_discount(mut self, discount: NodeDiscount) -> Self {
        self.discount = discount;
        self
    }

    pub fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    pub fn rule(&self) -> NodeRule {
        self.rule
    }

    pub fn discount(&self) -> NodeDiscount {
        self.discount
    }

    /// Deviation over the difference stream `s2 − s1`.
    pub fn deviation(&self) -> f64 {
        self.x
    }

    /// Current improver weight.
    pub fn weight(&self) -> f64 {
        g_bar(&self.params, self.x)
    }

    /// Validated pairwise step.
    pub fn combine_pair_step(&mut self, s1: f64, s2: f64) -> Result<PairStep> {
        let t = self.t + 1;
        bounded(t, s1, 1.0)?;
        bounded(t, s2, 1.0)?;
        let weight = self.weight();
        let mixed = (1.0 - weight) * s1 + weight * s2;
        self.update(s2 - s1);
        Ok(PairStep { mixed, weight })
    }

    /// Moves the deviation by the payoff difference `d = s2 − s1`.
    pub(crate) fn update(&mut self, d: f64) {
        self.t += 1;
        let half = 0.5 * d;
        let rho = match self.discount {
            NodeDiscount::Constant => self.params.rho(),
            NodeDiscount::PNorm { p } => 1.0 - half.abs().powf(p) / self.params.n(),
        };
        let keep = match self.rule {
            NodeRule::Plain => true,
            NodeRule::Clipped => {
                let y = 0.5 * self.x;
                y.abs() < self.params.u() || self.params.g(y) * d < 0.0
            }
        };
        self.x = if keep { rho * self.x + d } else { rho * self.x };
    }
}
