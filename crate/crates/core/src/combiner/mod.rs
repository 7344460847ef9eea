//! Strategy combination.
//!
//! A [`CombinerNode`] mixes a protected base strategy with an improver using
//! the weight `ḡ(x) = g(x/2)·1[x > 0]` of the discounted payoff difference.
//! Trees of nodes combine many strategies bottom-up; the
//! [`windowed_regret_audit`] measures regret of the root against any
//! assignment of strategies to time intervals.

mod node;
mod tree;

pub use node::{g_bar, CombinerNode, NodeDiscount, NodeRule, PairStep};
pub use tree::{
    build_multiscale_tree, build_multiscale_tree_with, build_unbalanced_tree, multiscale_exponents, ComparisonTree,
    Layout, LayoutRecord, LeafPath, Level, MultiScaleOptions, NodeConfig, TreeStep,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::kahan_sum;

/// Half-open step range `[start, end)` assigned to one strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub strategy: usize,
}

/// Regret of the root on one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRegret {
    pub interval: Interval,
    /// Assigned strategy's payoff minus the root payoff.
    pub regret: f64,
}

/// Outcome of a windowed regret audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedRegretReport {
    pub intervals: Vec<IntervalRegret>,
    pub total_regret: f64,
    /// `c·Σ_j sqrt(|I_j|·ln(N·T))`.
    pub bound: f64,
    pub c: f64,
    pub pass: bool,
}

/// Per-interval regret of `root` against the strategies assigned by
/// `partition`, which must cover `0..T` with disjoint, ordered intervals.
///
/// `rows[t][i]` is strategy `i`'s payoff at step `t`.
pub fn windowed_regret_audit(
    root: &[f64],
    rows: &[Vec<f64>],
    partition: &[Interval],
    c: f64,
) -> Result<WindowedRegretReport> {
    let t = root.len();
    if rows.len() != t {
        return Err(Error::Dimension {
            expected: t,
            got: rows.len(),
        });
    }
    let n = rows.first().map_or(1, Vec::len).max(1);
    let mut cursor = 0usize;
    for iv in partition {
        if iv.start != cursor {
            return Err(invalid(
                "partition",
                format!("interval starting at {} leaves a gap or overlap at {cursor}", iv.start),
            ));
        }
        if iv.end <= iv.start {
            return Err(invalid("partition", format!("empty interval at {}", iv.start)));
        }
        if iv.strategy >= n {
            return Err(invalid("partition", format!("strategy {} out of range", iv.strategy)));
        }
        cursor = iv.end;
    }
    if cursor != t {
        return Err(invalid(
            "partition",
            format!("intervals cover 0..{cursor}, not the whole horizon 0..{t}"),
        ));
    }
    let log_nt = ((n * t.max(1)) as f64).ln().max(f64::MIN_POSITIVE);
    let intervals: Vec<IntervalRegret> = partition
        .iter()
        .map(|&iv| IntervalRegret {
            interval: iv,
            regret: kahan_sum((iv.start..iv.end).map(|s| rows[s][iv.strategy] - root[s])),
        })
        .collect();
    let total_regret = kahan_sum(intervals.iter().map(|r| r.regret));
    let bound = c * partition
        .iter()
        .map(|iv| ((iv.end - iv.start) as f64 * log_nt).sqrt())
        .sum::<f64>();
    Ok(WindowedRegretReport {
        intervals,
        total_regret,
        bound,
        c,
        pass: total_regret <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(start: usize, end: usize, strategy: usize) -> Interval {
        Interval { start, end, strategy }
    }

    #[test]
    fn single_interval_is_total_regret() {
        let rows = vec![vec![1.0, 0.0]; 10];
        let root = vec![0.25; 10];
        let r = windowed_regret_audit(&root, &rows, &[iv(0, 10, 0)], 1.0).unwrap();
        assert!((r.total_regret - 7.5).abs() < 1e-12);
    }

    #[test]
    fn partition_must_cover() {
        let rows = vec![vec![0.0]; 10];
        let root = vec![0.0; 10];
        assert!(windowed_regret_audit(&root, &rows, &[iv(0, 5, 0)], 1.0).is_err());
        assert!(windowed_regret_audit(&root, &rows, &[iv(0, 6, 0), iv(5, 10, 0)], 1.0).is_err());
        assert!(windowed_regret_audit(&root, &rows, &[iv(0, 4, 0), iv(5, 10, 0)], 1.0).is_err());
        assert!(windowed_regret_audit(&root, &rows, &[iv(0, 5, 0), iv(5, 10, 0)], 1.0).is_ok());
    }
}
