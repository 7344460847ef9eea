use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::generate::Generator;
use super::probe::lower_bound_probe;
use crate::bandit::{read_reward_matrix, BanditOptions, BanditState};
use crate::combiner::{build_multiscale_tree_with, windowed_regret_audit, Interval, MultiScaleOptions};
use crate::confidence::{derive_params, ConfidenceParams, Variant, WINDOW_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::oco::{
    adaptive_grid_run, eta_grid, greedy_projection, shift_bound, static_regret_bound, EtaSchedule, FeasibleSet,
    LossFamily, Scenario,
};
use crate::predictor::{run, tuned_gain_floor, tuned_loss_bound, RunConfig, Trace, TraceStep};
use crate::randomized::{cost_params, loss_tail_probe, run_with_costs, RandomizedBetState, StopRule};
use crate::rng;
use crate::uniformity::{audit, AuditConfig};

/// Trace CSV schema tag.
pub const TRACE_VERSION: &str = "#lhv1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Predict,
    Combine,
    Bandit,
    Oco,
    Audit,
    Probe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Predict => "predict",
            Self::Combine => "combine",
            Self::Bandit => "bandit",
            Self::Oco => "oco",
            Self::Audit => "audit",
            Self::Probe => "probe",
        }
    }
}

/// Confidence shape selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Step,
    Ramp,
}

/// A fully serializable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub generator: Generator,
    pub horizon: usize,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub z: Option<f64>,
    /// Window `n`; defaults to `T`.
    #[serde(default)]
    pub window: Option<f64>,
    /// Strategies or arms.
    #[serde(default = "default_strategies")]
    pub strategies: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Per-trade cost; a positive value switches `predict` to randomized bets.
    #[serde(default)]
    pub cost: f64,
    #[serde(default = "default_shape")]
    pub variant: Shape,
    /// Post hoc partition size for `combine`.
    #[serde(default)]
    pub intervals: Option<usize>,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub rewards: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_strategies() -> usize {
    3
}

fn default_trials() -> usize {
    1000
}

fn default_shape() -> Shape {
    Shape::Ramp
}

impl ExperimentSpec {
    pub fn new(command: Command, generator: Generator, horizon: usize) -> Self {
        Self {
            command,
            generator,
            horizon,
            epsilon: None,
            z: None,
            window: None,
            strategies: default_strategies(),
            seed: 0,
            trials: default_trials(),
            cost: 0.0,
            variant: default_shape(),
            intervals: None,
            scenario: None,
            rewards: None,
            out: None,
        }
    }

    /// Predictor parameters from `ε` (tuned) or from `Z` and the window.
    pub fn params(&self) -> Result<ConfidenceParams> {
        self.params_for(self.horizon)
    }

    /// [`params`](Self::params) for a sequence of length `horizon`.
    pub fn params_for(&self, horizon: usize) -> Result<ConfidenceParams> {
        let t = horizon.max(1) as f64;
        match (self.epsilon, self.z) {
            (Some(_), Some(_)) => Err(invalid("epsilon, Z", "give one of epsilon or Z, not both")),
            (Some(eps), None) => {
                let p = derive_params(t, eps)?;
                match self.variant {
                    Shape::Ramp => Ok(p),
                    Shape::Step => ConfidenceParams::from_log_inv_z(p.log_inv_z(), p.l(), p.n(), Variant::StepExp),
                }
            }
            (None, z) => {
                let n = self.window.unwrap_or(t);
                let v = match self.variant {
                    Shape::Ramp => Variant::RampExp,
                    Shape::Step => Variant::StepExp,
                };
                ConfidenceParams::new(z.unwrap_or(1e-4), n.sqrt(), n, v)
            }
        }
    }
}

/// A named bound check in a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub relation: String,
    pub pass: bool,
}

impl BoundCheck {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            relation: "<=".into(),
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            relation: ">=".into(),
            pass: value >= threshold,
        }
    }
}

/// Artifacts of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: Value,
    pub trace_csv: String,
    pub report: String,
    /// Additional files, by name.
    pub extra: Vec<(String, String)>,
    pub checks: Vec<BoundCheck>,
}

impl ExperimentOutput {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Writes `trace.csv`, `summary.json`, `report.txt` and any extras.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |p: &Path, e: std::io::Error| Error::Parse(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut files = vec![
            ("trace.csv".to_string(), self.trace_csv.clone()),
            (
                "summary.json".to_string(),
                serde_json::to_string_pretty(&self.summary)? + "\n",
            ),
            ("report.txt".to_string(), self.report.clone()),
        ];
        files.extend(self.extra.iter().cloned());
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

fn header(spec: &ExperimentSpec, columns: &str) -> String {
    format!(
        "{TRACE_VERSION} command={} generator={} rng={} seed={}\n{columns}\n",
        spec.command.name(),
        spec.generator,
        rng::RNG_NAME,
        spec.seed
    )
}

fn report_text(spec: &ExperimentSpec, lines: &[(String, String)], checks: &[BoundCheck]) -> String {
    let mut s = format!(
        "{} T={} seed={} generator={}\n",
        spec.command.name(),
        spec.horizon,
        spec.seed,
        spec.generator
    );
    for (k, v) in lines {
        let _ = writeln!(s, "{k}: {v}");
    }
    for c in checks {
        let _ = writeln!(
            s,
            "{} {}: {} {} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.threshold
        );
    }
    s
}

/// Writes a deterministic predictor trace as versioned CSV.
pub fn trace_to_csv(trace: &Trace, first_line: &str) -> String {
    let mut s = String::with_capacity(64 * trace.steps.len() + 128);
    s.push_str(first_line);
    s.push('\n');
    s.push_str("t,b,confidence,x,x_next,gain,phi,rho,banked\n");
    for st in &trace.steps {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            st.t,
            st.b,
            st.confidence,
            st.x,
            st.x_next,
            st.gain,
            st.phi,
            st.rho,
            u8::from(st.banked)
        );
    }
    s
}

/// Parses a CSV written by [`trace_to_csv`].
pub fn trace_from_csv(text: &str) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut steps = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse(format!("trace row has {} fields", rec.len())))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("trace field {i}: {e}")))
        };
        steps.push(TraceStep {
            t: f(0)? as u64,
            b: f(1)?,
            confidence: f(2)?,
            x: f(3)?,
            x_next: f(4)?,
            gain: f(5)?,
            phi: f(6)?,
            rho: f(7)?,
            banked: f(8)? != 0.0,
        });
    }
    Ok(Trace::from_steps(1.0, steps))
}

/// Runs one experiment and, if `spec.out` is set, writes its artifacts there.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let out = match spec.command {
        Command::Predict => predict(spec)?,
        Command::Combine => combine(spec)?,
        Command::Bandit => bandit(spec)?,
        Command::Oco => oco(spec)?,
        Command::Audit => audit_cmd(spec)?,
        Command::Probe => probe(spec)?,
    };
    if let Some(dir) = &spec.out {
        out.write_to(dir)?;
    }
    Ok(out)
}

fn params_json(p: &ConfidenceParams) -> Value {
    json!({
        "variant": p.variant(),
        "Z": p.z(),
        "log_inv_z": p.log_inv_z(),
        "L": p.l(),
        "n": p.n(),
        "U": p.u(),
    })
}

fn predict(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let seq = spec.generator.generate(spec.horizon, spec.seed, 0)?;
    if spec.cost > 0.0 {
        return predict_with_costs(spec, &seq);
    }
    let horizon = if seq.is_empty() { spec.horizon } else { seq.len() };
    let params = spec.params_for(horizon)?;
    let trace = run(&seq, &RunConfig::plain(params))?;
    let s = trace.summary;
    let t = seq.len() as f64;
    let mut checks = Vec::new();
    if let Some(eps) = spec.epsilon {
        if t > 0.0 {
            checks.push(BoundCheck::at_least(
                "gain_vs_tuned_floor",
                s.final_gain,
                tuned_gain_floor(s.sum_b, t, eps),
            ));
            checks.push(BoundCheck::at_most(
                "regret_to_S_plus",
                s.sum_b - s.final_gain,
                4.0 * eps * t + tuned_loss_bound(t, eps),
            ));
            checks.push(BoundCheck::at_most(
                "max_prefix_loss",
                s.max_prefix_loss,
                tuned_loss_bound(t, eps),
            ));
        }
    }
    let summary = json!({
        "command": "predict",
        "generator": spec.generator.to_string(),
        "horizon": seq.len(),
        "seed": spec.seed,
        "params": params_json(&params),
        "final_gain": s.final_gain,
        "max_prefix_loss": s.max_prefix_loss,
        "max_abs_x": s.max_abs_x,
        "sum_b": s.sum_b,
        "regret_to_S_plus": s.sum_b - s.final_gain,
        "regret_to_S_minus": -s.sum_b - s.final_gain,
        "regret_to_S_0": -s.final_gain,
        "checks": checks,
        "pass": checks.iter().all(|c| c.pass),
    });
    let lines = vec![
        ("final_gain".into(), s.final_gain.to_string()),
        ("max_prefix_loss".into(), s.max_prefix_loss.to_string()),
        ("regret_to_S_plus".into(), (s.sum_b - s.final_gain).to_string()),
    ];
    let first = header(spec, "").trim_end().to_string();
    Ok(ExperimentOutput {
        summary,
        trace_csv: trace_to_csv(&trace, &first),
        report: report_text(spec, &lines, &checks),
        extra: Vec::new(),
        checks,
    })
}

fn predict_with_costs(spec: &ExperimentSpec, seq: &[f64]) -> Result<ExperimentOutput> {
    let t = seq.len().max(1) as f64;
    let params = cost_params(spec.cost, t, spec.z.map_or(1e-4f64.recip().ln(), |z| -z.ln()))?;
    let eps = 2.0 * spec.cost;
    let stop = StopRule::tuned(eps)?;
    let trace = run_with_costs(seq, params, spec.cost, Some(stop), spec.seed, true)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    let s = trace.summary;
    let checks = vec![BoundCheck::at_most(
        "max_loss_vs_stop",
        s.max_loss,
        stop.threshold + 1.0,
    )];
    let summary = json!({
        "command": "predict",
        "generator": spec.generator.to_string(),
        "horizon": seq.len(),
        "seed": spec.seed,
        "cost": spec.cost,
        "params": params_json(&params),
        "gross_gain": s.gross_gain,
        "net_gain": s.net_gain,
        "total_cost": s.total_cost,
        "trades": s.trades,
        "stopped_at": s.stopped_at,
        "stop_threshold": stop.threshold,
        "max_prefix_loss": s.max_loss,
        "regret_to_S_plus": seq.iter().sum::<f64>() - s.net_gain,
        "checks": checks,
        "pass": checks.iter().all(|c| c.pass),
    });
    let lines = vec![
        ("net_gain".into(), s.net_gain.to_string()),
        ("trades".into(), s.trades.to_string()),
    ];
    Ok(ExperimentOutput {
        summary,
        trace_csv: String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))?,
        report: report_text(spec, &lines, &checks),
        extra: Vec::new(),
        checks,
    })
}

/// Per-strategy payoff rows. Under the shifting generator strategy `i` sees
/// the levels rotated by `i`, so each interval has a different leader.
pub fn strategy_rows(generator: &Generator, n: usize, horizon: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let g = match generator {
                Generator::Shifting { k, levels } => {
                    let mut l = levels.clone();
                    l.rotate_left(i % levels.len());
                    Generator::Shifting { k: *k, levels: l }
                }
                other => other.clone(),
            };
            g.generate(horizon, seed, i as u64 + 1)
        })
        .collect::<Result<_>>()?;
    let t = cols.iter().map(Vec::len).min().unwrap_or(0);
    Ok((0..t).map(|s| cols.iter().map(|c| c[s]).collect()).collect())
}

/// Post hoc partition into `k` equal intervals, each assigned to its best
/// strategy.
pub fn best_partition(rows: &[Vec<f64>], k: usize) -> Vec<Interval> {
    let t = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    Generator::intervals(k.clamp(1, t.max(1)), t)
        .into_iter()
        .filter(|(a, b)| b > a)
        .map(|(a, b)| {
            let strategy = (0..n)
                .max_by(|&i, &j| {
                    let si: f64 = rows[a..b].iter().map(|r| r[i]).sum();
                    let sj: f64 = rows[a..b].iter().map(|r| r[j]).sum();
                    si.total_cmp(&sj)
                })
                .unwrap_or(0);
            Interval {
                start: a,
                end: b,
                strategy,
            }
        })
        .collect()
}

fn tree_log_inv_z(spec: &ExperimentSpec, n: usize) -> f64 {
    spec.z
        .map(|z| -z.ln())
        .unwrap_or_else(|| 2.0 * ((n * spec.horizon.max(2)) as f64).ln())
}

fn combine(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let n = spec.strategies;
    let rows = strategy_rows(&spec.generator, n, spec.horizon, spec.seed)?;
    let lz = tree_log_inv_z(spec, n);
    let mut tree = build_multiscale_tree_with(n, rows.len().max(2), lz, MultiScaleOptions::default())?;
    let mut w = vec![0.0; n];
    let mut csv = header(spec, &{
        let mut c = String::from("t,root");
        (0..n).for_each(|i| {
            let _ = write!(c, ",w{i}");
        });
        (0..n).for_each(|i| {
            let _ = write!(c, ",s{i}");
        });
        c
    });
    let mut root = Vec::with_capacity(rows.len());
    for (t, r) in rows.iter().enumerate() {
        let p = tree.step_into(r, &mut w)?;
        root.push(p);
        let _ = write!(csv, "{},{p:?}", t + 1);
        w.iter().for_each(|v| {
            let _ = write!(csv, ",{v:?}");
        });
        r.iter().for_each(|v| {
            let _ = write!(csv, ",{v:?}");
        });
        csv.push('\n');
    }
    let k = spec.intervals.unwrap_or(match &spec.generator {
        Generator::Shifting { k, .. } => *k,
        _ => 1,
    });
    let partition = best_partition(&rows, k);
    let audit_report = windowed_regret_audit(&root, &rows, &partition, super::calibration::A5_C)?;
    let totals: Vec<f64> = (0..n).map(|i| rows.iter().map(|r| r[i]).sum()).collect();
    let root_total: f64 = root.iter().sum();
    let checks = vec![BoundCheck::at_most(
        "windowed_regret",
        audit_report.total_regret,
        audit_report.bound,
    )];
    let summary = json!({
        "command": "combine",
        "generator": spec.generator.to_string(),
        "horizon": rows.len(),
        "seed": spec.seed,
        "strategies": n,
        "log_inv_z": lz,
        "root_gain": root_total,
        "strategy_gains": totals,
        "regret_to_each": totals.iter().map(|s| s - root_total).collect::<Vec<_>>(),
        "layout": serde_json::from_str::<Value>(&tree.to_layout_json())?,
        "interval_regrets": audit_report.intervals,
        "windowed_regret": audit_report.total_regret,
        "windowed_bound": audit_report.bound,
        "checks": checks,
        "pass": checks.iter().all(|c| c.pass),
    });
    let mut lines = vec![("root_gain".into(), root_total.to_string())];
    for r in &audit_report.intervals {
        lines.push((
            format!(
                "interval [{}, {}) strategy {}",
                r.interval.start, r.interval.end, r.interval.strategy
            ),
            r.regret.to_string(),
        ));
    }
    Ok(ExperimentOutput {
        summary,
        trace_csv: csv,
        report: report_text(spec, &lines, &checks),
        extra: Vec::new(),
        checks,
    })
}

fn bandit(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let matrix = match &spec.rewards {
        Some(p) => Some(read_reward_matrix(p)?),
        None => None,
    };
    let n = matrix
        .as_ref()
        .and_then(|m| m.first().map(Vec::len))
        .unwrap_or(spec.strategies);
    let horizon = matrix.as_ref().map_or(spec.horizon, Vec::len);
    let means: Vec<f64> = (0..n).map(|i| if i == 0 { 0.7 } else { 0.5 }).collect();
    let lz = spec
        .z
        .map(|z| -z.ln())
        .unwrap_or_else(|| 2.0 * ((n * horizon.max(1)) as f64).ln() + 1.0);
    let strict = BanditState::with_options(n, horizon, lz, BanditOptions::default(), rng::stream(spec.seed, 0));
    let waived = strict.is_err();
    let mut st = match strict {
        Ok(s) => s,
        Err(_) => BanditState::with_options(
            n,
            horizon,
            lz,
            BanditOptions {
                waive_window_floor: true,
            },
            rng::stream(spec.seed, 0),
        )?,
    };
    let mut coins = rng::stream(spec.seed, 1);
    let mut csv = header(spec, "t,arm,reward,probability");
    let mut sums = vec![0.0; n];
    let mut pseudo = 0.0;
    for t in 0..horizon {
        let row: Vec<f64> = match &matrix {
            Some(m) => m[t].clone(),
            None => means
                .iter()
                .map(|&m| {
                    if rand::Rng::random::<f64>(&mut coins) < m {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        };
        sums.iter_mut().zip(&row).for_each(|(a, b)| *a += b);
        let s = st.step_row(&row)?;
        if matrix.is_none() {
            pseudo += means[s.arm];
        }
        let _ = writeln!(csv, "{},{},{:?},{:?}", s.t, s.arm, s.reward, s.probability);
    }
    let best = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let average = sums.iter().sum::<f64>() / n as f64;
    let mut summary = json!({
        "command": "bandit",
        "horizon": horizon,
        "arms": n,
        "seed": spec.seed,
        "log_inv_z": lz,
        "gamma": st.gamma(),
        "inner_window": st.inner_window(),
        "window_floor": WINDOW_FLOOR * lz,
        "window_floor_waived": waived,
        "cum_reward": st.cum_reward(),
        "best_arm_reward": best,
        "regret_to_best_arm": best - st.cum_reward(),
        "gain_vs_average": st.cum_reward() - average,
        "final_p": st.probabilities(),
        "checks": [],
        "pass": true,
    });
    if matrix.is_none() {
        summary["arm_means"] = json!(means);
        summary["pseudo_regret"] = json!(0.7 * horizon as f64 - pseudo);
    }
    let lines = vec![
        ("cum_reward".into(), st.cum_reward().to_string()),
        ("regret_to_best_arm".into(), (best - st.cum_reward()).to_string()),
        ("gamma".into(), st.gamma().to_string()),
    ];
    Ok(ExperimentOutput {
        summary,
        trace_csv: csv,
        report: report_text(spec, &lines, &[]),
        extra: Vec::new(),
        checks: Vec::new(),
    })
}

fn oco(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let scenario = match &spec.scenario {
        Some(p) => Scenario::read(p)?,
        None => Scenario::shifting(
            FeasibleSet::cube(2, 1.0),
            LossFamily::Quadratic,
            spec.horizon,
            spec.intervals.unwrap_or(4),
            0.3,
            spec.seed,
        )?,
    };
    let z = scenario.targets();
    let lz = spec.z.map_or(1e3f64.ln(), |v| -v.ln());
    let gp = greedy_projection(&scenario, &z, EtaSchedule::InvSqrt)?;
    let grid = adaptive_grid_run(&scenario, &z, &eta_grid(scenario.horizon), lz)?;
    let comparator = scenario.piecewise_comparator(&z);
    let bound = shift_bound(&scenario, &z, &comparator, lz);
    let g = scenario.gradient_bound(&z);
    let static_bound = static_regret_bound(scenario.set.diameter(), g, scenario.horizon);
    let gp_static = gp.static_regret(&scenario, &z);
    let checks = vec![BoundCheck::at_most("gp_static_regret", gp_static, static_bound)];
    let mut csv = header(spec, "t,loss_combined,loss_gp,x_combined");
    for (t, (lc, lg)) in grid.combined.losses.iter().zip(&gp.losses).enumerate() {
        let x: Vec<String> = grid.combined.points[t].iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(csv, "{},{lc:?},{lg:?},{}", t + 1, x.join(" "));
    }
    let summary = json!({
        "command": "oco",
        "horizon": scenario.horizon,
        "seed": spec.seed,
        "scenario": scenario,
        "log_inv_z": lz,
        "gp_static_regret": gp_static,
        "gp_static_bound": static_bound,
        "grid_static_regret": grid.combined.static_regret(&scenario, &z),
        "grid_dynamic_regret": grid.combined.regret_against(&scenario, &z, &comparator),
        "gp_dynamic_regret": gp.regret_against(&scenario, &z, &comparator),
        "comparator_path_length": crate::oco::path_length(&comparator),
        "shift_bound": bound,
        "leaf_losses": grid.leaf_losses,
        "etas": grid.etas,
        "window_exponents": grid.window_exponents,
        "max_jensen_gap": grid.max_jensen_gap,
        "checks": checks,
        "pass": checks.iter().all(|c| c.pass),
    });
    let lines = vec![
        ("gp_static_regret".into(), gp_static.to_string()),
        (
            "grid_dynamic_regret".into(),
            grid.combined.regret_against(&scenario, &z, &comparator).to_string(),
        ),
    ];
    Ok(ExperimentOutput {
        summary,
        trace_csv: csv,
        report: report_text(spec, &lines, &checks),
        extra: Vec::new(),
        checks,
    })
}

fn audit_cmd(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let n = spec.strategies;
    let rows = strategy_rows(&spec.generator, n, spec.horizon, spec.seed)?;
    let t = rows.len();
    let lz = tree_log_inv_z(spec, n);
    let mut tree = build_multiscale_tree_with(n, t.max(2), lz, MultiScaleOptions::default())?;
    let root = tree.run(&rows)?;
    let c = super::calibration::A6_C;
    let mut cfg = AuditConfig::new(lz, n, t, c);
    cfg.seed = spec.seed;
    let mut reports = Vec::new();
    let mut extra = Vec::new();
    for i in 0..n {
        let residual: Vec<f64> = rows.iter().zip(&root).map(|(r, s)| r[i] - s).collect();
        let rep = audit(&residual, &cfg)?;
        let mut buf = Vec::new();
        rep.write_csv(&mut buf)?;
        extra.push((
            format!("uniformity_{i}.csv"),
            String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))?,
        ));
        reports.push(rep);
    }
    let checks: Vec<BoundCheck> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| BoundCheck::at_most(&format!("uniformity_s{i}"), r.worst_ratio, c))
        .collect();
    let mut csv = header(spec, "t,root");
    for (k, v) in root.iter().enumerate() {
        let _ = writeln!(csv, "{},{v:?}", k + 1);
    }
    let summary = json!({
        "command": "audit",
        "horizon": t,
        "seed": spec.seed,
        "strategies": n,
        "log_inv_z": lz,
        "c": c,
        "worst_ratios": reports.iter().map(|r| r.worst_ratio).collect::<Vec<_>>(),
        "worst_scales": reports.iter().map(|r| r.worst_scale).collect::<Vec<_>>(),
        "reports": reports,
        "checks": checks,
        "pass": checks.iter().all(|c| c.pass),
    });
    let lines = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                format!("s{i} worst ratio"),
                format!("{} at n = {}", r.worst_ratio, r.worst_scale),
            )
        })
        .collect::<Vec<_>>();
    Ok(ExperimentOutput {
        summary,
        trace_csv: csv,
        report: report_text(spec, &lines, &checks),
        extra,
        checks,
    })
}

fn probe(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let z = spec.z.unwrap_or(1e-2);
    let lb = lower_bound_probe(spec.horizon, z, spec.trials, spec.seed)?;
    let eps = spec.epsilon.unwrap_or(0.1);
    let delta = 0.01;
    let trials = spec.trials.max((100.0 / delta) as usize);
    let t = spec.horizon as f64;
    let stop = StopRule::new(eps, delta, crate::randomized::STOP_MULTIPLIER)?;
    let params = cost_params(0.0, t, (eps * eps * t).max(1.0))?;
    let ours = loss_tail_probe(
        |i| Ok(RandomizedBetState::new(params, 0.0, rng::stream(spec.seed ^ 0x7a11, i))?.with_stop_rule(stop)),
        eps,
        delta,
        spec.horizon,
        trials,
        spec.seed,
    )?;
    let checks = vec![
        BoundCheck::at_most("tail_q99_vs_stop", ours.loss_quantile, stop.threshold + 1.0),
        BoundCheck::at_least(
            "splus_binomial_quantiles",
            lb.splus_quantiles.iter().filter(|c| c.pass).count() as f64,
            lb.splus_quantiles.len() as f64,
        ),
    ];
    let mut csv = header(spec, "q,payoff,expected_cdf,empirical_cdf,sigma,pass");
    for c in &lb.splus_quantiles {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.q,
            c.payoff,
            c.expected_cdf,
            c.empirical_cdf,
            c.sigma,
            u8::from(c.pass)
        );
    }
    let summary = json!({
        "command": "probe",
        "lower_bound": lb,
        "loss_tail": ours,
        "stop_threshold": stop.threshold,
        "checks": checks,
        "pass": checks.iter().all(|c| c.pass),
    });
    let lines = vec![
        (
            "exceedance".into(),
            format!("{} (95% CI {:?})", lb.exceed_prob, lb.exceed_ci),
        ),
        (
            "loss q99".into(),
            format!("{} (CI {:?})", ours.loss_quantile, ours.quantile_ci),
        ),
    ];
    Ok(ExperimentOutput {
        summary,
        trace_csv: csv,
        report: report_text(spec, &lines, &checks),
        extra: Vec::new(),
        checks,
    })
}

/// Writes `text` to `path`, naming the path on failure.
pub fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_all_ones_meets_regret_bound() {
        let mut spec = ExperimentSpec::new(Command::Predict, Generator::Constant { value: 1.0 }, 10_000);
        spec.epsilon = Some(0.05);
        let out = run_experiment(&spec).unwrap();
        assert!(out.pass(), "{}", out.report);
        let r = out.summary["regret_to_S_plus"].as_f64().unwrap();
        assert!(r <= 4.0 * 0.05 * 10_000.0);
    }

    #[test]
    fn empty_sequence_file_gives_empty_trace() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.txt");
        std::fs::write(&p, "").unwrap();
        let mut spec = ExperimentSpec::new(Command::Predict, Generator::File { path: p }, 10_000);
        spec.out = Some(dir.path().join("out"));
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.summary["final_gain"].as_f64(), Some(0.0));
        let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 2);
        assert!(dir.path().join("out/summary.json").exists());
        assert!(dir.path().join("out/report.txt").exists());
    }

    #[test]
    fn trace_csv_round_trips_to_identical_summary() {
        let mut spec = ExperimentSpec::new(Command::Predict, Generator::Bernoulli { p: 0.6 }, 3000);
        spec.z = Some(1e-3);
        spec.seed = 4;
        let out = run_experiment(&spec).unwrap();
        let trace = trace_from_csv(&out.trace_csv).unwrap();
        let again = run(
            &spec.generator.generate(3000, 4, 0).unwrap(),
            &RunConfig::plain(spec.params().unwrap()),
        )
        .unwrap();
        assert_eq!(trace.summary, again.summary);
        assert_eq!(trace.steps, again.steps);
    }

    #[test]
    fn identical_specs_give_identical_bytes() {
        let mut spec = ExperimentSpec::new(Command::Combine, "shifting:3:0.5,0,-0.5".parse().unwrap(), 2000);
        spec.seed = 9;
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.trace_csv, b.trace_csv);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn combine_reports_interval_regrets() {
        let mut spec = ExperimentSpec::new(Command::Combine, "shifting:3:0.6,-0.6,0".parse().unwrap(), 6000);
        spec.strategies = 3;
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.summary["interval_regrets"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn spec_json_round_trip() {
        let mut spec = ExperimentSpec::new(Command::Oco, Generator::Bernoulli { p: 0.5 }, 100);
        spec.z = Some(1e-3);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn params_from_epsilon_or_z() {
        let mut spec = ExperimentSpec::new(Command::Predict, Generator::Constant { value: 1.0 }, 10_000);
        spec.epsilon = Some(0.1);
        assert!((spec.params().unwrap().u() - 2000.0).abs() < 1e-9);
        spec.z = Some(1e-3);
        assert!(spec.params().is_err());
    }
}
