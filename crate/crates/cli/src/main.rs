use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lossless_hedge::harness::{
    calibration, criteria, run_experiment, Command, ExperimentSpec, Generator, Mutation, Shape,
};

#[derive(Parser)]
#[command(
    name = "lossless-hedge",
    version,
    about = "Bounded-loss online prediction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the predictor on one generated sequence.
    Predict(ExpArgs),
    /// Combine N strategies in a multiscale tree and audit windowed regret.
    Combine(ExpArgs),
    /// Run the bandit wrapper on Bernoulli arms or a reward matrix.
    Bandit(ExpArgs),
    /// Run greedy projection and the adaptive grid on a scenario.
    Oco(ExpArgs),
    /// Uniformity audit of multiscale-tree residuals.
    Audit(ExpArgs),
    /// Fair-coin and biased-coin tail probes.
    Probe(ExpArgs),
    /// Run acceptance criteria: `core`, `all` or a list such as `A1,A7`.
    Accept(AcceptArgs),
    /// Re-measure the calibrated constants on the calibration seeds.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Step,
    Ramp,
}

#[derive(Args)]
struct ExpArgs {
    /// Read the whole experiment from a JSON spec; other flags are ignored.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long = "T", default_value_t = 10_000)]
    horizon: usize,
    #[arg(long, conflicts_with = "z")]
    epsilon: Option<f64>,
    #[arg(long = "Z")]
    z: Option<f64>,
    /// Discount window n (defaults to T).
    #[arg(long)]
    window: Option<f64>,
    /// Number of strategies or arms.
    #[arg(long = "N", default_value_t = 3)]
    strategies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Per-trade cost; positive values switch `predict` to randomized bets.
    #[arg(long, default_value_t = 0.0)]
    cost: f64,
    #[arg(long, value_enum, default_value = "ramp")]
    variant: VariantArg,
    /// constant:V | bernoulli:P | shifting:K:L1,L2,.. | sinusoid:PERIOD:AMP | file:PATH | adversarial-lb:EPS
    #[arg(long, default_value = "bernoulli:0.5")]
    generator: Generator,
    /// Post hoc partition size (combine) or shift count (oco).
    #[arg(long)]
    intervals: Option<usize>,
    /// Scenario JSON for `oco`.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Reward matrix CSV for `bandit`.
    #[arg(long)]
    rewards: Option<PathBuf>,
    /// Output directory for trace.csv, summary.json and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExpArgs {
    fn to_spec(&self, command: Command) -> Result<ExperimentSpec> {
        if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut spec: ExperimentSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if spec.command != command {
                bail!(
                    "{} describes `{}`, not `{}`",
                    path.display(),
                    spec.command.name(),
                    command.name()
                );
            }
            if self.out.is_some() {
                spec.out.clone_from(&self.out);
            }
            return Ok(spec);
        }
        let mut spec = ExperimentSpec::new(command, self.generator.clone(), self.horizon);
        spec.epsilon = self.epsilon;
        spec.z = self.z;
        spec.window = self.window;
        spec.strategies = self.strategies;
        spec.seed = self.seed;
        spec.trials = self.trials;
        spec.cost = self.cost;
        spec.variant = match self.variant {
            VariantArg::Step => Shape::Step,
            VariantArg::Ramp => Shape::Ramp,
        };
        spec.intervals = self.intervals;
        spec.scenario.clone_from(&self.scenario);
        spec.rewards.clone_from(&self.rewards);
        spec.out.clone_from(&self.out);
        Ok(spec)
    }
}

#[derive(Args)]
struct AcceptArgs {
    #[arg(default_value = "all")]
    selector: String,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Run with the deviation update's sign flipped (suite self-check).
    #[arg(long, hide = true)]
    inject_sign_bug: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Write calibration.json and CALIBRATION.md table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LH_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("LH_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn experiment(args: &ExpArgs, command: Command) -> Result<ExitCode> {
    let spec = args.to_spec(command)?;
    let out = run_experiment(&spec)?;
    print!("{}", out.report);
    if let Some(dir) = &spec.out {
        std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")
            .with_context(|| format!("writing {}", dir.join("spec.json").display()))?;
    }
    Ok(if out.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn accept(args: &AcceptArgs) -> Result<ExitCode> {
    let mutation = if args.inject_sign_bug {
        Mutation::FlipUpdateSign
    } else {
        Mutation::None
    };
    let cal = calibration::frozen();
    let mut results = Vec::new();
    for id in criteria::select(&args.selector)? {
        let r = criteria::run_criterion(id, &cal, mutation)?;
        print!("{}", r.render());
        results.push(r);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.id.as_str()).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", results.len());
    } else {
        println!("failed: {}", failed.join(", "));
    }
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&results)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn calibrate(args: &CalibrateArgs) -> Result<ExitCode> {
    let c = calibration::calibrate()?;
    let table = calibration::to_markdown(&c);
    print!("{}{table}", c.to_json());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("calibration.json"), c.to_json())
            .with_context(|| format!("writing {}", dir.join("calibration.json").display()))?;
        std::fs::write(dir.join("calibration_table.md"), table)
            .with_context(|| format!("writing {}", dir.join("calibration_table.md").display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Sub::Predict(a) => experiment(a, Command::Predict),
        Sub::Combine(a) => experiment(a, Command::Combine),
        Sub::Bandit(a) => experiment(a, Command::Bandit),
        Sub::Oco(a) => experiment(a, Command::Oco),
        Sub::Audit(a) => experiment(a, Command::Audit),
        Sub::Probe(a) => experiment(a, Command::Probe),
        Sub::Accept(a) => accept(a),
        Sub::Calibrate(a) => calibrate(a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
