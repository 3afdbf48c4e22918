use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use bai::allocation::{check_beta_grid, optimal_allocation, solve_beta, DEFAULT_TOL};
use bai::bandit::{presets, BanditInstance, RewardFamily};
use bai::error::{Error, Result};
use bai::harness::export::{metadata_path, write_metadata};
use bai::harness::{
    benchmark_step_time, convergence_diagnostics, run_fixed_horizon, run_replications, run_trial_with_state, summarize,
    tracking_target, write_records_csv, write_summary_json, ExperimentConfig,
};
use bai::rules::SamplingRule;
use bai::stopping::{StoppingCriterion, StoppingRule, ThresholdVariant};

#[derive(Parser)]
#[command(name = "bai", version, about = "Fixed-confidence best-arm identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the β-optimal allocation, its rate, and the optimum over β.
    SolveAllocation(SolveArgs),
    /// Run replicated trials and write records, summary and metadata.
    Run(RunArgs),
    /// Time one selection step of each rule at a converged posterior.
    Bench(BenchArgs),
    /// One long run without stopping, reporting convergence diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Bernoulli,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum RuleArg {
    Ttts,
    T3c,
    Ttps,
    Bc,
    Dtracking,
    Uniform,
}

impl RuleArg {
    fn rule(self, beta: f64) -> Result<SamplingRule> {
        let name = self.to_possible_value().expect("no skipped variants").get_name().to_string();
        SamplingRule::from_name(&name, beta)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StoppingArg {
    Bayes,
    Chernoff,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Theorem1,
    ClosedForm,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// Comma-separated arm means.
    #[arg(long, value_delimiter = ',', conflicts_with = "instance")]
    means: Option<Vec<f64>>,
    /// Named instance: mu1 or mu2.
    #[arg(long)]
    instance: Option<String>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Standard deviation of Gaussian rewards.
    #[arg(long)]
    sigma: Option<f64>,
}

impl InstanceArgs {
    fn given(&self) -> bool {
        self.means.is_some() || self.instance.is_some()
    }

    fn build(&self) -> Result<BanditInstance> {
        let means = match (&self.means, &self.instance) {
            (Some(m), _) => m.clone(),
            (None, Some(name)) => presets::by_name(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown instance {name:?}; expected mu1 or mu2")))?
                .to_vec(),
            (None, None) => return Err(Error::InvalidArgument("give --means or --instance".into())),
        };
        let family = match self.family.unwrap_or(FamilyArg::Gaussian) {
            FamilyArg::Gaussian => RewardFamily::gaussian(self.sigma.unwrap_or(1.0))?,
            FamilyArg::Bernoulli => RewardFamily::Bernoulli,
        };
        BanditInstance::new(family, means)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Tolerance of the search over β.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with ExperimentConfig fields; flags given alongside override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    stopping: Option<StoppingArg>,
    #[arg(long, value_enum)]
    threshold_variant: Option<VariantArg>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    check_every: Option<u64>,
    #[arg(long)]
    replications: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon_cap: Option<u64>,
    /// Record traces every --trace-stride rounds.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    trace_stride: Option<u64>,
    /// Measure per-step time (output is then no longer byte-reproducible).
    #[arg(long)]
    timing: bool,
    /// Worker threads; overrides BAI_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Directory receiving records.csv, summary.json and records.meta.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Rules to time; all of them by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    rules: Vec<RuleArg>,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: u64,
    /// δ of the T3C run that produces the converged posterior.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_enum, default_value = "ttts")]
    rule: RuleArg,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 200_000)]
    horizon: u64,
    #[arg(long, default_value_t = 1000)]
    trace_stride: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the trace as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let instance = args.instance.build()?;
    let (means, family) = (instance.means(), instance.family());
    let fixed = solve_beta(means, family, args.beta, DEFAULT_TOL)?;
    let best = optimal_allocation(means, family, args.tol)?;
    let grid = check_beta_grid(means, family, &best, 1e-9)?;
    print_json(&json!({
        "beta": fixed.beta,
        "weights": fixed.weights,
        "gamma_beta": fixed.rate,
        "residual": fixed.residual,
        "beta_star": best.beta,
        "gamma_star": best.rate,
        "weights_star": best.weights,
        "grid_beats_golden_section": grid.map(|g| json!({"beta": g.beta, "gamma": g.rate})),
    }))
}

fn run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?)?,
        None => {
            let instance = args.instance.build()?;
            let arms = instance.arms();
            ExperimentConfig::new(
                instance,
                SamplingRule::T3c { beta: 0.5 },
                StoppingCriterion::new(StoppingRule::Chernoff, 0.01, arms)?,
            )
        }
    };
    if args.config.is_some() && args.instance.given() {
        config.instance = args.instance.build()?;
        config.criterion.arms = config.instance.arms();
    }
    if let Some(rule) = args.rule {
        config.rule = rule.rule(args.beta.or(config.rule.beta()).unwrap_or(0.5))?;
    } else if let Some(beta) = args.beta {
        config.rule = SamplingRule::from_name(config.rule.name(), beta)?;
    }
    let variant = match args.threshold_variant {
        Some(VariantArg::Theorem1) => Some(ThresholdVariant::Theorem1),
        Some(VariantArg::ClosedForm) => Some(ThresholdVariant::ClosedForm),
        None => None,
    };
    match (args.stopping, variant) {
        (Some(StoppingArg::Chernoff), _) => config.criterion.rule = StoppingRule::Chernoff,
        (Some(StoppingArg::Bayes), v) => {
            config.criterion.rule = StoppingRule::Bayes {
                variant: v.unwrap_or_default(),
            }
        }
        (None, Some(v)) => {
            if let StoppingRule::Bayes { variant } = &mut config.criterion.rule {
                *variant = v;
            }
        }
        (None, None) => {}
    }
    if let Some(d) = args.delta {
        config.criterion.delta = d;
    }
    config.check_every = args.check_every.or(config.check_every);
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(h) = args.horizon_cap {
        config.horizon_cap = h;
    }
    config.trace |= args.trace;
    if let Some(s) = args.trace_stride {
        config.trace_stride = s;
    }
    config.timing |= args.timing;
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> Result<()> {
    let config = run_config(&args)?;
    let records = run_replications(&config, args.threads)?;
    let summary = summarize(&config, &records)?;
    fs::create_dir_all(&args.out_dir)?;
    let csv = args.out_dir.join("records.csv");
    write_records_csv(&records, &csv)?;
    write_summary_json(&summary, &args.out_dir.join("summary.json"))?;
    write_metadata(&config, &metadata_path(&csv))?;
    print_json(&serde_json::to_value(&summary)?)
}

const ALL_RULES: [RuleArg; 6] = [
    RuleArg::Ttts,
    RuleArg::T3c,
    RuleArg::Ttps,
    RuleArg::Bc,
    RuleArg::Dtracking,
    RuleArg::Uniform,
];

fn bench(args: BenchArgs) -> Result<()> {
    let instance = args.instance.build()?;
    let arms = instance.arms();
    let config = ExperimentConfig::new(
        instance,
        SamplingRule::T3c { beta: args.beta },
        StoppingCriterion::new(StoppingRule::Chernoff, args.delta, arms)?,
    );
    let (record, state) = run_trial_with_state(&config, 0)?;
    if record.censored {
        return Err(Error::Precondition("the run producing the benchmark state did not stop".into()));
    }
    let rules = if args.rules.is_empty() { ALL_RULES.to_vec() } else { args.rules.clone() };
    let mut rows = Vec::new();
    for r in rules {
        let t = benchmark_step_time(r.rule(args.beta)?, &state, args.iterations, args.seed)?;
        rows.push(json!({"rule": t.rule, "mean_s": t.mean_s, "min_s": t.min_s, "max_s": t.max_s}));
    }
    print_json(&json!({"state_rounds": record.tau, "iterations": args.iterations, "timings": rows}))
}

fn write_trace(path: &Path, trace: &[bai::harness::TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let arms = trace.first().map_or(0, |p| p.proportions.len());
    let mut header = vec!["n".to_string(), "log_one_minus_a_best".to_string()];
    header.extend((0..arms).map(|i| format!("prop_{i}")));
    w.write_record(&header)?;
    for p in trace {
        let mut row = vec![p.n.to_string(), p.log_one_minus_a_best.to_string()];
        row.extend(p.proportions.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let instance = args.instance.build()?;
    let rule = args.rule.rule(args.beta)?;
    let record = run_fixed_horizon(&instance, rule, args.horizon, args.trace_stride, args.seed)?;
    let trace = record.trace.as_deref().unwrap_or(&[]);
    let target = tracking_target(&instance, rule)?;
    let diag = convergence_diagnostics(trace, &target)?;
    if let Some(out) = &args.out {
        write_trace(out, trace)?;
    }
    print_json(&json!({
        "rule": rule.name(),
        "n": diag.final_n,
        "slope": diag.slope,
        "gamma_target": target.rate,
        "slope_over_gamma": diag.slope / target.rate,
        "tracking_error": diag.tracking_error,
        "target_weights": target.weights,
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveAllocation(a) => solve(a),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
