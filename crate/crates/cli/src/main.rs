use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use caef_client::{EndpointConfig, RemotePredictor};
use caef_core::datasetgen::{self, SamplePolicy};
use caef_core::evalharness::{self, DigitSetting, Mode, Report, TestSetting};
use caef_core::runtime::{self, ExecBudget, StepPredictor, SymbolicPredictor};
use caef_core::{Error, ErrorClass, Op, Role};

const TEMPLATES: &str = "\
Expression templates (operands are non-negative decimal integers):
  Addition        {op1}+{op2}=
  Subtraction     {op1}-{op2}=
  Multiplication  {op1}*{op2}=
  Division        {op1}//{op2}=
  Greater         {op1}>{op2}=
  Less            {op1}<{op2}=
  Equal           {op1}=={op2}=

Exit codes: 0 ok, 2 usage, 3 domain, 4 budget, 5 transport, 1 other.
Remote backend: base URL in CAEF_ENDPOINT, bearer token in CAEF_API_KEY.";

#[derive(Parser)]
#[command(name = "caef", version, about = "Step-by-step arithmetic through composable executors", after_help = TEMPLATES)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one expression and print the completed expression.
    Run(RunArgs),
    /// Generate a training corpus (JSON lines).
    GenData(GenDataArgs),
    /// Generate a test set, one expression per line.
    GenTest(GenTestArgs),
    /// Score a backend under Exact Match and write a report.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Symbolic,
    Remote,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "symbolic")]
    backend: Backend,
    /// Predictor calls allowed per expression.
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    /// Per-step limit in milliseconds.
    #[arg(long)]
    step_timeout_ms: Option<u64>,
    /// Concurrent requests to the remote endpoint.
    #[arg(long, default_value_t = 8)]
    max_concurrent: usize,
}

#[derive(Args)]
struct RunArgs {
    expression: String,
    #[command(flatten)]
    backend: BackendArgs,
    /// Write the plain-text trace here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Deepest call level included in the text trace.
    #[arg(long)]
    trace_depth: Option<usize>,
    /// Write one JSON object per step here.
    #[arg(long)]
    jsonl_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Executor,
    Aligner,
    Both,
}

#[derive(Args)]
struct GenDataArgs {
    /// Operator slug (add, sub, mul, div, gt, lt, eq) or "all".
    #[arg(long, default_value = "all")]
    op: String,
    #[arg(long, value_enum, default_value = "both")]
    role: RoleArg,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    stage: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    /// Longest operand for the length-class operators.
    #[arg(long, default_value_t = 100)]
    digits: usize,
    #[arg(long, default_value_t = 3)]
    short_boost: usize,
    #[arg(long, default_value_t = 10)]
    short_threshold: usize,
    #[arg(long, default_value_t = 0.1)]
    sample_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    equal_fraction: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct GenTestArgs {
    /// Operator slug.
    #[arg(long)]
    op: String,
    /// 5, 10, 50, 100 (or any length) for +,-,>,<,==; 1-10 for * and //.
    #[arg(long)]
    digits: Option<String>,
    #[arg(long, default_value_t = evalharness::DEFAULT_COUNT)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Operator slug or "all".
    #[arg(long, default_value = "all")]
    op: String,
    /// One digit setting; omitted means every setting of the paper grid.
    #[arg(long)]
    digits: Option<String>,
    #[arg(long, default_value_t = evalharness::DEFAULT_COUNT)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// e2e, executor, aligner-in, aligner-out, components or all.
    #[arg(long, default_value = "e2e")]
    mode: String,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// Failure carrying the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = match err.downcast_ref::<Error>() {
            Some(e) => exit_code(e),
            None => 1,
        };
        Failure { code, err }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

fn usage(msg: String) -> Failure {
    Failure { code: 2, err: anyhow::anyhow!(msg) }
}

fn exit_code(e: &Error) -> u8 {
    match (e.class(), e) {
        (_, Error::MalformedExpression(_)) => 2,
        (ErrorClass::Domain, _) => 3,
        (ErrorClass::Budget, _) => 4,
        (ErrorClass::Transport, _) => 5,
        _ => 1,
    }
}

fn budget(b: &BackendArgs) -> ExecBudget {
    ExecBudget {
        max_steps: b.max_steps,
        max_depth: b.max_depth,
        per_step_timeout: b.step_timeout_ms.map(Duration::from_millis),
    }
}

fn predictor(b: &BackendArgs) -> Result<Box<dyn StepPredictor>, Failure> {
    Ok(match b.backend {
        Backend::Symbolic => Box::new(SymbolicPredictor),
        Backend::Remote => {
            let mut cfg = EndpointConfig::from_env()?;
            cfg.max_concurrent = b.max_concurrent;
            if let Some(ms) = b.step_timeout_ms {
                cfg.timeout = Duration::from_millis(ms);
            }
            Box::new(RemotePredictor::new(cfg)?)
        }
    })
}

fn parse_ops(s: &str) -> Result<Vec<Op>, Failure> {
    if s == "all" {
        return Ok(Op::ARITHMETIC.to_vec());
    }
    s.split(',')
        .map(|p| {
            Op::from_slug(p.trim())
                .filter(|op| op.symbol().is_some())
                .ok_or_else(|| usage(format!("unknown operator {p:?}; expected add, sub, mul, div, gt, lt, eq or all")))
        })
        .collect()
}

fn parse_digits(s: &str) -> Result<DigitSetting, Failure> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn default_setting(op: Op) -> DigitSetting {
    if matches!(op, Op::Mul | Op::Div) {
        DigitSetting::Mixed
    } else {
        DigitSetting::Fixed(5)
    }
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let p = predictor(&a.backend)?;
    let trace = runtime::execute(&a.expression, &*p, budget(&a.backend));
    if let Some(path) = &a.trace_out {
        fs::write(path, trace.to_text(a.trace_depth)).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.jsonl_out {
        fs::write(path, trace.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    log::info!("{} steps in {:?}", trace.step_count, trace.wall_time);
    let result = trace.outcome?;
    println!("{result}");
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> Result<(), Failure> {
    let policy = SamplePolicy {
        per_class_count: a.per_class,
        max_digits: a.digits,
        short_boost: a.short_boost,
        short_threshold: a.short_threshold,
        intermediate_sample_rate: a.sample_rate,
        equal_true_fraction: a.equal_fraction,
        seed: a.seed,
    };
    policy.validate().map_err(|e| usage(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs.max(1)).build().context("thread pool")?;
    let mut records = Vec::new();
    for op in parse_ops(&a.op)? {
        let exprs = datasetgen::sample_expressions(op, &policy)?;
        let classes = datasetgen::class_counts(&exprs);
        let before = records.len();
        pool.install(|| -> Result<(), Error> {
            if matches!(a.role, RoleArg::Executor | RoleArg::Both) {
                records.extend(datasetgen::gen_executor_samples(&exprs, a.stage, &policy)?);
            }
            if matches!(a.role, RoleArg::Aligner | RoleArg::Both) {
                records.extend(datasetgen::gen_aligner_samples(&exprs, a.stage)?);
            }
            Ok(())
        })?;
        let trues = if op == Op::Equal { exprs.iter().filter(|e| e.lhs == e.rhs).count() } else { 0 };
        println!("{op}: {} expressions in {} classes, {} records", exprs.len(), classes.len(), records.len() - before);
        if op == Op::Equal {
            println!("{op}: {trues} equal pairs ({:.1}%)", 100.0 * trues as f64 / exprs.len().max(1) as f64);
        }
        for ((la, lb), n) in classes {
            log::debug!("{op} class ({la},{lb}): {n}");
        }
    }
    let mut by_role: BTreeMap<(Op, Role), usize> = BTreeMap::new();
    for r in &records {
        *by_role.entry((r.op, r.role)).or_insert(0) += 1;
    }
    for ((op, role), n) in by_role {
        println!("  {op} {role}: {n}");
    }
    datasetgen::write_corpus(&records, &a.out)?;
    println!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn cmd_gen_test(a: GenTestArgs) -> Result<(), Failure> {
    let ops = parse_ops(&a.op)?;
    let mut lines = String::new();
    for op in ops {
        let digits = match &a.digits {
            Some(d) => parse_digits(d)?,
            None => default_setting(op),
        };
        let setting = TestSetting::new(op, digits, a.count).map_err(|e| usage(e.to_string()))?;
        for e in evalharness::gen_testset(setting, a.seed)?.expressions {
            lines.push_str(&e.to_string());
            lines.push('\n');
        }
    }
    match &a.out {
        Some(path) => fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{lines}"),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let ops = parse_ops(&a.op)?;
    let modes: Vec<Mode> = match a.mode.as_str() {
        "all" => Mode::ALL.to_vec(),
        "components" => Mode::COMPONENTS.to_vec(),
        m => vec![m.parse().map_err(|e: Error| usage(e.to_string()))?],
    };
    let settings = match &a.digits {
        Some(d) => {
            let digits = parse_digits(d)?;
            ops.iter()
                .map(|&op| TestSetting::new(op, digits, a.count).map_err(|e| usage(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => TestSetting::paper_grid(&ops, a.count),
    };
    let p = predictor(&a.backend)?;
    let mut report = Report::default();
    for setting in settings {
        let set = evalharness::gen_testset(setting, a.seed)?;
        for &mode in &modes {
            let cell = evalharness::evaluate(&set, mode, &*p, budget(&a.backend), a.jobs)?;
            log::info!("{} {} {}: {}/{}", cell.op, cell.setting, mode, cell.correct, cell.n);
            report.push(cell);
        }
    }
    if let Some(path) = &a.report {
        fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.summary());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::GenData(a) => cmd_gen_data(a),
        Cmd::GenTest(a) => cmd_gen_test(a),
        Cmd::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, err }) => {
            match err.downcast_ref::<Error>() {
                Some(e) => eprintln!("error: {}: {err:#}", e.kind()),
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(code)
        }
    }
}
