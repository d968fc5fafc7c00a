//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the terminal.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use caef_client::mock::{Behavior, MockServer};
use caef_client::{EndpointConfig, RemotePredictor};
use caef_core::datasetgen::{self, SamplePolicy};
use caef_core::evalharness::{self, DigitSetting, Mode, TestSet, TestSetting};
use caef_core::oracle;
use caef_core::prompts;
use caef_core::runtime::{execute, symbolic_predict, verify_trace, ExecBudget, StepPredictor, SymbolicPredictor, Trace};
use caef_core::{Op, Result, Role, StepBlock};

const ADDITION: &str = include_str!("../../core/tests/data/addition_trace.txt");
const MULTIPLICATION: &str = include_str!("../../core/tests/data/multiplication_trace.txt");

const SEED: u64 = 20_241_016;

// pinned limits
const GOLDEN_SECS: f64 = 1.0;
const ORACLE_PER_OP: usize = 10_000;
const ORACLE_SECS: f64 = 600.0;
const COMPONENT_PER_OP: usize = 1_000;
const COMPONENT_SECS: f64 = 300.0;
const ROUND_TRIPS: usize = 100_000;
const LAW_CASES: usize = 1_000;
const FAULT_TRACES: usize = 100;
const LOOPBACK_PER_OP: usize = 100;
const REQUIRED_ACCURACY: f64 = 1.0;

type Outcome = std::result::Result<String, String>;

fn run(expr: &str) -> Trace {
    execute(expr, &SymbolicPredictor, ExecBudget::default())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Equal shares of the paper's settings for `op`, `total` expressions.
fn settings_for(op: Op, total: usize) -> Vec<TestSetting> {
    match op {
        Op::Mul | Op::Div => vec![TestSetting::new(op, DigitSetting::Mixed, total).unwrap()],
        _ => DigitSetting::PAPER_FIXED
            .iter()
            .map(|&n| TestSetting::new(op, DigitSetting::Fixed(n), total / 4).unwrap())
            .collect(),
    }
}

fn sets_for(op: Op, total: usize, seed: u64) -> Vec<TestSet> {
    settings_for(op, total).into_iter().map(|s| evalharness::gen_testset(s, seed).unwrap()).collect()
}

fn golden_traces() -> Outcome {
    let start = Instant::now();
    let add = run("45+67=");
    ensure(add.to_text(Some(0)) == ADDITION, || "addition trace differs".into())?;
    let mul = run("89*2=");
    ensure(mul.to_text(Some(0)) == MULTIPLICATION, || "multiplication trace differs".into())?;

    let sub_block = run("47-12=").frames[1].output.clone();
    let want = "SUB, q1, [HEAD1]|7|4 [HEAD2]|2|1\nCMD [CALL] REFLECTION, q2\n\
                REFLECTION, q0, [HEAD1] |9|9[HEAD2] |2|1 [OUTPUT]\nCMD [HEAD1] RIGHT, [HEAD2] RIGHT, q1";
    ensure(sub_block == want, || format!("SUB q0->q1 block differs:\n{sub_block}"))?;

    let sub = run("4531-1504=");
    let stages: Vec<String> = sub
        .frames
        .iter()
        .filter(|f| f.depth == 1 && f.output.ends_with("Halt state."))
        .map(|f| {
            let last = f.output.lines().next().unwrap().rsplit(' ').next().unwrap();
            last.split('|').filter(|c| !c.is_empty()).collect::<Vec<_>>().concat().chars().rev().collect()
        })
        .collect();
    ensure(stages == ["8495", "13026", "13027", "3027"], || format!("SUB stages {stages:?}"))?;
    ensure(sub.outcome.as_deref() == Ok("4531-1504=3027"), || format!("{:?}", sub.outcome))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < GOLDEN_SECS, || format!("took {secs:.2}s"))?;
    Ok(format!("ADD 7 steps, MUL 11 steps, SUB block, 8495/13026/13027/3027 byte-exact in {secs:.3}s (limit {GOLDEN_SECS}s)"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut summary = Vec::new();
    for op in Op::ARITHMETIC {
        let mut n = 0;
        let mut correct = 0;
        for set in sets_for(op, ORACLE_PER_OP, SEED) {
            let cell = evalharness::eval_end_to_end(&set, &SymbolicPredictor, ExecBudget::default()).unwrap();
            n += cell.n;
            correct += cell.correct;
            if let Some(f) = cell.failures.first() {
                return Err(format!("{}: got {:?}, want {:?}", f.expression, f.got, f.expected));
            }
        }
        ensure(n >= ORACLE_PER_OP, || format!("{op}: only {n} cases"))?;
        let acc = correct as f64 / n as f64;
        ensure(acc >= REQUIRED_ACCURACY, || format!("{op}: accuracy {acc}"))?;
        summary.push(format!("{}={:.1}%", op.slug(), acc * 100.0));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < ORACLE_SECS, || format!("took {secs:.0}s"))?;
    Ok(format!("{ORACLE_PER_OP} per operator, {} in {secs:.1}s single-threaded (limit {ORACLE_SECS}s)", summary.join(" ")))
}

fn component_protocol() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    for op in Op::ARITHMETIC {
        for set in sets_for(op, COMPONENT_PER_OP, SEED + 1) {
            for mode in Mode::COMPONENTS {
                let cell = evalharness::eval_component(&set, mode, &SymbolicPredictor, ExecBudget::default()).unwrap();
                cells += 1;
                ensure(cell.accuracy >= REQUIRED_ACCURACY, || {
                    format!("{op} {} {mode}: {}/{} ({:?})", cell.setting, cell.correct, cell.n, cell.failures.first())
                })?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < COMPONENT_SECS, || format!("took {secs:.0}s"))?;
    Ok(format!("{COMPONENT_PER_OP} per operator x executor/aligner-in/aligner-out, {cells} cells at 100.0% in {secs:.1}s (limit {COMPONENT_SECS}s)"))
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut per_op: BTreeMap<Op, usize> = BTreeMap::new();
    let mut checked = 0;
    while checked < ROUND_TRIPS {
        let op = Op::ARITHMETIC[rng.gen_range(0..7)];
        let digits = match op {
            Op::Mul | Op::Div => DigitSetting::Mixed,
            _ => DigitSetting::Fixed(rng.gen_range(1..=30)),
        };
        let set = evalharness::gen_testset(TestSetting::new(op, digits, 1).unwrap(), rng.gen()).unwrap();
        let trace = run(&set.expressions[0].to_string());
        for f in trace.executor_frames() {
            for text in [&f.input, &f.output] {
                let x = StepBlock::parse(text).map_err(|e| format!("{text}: {e}"))?;
                let rendered = x.render();
                ensure(&rendered == text, || format!("render differs for\n{text}"))?;
                let y = StepBlock::parse(&rendered).map_err(|e| e.to_string())?;
                ensure(y == x, || format!("parse(render(x)) != x for\n{text}"))?;
                *per_op.entry(x.caller.state.op).or_insert(0) += 1;
                if let Some(c) = &x.callee {
                    *per_op.entry(c.state.op).or_insert(0) += 1;
                }
                checked += 1;
            }
        }
    }
    ensure(per_op.len() == 9, || format!("machines covered: {:?}", per_op.keys()))?;
    Ok(format!("{checked} blocks over all 9 machines, 0 failures (required {ROUND_TRIPS})"))
}

/// Callee activations per operator directly under the top-level machine.
fn calls(t: &Trace) -> BTreeMap<Op, usize> {
    let mut seen = BTreeSet::new();
    let mut out = BTreeMap::new();
    for f in t.frames.iter().filter(|f| f.depth == 1) {
        if seen.insert(f.activation) {
            *out.entry(f.op).or_insert(0) += 1;
        }
    }
    out
}

fn step_count_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    for _ in 0..LAW_CASES {
        let (la, lb) = (rng.gen_range(1..=100), rng.gen_range(1..=100));
        let a = datasetgen::random_digits(&mut rng, la);
        let b = datasetgen::random_digits(&mut rng, lb);
        let t = run(&format!("{a}+{b}="));
        let steps = t.executor_frames().count();
        ensure(steps == la.max(lb) + 2, || format!("{a}+{b}: {steps} transitions"))?;
    }
    for (op, set) in [(Op::Mul, SEED + 3), (Op::Div, SEED + 4)] {
        let set = evalharness::gen_testset(TestSetting::new(op, DigitSetting::Mixed, LAW_CASES).unwrap(), set).unwrap();
        for e in &set.expressions {
            let text = e.to_string();
            let t = run(&text);
            let c = calls(&t);
            let k: usize = match op {
                Op::Mul => e.rhs.to_l2r_string().parse().unwrap(),
                _ => oracle::evaluate(&text).unwrap().parse().unwrap(),
            };
            let loop_op = if op == Op::Mul { Op::LessThan } else { Op::GreaterThan };
            let got = (c.get(&loop_op).copied().unwrap_or(0), c.get(&Op::Add).copied().unwrap_or(0));
            ensure(got == (k + 1, 2 * k), || format!("{text}: {loop_op} x{} ADD x{} (k={k})", got.0, got.1))?;
        }
    }
    Ok(format!("{LAW_CASES} cases each: ADD max(m,n)+2, MUL b+1 LESS_THAN/2b ADD, DIV q+1 GREATER_THAN/2q ADD"))
}

fn corpus_integrity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    // defaults except the operand range, which is capped to keep the run short
    let policy = SamplePolicy { max_digits: 12, seed: SEED, ..SamplePolicy::default() };
    let mut records = Vec::new();
    let mut expressions = 0;
    let mut boundaries = 0;
    for op in Op::ARITHMETIC {
        let exprs = datasetgen::sample_expressions(op, &policy).unwrap();
        let recs = datasetgen::gen_executor_samples(&exprs, 2, &policy).unwrap();
        let have: HashSet<(&str, &str)> = recs.iter().map(|r| (r.input.as_str(), r.output.as_str())).collect();
        for e in &exprs {
            let t = run(&e.to_string());
            let mut first: BTreeMap<usize, usize> = BTreeMap::new();
            let mut last: BTreeMap<usize, usize> = BTreeMap::new();
            let frames: Vec<_> = t.executor_frames().collect();
            for (i, f) in frames.iter().enumerate() {
                first.entry(f.activation).or_insert(i);
                last.insert(f.activation, i);
            }
            for i in first.values().chain(last.values()) {
                let f = frames[*i];
                ensure(have.contains(&(f.input.as_str(), f.output.as_str())), || {
                    format!("{e}: boundary step of {} activation {} missing", f.op, f.activation)
                })?;
                boundaries += 1;
            }
        }
        expressions += exprs.len();
        records.extend(recs);
        records.extend(datasetgen::gen_aligner_samples(&exprs, 2).unwrap());
    }
    let mut replayed = 0;
    for r in records.iter().filter(|r| r.role == Role::Executor) {
        let sample = prompts::unwrap(r.op, r.role, r.stage, &r.input).unwrap();
        let out = symbolic_predict(r.op, r.role, sample).map_err(|e| e.to_string())?;
        ensure(out == r.output, || format!("record does not replay:\n{}", r.input))?;
        replayed += 1;
    }
    let (p1, p2) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    datasetgen::write_corpus(&records, &p1).unwrap();
    let again: Vec<_> = Op::ARITHMETIC
        .iter()
        .flat_map(|&op| {
            let exprs = datasetgen::sample_expressions(op, &policy).unwrap();
            let mut r = datasetgen::gen_executor_samples(&exprs, 2, &policy).unwrap();
            r.extend(datasetgen::gen_aligner_samples(&exprs, 2).unwrap());
            r
        })
        .collect();
    datasetgen::write_corpus(&again, &p2).unwrap();
    let (b1, b2) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    ensure(b1 == b2, || "corpus bytes differ between runs".into())?;
    Ok(format!(
        "{expressions} expressions (max_digits 12), {boundaries} boundary steps present, {replayed}/{replayed} executor records replay, {} bytes identical across runs",
        b1.len()
    ))
}

/// Symbolic predictor that corrupts one digit of its `target`-th answer.
struct OneFault {
    calls: AtomicUsize,
    target: usize,
    pick: usize,
}

/// Replaces one digit character anywhere in `text`: tape cells, registers,
/// labels and tags alike.
fn corrupt(text: &str, pick: usize) -> Option<String> {
    let bytes = text.as_bytes();
    let spots: Vec<usize> = (0..bytes.len()).filter(|&i| bytes[i].is_ascii_digit()).collect();
    let at = *spots.get(pick % spots.len().max(1))?;
    let mut out = bytes.to_vec();
    out[at] = b'0' + (out[at] - b'0' + 1 + (pick % 9) as u8) % 10;
    Some(String::from_utf8(out).unwrap())
}

impl StepPredictor for OneFault {
    fn predict(&self, op: Op, role: Role, input: &str) -> Result<String> {
        let out = symbolic_predict(op, role, input)?;
        if self.calls.fetch_add(1, Ordering::SeqCst) == self.target {
            return Ok(corrupt(&out, self.pick).unwrap_or(out));
        }
        Ok(out)
    }
}

/// A single corrupted digit is scored by the harness in the component mode
/// that owns the frame. Executor mode requires every step of the trace to
/// match, so faults on values that no longer affect the answer still count.
fn fault_detection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let budget = ExecBudget { max_steps: 20_000, ..ExecBudget::default() };
    let mut injected = 0;
    let mut final_string_changed = 0;
    while injected < FAULT_TRACES {
        let op = Op::ARITHMETIC[injected % 7];
        let digits = match op {
            Op::Mul | Op::Div => DigitSetting::Mixed,
            _ => DigitSetting::Fixed(rng.gen_range(1..=12)),
        };
        let set = evalharness::gen_testset(TestSetting::new(op, digits, 1).unwrap(), rng.gen()).unwrap();
        let expr = set.expressions[0].to_string();
        let clean = run(&expr);
        let target = rng.gen_range(0..clean.frames.len());
        let pick = rng.gen();
        let role = clean.frames[target].role;
        if corrupt(&clean.frames[target].output, pick).is_none() {
            continue;
        }
        let fault = |target| OneFault { calls: AtomicUsize::new(0), target, pick };
        let t = execute(&expr, &fault(target), budget);
        let verdict = verify_trace(&t);
        let at = verdict.first_divergence.as_ref().map(|d| d.index);
        ensure(at == Some(target), || format!("{expr}: fault at frame {target}, verify_trace reported {at:?}"))?;
        let truth = oracle::expected(&expr).unwrap();
        if t.outcome.as_deref() != Ok(truth.as_str()) {
            final_string_changed += 1;
        }
        let cell = match role {
            Role::Aligner if target == 0 => evalharness::eval_component(&set, Mode::AlignerIn, &fault(0), budget),
            Role::Aligner => evalharness::eval_component(&set, Mode::AlignerOut, &fault(0), budget),
            // executor-only runs have no leading aligner frame
            Role::Executor => evalharness::eval_component(&set, Mode::Executor, &fault(target - 1), budget),
        }
        .unwrap();
        ensure(cell.correct == 0, || format!("{expr}: fault at frame {target} ({role}, pick {pick}) scored correct; trace output {:?} -> {:?}", t.frames[target].output, t.outcome))?;
        injected += 1;
    }
    Ok(format!(
        "{injected} single-digit faults, all located at the injected frame and scored wrong; {final_string_changed} also change the final string"
    ))
}

fn remote_loopback() -> Outcome {
    let server = MockServer::start(Behavior::Symbolic).map_err(|e| e.to_string())?;
    let remote = RemotePredictor::new(EndpointConfig::new(server.url())).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for op in Op::ARITHMETIC {
        let digits = match op {
            Op::Mul | Op::Div => DigitSetting::Mixed,
            _ => DigitSetting::Fixed(10),
        };
        let set = evalharness::gen_testset(TestSetting::new(op, digits, LOOPBACK_PER_OP).unwrap(), SEED + 6).unwrap();
        for e in &set.expressions {
            let text = e.to_string();
            let want = run(&text);
            let got = execute(&text, &remote, ExecBudget::default());
            ensure(got.outcome == want.outcome, || format!("{text}: {:?} vs {:?}", got.outcome, want.outcome))?;
            ensure(got.to_text(None) == want.to_text(None), || format!("{text}: traces differ"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} expressions, {} requests, traces byte-identical to the symbolic backend", server.requests()))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 8] = [
        ("golden-traces", golden_traces),
        ("oracle-equivalence", oracle_equivalence),
        ("component-protocol", component_protocol),
        ("round-trip", round_trip),
        ("step-count-law", step_count_law),
        ("corpus-integrity", corpus_integrity),
        ("fault-detection", fault_detection),
        ("remote-loopback", remote_loopback),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = Duration::from_secs_f64(start.elapsed().as_secs_f64());
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{took:.2?}]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
