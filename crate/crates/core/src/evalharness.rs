//! Test-set generation and Exact Match scoring.
//!
//! A report is a list of cells, one per (operator, digit setting, mode), so
//! it lines up with the usual operator-by-setting accuracy tables.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::{self, Expression};
use crate::datasetgen::{division_case, op_rng, random_digits};
use crate::digits::DigitString;
use crate::error::{Error, Result};
use crate::oracle;
use crate::repr::{Op, Role, StepBlock};
use crate::runtime::{self, ExecBudget, StepPredictor, SymbolicPredictor, Trace};

pub const DEFAULT_COUNT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DigitSetting {
    /// Both operands have exactly this many digits.
    Fixed(usize),
    /// MUL: `a` has 1-10 digits and `b` is in 1..=15. DIV: `b` has 1-10
    /// digits and the quotient is in 1..=15.
    Mixed,
}

impl DigitSetting {
    pub const PAPER_FIXED: [usize; 4] = [5, 10, 50, 100];
}

impl fmt::Display for DigitSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DigitSetting::Fixed(n) => write!(f, "{n}"),
            DigitSetting::Mixed => f.write_str("1-10"),
        }
    }
}

impl FromStr for DigitSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1-10" | "mixed" => Ok(DigitSetting::Mixed),
            _ => match s.parse::<usize>() {
                Ok(n) if n > 0 => Ok(DigitSetting::Fixed(n)),
                _ => Err(Error::DomainError(format!("bad digit setting {s:?}"))),
            },
        }
    }
}

impl Serialize for DigitSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DigitSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSetting {
    pub op: Op,
    pub digits: DigitSetting,
    pub count: usize,
}

impl TestSetting {
    pub fn new(op: Op, digits: DigitSetting, count: usize) -> Result<Self> {
        let ok = match (op, digits) {
            (Op::Mul | Op::Div, DigitSetting::Mixed) => true,
            (Op::Mul | Op::Div, _) => false,
            (_, DigitSetting::Fixed(n)) => n > 0 && op.symbol().is_some(),
            (_, DigitSetting::Mixed) => false,
        };
        if !ok {
            return Err(Error::DomainError(format!("{op} has no {digits} setting")));
        }
        Ok(Self { op, digits, count })
    }

    /// The settings of the paper's tables: 5/10/50/100 digits for the
    /// length-class operators, the mixed range for MUL and DIV.
    pub fn paper_grid(ops: &[Op], count: usize) -> Vec<TestSetting> {
        let mut out = Vec::new();
        for &op in ops {
            if matches!(op, Op::Mul | Op::Div) {
                out.push(TestSetting { op, digits: DigitSetting::Mixed, count });
            } else if op.symbol().is_some() {
                for n in DigitSetting::PAPER_FIXED {
                    out.push(TestSetting { op, digits: DigitSetting::Fixed(n), count });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSet {
    pub setting: TestSetting,
    pub seed: u64,
    pub expressions: Vec<Expression>,
}

fn setting_stream(digits: DigitSetting) -> u32 {
    match digits {
        DigitSetting::Mixed => 1 << 16,
        DigitSetting::Fixed(n) => (1 << 17) + n.min(u16::MAX as usize) as u32,
    }
}

/// Seeded test expressions. EQ sets replace the right operand with a copy
/// of the left one for about half the cases, so both labels occur.
pub fn gen_testset(setting: TestSetting, seed: u64) -> Result<TestSet> {
    let TestSetting { op, digits, count } = TestSetting::new(setting.op, setting.digits, setting.count)?;
    let mut rng = op_rng(seed, op, setting_stream(digits));
    let mut expressions = Vec::with_capacity(count);
    for _ in 0..count {
        let (mut a, mut b) = match (op, digits) {
            (Op::Mul, _) => {
                let len = rng.gen_range(1..=10);
                (random_digits(&mut rng, len), DigitString::from_u64(rng.gen_range(1..=15)))
            }
            (Op::Div, _) => {
                let len = rng.gen_range(1..=10);
                let c = rng.gen_range(1..=15);
                division_case(&mut rng, len, c)
            }
            (_, DigitSetting::Fixed(n)) => (random_digits(&mut rng, n), random_digits(&mut rng, n)),
            (_, DigitSetting::Mixed) => unreachable!("rejected by TestSetting::new"),
        };
        if op == Op::Sub && aligner::compare(&a, &b).is_lt() {
            std::mem::swap(&mut a, &mut b);
        }
        if op == Op::Equal && rng.gen_bool(0.5) {
            b = a.clone();
        }
        expressions.push(Expression::new(op, a, b)?);
    }
    Ok(TestSet { setting: TestSetting { op, digits, count }, seed, expressions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Expression in, completed expression out, every step predicted.
    EndToEnd,
    /// Executors alone, from the ground-truth initial block.
    Executor,
    /// Expression to initial block.
    AlignerIn,
    /// Halt block to completed expression.
    AlignerOut,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::EndToEnd, Mode::Executor, Mode::AlignerIn, Mode::AlignerOut];
    pub const COMPONENTS: [Mode; 3] = [Mode::Executor, Mode::AlignerIn, Mode::AlignerOut];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::EndToEnd => "e2e",
            Mode::Executor => "executor",
            Mode::AlignerIn => "aligner-in",
            Mode::AlignerOut => "aligner-out",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s || (s == "end-to-end" && *m == Mode::EndToEnd))
            .ok_or_else(|| Error::DomainError(format!("unknown mode {s:?}")))
    }
}

/// Where a failed run first left the symbolic path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDivergence {
    pub frame: usize,
    pub depth: usize,
    pub op: Op,
    pub role: Role,
    pub expected: Option<String>,
    pub got: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub expression: String,
    pub expected: String,
    pub got: String,
    pub divergence: Option<StepDivergence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub op: Op,
    pub setting: DigitSetting,
    pub mode: Mode,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cells: Vec<Cell>,
}

fn divergence_of(trace: &Trace) -> Option<StepDivergence> {
    runtime::verify_trace(trace).first_divergence.map(|d| StepDivergence {
        frame: d.index,
        depth: d.depth,
        op: d.op,
        role: d.role,
        expected: d.expected,
        got: d.got,
    })
}

fn show(r: &Result<String>) -> String {
    match r {
        Ok(s) => s.clone(),
        Err(e) => format!("{}: {e}", e.kind()),
    }
}

/// Scores one expression; `None` means correct.
fn score_one<P: StepPredictor + ?Sized>(expr: &Expression, mode: Mode, predictor: &P, budget: ExecBudget) -> Option<Failure> {
    let text = expr.to_string();
    let fail = |expected: String, got: String, divergence| Some(Failure { expression: text.clone(), expected, got, divergence });
    let truth = match oracle::expected(&text) {
        Ok(t) => t,
        Err(e) => return fail(String::new(), format!("{}: {e}", e.kind()), None),
    };
    match mode {
        Mode::EndToEnd => {
            let trace = runtime::execute(&text, predictor, budget);
            match &trace.outcome {
                Ok(out) if *out == truth => None,
                other => fail(truth, show(other), divergence_of(&trace)),
            }
        }
        Mode::Executor => {
            let init = match aligner::align_input(&text) {
                Ok(s) => StepBlock::new(s, None),
                Err(e) => return fail(String::new(), format!("{}: {e}", e.kind()), None),
            };
            let reference = runtime::execute_from_init(&init, &SymbolicPredictor, budget);
            let expected = show(&reference.outcome);
            let trace = runtime::execute_from_init(&init, predictor, budget);
            let verdict = runtime::verify_trace(&trace);
            match &trace.outcome {
                Ok(halt) if *halt == expected && verdict.all_steps_correct() => None,
                other => fail(expected, show(other), divergence_of(&trace)),
            }
        }
        Mode::AlignerIn => {
            let expected = show(&runtime::symbolic_predict(expr.op, Role::Aligner, &text));
            let got = show(&predictor.predict(expr.op, Role::Aligner, &text));
            (got != expected).then(|| Failure { expression: text.clone(), expected, got, divergence: None })
        }
        Mode::AlignerOut => {
            let reference = runtime::execute(&text, &SymbolicPredictor, budget);
            let Some(halt) = reference.halt_block() else {
                return fail(truth, show(&reference.outcome), None);
            };
            let got = show(&predictor.predict(expr.op, Role::Aligner, halt));
            (got != truth).then(|| Failure { expression: text.clone(), expected: truth, got, divergence: None })
        }
    }
}

/// Scores a test set in one mode. Expressions run on `jobs` threads; the
/// failure list keeps test-set order.
pub fn evaluate<P: StepPredictor + ?Sized>(set: &TestSet, mode: Mode, predictor: &P, budget: ExecBudget, jobs: usize) -> Result<Cell> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidState(format!("thread pool: {e}")))?;
    let failures: Vec<Failure> = pool.install(|| {
        set.expressions
            .par_iter()
            .filter_map(|e| score_one(e, mode, predictor, budget))
            .collect()
    });
    let n = set.expressions.len();
    let correct = n - failures.len();
    Ok(Cell {
        op: set.setting.op,
        setting: set.setting.digits,
        mode,
        n,
        correct,
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        failures,
    })
}

pub fn eval_end_to_end<P: StepPredictor + ?Sized>(set: &TestSet, predictor: &P, budget: ExecBudget) -> Result<Cell> {
    evaluate(set, Mode::EndToEnd, predictor, budget, 1)
}

pub fn eval_component<P: StepPredictor + ?Sized>(set: &TestSet, mode: Mode, predictor: &P, budget: ExecBudget) -> Result<Cell> {
    if mode == Mode::EndToEnd {
        return Err(Error::DomainError("end-to-end is not a component mode".into()));
    }
    evaluate(set, mode, predictor, budget, 1)
}

impl Report {
    pub fn push(&mut self, cell: Cell) {
        self.cells.push(cell);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(format!("bad report: {e}")))
    }

    /// Accuracy table: one section per mode, operators down, settings
    /// across, percentages with one decimal.
    pub fn summary(&self) -> String {
        let mut modes: Vec<Mode> = self.cells.iter().map(|c| c.mode).collect();
        modes.sort();
        modes.dedup();
        let mut out = String::new();
        for mode in modes {
            let cells: Vec<&Cell> = self.cells.iter().filter(|c| c.mode == mode).collect();
            let mut settings: Vec<DigitSetting> = cells.iter().map(|c| c.setting).collect();
            settings.sort();
            settings.dedup();
            let mut ops: Vec<Op> = cells.iter().map(|c| c.op).collect();
            ops.sort();
            ops.dedup();
            let _ = writeln!(out, "[{mode}]");
            let _ = write!(out, "{:<14}", "op");
            for s in &settings {
                let _ = write!(out, "{:>9}", s.to_string());
            }
            out.push('\n');
            for op in ops {
                let _ = write!(out, "{:<14}", op.tag());
                for s in &settings {
                    match cells.iter().find(|c| c.op == op && c.setting == *s) {
                        Some(c) => {
                            let _ = write!(out, "{:>9.1}", c.accuracy * 100.0);
                        }
                        None => {
                            let _ = write!(out, "{:>9}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}
