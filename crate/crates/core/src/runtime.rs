//! Drives a step predictor through a whole computation.
//!
//! The runtime owns the call stack. A predictor only ever sees a 2- or
//! 4-line window; when an executor's output carries a callee's initial block,
//! the caller is suspended, the callee runs to its halt block, and the caller
//! is resumed with that halt block appended to its input.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::aligner::{self, Expression};
use crate::composers;
use crate::error::{Error, Result};
use crate::machines;
use crate::repr::{Label, Op, Role, Snapshot, StepBlock};

/// Anything that maps a step input to a step output.
///
/// Implementations must be shareable across threads; a single computation
/// calls `predict` sequentially.
pub trait StepPredictor: Sync {
    fn predict(&self, op: Op, role: Role, input: &str) -> Result<String>;
}

impl<P: StepPredictor + ?Sized> StepPredictor for &P {
    fn predict(&self, op: Op, role: Role, input: &str) -> Result<String> {
        (**self).predict(op, role, input)
    }
}

/// The built-in transition tables and aligner.
#[derive(Debug, Clone, Copy, Default)]
pub struct SymbolicPredictor;

impl StepPredictor for SymbolicPredictor {
    fn predict(&self, op: Op, role: Role, input: &str) -> Result<String> {
        symbolic_predict(op, role, input)
    }
}

/// Ground-truth step for a parsed block of any machine.
pub fn symbolic_step(block: &StepBlock) -> Result<StepBlock> {
    if block.op().is_composer() {
        return composers::step(block);
    }
    if block.callee.is_some() {
        return Err(Error::ProtocolViolation(format!("{} never calls", block.op())));
    }
    let next = machines::step(&block.caller.state, &block.caller.command)?;
    Ok(StepBlock::new(next, None))
}

pub fn symbolic_predict(op: Op, role: Role, input: &str) -> Result<String> {
    match role {
        Role::Executor => {
            let block = StepBlock::parse_for(op, input)?;
            Ok(symbolic_step(&block)?.render())
        }
        Role::Aligner if aligner::is_expression_input(input) => {
            let text = input.trim_end_matches('\n');
            let expr = Expression::parse(text)?;
            if expr.op != op {
                return Err(Error::MalformedExpression(format!("{text} is not a {op} expression")));
            }
            Ok(aligner::align_input(text)?.render())
        }
        Role::Aligner => aligner::align_output(op, input),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecBudget {
    /// Total predictor invocations, aligner calls included.
    pub max_steps: usize,
    /// Deepest allowed callee nesting; the top-level machine is depth 0.
    pub max_depth: usize,
    /// Steps slower than this fail the run with `Timeout`.
    pub per_step_timeout: Option<Duration>,
}

impl Default for ExecBudget {
    fn default() -> Self {
        Self { max_steps: 100_000, max_depth: 4, per_step_timeout: None }
    }
}

/// One predictor invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Frame {
    pub depth: usize,
    pub op: Op,
    pub role: Role,
    /// Index of the machine activation this step belongs to; aligner frames
    /// share the top-level activation 0.
    pub activation: usize,
    pub input: String,
    pub output: String,
    #[serde(rename = "latency_us", serialize_with = "as_micros")]
    pub latency: Duration,
}

fn as_micros<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_micros() as u64)
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub expression: String,
    pub frames: Vec<Frame>,
    /// The completed expression, or why the run stopped.
    pub outcome: Result<String>,
    pub step_count: usize,
    pub wall_time: Duration,
}

impl Trace {
    pub fn is_complete(&self) -> bool {
        self.outcome.is_ok()
    }

    /// Frames of executor steps only.
    pub fn executor_frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(|f| f.role == Role::Executor)
    }

    /// The top-level halt block, if the run got that far.
    pub fn halt_block(&self) -> Option<&str> {
        self.executor_frames()
            .filter(|f| f.depth == 0)
            .last()
            .map(|f| f.output.as_str())
            .filter(|out| out.ends_with(crate::repr::HALT_LINE))
    }

    /// Plain-text rendering: the expression, each distinct block in order,
    /// then the completed expression, separated by blank lines. Frames deeper
    /// than `max_depth` are left out; `Some(0)` gives the top-level view.
    pub fn to_text(&self, max_depth: Option<usize>) -> String {
        let mut last: Vec<Option<&str>> = Vec::new();
        let mut parts: Vec<&str> = Vec::new();
        for f in &self.frames {
            if max_depth.is_some_and(|m| f.depth > m) {
                continue;
            }
            if last.len() <= f.depth {
                last.resize(f.depth + 1, None);
            }
            if last[f.depth] != Some(f.input.as_str()) {
                parts.push(&f.input);
            }
            parts.push(&f.output);
            last[f.depth] = Some(&f.output);
        }
        let mut out = parts.join("\n\n");
        out.push('\n');
        out
    }

    /// One JSON object per frame.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            let _ = writeln!(out, "{}", serde_json::to_string(f).expect("frame serializes"));
        }
        out
    }
}

struct Activation {
    id: usize,
    op: Op,
    /// Next executor input.
    current: StepBlock,
}

struct Run<'p, P: ?Sized> {
    predictor: &'p P,
    budget: ExecBudget,
    frames: Vec<Frame>,
    steps: usize,
}

impl<P: StepPredictor + ?Sized> Run<'_, P> {
    fn call(&mut self, depth: usize, activation: usize, op: Op, role: Role, input: String) -> Result<String> {
        if self.steps >= self.budget.max_steps {
            return Err(Error::StepLimitExceeded(self.budget.max_steps));
        }
        self.steps += 1;
        let started = Instant::now();
        let output = self.predictor.predict(op, role, &input)?;
        let latency = started.elapsed();
        let output = output.strip_suffix('\n').unwrap_or(&output).to_string();
        self.frames.push(Frame { depth, op, role, activation, input, output: output.clone(), latency });
        if let Some(limit) = self.budget.per_step_timeout {
            if latency > limit {
                return Err(Error::Timeout(format!("{op} {role} step took {latency:?}")));
            }
        }
        Ok(output)
    }

    fn execute(&mut self, expression: &str) -> Result<String> {
        let expr = Expression::parse(expression)?;
        let op = expr.op;
        let init_text = self.call(0, 0, op, Role::Aligner, expression.to_string())?;
        let init = parse_prediction(op, &init_text)?;
        let halt = self.run_machine(init)?;
        self.call(0, 0, op, Role::Aligner, halt.render())
    }

    /// Executor steps from an initial block to the top-level halt block.
    fn run_machine(&mut self, init: StepBlock) -> Result<StepBlock> {
        if init.callee.is_some() || init.caller.state.label != Label::Q0 || init.caller.command.is_halt() {
            return Err(Error::MalformedPrediction("not an initial block".into()));
        }
        let mut next_id = 1;
        let mut stack = vec![Activation { id: 0, op: init.op(), current: init }];
        // callers waiting for a callee, parallel to stack[..len-1]
        let mut suspended: Vec<Snapshot> = Vec::new();
        loop {
            let depth = stack.len() - 1;
            let top = stack.last_mut().expect("non-empty stack");
            if top.current.caller.command.is_halt() {
                let done = stack.pop().expect("non-empty stack");
                let Some(caller) = suspended.pop() else {
                    return Ok(done.current);
                };
                let parent = stack.last_mut().expect("suspended caller has a frame");
                parent.current = StepBlock::new(caller, Some(done.current.caller));
                continue;
            }
            let (id, top_op) = (top.id, top.op);
            let input = top.current.render();
            let text = self.call(depth, id, top_op, Role::Executor, input)?;
            let out = parse_prediction(top_op, &text)?;
            match out.callee {
                None => {
                    if out.caller.command.call_target().is_some() {
                        return Err(Error::MalformedPrediction("call without a callee block".into()));
                    }
                    stack.last_mut().expect("non-empty").current = out;
                }
                Some(callee) => {
                    if callee.state.label != Label::Q0 || callee.command.is_halt() {
                        return Err(Error::MalformedPrediction("callee block is not an initial block".into()));
                    }
                    if depth + 1 > self.budget.max_depth {
                        return Err(Error::DepthExceeded(self.budget.max_depth));
                    }
                    suspended.push(out.caller);
                    let callee_op = callee.op();
                    stack.push(Activation {
                        id: next_id,
                        op: callee_op,
                        current: StepBlock::new(callee, None),
                    });
                    next_id += 1;
                }
            }
        }
    }
}

fn parse_prediction(op: Op, text: &str) -> Result<StepBlock> {
    StepBlock::parse_for(op, text).map_err(|e| Error::MalformedPrediction(e.to_string()))
}

/// Runs `expression` to completion. Failures are recorded in
/// `Trace::outcome`, never raised.
pub fn execute<P: StepPredictor + ?Sized>(expression: &str, predictor: &P, budget: ExecBudget) -> Trace {
    let started = Instant::now();
    let mut run = Run { predictor, budget, frames: Vec::new(), steps: 0 };
    let outcome = run.execute(expression);
    Trace {
        expression: expression.to_string(),
        frames: run.frames,
        outcome,
        step_count: run.steps,
        wall_time: started.elapsed(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameStatus {
    Correct,
    /// The oracle produced something else.
    Diverged { expected: String },
    /// The oracle rejects the frame's input itself.
    Rejected(Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub index: usize,
    pub depth: usize,
    pub op: Op,
    pub role: Role,
    pub expected: Option<String>,
    pub got: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub statuses: Vec<FrameStatus>,
    pub first_divergence: Option<Divergence>,
    /// False when the trace stopped before the aligner's final answer.
    pub complete: bool,
}

impl Verdict {
    pub fn all_steps_correct(&self) -> bool {
        self.complete && self.first_divergence.is_none()
    }
}

/// Runs the executors alone, starting from an initial block (no aligner
/// calls). The outcome is the rendered top-level halt block.
pub fn execute_from_init<P: StepPredictor + ?Sized>(init: &StepBlock, predictor: &P, budget: ExecBudget) -> Trace {
    let started = Instant::now();
    let mut run = Run { predictor, budget, frames: Vec::new(), steps: 0 };
    let outcome = run.run_machine(init.clone()).map(|halt| halt.render());
    Trace {
        expression: init.render(),
        frames: run.frames,
        outcome,
        step_count: run.steps,
        wall_time: started.elapsed(),
    }
}

/// Replays every frame through the symbolic predictor.
pub fn verify_trace(trace: &Trace) -> Verdict {
    let mut statuses = Vec::with_capacity(trace.frames.len());
    let mut first = None;
    for (index, f) in trace.frames.iter().enumerate() {
        let status = match symbolic_predict(f.op, f.role, &f.input) {
            Ok(expected) if expected == f.output => FrameStatus::Correct,
            Ok(expected) => FrameStatus::Diverged { expected },
            Err(e) => FrameStatus::Rejected(e),
        };
        if first.is_none() && status != FrameStatus::Correct {
            first = Some(Divergence {
                index,
                depth: f.depth,
                op: f.op,
                role: f.role,
                expected: match &status {
                    FrameStatus::Diverged { expected } => Some(expected.clone()),
                    _ => None,
                },
                got: f.output.clone(),
            });
        }
        statuses.push(status);
    }
    Verdict { statuses, first_divergence: first, complete: trace.is_complete() }
}
