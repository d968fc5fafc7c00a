//! Training corpus compiler.
//!
//! Expressions are drawn per operand-length class, traced with the symbolic
//! predictor, and turned into (input, output) records. Every machine
//! activation contributes its first and last transition; the steps in
//! between are kept with probability `intermediate_sample_rate`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::{self, Expression};
use crate::digits::DigitString;
use crate::error::{Error, Result};
use crate::prompts;
use crate::repr::{Op, Role};
use crate::runtime::{self, ExecBudget, SymbolicPredictor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePolicy {
    pub per_class_count: usize,
    /// Longest operand length for the length-class operators. MUL/DIV never
    /// exceed their own 10-digit range.
    pub max_digits: usize,
    /// Count multiplier for classes whose longer operand has at most
    /// `short_threshold` digits.
    pub short_boost: usize,
    pub short_threshold: usize,
    pub intermediate_sample_rate: f64,
    /// Share of equal pairs in EQ corpora.
    pub equal_true_fraction: f64,
    pub seed: u64,
}

impl Default for SamplePolicy {
    fn default() -> Self {
        Self {
            per_class_count: 20,
            max_digits: 100,
            short_boost: 3,
            short_threshold: 10,
            intermediate_sample_rate: 0.1,
            equal_true_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SamplePolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::DomainError(format!("sample policy: {msg}")));
        if self.per_class_count == 0 || self.max_digits == 0 || self.short_boost == 0 {
            return bad("counts must be positive");
        }
        if !(self.intermediate_sample_rate > 0.0 && self.intermediate_sample_rate <= 1.0) {
            return bad("intermediate_sample_rate must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.equal_true_fraction) {
            return bad("equal_true_fraction must be in [0, 1]");
        }
        Ok(())
    }

    fn class_count(&self, la: usize, lb: usize) -> usize {
        if la.max(lb) <= self.short_threshold {
            self.per_class_count * self.short_boost
        } else {
            self.per_class_count
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub op: Op,
    pub role: Role,
    pub stage: u8,
    pub input: String,
    pub output: String,
}

/// Uniform number with exactly `len` digits (no leading zero unless `len`
/// is 1).
pub fn random_digits<R: Rng>(rng: &mut R, len: usize) -> DigitString {
    assert!(len > 0);
    let mut digits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..10)).collect();
    if len > 1 {
        digits[len - 1] = rng.gen_range(1..10);
    }
    DigitString::from_r2l(digits).expect("digits in range")
}

fn op_index(op: Op) -> u64 {
    Op::ALL.iter().position(|o| *o == op).expect("known op") as u64 + 1
}

/// Independent stream per (operator, purpose) under one seed.
pub(crate) fn op_rng(seed: u64, op: Op, purpose: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(op_index(op) << 32 | u64::from(purpose));
    rng
}

/// `a = b*c + r` with `b` of `b_len` digits, quotient `c` and a uniform
/// remainder. `b_len` stays within 18 digits so the product fits in u128.
pub(crate) fn division_case<R: Rng>(rng: &mut R, b_len: usize, c: u64) -> (DigitString, DigitString) {
    let b = if b_len == 1 { DigitString::digit(rng.gen_range(1..10)) } else { random_digits(rng, b_len) };
    let bv: u128 = b.to_l2r_string().parse().expect("fits");
    let r = rng.gen_range(0..bv);
    let a = bv * u128::from(c) + r;
    (DigitString::parse_l2r(&a.to_string()).expect("decimal"), b)
}

fn expr(op: Op, a: DigitString, b: DigitString) -> Expression {
    Expression::new(op, a, b).expect("generated operands are in domain")
}

/// Draws the expression set for one operator.
pub fn sample_expressions(op: Op, policy: &SamplePolicy) -> Result<Vec<Expression>> {
    policy.validate()?;
    if op.symbol().is_none() {
        return Err(Error::DomainError(format!("{op} has no expression form")));
    }
    let mut rng = op_rng(policy.seed, op, 0);
    let n = policy.max_digits;
    let mut out = Vec::new();
    match op {
        Op::Mul => {
            for la in 1..=n.min(10) {
                for b in 1..=15u64 {
                    for _ in 0..policy.per_class_count {
                        let a = random_digits(&mut rng, la);
                        out.push(expr(op, a, DigitString::from_u64(b)));
                    }
                }
            }
        }
        Op::Div => {
            for lb in 1..=n.min(10) {
                for c in 1..=15u64 {
                    for _ in 0..policy.per_class_count {
                        let (a, b) = division_case(&mut rng, lb, c);
                        out.push(expr(op, a, b));
                    }
                }
            }
        }
        _ => {
            for la in 1..=n {
                for lb in 1..=n {
                    if op == Op::Sub && lb > la {
                        continue;
                    }
                    for _ in 0..policy.class_count(la, lb) {
                        let mut a = random_digits(&mut rng, la);
                        let mut b = random_digits(&mut rng, lb);
                        if op == Op::Sub && aligner::compare(&a, &b).is_lt() {
                            std::mem::swap(&mut a, &mut b);
                        }
                        out.push(expr(op, a, b));
                    }
                }
            }
            if op == Op::Equal {
                out = inject_equal_pairs(out, policy.equal_true_fraction, &mut rng);
            }
        }
    }
    Ok(out)
}

/// Adds `a==a` pairs so they make up `fraction` of the result. Their lengths
/// follow the length distribution of the random pairs.
fn inject_equal_pairs<R: Rng>(base: Vec<Expression>, fraction: f64, rng: &mut R) -> Vec<Expression> {
    if fraction <= 0.0 || base.is_empty() {
        return base;
    }
    let (extra, mut out) = if fraction >= 1.0 {
        (base.len(), Vec::with_capacity(base.len()))
    } else {
        let extra = (base.len() as f64 * fraction / (1.0 - fraction)).round() as usize;
        let mut out = Vec::with_capacity(base.len() + extra);
        out.extend(base.iter().cloned());
        (extra, out)
    };
    for k in 0..extra {
        let a = random_digits(rng, base[k % base.len()].lhs.len());
        out.push(expr(Op::Equal, a.clone(), a));
    }
    out
}

/// Expressions per (len a, len b) class.
pub fn class_counts(exprs: &[Expression]) -> BTreeMap<(usize, usize), usize> {
    let mut counts = BTreeMap::new();
    for e in exprs {
        *counts.entry((e.lhs.len(), e.rhs.len())).or_insert(0) += 1;
    }
    counts
}

fn check_stage(stage: u8) -> Result<()> {
    match stage {
        1 | 2 => Ok(()),
        _ => Err(Error::DomainError(format!("stage must be 1 or 2, got {stage}"))),
    }
}

/// Executor records for each expression, in expression order.
pub fn gen_executor_samples(exprs: &[Expression], stage: u8, policy: &SamplePolicy) -> Result<Vec<SampleRecord>> {
    check_stage(stage)?;
    policy.validate()?;
    let per_expr: Vec<Result<Vec<SampleRecord>>> = exprs
        .par_iter()
        .enumerate()
        .map(|(i, e)| executor_records(e, i as u64, stage, policy))
        .collect();
    let mut out = Vec::new();
    for recs in per_expr {
        out.extend(recs?);
    }
    Ok(out)
}

fn executor_records(e: &Expression, index: u64, stage: u8, policy: &SamplePolicy) -> Result<Vec<SampleRecord>> {
    let trace = runtime::execute(&e.to_string(), &SymbolicPredictor, ExecBudget::default());
    trace.outcome.clone()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed ^ op_index(e.op).rotate_right(8));
    rng.set_stream(index);

    let frames: Vec<_> = trace.executor_frames().collect();
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    let mut last: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, f) in frames.iter().enumerate() {
        first.entry(f.activation).or_insert(i);
        last.insert(f.activation, i);
    }
    let mut out = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let boundary = first[&f.activation] == i || last[&f.activation] == i;
        // draw for every frame so the stream does not depend on which are boundaries
        let drawn = rng.gen_bool(policy.intermediate_sample_rate);
        if boundary || drawn {
            out.push(SampleRecord {
                op: f.op,
                role: Role::Executor,
                stage,
                input: prompts::wrap(f.op, Role::Executor, stage, &f.input),
                output: f.output.clone(),
            });
        }
    }
    Ok(out)
}

/// Two records per expression: expression to initial block, and halt block
/// to completed expression.
pub fn gen_aligner_samples(exprs: &[Expression], stage: u8) -> Result<Vec<SampleRecord>> {
    check_stage(stage)?;
    let per_expr: Vec<Result<[SampleRecord; 2]>> = exprs
        .par_iter()
        .map(|e| {
            let text = e.to_string();
            let trace = runtime::execute(&text, &SymbolicPredictor, ExecBudget::default());
            trace.outcome.clone()?;
            let aligner_frames: Vec<_> = trace.frames.iter().filter(|f| f.role == Role::Aligner).collect();
            let [align_in, align_out] = aligner_frames[..] else {
                return Err(Error::InvalidState("trace without two aligner steps".into()));
            };
            let record = |input: &str, output: &str| SampleRecord {
                op: e.op,
                role: Role::Aligner,
                stage,
                input: prompts::wrap(e.op, Role::Aligner, stage, input),
                output: output.to_string(),
            };
            Ok([record(&align_in.input, &align_in.output), record(&align_out.input, &align_out.output)])
        })
        .collect();
    let mut out = Vec::with_capacity(exprs.len() * 2);
    for pair in per_expr {
        out.extend(pair?);
    }
    Ok(out)
}

/// Newline-delimited JSON, one record per line.
pub fn write_corpus(records: &[SampleRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Io(format!("bad corpus line: {e}"))))
        .collect()
}

/// Replays a record through the symbolic predictor.
pub fn replay(record: &SampleRecord) -> Result<bool> {
    let sample = prompts::unwrap(record.op, record.role, record.stage, &record.input)
        .ok_or_else(|| Error::MalformedBlock("record input lacks its prompt".into()))?;
    Ok(runtime::symbolic_predict(record.op, record.role, sample)? == record.output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SamplePolicy {
        SamplePolicy { per_class_count: 2, max_digits: 4, seed, ..SamplePolicy::default() }
    }

    #[test]
    fn class_layout() {
        let p = small(1);
        let add = sample_expressions(Op::Add, &p).unwrap();
        let counts = class_counts(&add);
        assert_eq!(counts.len(), 16);
        // every class here is short, so all are boosted
        assert!(counts.values().all(|&c| c == 6));
        let sub = sample_expressions(Op::Sub, &p).unwrap();
        assert!(sub.iter().all(|e| e.lhs.len() >= e.rhs.len()));
        assert_eq!(class_counts(&sub).len(), 10);
    }

    #[test]
    fn boost_applies_only_to_short_classes() {
        let p = SamplePolicy { per_class_count: 1, max_digits: 12, short_threshold: 10, ..SamplePolicy::default() };
        let counts = class_counts(&sample_expressions(Op::GreaterThan, &p).unwrap());
        assert_eq!(counts[&(10, 10)], 3);
        assert_eq!(counts[&(11, 3)], 1);
    }

    #[test]
    fn mul_and_div_ranges() {
        let p = SamplePolicy { per_class_count: 3, ..SamplePolicy::default() };
        let mul = sample_expressions(Op::Mul, &p).unwrap();
        assert_eq!(mul.len(), 10 * 15 * 3);
        for e in &mul {
            let b: u64 = e.rhs.to_l2r_string().parse().unwrap();
            assert!((1..=15).contains(&b) && e.lhs.len() <= 10);
        }
        for e in sample_expressions(Op::Div, &p).unwrap() {
            let a: u128 = e.lhs.to_l2r_string().parse().unwrap();
            let b: u128 = e.rhs.to_l2r_string().parse().unwrap();
            assert!((1..=15).contains(&(a / b)), "{e}");
        }
    }

    #[test]
    fn equal_injection() {
        let p = SamplePolicy { per_class_count: 3, max_digits: 3, ..SamplePolicy::default() };
        let eq = sample_expressions(Op::Equal, &p).unwrap();
        let trues = eq.iter().filter(|e| e.lhs == e.rhs).count();
        assert!(trues * 2 >= eq.len() - 2, "{trues} of {}", eq.len());
        let all = SamplePolicy { equal_true_fraction: 1.0, ..p };
        assert!(sample_expressions(Op::Equal, &all).unwrap().iter().all(|e| e.lhs == e.rhs));
        let none = SamplePolicy { equal_true_fraction: 0.0, ..p };
        assert_eq!(sample_expressions(Op::Equal, &none).unwrap().len(), 9 * 3 * 3);
    }

    #[test]
    fn addition_first_and_last_steps() {
        let e = Expression::parse("45+67=").unwrap();
        let p = SamplePolicy { intermediate_sample_rate: 1e-9, ..SamplePolicy::default() };
        let recs = gen_executor_samples(&[e.clone()], 2, &p).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].input.starts_with("ADD, q0, "));
        assert!(recs[1].output.ends_with("Halt state."));
        let all = SamplePolicy { intermediate_sample_rate: 1.0, ..SamplePolicy::default() };
        assert_eq!(gen_executor_samples(&[e], 2, &all).unwrap().len(), 4);
    }

    #[test]
    fn records_replay_and_are_deterministic() {
        let p = small(9);
        let exprs = sample_expressions(Op::Sub, &p).unwrap();
        let a = gen_executor_samples(&exprs, 1, &p).unwrap();
        let b = gen_executor_samples(&exprs, 1, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| replay(r).unwrap()));
        let al = gen_aligner_samples(&exprs, 1).unwrap();
        assert_eq!(al.len(), exprs.len() * 2);
        assert!(al.iter().all(|r| replay(r).unwrap()));
    }

    #[test]
    fn corpus_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let exprs = vec![Expression::parse("0+0=").unwrap()];
        let recs = gen_aligner_samples(&exprs, 2).unwrap();
        assert_eq!(recs[1].output, "0+0=0");
        write_corpus(&recs, &path).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), recs);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.starts_with("{\"op\":\"ADD\",\"role\":\"aligner\",\"stage\":2,"));
    }

    #[test]
    fn rejects_bad_policy() {
        let p = SamplePolicy { intermediate_sample_rate: 0.0, ..SamplePolicy::default() };
        assert!(sample_expressions(Op::Add, &p).is_err());
        assert!(gen_aligner_samples(&[], 3).is_err());
    }
}
