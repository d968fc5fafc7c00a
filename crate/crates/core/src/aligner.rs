//! Conversion between raw expressions such as `45+67=` and the machine
//! representation, in both directions.

use std::cmp::Ordering;
use std::fmt;

use crate::digits::DigitString;
use crate::error::{Error, Result};
use crate::machines;
use crate::repr::{Cells, Label, Op, Snapshot, StepBlock};

/// A single-operator expression `lhs <op> rhs =` with canonical operands.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expression {
    pub op: Op,
    pub lhs: DigitString,
    pub rhs: DigitString,
}

impl Expression {
    /// Builds an expression, enforcing canonical operands and the SUB/DIV
    /// domains.
    pub fn new(op: Op, lhs: DigitString, rhs: DigitString) -> Result<Self> {
        if op.symbol().is_none() {
            return Err(Error::MalformedExpression(format!("{op} has no expression form")));
        }
        for d in [&lhs, &rhs] {
            if !d.is_canonical() {
                return Err(Error::MalformedExpression(format!("operand {d} has leading zeros")));
            }
        }
        match op {
            Op::Sub if compare(&lhs, &rhs) == Ordering::Less => {
                return Err(Error::DomainError(format!("{lhs}-{rhs} is negative")));
            }
            Op::Div if rhs == DigitString::zero() => {
                return Err(Error::DomainError(format!("{lhs}//{rhs} divides by zero")));
            }
            _ => {}
        }
        Ok(Self { op, lhs, rhs })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::MalformedExpression(format!("{text:?} matches no template"));
        let body = text.strip_suffix('=').ok_or_else(bad)?;
        let start = body.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?;
        let len = body[start..].find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
        let symbol = &body[start..start + len];
        let op = Op::ARITHMETIC.into_iter().find(|op| op.symbol() == Some(symbol)).ok_or_else(bad)?;
        let lhs = DigitString::parse_l2r(&body[..start]).map_err(|_| bad())?;
        let rhs = DigitString::parse_l2r(&body[start + len..]).map_err(|_| bad())?;
        Self::new(op, lhs, rhs)
    }

    /// The expression with `result` appended, e.g. `45+67=112`.
    pub fn completed(&self, result: &str) -> String {
        format!("{self}{result}")
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let symbol = self.op.symbol().expect("arithmetic operator");
        write!(f, "{}{symbol}{}=", self.lhs, self.rhs)
    }
}

/// Numeric comparison of two canonical digit strings.
pub(crate) fn compare(a: &DigitString, b: &DigitString) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.digits().iter().rev().cmp(b.digits().iter().rev()))
}

pub fn canonicalize(d: &DigitString) -> DigitString {
    d.canonicalize()
}

/// Expression text to the operator's initial block.
pub fn align_input(text: &str) -> Result<Snapshot> {
    let expr = Expression::parse(text)?;
    machines::initial(expr.op, &[expr.lhs, expr.rhs])
}

/// Halt block text to the completed expression.
pub fn align_output(op: Op, halt_block: &str) -> Result<String> {
    let bad = |msg: String| Error::MalformedHalt(msg);
    let block = StepBlock::parse(halt_block).map_err(|e| bad(e.to_string()))?;
    if block.callee.is_some() || !block.caller.is_halted() {
        return Err(bad("not a halt block".into()));
    }
    let state = &block.caller.state;
    if state.op != op {
        return Err(bad(format!("expected a {op} halt block, got {}", state.op)));
    }
    debug_assert_eq!(state.label, Label::QH);
    let operand = |i: usize| {
        state
            .digits(i)
            .filter(|d| d.is_canonical())
            .cloned()
            .ok_or_else(|| bad(format!("operand region {i} is not a canonical number")))
    };
    let expr = Expression { op, lhs: operand(0)?, rhs: operand(1)? };
    let result = match (op.is_comparison(), &state.regions.last().expect("non-empty").cells) {
        (true, Cells::Bool(b)) => if *b { "True" } else { "False" }.to_string(),
        (false, Cells::Digits(d)) if state.regions.len() > 2 => d.canonicalize().to_l2r_string(),
        _ => return Err(bad("no result region".into())),
    };
    Ok(expr.completed(&result))
}

/// True when an aligner input is an expression rather than a halt block.
pub fn is_expression_input(text: &str) -> bool {
    !text.trim_end_matches('\n').contains('\n')
}
