//! The line-oriented text representation exchanged with step predictors.
//!
//! A step block is two or four lines: a machine state, the command about to
//! run against it, and optionally a callee's state and command. Everything
//! here parses and renders byte-exactly; `render(parse(t)) == t` for every
//! line the engine emits.

mod block;
mod command;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use block::{Snapshot, StepBlock};
pub use command::{Action, Command, Direction, RegisterValue, HALT_LINE};
pub use state::{Cells, HeadMark, MachineState, Region};

use crate::error::Error;

/// The nine machines: seven arithmetic operators and two auxiliaries used by
/// subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    GreaterThan,
    LessThan,
    Equal,
    Reflection,
    LeftMask,
}

impl Op {
    pub const ALL: [Op; 9] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::GreaterThan,
        Op::LessThan,
        Op::Equal,
        Op::Reflection,
        Op::LeftMask,
    ];

    /// Operators reachable from an arithmetic expression.
    pub const ARITHMETIC: [Op; 7] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::GreaterThan,
        Op::LessThan,
        Op::Equal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Op::Add => "ADD",
            Op::Sub => "SUB",
            Op::Mul => "MUL",
            Op::Div => "DIV",
            Op::GreaterThan => "GREATER_THAN",
            Op::LessThan => "LESS_THAN",
            Op::Equal => "EQUAL",
            Op::Reflection => "REFLECTION",
            Op::LeftMask => "LEFT_MASK",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.tag() == tag)
    }

    /// Infix symbol in expression templates; `None` for the auxiliaries.
    pub fn symbol(self) -> Option<&'static str> {
        match self {
            Op::Add => Some("+"),
            Op::Sub => Some("-"),
            Op::Mul => Some("*"),
            Op::Div => Some("//"),
            Op::GreaterThan => Some(">"),
            Op::LessThan => Some("<"),
            Op::Equal => Some("=="),
            Op::Reflection | Op::LeftMask => None,
        }
    }

    /// Short lowercase name used on the command line and in file layouts.
    pub fn slug(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::GreaterThan => "gt",
            Op::LessThan => "lt",
            Op::Equal => "eq",
            Op::Reflection => "reflection",
            Op::LeftMask => "left_mask",
        }
    }

    pub fn from_slug(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.slug() == s)
    }

    /// Composers issue `[CALL]`s; everything else is a basic executor.
    pub fn is_composer(self) -> bool {
        matches!(self, Op::Sub | Op::Mul | Op::Div)
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, Op::GreaterThan | Op::LessThan | Op::Equal)
    }

    pub fn arity(self) -> usize {
        match self {
            Op::LeftMask => 1,
            _ => 2,
        }
    }

    /// Basic executors scan from a blank cell in front of the first operand.
    pub(crate) fn has_leading_blank(self) -> bool {
        !self.is_composer()
    }

    pub(crate) fn command_prefix(self) -> &'static str {
        match self {
            Op::Add => "CMD: ",
            _ => "CMD ",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Op::from_tag(s)
            .or_else(|| Op::from_slug(&s.to_ascii_lowercase()))
            .ok_or_else(|| Error::MalformedState(format!("unknown operator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Q0,
    Q1,
    Q2,
    Q3,
    QH,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Q0 => "q0",
            Label::Q1 => "q1",
            Label::Q2 => "q2",
            Label::Q3 => "q3",
            Label::QH => "qH",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "q0" => Some(Label::Q0),
            "q1" => Some(Label::Q1),
            "q2" => Some(Label::Q2),
            "q3" => Some(Label::Q3),
            "qH" => Some(Label::QH),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Head tokens. `Head` is the single head of the left-mask machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    Head1,
    Head2,
    Head,
    Output,
}

impl Head {
    pub fn token(self) -> &'static str {
        match self {
            Head::Head1 => "[HEAD1]",
            Head::Head2 => "[HEAD2]",
            Head::Head => "[HEAD]",
            Head::Output => "[OUTPUT]",
        }
    }

    fn from_name(name: &str) -> Option<Head> {
        match name {
            "HEAD1" => Some(Head::Head1),
            "HEAD2" => Some(Head::Head2),
            "HEAD" => Some(Head::Head),
            "OUTPUT" => Some(Head::Output),
            _ => None,
        }
    }
}

/// Register tags, rendered in brackets and glued to the register's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    C,
    Count,
    Output,
    Acc,
}

impl Tag {
    pub fn token(self) -> &'static str {
        match self {
            Tag::C => "[C]",
            Tag::Count => "[COUNT]",
            Tag::Output => "[OUTPUT]",
            Tag::Acc => "[ACC]",
        }
    }

    fn from_name(name: &str) -> Option<Tag> {
        match name {
            "C" => Some(Tag::C),
            "COUNT" => Some(Tag::Count),
            "OUTPUT" => Some(Tag::Output),
            "ACC" => Some(Tag::Acc),
            _ => None,
        }
    }
}

/// Who the step input is addressed to: the per-operator executor or the
/// per-operator aligner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Executor,
    Aligner,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Executor => "executor",
            Role::Aligner => "aligner",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
