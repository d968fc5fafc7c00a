use std::fmt::Write as _;

use super::{Head, Label, Op, Tag};
use crate::digits::DigitString;
use crate::error::{Error, Result};

pub const HALT_LINE: &str = "No command to execute. Halt state.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// Value written by a register action: `[COUNT] 0` is a scalar write,
/// `[COUNT]|4|0|5|1` a glued digit string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegisterValue {
    Scalar(u8),
    Digits(DigitString),
}

impl RegisterValue {
    pub fn to_digits(&self) -> DigitString {
        match self {
            RegisterValue::Scalar(d) => DigitString::digit(*d),
            RegisterValue::Digits(d) => d.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    WriteRegister(Tag, RegisterValue),
    WriteOutputDigit(u8),
    WriteOutputBool(bool),
    Move(Head, Direction),
    /// Bare `[OUTPUT]`: retire the output head (or tag) before halting.
    FinalizeOutput,
    /// Bare `[C]`: leaves the carry register as it is.
    RetainCarry,
    Call(Op),
    Goto(Label),
}

impl Action {
    fn write(&self, out: &mut String) {
        match self {
            Action::WriteRegister(tag, RegisterValue::Scalar(d)) => {
                let _ = write!(out, "{} {d}", tag.token());
            }
            Action::WriteRegister(tag, RegisterValue::Digits(d)) => {
                out.push_str(tag.token());
                d.write_cells(out);
            }
            Action::WriteOutputDigit(d) => {
                let _ = write!(out, "[OUTPUT] {d}");
            }
            Action::WriteOutputBool(b) => {
                out.push_str(if *b { "[OUTPUT] True" } else { "[OUTPUT] False" });
            }
            Action::Move(head, dir) => {
                out.push_str(head.token());
                out.push_str(match dir {
                    Direction::Left => " LEFT",
                    Direction::Right => " RIGHT",
                });
            }
            Action::FinalizeOutput => out.push_str("[OUTPUT]"),
            Action::RetainCarry => out.push_str("[C]"),
            Action::Call(op) => {
                out.push_str("[CALL] ");
                out.push_str(op.tag());
            }
            Action::Goto(label) => out.push_str(label.as_str()),
        }
    }

    fn parse(text: &str) -> Option<Action> {
        if let Some(label) = Label::parse(text) {
            return Some(Action::Goto(label));
        }
        match text {
            "[OUTPUT]" => return Some(Action::FinalizeOutput),
            "[C]" => return Some(Action::RetainCarry),
            _ => {}
        }
        if let Some(name) = text.strip_prefix("[CALL] ") {
            return Op::from_tag(name).map(Action::Call);
        }
        let close = text.find(']')?;
        let name = text.strip_prefix('[')?.get(..close - 1)?;
        let rest = &text[close + 1..];
        if let Some(arg) = rest.strip_prefix(' ') {
            let dir = match arg {
                "RIGHT" => Some(Direction::Right),
                "LEFT" => Some(Direction::Left),
                _ => None,
            };
            if let Some(dir) = dir {
                return Head::from_name(name).map(|h| Action::Move(h, dir));
            }
            let scalar = match arg.as_bytes() {
                [d] if d.is_ascii_digit() => Some(d - b'0'),
                _ => None,
            };
            return match (name, arg, scalar) {
                ("OUTPUT", "True", _) => Some(Action::WriteOutputBool(true)),
                ("OUTPUT", "False", _) => Some(Action::WriteOutputBool(false)),
                ("OUTPUT", _, Some(d)) => Some(Action::WriteOutputDigit(d)),
                (_, _, Some(d)) => {
                    Tag::from_name(name).map(|t| Action::WriteRegister(t, RegisterValue::Scalar(d)))
                }
                _ => None,
            };
        }
        // glued digit string: [TAG]|d|d...
        let tag = Tag::from_name(name)?;
        let bytes = rest.as_bytes();
        if bytes.is_empty() || bytes.len() % 2 != 0 {
            return None;
        }
        let mut digits = Vec::with_capacity(bytes.len() / 2);
        for pair in bytes.chunks(2) {
            if pair[0] != b'|' || !pair[1].is_ascii_digit() {
                return None;
            }
            digits.push(pair[1] - b'0');
        }
        let digits = DigitString::from_r2l(digits).ok()?;
        Some(Action::WriteRegister(tag, RegisterValue::Digits(digits)))
    }
}

/// A command line: either an action list ending in a state transition, or
/// the halt sentinel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Halt,
    Run(Vec<Action>),
}

impl Command {
    pub fn run(actions: Vec<Action>) -> Self {
        Command::Run(actions)
    }

    pub fn is_halt(&self) -> bool {
        matches!(self, Command::Halt)
    }

    pub fn actions(&self) -> &[Action] {
        match self {
            Command::Halt => &[],
            Command::Run(actions) => actions,
        }
    }

    /// Operator named by this command's `[CALL]`, if any.
    pub fn call_target(&self) -> Option<Op> {
        self.actions().iter().find_map(|a| match a {
            Action::Call(op) => Some(*op),
            _ => None,
        })
    }

    pub fn goto(&self) -> Option<Label> {
        match self.actions().last() {
            Some(Action::Goto(label)) => Some(*label),
            _ => None,
        }
    }

    /// Parses a command line addressed to `op`'s machine; the prefix (`CMD:`
    /// for addition, `CMD` otherwise) must match.
    pub fn parse(op: Op, line: &str) -> Result<Self> {
        if line == HALT_LINE {
            return Ok(Command::Halt);
        }
        let bad = |msg: &str| Error::MalformedCommand(format!("{msg} in {line:?}"));
        let body = line.strip_prefix(op.command_prefix()).ok_or_else(|| bad("wrong command prefix"))?;
        let mut actions = Vec::new();
        for part in body.split(", ") {
            actions.push(Action::parse(part).ok_or_else(|| bad(&format!("unknown action {part:?}")))?);
        }
        let cmd = Command::Run(actions);
        cmd.validate().map_err(|e| bad(&e))?;
        Ok(cmd)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.is_halt() {
            return Ok(());
        }
        let actions = self.actions();
        let Some((last, init)) = actions.split_last() else {
            return Err("empty action list".into());
        };
        if !matches!(last, Action::Goto(_)) {
            return Err("missing terminal state transition".into());
        }
        if init.iter().any(|a| matches!(a, Action::Goto(_))) {
            return Err("state transition before the end".into());
        }
        if actions.iter().filter(|a| matches!(a, Action::Call(_))).count() > 1 {
            return Err("more than one call".into());
        }
        Ok(())
    }

    pub fn render(&self, op: Op) -> String {
        let mut out = String::with_capacity(48);
        self.render_into(op, &mut out);
        out
    }

    pub fn render_into(&self, op: Op, out: &mut String) {
        match self {
            Command::Halt => out.push_str(HALT_LINE),
            Command::Run(actions) => {
                out.push_str(op.command_prefix());
                for (i, action) in actions.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    action.write(out);
                }
            }
        }
    }
}
