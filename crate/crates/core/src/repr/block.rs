use super::{Command, Label, MachineState, Op};
use crate::error::{Error, Result};

/// A state line paired with the command line that follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub state: MachineState,
    pub command: Command,
}

impl Snapshot {
    pub fn new(state: MachineState, command: Command) -> Self {
        Self { state, command }
    }

    pub fn op(&self) -> Op {
        self.state.op
    }

    pub fn is_halted(&self) -> bool {
        self.state.label == Label::QH && self.command.is_halt()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    pub fn render_into(&self, out: &mut String) {
        self.state.render_into(out);
        out.push('\n');
        self.command.render_into(self.state.op, out);
    }

    pub fn parse(state_line: &str, command_line: &str) -> Result<Self> {
        let state = MachineState::parse(state_line)?;
        let command = Command::parse(state.op, command_line)?;
        Ok(Self { state, command })
    }
}

/// The unit a predictor consumes and produces: the caller's state and
/// command, and for call boundaries a second pair for the callee.
///
/// As input, a callee pair is the callee's halt block being handed back. As
/// output, it is the callee's initial state and first command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepBlock {
    pub caller: Snapshot,
    pub callee: Option<Snapshot>,
}

impl StepBlock {
    pub fn new(caller: Snapshot, callee: Option<Snapshot>) -> Self {
        Self { caller, callee }
    }

    pub fn single(state: MachineState, command: Command) -> Self {
        Self { caller: Snapshot::new(state, command), callee: None }
    }

    pub fn op(&self) -> Op {
        self.caller.state.op
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(128);
        self.caller.render_into(&mut out);
        if let Some(callee) = &self.callee {
            out.push('\n');
            callee.render_into(&mut out);
        }
        out
    }

    /// Parses two or four newline-separated lines. A single trailing newline
    /// is tolerated.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        let lines: Vec<&str> = text.split('\n').collect();
        let block = match lines.as_slice() {
            [s, c] => StepBlock { caller: Snapshot::parse(s, c)?, callee: None },
            [s, c, cs, cc] => {
                let caller = Snapshot::parse(s, c)?;
                let callee = Snapshot::parse(cs, cc)?;
                StepBlock { caller, callee: Some(callee) }
            }
            _ => {
                return Err(Error::MalformedBlock(format!(
                    "expected 2 or 4 lines, got {}",
                    lines.len()
                )))
            }
        };
        block.validate()?;
        Ok(block)
    }

    fn validate(&self) -> Result<()> {
        let Some(callee) = &self.callee else {
            return Ok(());
        };
        let Some(target) = self.caller.command.call_target() else {
            return Err(Error::MalformedBlock("callee lines without a [CALL] in the caller".into()));
        };
        if callee.op() != target {
            return Err(Error::MalformedBlock(format!(
                "caller calls {target} but callee is {}",
                callee.op()
            )));
        }
        let halted = callee.is_halted();
        let initial = callee.state.label == Label::Q0 && !callee.command.is_halt();
        if !halted && !initial {
            return Err(Error::MalformedBlock(
                "callee must be a halt block or an initial block".into(),
            ));
        }
        Ok(())
    }

    /// Parses and checks the caller is `op`'s machine.
    pub fn parse_for(op: Op, text: &str) -> Result<Self> {
        let block = Self::parse(text)?;
        if block.op() != op {
            return Err(Error::MalformedBlock(format!("expected a {op} block, got {}", block.op())));
        }
        Ok(block)
    }
}
