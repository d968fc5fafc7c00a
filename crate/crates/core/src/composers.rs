//! Transition functions of the executor composers: SUB, MUL and DIV.
//!
//! A composer step consumes a block whose command either has no call (the
//! q0 step) or a `[CALL]` together with the callee's halt block, and emits
//! the next caller snapshot, plus the next callee's initial block whenever
//! the emitted command calls again.

use crate::digits::DigitString;
use crate::error::{Error, Result};
use crate::machines;
use crate::repr::{
    Action, Cells, Command, Label, MachineState, Op, Region, Snapshot, StepBlock, Tag,
};

pub fn step(block: &StepBlock) -> Result<StepBlock> {
    match block.op() {
        Op::Mul => mul_step(block),
        Op::Div => div_step(block),
        Op::Sub => sub_step(block),
        op => Err(Error::InvalidState(format!("{op} is not a composer"))),
    }
}

/// What arrived with the block: nothing (q0) or a finished callee.
enum Incoming<'a> {
    Start,
    Returned(Op, &'a MachineState),
}

fn incoming(block: &StepBlock) -> Result<Incoming<'_>> {
    let caller = &block.caller;
    if caller.state.label == Label::QH || caller.command.is_halt() {
        return Err(Error::InvalidState(format!("{} already halted", caller.op())));
    }
    match (caller.command.call_target(), &block.callee) {
        (None, None) => Ok(Incoming::Start),
        (Some(target), Some(callee)) => {
            if callee.op() != target {
                return Err(Error::ProtocolViolation(format!(
                    "pending call to {target} but {} returned",
                    callee.op()
                )));
            }
            if !callee.is_halted() {
                return Err(Error::ProtocolViolation(format!("{target} has not halted")));
            }
            Ok(Incoming::Returned(target, &callee.state))
        }
        (Some(target), None) => {
            Err(Error::ProtocolViolation(format!("missing halt block of {target}")))
        }
        (None, Some(_)) => Err(Error::ProtocolViolation("callee block without a call".into())),
    }
}

fn expect_goto(block: &StepBlock, label: Label) -> Result<()> {
    match block.caller.command.goto() {
        Some(l) if l == label => Ok(()),
        other => Err(Error::ProtocolViolation(format!(
            "{} {} command should continue to {label}, not {}",
            block.op(),
            block.caller.state.label,
            other.map_or("nothing", Label::as_str)
        ))),
    }
}

fn operand(s: &MachineState, i: usize) -> Result<&DigitString> {
    s.digits(i).ok_or_else(|| Error::InvalidState(format!("{} lacks operand {}", s.op, i + 1)))
}

fn register(s: &MachineState, tag: Tag) -> Result<&DigitString> {
    match s.register(tag) {
        Some(Cells::Digits(d)) => Ok(d),
        _ => Err(Error::InvalidState(format!("{} register {} is not a number", s.op, tag.token()))),
    }
}

fn set_register(s: &mut MachineState, tag: Tag, value: DigitString) -> Result<()> {
    let i = s
        .register_index(tag)
        .ok_or_else(|| Error::InvalidState(format!("{} has no {} register", s.op, tag.token())))?;
    s.regions[i].cells = Cells::Digits(value);
    Ok(())
}

/// Result digits of a numeric callee's halt state (its last region).
fn returned_digits(s: &MachineState) -> Result<DigitString> {
    match s.regions.last().map(|r| &r.cells) {
        Some(Cells::Digits(d)) => Ok(d.clone()),
        _ => Err(Error::ProtocolViolation(format!("{} halted without a numeric result", s.op))),
    }
}

fn returned_bool(s: &MachineState) -> Result<bool> {
    match s.regions.last().map(|r| &r.cells) {
        Some(Cells::Bool(b)) => Ok(*b),
        _ => Err(Error::ProtocolViolation(format!("{} halted without a boolean result", s.op))),
    }
}

/// Applies a composer's call-free command: register writes and the goto.
fn apply_start(state: &MachineState, command: &Command) -> Result<MachineState> {
    let mut s = state.clone();
    for action in command.actions() {
        match action {
            Action::WriteRegister(tag, value) => set_register(&mut s, *tag, value.to_digits())?,
            Action::WriteOutputDigit(d) => set_register(&mut s, Tag::Output, DigitString::digit(*d))?,
            Action::Goto(label) => s.label = *label,
            other => {
                return Err(Error::InvalidState(format!("{} cannot perform {other:?}", s.op)));
            }
        }
    }
    Ok(s)
}

fn calling(state: MachineState, target: Op, then: Label, callee: Snapshot) -> StepBlock {
    let command = Command::run(vec![Action::Call(target), Action::Goto(then)]);
    let caller = Snapshot::new(state, command);
    StepBlock::new(caller, Some(callee))
}

fn relabel(state: &MachineState, label: Label) -> MachineState {
    let mut s = state.clone();
    s.label = label;
    s
}

/// Halt line of MUL and DIV: operands, the COUNT register, then the result.
fn loop_halt(state: &MachineState) -> Result<StepBlock> {
    let result = register(state, Tag::Output)?.clone();
    let mut regions: Vec<Region> =
        state.regions.iter().filter(|r| r.tag != Some(Tag::Output)).cloned().collect();
    regions.push(Region::plain(Cells::Digits(result)));
    let halted = MachineState::new(state.op, Label::QH, regions);
    Ok(StepBlock::single(halted, Command::Halt))
}

fn init(op: Op, a: &DigitString, b: &DigitString) -> Result<Snapshot> {
    machines::initial(op, &[a.clone(), b.clone()])
}

pub fn mul_step(block: &StepBlock) -> Result<StepBlock> {
    let s = &block.caller.state;
    let label = s.label;
    let a = operand(s, 0)?;
    let b = operand(s, 1)?;
    let one = DigitString::digit(1);
    match (label, incoming(block)?) {
        (Label::Q0, Incoming::Start) => {
            let next = apply_start(s, &block.caller.command)?;
            if next.label != Label::Q1 {
                return Err(Error::ProtocolViolation("MUL q0 must continue to q1".into()));
            }
            let callee = init(Op::LessThan, register(&next, Tag::Count)?, b)?;
            Ok(calling(next, Op::LessThan, Label::Q2, callee))
        }
        (Label::Q1, Incoming::Returned(Op::LessThan, ret)) => {
            expect_goto(block, Label::Q2)?;
            if !returned_bool(ret)? {
                return loop_halt(s);
            }
            let callee = init(Op::Add, a, register(s, Tag::Output)?)?;
            Ok(calling(relabel(s, Label::Q2), Op::Add, Label::Q3, callee))
        }
        (Label::Q2, Incoming::Returned(Op::Add, ret)) => {
            expect_goto(block, Label::Q3)?;
            let mut next = relabel(s, Label::Q3);
            set_register(&mut next, Tag::Output, returned_digits(ret)?)?;
            let callee = init(Op::Add, register(&next, Tag::Count)?, &one)?;
            Ok(calling(next, Op::Add, Label::Q1, callee))
        }
        (Label::Q3, Incoming::Returned(Op::Add, ret)) => {
            expect_goto(block, Label::Q1)?;
            let mut next = relabel(s, Label::Q1);
            set_register(&mut next, Tag::Count, returned_digits(ret)?)?;
            let callee = init(Op::LessThan, register(&next, Tag::Count)?, b)?;
            Ok(calling(next, Op::LessThan, Label::Q2, callee))
        }
        _ => Err(unexpected(block)),
    }
}

pub fn div_step(block: &StepBlock) -> Result<StepBlock> {
    let s = &block.caller.state;
    let a = operand(s, 0)?;
    let b = operand(s, 1)?;
    if b.canonicalize() == DigitString::zero() {
        return Err(Error::ZeroDivisor);
    }
    let one = DigitString::digit(1);
    match (s.label, incoming(block)?) {
        (Label::Q0, Incoming::Start) => {
            let next = apply_start(s, &block.caller.command)?;
            if next.label != Label::Q1 {
                return Err(Error::ProtocolViolation("DIV q0 must continue to q1".into()));
            }
            let callee = init(Op::GreaterThan, register(&next, Tag::Count)?, a)?;
            Ok(calling(next, Op::GreaterThan, Label::Q2, callee))
        }
        (Label::Q1, Incoming::Returned(Op::GreaterThan, ret)) => {
            expect_goto(block, Label::Q2)?;
            if returned_bool(ret)? {
                return loop_halt(s);
            }
            let callee = init(Op::Add, register(s, Tag::Output)?, &one)?;
            Ok(calling(relabel(s, Label::Q2), Op::Add, Label::Q3, callee))
        }
        (Label::Q2, Incoming::Returned(Op::Add, ret)) => {
            expect_goto(block, Label::Q3)?;
            let mut next = relabel(s, Label::Q3);
            set_register(&mut next, Tag::Output, returned_digits(ret)?)?;
            let callee = init(Op::Add, register(&next, Tag::Count)?, b)?;
            Ok(calling(next, Op::Add, Label::Q1, callee))
        }
        (Label::Q3, Incoming::Returned(Op::Add, ret)) => {
            expect_goto(block, Label::Q1)?;
            let mut next = relabel(s, Label::Q1);
            set_register(&mut next, Tag::Count, returned_digits(ret)?)?;
            let callee = init(Op::GreaterThan, register(&next, Tag::Count)?, a)?;
            Ok(calling(next, Op::GreaterThan, Label::Q2, callee))
        }
        _ => Err(unexpected(block)),
    }
}

pub fn sub_step(block: &StepBlock) -> Result<StepBlock> {
    let s = &block.caller.state;
    let a = operand(s, 0)?;
    let b = operand(s, 1)?;
    let with_acc = |label: Label, value: DigitString| -> MachineState {
        let mut next = relabel(s, label);
        match next.register_index(Tag::Acc) {
            Some(i) => next.regions[i].cells = Cells::Digits(value),
            None => next.regions.push(Region::register(Tag::Acc, Cells::Digits(value))),
        }
        next
    };
    match (s.label, incoming(block)?) {
        (Label::Q0, Incoming::Start) => {
            let next = apply_start(s, &block.caller.command)?;
            if next.label != Label::Q1 {
                return Err(Error::ProtocolViolation("SUB q0 must continue to q1".into()));
            }
            if b.len() > a.len() {
                return Err(Error::NegativeResult);
            }
            let nines = DigitString::repunit(9, a.len());
            let callee = init(Op::Reflection, &nines, b)?;
            Ok(calling(next, Op::Reflection, Label::Q2, callee))
        }
        (Label::Q1, Incoming::Returned(Op::Reflection, ret)) => {
            expect_goto(block, Label::Q2)?;
            let p = returned_digits(ret)?;
            let callee = init(Op::Add, a, &p)?;
            Ok(calling(with_acc(Label::Q2, p), Op::Add, Label::Q3, callee))
        }
        (Label::Q2, Incoming::Returned(Op::Add, ret)) => {
            expect_goto(block, Label::Q3)?;
            let q = returned_digits(ret)?;
            let callee = init(Op::Add, &q, &DigitString::digit(1))?;
            Ok(calling(with_acc(Label::Q3, q), Op::Add, Label::Q3, callee))
        }
        (Label::Q3, Incoming::Returned(Op::Add, ret)) => {
            expect_goto(block, Label::Q3)?;
            let r = returned_digits(ret)?;
            // a >= b leaves exactly one extra leading digit
            if r.len() != a.len() + 1 {
                return Err(Error::NegativeResult);
            }
            let callee = machines::initial(Op::LeftMask, std::slice::from_ref(&r))?;
            Ok(calling(with_acc(Label::Q3, r), Op::LeftMask, Label::QH, callee))
        }
        (Label::Q3, Incoming::Returned(Op::LeftMask, ret)) => {
            expect_goto(block, Label::QH)?;
            let c = returned_digits(ret)?;
            let regions = vec![
                s.regions[0].clone(),
                s.regions[1].clone(),
                Region::plain(Cells::Digits(c)),
            ];
            Ok(StepBlock::single(MachineState::new(Op::Sub, Label::QH, regions), Command::Halt))
        }
        _ => Err(unexpected(block)),
    }
}

fn unexpected(block: &StepBlock) -> Error {
    let returned = block.callee.as_ref().map_or("no callee".to_string(), |c| c.op().to_string());
    Error::ProtocolViolation(format!(
        "{} has no transition from {} with {returned}",
        block.op(),
        block.caller.state.label
    ))
}
