//! Transition functions of the basic executors and initial-block
//! construction for every operator.
//!
//! Each step applies the incoming command to the state, then derives the next
//! command from what the heads scan in the resulting state.

use crate::digits::DigitString;
use crate::error::{Error, Result};
use crate::repr::{
    Action, Cells, Command, Direction, Head, HeadMark, Label, MachineState, Op, Region,
    RegisterValue, Snapshot, Tag,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct InitOptions {
    /// Carry written by the first ADD command instead of 0.
    pub preset_carry: Option<u8>,
}

/// Initial state (label q0) and first command of `op` over `operands`.
pub fn make_initial(op: Op, operands: &[DigitString], options: InitOptions) -> Result<Snapshot> {
    if operands.len() != op.arity() {
        return Err(Error::ArityMismatch { op, expected: op.arity(), got: operands.len() });
    }
    let run = |actions: Vec<Action>| Command::run(actions);
    let right = |h: Head| Action::Move(h, Direction::Right);
    let goto_q1 = Action::Goto(Label::Q1);

    let basic_pair = |a: &DigitString, b: &DigitString| {
        vec![
            Region::operand(a.clone(), Head::Head1, -1),
            Region::operand(b.clone(), Head::Head2, -1),
        ]
    };
    let output_region = || Region::with_head(Cells::Empty, Head::Output, 0);
    let composer_pair = |a: &DigitString, b: &DigitString| {
        vec![
            Region::operand(a.clone(), Head::Head1, 0),
            Region::operand(b.clone(), Head::Head2, 0),
        ]
    };

    let (regions, command) = match op {
        Op::Add => {
            let carry = options.preset_carry.unwrap_or(0);
            if carry > 1 {
                return Err(Error::InvalidState(format!("carry must be 0 or 1, got {carry}")));
            }
            let mut regions = basic_pair(&operands[0], &operands[1]);
            regions.push(Region::register(Tag::C, Cells::Empty));
            regions.push(output_region());
            let cmd = run(vec![
                Action::WriteRegister(Tag::C, RegisterValue::Scalar(carry)),
                right(Head::Head1),
                right(Head::Head2),
                goto_q1,
            ]);
            (regions, cmd)
        }
        Op::GreaterThan | Op::LessThan | Op::Equal => {
            let mut regions = basic_pair(&operands[0], &operands[1]);
            regions.push(output_region());
            let cmd = run(vec![
                right(Head::Head1),
                right(Head::Head2),
                Action::WriteOutputBool(op == Op::Equal),
                goto_q1,
            ]);
            (regions, cmd)
        }
        Op::Reflection => {
            check_nines(&operands[0])?;
            let mut regions = basic_pair(&operands[0], &operands[1]);
            regions.push(output_region());
            (regions, run(vec![right(Head::Head1), right(Head::Head2), goto_q1]))
        }
        Op::LeftMask => {
            check_maskable(&operands[0])?;
            let regions = vec![Region::operand(operands[0].clone(), Head::Head, -1), output_region()];
            (regions, run(vec![right(Head::Head), goto_q1]))
        }
        Op::Mul | Op::Div => {
            let (a, b) = (&operands[0], &operands[1]);
            let mut regions = composer_pair(a, b);
            regions.push(Region::register(Tag::Count, Cells::Empty));
            regions.push(Region::register(Tag::Output, Cells::Empty));
            let count = if op == Op::Mul {
                RegisterValue::Scalar(0)
            } else {
                if b.canonicalize() == DigitString::zero() {
                    return Err(Error::ZeroDivisor);
                }
                RegisterValue::Digits(b.clone())
            };
            let cmd = run(vec![
                Action::WriteRegister(Tag::Count, count),
                Action::WriteOutputDigit(0),
                goto_q1,
            ]);
            (regions, cmd)
        }
        Op::Sub => (composer_pair(&operands[0], &operands[1]), run(vec![goto_q1])),
    };
    Ok(Snapshot::new(MachineState::new(op, Label::Q0, regions), command))
}

pub fn initial(op: Op, operands: &[DigitString]) -> Result<Snapshot> {
    make_initial(op, operands, InitOptions::default())
}

fn check_nines(d: &DigitString) -> Result<()> {
    if d.digits().iter().any(|&x| x != 9) {
        return Err(Error::InvalidState(format!("reflection operand {d} is not all nines")));
    }
    Ok(())
}

fn check_maskable(d: &DigitString) -> Result<()> {
    if d.len() < 2 {
        return Err(Error::InvalidState(format!("cannot mask the only digit of {d}")));
    }
    Ok(())
}

/// One transition of a basic executor: `(s, c) -> (s', c')`.
pub fn step(state: &MachineState, command: &Command) -> Result<Snapshot> {
    if state.op.is_composer() {
        return Err(Error::InvalidState(format!("{} is a composer", state.op)));
    }
    if state.label == Label::QH || command.is_halt() {
        return Err(Error::InvalidState("machine already halted".into()));
    }
    let next = apply(state, command)?;
    let command = match next.label {
        Label::QH => Command::Halt,
        _ => match next.op {
            Op::Add => add_command(&next)?,
            Op::GreaterThan | Op::LessThan | Op::Equal => compare_command(&next)?,
            Op::Reflection => reflection_command(&next)?,
            Op::LeftMask => left_mask_command(&next)?,
            Op::Sub | Op::Mul | Op::Div => unreachable!(),
        },
    };
    Ok(Snapshot::new(next, command))
}

/// Runs a basic executor from its initial block to the halt block and
/// returns every snapshot, initial and halt included.
pub fn run_to_halt(init: Snapshot) -> Result<Vec<Snapshot>> {
    let mut out = vec![init];
    loop {
        let last = out.last().expect("non-empty");
        if last.command.is_halt() {
            return Ok(out);
        }
        let next = step(&last.state, &last.command)?;
        out.push(next);
    }
}

/// Applies a basic executor's command to its state.
pub fn apply(state: &MachineState, command: &Command) -> Result<MachineState> {
    let mut s = state.clone();
    let bad = |msg: String| Error::InvalidState(format!("{msg} ({} {})", state.op, state.label));
    for action in command.actions() {
        match action {
            Action::WriteRegister(tag, RegisterValue::Scalar(d)) => {
                let i = s.register_index(*tag).ok_or_else(|| bad(format!("no {} register", tag.token())))?;
                s.regions[i].cells = Cells::Scalar(*d);
            }
            Action::WriteRegister(tag, RegisterValue::Digits(_)) => {
                return Err(bad(format!("multi-digit write to {}", tag.token())));
            }
            Action::WriteOutputDigit(d) => {
                let (i, pos) = head_at(&s, Head::Output).ok_or_else(|| bad("no [OUTPUT] head".into()))?;
                let region = &mut s.regions[i];
                let len = region.cells.len() as isize;
                match &mut region.cells {
                    Cells::Empty if pos == 0 => region.cells = Cells::Digits(DigitString::digit(*d)),
                    Cells::Digits(ds) if pos == len => ds.push(*d),
                    Cells::Digits(ds) if (0..len).contains(&pos) => ds.set(pos as usize, *d),
                    _ => return Err(bad("output digit cannot be written here".into())),
                }
            }
            Action::WriteOutputBool(b) => {
                let (i, pos) = head_at(&s, Head::Output).ok_or_else(|| bad("no [OUTPUT] head".into()))?;
                let region = &mut s.regions[i];
                if pos != 0 || matches!(region.cells, Cells::Digits(_) | Cells::Scalar(_)) {
                    return Err(bad("boolean cannot be written here".into()));
                }
                region.cells = Cells::Bool(*b);
            }
            Action::Move(head, dir) => {
                let (i, pos) = head_at(&s, *head).ok_or_else(|| bad(format!("no {} head", head.token())))?;
                let region = &mut s.regions[i];
                let to = match dir {
                    Direction::Right => pos + 1,
                    Direction::Left => pos - 1,
                };
                if to > region.cells.len() as isize || to < 0 {
                    return Err(bad(format!("{} moved off its region", head.token())));
                }
                region.head = Some(HeadMark::new(*head, to));
            }
            Action::FinalizeOutput => {
                let (i, _) = head_at(&s, Head::Output).ok_or_else(|| bad("no [OUTPUT] head".into()))?;
                s.regions[i].head = None;
            }
            Action::RetainCarry => {
                if s.register_index(Tag::C).is_none() {
                    return Err(bad("no [C] register".into()));
                }
            }
            Action::Call(op) => return Err(bad(format!("basic executor cannot call {op}"))),
            // basic executors only ever move to q1 or halt
            Action::Goto(label @ (Label::Q1 | Label::QH)) => s.label = *label,
            Action::Goto(label) => return Err(bad(format!("no transition to {label}"))),
        }
    }
    s.validate().map_err(|e| bad(e.to_string()))?;
    Ok(s)
}

fn head_at(s: &MachineState, head: Head) -> Option<(usize, isize)> {
    let i = s.region_of_head(head)?;
    Some((i, s.regions[i].head?.pos))
}

/// What a head scans: `Some(d)` on a digit, `None` on the trailing blank.
fn scan(s: &MachineState, head: Head) -> Result<Option<u8>> {
    let (i, pos) = head_at(s, head)
        .ok_or_else(|| Error::InvalidState(format!("missing {} head", head.token())))?;
    let digits = s.digits(i).ok_or_else(|| Error::InvalidState(format!("{} over a non-digit region", head.token())))?;
    if pos < 0 {
        return Err(Error::InvalidState(format!("{} still on the leading blank", head.token())));
    }
    Ok(digits.get(pos as usize))
}

fn add_command(s: &MachineState) -> Result<Command> {
    let carry = match s.register(Tag::C) {
        Some(Cells::Scalar(c)) if *c <= 1 => *c,
        _ => return Err(Error::InvalidState("carry register must hold 0 or 1".into())),
    };
    let d1 = scan(s, Head::Head1)?;
    let d2 = scan(s, Head::Head2)?;
    let mut actions = Vec::with_capacity(6);
    if d1.is_none() && d2.is_none() {
        if carry == 1 {
            actions.push(Action::WriteOutputDigit(1));
        }
        actions.push(Action::FinalizeOutput);
        actions.push(Action::RetainCarry);
        actions.push(Action::Goto(Label::QH));
        return Ok(Command::run(actions));
    }
    let sum = d1.unwrap_or(0) + d2.unwrap_or(0) + carry;
    actions.push(Action::WriteRegister(Tag::C, RegisterValue::Scalar(sum / 10)));
    actions.push(Action::WriteOutputDigit(sum % 10));
    actions.push(Action::Move(Head::Output, Direction::Right));
    if d1.is_some() {
        actions.push(Action::Move(Head::Head1, Direction::Right));
    }
    if d2.is_some() {
        actions.push(Action::Move(Head::Head2, Direction::Right));
    }
    actions.push(Action::Goto(Label::Q1));
    Ok(Command::run(actions))
}

fn compare_command(s: &MachineState) -> Result<Command> {
    let d1 = scan(s, Head::Head1)?;
    let d2 = scan(s, Head::Head2)?;
    let differs = |a: u8, b: u8| match s.op {
        Op::GreaterThan => a > b,
        Op::LessThan => a < b,
        _ => false,
    };
    let mut actions = Vec::with_capacity(4);
    match (d1, d2) {
        (Some(a), Some(b)) => {
            actions.push(Action::Move(Head::Head1, Direction::Right));
            actions.push(Action::Move(Head::Head2, Direction::Right));
            if a != b {
                actions.push(Action::WriteOutputBool(differs(a, b)));
            }
            actions.push(Action::Goto(Label::Q1));
        }
        (None, None) => {
            actions.push(Action::FinalizeOutput);
            actions.push(Action::Goto(Label::QH));
        }
        (first, _) => {
            // the longer operand is the larger one
            let first_longer = first.is_some();
            let v = match s.op {
                Op::GreaterThan => first_longer,
                Op::LessThan => !first_longer,
                _ => false,
            };
            actions.push(Action::WriteOutputBool(v));
            actions.push(Action::FinalizeOutput);
            actions.push(Action::Goto(Label::QH));
        }
    }
    Ok(Command::run(actions))
}

fn reflection_command(s: &MachineState) -> Result<Command> {
    check_nines(s.digits(0).ok_or_else(|| Error::InvalidState("reflection without operand".into()))?)?;
    let d1 = scan(s, Head::Head1)?;
    let d2 = scan(s, Head::Head2)?;
    let actions = match d1 {
        None if d2.is_some() => {
            return Err(Error::InvalidState("reflection subtrahend longer than the nines".into()))
        }
        None => vec![Action::FinalizeOutput, Action::Goto(Label::QH)],
        Some(_) => {
            let mut actions = vec![
                Action::WriteOutputDigit(9 - d2.unwrap_or(0)),
                Action::Move(Head::Output, Direction::Right),
                Action::Move(Head::Head1, Direction::Right),
            ];
            if d2.is_some() {
                actions.push(Action::Move(Head::Head2, Direction::Right));
            }
            actions.push(Action::Goto(Label::Q1));
            actions
        }
    };
    Ok(Command::run(actions))
}

fn left_mask_command(s: &MachineState) -> Result<Command> {
    let operand = s.digits(0).ok_or_else(|| Error::InvalidState("left mask without operand".into()))?;
    check_maskable(operand)?;
    let (_, pos) = head_at(s, Head::Head).ok_or_else(|| Error::InvalidState("missing [HEAD]".into()))?;
    let last = operand.len() as isize - 1;
    let actions = match scan(s, Head::Head)? {
        Some(d) if pos < last => vec![
            Action::WriteOutputDigit(d),
            Action::Move(Head::Output, Direction::Right),
            Action::Move(Head::Head, Direction::Right),
            Action::Goto(Label::Q1),
        ],
        // the most significant digit is skipped
        Some(_) => vec![Action::Move(Head::Head, Direction::Right), Action::Goto(Label::Q1)],
        None => vec![Action::FinalizeOutput, Action::Goto(Label::QH)],
    };
    Ok(Command::run(actions))
}
