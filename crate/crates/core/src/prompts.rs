//! Stage-1 instruction texts, one per (operator, role), shipped under
//! `assets/prompts/<op>/<role>.txt`.

use crate::repr::{Op, Role};

macro_rules! asset {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/prompts/", $path))
    };
}

/// Instruction text for `op`'s `role`, if one exists. The two auxiliary
/// machines never see raw expressions, so they have no aligner prompt.
pub fn prompt(op: Op, role: Role) -> Option<&'static str> {
    let text = match (op, role) {
        (Op::Add, Role::Executor) => asset!("add/executor.txt"),
        (Op::Add, Role::Aligner) => asset!("add/aligner.txt"),
        (Op::Sub, Role::Executor) => asset!("sub/executor.txt"),
        (Op::Sub, Role::Aligner) => asset!("sub/aligner.txt"),
        (Op::Mul, Role::Executor) => asset!("mul/executor.txt"),
        (Op::Mul, Role::Aligner) => asset!("mul/aligner.txt"),
        (Op::Div, Role::Executor) => asset!("div/executor.txt"),
        (Op::Div, Role::Aligner) => asset!("div/aligner.txt"),
        (Op::GreaterThan, Role::Executor) => asset!("gt/executor.txt"),
        (Op::GreaterThan, Role::Aligner) => asset!("gt/aligner.txt"),
        (Op::LessThan, Role::Executor) => asset!("lt/executor.txt"),
        (Op::LessThan, Role::Aligner) => asset!("lt/aligner.txt"),
        (Op::Equal, Role::Executor) => asset!("eq/executor.txt"),
        (Op::Equal, Role::Aligner) => asset!("eq/aligner.txt"),
        (Op::Reflection, Role::Executor) => asset!("reflection/executor.txt"),
        (Op::LeftMask, Role::Executor) => asset!("left_mask/executor.txt"),
        (Op::Reflection | Op::LeftMask, Role::Aligner) => return None,
    };
    Some(text.trim_end())
}

/// Model input for a training stage: stage 1 prefixes the instruction text
/// and a blank line, stage 2 is the bare sample.
pub fn wrap(op: Op, role: Role, stage: u8, sample: &str) -> String {
    match (stage, prompt(op, role)) {
        (1, Some(p)) => format!("{p}\n\n{sample}"),
        _ => sample.to_string(),
    }
}

/// Inverse of [`wrap`].
pub fn unwrap(op: Op, role: Role, stage: u8, input: &str) -> Option<&str> {
    match (stage, prompt(op, role)) {
        (1, Some(p)) => input.strip_prefix(p)?.strip_prefix("\n\n"),
        _ => Some(input),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_machine_has_an_executor_prompt() {
        for op in Op::ALL {
            let p = prompt(op, Role::Executor).unwrap();
            assert!(p.starts_with("The following is"), "{op}");
            assert!(!p.contains('\\'), "{op} prompt has LaTeX left in it");
        }
        for op in Op::ARITHMETIC {
            assert!(prompt(op, Role::Aligner).unwrap().ends_with("adapt it to the format correspondingly."));
        }
    }

    #[test]
    fn wrap_round_trips() {
        let sample = "45+67=";
        let wrapped = wrap(Op::Add, Role::Aligner, 1, sample);
        assert!(wrapped.ends_with("correspondingly.\n\n45+67="));
        assert_eq!(unwrap(Op::Add, Role::Aligner, 1, &wrapped), Some(sample));
        assert_eq!(wrap(Op::Add, Role::Aligner, 2, sample), sample);
    }
}
