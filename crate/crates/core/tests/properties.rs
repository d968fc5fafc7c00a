use std::collections::BTreeMap;

use num_bigint::BigUint;
use proptest::prelude::*;

use caef_core::aligner::Expression;
use caef_core::machines;
use caef_core::oracle;
use caef_core::runtime::{execute, ExecBudget, SymbolicPredictor, Trace};
use caef_core::{Command, DigitString, MachineState, Op, Role, StepBlock};

fn number(max_len: usize) -> impl Strategy<Value = String> {
    prop_oneof![
        Just("0".to_string()),
        "[1-9][0-9]{0,40}".prop_map(move |s| s[..s.len().min(max_len)].to_string()),
    ]
}

fn big(s: &str) -> BigUint {
    s.parse().unwrap()
}

fn run(expr: &str) -> Trace {
    execute(expr, &SymbolicPredictor, ExecBudget::default())
}

/// Callee activations per operator, counted from the first frame of each.
fn calls(t: &Trace) -> BTreeMap<Op, usize> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = BTreeMap::new();
    for f in t.frames.iter().filter(|f| f.depth == 1) {
        if seen.insert(f.activation) {
            *out.entry(f.op).or_insert(0) += 1;
        }
    }
    out
}

fn ds(s: &str) -> DigitString {
    DigitString::parse_l2r(s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn oracle_agrees_with_bigint(a in number(40), b in number(40)) {
        let (x, y) = (big(&a), big(&b));
        prop_assert_eq!(oracle::evaluate(&format!("{a}+{b}=")).unwrap(), (&x + &y).to_string());
        prop_assert_eq!(oracle::evaluate(&format!("{a}*{b}=")).unwrap(), (&x * &y).to_string());
        let gt = if x > y { "True" } else { "False" };
        prop_assert_eq!(oracle::evaluate(&format!("{a}>{b}=")).unwrap(), gt);
        if x >= y {
            prop_assert_eq!(oracle::evaluate(&format!("{a}-{b}=")).unwrap(), (&x - &y).to_string());
        }
        if y != BigUint::from(0u8) {
            prop_assert_eq!(oracle::evaluate(&format!("{a}//{b}=")).unwrap(), (&x / &y).to_string());
        }
    }

    #[test]
    fn digit_strings_round_trip(s in number(60)) {
        let d = ds(&s);
        prop_assert_eq!(d.to_l2r_string(), s.clone());
        prop_assert_eq!(DigitString::from_r2l(d.digits().to_vec()).unwrap(), d);
    }

    #[test]
    fn length_class_ops_match_oracle(a in number(30), b in number(30)) {
        for sym in ["+", ">", "<", "=="] {
            let e = format!("{a}{sym}{b}=");
            prop_assert_eq!(run(&e).outcome.unwrap(), oracle::expected(&e).unwrap());
        }
        let (hi, lo) = if big(&a) >= big(&b) { (&a, &b) } else { (&b, &a) };
        let e = format!("{hi}-{lo}=");
        prop_assert_eq!(run(&e).outcome.unwrap(), oracle::expected(&e).unwrap());
    }

    #[test]
    fn addition_step_law(a in number(30), b in number(30)) {
        let t = run(&format!("{a}+{b}="));
        prop_assert_eq!(t.executor_frames().count(), a.len().max(b.len()) + 2);
    }

    #[test]
    fn multiplication_call_law(a in number(10), b in 1u64..=15) {
        let e = format!("{a}*{b}=");
        let t = run(&e);
        prop_assert_eq!(t.outcome.clone().unwrap(), oracle::expected(&e).unwrap());
        let c = calls(&t);
        prop_assert_eq!(c.get(&Op::LessThan).copied(), Some(b as usize + 1));
        prop_assert_eq!(c.get(&Op::Add).copied().unwrap_or(0), 2 * b as usize);
    }

    #[test]
    fn division_call_law(b in 1u64..100_000, c in 0u64..=15, r in any::<u64>()) {
        let a = b * c + r % b;
        let e = format!("{a}//{b}=");
        let t = run(&e);
        prop_assert_eq!(t.outcome.clone().unwrap(), oracle::expected(&e).unwrap());
        let k = calls(&t);
        prop_assert_eq!(k.get(&Op::GreaterThan).copied(), Some(c as usize + 1));
        prop_assert_eq!(k.get(&Op::Add).copied().unwrap_or(0), 2 * c as usize);
    }

    #[test]
    fn reflection_is_nines_complement(b in "[0-9]{1,30}", extra in 0usize..5) {
        let b = ds(&b);
        let nines = DigitString::repunit(9, b.len() + extra);
        let steps = machines::run_to_halt(machines::initial(Op::Reflection, &[nines.clone(), b.clone()]).unwrap()).unwrap();
        let out = steps.last().unwrap().state.digits(2).unwrap().clone();
        prop_assert_eq!(out.len(), nines.len());
        for i in 0..nines.len() {
            prop_assert_eq!(out.get(i).unwrap(), 9 - b.get(i).unwrap_or(0));
        }
    }

    #[test]
    fn blocks_round_trip(a in number(12), b in 1u64..=15, pick in 0usize..4) {
        let e = match pick {
            0 => format!("{a}*{b}="),
            1 => format!("{}-{}=", big(&a) + 5u8, a.len().min(5)),
            2 => format!("{}//{b}=", big(&a) * 7u8),
            _ => format!("{a}=={a}="),
        };
        for f in run(&e).executor_frames() {
            for text in [&f.input, &f.output] {
                let block = StepBlock::parse(text).unwrap();
                prop_assert_eq!(&block.render(), text);
                let mut lines = text.lines();
                let state_line = lines.next().unwrap();
                let state = MachineState::parse(state_line).unwrap();
                prop_assert_eq!(state.render(), state_line);
                let cmd_line = lines.next().unwrap();
                prop_assert_eq!(Command::parse(state.op, cmd_line).unwrap().render(state.op), cmd_line);
            }
        }
    }
}

#[test]
fn loop_exits_cleanly_at_zero() {
    let t = run("98*0=");
    assert_eq!(t.outcome.as_deref(), Ok("98*0=0"));
    assert_eq!(calls(&t).get(&Op::LessThan), Some(&1));
    assert_eq!(calls(&t).get(&Op::Add), None);
    let t = run("3//7=");
    assert_eq!(t.outcome.as_deref(), Ok("3//7=0"));
    assert_eq!(calls(&t).get(&Op::GreaterThan), Some(&1));
}

#[test]
fn every_machine_appears_in_traces() {
    let mut ops = std::collections::BTreeSet::new();
    for e in ["12+3=", "12-3=", "12*3=", "12//3=", "1>2=", "1<2=", "1==2="] {
        for f in run(e).frames.iter().filter(|f| f.role == Role::Executor) {
            ops.insert(f.op);
        }
    }
    assert_eq!(ops.len(), 9);
}

#[test]
fn expressions_reject_out_of_domain() {
    assert!(Expression::parse("3-7=").is_err());
    assert!(Expression::parse("3//0=").is_err());
    assert!(Expression::parse("03+7=").is_err());
}

fn register_value(state: &MachineState, tag: caef_core::repr::Tag) -> u64 {
    let digits = state.register(tag).and_then(|c| c.as_digits()).expect("digit register");
    digits.to_l2r_string().parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loop_registers_track_iterations(a in 0u64..100_000, b in 0u64..=15, d in 1u64..2_000, q in 0u64..=12) {
        use caef_core::repr::{Label, Tag};
        // MUL: at each q1 entry after k iterations, COUNT = k and OUTPUT = k*a
        let t = run(&format!("{a}*{b}="));
        let mut k = 0;
        for f in t.executor_frames().filter(|f| f.depth == 0) {
            let s = StepBlock::parse(&f.output).unwrap().caller.state;
            if s.label == Label::Q1 {
                prop_assert_eq!(register_value(&s, Tag::Count), k);
                prop_assert_eq!(register_value(&s, Tag::Output), k * a);
                k += 1;
            }
        }
        prop_assert_eq!(k, b + 1);
        // DIV: COUNT = (k+1)*d and OUTPUT = k
        let n = d * q + a % d;
        let t = run(&format!("{n}//{d}="));
        let mut k = 0;
        for f in t.executor_frames().filter(|f| f.depth == 0) {
            let s = StepBlock::parse(&f.output).unwrap().caller.state;
            if s.label == Label::Q1 {
                prop_assert_eq!(register_value(&s, Tag::Count), (k + 1) * d);
                prop_assert_eq!(register_value(&s, Tag::Output), k);
                k += 1;
            }
        }
        prop_assert_eq!(k, q + 1);
    }
}
