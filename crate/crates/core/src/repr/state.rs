use std::collections::HashSet;
use std::fmt;

use super::{Head, Label, Op, Tag};
use crate::digits::DigitString;
use crate::error::{Error, Result};

/// Contents of one tape region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cells {
    Empty,
    /// `|d` cells, units first.
    Digits(DigitString),
    /// A single `True`/`False` cell.
    Bool(bool),
    /// A bare digit glued to a register tag, as in `[C]1`.
    Scalar(u8),
}

impl Cells {
    pub fn len(&self) -> usize {
        match self {
            Cells::Empty => 0,
            Cells::Digits(d) => d.len(),
            Cells::Bool(_) | Cells::Scalar(_) => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Cells::Empty)
    }

    pub fn as_digits(&self) -> Option<&DigitString> {
        match self {
            Cells::Digits(d) => Some(d),
            _ => None,
        }
    }

    fn write(&self, head: Option<HeadMark>, out: &mut String) {
        let head_at = |i: usize| head.filter(|h| h.pos == i as isize).map(|h| h.head.token());
        match self {
            Cells::Empty => {}
            Cells::Digits(d) => {
                for (i, &digit) in d.digits().iter().enumerate() {
                    if let Some(tok) = head_at(i) {
                        out.push_str(tok);
                    }
                    out.push('|');
                    out.push(char::from(b'0' + digit));
                }
            }
            Cells::Bool(b) => {
                if let Some(tok) = head_at(0) {
                    out.push_str(tok);
                }
                out.push_str(if *b { "True" } else { "False" });
            }
            Cells::Scalar(d) => {
                if let Some(tok) = head_at(0) {
                    out.push_str(tok);
                }
                out.push(char::from(b'0' + d));
            }
        }
        if let Some(tok) = head_at(self.len()) {
            out.push_str(tok);
        }
    }
}

/// A head token and the cell it scans. `pos == -1` is the blank in front of
/// the region, `pos == len` the blank after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadMark {
    pub head: Head,
    pub pos: isize,
}

impl HeadMark {
    pub fn new(head: Head, pos: isize) -> Self {
        Self { head, pos }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub tag: Option<Tag>,
    pub cells: Cells,
    pub head: Option<HeadMark>,
}

impl Region {
    pub fn operand(digits: DigitString, head: Head, pos: isize) -> Self {
        Self { tag: None, cells: Cells::Digits(digits), head: Some(HeadMark::new(head, pos)) }
    }

    pub fn register(tag: Tag, cells: Cells) -> Self {
        Self { tag: Some(tag), cells, head: None }
    }

    pub fn plain(cells: Cells) -> Self {
        Self { tag: None, cells, head: None }
    }

    pub fn with_head(cells: Cells, head: Head, pos: isize) -> Self {
        Self { tag: None, cells, head: Some(HeadMark::new(head, pos)) }
    }

    fn renders_empty(&self) -> bool {
        self.tag.is_none() && self.cells.is_empty() && self.head.is_none_or(|h| h.pos < 0)
    }
}

/// One state line: `OP, label, <tape>`.
///
/// The tape is a row of cells: (for basic executors) a leading blank, then
/// each region separated by a single blank. A head token is written
/// immediately left of the cell it scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub op: Op,
    pub label: Label,
    pub regions: Vec<Region>,
}

/// Index of the region a head token belongs to.
fn owner(head: Head, regions: usize) -> usize {
    match head {
        Head::Head1 | Head::Head => 0,
        Head::Head2 => 1,
        Head::Output => regions.saturating_sub(1),
    }
}

impl MachineState {
    pub fn new(op: Op, label: Label, regions: Vec<Region>) -> Self {
        Self { op, label, regions }
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = |msg: String| Error::MalformedState(format!("{msg} in {line:?}"));
        let (op_text, rest) = line.split_once(", ").ok_or_else(|| bad("missing operator".into()))?;
        let op = Op::from_tag(op_text).ok_or_else(|| bad(format!("unknown operator {op_text:?}")))?;
        let (label_text, tape) =
            rest.split_once(", ").ok_or_else(|| bad("missing state label".into()))?;
        let label =
            Label::parse(label_text).ok_or_else(|| bad(format!("unknown label {label_text:?}")))?;

        let (lead, body) = if op.has_leading_blank() {
            tape.split_once(' ').ok_or_else(|| bad("missing leading blank".into()))?
        } else {
            ("", tape)
        };
        let pieces: Vec<&str> = body.split(' ').collect();
        if pieces.iter().any(|p| p.is_empty()) {
            return Err(bad("consecutive blanks".into()));
        }
        let n = pieces.len();
        let mut regions: Vec<Region> = Vec::with_capacity(n);
        let mut seen = HashSet::new();

        // heads waiting for the region right of the current blank
        let mut incoming: Vec<Head> = Vec::new();
        for tok in tokens(lead).map_err(bad)? {
            match tok {
                Token::Bracket(name) => {
                    let head = Head::from_name(name)
                        .ok_or_else(|| bad(format!("unexpected [{name}] before tape")))?;
                    incoming.push(head);
                }
                _ => return Err(bad("cell before leading blank".into())),
            }
        }

        for (i, piece) in pieces.iter().enumerate() {
            let mut region = Region { tag: None, cells: Cells::Empty, head: None };
            let mut place = |region: &mut Region, head: Head, pos: isize| -> Result<()> {
                if !seen.insert(head) {
                    return Err(bad(format!("duplicated head {}", head.token())));
                }
                if owner(head, n) != i {
                    return Err(bad(format!("{} outside its region", head.token())));
                }
                if region.head.is_some() {
                    return Err(bad("two heads on one region".into()));
                }
                region.head = Some(HeadMark::new(head, pos));
                Ok(())
            };
            for head in incoming.drain(..) {
                place(&mut region, head, -1)?;
            }

            let mut digits: Vec<u8> = Vec::new();
            let mut other: Option<Cells> = None;
            let mut trailing: Vec<Head> = Vec::new();
            let mut first = true;
            for tok in tokens(piece).map_err(bad)? {
                let cell_count = digits.len() + usize::from(other.is_some());
                if !trailing.is_empty() {
                    // a head token followed by a cell scans that cell
                    for head in trailing.drain(..) {
                        place(&mut region, head, cell_count as isize)?;
                    }
                }
                match tok {
                    Token::Bracket(name) => {
                        let tag = Tag::from_name(name)
                            .filter(|t| *t != Tag::Output || op.is_composer());
                        match tag {
                            Some(tag) if first => region.tag = Some(tag),
                            Some(_) => return Err(bad(format!("register tag [{name}] mid-region"))),
                            None => {
                                let head = Head::from_name(name)
                                    .ok_or_else(|| bad(format!("unknown token [{name}]")))?;
                                trailing.push(head);
                            }
                        }
                    }
                    Token::Cell(d) => {
                        if other.is_some() {
                            return Err(bad("digit cell after a non-digit cell".into()));
                        }
                        digits.push(d);
                    }
                    Token::Bare(d) => {
                        if region.tag.is_none() || !digits.is_empty() || other.is_some() {
                            return Err(bad("bare digit outside a register".into()));
                        }
                        other = Some(Cells::Scalar(d));
                    }
                    Token::Bool(b) => {
                        if !digits.is_empty() || other.is_some() {
                            return Err(bad("boolean cell after another cell".into()));
                        }
                        other = Some(Cells::Bool(b));
                    }
                }
                first = false;
            }
            let cells = match other {
                Some(c) => c,
                None if digits.is_empty() => Cells::Empty,
                None => Cells::Digits(DigitString::from_r2l(digits).map_err(|e| bad(e.to_string()))?),
            };
            let len = cells.len() as isize;
            region.cells = cells;
            for head in trailing {
                if owner(head, n) == i {
                    place(&mut region, head, len)?;
                } else if owner(head, n) == i + 1 && i + 1 < n {
                    incoming.push(head);
                } else {
                    return Err(bad(format!("{} outside its region", head.token())));
                }
            }
            regions.push(region);
        }
        let state = MachineState { op, label, regions };
        state.validate().map_err(|e| bad(e.to_string()))?;
        Ok(state)
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(64);
        self.render_into(&mut out);
        out
    }

    pub fn render_into(&self, out: &mut String) {
        out.push_str(self.op.tag());
        out.push_str(", ");
        out.push_str(self.label.as_str());
        out.push_str(", ");
        for (i, region) in self.regions.iter().enumerate() {
            if i > 0 || self.op.has_leading_blank() {
                if let Some(h) = region.head.filter(|h| h.pos < 0) {
                    out.push_str(h.head.token());
                }
                out.push(' ');
            }
            if let Some(tag) = region.tag {
                out.push_str(tag.token());
            }
            region.cells.write(region.head, out);
        }
    }

    /// Structural checks shared by the parser and the machines.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidState(msg));
        if self.regions.is_empty() {
            return bad("state has no tape".into());
        }
        let n = self.regions.len();
        let mut seen = HashSet::new();
        for (i, region) in self.regions.iter().enumerate() {
            if region.renders_empty() {
                return bad(format!("region {i} renders as nothing"));
            }
            if matches!(region.cells, Cells::Scalar(_)) && region.tag.is_none() {
                return bad(format!("untagged scalar in region {i}"));
            }
            if let Some(h) = region.head {
                if !seen.insert(h.head) {
                    return bad(format!("duplicated head {}", h.head.token()));
                }
                if owner(h.head, n) != i {
                    return bad(format!("{} on region {i}", h.head.token()));
                }
                if h.pos < -1 || h.pos > region.cells.len() as isize {
                    return bad(format!("{} out of bounds at {}", h.head.token(), h.pos));
                }
                if h.pos == -1 && i == 0 && !self.op.has_leading_blank() {
                    return bad("no leading blank to scan".into());
                }
                if h.pos == -1 && region.cells.is_empty() {
                    return bad(format!("{} before an empty region", h.head.token()));
                }
                if h.head == Head::Output && self.label == Label::QH {
                    return bad("halted state still carries [OUTPUT]".into());
                }
            }
        }
        Ok(())
    }

    pub fn region_of_head(&self, head: Head) -> Option<usize> {
        self.regions.iter().position(|r| r.head.is_some_and(|h| h.head == head))
    }

    pub fn head_pos(&self, head: Head) -> Option<isize> {
        self.regions.iter().find_map(|r| r.head.filter(|h| h.head == head).map(|h| h.pos))
    }

    pub fn register_index(&self, tag: Tag) -> Option<usize> {
        self.regions.iter().position(|r| r.tag == Some(tag))
    }

    pub fn register(&self, tag: Tag) -> Option<&Cells> {
        self.regions.iter().find(|r| r.tag == Some(tag)).map(|r| &r.cells)
    }

    /// Digits of region `i`, if it holds a digit string.
    pub fn digits(&self, i: usize) -> Option<&DigitString> {
        self.regions.get(i).and_then(|r| r.cells.as_digits())
    }
}

impl fmt::Display for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

enum Token<'a> {
    Bracket(&'a str),
    Cell(u8),
    Bare(u8),
    Bool(bool),
}

fn tokens(s: &str) -> std::result::Result<impl Iterator<Item = Token<'_>>, String> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'[' => {
                let end = s[i..].find(']').ok_or_else(|| "unclosed bracket".to_string())? + i;
                out.push(Token::Bracket(&s[i + 1..end]));
                i = end + 1;
            }
            b'|' => match bytes.get(i + 1) {
                Some(d) if d.is_ascii_digit() => {
                    out.push(Token::Cell(d - b'0'));
                    i += 2;
                }
                _ => return Err(format!("non-digit cell at byte {i}")),
            },
            d if d.is_ascii_digit() => {
                out.push(Token::Bare(d - b'0'));
                i += 1;
            }
            _ if s[i..].starts_with("True") => {
                out.push(Token::Bool(true));
                i += 4;
            }
            _ if s[i..].starts_with("False") => {
                out.push(Token::Bool(false));
                i += 5;
            }
            _ => return Err(format!("unexpected character at byte {i}")),
        }
    }
    Ok(out.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(l2r: &str) -> DigitString {
        DigitString::parse_l2r(l2r).unwrap()
    }

    fn round_trip(line: &str) -> MachineState {
        let s = MachineState::parse(line).unwrap_or_else(|e| panic!("{line:?}: {e}"));
        assert_eq!(s.render(), line);
        s
    }

    #[test]
    fn addition_initial_state() {
        let s = round_trip("ADD, q0, [HEAD1] |5|4[HEAD2] |7|6 [C] [OUTPUT]");
        assert_eq!(s.op, Op::Add);
        assert_eq!(s.label, Label::Q0);
        assert_eq!(s.regions.len(), 4);
        assert_eq!(s.regions[0], Region::operand(ds("45"), Head::Head1, -1));
        assert_eq!(s.regions[1], Region::operand(ds("67"), Head::Head2, -1));
        assert_eq!(s.regions[2], Region::register(Tag::C, Cells::Empty));
        assert_eq!(s.regions[3], Region::with_head(Cells::Empty, Head::Output, 0));
    }

    #[test]
    fn addition_halt_state() {
        let s = round_trip("ADD, qH,  |5|4[HEAD1] |7|6[HEAD2] [C]1 |2|1|1");
        assert_eq!(s.head_pos(Head::Head1), Some(2));
        assert_eq!(s.head_pos(Head::Head2), Some(2));
        assert_eq!(s.register(Tag::C), Some(&Cells::Scalar(1)));
        assert_eq!(s.digits(3), Some(&ds("112")));
        assert_eq!(s.head_pos(Head::Output), None);
    }

    #[test]
    fn mid_scan_states_round_trip() {
        round_trip("ADD, q1,  [HEAD1]|5|4 [HEAD2]|7|6 [C]0 [OUTPUT]");
        round_trip("ADD, q1,  |5[HEAD1]|4 |7[HEAD2]|6 [C]1 |2[OUTPUT]");
        let gt = round_trip(
            "GREATER_THAN, q1,  |1|7|6|7|0[HEAD1]|5|1|3|1 |5|6|4|1|7[HEAD2]|8|1|4|7|4|8|8|3|2|7 [OUTPUT]False",
        );
        assert_eq!(gt.head_pos(Head::Head1), Some(5));
        assert_eq!(gt.head_pos(Head::Output), Some(0));
        round_trip("LESS_THAN, qH,  |1|5|9|4|4|6[HEAD1]|6|2|1|3|5|8|0|9|8 |3|7|2|6|4|2[HEAD2] False");
        round_trip("EQUAL, q1,  |0|5|9[HEAD1] |0|5|9[HEAD2] [OUTPUT]True");
    }

    #[test]
    fn composer_states_round_trip() {
        let mul = round_trip("MUL, q0, [HEAD1]|9|8 [HEAD2]|2 [COUNT] [OUTPUT]");
        assert_eq!(mul.regions[3], Region::register(Tag::Output, Cells::Empty));
        round_trip("MUL, q3, [HEAD1]|3|8|6 [HEAD2]|8|6 [COUNT]|5|4 [OUTPUT]|8|1|4|1|3");
        round_trip("MUL, qH, [HEAD1]|9|8 [HEAD2]|2 [COUNT]|2 |8|7|1");
        round_trip("DIV, qH, [HEAD1]|3|1|5|4 [HEAD2]|4|0|5|1 [COUNT]|6|1|0|6 |3");
        round_trip("SUB, q0, [HEAD1]|7|4 [HEAD2]|2|1");
        round_trip("SUB, qH, [HEAD1]|1|3|5|4 [HEAD2]|4|0|5|1 |7|2|0|3");
    }

    #[test]
    fn left_mask_layout() {
        let s = round_trip("LEFT_MASK, q0, [HEAD] |7|2|0|3|1 [OUTPUT]");
        assert_eq!(s.regions[0], Region::operand(ds("13027"), Head::Head, -1));
        round_trip("LEFT_MASK, qH,  |7|2|0|3|1[HEAD] |7|2|0|3");
    }

    #[test]
    fn zero_operands() {
        round_trip("ADD, q0, [HEAD1] |0[HEAD2] |0 [C] [OUTPUT]");
    }

    #[test]
    fn rejects_malformed() {
        for line in [
            "FOO, q0, [HEAD1] |5",
            "ADD, q9, [HEAD1] |5|4[HEAD2] |7|6 [C] [OUTPUT]",
            "ADD, q0, [HEAD1] |5|x[HEAD2] |7|6 [C] [OUTPUT]",
            "ADD, q0, [HEAD1] |5|4[HEAD1] |7|6 [C] [OUTPUT]",
            "ADD, q0, [HEAD1] |5|4[HEAD2]  |7|6 [C] [OUTPUT]",
            "ADD, q0, [HEAD1] |5|4[HEAD2] |7|6 [C] [OUTPUT] ",
            "ADD, qH,  |5|4[HEAD1] |7|6[HEAD2] [C]1 |2|1|1[OUTPUT]",
            "ADD, q0, [HEAD1] |5|4[HEAD2] |7|6 [Q] [OUTPUT]",
            "MUL, q0, [HEAD1]|9|8 [HEAD2]|2 [COUNT] [OUTPUT] 5",
        ] {
            assert!(MachineState::parse(line).is_err(), "accepted {line:?}");
        }
    }
}
