//! Decimal numerals stored units-digit first.

use std::fmt;

use crate::error::{Error, Result};

/// A non-empty base-10 digit sequence in right-to-left order: `digits()[0]`
/// is the units digit.
///
/// Most-significant zeros are allowed (the left-mask machine produces them),
/// so `is_canonical` is a property to check rather than an invariant.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DigitString(Vec<u8>);

impl DigitString {
    /// Builds from R2L digits. Fails on an empty slice or a value above 9.
    pub fn from_r2l(digits: impl Into<Vec<u8>>) -> Result<Self> {
        let digits = digits.into();
        if digits.is_empty() {
            return Err(Error::InvalidState("empty numeral".into()));
        }
        if let Some(d) = digits.iter().find(|&&d| d > 9) {
            return Err(Error::InvalidState(format!("digit out of range: {d}")));
        }
        Ok(Self(digits))
    }

    /// Parses ordinary left-to-right decimal text such as `"4531"`.
    pub fn parse_l2r(text: &str) -> Result<Self> {
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::MalformedExpression(format!("not a decimal numeral: {text:?}")));
        }
        Ok(Self(text.bytes().rev().map(|b| b - b'0').collect()))
    }

    pub fn zero() -> Self {
        Self(vec![0])
    }

    pub fn digit(d: u8) -> Self {
        assert!(d <= 9, "digit out of range: {d}");
        Self(vec![d])
    }

    pub fn from_u64(mut v: u64) -> Self {
        let mut digits = Vec::new();
        loop {
            digits.push((v % 10) as u8);
            v /= 10;
            if v == 0 {
                break;
            }
        }
        Self(digits)
    }

    /// `d` repeated `len` times.
    pub fn repunit(d: u8, len: usize) -> Self {
        assert!(d <= 9 && len > 0);
        Self(vec![d; len])
    }

    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, pos: usize) -> Option<u8> {
        self.0.get(pos).copied()
    }

    pub fn is_canonical(&self) -> bool {
        self.0.len() == 1 || self.0.last() != Some(&0)
    }

    /// Strips most-significant zeros, keeping at least one digit.
    pub fn canonicalize(&self) -> Self {
        let mut digits = self.0.clone();
        while digits.len() > 1 && digits.last() == Some(&0) {
            digits.pop();
        }
        Self(digits)
    }

    pub fn push(&mut self, d: u8) {
        assert!(d <= 9);
        self.0.push(d);
    }

    pub fn set(&mut self, pos: usize, d: u8) {
        assert!(d <= 9);
        self.0[pos] = d;
    }

    pub fn to_l2r_string(&self) -> String {
        self.0.iter().rev().map(|d| char::from(b'0' + d)).collect()
    }

    /// Tape rendering: `|d` per digit, units first.
    pub fn write_cells(&self, out: &mut String) {
        for &d in &self.0 {
            out.push('|');
            out.push(char::from(b'0' + d));
        }
    }

    pub fn cells(&self) -> String {
        let mut s = String::with_capacity(self.0.len() * 2);
        self.write_cells(&mut s);
        s
    }
}

impl fmt::Debug for DigitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DigitString({})", self.to_l2r_string())
    }
}

impl fmt::Display for DigitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_l2r_string())
    }
}
