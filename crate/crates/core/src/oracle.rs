//! Ground-truth arithmetic on decimal text.
//!
//! Deliberately shares nothing with the machines: numbers are big-endian
//! digit vectors and every operation is a plain schoolbook loop.

use std::cmp::Ordering;

use crate::error::{Error, Result};

type Num = Vec<u8>;

fn parse(text: &str) -> Result<Num> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::MalformedExpression(format!("not a number: {text:?}")));
    }
    Ok(trim(text.bytes().map(|b| b - b'0').collect()))
}

fn trim(mut n: Num) -> Num {
    let zeros = n.iter().take_while(|&&d| d == 0).count().min(n.len().saturating_sub(1));
    n.drain(..zeros);
    if n.is_empty() {
        n.push(0);
    }
    n
}

fn show(n: &[u8]) -> String {
    n.iter().map(|d| char::from(b'0' + d)).collect()
}

fn cmp(a: &[u8], b: &[u8]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

fn add(a: &[u8], b: &[u8]) -> Num {
    let mut out = Vec::with_capacity(a.len().max(b.len()) + 1);
    let (mut i, mut j, mut carry) = (a.len(), b.len(), 0u8);
    while i > 0 || j > 0 || carry > 0 {
        let mut s = carry;
        if i > 0 {
            i -= 1;
            s += a[i];
        }
        if j > 0 {
            j -= 1;
            s += b[j];
        }
        out.push(s % 10);
        carry = s / 10;
    }
    out.reverse();
    trim(out)
}

/// `a - b` for `a >= b`.
fn sub(a: &[u8], b: &[u8]) -> Num {
    let mut out = Vec::with_capacity(a.len());
    let mut borrow = 0i8;
    let mut j = b.len();
    for i in (0..a.len()).rev() {
        let mut d = a[i] as i8 - borrow;
        if j > 0 {
            j -= 1;
            d -= b[j] as i8;
        }
        borrow = i8::from(d < 0);
        out.push((d + 10 * borrow) as u8);
    }
    out.reverse();
    trim(out)
}

fn mul(a: &[u8], b: &[u8]) -> Num {
    let mut acc = vec![0u32; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            acc[i + j + 1] += u32::from(x) * u32::from(y);
        }
    }
    for k in (1..acc.len()).rev() {
        acc[k - 1] += acc[k] / 10;
        acc[k] %= 10;
    }
    trim(acc.into_iter().map(|d| d as u8).collect())
}

/// Long division; returns (quotient, remainder).
fn divmod(a: &[u8], b: &[u8]) -> (Num, Num) {
    let mut q = Vec::with_capacity(a.len());
    let mut r: Num = vec![0];
    for &d in a {
        r.push(d);
        r = trim(r);
        let mut digit = 0;
        while cmp(&r, b) != Ordering::Less {
            r = sub(&r, b);
            digit += 1;
        }
        q.push(digit);
    }
    (trim(q), r)
}

fn split(expr: &str) -> Result<(&str, &'static str, &str)> {
    let bad = || Error::MalformedExpression(format!("{expr:?} matches no template"));
    let body = expr.strip_suffix('=').ok_or_else(bad)?;
    for sym in ["//", "==", "+", "-", "*", ">", "<"] {
        if let Some((l, r)) = body.split_once(sym) {
            return Ok((l, sym, r));
        }
    }
    Err(bad())
}

/// Result text of an expression such as `4531-1504=`: a number or
/// `True`/`False`.
pub fn evaluate(expr: &str) -> Result<String> {
    let (l, sym, r) = split(expr)?;
    let (a, b) = (parse(l)?, parse(r)?);
    let boolean = |v: bool| if v { "True" } else { "False" }.to_string();
    Ok(match sym {
        "+" => show(&add(&a, &b)),
        "-" => {
            if cmp(&a, &b) == Ordering::Less {
                return Err(Error::DomainError(format!("{expr} is negative")));
            }
            show(&sub(&a, &b))
        }
        "*" => show(&mul(&a, &b)),
        "//" => {
            if b == [0] {
                return Err(Error::DomainError(format!("{expr} divides by zero")));
            }
            show(&divmod(&a, &b).0)
        }
        ">" => boolean(cmp(&a, &b) == Ordering::Greater),
        "<" => boolean(cmp(&a, &b) == Ordering::Less),
        _ => boolean(cmp(&a, &b) == Ordering::Equal),
    })
}

/// `expr` followed by its oracle result, the exact-match target.
pub fn expected(expr: &str) -> Result<String> {
    Ok(format!("{expr}{}", evaluate(expr)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_values() {
        assert_eq!(evaluate("4531-1504=").unwrap(), "3027");
        assert_eq!(evaluate("4513//1504=").unwrap(), "3");
        assert_eq!(evaluate("9999-1504=").unwrap(), "8495");
        assert_eq!(evaluate("4531+8495=").unwrap(), "13026");
        assert_eq!(evaluate("45+67=").unwrap(), "112");
        assert_eq!(evaluate("89*2=").unwrap(), "178");
        assert_eq!(evaluate("890853126644951<246273=").unwrap(), "False");
        assert_eq!(evaluate("2177617988656==2177617988656=").unwrap(), "True");
    }

    #[test]
    fn edge_cases() {
        assert_eq!(evaluate("0+0=").unwrap(), "0");
        assert_eq!(evaluate("7-7=").unwrap(), "0");
        assert_eq!(evaluate("100-2=").unwrap(), "98");
        assert_eq!(evaluate("123*0=").unwrap(), "0");
        assert_eq!(evaluate("3//7=").unwrap(), "0");
        assert_eq!(evaluate("99//1=").unwrap(), "99");
        assert!(matches!(evaluate("3-7="), Err(Error::DomainError(_))));
        assert!(matches!(evaluate("3//0="), Err(Error::DomainError(_))));
        assert!(evaluate("3^7=").is_err());
    }

    #[test]
    fn small_exhaustive_against_machine_integers() {
        for a in 0u64..60 {
            for b in 0u64..60 {
                let e = |s: &str| evaluate(&format!("{a}{s}{b}=")).unwrap();
                assert_eq!(e("+"), (a + b).to_string());
                assert_eq!(e("*"), (a * b).to_string());
                assert_eq!(e(">"), if a > b { "True" } else { "False" });
                if a >= b {
                    assert_eq!(e("-"), (a - b).to_string());
                }
                if b > 0 {
                    assert_eq!(e("//"), (a / b).to_string());
                }
            }
        }
    }
}
