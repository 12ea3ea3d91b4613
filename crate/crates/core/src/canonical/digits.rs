//! Digit splitting keeps numeric vocabulary at ten symbols: numbers are
//! expanded one digit per token and fused back after translation.

use super::{is_number, TokenSeq};

/// Sign marker emitted before the digit run of a negative number. It never
/// leaves this module except inside split token streams.
pub const NEG_TOKEN: &str = "NEG";

fn is_digit_token(t: &str) -> bool {
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

/// Expands every decimal number into single-digit tokens, prefixing negative
/// numbers with [`NEG_TOKEN`].
pub fn split_digits(tokens: &TokenSeq) -> TokenSeq {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens.iter() {
        if !is_number(t) {
            out.push(t.clone());
            continue;
        }
        let digits = match t.strip_prefix('-') {
            Some(d) => {
                out.push(NEG_TOKEN.to_string());
                d
            }
            None => t.as_str(),
        };
        for c in digits.chars() {
            out.push(c.to_string());
        }
    }
    TokenSeq::new(out)
}

/// Fuses maximal digit runs (optionally preceded by [`NEG_TOKEN`]) back into
/// numbers. Inverse of [`split_digits`] on sequences whose numbers are in
/// canonical decimal form.
pub fn fuse_digits(tokens: &TokenSeq) -> TokenSeq {
    let toks = tokens.tokens();
    let mut out = Vec::with_capacity(toks.len());
    let mut i = 0;
    while i < toks.len() {
        let (negative, start) = if toks[i] == NEG_TOKEN && i + 1 < toks.len() && is_digit_token(&toks[i + 1]) {
            (true, i + 1)
        } else {
            (false, i)
        };
        if !is_digit_token(&toks[start]) {
            out.push(toks[i].clone());
            i += 1;
            continue;
        }
        let mut end = start;
        while end + 1 < toks.len() && is_digit_token(&toks[end + 1]) {
            end += 1;
        }
        let mut num = String::new();
        if negative {
            num.push('-');
        }
        for t in &toks[start..=end] {
            num.push_str(t);
        }
        out.push(num);
        i = end + 1;
    }
    TokenSeq::new(out)
}
