//! Canonicalization between raw text and the token streams the translator sees:
//! name abstraction, digit splitting/fusing, and the post-order source layout.

mod digits;
mod names;
mod postorder;

pub use digits::{fuse_digits, split_digits, NEG_TOKEN};
pub use names::{abstract_names, NameMap};
pub use postorder::{from_postorder, to_postorder, PostorderError, NUM_SEP};

use serde::{Deserialize, Serialize};

/// A whitespace-free token sequence. Tokens are never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
        TokenSeq(tokens)
    }

    pub fn from_text(text: &str) -> Self {
        TokenSeq(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token: impl Into<String>) {
        let token = token.into();
        debug_assert!(!token.is_empty() && !token.contains(char::is_whitespace));
        self.0.push(token);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = String>) {
        for t in other {
            self.push(t);
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

impl std::fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.join(" "))
    }
}

impl From<Vec<String>> for TokenSeq {
    fn from(v: Vec<String>) -> Self {
        TokenSeq::new(v)
    }
}

impl From<&[&str]> for TokenSeq {
    fn from(v: &[&str]) -> Self {
        TokenSeq::new(v.iter().map(|s| s.to_string()).collect())
    }
}

impl std::str::FromStr for TokenSeq {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(TokenSeq::from_text(s))
    }
}

impl IntoIterator for TokenSeq {
    type Item = String;
    type IntoIter = std::vec::IntoIter<String>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// True for tokens shaped like identifiers (names, not numbers or punctuation).
pub fn is_identifier(token: &str) -> bool {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// True for decimal integer tokens, optionally negative.
pub fn is_number(token: &str) -> bool {
    let digits = token.strip_prefix('-').unwrap_or(token);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

/// Identifier-shaped tokens that are part of either language rather than
/// variable names: source keywords, post-order markers, opcodes, registers.
pub fn is_reserved(token: &str) -> bool {
    const RESERVED: &[&str] = &[
        // source keywords and post-order markers
        "if", "else", "while", "ifelse",
        // assembly opcodes
        "movl", "addl", "subl", "imull", "idivl", "sall", "sarl", "shrl", "cmpl", "leal",
        "jmp", "jg", "jge", "jl", "jle", "je", "jne",
        // boilerplate opcodes tolerated by the text codec
        "ret", "leave", "pushl", "popl",
        // registers
        "eax", "ebx", "ecx", "edx",
        // digit-splitting sign marker
        "NEG",
    ];
    RESERVED.contains(&token)
}

/// Generic variable names produced by abstraction: X0, X1, ...
pub fn is_generic_name(token: &str) -> bool {
    token
        .strip_prefix('X')
        .map(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests;
