//! Variable-name abstraction: every identifier is replaced by a generic
//! X-name assigned in first-occurrence order, so vocabulary does not grow
//! with the naming habits of input programs.

use super::{is_generic_name, is_identifier, is_reserved, TokenSeq};
use serde::{Deserialize, Serialize};

/// Bijective map from original names to generic names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameMap {
    pairs: Vec<(String, String)>,
}

impl NameMap {
    pub fn to_generic(&self, original: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(o, _)| o == original)
            .map(|(_, g)| g.as_str())
    }

    pub fn to_original(&self, generic: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(_, g)| g == generic)
            .map(|(o, _)| o.as_str())
    }

    pub fn is_identity(&self) -> bool {
        self.pairs.iter().all(|(o, g)| o == g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(o, g)| (o.as_str(), g.as_str()))
    }

    /// Rewrites generic names in `tokens` back to their originals.
    pub fn restore(&self, tokens: &TokenSeq) -> TokenSeq {
        TokenSeq::new(
            tokens
                .iter()
                .map(|t| match self.to_original(t) {
                    Some(orig) => orig.to_string(),
                    None => t.clone(),
                })
                .collect(),
        )
    }

    fn insert(&mut self, original: String, generic: String) {
        self.pairs.push((original, generic));
    }
}

/// Replaces every variable-like identifier with a generic X-name.
///
/// Names that already have the generic shape map to themselves, which makes
/// the operation idempotent; remaining identifiers receive the smallest free
/// index in first-occurrence order. Keywords, opcodes and registers are left
/// untouched.
pub fn abstract_names(tokens: &TokenSeq) -> (TokenSeq, NameMap) {
    let mut map = NameMap::default();

    // Generic names act as fixed points, so reserve their indices first.
    let mut taken: Vec<usize> = Vec::new();
    for t in tokens.iter() {
        if is_generic_name(t) && !is_reserved(t) {
            if let Ok(idx) = t[1..].parse::<usize>() {
                if !taken.contains(&idx) {
                    taken.push(idx);
                }
            }
        }
    }

    let mut next_free = 0usize;
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens.iter() {
        if !is_identifier(t) || is_reserved(t) {
            out.push(t.clone());
            continue;
        }
        if let Some(g) = map.to_generic(t) {
            out.push(g.to_string());
            continue;
        }
        let generic = if is_generic_name(t) {
            t.clone()
        } else {
            while taken.contains(&next_free) {
                next_free += 1;
            }
            taken.push(next_free);
            format!("X{next_free}")
        };
        map.insert(t.clone(), generic.clone());
        out.push(generic);
    }
    (TokenSeq::new(out), map)
}
