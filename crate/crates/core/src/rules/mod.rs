//! Turns verified decompilations into reusable rewrite rules.
//!
//! A rule is an (assembly pattern, source pattern) pair sharing one
//! placeholder namespace: `X_i` for variables, `N_i` for numbers, `L_i` for
//! labels, indexed in order of first appearance on the assembly side. A
//! number is abstracted only when the constant-repair probe shows it tracks a
//! source literal of equal value; constants that the compiler transformed
//! (shift counts, magic multipliers) or synthesized (the unit of `++`) stay
//! concrete, so every rule remains sound for the pairs that support it.

use crate::canonical::{is_identifier, is_number, is_reserved, TokenSeq};
use crate::lang::{emit_tokens, parse_tokens, Expr, Program, Statement};
use crate::minicc::{clean, compile_clean, AsmProgram, CompilerOptions};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// One extracted rewrite rule with the number of successes behind it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "RawRule", try_from = "RawRule")]
pub struct Rule {
    pub low_pattern: TokenSeq,
    pub high_pattern: TokenSeq,
    pub support: usize,
}

#[derive(Serialize, Deserialize)]
struct RawRule {
    low: String,
    high: String,
    support: usize,
}

impl From<Rule> for RawRule {
    fn from(r: Rule) -> RawRule {
        RawRule { low: r.low_pattern.to_string(), high: r.high_pattern.to_string(), support: r.support }
    }
}

impl TryFrom<RawRule> for Rule {
    type Error = std::convert::Infallible;
    fn try_from(r: RawRule) -> Result<Rule, Self::Error> {
        Ok(Rule {
            low_pattern: TokenSeq::from_text(&r.low),
            high_pattern: TokenSeq::from_text(&r.high),
            support: r.support,
        })
    }
}

/// A constant on the assembly side could not be tied to a source literal or
/// ruled structural, so the pair cannot be abstracted safely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("a low-side constant has no recorded source slot")]
pub struct CorrespondenceUnknown;

fn is_label(token: &str) -> bool {
    token.starts_with(".L")
}

/// Numeric literals of a program, in statement order.
fn literal_values(p: &Program) -> Vec<i32> {
    let mut out = Vec::new();
    let mut p = p.clone();
    for_each_literal(&mut p, &mut |n| out.push(*n));
    out
}

/// A copy of `p` with its `index`-th literal replaced by `value`.
fn with_literal(p: &Program, index: usize, value: i32) -> Program {
    let mut p = p.clone();
    let mut k = 0usize;
    for_each_literal(&mut p, &mut |n| {
        if k == index {
            *n = value;
        }
        k += 1;
    });
    p
}

fn for_each_literal(p: &mut Program, f: &mut impl FnMut(&mut i32)) {
    fn expr(e: &mut Expr, f: &mut impl FnMut(&mut i32)) {
        match e {
            Expr::Num(n) => f(n),
            Expr::Binary { lhs, rhs, .. } => {
                expr(lhs, f);
                expr(rhs, f);
            }
            Expr::Var(_) | Expr::Step { .. } => {}
        }
    }
    fn stmt(s: &mut Statement, f: &mut impl FnMut(&mut i32)) {
        match s {
            Statement::Assign { value, .. } => expr(value, f),
            Statement::Branch { cond, then_body, else_body } => {
                expr(&mut cond.lhs, f);
                expr(&mut cond.rhs, f);
                for s in then_body {
                    stmt(s, f);
                }
                for s in else_body.iter_mut().flatten() {
                    stmt(s, f);
                }
            }
            Statement::Loop { cond, body } => {
                expr(&mut cond.lhs, f);
                expr(&mut cond.rhs, f);
                for s in body {
                    stmt(s, f);
                }
            }
        }
    }
    for s in &mut p.statements {
        stmt(s, f);
    }
}

/// What the probe learned about each source literal.
struct Probe {
    /// Low-side token positions each literal steers, when a same-shape
    /// perturbation exists.
    driven: Vec<BTreeSet<usize>>,
    /// Literals whose every perturbation changed the compiled shape.
    rigid: Vec<bool>,
}

/// Token stream with numbers masked; two streams with equal shape differ
/// only in constant values.
fn shape(tokens: &[String]) -> Vec<&str> {
    tokens.iter().map(|t| if is_number(t) { "#" } else { t.as_str() }).collect()
}

fn probe_values(v: i32) -> Vec<i32> {
    let mut out = Vec::new();
    let doubled = v.checked_mul(2);
    for c in [Some(v + 1), Some(v + 2), v.checked_sub(1), doubled, Some(3), Some(5), Some(7), Some(11), Some(13), Some(15)]
        .into_iter()
        .flatten()
    {
        if c != v && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// Perturbs each literal until some candidate recompiles to the same shape,
/// recording which low-side constants moved with it.
fn probe(p: &Program, base: &[String], options: CompilerOptions) -> Probe {
    let values = literal_values(p);
    let mut driven = Vec::with_capacity(values.len());
    let mut rigid = Vec::with_capacity(values.len());
    for (k, &v) in values.iter().enumerate() {
        let mut found = None;
        for c in probe_values(v) {
            let asm = compile_clean(&with_literal(p, k, c), options);
            let tokens: Vec<String> = TokenSeq::from_text(&asm.to_string()).tokens().to_vec();
            if shape(&tokens) != shape(base) {
                continue;
            }
            found = Some((0..base.len()).filter(|&i| tokens[i] != base[i]).collect::<BTreeSet<_>>());
            break;
        }
        rigid.push(found.is_none());
        driven.push(found.unwrap_or_default());
    }
    Probe { driven, rigid }
}

/// Decides which number tokens are abstractable and renders both patterns.
///
/// A number string is abstracted only when every occurrence on the low side
/// is driven by literals of that same value and those literals drive nothing
/// else; anything murkier stays concrete. An undriven low-side number in the
/// presence of a rigid literal is unattributable.
fn abstract_with(
    low: &[String],
    high: &[String],
    values: &[i32],
    probe: &Probe,
) -> Result<(TokenSeq, TokenSeq), CorrespondenceUnknown> {
    let mut driving_slots: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (slot, positions) in probe.driven.iter().enumerate() {
        for &p in positions {
            driving_slots.entry(p).or_default().insert(slot);
        }
    }
    let any_rigid = probe.rigid.iter().any(|&r| r);
    for (i, t) in low.iter().enumerate() {
        if is_number(t) && !driving_slots.contains_key(&i) && any_rigid {
            return Err(CorrespondenceUnknown);
        }
    }

    // A literal is identity-clean when it only moves constants equal to its
    // own value.
    let clean_slot: Vec<bool> = (0..values.len())
        .map(|k| {
            !probe.rigid[k]
                && !probe.driven[k].is_empty()
                && probe.driven[k].iter().all(|&p| low[p] == values[k].to_string())
        })
        .collect();
    let mut abstractable: BTreeSet<String> = BTreeSet::new();
    let distinct: BTreeSet<String> = low.iter().filter(|t| is_number(t.as_str())).cloned().collect();
    for s in &distinct {
        let positions: Vec<usize> = low
            .iter()
            .enumerate()
            .filter(|(_, t)| *t == s)
            .map(|(i, _)| i)
            .collect();
        let all_driven_clean = positions.iter().all(|p| {
            driving_slots
                .get(p)
                .is_some_and(|slots| !slots.is_empty() && slots.iter().all(|&k| clean_slot[k]))
        });
        // Every equal-valued literal must be clean too, or the high side
        // would spell the same token two different ways.
        let peers_clean = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.to_string() == *s)
            .all(|(k, _)| clean_slot[k]);
        if all_driven_clean && peers_clean {
            abstractable.insert(s.clone());
        }
    }

    let mut vars: Vec<String> = Vec::new();
    let mut nums: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut render = |tokens: &[String]| -> Vec<String> {
        tokens
            .iter()
            .map(|t| {
                if is_number(t) && abstractable.contains(t) {
                    format!("N_{}", index_of(&mut nums, t) + 1)
                } else if is_label(t) {
                    format!("L_{}", index_of(&mut labels, t) + 1)
                } else if is_identifier(t) && !is_reserved(t) {
                    format!("X_{}", index_of(&mut vars, t) + 1)
                } else {
                    t.clone()
                }
            })
            .collect()
    };
    let low_pattern = render(low);
    let high_pattern = render(high);
    Ok((TokenSeq::new(low_pattern), TokenSeq::new(high_pattern)))
}

fn index_of(list: &mut Vec<String>, token: &str) -> usize {
    match list.iter().position(|t| t == token) {
        Some(i) => i,
        None => {
            list.push(token.to_string());
            list.len() - 1
        }
    }
}

/// Abstracts one verified pair into patterns, or reports that some assembly
/// constant cannot be attributed.
fn abstract_pair(
    program: &Program,
    options: CompilerOptions,
) -> Result<(TokenSeq, TokenSeq), CorrespondenceUnknown> {
    let low: Vec<String> = TokenSeq::from_text(&compile_clean(program, options).to_string())
        .tokens()
        .to_vec();
    let high = emit_tokens(program);
    let pr = probe(program, &low, options);
    abstract_with(&low, &high, &literal_values(program), &pr)
}

/// Abstracts every distinct verified pair, merges identical patterns, and
/// returns the rules sorted by support (ties broken textually) together with
/// the number of pairs skipped for unattributable constants.
pub fn extract_rules(successes: &[(AsmProgram, Program)], options: CompilerOptions) -> (Vec<Rule>, usize) {
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut skipped = 0usize;
    for (asm, program) in successes {
        if !seen.insert((clean(asm).to_string(), program.to_string())) {
            continue;
        }
        match abstract_pair(program, options) {
            Ok((low, high)) => *counts.entry((low.to_string(), high.to_string())).or_default() += 1,
            Err(CorrespondenceUnknown) => skipped += 1,
        }
    }
    let mut rules: Vec<Rule> = counts
        .into_iter()
        .map(|((low, high), support)| Rule {
            low_pattern: TokenSeq::from_text(&low),
            high_pattern: TokenSeq::from_text(&high),
            support,
        })
        .collect();
    rules.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then_with(|| a.low_pattern.to_string().cmp(&b.low_pattern.to_string()))
            .then_with(|| a.high_pattern.to_string().cmp(&b.high_pattern.to_string()))
    });
    (rules, skipped)
}

/// Placeholder namespace of a pattern token, if it is one.
fn placeholder(token: &str) -> Option<char> {
    let (ns, index) = token.split_once('_')?;
    if matches!(ns, "X" | "N" | "L") && !index.is_empty() && index.bytes().all(|b| b.is_ascii_digit()) {
        ns.chars().next()
    } else {
        None
    }
}

fn class_matches(ns: char, token: &str) -> bool {
    match ns {
        'N' => is_number(token),
        'L' => is_label(token),
        _ => is_identifier(token) && !is_reserved(token),
    }
}

/// Matches `a` against the rule's assembly pattern and, on success, returns
/// the instantiated source side.
pub fn apply_rule(r: &Rule, a: &AsmProgram) -> Option<Program> {
    let tokens: Vec<String> = TokenSeq::from_text(&clean(a).to_string()).tokens().to_vec();
    if tokens.len() != r.low_pattern.len() {
        return None;
    }
    let mut binding: BTreeMap<&str, &str> = BTreeMap::new();
    for (pat, tok) in r.low_pattern.iter().zip(tokens.iter()) {
        match placeholder(pat) {
            Some(ns) => {
                if !class_matches(ns, tok) {
                    return None;
                }
                match binding.get(pat.as_str()) {
                    Some(&bound) if bound != tok.as_str() => return None,
                    Some(_) => {}
                    None => {
                        binding.insert(pat.as_str(), tok.as_str());
                    }
                }
            }
            None => {
                if pat != tok {
                    return None;
                }
            }
        }
    }
    let instantiated: Vec<String> = r
        .high_pattern
        .iter()
        .map(|t| binding.get(t.as_str()).map_or_else(|| t.clone(), |b| b.to_string()))
        .collect();
    parse_tokens(&instantiated).ok()
}
