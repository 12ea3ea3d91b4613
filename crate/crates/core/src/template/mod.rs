//! Second decompilation phase: constant repair.
//!
//! The translation model is good at shape and bad at arithmetic, so its
//! output is treated as a template whose numeric literals are slots rather
//! than answers. Recompiling the template and matching its dependence graph
//! against the input exposes exactly which constants are wrong; nudging each
//! slot and recompiling shows which graph constants it steers; and a small
//! library of inverted compiler transformations proposes source values for
//! each wrong constant. No proposal is trusted: every tentative value is
//! recompiled and re-checked against the input graph.

use crate::lang::{Expr, Program, Statement};
use crate::minicc::{magic_s32, AsmProgram};
use crate::pdg::{build_pdg, find_isomorphism, Isomorphism, NodeKind, Pdg};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Recompilation budget for one `fill` call, probing included.
pub const MAX_RECOMPILES: usize = 64;
/// Candidate values tried per mismatched constant.
pub const MAX_CANDIDATES: usize = 8;
/// Data-edge hops searched around a constant for its multiply/shift context.
const CONTEXT_HOPS: usize = 4;

/// One numeric literal of the template. `position` indexes the program's
/// left-to-right literal walk; `initial` is the model's suggestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub id: usize,
    pub position: usize,
    pub initial: i32,
}

/// A structurally-trusted program whose numbers are up for revision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub program: Program,
    pub slots: Vec<Slot>,
}

impl Template {
    /// Registers every numeric literal of `program` as a slot.
    pub fn new(program: Program) -> Self {
        let slots = collect_literals(&program)
            .into_iter()
            .enumerate()
            .map(|(k, v)| Slot {
                id: k,
                position: k,
                initial: v,
            })
            .collect();
        Template { program, slots }
    }
}

/// A pair of constants the witness maps together but whose values differ:
/// the recompiled graph says `current` where the input says `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Mismatch {
    pub recompiled_node: usize,
    pub input_node: usize,
    pub current: i32,
    pub target: i32,
}

/// Which recompiled constants each slot steers. Slots whose every probe
/// broke the compiled shape are rigid: data, not an error, but useless for
/// repair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InfluenceMap {
    influences: BTreeMap<usize, BTreeSet<usize>>,
    rigid: BTreeSet<usize>,
}

impl InfluenceMap {
    /// Constant nodes the slot was observed to change.
    pub fn influenced(&self, slot: usize) -> Option<&BTreeSet<usize>> {
        self.influences.get(&slot)
    }

    pub fn is_rigid(&self, slot: usize) -> bool {
        self.rigid.contains(&slot)
    }

    /// Slots that steer `node`, nearest influence first.
    pub fn slots_for(&self, node: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .influences
            .iter()
            .filter(|(_, nodes)| nodes.contains(&node))
            .map(|(&slot, _)| slot)
            .collect();
        v.sort_by_key(|slot| {
            let first = self.influences[slot].iter().next().copied();
            (first.unwrap_or(usize::MAX), *slot)
        });
        v
    }
}

/// The compiler transformations the candidate generator knows how to run
/// backwards. Each is a partial inverse: its suggestion is only accepted
/// after recompiling and re-matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionPattern {
    /// The constant survives compilation unchanged.
    Identity,
    /// Multiply/divide by 2^k compiles to a shift by k.
    Pow2Exponent,
    /// Strict/inclusive comparison rewrites move the constant by one.
    ConditionOffset,
    /// Division by d compiles to a multiply by a magic constant; d is
    /// recovered by rounding 2^(32+s)/m and checking that (m, s) regenerate.
    MagicDivisor,
}

/// Phase-2 failure: constants that could not be repaired. An empty list
/// means the template did not even match the input's shape. Either way the
/// caller routes the sample back into the failure pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FillFailure {
    pub unresolved: Vec<Mismatch>,
}

impl fmt::Display for FillFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unresolved.is_empty() {
            write!(f, "template does not match the input structure")
        } else {
            write!(
                f,
                "{} constant(s) could not be repaired",
                self.unresolved.len()
            )
        }
    }
}

impl std::error::Error for FillFailure {}

fn for_each_literal_mut(p: &mut Program, f: &mut impl FnMut(&mut i32)) {
    fn stmt(s: &mut Statement, f: &mut impl FnMut(&mut i32)) {
        match s {
            Statement::Assign { value, .. } => expr(value, f),
            Statement::Branch {
                cond,
                then_body,
                else_body,
            } => {
                expr(&mut cond.lhs, f);
                expr(&mut cond.rhs, f);
                then_body.iter_mut().for_each(|s| stmt(s, f));
                if let Some(body) = else_body {
                    body.iter_mut().for_each(|s| stmt(s, f));
                }
            }
            Statement::Loop { cond, body } => {
                expr(&mut cond.lhs, f);
                expr(&mut cond.rhs, f);
                body.iter_mut().for_each(|s| stmt(s, f));
            }
        }
    }
    fn expr(e: &mut Expr, f: &mut impl FnMut(&mut i32)) {
        match e {
            Expr::Num(v) => f(v),
            Expr::Binary { lhs, rhs, .. } => {
                expr(lhs, f);
                expr(rhs, f);
            }
            Expr::Var(_) | Expr::Step { .. } => {}
        }
    }
    p.statements.iter_mut().for_each(|s| stmt(s, f));
}

fn collect_literals(p: &Program) -> Vec<i32> {
    let mut c = p.clone();
    let mut out = Vec::new();
    for_each_literal_mut(&mut c, &mut |v| out.push(*v));
    out
}

fn set_literal(p: &mut Program, position: usize, value: i32) {
    let mut k = 0usize;
    for_each_literal_mut(p, &mut |v| {
        if k == position {
            *v = value;
        }
        k += 1;
    });
}

/// Token sequence with every immediate masked out. Two programs with equal
/// keys have the same instructions, registers, variables, and labels, and
/// may differ only in numbers. Variables are identifiers, so no non-numeric
/// token can collide with the mask.
fn shape_key(a: &AsmProgram) -> Vec<String> {
    crate::minicc::to_text(a)
        .split_whitespace()
        .map(|t| {
            if t.parse::<i32>().is_ok() {
                "#".to_string()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// NumConst nodes feeding instruction `instr`, in immediate-operand order.
/// Feeder ids are allocated consecutively before their instruction, so
/// ascending id order is operand order.
fn const_feeders(g: &Pdg, instr: usize) -> Vec<usize> {
    let Some(op) = g.instruction_node(instr) else {
        return Vec::new();
    };
    g.data_edges()
        .iter()
        .filter(|&&(src, dst)| dst == op && matches!(g.kind(src), NodeKind::NumConst(_)))
        .map(|&(src, _)| src)
        .collect()
}

fn data_succs(g: &Pdg, n: usize) -> Vec<usize> {
    g.data_edges()
        .iter()
        .filter(|&&(src, _)| src == n)
        .map(|&(_, dst)| dst)
        .collect()
}

fn data_preds(g: &Pdg, n: usize) -> Vec<usize> {
    g.data_edges()
        .iter()
        .filter(|&&(_, dst)| dst == n)
        .map(|&(src, _)| src)
        .collect()
}

fn is_op(g: &Pdg, n: usize, name: &str) -> bool {
    matches!(g.kind(n), NodeKind::Op(o) if *o == name)
}

/// Nodes within `hops` data-edge steps downstream of `n`, breadth-first.
fn downstream(g: &Pdg, n: usize, hops: usize) -> Vec<usize> {
    let mut seen = BTreeSet::from([n]);
    let mut frontier = vec![n];
    let mut out = Vec::new();
    for _ in 0..hops {
        let mut next = Vec::new();
        for &x in &frontier {
            for y in data_succs(g, x) {
                if seen.insert(y) {
                    next.push(y);
                    out.push(y);
                }
            }
        }
        frontier = next;
    }
    out
}

/// Pairs of constants the witness maps together but whose values differ,
/// in recompiled node order. `iso` maps recompiled ids to input ids.
pub fn find_mismatches(iso: &Isomorphism, recompiled: &Pdg, input: &Pdg) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for r in 0..recompiled.len() {
        let NodeKind::NumConst(current) = *recompiled.kind(r) else {
            continue;
        };
        let i = iso.apply(r);
        let NodeKind::NumConst(target) = *input.kind(i) else {
            continue;
        };
        if current != target {
            out.push(Mismatch {
                recompiled_node: r,
                input_node: i,
                current,
                target,
            });
        }
    }
    out
}

/// Next two divisors past `v` that compile to the same magic-multiply shape
/// (same multiplier sign, same presence of the shift). Probing with these
/// moves the multiplier and shift constants without breaking structure.
fn same_signature_divisors(v: i32) -> Vec<i32> {
    if v < 3 || (v as u32).is_power_of_two() {
        return Vec::new();
    }
    let sig = |d: i32| {
        let (m, s) = magic_s32(d);
        (m < 0, s > 0)
    };
    let want = sig(v);
    let mut out = Vec::new();
    for w in (v as i64 + 1)..=(v as i64).saturating_add(128) {
        if out.len() == 2 || w > i32::MAX as i64 {
            break;
        }
        let w = w as i32;
        if !(w as u32).is_power_of_two() && sig(w) == want {
            out.push(w);
        }
    }
    out
}

/// Probe schedule for a slot: the nudged value first, then shape-preserving
/// alternates (next powers of two for a power of two, same-signature
/// divisors otherwise). At most three values.
fn probe_values(v: i32) -> Vec<i32> {
    let mut out = vec![v.saturating_add(1)];
    if v > 0 && (v as u32).is_power_of_two() {
        out.extend([v.checked_mul(2), v.checked_mul(4)].into_iter().flatten());
    } else {
        out.extend(same_signature_divisors(v));
        out.push(v.saturating_add(2));
    }
    let mut seen = BTreeSet::new();
    out.retain(|&w| w != v && seen.insert(w));
    out.truncate(3);
    out
}

struct BudgetExhausted;

fn spend<F: Fn(&Program) -> AsmProgram>(
    compile: &F,
    p: &Program,
    budget: &mut usize,
) -> Result<AsmProgram, BudgetExhausted> {
    if *budget == 0 {
        return Err(BudgetExhausted);
    }
    *budget -= 1;
    Ok(compile(p))
}

/// Recompiled constant nodes whose values differ between `base` and
/// `probe`; the two programs must have equal shape keys.
fn changed_consts(base: &AsmProgram, base_pdg: &Pdg, probe: &AsmProgram) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, (x, y)) in base
        .instructions
        .iter()
        .zip(&probe.instructions)
        .enumerate()
    {
        let (a, b) = (x.immediates(), y.immediates());
        if a == b {
            continue;
        }
        let feeders = const_feeders(base_pdg, i);
        debug_assert_eq!(feeders.len(), a.len());
        for (j, (va, vb)) in a.iter().zip(&b).enumerate() {
            if va != vb {
                out.push(feeders[j]);
            }
        }
    }
    out
}

fn probe_slots<F: Fn(&Program) -> AsmProgram>(
    t: &Template,
    compile: &F,
    base_asm: &AsmProgram,
    base_pdg: &Pdg,
    budget: &mut usize,
) -> Result<InfluenceMap, BudgetExhausted> {
    let base_key = shape_key(base_asm);
    let mut map = InfluenceMap::default();
    for slot in &t.slots {
        let mut touched = BTreeSet::new();
        let mut preserved = false;
        for w in probe_values(slot.initial) {
            let mut probe = t.program.clone();
            set_literal(&mut probe, slot.position, w);
            let asm = spend(compile, &probe, budget)?;
            if shape_key(&asm) != base_key {
                continue;
            }
            preserved = true;
            touched.extend(changed_consts(base_asm, base_pdg, &asm));
        }
        if preserved {
            map.influences.insert(slot.id, touched);
        } else {
            map.rigid.insert(slot.id);
        }
    }
    Ok(map)
}

/// Perturbs each slot and records which recompiled constants move. Slots
/// whose every probe broke the compiled shape come back rigid.
pub fn probe_influence<F: Fn(&Program) -> AsmProgram>(t: &Template, compile: F) -> InfluenceMap {
    let base_asm = compile(&t.program);
    let base_pdg = build_pdg(&base_asm).expect("compiler output is well formed");
    let mut budget = usize::MAX;
    match probe_slots(t, &compile, &base_asm, &base_pdg, &mut budget) {
        Ok(map) => map,
        Err(BudgetExhausted) => unreachable!("probing budget is unbounded here"),
    }
}

impl InversionPattern {
    /// Source-value suggestions for `m` under this pattern; empty when the
    /// pattern does not apply to the node's surroundings.
    fn invert(self, m: &Mismatch, input: &Pdg) -> Vec<i32> {
        match self {
            InversionPattern::Identity => vec![m.target],
            InversionPattern::Pow2Exponent => {
                if (0..=31).contains(&m.target) {
                    vec![1i32 << m.target]
                } else {
                    Vec::new()
                }
            }
            InversionPattern::ConditionOffset => {
                if data_succs(input, m.input_node)
                    .iter()
                    .any(|&x| is_op(input, x, "cmpl"))
                {
                    [m.target.checked_add(1), m.target.checked_sub(1)]
                        .into_iter()
                        .flatten()
                        .collect()
                } else {
                    Vec::new()
                }
            }
            InversionPattern::MagicDivisor => {
                magic_candidate(input, m.input_node, m.target).into_iter().collect()
            }
        }
    }
}

/// Divisor whose magic pair is exactly `(m, s)`, if one exists.
fn divisor_from(m: i32, s: u32) -> Option<i32> {
    if m == 0 || s > 31 {
        return None;
    }
    let m_eff: u64 = if m < 0 {
        (i64::from(m) + (1i64 << 32)) as u64
    } else {
        m as u64
    };
    let d = ((1u64 << (32 + s)) + m_eff / 2) / m_eff;
    if !(2..=i32::MAX as u64).contains(&d) {
        return None;
    }
    let d = d as i32;
    if magic_s32(d) == (m, s) {
        Some(d)
    } else {
        None
    }
}

/// Shift paired with a constant acting as a magic multiplier: the constant
/// must reach a widening multiply through at most one copy, and the shift
/// count is read off the sarl a few hops downstream (absent sarl means
/// shift zero).
fn multiplier_shift(input: &Pdg, node: usize) -> Option<u32> {
    let near = downstream(input, node, 2);
    if !near.iter().any(|&x| is_op(input, x, "imull")) {
        return None;
    }
    for x in downstream(input, node, CONTEXT_HOPS) {
        if !is_op(input, x, "sarl") {
            continue;
        }
        for p in data_preds(input, x) {
            if let NodeKind::NumConst(s) = *input.kind(p) {
                return (0..=31).contains(&s).then_some(s as u32);
            }
        }
    }
    Some(0)
}

/// Value of a NumConst feeding `n` directly, if any.
fn const_into(g: &Pdg, n: usize) -> Option<i32> {
    data_preds(g, n).into_iter().find_map(|p| match *g.kind(p) {
        NodeKind::NumConst(v) => Some(v),
        _ => None,
    })
}

/// The multiplier constant feeding the multiply a few hops upstream of
/// `sarl`: read either directly off the multiply or off the register copy
/// that loads it.
fn upstream_multiplier(input: &Pdg, sarl: usize) -> Option<i32> {
    let mut seen = BTreeSet::from([sarl]);
    let mut frontier = vec![sarl];
    for _ in 0..CONTEXT_HOPS {
        let mut next = Vec::new();
        for &x in &frontier {
            for p in data_preds(input, x) {
                if seen.insert(p) {
                    next.push(p);
                }
            }
        }
        for &p in &next {
            if !is_op(input, p, "imull") {
                continue;
            }
            if let Some(v) = const_into(input, p) {
                return Some(v);
            }
            for q in data_preds(input, p) {
                if is_op(input, q, "movl") {
                    if let Some(v) = const_into(input, q) {
                        return Some(v);
                    }
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    None
}

/// Candidate divisor for a constant sitting in a magic-divide context,
/// whether it plays the multiplier or the shift-count role.
fn magic_candidate(input: &Pdg, node: usize, target: i32) -> Option<i32> {
    if let Some(s) = multiplier_shift(input, node) {
        if let Some(d) = divisor_from(target, s) {
            return Some(d);
        }
    }
    if (0..=31).contains(&target) {
        for succ in data_succs(input, node) {
            if !is_op(input, succ, "sarl") {
                continue;
            }
            if let Some(m) = upstream_multiplier(input, succ) {
                if let Some(d) = divisor_from(m, target as u32) {
                    return Some(d);
                }
            }
        }
    }
    None
}

/// Ordered source-value candidates for one mismatched constant, obtained by
/// running the known compiler transformations backwards. Deduplicated,
/// capped, and never guaranteed: each must survive recompilation.
pub fn invert_candidates(m: &Mismatch, input: &Pdg) -> Vec<i32> {
    let mut out: Vec<i32> = Vec::new();
    for pattern in [
        InversionPattern::Identity,
        InversionPattern::Pow2Exponent,
        InversionPattern::ConditionOffset,
        InversionPattern::MagicDivisor,
    ] {
        for v in pattern.invert(m, input) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out.truncate(MAX_CANDIDATES);
    out
}

fn mismatch_pairs(ms: &[Mismatch]) -> BTreeSet<(usize, usize)> {
    ms.iter()
        .map(|m| (m.recompiled_node, m.input_node))
        .collect()
}

/// Repairs the template's constants until its recompilation matches `input`
/// exactly, or reports the constants it could not fix.
///
/// The search is slot-by-slot and value-by-value: for each mismatched
/// constant, each influencing slot is tried with each candidate value, and
/// a tentative value is kept only when recompiling strictly shrinks the set
/// of mismatched node pairs while preserving shape. Constants are never
/// searched jointly, so coupled slots (e.g. two factors folded into one
/// product) stay unresolved.
pub fn fill<F: Fn(&Program) -> AsmProgram>(
    t: &Template,
    input: &AsmProgram,
    compile: F,
) -> Result<Program, FillFailure> {
    let no_match = || FillFailure {
        unresolved: Vec::new(),
    };
    let input_pdg = build_pdg(input).map_err(|_| no_match())?;
    let mut budget = MAX_RECOMPILES;
    let base_asm = spend(&compile, &t.program, &mut budget).unwrap_or_else(|_| unreachable!());
    let base_pdg = build_pdg(&base_asm).expect("compiler output is well formed");
    let Ok(Some(iso)) = find_isomorphism(&base_pdg, &input_pdg) else {
        return Err(no_match());
    };

    let mut remaining = find_mismatches(&iso, &base_pdg, &input_pdg);
    if remaining.is_empty() {
        return Ok(t.program.clone());
    }

    let fail = |unresolved: Vec<Mismatch>| FillFailure { unresolved };
    let influence = probe_slots(t, &compile, &base_asm, &base_pdg, &mut budget)
        .map_err(|_| fail(remaining.clone()))?;

    let base_key = shape_key(&base_asm);
    let mut current = t.program.clone();
    let mut current_asm = base_asm;
    'outer: loop {
        if remaining.is_empty() {
            break;
        }
        for m in remaining.clone() {
            let candidates = invert_candidates(&m, &input_pdg);
            for slot in influence.slots_for(m.recompiled_node) {
                let position = t.slots[slot].position;
                let before = collect_literals(&current)[position];
                for &c in &candidates {
                    if c == before {
                        continue;
                    }
                    let mut patched = current.clone();
                    set_literal(&mut patched, position, c);
                    let asm = spend(&compile, &patched, &mut budget)
                        .map_err(|_| fail(remaining.clone()))?;
                    if shape_key(&asm) != base_key {
                        continue;
                    }
                    let pdg = build_pdg(&asm).expect("compiler output is well formed");
                    let after = find_mismatches(&iso, &pdg, &input_pdg);
                    // Strictly fewer mismatched pairs, none of them new.
                    let (ap, rp) = (mismatch_pairs(&after), mismatch_pairs(&remaining));
                    if ap.len() < rp.len() && ap.is_subset(&rp) {
                        current = patched;
                        current_asm = asm;
                        remaining = after;
                        continue 'outer;
                    }
                }
            }
        }
        break;
    }

    if !remaining.is_empty() {
        return Err(fail(remaining));
    }
    // Every acceptance preserved shape along the fixed witness; re-assert
    // before handing the program back.
    let final_pdg = build_pdg(&current_asm).expect("compiler output is well formed");
    assert!(
        iso.validate(&final_pdg, &input_pdg)
            && find_mismatches(&iso, &final_pdg, &input_pdg).is_empty(),
        "accepted a repair that does not verify against the input"
    );
    Ok(current)
}
