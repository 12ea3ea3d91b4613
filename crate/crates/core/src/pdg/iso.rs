//! Graph matching: backtracking search for a kind- and edge-preserving
//! bijection, plus the permutation oracle used to test it.

use super::{Isomorphism, Pdg, DEFAULT_ISO_BUDGET};
use std::collections::BTreeSet;
use thiserror::Error;

/// The search exceeded its step budget; callers treat the pair as
/// non-equivalent but report it separately from a definite mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("isomorphism search exceeded {budget} steps")]
pub struct Timeout {
    pub budget: u64,
}

/// Searches with the default budget.
pub fn find_isomorphism(a: &Pdg, b: &Pdg) -> Result<Option<Isomorphism>, Timeout> {
    find_isomorphism_with_budget(a, b, DEFAULT_ISO_BUDGET)
}

/// Backtracking search, one budget unit per candidate trial. Complete up to
/// the budget: `Ok(None)` means no isomorphism exists.
pub fn find_isomorphism_with_budget(
    a: &Pdg,
    b: &Pdg,
    budget: u64,
) -> Result<Option<Isomorphism>, Timeout> {
    if a.len() != b.len()
        || a.data_edges().len() != b.data_edges().len()
        || a.control_edges().len() != b.control_edges().len()
    {
        return Ok(None);
    }

    // Class and degree-signature multisets must agree exactly.
    let signature = |g: &Pdg| -> Vec<((u8, &'static str), [usize; 4])> {
        let mut v: Vec<_> = (0..g.len())
            .map(|i| (g.kind(i).class(), g.degrees(i)))
            .collect();
        v.sort();
        v
    };
    if signature(a) != signature(b) {
        return Ok(None);
    }

    let n = a.len();
    // Match order: most-connected-to-already-matched first, so constraint
    // propagation bites early; deterministic tie-breaks.
    let neighbors = |g: &Pdg, i: usize| -> BTreeSet<usize> {
        g.data_edges()
            .iter()
            .chain(g.control_edges().iter())
            .filter_map(|&(x, y)| {
                if x == i {
                    Some(y)
                } else if y == i {
                    Some(x)
                } else {
                    None
                }
            })
            .collect()
    };
    let adj: Vec<BTreeSet<usize>> = (0..n).map(|i| neighbors(a, i)).collect();
    let degree_total: Vec<usize> = (0..n).map(|i| a.degrees(i).iter().sum()).collect();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&i| !placed[i])
            .max_by_key(|&i| {
                let attached = adj[i].iter().filter(|&&j| placed[j]).count();
                (attached, degree_total[i], std::cmp::Reverse(i))
            })
            .expect("unplaced node remains");
        placed[next] = true;
        order.push(next);
    }

    let mut search = Search {
        a,
        b,
        a_deg: (0..n).map(|i| a.degrees(i)).collect(),
        b_deg: (0..n).map(|i| b.degrees(i)).collect(),
        order,
        map: vec![usize::MAX; n],
        used: vec![false; n],
        budget,
        requested: budget,
    };
    match search.place(0) {
        Ok(true) => Ok(Some(Isomorphism { map: search.map })),
        Ok(false) => Ok(None),
        Err(t) => Err(t),
    }
}

struct Search<'g> {
    a: &'g Pdg,
    b: &'g Pdg,
    a_deg: Vec<[usize; 4]>,
    b_deg: Vec<[usize; 4]>,
    order: Vec<usize>,
    map: Vec<usize>,
    used: Vec<bool>,
    budget: u64,
    requested: u64,
}

impl Search<'_> {
    fn consistent(&self, ai: usize, bi: usize) -> bool {
        // Self control dependence must agree (loop heads).
        if self.a.control_edges().contains(&(ai, ai))
            != self.b.control_edges().contains(&(bi, bi))
        {
            return false;
        }
        for aj in 0..self.map.len() {
            let bj = self.map[aj];
            if bj == usize::MAX || aj == ai {
                continue;
            }
            let ad = self.a.data_edges();
            let bd = self.b.data_edges();
            let ac = self.a.control_edges();
            let bc = self.b.control_edges();
            if ad.contains(&(ai, aj)) != bd.contains(&(bi, bj))
                || ad.contains(&(aj, ai)) != bd.contains(&(bj, bi))
                || ac.contains(&(ai, aj)) != bc.contains(&(bi, bj))
                || ac.contains(&(aj, ai)) != bc.contains(&(bj, bi))
            {
                return false;
            }
        }
        true
    }

    fn place(&mut self, depth: usize) -> Result<bool, Timeout> {
        if depth == self.order.len() {
            return Ok(true);
        }
        let ai = self.order[depth];
        for bi in 0..self.map.len() {
            if self.used[bi]
                || !self.a.kind(ai).compatible(self.b.kind(bi))
                || self.a_deg[ai] != self.b_deg[bi]
            {
                continue;
            }
            if self.budget == 0 {
                return Err(Timeout {
                    budget: self.requested,
                });
            }
            self.budget -= 1;
            if !self.consistent(ai, bi) {
                continue;
            }
            self.map[ai] = bi;
            self.used[bi] = true;
            if self.place(depth + 1)? {
                return Ok(true);
            }
            self.map[ai] = usize::MAX;
            self.used[bi] = false;
        }
        Ok(false)
    }
}

/// Exhaustive oracle: enumerates every kind-respecting bijection and checks
/// full edge equality at the leaves. Exponential; test-sized graphs only.
pub fn brute_force_isomorphism(a: &Pdg, b: &Pdg) -> Option<Isomorphism> {
    if a.len() != b.len() {
        return None;
    }
    let n = a.len();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn assign(
        a: &Pdg,
        b: &Pdg,
        i: usize,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if i == a.len() {
            let witness = Isomorphism { map: map.clone() };
            return witness.validate(a, b);
        }
        for bi in 0..b.len() {
            if used[bi] || !a.kind(i).compatible(b.kind(bi)) {
                continue;
            }
            map[i] = bi;
            used[bi] = true;
            if assign(a, b, i + 1, map, used) {
                return true;
            }
            map[i] = usize::MAX;
            used[bi] = false;
        }
        false
    }
    if assign(a, b, 0, &mut map, &mut used) {
        Some(Isomorphism { map })
    } else {
        None
    }
}
