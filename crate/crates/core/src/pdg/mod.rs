//! Program dependence graphs over assembly snippets, and the kind-constrained
//! isomorphism test that decides structural equivalence.
//!
//! Nodes are the computation instructions (labels, unconditional jumps and
//! boilerplate are control plumbing, not computation), one initializer node
//! per variable that is readable before any write, and one constant node per
//! immediate operand occurrence. Data edges follow reaching definitions;
//! control edges follow classic control dependence (a node depends on the
//! nearest conditional jumps that decide whether it runs).
//!
//! Two graphs are considered equivalent when a bijection exists that
//! preserves both edge relations and node kinds, where operator nodes must
//! agree on opcode class while initializer and constant nodes are wildcards
//! within their kind. That keeps variable naming and constant values out of
//! the structural check; constants are reconciled afterwards by template
//! filling.

mod iso;

pub use iso::{brute_force_isomorphism, find_isomorphism, find_isomorphism_with_budget, Timeout};

use crate::minicc::{AsmProgram, Instruction, Location};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

/// Default backtracking budget for [`find_isomorphism`].
pub const DEFAULT_ISO_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PdgError {
    #[error("jump to undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("label `{0}` defined more than once")]
    DuplicateLabel(String),
}

/// Node payload. `Op` carries the opcode class; the other two kinds carry
/// identifying detail that matching deliberately ignores.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Initial value of a variable read before any write.
    VarInit(String),
    /// One immediate operand occurrence.
    NumConst(i32),
    /// One computation instruction, labeled by opcode class.
    Op(&'static str),
}

impl NodeKind {
    /// Kind compatibility for matching: operator classes must agree,
    /// initializers and constants match any node of their own kind.
    pub fn compatible(&self, other: &NodeKind) -> bool {
        match (self, other) {
            (NodeKind::VarInit(_), NodeKind::VarInit(_)) => true,
            (NodeKind::NumConst(_), NodeKind::NumConst(_)) => true,
            (NodeKind::Op(a), NodeKind::Op(b)) => a == b,
            _ => false,
        }
    }

    /// Partition key: nodes can only ever map within the same class.
    fn class(&self) -> (u8, &'static str) {
        match self {
            NodeKind::VarInit(_) => (0, ""),
            NodeKind::NumConst(_) => (1, ""),
            NodeKind::Op(op) => (2, op),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdgNode {
    pub id: usize,
    pub kind: NodeKind,
}

/// Dependence graph. Node ids are dense indices; edge sets are ordered so
/// traversal and printing are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pdg {
    nodes: Vec<PdgNode>,
    data_edges: BTreeSet<(usize, usize)>,
    control_edges: BTreeSet<(usize, usize)>,
    /// For graphs built from a program: instruction index -> node id.
    instr_nodes: Vec<Option<usize>>,
}

impl Pdg {
    /// Builds a graph directly from parts (synthetic graphs for tests and
    /// oracles). Panics on dangling edge endpoints or data self-loops.
    pub fn from_parts(
        kinds: Vec<NodeKind>,
        data_edges: BTreeSet<(usize, usize)>,
        control_edges: BTreeSet<(usize, usize)>,
    ) -> Self {
        let n = kinds.len();
        for &(a, b) in data_edges.iter().chain(control_edges.iter()) {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range");
        }
        assert!(
            data_edges.iter().all(|(a, b)| a != b),
            "data self-loop"
        );
        Pdg {
            nodes: kinds
                .into_iter()
                .enumerate()
                .map(|(id, kind)| PdgNode { id, kind })
                .collect(),
            data_edges,
            control_edges,
            instr_nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PdgNode] {
        &self.nodes
    }

    pub fn kind(&self, id: usize) -> &NodeKind {
        &self.nodes[id].kind
    }

    pub fn data_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.data_edges
    }

    pub fn control_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.control_edges
    }

    /// Node id of the instruction at `index` in the program this graph was
    /// built from (None for labels, jumps, boilerplate, or synthetic graphs).
    pub fn instruction_node(&self, index: usize) -> Option<usize> {
        self.instr_nodes.get(index).copied().flatten()
    }

    /// Degree signature (data-out, data-in, control-out, control-in); an
    /// isomorphism preserves it exactly, so it serves as a cheap filter.
    fn degrees(&self, id: usize) -> [usize; 4] {
        [
            self.data_edges.iter().filter(|(a, _)| *a == id).count(),
            self.data_edges.iter().filter(|(_, b)| *b == id).count(),
            self.control_edges.iter().filter(|(a, _)| *a == id).count(),
            self.control_edges.iter().filter(|(_, b)| *b == id).count(),
        ]
    }

    /// Graphviz export; solid edges carry data, dashed edges carry control.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("digraph pdg {\n");
        for n in &self.nodes {
            let label = match &n.kind {
                NodeKind::VarInit(v) => format!("init {v}"),
                NodeKind::NumConst(c) => format!("const {c}"),
                NodeKind::Op(op) => op.to_string(),
            };
            let _ = writeln!(s, "  n{} [label=\"{}\"];", n.id, label);
        }
        for (a, b) in &self.data_edges {
            let _ = writeln!(s, "  n{a} -> n{b};");
        }
        for (a, b) in &self.control_edges {
            let _ = writeln!(s, "  n{a} -> n{b} [style=dashed];");
        }
        s.push_str("}\n");
        s
    }
}

/// Witness bijection between the nodes of two graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Isomorphism {
    /// `map[a_id] = b_id`.
    pub map: Vec<usize>,
}

impl Isomorphism {
    pub fn apply(&self, a_id: usize) -> usize {
        self.map[a_id]
    }

    /// Replays the witness against both graphs: bijectivity, kind
    /// compatibility, and both edge relations in both directions.
    pub fn validate(&self, a: &Pdg, b: &Pdg) -> bool {
        if a.len() != b.len() || self.map.len() != a.len() {
            return false;
        }
        let mut seen = vec![false; b.len()];
        for (ai, &bi) in self.map.iter().enumerate() {
            if bi >= b.len() || seen[bi] || !a.kind(ai).compatible(b.kind(bi)) {
                return false;
            }
            seen[bi] = true;
        }
        let mapped = |edges: &BTreeSet<(usize, usize)>| -> BTreeSet<(usize, usize)> {
            edges.iter().map(|&(x, y)| (self.map[x], self.map[y])).collect()
        };
        mapped(&a.data_edges) == b.data_edges && mapped(&a.control_edges) == b.control_edges
    }
}

/// One definition site: an instruction index, or a variable initializer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DefSite {
    Instr(usize),
    Init(usize),
}

/// Builds the dependence graph of an assembly snippet.
///
/// Feeder edges: each immediate operand contributes a constant node with one
/// data edge into its instruction; each variable that can be read before
/// being written contributes an initializer node with data edges to the
/// reads its initial value reaches.
pub fn build_pdg(a: &AsmProgram) -> Result<Pdg, PdgError> {
    let instrs = &a.instructions;
    let n = instrs.len();

    let mut label_at: HashMap<&str, usize> = HashMap::new();
    for (i, ins) in instrs.iter().enumerate() {
        if let Instruction::Label { name } = ins {
            if label_at.insert(name.as_str(), i).is_some() {
                return Err(PdgError::DuplicateLabel(name.clone()));
            }
        }
    }

    // Control-flow graph; node n is the virtual exit.
    let exit = n;
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    let sems: Vec<_> = instrs.iter().map(|i| i.semantics()).collect();
    for i in 0..n {
        if sems[i].falls_through {
            succ[i].push(i + 1); // i + 1 == exit when i is last
        }
        if let Some(target) = &sems[i].target {
            let t = *label_at
                .get(target.as_str())
                .ok_or_else(|| PdgError::UndefinedLabel(target.clone()))?;
            if !succ[i].contains(&t) {
                succ[i].push(t);
            }
        }
    }

    // Variables mentioned anywhere get an initializer definition at entry;
    // only those whose definition survives to a read become nodes.
    let mut var_ids: BTreeMap<String, usize> = BTreeMap::new();
    for sem in &sems {
        for l in sem.uses.iter().chain(sem.defs.iter()) {
            if let Location::Var(v) = l {
                let next = var_ids.len();
                var_ids.entry(v.clone()).or_insert(next);
            }
        }
    }

    // Definition sites, densely numbered: instruction defs then initializers.
    let mut sites: Vec<(DefSite, Location)> = Vec::new();
    for (i, sem) in sems.iter().enumerate() {
        for d in &sem.defs {
            sites.push((DefSite::Instr(i), d.clone()));
        }
    }
    for (v, &vi) in &var_ids {
        sites.push((DefSite::Init(vi), Location::Var(v.clone())));
    }
    let site_count = sites.len();
    let sites_of: BTreeMap<&Location, Vec<usize>> = {
        let mut m: BTreeMap<&Location, Vec<usize>> = BTreeMap::new();
        for (s, (_, loc)) in sites.iter().enumerate() {
            m.entry(loc).or_default().push(s);
        }
        m
    };

    // Reaching definitions to a fixpoint. IN/OUT are bitsets over sites.
    let words = site_count.div_ceil(64).max(1);
    let mut ins: Vec<Vec<u64>> = vec![vec![0u64; words]; n + 1];
    let mut entry_out = vec![0u64; words];
    for (s, (site, _)) in sites.iter().enumerate() {
        if matches!(site, DefSite::Init(_)) {
            entry_out[s / 64] |= 1 << (s % 64);
        }
    }
    let transfer = |i: usize, input: &[u64]| -> Vec<u64> {
        let mut out = input.to_vec();
        for d in &sems[i].defs {
            for &s in sites_of.get(d).map(Vec::as_slice).unwrap_or(&[]) {
                out[s / 64] &= !(1 << (s % 64)); // kill every other def of d
            }
        }
        for (s, (site, _)) in sites.iter().enumerate() {
            if *site == DefSite::Instr(i) {
                out[s / 64] |= 1 << (s % 64);
            }
        }
        out
    };
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..=n {
            let mut new_in = if i == 0 { entry_out.clone() } else { vec![0u64; words] };
            for p in 0..n {
                if succ[p].contains(&i) {
                    let pout = transfer(p, &ins[p]);
                    for w in 0..words {
                        new_in[w] |= pout[w];
                    }
                }
            }
            if new_in != ins[i] {
                ins[i] = new_in;
                changed = true;
            }
        }
    }

    // Postdominators over the CFG (exit included), then control dependence.
    let mut pdom: Vec<BTreeSet<usize>> = vec![(0..=n).collect(); n + 1];
    pdom[exit] = BTreeSet::from([exit]);
    let mut changed = true;
    while changed {
        changed = false;
        for i in (0..n).rev() {
            let mut acc: Option<BTreeSet<usize>> = None;
            for &s in &succ[i] {
                acc = Some(match acc {
                    None => pdom[s].clone(),
                    Some(cur) => cur.intersection(&pdom[s]).copied().collect(),
                });
            }
            let mut new = acc.unwrap_or_default();
            new.insert(i);
            if new != pdom[i] {
                pdom[i] = new;
                changed = true;
            }
        }
    }
    let ipdom = |i: usize| -> Option<usize> {
        let strict: Vec<usize> = pdom[i].iter().copied().filter(|&d| d != i).collect();
        strict
            .iter()
            .copied()
            .find(|&c| strict.iter().all(|&q| pdom[c].contains(&q)))
    };

    // Node allocation, in program order: initializers first, then per
    // instruction its constant feeders followed by the instruction itself.
    let mut nodes: Vec<PdgNode> = Vec::new();
    let push_node = |kind: NodeKind, nodes: &mut Vec<PdgNode>| -> usize {
        let id = nodes.len();
        nodes.push(PdgNode { id, kind });
        id
    };

    // An initializer becomes a node only if its definition reaches a use of
    // that variable (read-before-write on some path).
    let mut init_used = vec![false; var_ids.len()];
    for (i, sem) in sems.iter().enumerate() {
        for u in &sem.uses {
            if let Location::Var(_) = u {
                for &s in sites_of.get(u).map(Vec::as_slice).unwrap_or(&[]) {
                    if ins[i][s / 64] >> (s % 64) & 1 == 1 {
                        if let (DefSite::Init(vi), _) = sites[s] {
                            init_used[vi] = true;
                        }
                    }
                }
            }
        }
    }
    let mut init_node: Vec<Option<usize>> = vec![None; var_ids.len()];
    for (_, &vi) in var_ids.iter() {
        if init_used[vi] {
            let name = var_ids
                .iter()
                .find(|(_, &i)| i == vi)
                .map(|(v, _)| v.clone())
                .expect("index from map");
            init_node[vi] = Some(push_node(NodeKind::VarInit(name), &mut nodes));
        }
    }

    let mut instr_nodes: Vec<Option<usize>> = vec![None; n];
    for (i, ins_i) in instrs.iter().enumerate() {
        if matches!(
            ins_i,
            Instruction::Label { .. } | Instruction::Meta { .. } | Instruction::Jmp { .. }
        ) {
            continue;
        }
        for c in ins_i.immediates() {
            push_node(NodeKind::NumConst(c), &mut nodes);
        }
        instr_nodes[i] = Some(push_node(NodeKind::Op(ins_i.opcode()), &mut nodes));
    }

    // Constant feeders sit directly before their instruction node.
    let mut data_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, ins_i) in instrs.iter().enumerate() {
        let Some(iid) = instr_nodes[i] else { continue };
        let feeders = ins_i.immediates().len();
        for k in 0..feeders {
            data_edges.insert((iid - feeders + k, iid));
        }
    }

    // Data edges from reaching definitions.
    for (i, sem) in sems.iter().enumerate() {
        let Some(iid) = instr_nodes[i] else { continue };
        for u in &sem.uses {
            for &s in sites_of.get(u).map(Vec::as_slice).unwrap_or(&[]) {
                if ins[i][s / 64] >> (s % 64) & 1 == 1 {
                    let from = match sites[s].0 {
                        DefSite::Instr(j) => instr_nodes[j],
                        DefSite::Init(vi) => init_node[vi],
                    };
                    if let Some(from) = from {
                        if from != iid {
                            data_edges.insert((from, iid));
                        }
                    }
                }
            }
        }
    }

    // Control dependence (Ferrante et al.): for each branch edge u -> v where
    // v does not postdominate u, every node on the postdominator-tree path
    // from v up to (excluding) ipdom(u) depends on u.
    let mut control_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for u in 0..n {
        if succ[u].len() < 2 {
            continue;
        }
        let Some(un) = instr_nodes[u] else { continue };
        let stop = ipdom(u);
        for &v in &succ[u] {
            if pdom[u].contains(&v) && v != u {
                continue;
            }
            let mut w = Some(v);
            // Step cap: a malformed snippet (no path to exit) can leave the
            // postdominator sets degenerate; never walk longer than the tree
            // could be.
            let mut steps = 0;
            while let Some(cur) = w {
                steps += 1;
                if Some(cur) == stop || cur == exit || steps > n + 1 {
                    break;
                }
                if let Some(Some(wn)) = instr_nodes.get(cur) {
                    control_edges.insert((un, *wn));
                }
                if cur == u {
                    break; // loop back edge: u depends on itself, stop here
                }
                w = ipdom(cur);
            }
        }
    }

    Ok(Pdg {
        nodes,
        data_edges,
        control_edges,
        instr_nodes,
    })
}
