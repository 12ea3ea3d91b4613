//! Random program generation over the hardness ladder.
//!
//! Levels are cumulative: higher levels keep the constructs of lower ones
//! and add new ones. Each generated program is guaranteed to contain the
//! construct its level introduces, so per-level datasets actually exercise
//! that construct.
//!
//! Loops are generated with a termination skeleton: the condition compares
//! the loop variable against a literal bound, the last body statement moves
//! the variable toward the bound by a constant step, and no other statement
//! inside the loop (including nested bodies and `++`/`--` operands) may
//! write the loop variable. Execution under the reference evaluator then
//! terminates for any bounded input assignment, which keeps fuel-outs in
//! differential testing to roundoff noise.

use super::{
    BinaryOp, Condition, Expr, Fixity, GrammarConfig, Program, Relation, Statement, StepOp,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Streaming generator: one `Sampler` yields a deterministic program
/// sequence for a given config (seed included).
pub struct Sampler {
    cfg: GrammarConfig,
    rng: ChaCha8Rng,
    /// Variable indices already used in the current program (reuse bias).
    used: Vec<usize>,
}

impl Sampler {
    pub fn new(cfg: GrammarConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Sampler {
            cfg,
            rng,
            used: Vec::new(),
        }
    }

    pub fn config(&self) -> &GrammarConfig {
        &self.cfg
    }

    pub fn next_program(&mut self) -> Program {
        self.used.clear();
        let level = self.cfg.level.clamp(1, 8);
        let n = self.rng.gen_range(1..=self.cfg.max_statements.max(1));
        let mut statements = Vec::new();
        match level {
            1..=5 => {
                for i in 0..n {
                    // The first assignment always shows the level's construct.
                    statements.push(self.gen_assign(level, i == 0, &[]));
                }
            }
            // Levels 6..8 fill a statement budget of n. Loop generation may
            // occupy two slots (init + loop), so the level's marquee construct
            // is forced once while enough budget remains for it.
            6 => {
                let mut seen = false;
                while statements.len() < n {
                    let room = n - statements.len();
                    if (!seen && room == 1) || self.rng.gen_bool(0.4) {
                        statements.push(self.gen_branch(5, false, &[]));
                        seen = true;
                    } else {
                        statements.push(self.gen_assign(5, false, &[]));
                    }
                }
            }
            7 => {
                let mut seen = false;
                while statements.len() < n {
                    let room = n - statements.len();
                    if (!seen && room <= 2) || self.rng.gen_bool(0.25) {
                        statements.extend(self.gen_loop(false, &[], room >= 2));
                        seen = true;
                    } else if self.rng.gen_bool(0.25) {
                        statements.push(self.gen_branch(5, false, &[]));
                    } else {
                        statements.push(self.gen_assign(5, false, &[]));
                    }
                }
            }
            _ => {
                let mut seen = false;
                while statements.len() < n {
                    let room = n - statements.len();
                    if !seen && (room <= 2 || self.rng.gen_bool(0.35)) {
                        statements.extend(self.gen_nested(&[], room >= 2));
                        seen = true;
                    } else if self.rng.gen_bool(0.2) {
                        statements.extend(self.gen_loop(false, &[], room >= 2));
                    } else if self.rng.gen_bool(0.3) {
                        statements.push(self.gen_branch(5, false, &[]));
                    } else {
                        statements.push(self.gen_assign(5, false, &[]));
                    }
                }
            }
        }
        Program::new(statements)
    }

    fn var_name(i: usize) -> String {
        format!("X{i}")
    }

    fn num(&mut self) -> Expr {
        Expr::Num(self.rng.gen_range(1..=self.cfg.number_range_max.max(1)))
    }

    /// Picks a variable index, biased toward reusing one already in play.
    fn pick_var(&mut self, forbidden: &[usize]) -> usize {
        let reusable: Vec<usize> = self
            .used
            .iter()
            .copied()
            .filter(|i| !forbidden.contains(i))
            .collect();
        if !reusable.is_empty() && self.rng.gen_bool(0.6) {
            return *reusable.choose(&mut self.rng).expect("nonempty");
        }
        loop {
            let i = self.rng.gen_range(0..self.cfg.num_variables.max(1));
            if !forbidden.contains(&i) {
                if !self.used.contains(&i) {
                    self.used.push(i);
                }
                return i;
            }
        }
    }

    fn var(&mut self, forbidden: &[usize]) -> Expr {
        Expr::Var(Self::var_name(self.pick_var(forbidden)))
    }

    fn step(&mut self, forbidden: &[usize]) -> Expr {
        Expr::Step {
            op: if self.rng.gen_bool(0.5) {
                StepOp::Inc
            } else {
                StepOp::Dec
            },
            fixity: if self.rng.gen_bool(0.5) {
                Fixity::Prefix
            } else {
                Fixity::Postfix
            },
            var: Self::var_name(self.pick_var(forbidden)),
        }
    }

    fn leaf(&mut self, allow_step: bool, forbidden: &[usize]) -> Expr {
        let roll = self.rng.gen_range(0..100);
        if roll < 35 {
            self.num()
        } else if roll < 85 || !allow_step {
            self.var(forbidden)
        } else {
            self.step(forbidden)
        }
    }

    fn subtree(&mut self, depth: usize, allow_step: bool, forbidden: &[usize]) -> Expr {
        if depth == 0 || !self.rng.gen_bool(0.45) {
            return self.leaf(allow_step, forbidden);
        }
        let op = *BinaryOp::ALL.choose(&mut self.rng).expect("nonempty");
        let lhs = self.subtree(depth - 1, allow_step, forbidden);
        let rhs = self.subtree(depth - 1, allow_step, forbidden);
        Expr::binary(op, lhs, rhs)
    }

    /// Expression with a binary operator at the root.
    fn tree(&mut self, allow_step: bool, forbidden: &[usize]) -> Expr {
        let depth = self.cfg.max_expr_depth.max(1);
        let op = *BinaryOp::ALL.choose(&mut self.rng).expect("nonempty");
        let lhs = self.subtree(depth - 1, allow_step, forbidden);
        let rhs = self.subtree(depth - 1, allow_step, forbidden);
        Expr::binary(op, lhs, rhs)
    }

    fn gen_assign(&mut self, expr_level: u8, force_construct: bool, forbidden: &[usize]) -> Statement {
        let value = match expr_level {
            1 => self.num(),
            2 => {
                if force_construct || self.rng.gen_bool(0.6) {
                    self.var(forbidden)
                } else {
                    self.num()
                }
            }
            3 => {
                if force_construct || self.rng.gen_bool(0.5) {
                    self.step(forbidden)
                } else if self.rng.gen_bool(0.5) {
                    self.var(forbidden)
                } else {
                    self.num()
                }
            }
            4 => {
                if force_construct || self.rng.gen_bool(0.75) {
                    self.tree(false, forbidden)
                } else {
                    self.leaf(false, forbidden)
                }
            }
            _ => {
                if force_construct || self.rng.gen_bool(0.75) {
                    self.tree(true, forbidden)
                } else {
                    self.leaf(true, forbidden)
                }
            }
        };
        let target = Self::var_name(self.pick_var(forbidden));
        Statement::Assign { target, value }
    }

    fn gen_condition(&mut self, forbidden: &[usize]) -> Condition {
        let lhs = self.var(forbidden);
        let rel = *Relation::ALL.choose(&mut self.rng).expect("nonempty");
        let rhs = if self.rng.gen_bool(0.7) {
            self.num()
        } else {
            self.var(forbidden)
        };
        Condition { lhs, rel, rhs }
    }

    fn gen_body(&mut self, expr_level: u8, forbidden: &[usize]) -> Vec<Statement> {
        let n = self.rng.gen_range(1..=2);
        (0..n)
            .map(|_| self.gen_assign(expr_level, false, forbidden))
            .collect()
    }

    fn gen_branch(&mut self, expr_level: u8, nest: bool, forbidden: &[usize]) -> Statement {
        let cond = self.gen_condition(forbidden);
        let mut then_body = self.gen_body(expr_level, forbidden);
        let mut else_body = if self.rng.gen_bool(0.5) {
            Some(self.gen_body(expr_level, forbidden))
        } else {
            None
        };
        if nest {
            let inner = if self.rng.gen_bool(0.5) {
                vec![self.gen_branch(expr_level, false, forbidden)]
            } else {
                self.gen_loop(false, forbidden, true)
            };
            let slot = match &mut else_body {
                Some(e) if self.rng.gen_bool(0.4) => e,
                _ => &mut then_body,
            };
            slot.extend(inner);
        }
        Statement::Branch {
            cond,
            then_body,
            else_body,
        }
    }

    /// Loop with the termination skeleton. Returns the loop statement,
    /// preceded by an initializing assignment half the time (when the
    /// caller's statement budget has room for one).
    fn gen_loop(&mut self, nest: bool, forbidden: &[usize], allow_init: bool) -> Vec<Statement> {
        let v = self.pick_var(forbidden);
        let inner_forbidden: Vec<usize> = forbidden.iter().copied().chain([v]).collect();
        let (rel, step_op) = match self.rng.gen_range(0..4) {
            0 => (Relation::Lt, BinaryOp::Add),
            1 => (Relation::Le, BinaryOp::Add),
            2 => (Relation::Gt, BinaryOp::Sub),
            _ => (Relation::Ge, BinaryOp::Sub),
        };
        let bound = self.rng.gen_range(1..=self.cfg.number_range_max.max(1));
        let cond = Condition {
            lhs: Expr::Var(Self::var_name(v)),
            rel,
            rhs: Expr::Num(bound),
        };
        let mut body = Vec::new();
        if nest {
            if self.rng.gen_bool(0.5) {
                body.push(self.gen_branch(5, false, &inner_forbidden));
            } else {
                body.extend(self.gen_loop(false, &inner_forbidden, true));
            }
        } else {
            let extra = self.rng.gen_range(0..=2);
            for _ in 0..extra {
                body.push(self.gen_assign(5, false, &inner_forbidden));
            }
        }
        let step = self.rng.gen_range(1..=3);
        body.push(Statement::Assign {
            target: Self::var_name(v),
            value: Expr::binary(
                step_op,
                Expr::Var(Self::var_name(v)),
                Expr::Num(step),
            ),
        });
        let mut out = Vec::new();
        if allow_init && self.rng.gen_bool(0.5) {
            let init = self.num();
            out.push(Statement::Assign {
                target: Self::var_name(v),
                value: init,
            });
        }
        out.push(Statement::Loop { cond, body });
        out
    }

    /// One control statement containing another (the level 8 construct).
    fn gen_nested(&mut self, forbidden: &[usize], allow_init: bool) -> Vec<Statement> {
        match self.rng.gen_range(0..4) {
            // branch in loop
            0 => self.gen_loop(true, forbidden, allow_init),
            // loop in loop
            1 => {
                let mut out = self.gen_loop(true, forbidden, allow_init);
                // gen_loop(nest) already alternates branch/loop; force a loop
                // child by regenerating when the body has no loop.
                for _ in 0..4 {
                    let has_inner_loop = match out.last() {
                        Some(Statement::Loop { body, .. }) => {
                            body.iter().any(|s| matches!(s, Statement::Loop { .. }))
                        }
                        _ => false,
                    };
                    if has_inner_loop {
                        break;
                    }
                    out = self.gen_loop(true, forbidden, allow_init);
                }
                out
            }
            // loop in branch
            2 => vec![self.gen_branch(5, true, forbidden)],
            // branch in branch
            _ => {
                let mut s = self.gen_branch(5, true, forbidden);
                // Force a branch child for variety parity with case 0.
                for _ in 0..4 {
                    let has_inner_branch = match &s {
                        Statement::Branch {
                            then_body,
                            else_body,
                            ..
                        } => then_body
                            .iter()
                            .chain(else_body.iter().flatten())
                            .any(|x| matches!(x, Statement::Branch { .. })),
                        _ => false,
                    };
                    if has_inner_branch {
                        break;
                    }
                    s = self.gen_branch(5, true, forbidden);
                }
                vec![s]
            }
        }
    }
}

/// Generates one program from a config (seed included in the config).
pub fn sample_program(cfg: &GrammarConfig) -> Program {
    Sampler::new(cfg.clone()).next_program()
}
