//! The source language: a small C subset of assignments, branches and loops.
//!
//! Programs are lists of statements. Expressions cover variables, integer
//! literals, the five arithmetic operators and pre/post increment/decrement.
//! Conditions compare two expressions with one of six relations.

mod parser;
mod printer;
mod sampler;

pub use parser::{parse_text, parse_tokens, ParseError};
pub use printer::emit_tokens;
pub use sampler::{sample_program, Sampler};

use serde::{Deserialize, Serialize};

/// Arithmetic binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Mod,
    ];

    pub fn token(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
        }
    }

    pub fn from_token(t: &str) -> Option<Self> {
        Some(match t {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Mod,
            _ => return None,
        })
    }
}

/// Increment or decrement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepOp {
    Inc,
    Dec,
}

impl StepOp {
    pub fn token(self) -> &'static str {
        match self {
            StepOp::Inc => "++",
            StepOp::Dec => "--",
        }
    }
}

/// Whether a step operator is applied before or after the read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fixity {
    Prefix,
    Postfix,
}

/// Comparison relations usable in conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Gt,
        Relation::Ge,
        Relation::Lt,
        Relation::Le,
        Relation::Eq,
        Relation::Ne,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Relation::Gt => ">",
            Relation::Ge => ">=",
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "==",
            Relation::Ne => "!=",
        }
    }

    pub fn from_token(t: &str) -> Option<Self> {
        Some(match t {
            ">" => Relation::Gt,
            ">=" => Relation::Ge,
            "<" => Relation::Lt,
            "<=" => Relation::Le,
            "==" => Relation::Eq,
            "!=" => Relation::Ne,
            _ => return None,
        })
    }

    /// Relation with swapped operands (`a R b` iff `b R' a`).
    pub fn flipped(self) -> Self {
        match self {
            Relation::Gt => Relation::Lt,
            Relation::Ge => Relation::Le,
            Relation::Lt => Relation::Gt,
            Relation::Le => Relation::Ge,
            Relation::Eq => Relation::Eq,
            Relation::Ne => Relation::Ne,
        }
    }

    /// Logical negation of the relation.
    pub fn negated(self) -> Self {
        match self {
            Relation::Gt => Relation::Le,
            Relation::Ge => Relation::Lt,
            Relation::Lt => Relation::Ge,
            Relation::Le => Relation::Gt,
            Relation::Eq => Relation::Ne,
            Relation::Ne => Relation::Eq,
        }
    }

    pub fn holds(self, lhs: i32, rhs: i32) -> bool {
        match self {
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ne => lhs != rhs,
        }
    }
}

/// Expressions. Generated literals stay within `[1, K]`; parsed or
/// transformed programs may carry any `i32`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Var(String),
    Num(i32),
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Step {
        op: StepOp,
        fixity: Fixity,
        var: String,
    },
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn num(v: i32) -> Self {
        Expr::Num(v)
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// True when evaluation can write to a variable (contains `++`/`--`).
    pub fn has_side_effects(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Num(_) => false,
            Expr::Binary { lhs, rhs, .. } => lhs.has_side_effects() || rhs.has_side_effects(),
            Expr::Step { .. } => true,
        }
    }
}

/// A comparison between two expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub lhs: Expr,
    pub rel: Relation,
    pub rhs: Expr,
}

/// Statements: assignment, branch (optional else), loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statement {
    Assign {
        target: String,
        value: Expr,
    },
    Branch {
        cond: Condition,
        then_body: Vec<Statement>,
        else_body: Option<Vec<Statement>>,
    },
    Loop {
        cond: Condition,
        body: Vec<Statement>,
    },
}

/// A program is a non-empty statement list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Program {
    pub statements: Vec<Statement>,
}

impl Program {
    pub fn new(statements: Vec<Statement>) -> Self {
        Program { statements }
    }

    /// Collects every variable name in first-occurrence order (reads and writes).
    pub fn variables(&self) -> Vec<String> {
        fn walk_expr(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Var(v) => push_unique(out, v),
                Expr::Num(_) => {}
                Expr::Binary { lhs, rhs, .. } => {
                    walk_expr(lhs, out);
                    walk_expr(rhs, out);
                }
                Expr::Step { var, .. } => push_unique(out, var),
            }
        }
        fn walk_stmt(s: &Statement, out: &mut Vec<String>) {
            match s {
                Statement::Assign { target, value } => {
                    walk_expr(value, out);
                    push_unique(out, target);
                }
                Statement::Branch {
                    cond,
                    then_body,
                    else_body,
                } => {
                    walk_expr(&cond.lhs, out);
                    walk_expr(&cond.rhs, out);
                    for s in then_body {
                        walk_stmt(s, out);
                    }
                    if let Some(e) = else_body {
                        for s in e {
                            walk_stmt(s, out);
                        }
                    }
                }
                Statement::Loop { cond, body } => {
                    walk_expr(&cond.lhs, out);
                    walk_expr(&cond.rhs, out);
                    for s in body {
                        walk_stmt(s, out);
                    }
                }
            }
        }
        fn push_unique(out: &mut Vec<String>, v: &str) {
            if !out.iter().any(|x| x == v) {
                out.push(v.to_string());
            }
        }
        let mut out = Vec::new();
        for s in &self.statements {
            walk_stmt(s, &mut out);
        }
        out
    }
}

impl std::fmt::Display for Program {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", emit_tokens(self).join(" "))
    }
}

/// Knobs for random program generation. `level` follows the hardness ladder:
/// 1 number assignments, 2 variable assignments, 3 step operators,
/// 4 binary expressions (no step operators), 5 both, 6 branches,
/// 7 loops, 8 nested control flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub level: u8,
    pub max_statements: usize,
    pub max_expr_depth: usize,
    /// Variable pool size; names are X0..X{n-1}.
    pub num_variables: usize,
    /// Literals are drawn from [1, number_range_max].
    pub number_range_max: i32,
    pub seed: u64,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            level: 2,
            max_statements: 5,
            max_expr_depth: 3,
            num_variables: 15,
            number_range_max: 100,
            seed: 0,
        }
    }
}

impl GrammarConfig {
    pub fn with_level(level: u8) -> Self {
        GrammarConfig {
            level,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests;
