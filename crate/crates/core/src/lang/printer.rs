//! Token emission for source programs.
//!
//! Every token is emitted separately so the output can be consumed by the
//! tokenizer-free pipeline (splitting on whitespace is enough). Nested
//! binary expressions are parenthesized; the top level of an assignment is
//! left bare, matching the shape the program generator produces.

use super::{Expr, Fixity, Program, Statement, StepOp};

fn step_tokens(op: StepOp, fixity: Fixity, var: &str, out: &mut Vec<String>) {
    let marker = match op {
        StepOp::Inc => "++",
        StepOp::Dec => "--",
    };
    match fixity {
        Fixity::Prefix => {
            out.push(marker.to_string());
            out.push(var.to_string());
        }
        Fixity::Postfix => {
            out.push(var.to_string());
            out.push(marker.to_string());
        }
    }
}

/// Emits an expression operand: binary subtrees get explicit parentheses.
fn atom(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Var(v) => out.push(v.clone()),
        Expr::Num(n) => out.push(n.to_string()),
        Expr::Step { op, fixity, var } => step_tokens(*op, *fixity, var, out),
        Expr::Binary { op, lhs, rhs } => {
            out.push("(".to_string());
            atom(lhs, out);
            out.push(op.token().to_string());
            atom(rhs, out);
            out.push(")".to_string());
        }
    }
}

/// Emits a top-level expression: the outermost binary operator is bare.
fn expr_top(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Binary { op, lhs, rhs } => {
            atom(lhs, out);
            out.push(op.token().to_string());
            atom(rhs, out);
        }
        other => atom(other, out),
    }
}

fn block(body: &[Statement], out: &mut Vec<String>) {
    out.push("{".to_string());
    for s in body {
        statement(s, out);
    }
    out.push("}".to_string());
}

fn statement(s: &Statement, out: &mut Vec<String>) {
    match s {
        Statement::Assign { target, value } => {
            out.push(target.clone());
            out.push("=".to_string());
            expr_top(value, out);
            out.push(";".to_string());
        }
        Statement::Branch {
            cond,
            then_body,
            else_body,
        } => {
            out.push("if".to_string());
            out.push("(".to_string());
            atom(&cond.lhs, out);
            out.push(cond.rel.token().to_string());
            atom(&cond.rhs, out);
            out.push(")".to_string());
            block(then_body, out);
            if let Some(e) = else_body {
                out.push("else".to_string());
                block(e, out);
            }
        }
        Statement::Loop { cond, body } => {
            out.push("while".to_string());
            out.push("(".to_string());
            atom(&cond.lhs, out);
            out.push(cond.rel.token().to_string());
            atom(&cond.rhs, out);
            out.push(")".to_string());
            block(body, out);
        }
    }
}

/// Serializes a program as a flat token vector.
pub fn emit_tokens(p: &Program) -> Vec<String> {
    let mut out = Vec::new();
    for s in &p.statements {
        statement(s, &mut out);
    }
    out
}
