//! Post-order layout for source programs: operands precede their operator,
//! which lets a stack parser rebuild the tree bottom-up.
//!
//! Layout, per statement:
//! - assignment: `<expr> <var> = ;`
//! - branch: `<cond> { <then> } if` or `<cond> { <then> } { <else> } ifelse`
//! - loop: `<cond> { <body> } while`
//! - condition: `<lhs> <rhs> <relation>`
//! - step operators carry their fixity in the marker (`++pre`, `--post`, ...).
//!
//! A `_` separator is inserted between adjacent numeric literals so that
//! digit fusing cannot merge two neighbouring numbers into one.

use super::{is_number, TokenSeq};
use crate::lang::{BinaryOp, Condition, Expr, Fixity, Program, Relation, Statement, StepOp};
use thiserror::Error;

/// Separator between two adjacent numeric literals.
pub const NUM_SEP: &str = "_";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PostorderError {
    #[error("token {index}: unknown token `{token}`")]
    UnknownToken { index: usize, token: String },
    #[error("token {index}: `{marker}` expects {expected}")]
    BadOperands {
        index: usize,
        marker: String,
        expected: &'static str,
    },
    #[error("token {index}: unmatched `}}`")]
    UnmatchedClose { index: usize },
    #[error("number out of range at token {index}")]
    NumberRange { index: usize },
    #[error("sequence leaves {0} unfinished items")]
    Unfinished(usize),
    #[error("empty program")]
    Empty,
}

fn step_marker(op: StepOp, fixity: Fixity) -> &'static str {
    match (op, fixity) {
        (StepOp::Inc, Fixity::Prefix) => "++pre",
        (StepOp::Inc, Fixity::Postfix) => "++post",
        (StepOp::Dec, Fixity::Prefix) => "--pre",
        (StepOp::Dec, Fixity::Postfix) => "--post",
    }
}

fn parse_step_marker(t: &str) -> Option<(StepOp, Fixity)> {
    Some(match t {
        "++pre" => (StepOp::Inc, Fixity::Prefix),
        "++post" => (StepOp::Inc, Fixity::Postfix),
        "--pre" => (StepOp::Dec, Fixity::Prefix),
        "--post" => (StepOp::Dec, Fixity::Postfix),
        _ => return None,
    })
}

fn push_expr(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Var(v) => out.push(v.clone()),
        Expr::Num(n) => out.push(n.to_string()),
        Expr::Binary { op, lhs, rhs } => {
            push_expr(lhs, out);
            push_expr(rhs, out);
            out.push(op.token().to_string());
        }
        Expr::Step { op, fixity, var } => {
            out.push(var.clone());
            out.push(step_marker(*op, *fixity).to_string());
        }
    }
}

fn push_cond(c: &Condition, out: &mut Vec<String>) {
    push_expr(&c.lhs, out);
    push_expr(&c.rhs, out);
    out.push(c.rel.token().to_string());
}

fn push_block(body: &[Statement], out: &mut Vec<String>) {
    out.push("{".to_string());
    for s in body {
        push_stmt(s, out);
    }
    out.push("}".to_string());
}

fn push_stmt(s: &Statement, out: &mut Vec<String>) {
    match s {
        Statement::Assign { target, value } => {
            push_expr(value, out);
            out.push(target.clone());
            out.push("=".to_string());
            out.push(";".to_string());
        }
        Statement::Branch {
            cond,
            then_body,
            else_body,
        } => {
            push_cond(cond, out);
            push_block(then_body, out);
            match else_body {
                Some(e) => {
                    push_block(e, out);
                    out.push("ifelse".to_string());
                }
                None => out.push("if".to_string()),
            }
        }
        Statement::Loop { cond, body } => {
            push_cond(cond, out);
            push_block(body, out);
            out.push("while".to_string());
        }
    }
}

/// Serializes a program into post-order tokens.
pub fn to_postorder(p: &Program) -> TokenSeq {
    let mut raw = Vec::new();
    for s in &p.statements {
        push_stmt(s, &mut raw);
    }
    // Keep adjacent numbers separable after digit splitting.
    let mut out: Vec<String> = Vec::with_capacity(raw.len());
    for t in raw {
        if let Some(prev) = out.last() {
            if is_number(prev) && is_number(&t) {
                out.push(NUM_SEP.to_string());
            }
        }
        out.push(t);
    }
    TokenSeq::new(out)
}

enum Item {
    E(Expr),
    C(Condition),
    S(Statement),
    Block(Vec<Statement>),
    Open,
}

/// Rebuilds a program from post-order tokens.
pub fn from_postorder(tokens: &TokenSeq) -> Result<Program, PostorderError> {
    let mut stack: Vec<Item> = Vec::new();

    fn pop_expr(stack: &mut Vec<Item>, index: usize, marker: &str) -> Result<Expr, PostorderError> {
        match stack.pop() {
            Some(Item::E(e)) => Ok(e),
            _ => Err(PostorderError::BadOperands {
                index,
                marker: marker.to_string(),
                expected: "an expression operand",
            }),
        }
    }

    fn pop_block(
        stack: &mut Vec<Item>,
        index: usize,
        marker: &str,
    ) -> Result<Vec<Statement>, PostorderError> {
        match stack.pop() {
            Some(Item::Block(b)) => Ok(b),
            _ => Err(PostorderError::BadOperands {
                index,
                marker: marker.to_string(),
                expected: "a block operand",
            }),
        }
    }

    fn pop_cond(
        stack: &mut Vec<Item>,
        index: usize,
        marker: &str,
    ) -> Result<Condition, PostorderError> {
        match stack.pop() {
            Some(Item::C(c)) => Ok(c),
            _ => Err(PostorderError::BadOperands {
                index,
                marker: marker.to_string(),
                expected: "a condition operand",
            }),
        }
    }

    for (index, t) in tokens.iter().enumerate() {
        let t = t.as_str();
        if t == NUM_SEP {
            continue;
        }
        if t == "{" {
            stack.push(Item::Open);
            continue;
        }
        if t == "}" {
            let mut body = Vec::new();
            loop {
                match stack.pop() {
                    Some(Item::S(s)) => body.push(s),
                    Some(Item::Open) => break,
                    Some(_) | None => return Err(PostorderError::UnmatchedClose { index }),
                }
            }
            body.reverse();
            stack.push(Item::Block(body));
            continue;
        }
        if let Some(op) = BinaryOp::from_token(t) {
            let rhs = pop_expr(&mut stack, index, t)?;
            let lhs = pop_expr(&mut stack, index, t)?;
            stack.push(Item::E(Expr::binary(op, lhs, rhs)));
            continue;
        }
        if let Some(rel) = Relation::from_token(t) {
            let rhs = pop_expr(&mut stack, index, t)?;
            let lhs = pop_expr(&mut stack, index, t)?;
            stack.push(Item::C(Condition { lhs, rel, rhs }));
            continue;
        }
        if let Some((op, fixity)) = parse_step_marker(t) {
            match pop_expr(&mut stack, index, t)? {
                Expr::Var(var) => stack.push(Item::E(Expr::Step { op, fixity, var })),
                _ => {
                    return Err(PostorderError::BadOperands {
                        index,
                        marker: t.to_string(),
                        expected: "a variable operand",
                    })
                }
            }
            continue;
        }
        match t {
            "=" => {
                let target = match pop_expr(&mut stack, index, t)? {
                    Expr::Var(v) => v,
                    _ => {
                        return Err(PostorderError::BadOperands {
                            index,
                            marker: "=".to_string(),
                            expected: "a variable target",
                        })
                    }
                };
                let value = pop_expr(&mut stack, index, t)?;
                stack.push(Item::S(Statement::Assign { target, value }));
            }
            ";" => match stack.last() {
                Some(Item::S(_)) => {}
                _ => {
                    return Err(PostorderError::BadOperands {
                        index,
                        marker: ";".to_string(),
                        expected: "a completed statement",
                    })
                }
            },
            "if" => {
                let then_body = pop_block(&mut stack, index, t)?;
                let cond = pop_cond(&mut stack, index, t)?;
                stack.push(Item::S(Statement::Branch {
                    cond,
                    then_body,
                    else_body: None,
                }));
            }
            "ifelse" => {
                let else_body = pop_block(&mut stack, index, t)?;
                let then_body = pop_block(&mut stack, index, t)?;
                let cond = pop_cond(&mut stack, index, t)?;
                stack.push(Item::S(Statement::Branch {
                    cond,
                    then_body,
                    else_body: Some(else_body),
                }));
            }
            "while" => {
                let body = pop_block(&mut stack, index, t)?;
                let cond = pop_cond(&mut stack, index, t)?;
                stack.push(Item::S(Statement::Loop { cond, body }));
            }
            _ if super::is_number(t) => {
                let n: i32 = t
                    .parse()
                    .map_err(|_| PostorderError::NumberRange { index })?;
                stack.push(Item::E(Expr::Num(n)));
            }
            _ if super::is_identifier(t) && !super::is_reserved(t) => {
                stack.push(Item::E(Expr::Var(t.to_string())));
            }
            _ => {
                return Err(PostorderError::UnknownToken {
                    index,
                    token: t.to_string(),
                })
            }
        }
    }

    let unfinished = stack.iter().filter(|i| !matches!(i, Item::S(_))).count();
    if unfinished > 0 {
        return Err(PostorderError::Unfinished(unfinished));
    }
    let statements: Vec<Statement> = stack
        .into_iter()
        .map(|item| match item {
            Item::S(s) => s,
            _ => unreachable!(),
        })
        .collect();
    if statements.is_empty() {
        return Err(PostorderError::Empty);
    }
    Ok(Program::new(statements))
}
