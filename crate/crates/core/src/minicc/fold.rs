//! Constant folding over the source AST, including re-association of
//! additive and multiplicative chains so that constants spread across a
//! chain combine (`(x * 5) * 7 * 9` becomes `x * 315`).
//!
//! Arithmetic follows the execution semantics exactly: 32-bit wrapping,
//! division or remainder by zero yields zero. Side-effecting subtrees
//! (`++`/`--`) are never dropped and never reordered relative to each
//! other; only constants move.

use crate::lang::{BinaryOp, Condition, Expr, Program, Statement};

/// Constant result of a binary operator under the execution semantics.
pub(crate) fn apply_binop(op: BinaryOp, a: i32, b: i32) -> i32 {
    match op {
        BinaryOp::Add => a.wrapping_add(b),
        BinaryOp::Sub => a.wrapping_sub(b),
        BinaryOp::Mul => a.wrapping_mul(b),
        BinaryOp::Div => {
            if b == 0 {
                0
            } else {
                a.wrapping_div(b)
            }
        }
        BinaryOp::Mod => {
            if b == 0 {
                0
            } else {
                a.wrapping_rem(b)
            }
        }
    }
}

fn collect_additive(e: &Expr, neg: bool, terms: &mut Vec<(bool, Expr)>, sum: &mut i32) {
    match e {
        Expr::Binary {
            op: BinaryOp::Add,
            lhs,
            rhs,
        } => {
            collect_additive(lhs, neg, terms, sum);
            collect_additive(rhs, neg, terms, sum);
        }
        Expr::Binary {
            op: BinaryOp::Sub,
            lhs,
            rhs,
        } => {
            collect_additive(lhs, neg, terms, sum);
            collect_additive(rhs, !neg, terms, sum);
        }
        other => match fold_expr(other) {
            Expr::Num(n) => {
                *sum = if neg {
                    sum.wrapping_sub(n)
                } else {
                    sum.wrapping_add(n)
                };
            }
            folded => terms.push((neg, folded)),
        },
    }
}

fn rebuild_additive(terms: Vec<(bool, Expr)>, sum: i32) -> Expr {
    let mut iter = terms.into_iter();
    let Some((first_neg, first)) = iter.next() else {
        return Expr::Num(sum);
    };
    let mut sum_used = false;
    let mut acc = if first_neg {
        sum_used = true;
        Expr::binary(BinaryOp::Sub, Expr::Num(sum), first)
    } else {
        first
    };
    for (neg, t) in iter {
        let op = if neg { BinaryOp::Sub } else { BinaryOp::Add };
        acc = Expr::binary(op, acc, t);
    }
    if !sum_used && sum != 0 {
        // Prefer `x - 1` over `x + -1`; the emitted patterns use subl.
        acc = if sum < 0 && sum != i32::MIN {
            Expr::binary(BinaryOp::Sub, acc, Expr::Num(-sum))
        } else {
            Expr::binary(BinaryOp::Add, acc, Expr::Num(sum))
        };
    }
    acc
}

fn collect_multiplicative(e: &Expr, terms: &mut Vec<Expr>, product: &mut i32) {
    match e {
        Expr::Binary {
            op: BinaryOp::Mul,
            lhs,
            rhs,
        } => {
            collect_multiplicative(lhs, terms, product);
            collect_multiplicative(rhs, terms, product);
        }
        other => match fold_expr(other) {
            Expr::Num(n) => *product = product.wrapping_mul(n),
            folded => terms.push(folded),
        },
    }
}

fn rebuild_multiplicative(terms: Vec<Expr>, product: i32) -> Expr {
    if product == 0 && terms.iter().all(|t| !t.has_side_effects()) {
        return Expr::Num(0);
    }
    let mut iter = terms.into_iter();
    let Some(first) = iter.next() else {
        return Expr::Num(product);
    };
    let mut acc = first;
    for t in iter {
        acc = Expr::binary(BinaryOp::Mul, acc, t);
    }
    if product != 1 {
        acc = Expr::binary(BinaryOp::Mul, acc, Expr::Num(product));
    }
    acc
}

pub fn fold_expr(e: &Expr) -> Expr {
    match e {
        Expr::Var(_) | Expr::Num(_) | Expr::Step { .. } => e.clone(),
        Expr::Binary {
            op: BinaryOp::Add | BinaryOp::Sub,
            ..
        } => {
            let mut terms = Vec::new();
            let mut sum = 0i32;
            collect_additive(e, false, &mut terms, &mut sum);
            rebuild_additive(terms, sum)
        }
        Expr::Binary {
            op: BinaryOp::Mul, ..
        } => {
            let mut terms = Vec::new();
            let mut product = 1i32;
            collect_multiplicative(e, &mut terms, &mut product);
            rebuild_multiplicative(terms, product)
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = fold_expr(lhs);
            let r = fold_expr(rhs);
            match (&l, &r) {
                (Expr::Num(a), Expr::Num(b)) => Expr::Num(apply_binop(*op, *a, *b)),
                _ => Expr::binary(*op, l, r),
            }
        }
    }
}

fn fold_condition(c: &Condition) -> Condition {
    Condition {
        lhs: fold_expr(&c.lhs),
        rel: c.rel,
        rhs: fold_expr(&c.rhs),
    }
}

fn fold_statement(s: &Statement) -> Statement {
    match s {
        Statement::Assign { target, value } => Statement::Assign {
            target: target.clone(),
            value: fold_expr(value),
        },
        Statement::Branch {
            cond,
            then_body,
            else_body,
        } => Statement::Branch {
            cond: fold_condition(cond),
            then_body: then_body.iter().map(fold_statement).collect(),
            else_body: else_body
                .as_ref()
                .map(|e| e.iter().map(fold_statement).collect()),
        },
        Statement::Loop { cond, body } => Statement::Loop {
            cond: fold_condition(cond),
            body: body.iter().map(fold_statement).collect(),
        },
    }
}

pub fn fold_program(p: &Program) -> Program {
    Program::new(p.statements.iter().map(fold_statement).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_text;

    fn folded(src: &str) -> String {
        fold_program(&parse_text(src).expect("parses")).to_string()
    }

    #[test]
    fn folds_constant_subtrees() {
        assert_eq!(folded("X0 = 3 + 4 ;"), "X0 = 7 ;");
        assert_eq!(folded("X0 = ( 2 * 3 ) + ( 10 / 2 ) ;"), "X0 = 11 ;");
    }

    #[test]
    fn reassociates_chains() {
        assert_eq!(folded("X0 = ( ( X1 * 5 ) * 7 ) * 9 ;"), "X0 = X1 * 315 ;");
        assert_eq!(folded("X0 = ( 3 + X1 ) + 4 ;"), "X0 = X1 + 7 ;");
        assert_eq!(folded("X0 = ( X1 + 5 ) - 5 ;"), "X0 = X1 ;");
        assert_eq!(folded("X0 = 5 - ( X1 - 2 ) ;"), "X0 = 7 - X1 ;");
        assert_eq!(folded("X0 = ( X1 - 3 ) + 2 ;"), "X0 = X1 - 1 ;");
    }

    #[test]
    fn zero_products_respect_side_effects() {
        assert_eq!(folded("X0 = X1 * 0 ;"), "X0 = 0 ;");
        assert_eq!(folded("X0 = ( X1 ++ ) * 0 ;"), "X0 = X1 ++ * 0 ;");
    }

    #[test]
    fn division_by_zero_constant_folds_to_zero() {
        assert_eq!(folded("X0 = 7 / 0 ;"), "X0 = 0 ;");
        assert_eq!(folded("X0 = 7 % 0 ;"), "X0 = 0 ;");
    }

    #[test]
    fn folds_condition_operands() {
        assert_eq!(
            folded("if ( X1 < ( 4 + 1 ) ) { X2 = 9 ; }"),
            "if ( X1 < 5 ) { X2 = 9 ; }"
        );
    }

    #[test]
    fn wrapping_matches_two_complement() {
        assert_eq!(
            folded(&format!("X0 = {} + 1 ;", i32::MAX)),
            format!("X0 = {} ;", i32::MIN)
        );
    }
}
