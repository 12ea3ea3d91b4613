//! Direct source-level interpreter.
//!
//! The reference semantics for generated programs, used to cross-check the
//! compiler end to end: running a program here must agree with compiling it
//! (at either optimization setting) and running the result on the assembly
//! interpreter. Shares the execution rules in `fold::apply_binop`: wrapping
//! 32-bit arithmetic, division and remainder by zero yield 0.

use super::fold::apply_binop;
use super::Store;
use crate::lang::{Condition, Expr, Fixity, Program, Statement, StepOp};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("fuel exhausted")]
    FuelExhausted,
}

struct Interp {
    vars: Store,
    fuel: u64,
}

impl Interp {
    fn charge(&mut self) -> Result<(), InterpError> {
        if self.fuel == 0 {
            return Err(InterpError::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn read(&self, name: &str) -> i32 {
        *self.vars.get(name).unwrap_or(&0)
    }

    /// Evaluates left to right; step side effects commit immediately.
    fn eval(&mut self, e: &Expr) -> i32 {
        match e {
            Expr::Num(n) => *n,
            Expr::Var(name) => self.read(name),
            Expr::Step { op, fixity, var } => {
                let old = self.read(var);
                let new = match op {
                    StepOp::Inc => old.wrapping_add(1),
                    StepOp::Dec => old.wrapping_sub(1),
                };
                self.vars.insert(var.clone(), new);
                match fixity {
                    Fixity::Prefix => new,
                    Fixity::Postfix => old,
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs);
                let r = self.eval(rhs);
                apply_binop(*op, l, r)
            }
        }
    }

    fn eval_condition(&mut self, c: &Condition) -> bool {
        let l = self.eval(&c.lhs);
        let r = self.eval(&c.rhs);
        c.rel.holds(l, r)
    }

    fn exec_block(&mut self, stmts: &[Statement]) -> Result<(), InterpError> {
        for s in stmts {
            self.exec(s)?;
        }
        Ok(())
    }

    fn exec(&mut self, s: &Statement) -> Result<(), InterpError> {
        self.charge()?;
        match s {
            Statement::Assign { target, value } => {
                let v = self.eval(value);
                self.vars.insert(target.clone(), v);
            }
            Statement::Branch { cond, then_body, else_body } => {
                if self.eval_condition(cond) {
                    self.exec_block(then_body)?;
                } else if let Some(body) = else_body {
                    self.exec_block(body)?;
                }
            }
            Statement::Loop { cond, body } => loop {
                self.charge()?;
                if !self.eval_condition(cond) {
                    break;
                }
                self.exec_block(body)?;
            },
        }
        Ok(())
    }
}

/// Runs a program on an initial store and returns the final store.
/// Variables absent from the store read as zero. Fuel is charged per
/// statement and per loop condition evaluation, so every run terminates.
pub fn interpret_source(p: &Program, store: &Store, fuel: u64) -> Result<Store, InterpError> {
    let mut interp = Interp {
        vars: store.clone(),
        fuel,
    };
    interp.exec_block(&p.statements)?;
    Ok(interp.vars)
}
