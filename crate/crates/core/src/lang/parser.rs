//! Recursive-descent parser for the source language.
//!
//! Input is a pre-tokenized slice (the language is whitespace-tokenized, so
//! no lexer is needed). The parser accepts standard infix precedence, which
//! is a superset of what the printer emits; `parse_tokens(emit_tokens(p))`
//! round-trips every valid program.

use super::{BinaryOp, Condition, Expr, Fixity, Program, Relation, Statement, StepOp};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("token {index}: {message}")]
pub struct ParseError {
    pub index: usize,
    pub message: String,
}

impl ParseError {
    fn new(index: usize, message: impl Into<String>) -> Self {
        ParseError {
            index,
            message: message.into(),
        }
    }
}

struct Parser<'a> {
    tokens: &'a [String],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|s| s.as_str())
    }

    fn bump(&mut self) -> Option<&'a str> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ParseError::new(
                self.pos,
                format!("expected `{want}`, found `{t}`"),
            )),
            None => Err(ParseError::new(
                self.pos,
                format!("expected `{want}`, found end of input"),
            )),
        }
    }

    fn is_ident(t: &str) -> bool {
        !Self::is_keyword(t)
            && t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    fn is_keyword(t: &str) -> bool {
        matches!(t, "if" | "else" | "while")
    }

    fn is_number(t: &str) -> bool {
        let d = t.strip_prefix('-').unwrap_or(t);
        !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let index = self.pos;
        match self.peek() {
            Some("(") => {
                self.pos += 1;
                let e = self.expression()?;
                self.expect(")")?;
                Ok(self.maybe_postfix(e))
            }
            Some(step @ ("++" | "--")) => {
                self.pos += 1;
                let op = if step == "++" { StepOp::Inc } else { StepOp::Dec };
                match self.bump() {
                    Some(v) if Self::is_ident(v) => Ok(Expr::Step {
                        op,
                        fixity: Fixity::Prefix,
                        var: v.to_string(),
                    }),
                    _ => Err(ParseError::new(
                        index + 1,
                        format!("`{step}` must be followed by a variable"),
                    )),
                }
            }
            Some(t) if Self::is_number(t) => {
                self.pos += 1;
                let n: i32 = t
                    .parse()
                    .map_err(|_| ParseError::new(index, format!("number out of range: `{t}`")))?;
                Ok(Expr::Num(n))
            }
            Some(t) if Self::is_ident(t) => {
                self.pos += 1;
                Ok(self.maybe_postfix(Expr::Var(t.to_string())))
            }
            Some(t) => Err(ParseError::new(index, format!("expected expression, found `{t}`"))),
            None => Err(ParseError::new(index, "expected expression, found end of input")),
        }
    }

    fn maybe_postfix(&mut self, e: Expr) -> Expr {
        if let Expr::Var(v) = &e {
            if let Some(step @ ("++" | "--")) = self.peek() {
                let op = if step == "++" { StepOp::Inc } else { StepOp::Dec };
                self.pos += 1;
                return Expr::Step {
                    op,
                    fixity: Fixity::Postfix,
                    var: v.clone(),
                };
            }
        }
        e
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.primary()?;
        while let Some(op) = self.peek().and_then(|t| match t {
            "*" => Some(BinaryOp::Mul),
            "/" => Some(BinaryOp::Div),
            "%" => Some(BinaryOp::Mod),
            _ => None,
        }) {
            self.pos += 1;
            let rhs = self.primary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expression(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek().and_then(|t| match t {
            "+" => Some(BinaryOp::Add),
            "-" => Some(BinaryOp::Sub),
            _ => None,
        }) {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn condition(&mut self) -> Result<Condition, ParseError> {
        let lhs = self.expression()?;
        let index = self.pos;
        let rel = match self.bump().and_then(Relation::from_token) {
            Some(rel) => rel,
            None => return Err(ParseError::new(index, "expected a relational operator")),
        };
        let rhs = self.expression()?;
        Ok(Condition { lhs, rel, rhs })
    }

    fn block(&mut self) -> Result<Vec<Statement>, ParseError> {
        let open = self.pos;
        self.expect("{")?;
        let mut body = Vec::new();
        while self.peek() != Some("}") {
            if self.peek().is_none() {
                return Err(ParseError::new(self.pos, "unterminated block"));
            }
            body.push(self.statement()?);
        }
        self.pos += 1;
        if body.is_empty() {
            return Err(ParseError::new(open, "empty block"));
        }
        Ok(body)
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        match self.peek() {
            Some("if") => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.condition()?;
                self.expect(")")?;
                let then_body = self.block()?;
                let else_body = if self.peek() == Some("else") {
                    self.pos += 1;
                    Some(self.block()?)
                } else {
                    None
                };
                Ok(Statement::Branch {
                    cond,
                    then_body,
                    else_body,
                })
            }
            Some("while") => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.condition()?;
                self.expect(")")?;
                let body = self.block()?;
                Ok(Statement::Loop { cond, body })
            }
            Some(t) if Self::is_ident(t) => {
                let target = t.to_string();
                self.pos += 1;
                self.expect("=")?;
                let value = self.expression()?;
                self.expect(";")?;
                Ok(Statement::Assign { target, value })
            }
            Some(t) => Err(ParseError::new(self.pos, format!("expected statement, found `{t}`"))),
            None => Err(ParseError::new(self.pos, "expected statement, found end of input")),
        }
    }
}

/// Parses a whitespace-tokenized program.
pub fn parse_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Program, ParseError> {
    let owned: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let mut p = Parser {
        tokens: &owned,
        pos: 0,
    };
    let mut statements = Vec::new();
    while p.peek().is_some() {
        statements.push(p.statement()?);
    }
    if statements.is_empty() {
        return Err(ParseError::new(0, "empty program"));
    }
    Ok(Program::new(statements))
}

/// Parses program text by splitting on whitespace first.
pub fn parse_text(text: &str) -> Result<Program, ParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    parse_tokens(&tokens)
}
