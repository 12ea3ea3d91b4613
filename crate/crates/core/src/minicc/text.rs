//! Text codec for assembly programs.
//!
//! The textual form is a flat token stream: instruction tokens with
//! comma-separated operands, each instruction terminated by `;`, labels
//! written `.L0 : ;`. Splitting on whitespace recovers the tokens, which is
//! what the translation pipeline consumes.

use super::{AsmProgram, Cc, Instruction, Operand, Reg};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("token {index}: {message}")]
pub struct AsmParseError {
    pub index: usize,
    pub message: String,
}

impl AsmParseError {
    fn new(index: usize, message: impl Into<String>) -> Self {
        AsmParseError {
            index,
            message: message.into(),
        }
    }
}

fn push_operand(op: &Operand, out: &mut Vec<String>) {
    match op {
        Operand::Imm(i) => out.push(i.to_string()),
        Operand::Reg(r) => out.push(r.name().to_string()),
        Operand::Var(v) => out.push(v.clone()),
    }
}

fn push_pair(opcode: &str, src: &Operand, dst: &Operand, out: &mut Vec<String>) {
    out.push(opcode.to_string());
    push_operand(src, out);
    out.push(",".to_string());
    push_operand(dst, out);
}

pub fn instruction_tokens(i: &Instruction) -> Vec<String> {
    let mut t = Vec::new();
    match i {
        Instruction::Movl { src, dst } => push_pair("movl", src, dst, &mut t),
        Instruction::Addl { src, dst } => push_pair("addl", src, dst, &mut t),
        Instruction::Subl { src, dst } => push_pair("subl", src, dst, &mut t),
        Instruction::Imull { src, dst } => push_pair("imull", src, dst, &mut t),
        Instruction::ImullImm { imm, src, dst } => {
            t.push("imull".to_string());
            t.push(imm.to_string());
            t.push(",".to_string());
            push_operand(src, &mut t);
            t.push(",".to_string());
            push_operand(dst, &mut t);
        }
        Instruction::ImullWide { src } => {
            t.push("imull".to_string());
            push_operand(src, &mut t);
        }
        Instruction::Idivl { src } => {
            t.push("idivl".to_string());
            push_operand(src, &mut t);
        }
        Instruction::Sall { count, dst } => {
            t.push("sall".to_string());
            t.push(count.to_string());
            t.push(",".to_string());
            push_operand(dst, &mut t);
        }
        Instruction::Sarl { count, dst } => {
            t.push("sarl".to_string());
            t.push(count.to_string());
            t.push(",".to_string());
            push_operand(dst, &mut t);
        }
        Instruction::Shrl { count, dst } => {
            t.push("shrl".to_string());
            t.push(count.to_string());
            t.push(",".to_string());
            push_operand(dst, &mut t);
        }
        Instruction::Cmpl { src, dst } => push_pair("cmpl", src, dst, &mut t),
        Instruction::Leal { disp, base, dst } => {
            t.push("leal".to_string());
            t.push(disp.to_string());
            t.push("(".to_string());
            t.push(base.name().to_string());
            t.push(")".to_string());
            t.push(",".to_string());
            push_operand(dst, &mut t);
        }
        Instruction::Jmp { target } => {
            t.push("jmp".to_string());
            t.push(target.clone());
        }
        Instruction::Jcc { cc, target } => {
            t.push(cc.mnemonic().to_string());
            t.push(target.clone());
        }
        Instruction::Label { name } => {
            t.push(name.clone());
            t.push(":".to_string());
        }
        Instruction::Meta { tokens } => t.extend(tokens.iter().cloned()),
    }
    t
}

/// Flat token text, `;` after every instruction.
pub fn to_text(a: &AsmProgram) -> String {
    let mut tokens = Vec::new();
    for i in &a.instructions {
        tokens.extend(instruction_tokens(i));
        tokens.push(";".to_string());
    }
    tokens.join(" ")
}

fn is_imm(t: &str) -> bool {
    let d = t.strip_prefix('-').unwrap_or(t);
    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())
}

fn is_label(t: &str) -> bool {
    t.strip_prefix(".L")
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

fn is_var(t: &str) -> bool {
    Reg::from_name(t).is_none()
        && t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_operand(t: &str, index: usize) -> Result<Operand, AsmParseError> {
    if let Some(r) = Reg::from_name(t) {
        return Ok(Operand::Reg(r));
    }
    if is_imm(t) {
        return t
            .parse()
            .map(Operand::Imm)
            .map_err(|_| AsmParseError::new(index, format!("immediate out of range: `{t}`")));
    }
    if is_var(t) {
        return Ok(Operand::Var(t.to_string()));
    }
    Err(AsmParseError::new(index, format!("bad operand `{t}`")))
}

fn parse_imm(t: &str, index: usize) -> Result<i32, AsmParseError> {
    if !is_imm(t) {
        return Err(AsmParseError::new(index, format!("expected immediate, found `{t}`")));
    }
    t.parse()
        .map_err(|_| AsmParseError::new(index, format!("immediate out of range: `{t}`")))
}

/// One instruction from its token group. `base` is the group's offset in
/// the whole stream, for error reporting.
fn parse_group(g: &[&str], base: usize) -> Result<Instruction, AsmParseError> {
    let tok = |i: usize| -> Result<&str, AsmParseError> {
        g.get(i)
            .copied()
            .ok_or_else(|| AsmParseError::new(base + g.len(), "truncated instruction".to_string()))
    };
    let expect = |i: usize, want: &str| -> Result<(), AsmParseError> {
        let t = tok(i)?;
        if t == want {
            Ok(())
        } else {
            Err(AsmParseError::new(
                base + i,
                format!("expected `{want}`, found `{t}`"),
            ))
        }
    };
    let exact_len = |n: usize| -> Result<(), AsmParseError> {
        if g.len() == n {
            Ok(())
        } else {
            Err(AsmParseError::new(
                base + n.min(g.len()),
                format!("expected {n} tokens, found {}", g.len()),
            ))
        }
    };

    let head = g[0];
    match head {
        "movl" | "addl" | "subl" | "cmpl" => {
            exact_len(4)?;
            expect(2, ",")?;
            let src = parse_operand(tok(1)?, base + 1)?;
            let dst = parse_operand(tok(3)?, base + 3)?;
            Ok(match head {
                "movl" => Instruction::Movl { src, dst },
                "addl" => Instruction::Addl { src, dst },
                "subl" => Instruction::Subl { src, dst },
                _ => Instruction::Cmpl { src, dst },
            })
        }
        "imull" => match g.len() {
            2 => Ok(Instruction::ImullWide {
                src: parse_operand(tok(1)?, base + 1)?,
            }),
            4 => {
                expect(2, ",")?;
                Ok(Instruction::Imull {
                    src: parse_operand(tok(1)?, base + 1)?,
                    dst: parse_operand(tok(3)?, base + 3)?,
                })
            }
            6 => {
                expect(2, ",")?;
                expect(4, ",")?;
                Ok(Instruction::ImullImm {
                    imm: parse_imm(tok(1)?, base + 1)?,
                    src: parse_operand(tok(3)?, base + 3)?,
                    dst: parse_operand(tok(5)?, base + 5)?,
                })
            }
            _ => Err(AsmParseError::new(base, "bad imull arity".to_string())),
        },
        "idivl" => {
            exact_len(2)?;
            Ok(Instruction::Idivl {
                src: parse_operand(tok(1)?, base + 1)?,
            })
        }
        "sall" | "sarl" | "shrl" => {
            exact_len(4)?;
            expect(2, ",")?;
            let count = parse_imm(tok(1)?, base + 1)?;
            let dst = parse_operand(tok(3)?, base + 3)?;
            Ok(match head {
                "sall" => Instruction::Sall { count, dst },
                "sarl" => Instruction::Sarl { count, dst },
                _ => Instruction::Shrl { count, dst },
            })
        }
        "leal" => {
            exact_len(7)?;
            expect(2, "(")?;
            expect(4, ")")?;
            expect(5, ",")?;
            let disp = parse_imm(tok(1)?, base + 1)?;
            let base_reg = Reg::from_name(tok(3)?)
                .ok_or_else(|| AsmParseError::new(base + 3, "expected register".to_string()))?;
            let dst = parse_operand(tok(6)?, base + 6)?;
            Ok(Instruction::Leal {
                disp,
                base: base_reg,
                dst,
            })
        }
        "jmp" => {
            exact_len(2)?;
            let t = tok(1)?;
            if !is_label(t) {
                return Err(AsmParseError::new(base + 1, format!("bad jump target `{t}`")));
            }
            Ok(Instruction::Jmp {
                target: t.to_string(),
            })
        }
        _ if Cc::from_mnemonic(head).is_some() => {
            exact_len(2)?;
            let t = tok(1)?;
            if !is_label(t) {
                return Err(AsmParseError::new(base + 1, format!("bad jump target `{t}`")));
            }
            Ok(Instruction::Jcc {
                cc: Cc::from_mnemonic(head).expect("checked"),
                target: t.to_string(),
            })
        }
        _ if is_label(head) => {
            exact_len(2)?;
            expect(1, ":")?;
            Ok(Instruction::Label {
                name: head.to_string(),
            })
        }
        ".text" | "ret" => {
            exact_len(1)?;
            Ok(Instruction::Meta {
                tokens: vec![head.to_string()],
            })
        }
        ".globl" => {
            exact_len(2)?;
            Ok(Instruction::Meta {
                tokens: vec![head.to_string(), tok(1)?.to_string()],
            })
        }
        _ if is_var(head) && g.len() == 2 && g[1] == ":" => Ok(Instruction::Meta {
            tokens: vec![head.to_string(), ":".to_string()],
        }),
        _ => Err(AsmParseError::new(base, format!("unknown instruction `{head}`"))),
    }
}

/// Parses the flat token text back into a program.
pub fn from_text(text: &str) -> Result<AsmProgram, AsmParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut instructions = Vec::new();
    let mut start = 0usize;
    for (i, t) in tokens.iter().enumerate() {
        if *t == ";" {
            if i == start {
                return Err(AsmParseError::new(i, "empty instruction".to_string()));
            }
            instructions.push(parse_group(&tokens[start..i], start)?);
            start = i + 1;
        }
    }
    if start != tokens.len() {
        return Err(AsmParseError::new(
            tokens.len(),
            "trailing tokens without `;`".to_string(),
        ));
    }
    Ok(AsmProgram::new(instructions))
}

#[cfg(test)]
mod tests {
    use super::super::{compile, CompilerOptions};
    use super::*;
    use crate::lang::{sample_program, GrammarConfig};

    #[test]
    fn round_trips_simple_instructions() {
        let text = "movl X1 , eax ; addl 14 , eax ; movl eax , X2 ;";
        let prog = from_text(text).expect("parses");
        assert_eq!(to_text(&prog), text);
    }

    #[test]
    fn round_trips_labels_and_jumps() {
        let text = "jmp .L1 ; .L0 : ; movl 5 , X1 ; .L1 : ; movl X2 , eax ; cmpl 3 , eax ; jg .L0 ;";
        let prog = from_text(text).expect("parses");
        assert_eq!(to_text(&prog), text);
    }

    #[test]
    fn round_trips_leal_and_wide_mul() {
        let text = "leal -1 ( eax ) , edx ; imull ebx ; imull 315 , eax , ecx ;";
        let prog = from_text(text).expect("parses");
        assert_eq!(to_text(&prog), text);
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_text("movl eax ;").is_err());
        assert!(from_text("bogus 1 , eax ;").is_err());
        assert!(from_text("movl 1 , eax").is_err());
        assert!(from_text("jg nowhere ;").is_err());
    }

    #[test]
    fn compiled_programs_round_trip() {
        for level in 1..=8u8 {
            for seed in 0..25u64 {
                let cfg = GrammarConfig {
                    level,
                    seed,
                    ..GrammarConfig::default()
                };
                let p = sample_program(&cfg);
                for optimize in [false, true] {
                    let asm = compile(&p, CompilerOptions { optimize });
                    let text = to_text(&asm);
                    let back = from_text(&text).expect("compiler output parses");
                    assert_eq!(back, asm, "level {level} seed {seed}");
                }
            }
        }
    }
}
