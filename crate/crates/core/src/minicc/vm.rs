//! Assembly interpreter: the semantic oracle for compiled code.
//!
//! 32-bit wrapping arithmetic throughout. Division follows the execution
//! semantics shared with the source interpreter: divisor zero yields
//! quotient 0 and remainder 0, `i32::MIN / -1` wraps. Shift counts are
//! masked to five bits. Compares record both operand values; conditional
//! jumps evaluate the relation on the recorded pair.

use super::{AsmProgram, Instruction, Operand, Reg, Store};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("fuel exhausted")]
    FuelExhausted,
    #[error("jump to undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("label `{0}` defined more than once")]
    DuplicateLabel(String),
    #[error("conditional jump with no preceding compare")]
    MissingFlags,
    #[error("write to immediate operand")]
    WriteToImmediate,
}

struct Machine {
    regs: [i32; 4],
    vars: Store,
    flags: Option<(i32, i32)>,
}

impl Machine {
    fn val(&self, op: &Operand) -> i32 {
        match op {
            Operand::Imm(i) => *i,
            Operand::Reg(r) => self.regs[*r as usize],
            Operand::Var(v) => *self.vars.get(v).unwrap_or(&0),
        }
    }

    fn write(&mut self, op: &Operand, v: i32) -> Result<(), VmError> {
        match op {
            Operand::Imm(_) => return Err(VmError::WriteToImmediate),
            Operand::Reg(r) => self.regs[*r as usize] = v,
            Operand::Var(name) => {
                self.vars.insert(name.clone(), v);
            }
        }
        Ok(())
    }
}

fn divide(n: i32, d: i32) -> (i32, i32) {
    if d == 0 {
        (0, 0)
    } else {
        (n.wrapping_div(d), n.wrapping_rem(d))
    }
}

/// Runs a program on an initial variable store and returns the final
/// store (spill slots included; callers project onto the variables they
/// care about). Variables absent from the store read as zero.
pub fn run_vm(a: &AsmProgram, store: &Store, fuel: u64) -> Result<Store, VmError> {
    let mut labels: HashMap<&str, usize> = HashMap::new();
    for (i, instr) in a.instructions.iter().enumerate() {
        if let Instruction::Label { name } = instr {
            if labels.insert(name.as_str(), i).is_some() {
                return Err(VmError::DuplicateLabel(name.clone()));
            }
        }
    }
    let resolve = |name: &str| -> Result<usize, VmError> {
        labels
            .get(name)
            .copied()
            .ok_or_else(|| VmError::UndefinedLabel(name.to_string()))
    };

    let mut m = Machine {
        regs: [0; 4],
        vars: store.clone(),
        flags: None,
    };
    let mut fuel = fuel;
    let mut pc = 0usize;
    while pc < a.instructions.len() {
        let instr = &a.instructions[pc];
        if matches!(instr, Instruction::Label { .. } | Instruction::Meta { .. }) {
            pc += 1;
            continue;
        }
        if fuel == 0 {
            return Err(VmError::FuelExhausted);
        }
        fuel -= 1;
        pc += 1;
        match instr {
            Instruction::Movl { src, dst } => {
                let v = m.val(src);
                m.write(dst, v)?;
            }
            Instruction::Addl { src, dst } => {
                let v = m.val(dst).wrapping_add(m.val(src));
                m.write(dst, v)?;
            }
            Instruction::Subl { src, dst } => {
                let v = m.val(dst).wrapping_sub(m.val(src));
                m.write(dst, v)?;
            }
            Instruction::Imull { src, dst } => {
                let v = m.val(dst).wrapping_mul(m.val(src));
                m.write(dst, v)?;
            }
            Instruction::ImullImm { imm, src, dst } => {
                let v = m.val(src).wrapping_mul(*imm);
                m.write(dst, v)?;
            }
            Instruction::ImullWide { src } => {
                let wide = (m.regs[Reg::Eax as usize] as i64).wrapping_mul(m.val(src) as i64);
                m.regs[Reg::Edx as usize] = (wide >> 32) as i32;
                m.regs[Reg::Eax as usize] = wide as i32;
            }
            Instruction::Idivl { src } => {
                let (q, r) = divide(m.regs[Reg::Eax as usize], m.val(src));
                m.regs[Reg::Eax as usize] = q;
                m.regs[Reg::Edx as usize] = r;
            }
            Instruction::Sall { count, dst } => {
                let v = m.val(dst).wrapping_shl(*count as u32 & 31);
                m.write(dst, v)?;
            }
            Instruction::Sarl { count, dst } => {
                let v = m.val(dst) >> (*count as u32 & 31);
                m.write(dst, v)?;
            }
            Instruction::Shrl { count, dst } => {
                let v = ((m.val(dst) as u32) >> (*count as u32 & 31)) as i32;
                m.write(dst, v)?;
            }
            Instruction::Cmpl { src, dst } => {
                m.flags = Some((m.val(dst), m.val(src)));
            }
            Instruction::Leal { disp, base, dst } => {
                let v = m.regs[*base as usize].wrapping_add(*disp);
                m.write(dst, v)?;
            }
            Instruction::Jmp { target } => {
                pc = resolve(target)?;
            }
            Instruction::Jcc { cc, target } => {
                let (d, s) = m.flags.ok_or(VmError::MissingFlags)?;
                if cc.holds(d, s) {
                    pc = resolve(target)?;
                }
            }
            Instruction::Label { .. } | Instruction::Meta { .. } => unreachable!(),
        }
    }
    Ok(m.vars)
}

#[cfg(test)]
mod tests {
    use super::super::{compile, from_text, CompilerOptions};
    use super::*;
    use crate::lang::parse_text;

    fn store(pairs: &[(&str, i32)]) -> Store {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn executes_single_mov() {
        let a = from_text("movl 5 , X0 ;").expect("parses");
        let out = run_vm(&a, &Store::new(), 100).expect("runs");
        assert_eq!(out.get("X0"), Some(&5));
    }

    #[test]
    fn optimized_division_by_three() {
        let p = parse_text("X2 = X1 / 3 ;").expect("parses");
        let a = compile(&p, CompilerOptions::optimized());
        let out = run_vm(&a, &store(&[("X1", 9)]), 1000).expect("runs");
        assert_eq!(out.get("X2"), Some(&3));
        assert_eq!(out.get("X1"), Some(&9));
    }

    #[test]
    fn constant_divisor_sequences_match_hardware_semantics() {
        let probes: Vec<i32> = {
            let mut v = vec![i32::MIN, i32::MIN + 1, -1000, -129, -1, 0, 1, 100, i32::MAX];
            v.extend(-40..40);
            v
        };
        for d in [-17, -8, -3, -2, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 16, 31, 33, 100] {
            let p = parse_text(&format!("X2 = X1 / {d} ;")).expect("parses");
            for opts in [CompilerOptions::optimized(), CompilerOptions::unoptimized()] {
                let a = compile(&p, opts);
                for &x in &probes {
                    let out = run_vm(&a, &store(&[("X1", x)]), 1000).expect("runs");
                    let expected = if d == 0 { 0 } else { x.wrapping_div(d) };
                    assert_eq!(out.get("X2"), Some(&expected), "x={x} d={d} opts={opts:?}");
                }
            }
        }
    }

    #[test]
    fn division_by_zero_yields_zero_pair() {
        let a = from_text("movl 7 , eax ; movl 0 , ecx ; idivl ecx ; movl eax , X0 ; movl edx , X1 ;")
            .expect("parses");
        let out = run_vm(&a, &Store::new(), 100).expect("runs");
        assert_eq!(out.get("X0"), Some(&0));
        assert_eq!(out.get("X1"), Some(&0));
    }

    #[test]
    fn loop_terminates_and_fuel_guards_nontermination() {
        let p = parse_text("X0 = 0 ; while ( X0 < 10 ) { X0 = X0 + 1 ; }").expect("parses");
        let a = compile(&p, CompilerOptions::optimized());
        let out = run_vm(&a, &Store::new(), 10_000).expect("runs");
        assert_eq!(out.get("X0"), Some(&10));

        let spin = from_text(".L0 : ; movl 1 , eax ; jmp .L0 ;").expect("parses");
        assert_eq!(run_vm(&spin, &Store::new(), 1000), Err(VmError::FuelExhausted));
    }

    #[test]
    fn undefined_and_duplicate_labels_are_rejected() {
        let undef = from_text("jmp .L9 ;").expect("parses");
        assert_eq!(
            run_vm(&undef, &Store::new(), 10),
            Err(VmError::UndefinedLabel(".L9".to_string()))
        );
        let dup = from_text(".L0 : ; .L0 : ;").expect("parses");
        assert_eq!(
            run_vm(&dup, &Store::new(), 10),
            Err(VmError::DuplicateLabel(".L0".to_string()))
        );
    }
}
