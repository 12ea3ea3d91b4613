//! Reference optimizing compiler from the source subset to a small
//! x86-flavored assembly, plus the instruction semantics metadata and the
//! execution oracles (an assembly VM and a source-level interpreter) used
//! for differential testing.
//!
//! The compiler is deliberately predictable: an accumulator scheme around
//! eax with ecx/edx/ebx as scratch and named spill slots, so that emitted
//! instruction patterns are stable enough to learn from and to invert.

mod codegen;
mod fold;
mod interp;
mod magic;
mod text;
mod vm;

pub use codegen::{compile, compile_clean, compile_text, compile_with_spans};
pub use fold::{fold_expr, fold_program};
pub use interp::{interpret_source, InterpError};
pub use magic::magic_s32;
pub use text::{from_text, to_text, AsmParseError};
pub use vm::{run_vm, VmError};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Variable store shared by both oracles.
pub type Store = BTreeMap<String, i32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CompilerOptions {
    pub optimize: bool,
}

impl CompilerOptions {
    pub fn optimized() -> Self {
        CompilerOptions { optimize: true }
    }

    pub fn unoptimized() -> Self {
        CompilerOptions { optimize: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reg {
    Eax,
    Ebx,
    Ecx,
    Edx,
}

impl Reg {
    pub fn name(self) -> &'static str {
        match self {
            Reg::Eax => "eax",
            Reg::Ebx => "ebx",
            Reg::Ecx => "ecx",
            Reg::Edx => "edx",
        }
    }

    pub fn from_name(t: &str) -> Option<Self> {
        Some(match t {
            "eax" => Reg::Eax,
            "ebx" => Reg::Ebx,
            "ecx" => Reg::Ecx,
            "edx" => Reg::Edx,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Imm(i32),
    Reg(Reg),
    Var(String),
}

impl Operand {
    pub fn var(name: impl Into<String>) -> Self {
        Operand::Var(name.into())
    }
}

/// Condition codes, one per relational operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cc {
    G,
    Ge,
    L,
    Le,
    E,
    Ne,
}

impl Cc {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Cc::G => "jg",
            Cc::Ge => "jge",
            Cc::L => "jl",
            Cc::Le => "jle",
            Cc::E => "je",
            Cc::Ne => "jne",
        }
    }

    pub fn from_mnemonic(t: &str) -> Option<Self> {
        Some(match t {
            "jg" => Cc::G,
            "jge" => Cc::Ge,
            "jl" => Cc::L,
            "jle" => Cc::Le,
            "je" => Cc::E,
            "jne" => Cc::Ne,
            _ => return None,
        })
    }

    pub fn from_relation(rel: crate::lang::Relation) -> Self {
        use crate::lang::Relation;
        match rel {
            Relation::Gt => Cc::G,
            Relation::Ge => Cc::Ge,
            Relation::Lt => Cc::L,
            Relation::Le => Cc::Le,
            Relation::Eq => Cc::E,
            Relation::Ne => Cc::Ne,
        }
    }

    /// Taken iff `dst CC src` holds for the flag-setting compare.
    pub fn holds(self, dst: i32, src: i32) -> bool {
        match self {
            Cc::G => dst > src,
            Cc::Ge => dst >= src,
            Cc::L => dst < src,
            Cc::Le => dst <= src,
            Cc::E => dst == src,
            Cc::Ne => dst != src,
        }
    }
}

/// Instructions of the target language. `imull` appears in three forms
/// (two-operand, immediate three-operand, one-operand widening), mirroring
/// how the patterns use it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    Movl { src: Operand, dst: Operand },
    Addl { src: Operand, dst: Operand },
    Subl { src: Operand, dst: Operand },
    Imull { src: Operand, dst: Operand },
    ImullImm { imm: i32, src: Operand, dst: Operand },
    ImullWide { src: Operand },
    Idivl { src: Operand },
    Sall { count: i32, dst: Operand },
    Sarl { count: i32, dst: Operand },
    Shrl { count: i32, dst: Operand },
    Cmpl { src: Operand, dst: Operand },
    Leal { disp: i32, base: Reg, dst: Operand },
    Jmp { target: String },
    Jcc { cc: Cc, target: String },
    Label { name: String },
    /// Boilerplate (directives, prologue, epilogue); removed by `clean`.
    Meta { tokens: Vec<String> },
}

/// Dataflow location: a register, a named memory slot, or the flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    Reg(Reg),
    Var(String),
    Flags,
}

/// Effect summary of one instruction, the interface consumed by the
/// dependence-graph builder.
#[derive(Debug, Clone, Default)]
pub struct Semantics {
    pub defs: Vec<Location>,
    pub uses: Vec<Location>,
    pub is_branch: bool,
    pub target: Option<String>,
    pub falls_through: bool,
}

fn loc(op: &Operand) -> Option<Location> {
    match op {
        Operand::Imm(_) => None,
        Operand::Reg(r) => Some(Location::Reg(*r)),
        Operand::Var(v) => Some(Location::Var(v.clone())),
    }
}

impl Instruction {
    /// Opcode class used for node labeling: the three `imull` forms share
    /// one class, the three shifts and six jumps are distinct.
    pub fn opcode(&self) -> &'static str {
        match self {
            Instruction::Movl { .. } => "movl",
            Instruction::Addl { .. } => "addl",
            Instruction::Subl { .. } => "subl",
            Instruction::Imull { .. }
            | Instruction::ImullImm { .. }
            | Instruction::ImullWide { .. } => "imull",
            Instruction::Idivl { .. } => "idivl",
            Instruction::Sall { .. } => "sall",
            Instruction::Sarl { .. } => "sarl",
            Instruction::Shrl { .. } => "shrl",
            Instruction::Cmpl { .. } => "cmpl",
            Instruction::Leal { .. } => "leal",
            Instruction::Jmp { .. } => "jmp",
            Instruction::Jcc { cc, .. } => cc.mnemonic(),
            Instruction::Label { .. } => "label",
            Instruction::Meta { .. } => "meta",
        }
    }

    /// Immediate operands in operand order (the template-filling slots).
    pub fn immediates(&self) -> Vec<i32> {
        match self {
            Instruction::Movl { src, dst }
            | Instruction::Addl { src, dst }
            | Instruction::Subl { src, dst }
            | Instruction::Imull { src, dst }
            | Instruction::Cmpl { src, dst } => [src, dst]
                .iter()
                .filter_map(|o| match o {
                    Operand::Imm(i) => Some(*i),
                    _ => None,
                })
                .collect(),
            Instruction::ImullImm { imm, .. } => vec![*imm],
            Instruction::Sall { count, .. }
            | Instruction::Sarl { count, .. }
            | Instruction::Shrl { count, .. } => vec![*count],
            Instruction::Leal { disp, .. } => vec![*disp],
            _ => Vec::new(),
        }
    }

    pub fn semantics(&self) -> Semantics {
        let mut s = Semantics {
            falls_through: true,
            ..Semantics::default()
        };
        match self {
            Instruction::Movl { src, dst } => {
                s.uses.extend(loc(src));
                s.defs.extend(loc(dst));
            }
            Instruction::Addl { src, dst }
            | Instruction::Subl { src, dst }
            | Instruction::Imull { src, dst } => {
                s.uses.extend(loc(src));
                s.uses.extend(loc(dst));
                s.defs.extend(loc(dst));
            }
            Instruction::ImullImm { src, dst, .. } => {
                s.uses.extend(loc(src));
                s.defs.extend(loc(dst));
            }
            Instruction::ImullWide { src } | Instruction::Idivl { src } => {
                s.uses.push(Location::Reg(Reg::Eax));
                s.uses.extend(loc(src));
                s.defs.push(Location::Reg(Reg::Eax));
                s.defs.push(Location::Reg(Reg::Edx));
            }
            Instruction::Sall { dst, .. }
            | Instruction::Sarl { dst, .. }
            | Instruction::Shrl { dst, .. } => {
                s.uses.extend(loc(dst));
                s.defs.extend(loc(dst));
            }
            Instruction::Cmpl { src, dst } => {
                s.uses.extend(loc(src));
                s.uses.extend(loc(dst));
                s.defs.push(Location::Flags);
            }
            Instruction::Leal { base, dst, .. } => {
                s.uses.push(Location::Reg(*base));
                s.defs.extend(loc(dst));
            }
            Instruction::Jmp { target } => {
                s.is_branch = true;
                s.falls_through = false;
                s.target = Some(target.clone());
            }
            Instruction::Jcc { target, .. } => {
                s.uses.push(Location::Flags);
                s.is_branch = true;
                s.target = Some(target.clone());
            }
            Instruction::Label { .. } | Instruction::Meta { .. } => {}
        }
        s
    }
}

/// An assembly program: a flat instruction list; jumps name labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AsmProgram {
    pub instructions: Vec<Instruction>,
}

impl AsmProgram {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        AsmProgram { instructions }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

impl std::fmt::Display for AsmProgram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&to_text(self))
    }
}

impl std::str::FromStr for AsmProgram {
    type Err = AsmParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        from_text(s)
    }
}

/// Strips boilerplate (directives, prologue, epilogue), keeping labels and
/// computation. Idempotent.
pub fn clean(a: &AsmProgram) -> AsmProgram {
    AsmProgram {
        instructions: a
            .instructions
            .iter()
            .filter(|i| !matches!(i, Instruction::Meta { .. }))
            .cloned()
            .collect(),
    }
}
