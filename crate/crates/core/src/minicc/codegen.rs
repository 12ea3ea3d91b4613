//! Code generation. An accumulator scheme: every expression leaves its
//! value in eax, with edx/ecx as pattern-mandated scratch registers, ebx as
//! the dividend copy for magic division, and named slots `__s0, __s1, ...`
//! when a value must survive a nested evaluation.
//!
//! Shapes are kept stable on purpose; downstream components learn and
//! invert these exact patterns.
//!
//! Subexpressions are evaluated left to right, matching the source
//! interpreter; operand reorderings (commutative swaps, divisor-first for
//! literal dividends) are only applied when the moved-ahead operand is a
//! literal or side-effect free.

use super::{
    clean, fold_program, magic_s32, to_text, AsmProgram, Cc, CompilerOptions, Instruction,
    Operand, Reg,
};
use crate::lang::{BinaryOp, Condition, Expr, Fixity, Program, Relation, Statement, StepOp};
use std::ops::Range;

fn eax() -> Operand {
    Operand::Reg(Reg::Eax)
}

fn edx() -> Operand {
    Operand::Reg(Reg::Edx)
}

fn ecx() -> Operand {
    Operand::Reg(Reg::Ecx)
}

fn ebx() -> Operand {
    Operand::Reg(Reg::Ebx)
}

fn is_leaf(e: &Expr) -> bool {
    matches!(e, Expr::Var(_) | Expr::Num(_))
}

fn leaf_operand(e: &Expr) -> Operand {
    match e {
        Expr::Var(v) => Operand::Var(v.clone()),
        Expr::Num(n) => Operand::Imm(*n),
        _ => unreachable!("leaf_operand on non-leaf"),
    }
}

struct Emitter {
    out: Vec<Instruction>,
    optimize: bool,
    next_label: usize,
    next_spill: usize,
    /// Instruction range of every emitted source unit (assignment or
    /// condition), in emission order.
    units: Vec<Range<usize>>,
}

impl Emitter {
    fn new(optimize: bool) -> Self {
        Emitter {
            out: Vec::new(),
            optimize,
            next_label: 0,
            next_spill: 0,
            units: Vec::new(),
        }
    }

    fn record_unit<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = self.out.len();
        let r = f(self);
        self.units.push(start..self.out.len());
        r
    }

    fn push(&mut self, i: Instruction) {
        self.out.push(i);
    }

    fn fresh_label(&mut self) -> String {
        let l = format!(".L{}", self.next_label);
        self.next_label += 1;
        l
    }

    fn fresh_spill(&mut self) -> String {
        let s = format!("__s{}", self.next_spill);
        self.next_spill += 1;
        s
    }

    /// Saves eax into a fresh slot and returns the slot name.
    fn spill(&mut self) -> String {
        let slot = self.fresh_spill();
        self.push(Instruction::Movl {
            src: eax(),
            dst: Operand::var(&slot),
        });
        slot
    }

    fn mov(&mut self, src: Operand, dst: Operand) {
        self.push(Instruction::Movl { src, dst });
    }

    /// eax <- op(eax, src) for add/mul with a register or memory operand.
    fn alu_src(&mut self, op: BinaryOp, src: Operand) {
        match op {
            BinaryOp::Add => self.push(Instruction::Addl { src, dst: eax() }),
            BinaryOp::Mul => self.push(Instruction::Imull { src, dst: eax() }),
            _ => unreachable!("alu_src covers commutative ops"),
        }
    }

    /// eax <- op(eax, imm), shift-reducing power-of-two multiplies.
    fn alu_imm(&mut self, op: BinaryOp, imm: i32) {
        match op {
            BinaryOp::Add => self.push(Instruction::Addl {
                src: Operand::Imm(imm),
                dst: eax(),
            }),
            BinaryOp::Mul => {
                if self.optimize && imm > 0 && (imm as u32).is_power_of_two() {
                    let k = imm.trailing_zeros() as i32;
                    if k > 0 {
                        self.push(Instruction::Sall { count: k, dst: eax() });
                    }
                } else {
                    self.push(Instruction::ImullImm {
                        imm,
                        src: eax(),
                        dst: eax(),
                    });
                }
            }
            _ => unreachable!("alu_imm covers commutative ops"),
        }
    }

    /// Evaluates an expression into eax (committing any `++`/`--` effects).
    fn eval(&mut self, e: &Expr) {
        match e {
            Expr::Var(v) => self.mov(Operand::var(v), eax()),
            Expr::Num(n) => self.mov(Operand::Imm(*n), eax()),
            Expr::Step { op, fixity, var } => self.eval_step(*op, *fixity, var),
            Expr::Binary { op, lhs, rhs } => match op {
                BinaryOp::Add | BinaryOp::Mul => self.eval_commutative(*op, lhs, rhs),
                BinaryOp::Sub => self.eval_sub(lhs, rhs),
                BinaryOp::Div => self.eval_div_mod(lhs, rhs, false),
                BinaryOp::Mod => self.eval_div_mod(lhs, rhs, true),
            },
        }
    }

    fn eval_commutative(&mut self, op: BinaryOp, lhs: &Expr, rhs: &Expr) {
        match (lhs, rhs) {
            (Expr::Num(a), Expr::Num(b)) => {
                self.mov(Operand::Imm(*a), eax());
                self.alu_imm(op, *b);
            }
            (_, Expr::Num(b)) => {
                self.eval(lhs);
                self.alu_imm(op, *b);
            }
            (Expr::Num(a), _) => {
                self.eval(rhs);
                self.alu_imm(op, *a);
            }
            _ if is_leaf(lhs) && is_leaf(rhs) => {
                self.mov(leaf_operand(lhs), edx());
                self.mov(leaf_operand(rhs), eax());
                self.alu_src(op, edx());
            }
            _ if is_leaf(rhs) => {
                self.eval(lhs);
                self.alu_src(op, leaf_operand(rhs));
            }
            _ if is_leaf(lhs) && !rhs.has_side_effects() => {
                self.eval(rhs);
                self.alu_src(op, leaf_operand(lhs));
            }
            _ => {
                self.eval(lhs);
                let slot = self.spill();
                self.eval(rhs);
                self.alu_src(op, Operand::var(slot));
            }
        }
    }

    fn eval_sub(&mut self, lhs: &Expr, rhs: &Expr) {
        match rhs {
            Expr::Num(b) => {
                self.eval(lhs);
                self.push(Instruction::Subl {
                    src: Operand::Imm(*b),
                    dst: eax(),
                });
            }
            Expr::Var(v) => {
                self.eval(lhs);
                self.push(Instruction::Subl {
                    src: Operand::var(v),
                    dst: eax(),
                });
            }
            _ => {
                self.eval(lhs);
                let slot = self.spill();
                self.eval(rhs);
                self.mov(eax(), edx());
                self.mov(Operand::var(slot), eax());
                self.push(Instruction::Subl {
                    src: edx(),
                    dst: eax(),
                });
            }
        }
    }

    /// Evaluates into ecx, rewriting a retargetable final instruction
    /// in place instead of appending an extra move.
    fn eval_to_ecx(&mut self, e: &Expr) {
        self.eval(e);
        match self.out.last_mut() {
            Some(Instruction::Movl { dst, .. }) if *dst == eax() => *dst = ecx(),
            Some(Instruction::ImullImm { dst, .. }) if *dst == eax() => *dst = ecx(),
            _ => self.mov(eax(), ecx()),
        }
    }

    fn eval_div_mod(&mut self, lhs: &Expr, rhs: &Expr, want_rem: bool) {
        if !want_rem && self.optimize {
            if let Expr::Num(d) = rhs {
                self.eval(lhs);
                self.emit_const_div(*d);
                return;
            }
        }
        match (lhs, rhs) {
            (_, Expr::Num(d)) => {
                self.eval(lhs);
                self.mov(Operand::Imm(*d), ecx());
                self.push(Instruction::Idivl { src: ecx() });
            }
            (Expr::Num(a), _) => {
                self.eval_to_ecx(rhs);
                self.mov(Operand::Imm(*a), eax());
                self.push(Instruction::Idivl { src: ecx() });
            }
            (_, r) if is_leaf(r) => {
                self.eval(lhs);
                self.mov(leaf_operand(r), ecx());
                self.push(Instruction::Idivl { src: ecx() });
            }
            _ => {
                self.eval(lhs);
                let slot = self.spill();
                self.eval(rhs);
                self.mov(eax(), ecx());
                self.mov(Operand::var(slot), eax());
                self.push(Instruction::Idivl { src: ecx() });
            }
        }
        if want_rem {
            self.mov(edx(), eax());
        }
    }

    /// Divides eax by a constant without `idivl`: powers of two become the
    /// sign-corrected shift sequence, other divisors the magic-multiply
    /// sequence; negative divisors negate the positive-divisor result.
    fn emit_const_div(&mut self, d: i32) {
        match d {
            0 => {
                // Defined-zero semantics; the dividend was still evaluated
                // for its side effects.
                self.mov(Operand::Imm(0), eax());
                return;
            }
            1 => return,
            -1 => {
                self.push(Instruction::ImullImm {
                    imm: -1,
                    src: eax(),
                    dst: eax(),
                });
                return;
            }
            _ => {}
        }
        let ad = d.unsigned_abs();
        if ad.is_power_of_two() {
            let k = ad.trailing_zeros() as i32;
            self.mov(eax(), edx());
            self.push(Instruction::Sarl { count: 31, dst: edx() });
            self.push(Instruction::Shrl {
                count: 32 - k,
                dst: edx(),
            });
            self.push(Instruction::Addl { src: edx(), dst: eax() });
            self.push(Instruction::Sarl { count: k, dst: eax() });
        } else {
            let (m, s) = magic_s32(ad as i32);
            self.mov(eax(), ebx());
            self.mov(Operand::Imm(m), eax());
            self.push(Instruction::ImullWide { src: ebx() });
            if m < 0 {
                self.push(Instruction::Addl { src: ebx(), dst: edx() });
            }
            if s > 0 {
                self.push(Instruction::Sarl {
                    count: s as i32,
                    dst: edx(),
                });
            }
            self.mov(ebx(), eax());
            self.push(Instruction::Shrl { count: 31, dst: eax() });
            self.push(Instruction::Addl { src: edx(), dst: eax() });
        }
        if d < 0 {
            self.push(Instruction::ImullImm {
                imm: -1,
                src: eax(),
                dst: eax(),
            });
        }
    }

    fn eval_step(&mut self, op: StepOp, fixity: Fixity, var: &str) {
        let v = Operand::var(var);
        match fixity {
            Fixity::Postfix => {
                self.mov(v.clone(), eax());
                self.push(Instruction::Leal {
                    disp: match op {
                        StepOp::Inc => 1,
                        StepOp::Dec => -1,
                    },
                    base: Reg::Eax,
                    dst: edx(),
                });
                self.mov(edx(), v);
            }
            Fixity::Prefix => {
                self.mov(v.clone(), eax());
                let one = Operand::Imm(1);
                match op {
                    StepOp::Inc => self.push(Instruction::Addl { src: one, dst: eax() }),
                    StepOp::Dec => self.push(Instruction::Subl { src: one, dst: eax() }),
                }
                self.mov(eax(), v.clone());
                self.mov(v, eax());
            }
        }
    }

    /// Emits operand evaluation plus the compare; returns the relation R
    /// such that the condition holds iff `dst R src` for the emitted cmpl.
    fn emit_compare(&mut self, cond: &Condition) -> Relation {
        let flip = matches!(cond.lhs, Expr::Num(_)) && !matches!(cond.rhs, Expr::Num(_));
        let (lhs, rel, rhs): (&Expr, Relation, &Expr) = if flip {
            (&cond.rhs, cond.rel.flipped(), &cond.lhs)
        } else {
            (&cond.lhs, cond.rel, &cond.rhs)
        };
        match rhs {
            Expr::Num(c) => {
                self.eval(lhs);
                self.push(Instruction::Cmpl {
                    src: Operand::Imm(*c),
                    dst: eax(),
                });
            }
            r if is_leaf(r) => {
                if is_leaf(lhs) {
                    self.mov(leaf_operand(lhs), edx());
                    self.mov(leaf_operand(r), eax());
                    self.push(Instruction::Cmpl { src: eax(), dst: edx() });
                } else {
                    self.eval(lhs);
                    self.push(Instruction::Cmpl {
                        src: leaf_operand(r),
                        dst: eax(),
                    });
                }
            }
            _ => {
                self.eval(lhs);
                let slot = self.spill();
                self.eval(rhs);
                self.mov(Operand::var(slot), edx());
                self.push(Instruction::Cmpl { src: eax(), dst: edx() });
            }
        }
        rel
    }

    /// Conditional jump taken iff `dst REL src` holds for the compare just
    /// emitted. With optimization on, literal compares are strengthened:
    /// `>= c` becomes `> c-1` and `< c` becomes `<= c-1`.
    fn emit_jcc(&mut self, rel: Relation, target: String) {
        let mut rel = rel;
        if self.optimize {
            if let Some(Instruction::Cmpl {
                src: Operand::Imm(c),
                ..
            }) = self.out.last_mut()
            {
                match rel {
                    Relation::Ge if *c > i32::MIN => {
                        *c -= 1;
                        rel = Relation::Gt;
                    }
                    Relation::Lt if *c > i32::MIN => {
                        *c -= 1;
                        rel = Relation::Le;
                    }
                    _ => {}
                }
            }
        }
        self.push(Instruction::Jcc {
            cc: Cc::from_relation(rel),
            target,
        });
    }

    fn emit_statement(&mut self, s: &Statement) {
        match s {
            Statement::Assign { target, value } => self.record_unit(|em| {
                if let Expr::Num(n) = value {
                    em.mov(Operand::Imm(*n), Operand::var(target));
                } else {
                    em.eval(value);
                    em.mov(eax(), Operand::var(target));
                }
            }),
            Statement::Branch {
                cond,
                then_body,
                else_body,
            } => {
                let skip = self.fresh_label();
                self.record_unit(|em| {
                    let rel = em.emit_compare(cond);
                    em.emit_jcc(rel.negated(), skip.clone());
                });
                for st in then_body {
                    self.emit_statement(st);
                }
                match else_body {
                    None => self.push(Instruction::Label { name: skip }),
                    Some(e) => {
                        let end = self.fresh_label();
                        self.push(Instruction::Jmp {
                            target: end.clone(),
                        });
                        self.push(Instruction::Label { name: skip });
                        for st in e {
                            self.emit_statement(st);
                        }
                        self.push(Instruction::Label { name: end });
                    }
                }
            }
            Statement::Loop { cond, body } => {
                let body_label = self.fresh_label();
                let cond_label = self.fresh_label();
                self.push(Instruction::Jmp {
                    target: cond_label.clone(),
                });
                self.push(Instruction::Label { name: body_label.clone() });
                for st in body {
                    self.emit_statement(st);
                }
                self.push(Instruction::Label { name: cond_label });
                self.record_unit(|em| {
                    let rel = em.emit_compare(cond);
                    em.emit_jcc(rel, body_label);
                });
            }
        }
    }
}

fn emit_body(p: &Program, opts: CompilerOptions) -> (Vec<Instruction>, Vec<Range<usize>>) {
    let folded;
    let p = if opts.optimize {
        folded = fold_program(p);
        &folded
    } else {
        p
    };
    let mut em = Emitter::new(opts.optimize);
    for s in &p.statements {
        em.emit_statement(s);
    }
    let units = std::mem::take(&mut em.units);
    (em.out, units)
}

fn meta(tokens: &[&str]) -> Instruction {
    Instruction::Meta {
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
    }
}

/// Full compilation including boilerplate (stripped by `clean`).
pub fn compile(p: &Program, opts: CompilerOptions) -> AsmProgram {
    let (body, _) = emit_body(p, opts);
    let mut instructions = vec![meta(&[".text"]), meta(&[".globl", "main"]), meta(&["main", ":"])];
    instructions.extend(body);
    instructions.push(meta(&["ret"]));
    AsmProgram::new(instructions)
}

/// Compilation without boilerplate: what the pipeline works on.
pub fn compile_clean(p: &Program, opts: CompilerOptions) -> AsmProgram {
    clean(&compile(p, opts))
}

/// Boilerplate-free compilation plus the instruction range of every source
/// unit, in emission order. A unit is one assignment or one branch/loop
/// condition; control labels and unconditional jumps fall between units.
/// (Loop conditions are emitted after their body, so emission order is not
/// source order for loops.) Used for statement-level dependence projections.
pub fn compile_with_spans(p: &Program, opts: CompilerOptions) -> (AsmProgram, Vec<Range<usize>>) {
    let (body, units) = emit_body(p, opts);
    (AsmProgram::new(body), units)
}

/// Cleaned compilation as flat token text.
pub fn compile_text(p: &Program, opts: CompilerOptions) -> String {
    to_text(&compile_clean(p, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_text;

    fn low(src: &str) -> String {
        compile_text(&parse_text(src).expect("parses"), CompilerOptions::optimized())
    }

    fn low_unopt(src: &str) -> String {
        compile_text(&parse_text(src).expect("parses"), CompilerOptions::unoptimized())
    }

    #[test]
    fn single_store_compiles_to_single_mov() {
        assert_eq!(low("X0 = 5 ;"), "movl 5 , X0 ;");
        assert_eq!(low_unopt("X0 = 5 ;"), "movl 5 , X0 ;");
    }

    #[test]
    fn literal_plus_variable_loads_variable_first() {
        assert_eq!(
            low("X2 = 14 + X1 ;"),
            "movl X1 , eax ; addl 14 , eax ; movl eax , X2 ;"
        );
    }

    #[test]
    fn subtraction_and_multiplication_patterns() {
        assert_eq!(
            low("X2 = X1 - 14 ;"),
            "movl X1 , eax ; subl 14 , eax ; movl eax , X2 ;"
        );
        assert_eq!(
            low("X2 = X1 * 5 ;"),
            "movl X1 , eax ; imull 5 , eax , eax ; movl eax , X2 ;"
        );
    }

    #[test]
    fn division_patterns() {
        assert_eq!(
            low("X2 = 14 / X1 ;"),
            "movl X1 , ecx ; movl 14 , eax ; idivl ecx ; movl eax , X2 ;"
        );
        assert_eq!(
            low("X3 = X1 / X2 ;"),
            "movl X1 , eax ; movl X2 , ecx ; idivl ecx ; movl eax , X3 ;"
        );
        assert_eq!(
            low("X2 = 14 % X1 ;"),
            "movl X1 , ecx ; movl 14 , eax ; idivl ecx ; movl edx , eax ; movl eax , X2 ;"
        );
        assert_eq!(
            low("X3 = X1 % X2 ;"),
            "movl X1 , eax ; movl X2 , ecx ; idivl ecx ; movl edx , eax ; movl eax , X3 ;"
        );
    }

    #[test]
    fn power_of_two_multiply_becomes_shift() {
        assert_eq!(
            low("X2 = X1 * 8 ;"),
            "movl X1 , eax ; sall 3 , eax ; movl eax , X2 ;"
        );
        assert_eq!(
            low_unopt("X2 = X1 * 8 ;"),
            "movl X1 , eax ; imull 8 , eax , eax ; movl eax , X2 ;"
        );
    }

    #[test]
    fn step_patterns() {
        assert_eq!(
            low("X2 = X1 ++ ;"),
            "movl X1 , eax ; leal 1 ( eax ) , edx ; movl edx , X1 ; movl eax , X2 ;"
        );
        assert_eq!(
            low("X2 = X1 -- ;"),
            "movl X1 , eax ; leal -1 ( eax ) , edx ; movl edx , X1 ; movl eax , X2 ;"
        );
        assert_eq!(
            low("X2 = ++ X1 ;"),
            "movl X1 , eax ; addl 1 , eax ; movl eax , X1 ; movl X1 , eax ; movl eax , X2 ;"
        );
    }

    #[test]
    fn nested_expression_patterns() {
        assert_eq!(
            low("X2 = 9 + ( 5 * X1 ) ;"),
            "movl X1 , eax ; imull 5 , eax , eax ; addl 9 , eax ; movl eax , X2 ;"
        );
        assert_eq!(
            low("X2 = ( X1 + 7 ) * 4 ;"),
            "movl X1 , eax ; addl 7 , eax ; sall 2 , eax ; movl eax , X2 ;"
        );
        assert_eq!(
            low("X2 = 9 / ( X1 * 5 ) ;"),
            "movl X1 , eax ; imull 5 , eax , ecx ; movl 9 , eax ; idivl ecx ; movl eax , X2 ;"
        );
    }

    #[test]
    fn chained_constant_multiplies_fold_into_one_immediate() {
        assert_eq!(
            low("X0 = ( ( X1 * 5 ) * 7 ) * 9 ;"),
            "movl X1 , eax ; imull 315 , eax , eax ; movl eax , X0 ;"
        );
    }

    #[test]
    fn division_by_three_uses_published_magic_constant() {
        assert_eq!(
            low("X2 = X1 / 3 ;"),
            "movl X1 , eax ; movl eax , ebx ; movl 1431655766 , eax ; imull ebx ; \
             movl ebx , eax ; shrl 31 , eax ; addl edx , eax ; movl eax , X2 ;"
        );
    }

    #[test]
    fn division_by_power_of_two_uses_bias_sequence() {
        assert_eq!(
            low("X2 = X1 / 8 ;"),
            "movl X1 , eax ; movl eax , edx ; sarl 31 , edx ; shrl 29 , edx ; \
             addl edx , eax ; sarl 3 , eax ; movl eax , X2 ;"
        );
    }

    #[test]
    fn no_idivl_for_constant_divisors_when_optimizing() {
        for d in [3, 5, 6, 7, 9, 10, 12, 100] {
            let text = low(&format!("X2 = X1 / {d} ;"));
            assert!(!text.contains("idivl"), "d={d}: {text}");
        }
    }

    #[test]
    fn branch_lowering_matches_pattern() {
        assert_eq!(
            low("if ( X1 < 15 ) { X2 = 9 ; }"),
            "movl X1 , eax ; cmpl 14 , eax ; jg .L0 ; movl 9 , X2 ; .L0 : ;"
        );
        assert_eq!(
            low_unopt("if ( X1 < 15 ) { X2 = 9 ; }"),
            "movl X1 , eax ; cmpl 15 , eax ; jge .L0 ; movl 9 , X2 ; .L0 : ;"
        );
    }

    #[test]
    fn if_else_lowering_matches_pattern() {
        assert_eq!(
            low("if ( X1 <= X2 ) { X3 = 9 ; } else { X4 = 7 ; }"),
            "movl X1 , edx ; movl X2 , eax ; cmpl eax , edx ; jg .L0 ; \
             movl 9 , X3 ; jmp .L1 ; .L0 : ; movl 7 , X4 ; .L1 : ;"
        );
    }

    #[test]
    fn loop_lowering_matches_pattern() {
        assert_eq!(
            low("while ( X2 > 3 ) { X1 = 5 ; }"),
            "jmp .L1 ; .L0 : ; movl 5 , X1 ; .L1 : ; movl X2 , eax ; cmpl 3 , eax ; jg .L0 ;"
        );
        assert_eq!(
            low("while ( X3 <= 20 ) { X2 = 14 + X1 ; }"),
            "jmp .L1 ; .L0 : ; movl X1 , eax ; addl 14 , eax ; movl eax , X2 ; .L1 : ; \
             movl X3 , eax ; cmpl 20 , eax ; jle .L0 ;"
        );
    }

    #[test]
    fn condition_strengthening_examples() {
        // `>= 5` compares against 4 with jg (taken side), i.e. hypothesis `> 4`.
        assert_eq!(
            low("while ( X1 >= 5 ) { X1 = X1 - 1 ; }"),
            "jmp .L1 ; .L0 : ; movl X1 , eax ; subl 1 , eax ; movl eax , X1 ; .L1 : ; \
             movl X1 , eax ; cmpl 4 , eax ; jg .L0 ;"
        );
        // Constant-side conditions flip so the variable is in eax.
        assert_eq!(
            low("if ( 7 == X1 ) { X2 = 5 ; }"),
            "movl X1 , eax ; cmpl 7 , eax ; jne .L0 ; movl 5 , X2 ; .L0 : ;"
        );
    }

    #[test]
    fn boilerplate_wraps_body_and_clean_strips_it() {
        let p = parse_text("X0 = 5 ;").expect("parses");
        let full = compile(&p, CompilerOptions::optimized());
        assert_eq!(
            to_text(&full),
            ".text ; .globl main ; main : ; movl 5 , X0 ; ret ;"
        );
        assert_eq!(clean(&clean(&full)), clean(&full));
    }

    #[test]
    fn spans_cover_source_units_in_emission_order() {
        let p = parse_text("X0 = 5 ; while ( X0 > 1 ) { X0 = X0 - 1 ; } X2 = X0 ;").expect("parses");
        let (asm, spans) = compile_with_spans(&p, CompilerOptions::optimized());
        // Units: first assignment, loop body assignment, loop condition,
        // final assignment. The condition trails its body.
        assert_eq!(spans.len(), 4);
        for w in spans.windows(2) {
            assert!(w[0].end <= w[1].start, "units overlap: {spans:?}");
        }
        for s in &spans {
            assert!(!s.is_empty() && s.end <= asm.len());
        }
        // Condition unit compares and ends with the back jump.
        let cond = &spans[2];
        assert!(matches!(
            asm.instructions[cond.end - 1],
            Instruction::Jcc { .. }
        ));
        assert!(asm.instructions[cond.clone()]
            .iter()
            .any(|i| matches!(i, Instruction::Cmpl { .. })));
    }

    #[test]
    fn compile_is_deterministic() {
        let p = parse_text("X0 = X1 / 7 ; if ( X0 > 3 ) { X2 = X0 * 6 ; }").expect("parses");
        let a = compile(&p, CompilerOptions::optimized());
        let b = compile(&p, CompilerOptions::optimized());
        assert_eq!(a, b);
    }
}
