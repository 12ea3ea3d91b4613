use super::*;

fn sample(level: u8, seed: u64) -> Program {
    sample_program(&GrammarConfig {
        level,
        seed,
        ..GrammarConfig::default()
    })
}

fn for_each_expr(p: &Program, f: &mut impl FnMut(&Expr)) {
    fn expr(e: &Expr, f: &mut impl FnMut(&Expr)) {
        f(e);
        if let Expr::Binary { lhs, rhs, .. } = e {
            expr(lhs, f);
            expr(rhs, f);
        }
    }
    fn stmt(s: &Statement, f: &mut impl FnMut(&Expr)) {
        match s {
            Statement::Assign { value, .. } => expr(value, f),
            Statement::Branch {
                cond,
                then_body,
                else_body,
            } => {
                expr(&cond.lhs, f);
                expr(&cond.rhs, f);
                then_body.iter().for_each(|s| stmt(s, f));
                else_body.iter().flatten().for_each(|s| stmt(s, f));
            }
            Statement::Loop { cond, body } => {
                expr(&cond.lhs, f);
                expr(&cond.rhs, f);
                body.iter().for_each(|s| stmt(s, f));
            }
        }
    }
    p.statements.iter().for_each(|s| stmt(s, f));
}

fn for_each_statement(p: &Program, f: &mut impl FnMut(&Statement, usize)) {
    fn stmt(s: &Statement, depth: usize, f: &mut impl FnMut(&Statement, usize)) {
        f(s, depth);
        match s {
            Statement::Assign { .. } => {}
            Statement::Branch {
                then_body,
                else_body,
                ..
            } => {
                then_body.iter().for_each(|s| stmt(s, depth + 1, f));
                else_body
                    .iter()
                    .flatten()
                    .for_each(|s| stmt(s, depth + 1, f));
            }
            Statement::Loop { body, .. } => body.iter().for_each(|s| stmt(s, depth + 1, f)),
        }
    }
    p.statements.iter().for_each(|s| stmt(s, 0, f));
}

fn expr_depth(e: &Expr) -> usize {
    match e {
        Expr::Binary { lhs, rhs, .. } => 1 + expr_depth(lhs).max(expr_depth(rhs)),
        _ => 0,
    }
}

#[test]
fn round_trip_all_levels() {
    // 10_000 programs spread over the ladder.
    for level in 1..=8 {
        for seed in 0..1250u64 {
            let p = sample(level, seed);
            let tokens = emit_tokens(&p);
            let back = parse_tokens(&tokens)
                .unwrap_or_else(|e| panic!("level {level} seed {seed}: {e}\n{}", tokens.join(" ")));
            assert_eq!(back, p, "level {level} seed {seed}");
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    for level in 1..=8 {
        assert_eq!(sample(level, 41), sample(level, 41));
    }
}

#[test]
fn statement_budget_is_respected() {
    for level in 1..=8 {
        for seed in 0..400u64 {
            let p = sample(level, seed);
            assert!(!p.statements.is_empty());
            assert!(
                p.statements.len() <= 5,
                "level {level} seed {seed}: {} statements",
                p.statements.len()
            );
        }
    }
}

#[test]
fn level_one_assigns_numbers_only() {
    for seed in 0..200u64 {
        let p = sample(1, seed);
        for s in &p.statements {
            match s {
                Statement::Assign { value: Expr::Num(_), .. } => {}
                other => panic!("seed {seed}: unexpected statement {other:?}"),
            }
        }
    }
}

#[test]
fn marquee_constructs_appear() {
    for seed in 0..200u64 {
        let mut has_step = false;
        for_each_expr(&sample(3, seed), &mut |e| {
            has_step |= matches!(e, Expr::Step { .. });
        });
        assert!(has_step, "level 3 seed {seed}");

        let mut has_binary = false;
        let mut step_free = true;
        for_each_expr(&sample(4, seed), &mut |e| {
            has_binary |= matches!(e, Expr::Binary { .. });
            step_free &= !matches!(e, Expr::Step { .. });
        });
        assert!(has_binary && step_free, "level 4 seed {seed}");

        let mut has_branch = false;
        for_each_statement(&sample(6, seed), &mut |s, _| {
            has_branch |= matches!(s, Statement::Branch { .. });
        });
        assert!(has_branch, "level 6 seed {seed}");

        let mut has_loop = false;
        for_each_statement(&sample(7, seed), &mut |s, _| {
            has_loop |= matches!(s, Statement::Loop { .. });
        });
        assert!(has_loop, "level 7 seed {seed}");

        let mut has_nested_control = false;
        for_each_statement(&sample(8, seed), &mut |s, depth| {
            has_nested_control |= depth > 0 && !matches!(s, Statement::Assign { .. });
        });
        assert!(has_nested_control, "level 8 seed {seed}");
    }
}

#[test]
fn branches_nest_inside_loops_often_enough() {
    let mut hits = 0usize;
    for seed in 0..10_000u64 {
        let p = sample(8, seed);
        fn loop_holds_branch(s: &Statement) -> bool {
            match s {
                Statement::Loop { body, .. } => body.iter().any(|b| {
                    matches!(b, Statement::Branch { .. }) || loop_holds_branch(b)
                }),
                Statement::Branch {
                    then_body,
                    else_body,
                    ..
                } => then_body
                    .iter()
                    .chain(else_body.iter().flatten())
                    .any(loop_holds_branch),
                Statement::Assign { .. } => false,
            }
        }
        if p.statements.iter().any(loop_holds_branch) {
            hits += 1;
        }
    }
    // Well above the 1% floor the generator is tuned for.
    assert!(hits > 100, "branch-in-loop in only {hits} of 10000 draws");
}

#[test]
fn generated_literals_stay_in_range() {
    for level in 1..=8 {
        for seed in 0..100u64 {
            for_each_expr(&sample(level, seed), &mut |e| {
                if let Expr::Num(n) = e {
                    assert!((1..=100).contains(n), "literal {n} out of range");
                }
            });
        }
    }
}

#[test]
fn expression_depth_is_bounded() {
    for level in 1..=8 {
        for seed in 0..100u64 {
            for_each_expr(&sample(level, seed), &mut |e| {
                assert!(expr_depth(e) <= 3);
            });
        }
    }
}

#[test]
fn emits_expected_token_shapes() {
    let p = Program::new(vec![Statement::Assign {
        target: "X0".into(),
        value: Expr::binary(BinaryOp::Add, Expr::var("X1"), Expr::var("X2")),
    }]);
    assert_eq!(p.to_string(), "X0 = X1 + X2 ;");

    let p = parse_text("while ( X1 > 5 ) { X2 = 3 ; }").expect("parses");
    assert_eq!(p.to_string(), "while ( X1 > 5 ) { X2 = 3 ; }");

    // Nested binaries are parenthesized; the top level stays bare.
    let p = parse_text("X0 = X1 + X2 * X3 ;").expect("parses");
    assert_eq!(p.to_string(), "X0 = X1 + ( X2 * X3 ) ;");

    // Branch without else emits no `else` token.
    let p = parse_text("if ( X0 == 1 ) { X1 = 2 ; }").expect("parses");
    assert!(!emit_tokens(&p).contains(&"else".to_string()));
}

#[test]
fn parses_postfix_step_assignment() {
    let p = parse_text("X2 = X1 ++ ;").expect("parses");
    assert_eq!(
        p.statements,
        vec![Statement::Assign {
            target: "X2".into(),
            value: Expr::Step {
                op: StepOp::Inc,
                fixity: Fixity::Postfix,
                var: "X1".into(),
            },
        }]
    );
}

#[test]
fn parse_errors_carry_token_positions() {
    let err = parse_text("X0 = ;").expect_err("missing expression");
    assert_eq!(err.index, 2);

    assert!(parse_text("").is_err());
    assert!(parse_text("X0 = 1").is_err(), "missing semicolon");
    assert!(parse_text("X0 = 1 ; }").is_err(), "trailing tokens");
    assert!(parse_text("if ( X0 < 1 ) { }").is_err(), "empty block");
    assert!(parse_text("while X0 < 1 { X1 = 2 ; }").is_err(), "missing parens");
}

#[test]
fn precedence_groups_multiplication_first() {
    let p = parse_text("X0 = X1 + X2 * X3 ;").expect("parses");
    match &p.statements[0] {
        Statement::Assign {
            value: Expr::Binary { op: BinaryOp::Add, rhs, .. },
            ..
        } => assert!(matches!(**rhs, Expr::Binary { op: BinaryOp::Mul, .. })),
        other => panic!("unexpected parse {other:?}"),
    }
}

#[test]
fn loop_progress_statement_is_last_in_body() {
    for seed in 0..300u64 {
        for_each_statement(&sample(7, seed), &mut |s, _| {
            if let Statement::Loop { cond, body } = s {
                let loop_var = match &cond.lhs {
                    Expr::Var(v) => v.clone(),
                    other => panic!("condition lhs {other:?}"),
                };
                assert!(matches!(&cond.rhs, Expr::Num(_)));
                match body.last() {
                    Some(Statement::Assign { target, value }) if *target == loop_var => {
                        match value {
                            Expr::Binary { op, lhs, .. } => {
                                assert!(matches!(op, BinaryOp::Add | BinaryOp::Sub));
                                assert_eq!(**lhs, Expr::Var(loop_var.clone()));
                            }
                            other => panic!("progress value {other:?}"),
                        }
                    }
                    other => panic!("last body statement {other:?}"),
                }
            }
        });
    }
}
