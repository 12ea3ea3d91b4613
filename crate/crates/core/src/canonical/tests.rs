use super::*;
use crate::lang::{parse_text, sample_program, GrammarConfig};

fn seq(text: &str) -> TokenSeq {
    TokenSeq::from_text(text)
}

#[test]
fn token_classes() {
    assert!(is_identifier("foo_1"));
    assert!(is_identifier("_tmp"));
    assert!(!is_identifier("5"));
    assert!(!is_identifier("+"));
    assert!(is_number("42"));
    assert!(is_number("-7"));
    assert!(!is_number("4a"));
    assert!(!is_number("-"));
    assert!(is_reserved("while"));
    assert!(is_reserved("movl"));
    assert!(is_reserved("eax"));
    assert!(!is_reserved("X0"));
    assert!(is_generic_name("X12"));
    assert!(!is_generic_name("X"));
    assert!(!is_generic_name("Y0"));
}

#[test]
fn abstraction_assigns_first_occurrence_order() {
    let (out, map) = abstract_names(&seq("foo = bar + foo ;"));
    assert_eq!(out.to_string(), "X0 = X1 + X0 ;");
    assert_eq!(map.to_generic("foo"), Some("X0"));
    assert_eq!(map.to_original("X1"), Some("bar"));
}

#[test]
fn abstraction_keeps_generic_names_fixed() {
    // X3 occupies its own index; the fresh name skips taken indices.
    let (out, map) = abstract_names(&seq("X3 = y + X0 ;"));
    assert_eq!(out.to_string(), "X3 = X1 + X0 ;");
    assert_eq!(map.to_generic("X3"), Some("X3"));
    assert_eq!(map.to_generic("y"), Some("X1"));

    // Idempotence: a second pass is the identity.
    let (again, map2) = abstract_names(&out);
    assert_eq!(again, out);
    assert!(map2.is_identity());
}

#[test]
fn abstraction_skips_reserved_words() {
    let (out, _) = abstract_names(&seq("movl total , eax ; while ( n > 5 )"));
    assert_eq!(out.to_string(), "movl X0 , eax ; while ( X1 > 5 )");
}

#[test]
fn restore_inverts_abstraction() {
    let original = seq("if ( count < limit ) { count = count + 1 ; }");
    let (abstracted, map) = abstract_names(&original);
    assert_eq!(map.restore(&abstracted), original);
}

#[test]
fn digit_splitting_round_trips() {
    let s = seq("X0 = 105 + -42 ;");
    let split = split_digits(&s);
    assert_eq!(split.to_string(), "X0 = 1 0 5 + NEG 4 2 ;");
    assert_eq!(fuse_digits(&split), s);
}

#[test]
fn fusing_respects_the_number_separator() {
    // Two adjacent numbers stay distinct across split/fuse.
    let split = split_digits(&seq(&format!("1 2 {NUM_SEP} 3")));
    assert_eq!(split.to_string(), format!("1 2 {NUM_SEP} 3"));
    assert_eq!(fuse_digits(&split).to_string(), format!("12 {NUM_SEP} 3"));
}

#[test]
fn postorder_layout_matches_documented_examples() {
    let p = parse_text("X0 = X1 + X2 ;").expect("parses");
    assert_eq!(to_postorder(&p).to_string(), "X1 X2 + X0 = ;");

    let p = parse_text("X0 = ( X1 + 2 ) * X3 ;").expect("parses");
    assert_eq!(to_postorder(&p).to_string(), "X1 2 + X3 * X0 = ;");

    let p = parse_text("X2 = X1 ++ ;").expect("parses");
    assert_eq!(to_postorder(&p).to_string(), "X1 ++post X2 = ;");

    let p = parse_text("if ( X0 < 1 ) { X1 = 2 ; }").expect("parses");
    assert_eq!(to_postorder(&p).to_string(), "X0 1 < { 2 X1 = ; } if");

    let p = parse_text("if ( X0 < 1 ) { X1 = 2 ; } else { X1 = 3 ; }").expect("parses");
    assert_eq!(
        to_postorder(&p).to_string(),
        "X0 1 < { 2 X1 = ; } { 3 X1 = ; } ifelse"
    );

    let p = parse_text("while ( X1 > 5 ) { X2 = 3 ; }").expect("parses");
    assert_eq!(to_postorder(&p).to_string(), "X1 5 > { 3 X2 = ; } while");
}

#[test]
fn postorder_separates_adjacent_numbers() {
    let p = parse_text("X0 = 1 + 2 ;").expect("parses");
    assert_eq!(to_postorder(&p).to_string(), format!("1 {NUM_SEP} 2 + X0 = ;"));
    assert_eq!(from_postorder(&to_postorder(&p)).expect("parses back"), p);
}

#[test]
fn postorder_round_trips_all_levels() {
    for level in 1..=8 {
        for seed in 0..1250u64 {
            let p = sample_program(&GrammarConfig {
                level,
                seed,
                ..GrammarConfig::default()
            });
            let post = to_postorder(&p);
            let back = from_postorder(&post)
                .unwrap_or_else(|e| panic!("level {level} seed {seed}: {e}\n{post}"));
            assert_eq!(back, p, "level {level} seed {seed}");

            // The full translator-side pipeline adds digit splitting.
            let wire = split_digits(&post);
            let back = from_postorder(&fuse_digits(&wire)).expect("pipeline inverse");
            assert_eq!(back, p, "level {level} seed {seed} (digit pipeline)");
        }
    }
}

#[test]
fn postorder_rejects_malformed_sequences() {
    assert_eq!(from_postorder(&seq("")), Err(PostorderError::Empty));
    assert!(matches!(
        from_postorder(&seq(";")),
        Err(PostorderError::BadOperands { index: 0, .. })
    ));
    assert!(matches!(
        from_postorder(&seq("X0 X1 + ;")),
        Err(PostorderError::BadOperands { .. })
    ));
    assert!(matches!(
        from_postorder(&seq("} if")),
        Err(PostorderError::UnmatchedClose { index: 0 })
    ));
    assert!(matches!(
        from_postorder(&seq("X1 X2 + X0 = ; ?")),
        Err(PostorderError::UnknownToken { index: 6, .. })
    ));
    // A bare expression is not a statement.
    assert!(matches!(
        from_postorder(&seq("X1 X2 +")),
        Err(PostorderError::Unfinished(_))
    ));
}
