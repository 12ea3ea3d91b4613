//! End-to-end tests that drive the built binary the way a user would.

use relift::lang::parse_text;
use relift::minicc::{compile_clean, CompilerOptions};
use std::path::Path;
use std::process::{Command, Output};

fn relift(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relift"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Tiny single-assignment configuration that trains in about a second.
const TINY_CONFIG: &str = "\
initial_train=180
per_iter_train=90
val_target=30
keep_fraction=0.77
success_threshold=80
patience_iters=2
iteration_limit=3
beam=3
threads=2
optimize=true
seed=11
grammar.level=1
grammar.max_statements=1
grammar.max_expr_depth=3
grammar.num_variables=5
grammar.number_range_max=90
hyper.hidden=32
hyper.embedding=24
hyper.batch=16
hyper.validate_every=25
hyper.patience=4
hyper.max_epochs=40
hyper.learning_rate=0.006
";

const TINY_SOURCES: [&str; 10] = [
    "a = 58 ;",
    "b = 13 ;",
    "c = 71 ;",
    "d = 4 ;",
    "e = 29 ;",
    "f = 86 ;",
    "g = 35 ;",
    "h = 62 ;",
    "i = 9 ;",
    "j = 47 ;",
];

fn write_tiny_inputs(dir: &Path) {
    let options = CompilerOptions::optimized();
    let mut text = String::new();
    for source in TINY_SOURCES {
        let program = parse_text(source).unwrap();
        text.push_str(&compile_clean(&program, options).to_string());
        text.push('\n');
    }
    std::fs::write(dir.join("inputs.txt"), text).unwrap();
}

#[test]
fn generated_datasets_are_deterministic_and_duplicate_free() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["gen", "--level", "2", "--max-statements", "2", "--count", "40"];
    let first = relift(dir.path(), &[&gen[..], &["--seed", "7", "--out", "a.jsonl"]].concat());
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let second = relift(dir.path(), &[&gen[..], &["--seed", "7", "--out", "b.jsonl"]].concat());
    assert_eq!(code(&second), 0);
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical output");

    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 40);
    let distinct: std::collections::BTreeSet<&str> = lines.iter().copied().collect();
    assert_eq!(distinct.len(), lines.len(), "pairs must be duplicate free");
    for line in lines {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value["high"].is_string() && value["low"].is_string());
    }

    let other = relift(dir.path(), &[&gen[..], &["--seed", "8", "--out", "c.jsonl"]].concat());
    assert_eq!(code(&other), 0);
    let c = std::fs::read(dir.path().join("c.jsonl")).unwrap();
    assert_ne!(b, c, "a different seed must change the data");
}

#[test]
fn a_run_feeds_every_other_command() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config"), TINY_CONFIG).unwrap();
    write_tiny_inputs(dir.path());

    let run = relift(
        dir.path(),
        &["run", "--config", "config", "--inputs", "inputs.txt", "--run-dir", "rd"],
    );
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert!(stdout(&run).contains("threshold reached"));

    // The run directory is self-describing: replaying it reproduces the report.
    let replay = relift(dir.path(), &["eval", "--run-dir", "rd"]);
    assert_eq!(code(&replay), 0, "{}", stderr(&replay));
    let replay_out = stdout(&replay);
    assert!(replay_out.contains("report.json reproduced"), "{replay_out}");
    assert!(!replay_out.contains("MISMATCH"));

    // Latest checkpoint decompiles one of the original inputs.
    let input = compile_clean(&parse_text(TINY_SOURCES[0]).unwrap(), CompilerOptions::optimized());
    let verbose = relift(
        dir.path(),
        &[
            "decompile",
            "--checkpoint",
            "rd/checkpoints/iter-1",
            "--verbose",
            &input.to_string(),
        ],
    );
    assert_eq!(code(&verbose), 0, "{}", stderr(&verbose));
    let text = stdout(&verbose);
    assert!(text.contains("canonical:"), "{text}");
    assert!(text.contains("hypothesis 1"), "{text}");
    assert!(text.contains("template"), "{text}");
    assert!(text.contains("stage: solved"), "{text}");
    let program = parse_text(text.lines().last().unwrap()).expect("last line is the program");
    assert_eq!(
        compile_clean(&program, CompilerOptions::optimized()).to_string(),
        input.to_string()
    );

    // The same model scores cleanly on a fresh dataset from the same grammar.
    let gen = relift(
        dir.path(),
        &["gen", "--config", "config", "--count", "25", "--out", "ds.jsonl"],
    );
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    let eval = relift(
        dir.path(),
        &["eval", "--checkpoint", "rd/checkpoints/iter-1", "--dataset", "ds.jsonl"],
    );
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    assert!(stdout(&eval).contains("solved"));

    // Verified successes collapse into the classic assignment rule.
    let rules = relift(
        dir.path(),
        &["extract-rules", "--successes", "rd/successes.jsonl", "--out", "rules.jsonl"],
    );
    assert_eq!(code(&rules), 0, "{}", stderr(&rules));
    let rules_text = std::fs::read_to_string(dir.path().join("rules.jsonl")).unwrap();
    assert!(rules_text.contains("\"low\":\"movl N_1 , X_1 ;\""), "{rules_text}");
    assert!(rules_text.contains("\"high\":\"X_1 = N_1 ;\""), "{rules_text}");

    // An empty dataset is a configuration error.
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let empty = relift(
        dir.path(),
        &["eval", "--checkpoint", "rd/checkpoints/iter-1", "--dataset", "empty.jsonl"],
    );
    assert_eq!(code(&empty), 1, "{}", stderr(&empty));
}

#[test]
fn configuration_mistakes_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("inputs.txt"), "movl 5 , a ;\n").unwrap();

    let flag = relift(dir.path(), &["gen", "--out", "x.jsonl", "--no-such-flag"]);
    assert_eq!(code(&flag), 1);

    let preset = relift(dir.path(), &["gen", "--preset", "huge", "--out", "x.jsonl"]);
    assert_eq!(code(&preset), 1);
    assert!(stderr(&preset).contains("unknown preset"));

    std::fs::write(dir.path().join("config"), "no_such_key=1\n").unwrap();
    let key = relift(dir.path(), &["gen", "--config", "config", "--out", "x.jsonl"]);
    assert_eq!(code(&key), 1);
    assert!(stderr(&key).contains("unknown key"));

    let limit = relift(
        dir.path(),
        &["run", "--iteration-limit", "0", "--inputs", "inputs.txt", "--run-dir", "rd"],
    );
    assert_eq!(code(&limit), 1);
    assert!(stderr(&limit).contains("iteration_limit"));

    std::fs::write(dir.path().join("bad.txt"), "movl 5 , a ;\nthis is not assembly\n").unwrap();
    let line = relift(
        dir.path(),
        &["run", "--inputs", "bad.txt", "--run-dir", "rd"],
    );
    assert_eq!(code(&line), 1);
    assert!(stderr(&line).contains("bad.txt:2"), "{}", stderr(&line));
}

#[test]
fn broken_files_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.bin"), "not a checkpoint").unwrap();
    let corrupt = relift(dir.path(), &["decompile", "--checkpoint", "junk.bin", "movl 5 , a ;"]);
    assert_eq!(code(&corrupt), 2);
    assert!(stderr(&corrupt).contains("magic"), "{}", stderr(&corrupt));

    let missing = relift(dir.path(), &["run", "--inputs", "absent.txt", "--run-dir", "rd"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn help_and_version_exit_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let help = relift(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("decompile"));
    let version = relift(dir.path(), &["--version"]);
    assert_eq!(code(&version), 0);
}
