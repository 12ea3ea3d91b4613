//! The five subcommands. Each returns `Ok(())` for exit 0 or a `Failure`
//! that main maps onto the documented exit codes.

use crate::{config, DecompileArgs, EvalArgs, ExtractRulesArgs, Failure, GenArgs, RunArgs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relift::canonical::fuse_digits;
use relift::driver::{
    decompile_input, run_loop, Datasets, IterationStats, LoopConfig, LoopStop, Stage, Translation,
};
use relift::lang::{parse_text, Program};
use relift::minicc::{from_text, AsmProgram, CompilerOptions};
use relift::rules;
use relift::Model;
use relift::template::Template;
use std::path::Path;
use std::time::Instant;

type CmdResult = Result<(), Failure>;

fn file_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Model::load(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

pub fn gen(args: GenArgs) -> CmdResult {
    let cfg = config::resolve(&args.knobs)?;
    cfg.validate()?;
    let count = args.count.unwrap_or(cfg.initial_train);
    if count == 0 {
        return Err(Failure::Config("count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ds = Datasets::new(std::iter::empty::<String>());
    ds.extend(&[], count, 0, 1.0, &cfg.grammar, cfg.options, &mut rng);
    let mut text = String::new();
    for pair in &ds.train {
        let line = serde_json::to_string(pair)
            .map_err(|e| Failure::Io(format!("serializing pair: {e}")))?;
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(&args.out, text).map_err(|e| file_err(&args.out, e))?;
    if ds.train.len() < count {
        eprintln!("note: grammar exhausted after {} distinct pairs", ds.train.len());
    }
    println!("wrote {} pairs to {}", ds.train.len(), args.out.display());
    Ok(())
}

fn read_inputs(path: &Path) -> Result<Vec<AsmProgram>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut out = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let asm = from_text(line)
            .map_err(|e| Failure::Config(format!("{}:{}: {e}", path.display(), index + 1)))?;
        out.push(asm);
    }
    if out.is_empty() {
        return Err(Failure::Config(format!("{}: no inputs", path.display())));
    }
    Ok(out)
}

pub fn run(args: RunArgs) -> CmdResult {
    let cfg = config::resolve(&args.knobs)?;
    cfg.validate()?;
    let inputs = read_inputs(&args.inputs)?;
    let preloaded = match &args.checkpoint {
        Some(path) => Some(load_model(path)?),
        None => None,
    };
    println!(
        "decompiling {} inputs; per-iteration artifacts land in {}",
        inputs.len(),
        args.run_dir.display()
    );
    let outcome = run_loop(&inputs, &cfg, preloaded, Some(&args.run_dir))?;
    println!("iter  epochs  train(s)  translate(s)   solved  new-fail  pending");
    for s in &outcome.stats {
        println!(
            "{:>4}  {:>6}  {:>8.1}  {:>12.1}  {:>3} {:>5.1}%  {:>8}  {:>7}",
            s.iteration,
            s.epochs,
            s.train_seconds,
            s.translate_seconds,
            s.solved,
            s.solved_percent,
            s.new_failures,
            s.pending,
        );
    }
    let solved = outcome.successes.len();
    match outcome.stop {
        LoopStop::Threshold => {
            println!("threshold reached: {} of {} inputs decompiled", solved, inputs.len());
            Ok(())
        }
        LoopStop::NoProgress => Err(Failure::Unfinished(format!(
            "no progress for {} iterations; {} of {} inputs decompiled",
            cfg.patience_iters,
            solved,
            inputs.len()
        ))),
        LoopStop::Limit => Err(Failure::Unfinished(format!(
            "iteration limit hit; {} of {} inputs decompiled",
            solved,
            inputs.len()
        ))),
    }
}

fn stage_rank(stage: &Stage) -> u8 {
    match stage {
        Stage::Solved { .. } => 3,
        Stage::Constants(_) => 2,
        Stage::Structure => 1,
        Stage::Parse(_) => 0,
    }
}

/// Best stage any hypothesis of an unsolved translation reached.
fn best_stage_label(t: &Translation) -> String {
    let best = t.attempts.iter().max_by_key(|a| stage_rank(&a.stage));
    match best.map(|a| &a.stage) {
        Some(Stage::Constants(n)) => format!("constant filling ({n} unresolved)"),
        Some(Stage::Structure) => "structure mismatch".into(),
        Some(Stage::Parse(_)) | None => "parse failure".into(),
        Some(Stage::Solved { .. }) => unreachable!("solved translations are not failures"),
    }
}

pub fn decompile(args: DecompileArgs) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let asm = from_text(&args.snippet).map_err(|e| Failure::Config(format!("snippet: {e}")))?;
    let options = CompilerOptions { optimize: args.optimize.unwrap_or(true) };
    let beam = args.beam.unwrap_or(model.hyper().beam);
    if beam == 0 {
        return Err(Failure::Config("beam must be positive".into()));
    }
    let t = decompile_input(&model, &asm, options, beam);
    if args.verbose {
        println!("canonical: {}", t.canonical);
        for (index, a) in t.attempts.iter().enumerate() {
            println!("hypothesis {} (score {:.4}): {}", index + 1, a.score, a.tokens);
            if let Some(p) = &a.restored {
                let slots = Template::new(p.clone()).slots.len();
                println!("  template ({slots} constant slots): {p}");
            }
            match &a.stage {
                Stage::Parse(m) => println!("  stage: parse failed, {m}"),
                Stage::Structure => println!("  stage: structure mismatch"),
                Stage::Constants(n) => println!("  stage: {n} unresolved constants"),
                Stage::Solved { repairs, .. } => {
                    for r in repairs {
                        println!("  repair: slot {} constant {} -> {}", r.position, r.from, r.to);
                    }
                    println!("  stage: solved");
                }
            }
        }
    }
    match t.solved() {
        Some((program, _)) => {
            println!("{program}");
            Ok(())
        }
        None => Err(Failure::Unfinished(format!(
            "no hypothesis decompiled the snippet; best stage: {}",
            best_stage_label(&t)
        ))),
    }
}

pub fn eval(args: EvalArgs) -> CmdResult {
    match (&args.run_dir, &args.dataset) {
        (Some(dir), None) => replay(dir, &args),
        (None, Some(path)) => eval_dataset(path, &args),
        (Some(_), Some(_)) => {
            Err(Failure::Config("pass either --dataset or --run-dir, not both".into()))
        }
        (None, None) => {
            Err(Failure::Config("pass --dataset with --checkpoint, or --run-dir".into()))
        }
    }
}

#[derive(Default)]
struct PhaseCounts {
    solved: usize,
    constants: usize,
    structure: usize,
    parse: usize,
}

impl PhaseCounts {
    fn add(&mut self, t: &Translation) {
        if t.solved().is_some() {
            self.solved += 1;
            return;
        }
        let best = t.attempts.iter().map(|a| stage_rank(&a.stage)).max();
        match best {
            Some(2) => self.constants += 1,
            Some(1) => self.structure += 1,
            _ => self.parse += 1,
        }
    }
}

fn eval_dataset(path: &Path, args: &EvalArgs) -> CmdResult {
    let checkpoint = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| Failure::Config("--dataset needs --checkpoint".into()))?;
    let model = load_model(checkpoint)?;
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut lows = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let pair: relift::driver::SamplePair = serde_json::from_str(line)
            .map_err(|e| Failure::Config(format!("{}:{}: {e}", path.display(), index + 1)))?;
        let asm = from_text(&fuse_digits(&pair.low).to_string()).map_err(|e| {
            Failure::Config(format!("{}:{}: pair does not re-assemble: {e}", path.display(), index + 1))
        })?;
        lows.push(asm);
    }
    if lows.is_empty() {
        return Err(Failure::Config(format!("{}: empty dataset", path.display())));
    }
    let options = CompilerOptions { optimize: args.optimize.unwrap_or(true) };
    let beam = args.beam.unwrap_or(model.hyper().beam);
    let started = Instant::now();
    let mut counts = PhaseCounts::default();
    for asm in &lows {
        counts.add(&decompile_input(&model, asm, options, beam));
    }
    let seconds = started.elapsed().as_secs_f64();
    let total = lows.len();
    println!(
        "evaluated {} pairs in {:.2}s ({:.1} ms per pair)",
        total,
        seconds,
        1000.0 * seconds / total as f64
    );
    println!("solved              {:>6}  {:.1}%", counts.solved, 100.0 * counts.solved as f64 / total as f64);
    println!("constant filling    {:>6}", counts.constants);
    println!("structure mismatch  {:>6}", counts.structure);
    println!("parse failure       {:>6}", counts.parse);
    Ok(())
}

/// Re-translates a run's inputs with its own checkpoints and checks that the
/// solved and pending counts of every iteration match `report.json`.
fn replay(dir: &Path, args: &EvalArgs) -> CmdResult {
    let config_path = dir.join("config");
    let text = std::fs::read_to_string(&config_path).map_err(|e| file_err(&config_path, e))?;
    let mut cfg = LoopConfig::desk();
    config::apply_file(&mut cfg, &text, &config_path)?;
    let inputs = read_inputs(&dir.join("inputs"))?;
    let report_path = dir.join("report.json");
    let report_text = std::fs::read_to_string(&report_path).map_err(|e| file_err(&report_path, e))?;
    let report: Vec<IterationStats> = serde_json::from_str(&report_text)
        .map_err(|e| Failure::Config(format!("{}: {e}", report_path.display())))?;
    if report.is_empty() {
        return Err(Failure::Config(format!("{}: no iterations", report_path.display())));
    }
    let options = CompilerOptions { optimize: args.optimize.unwrap_or(cfg.options.optimize) };
    let beam = args.beam.unwrap_or(cfg.beam);
    let mut pending: Vec<&AsmProgram> = inputs.iter().collect();
    let mut cumulative = 0usize;
    let mut clean = true;
    for s in &report {
        let model = load_model(&dir.join("checkpoints").join(format!("iter-{}", s.iteration)))?;
        let mut still = Vec::new();
        for asm in pending {
            if decompile_input(&model, asm, options, beam).solved().is_some() {
                cumulative += 1;
            } else {
                still.push(asm);
            }
        }
        pending = still;
        let ok = cumulative == s.solved && pending.len() == s.pending;
        println!(
            "iteration {}: solved {} (report {}), pending {} (report {}) {}",
            s.iteration,
            cumulative,
            s.solved,
            pending.len(),
            s.pending,
            if ok { "ok" } else { "MISMATCH" }
        );
        clean &= ok;
    }
    if clean {
        println!("report.json reproduced");
        Ok(())
    } else {
        Err(Failure::Unfinished("replay did not reproduce report.json".into()))
    }
}

pub fn extract_rules(args: ExtractRulesArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.successes).map_err(|e| file_err(&args.successes, e))?;
    let mut pairs: Vec<(AsmProgram, Program)> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| {
            Failure::Config(format!("{}:{}: {m}", args.successes.display(), index + 1))
        };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let input = value["input"]
            .as_str()
            .ok_or_else(|| bad("missing \"input\" field".into()))?;
        let decompiled = value["decompiled"]
            .as_str()
            .ok_or_else(|| bad("missing \"decompiled\" field".into()))?;
        let asm = from_text(input).map_err(|e| bad(format!("input: {e}")))?;
        let program = parse_text(decompiled).map_err(|e| bad(format!("decompiled: {e}")))?;
        pairs.push((asm, program));
    }
    if pairs.is_empty() {
        return Err(Failure::Config(format!("{}: no successes", args.successes.display())));
    }
    let options = CompilerOptions { optimize: args.optimize.unwrap_or(true) };
    let (rules, skipped) = rules::extract_rules(&pairs, options);
    let mut out = String::new();
    for rule in &rules {
        let line = serde_json::to_string(rule)
            .map_err(|e| Failure::Io(format!("serializing rule: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, out).map_err(|e| file_err(path, e))?;
            println!(
                "{} rules from {} successes ({} skipped) -> {}",
                rules.len(),
                pairs.len(),
                skipped,
                path.display()
            );
        }
        None => {
            print!("{out}");
            eprintln!("{} rules from {} successes ({} skipped)", rules.len(), pairs.len(), skipped);
        }
    }
    Ok(())
}
