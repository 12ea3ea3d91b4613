//! The iterative decompilation loop: sample, train, translate, verify,
//! retrain on the near misses.
//!
//! Every iteration follows the same schedule. The training pool is refreshed
//! (older random samples decay, failed translations stay at full weight), the
//! translator is retrained, and each unsolved input is translated with a
//! beam. Hypotheses are verified structurally and their constants repaired by
//! recompilation; an input whose repaired hypothesis matches its own assembly
//! leaves the pending set for good. Hypotheses that compile but do not match
//! are fed back as training pairs, which biases the next round of training
//! toward whatever the model currently gets wrong.

mod data;

pub use data::{canonicalize_asm, pair_from_program, Datasets, Provenance, SamplePair};

use crate::canonical::{from_postorder, fuse_digits, TokenSeq};
use crate::lang::{GrammarConfig, Program};
use crate::minicc::{clean, compile_clean, AsmProgram, CompilerOptions};
use crate::nmt::{CorruptCheckpoint, Hyper, Vocab};
use crate::pdg::{build_pdg, find_isomorphism};
use crate::template::{fill, find_mismatches, Template};
use crate::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Settings for one decompilation run.
#[derive(Clone, Debug)]
pub struct LoopConfig {
    /// Random training pairs generated before the first iteration.
    pub initial_train: usize,
    /// Fresh random pairs added at every later iteration.
    pub per_iter_train: usize,
    /// Validation-set size, refreshed each iteration.
    pub val_target: usize,
    /// Survival probability of an existing random pair at each extension.
    pub keep_fraction: f64,
    /// Stop once this percentage of inputs is decompiled.
    pub success_threshold: f64,
    /// Stop after this many consecutive iterations without a new success.
    pub patience_iters: usize,
    /// Hard cap on training iterations; `None` leaves the loop open ended.
    pub iteration_limit: Option<usize>,
    /// Beam width used when translating inputs.
    pub beam: usize,
    /// Worker threads for the translate-and-verify phase.
    pub threads: usize,
    pub grammar: GrammarConfig,
    pub hyper: Hyper,
    pub options: CompilerOptions,
    pub seed: u64,
}

impl LoopConfig {
    /// Full-size configuration: big sample pools, wide model.
    pub fn paper() -> LoopConfig {
        LoopConfig {
            initial_train: 10_000,
            per_iter_train: 5_000,
            val_target: 1_000,
            keep_fraction: 0.5,
            success_threshold: 95.0,
            patience_iters: 10,
            iteration_limit: None,
            beam: 5,
            threads: 1,
            grammar: GrammarConfig::default(),
            hyper: Hyper::paper(),
            options: CompilerOptions::optimized(),
            seed: 0,
        }
    }

    /// Scaled-down configuration that runs in minutes on one core.
    pub fn desk() -> LoopConfig {
        LoopConfig {
            initial_train: 2_000,
            per_iter_train: 1_000,
            val_target: 200,
            hyper: Hyper::desk(),
            iteration_limit: Some(6),
            ..LoopConfig::paper()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.initial_train == 0 {
            return bad("initial_train must be positive".into());
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad(format!("keep_fraction {} outside (0, 1]", self.keep_fraction));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 100.0) {
            return bad(format!("success_threshold {} outside (0, 100]", self.success_threshold));
        }
        if self.patience_iters == 0 {
            return bad("patience_iters must be positive".into());
        }
        if self.iteration_limit == Some(0) {
            return bad("iteration_limit 0 would never train".into());
        }
        if self.beam == 0 {
            return bad("beam must be positive".into());
        }
        if self.threads == 0 {
            return bad("threads must be positive".into());
        }
        if !(1..=8).contains(&self.grammar.level) {
            return bad(format!("grammar level {} outside 1..=8", self.grammar.level));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CorruptCheckpoint> for ConfigError {
    fn from(e: CorruptCheckpoint) -> ConfigError {
        match e {
            CorruptCheckpoint::Io(io) => ConfigError::Io(io),
            other => ConfigError::Invalid(other.to_string()),
        }
    }
}

/// Progress record for one iteration; iteration 0 is the translate-only
/// pre-pass that runs when a trained model is supplied up front.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub epochs: usize,
    pub batches: usize,
    pub train_seconds: f64,
    pub translate_seconds: f64,
    /// Inputs decompiled so far, over all iterations.
    pub solved: usize,
    pub solved_percent: f64,
    /// Failure pairs harvested in this iteration.
    pub new_failures: usize,
    /// Inputs still unsolved after this iteration.
    pub pending: usize,
}

/// Why the loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopStop {
    /// The success threshold was reached.
    Threshold,
    /// No input was solved for `patience_iters` consecutive iterations.
    NoProgress,
    /// The iteration limit was reached.
    Limit,
}

/// A decompiled input: `program` recompiles to a graph-isomorphic,
/// constant-equal match of `input`.
#[derive(Clone, Debug)]
pub struct Solved {
    pub index: usize,
    pub input: AsmProgram,
    pub program: Program,
}

pub struct RunOutcome {
    pub successes: Vec<Solved>,
    pub stats: Vec<IterationStats>,
    pub stop: LoopStop,
    pub model: Model,
}

/// One constant the repair phase changed, by literal position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Repair {
    pub position: usize,
    pub from: i32,
    pub to: i32,
}

/// How far one hypothesis got.
#[derive(Clone, Debug)]
pub enum Stage {
    /// The tokens do not form a program.
    Parse(String),
    /// Parsed but its compilation has a different graph shape.
    Structure,
    /// Shape matched, but this many constants could not be repaired.
    Constants(usize),
    /// Repaired and verified.
    Solved { program: Program, repairs: Vec<Repair> },
}

/// One scored hypothesis and its verification outcome.
#[derive(Clone, Debug)]
pub struct Attempt {
    pub tokens: TokenSeq,
    pub score: f64,
    /// The hypothesis parsed in generic-name space, when it parses at all.
    pub generic: Option<Program>,
    /// The same program with the input's original names put back.
    pub restored: Option<Program>,
    pub stage: Stage,
}

/// Everything the pipeline produced for a single input.
#[derive(Clone, Debug)]
pub struct Translation {
    /// The input after cleaning, name abstraction and digit splitting.
    pub canonical: TokenSeq,
    /// Hypotheses in rank order; evaluation stops at the first solved one.
    pub attempts: Vec<Attempt>,
}

impl Translation {
    pub fn solved(&self) -> Option<(&Program, &[Repair])> {
        self.attempts.iter().find_map(|a| match &a.stage {
            Stage::Solved { program, repairs } => Some((program, repairs.as_slice())),
            _ => None,
        })
    }
}

/// Runs the full decompilation pipeline on one input: canonicalize,
/// translate, restore names, and repair constants against the input.
pub fn decompile_input(model: &Model, input: &AsmProgram, options: CompilerOptions, beam: usize) -> Translation {
    let cleaned = clean(input);
    let (low, map) = canonicalize_asm(input);
    let hyps = model.translate_with(low.tokens(), beam, Model::max_len_for(low.len()));
    let mut attempts = Vec::with_capacity(hyps.len());
    for h in hyps {
        let tokens = TokenSeq::new(h.tokens.clone());
        let fused = fuse_digits(&tokens);
        let generic = match from_postorder(&fused) {
            Ok(p) => p,
            Err(e) => {
                attempts.push(Attempt {
                    tokens,
                    score: h.score,
                    generic: None,
                    restored: None,
                    stage: Stage::Parse(e.to_string()),
                });
                continue;
            }
        };
        // Restoration only renames identifiers, so the restored stream
        // parses whenever the generic one does.
        let restored = from_postorder(&map.restore(&fused)).expect("renaming preserves structure");
        let template = Template::new(restored);
        let stage = match fill(&template, &cleaned, |p| compile_clean(p, options)) {
            Ok(program) => {
                let repairs = template
                    .slots
                    .iter()
                    .zip(Template::new(program.clone()).slots.iter())
                    .filter(|(a, b)| a.initial != b.initial)
                    .map(|(a, b)| Repair { position: a.position, from: a.initial, to: b.initial })
                    .collect();
                Stage::Solved { program, repairs }
            }
            Err(f) if f.unresolved.is_empty() => Stage::Structure,
            Err(f) => Stage::Constants(f.unresolved.len()),
        };
        let done = matches!(stage, Stage::Solved { .. });
        attempts.push(Attempt {
            tokens,
            score: h.score,
            generic: Some(generic),
            restored: Some(template.program.clone()),
            stage,
        });
        if done {
            break;
        }
    }
    Translation { canonical: low, attempts }
}

/// Failure pairs for an unsolved input: every distinct hypothesis that at
/// least parses becomes a (hypothesis, its own compilation) training pair.
fn failure_pairs(t: &Translation, options: CompilerOptions) -> Vec<SamplePair> {
    if t.solved().is_some() {
        return Vec::new();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for a in &t.attempts {
        if let Some(p) = &a.generic {
            let pair = pair_from_program(p, options, Provenance::FailedTranslation);
            if seen.insert((pair.high.to_string(), pair.low.to_string())) {
                out.push(pair);
            }
        }
    }
    out
}

/// Decides whether the loop is finished. Threshold beats no-progress beats
/// the iteration limit, so a run that crosses the line on its last allowed
/// iteration still counts as a success.
pub fn check_stop(stats: &[IterationStats], cfg: &LoopConfig) -> Option<LoopStop> {
    let last = stats.last()?;
    if last.solved_percent >= cfg.success_threshold {
        return Some(LoopStop::Threshold);
    }
    let mut streak = 0;
    for w in stats.windows(2).rev() {
        if w[1].pending == w[0].pending {
            streak += 1;
        } else {
            break;
        }
    }
    if streak >= cfg.patience_iters {
        return Some(LoopStop::NoProgress);
    }
    if let Some(n) = cfg.iteration_limit {
        if last.iteration >= n {
            return Some(LoopStop::Limit);
        }
    }
    None
}

/// Runs the iterative loop over `inputs` until a stopping rule fires.
///
/// A preloaded model gets a translate-only pre-pass (recorded as iteration 0)
/// before any training. When `run_dir` is given, the configuration, datasets,
/// per-iteration checkpoints, progress report and final successes are written
/// beneath it.
pub fn run_loop(
    inputs: &[AsmProgram],
    cfg: &LoopConfig,
    preloaded: Option<Model>,
    run_dir: Option<&Path>,
) -> Result<RunOutcome, ConfigError> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(ConfigError::Invalid("no inputs to decompile".into()));
    }
    if let Some(m) = &preloaded {
        let (h, c) = (m.hyper(), &cfg.hyper);
        if h.hidden != c.hidden || h.embedding != c.embedding {
            return Err(ConfigError::Invalid(format!(
                "preloaded model is {}x{} but the configuration says {}x{}",
                h.hidden, h.embedding, c.hidden, c.embedding
            )));
        }
    }
    let cleaned: Vec<AsmProgram> = inputs.iter().map(clean).collect();
    for (i, a) in cleaned.iter().enumerate() {
        build_pdg(a).map_err(|e| ConfigError::Invalid(format!("input {}: {e}", i + 1)))?;
    }

    let artifacts = match run_dir {
        Some(root) => Some(RunDir::create(root, cfg)?),
        None => None,
    };
    if let Some(a) = &artifacts {
        a.write_inputs(inputs)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ds = Datasets::new(cleaned.iter().map(|a| canonicalize_asm(a).0.to_string()));
    let mut pending: Vec<usize> = (0..inputs.len()).collect();
    let mut successes: Vec<Solved> = Vec::new();
    let mut stats: Vec<IterationStats> = Vec::new();
    let mut failures: Vec<SamplePair> = Vec::new();
    let mut model = preloaded;

    let stop = 'outer: {
        // Translate-only pre-pass for a model trained elsewhere.
        if let Some(m) = &model {
            let t = Instant::now();
            let (newly, fails) = harvest(m, &cleaned, &mut pending, cfg);
            let translate_seconds = t.elapsed().as_secs_f64();
            failures = fails;
            successes.extend(newly);
            stats.push(IterationStats {
                iteration: 0,
                epochs: 0,
                batches: 0,
                train_seconds: 0.0,
                translate_seconds,
                solved: successes.len(),
                solved_percent: percent(successes.len(), inputs.len()),
                new_failures: failures.len(),
                pending: pending.len(),
            });
            if let Some(a) = &artifacts {
                m.save(&a.checkpoint_path(0))?;
                a.write_report(&stats)?;
            }
            if let Some(stop) = check_stop(&stats, cfg) {
                break 'outer stop;
            }
        }

        let mut iteration = 0;
        loop {
            iteration += 1;
            let fresh = if ds.train.is_empty() { cfg.initial_train } else { cfg.per_iter_train };
            ds.extend(&failures, fresh, cfg.val_target, cfg.keep_fraction, &cfg.grammar, cfg.options, &mut rng);
            assert!(ds.disjoint(), "train, val and test sets overlap");

            let mut h = cfg.hyper.clone();
            h.seed = cfg.seed.wrapping_add(iteration as u64);
            let mut m = next_model(model.take(), &ds, &h);
            let train_pairs = Datasets::token_pairs(&ds.train);
            let val_pairs = Datasets::token_pairs(&ds.val);
            let t = Instant::now();
            let report = m.train(&train_pairs, &val_pairs, &h);
            let train_seconds = t.elapsed().as_secs_f64();

            let t = Instant::now();
            let (newly, fails) = harvest(&m, &cleaned, &mut pending, cfg);
            let translate_seconds = t.elapsed().as_secs_f64();
            failures = fails;
            successes.extend(newly);
            model = Some(m);

            stats.push(IterationStats {
                iteration,
                epochs: report.epochs,
                batches: report.batches,
                train_seconds,
                translate_seconds,
                solved: successes.len(),
                solved_percent: percent(successes.len(), inputs.len()),
                new_failures: failures.len(),
                pending: pending.len(),
            });
            if let Some(a) = &artifacts {
                a.write_datasets(&ds)?;
                model.as_ref().expect("just trained").save(&a.checkpoint_path(iteration))?;
                a.write_report(&stats)?;
            }
            if let Some(stop) = check_stop(&stats, cfg) {
                break 'outer stop;
            }
        }
    };

    // Independent end-to-end recheck of everything reported as solved.
    for s in &successes {
        assert!(
            matches(&s.program, &cleaned[s.index], cfg.options),
            "input {} was reported solved but does not verify",
            s.index + 1
        );
    }
    if let Some(a) = &artifacts {
        a.write_successes(&successes)?;
    }
    let model = model.expect("at least one iteration ran");
    Ok(RunOutcome { successes, stats, stop, model })
}

fn percent(part: usize, whole: usize) -> f64 {
    100.0 * part as f64 / whole as f64
}

/// Recompiles `p` and checks it against `input`: same graph shape, same
/// constants.
fn matches(p: &Program, input: &AsmProgram, options: CompilerOptions) -> bool {
    let recompiled = compile_clean(p, options);
    let (Ok(a), Ok(b)) = (build_pdg(&recompiled), build_pdg(input)) else {
        return false;
    };
    match find_isomorphism(&a, &b) {
        Ok(Some(iso)) => find_mismatches(&iso, &a, &b).is_empty(),
        _ => false,
    }
}

/// Translates every pending input, removes the solved ones from `pending`,
/// and returns the new successes plus the iteration's failure pairs.
fn harvest(
    model: &Model,
    cleaned: &[AsmProgram],
    pending: &mut Vec<usize>,
    cfg: &LoopConfig,
) -> (Vec<Solved>, Vec<SamplePair>) {
    let translations = translate_all(model, cleaned, pending, cfg);
    let mut solved = Vec::new();
    let mut failures = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, t) in translations {
        match t.solved() {
            Some((program, _)) => {
                solved.push(Solved { index, input: cleaned[index].clone(), program: program.clone() });
            }
            None => {
                for pair in failure_pairs(&t, cfg.options) {
                    if seen.insert((pair.high.to_string(), pair.low.to_string())) {
                        failures.push(pair);
                    }
                }
            }
        }
    }
    let done: BTreeSet<usize> = solved.iter().map(|s| s.index).collect();
    pending.retain(|i| !done.contains(i));
    (solved, failures)
}

fn translate_all(
    model: &Model,
    cleaned: &[AsmProgram],
    pending: &[usize],
    cfg: &LoopConfig,
) -> Vec<(usize, Translation)> {
    let one = |i: usize| (i, decompile_input(model, &cleaned[i], cfg.options, cfg.beam));
    if cfg.threads <= 1 || pending.len() <= 1 {
        return pending.iter().map(|&i| one(i)).collect();
    }
    let chunk = pending.len().div_ceil(cfg.threads);
    std::thread::scope(|scope| {
        let workers: Vec<_> = pending
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&i| one(i)).collect::<Vec<_>>()))
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("translator thread panicked"))
            .collect()
    })
}

/// First iteration builds a fresh model; later ones grow the vocabulary of
/// the existing model without disturbing what it already knows.
fn next_model(model: Option<Model>, ds: &Datasets, h: &Hyper) -> Model {
    let mut src: Vec<String> = Vec::new();
    let mut tgt: Vec<String> = Vec::new();
    if let Some(m) = &model {
        src.extend(m.src_vocab().tokens().iter().cloned());
        tgt.extend(m.tgt_vocab().tokens().iter().cloned());
    }
    for p in ds.train.iter().chain(ds.val.iter()) {
        src.extend(p.low.tokens().iter().cloned());
        tgt.extend(p.high.tokens().iter().cloned());
    }
    let (src, tgt) = (Vocab::new(src), Vocab::new(tgt));
    match model {
        None => Model::new(src, tgt, h.clone()),
        Some(m) => m.extend_vocab(src, tgt, h.seed).expect("union vocabulary covers the old one"),
    }
}

/// On-disk layout of one run.
struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn create(root: &Path, cfg: &LoopConfig) -> Result<RunDir, ConfigError> {
        std::fs::create_dir_all(root.join("datasets"))?;
        std::fs::create_dir_all(root.join("checkpoints"))?;
        let dir = RunDir { root: root.to_path_buf() };
        dir.write_config(cfg)?;
        Ok(dir)
    }

    fn write_config(&self, cfg: &LoopConfig) -> Result<(), ConfigError> {
        let limit = match cfg.iteration_limit {
            Some(n) => n.to_string(),
            None => "none".into(),
        };
        let text = format!(
            "initial_train={}\nper_iter_train={}\nval_target={}\nkeep_fraction={}\n\
             success_threshold={}\npatience_iters={}\niteration_limit={}\nbeam={}\n\
             threads={}\noptimize={}\nseed={}\n\
             grammar.level={}\ngrammar.max_statements={}\ngrammar.max_expr_depth={}\n\
             grammar.num_variables={}\ngrammar.number_range_max={}\n\
             hyper.hidden={}\nhyper.embedding={}\nhyper.batch={}\nhyper.validate_every={}\n\
             hyper.patience={}\nhyper.max_epochs={}\nhyper.learning_rate={}\n",
            cfg.initial_train,
            cfg.per_iter_train,
            cfg.val_target,
            cfg.keep_fraction,
            cfg.success_threshold,
            cfg.patience_iters,
            limit,
            cfg.beam,
            cfg.threads,
            cfg.options.optimize,
            cfg.seed,
            cfg.grammar.level,
            cfg.grammar.max_statements,
            cfg.grammar.max_expr_depth,
            cfg.grammar.num_variables,
            cfg.grammar.number_range_max,
            cfg.hyper.hidden,
            cfg.hyper.embedding,
            cfg.hyper.batch,
            cfg.hyper.validate_every,
            cfg.hyper.patience,
            cfg.hyper.max_epochs,
            cfg.hyper.learning_rate,
        );
        std::fs::write(self.root.join("config"), text)?;
        Ok(())
    }

    fn write_inputs(&self, inputs: &[AsmProgram]) -> Result<(), ConfigError> {
        let mut text = String::new();
        for a in inputs {
            text.push_str(&a.to_string());
            text.push('\n');
        }
        std::fs::write(self.root.join("inputs"), text)?;
        Ok(())
    }

    fn write_datasets(&self, ds: &Datasets) -> Result<(), ConfigError> {
        self.write_jsonl("datasets/train.jsonl", &ds.train)?;
        self.write_jsonl("datasets/val.jsonl", &ds.val)
    }

    fn write_jsonl(&self, rel: &str, pairs: &[SamplePair]) -> Result<(), ConfigError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(self.root.join(rel))?);
        for p in pairs {
            serde_json::to_writer(&mut w, p).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("iter-{iteration}"))
    }

    fn write_report(&self, stats: &[IterationStats]) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(stats).map_err(std::io::Error::from)?;
        std::fs::write(self.root.join("report.json"), text)?;
        Ok(())
    }

    fn write_successes(&self, successes: &[Solved]) -> Result<(), ConfigError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(self.root.join("successes.jsonl"))?);
        for s in successes {
            let line = serde_json::json!({
                "input": s.input.to_string(),
                "decompiled": s.program.to_string(),
            });
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::sample_program;
    use crate::minicc::compile;

    fn stat(iteration: usize, pending: usize, solved_percent: f64) -> IterationStats {
        IterationStats {
            iteration,
            epochs: 1,
            batches: 1,
            train_seconds: 0.0,
            translate_seconds: 0.0,
            solved: 0,
            solved_percent,
            new_failures: 0,
            pending,
        }
    }

    fn tiny_grammar() -> GrammarConfig {
        GrammarConfig {
            level: 1,
            max_statements: 1,
            max_expr_depth: 1,
            num_variables: 5,
            number_range_max: 90,
            seed: 0,
        }
    }

    fn tiny_cfg() -> LoopConfig {
        LoopConfig {
            initial_train: 40,
            per_iter_train: 20,
            val_target: 8,
            keep_fraction: 0.5,
            success_threshold: 100.0,
            patience_iters: 5,
            iteration_limit: Some(1),
            beam: 2,
            threads: 1,
            grammar: tiny_grammar(),
            hyper: Hyper {
                hidden: 16,
                embedding: 12,
                batch: 8,
                validate_every: 5,
                patience: 2,
                max_epochs: 3,
                learning_rate: 5e-3,
                ..Hyper::desk()
            },
            options: CompilerOptions::optimized(),
            seed: 77,
        }
    }

    fn inputs_from(g: &GrammarConfig, seeds: std::ops::Range<u64>, want: usize) -> Vec<AsmProgram> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for seed in seeds {
            let mut gg = g.clone();
            gg.seed = seed;
            let p = sample_program(&gg);
            let a = compile(&p, CompilerOptions::optimized());
            if seen.insert(canonicalize_asm(&a).0.to_string()) {
                out.push(a);
                if out.len() == want {
                    break;
                }
            }
        }
        assert_eq!(out.len(), want, "not enough distinct inputs in the seed range");
        out
    }

    #[test]
    fn threshold_beats_every_other_stopping_rule() {
        let mut cfg = tiny_cfg();
        cfg.success_threshold = 95.0;
        cfg.patience_iters = 2;
        cfg.iteration_limit = Some(1);
        // Unchanged pending and an exhausted limit, but the percentage wins.
        let stats = vec![stat(1, 20, 40.0), stat(2, 20, 95.68), stat(3, 20, 95.68)];
        assert_eq!(check_stop(&stats, &cfg), Some(LoopStop::Threshold));
    }

    #[test]
    fn no_progress_counts_trailing_unchanged_iterations() {
        let mut cfg = tiny_cfg();
        cfg.success_threshold = 95.0;
        cfg.patience_iters = 3;
        cfg.iteration_limit = None;
        let pendings = [200, 180, 180, 180, 180];
        let stats: Vec<IterationStats> = pendings
            .iter()
            .enumerate()
            .map(|(k, &p)| stat(k + 1, p, 10.0))
            .collect();
        assert_eq!(check_stop(&stats[..4], &cfg), None, "only two flat steps so far");
        assert_eq!(check_stop(&stats, &cfg), Some(LoopStop::NoProgress));
        // Progress late in the window resets the streak.
        let moving = vec![stat(1, 200, 10.0), stat(2, 180, 10.0), stat(3, 180, 10.0), stat(4, 170, 10.0)];
        assert_eq!(check_stop(&moving, &cfg), None);
    }

    #[test]
    fn iteration_limit_is_the_last_resort() {
        let mut cfg = tiny_cfg();
        cfg.success_threshold = 95.0;
        cfg.patience_iters = 10;
        cfg.iteration_limit = Some(3);
        let stats = vec![stat(1, 30, 10.0), stat(2, 25, 20.0), stat(3, 20, 30.0)];
        assert_eq!(check_stop(&stats, &cfg), Some(LoopStop::Limit));
        cfg.iteration_limit = Some(4);
        assert_eq!(check_stop(&stats, &cfg), None);
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let cases: Vec<(&str, Box<dyn Fn(&mut LoopConfig)>)> = vec![
            ("keep_fraction 0", Box::new(|c| c.keep_fraction = 0.0)),
            ("keep_fraction 1.2", Box::new(|c| c.keep_fraction = 1.2)),
            ("threshold 0", Box::new(|c| c.success_threshold = 0.0)),
            ("threshold 100.1", Box::new(|c| c.success_threshold = 100.1)),
            ("patience 0", Box::new(|c| c.patience_iters = 0)),
            ("limit 0", Box::new(|c| c.iteration_limit = Some(0))),
            ("beam 0", Box::new(|c| c.beam = 0)),
            ("threads 0", Box::new(|c| c.threads = 0)),
            ("initial 0", Box::new(|c| c.initial_train = 0)),
            ("level 0", Box::new(|c| c.grammar.level = 0)),
        ];
        for (name, mutate) in cases {
            let mut cfg = tiny_cfg();
            mutate(&mut cfg);
            assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))), "{name} accepted");
        }
        let cfg = tiny_cfg();
        assert!(matches!(run_loop(&[], &cfg, None, None), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn preloaded_model_must_match_the_configured_sizes() {
        let cfg = tiny_cfg();
        let mut h = cfg.hyper.clone();
        h.hidden = 24;
        let m = Model::new(Vocab::new(["movl"]), Vocab::new(["="]), h);
        let inputs = inputs_from(&cfg.grammar, 50..60, 2);
        assert!(matches!(run_loop(&inputs, &cfg, Some(m), None), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn tiny_run_solves_single_assignments() {
        let dir = tempfile::tempdir().expect("tempdir");
        let g = tiny_grammar();
        let inputs = inputs_from(&g, 9000..9100, 10);
        let cfg = LoopConfig {
            initial_train: 180,
            per_iter_train: 90,
            val_target: 30,
            keep_fraction: 0.5,
            success_threshold: 80.0,
            patience_iters: 3,
            iteration_limit: Some(3),
            beam: 3,
            threads: 2,
            grammar: g,
            hyper: Hyper {
                hidden: 32,
                embedding: 24,
                batch: 16,
                validate_every: 25,
                patience: 4,
                max_epochs: 40,
                learning_rate: 6e-3,
                ..Hyper::desk()
            },
            options: CompilerOptions::optimized(),
            seed: 11,
        };
        let out = run_loop(&inputs, &cfg, None, Some(dir.path())).expect("run completes");
        assert_eq!(out.stop, LoopStop::Threshold, "stats: {:?}", out.stats);
        assert!(out.successes.len() >= 8, "solved {}", out.successes.len());
        for w in out.stats.windows(2) {
            assert!(w[1].solved >= w[0].solved, "successes are cumulative");
        }

        // The run directory has the full audit trail.
        let report: Vec<IterationStats> =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report.len(), out.stats.len());
        let config = std::fs::read_to_string(dir.path().join("config")).unwrap();
        assert!(config.contains("success_threshold=80"), "{config}");
        let train = std::fs::read_to_string(dir.path().join("datasets/train.jsonl")).unwrap();
        assert!(train.lines().count() > 0);
        for line in train.lines() {
            let _: SamplePair = serde_json::from_str(line).expect("dataset line parses");
        }
        let successes = std::fs::read_to_string(dir.path().join("successes.jsonl")).unwrap();
        assert_eq!(successes.lines().count(), out.successes.len());
        let reloaded = Model::load(&dir.path().join("checkpoints/iter-1")).expect("checkpoint loads");
        assert_eq!(reloaded.hyper().hidden, 32);
    }

    #[test]
    fn frozen_model_stops_without_progress() {
        let g = tiny_grammar();
        let inputs = inputs_from(&g, 300..400, 5);
        let cfg = LoopConfig {
            initial_train: 30,
            per_iter_train: 10,
            val_target: 5,
            keep_fraction: 0.5,
            success_threshold: 99.9,
            patience_iters: 2,
            iteration_limit: None,
            beam: 2,
            threads: 1,
            grammar: g,
            hyper: Hyper {
                hidden: 16,
                embedding: 8,
                batch: 8,
                validate_every: 1,
                patience: 1,
                max_epochs: 1,
                learning_rate: 0.0,
                ..Hyper::desk()
            },
            options: CompilerOptions::optimized(),
            seed: 5,
        };
        let out = run_loop(&inputs, &cfg, None, None).expect("run completes");
        assert_eq!(out.stop, LoopStop::NoProgress);
        assert!(out.successes.is_empty(), "a frozen random model solves nothing");
        assert_eq!(out.stats.len(), 3, "baseline plus two flat iterations");
        assert!(out.stats.iter().all(|s| s.pending == 5));
    }

    #[test]
    fn preloaded_model_gets_a_translation_pre_pass() {
        let g = tiny_grammar();
        let inputs = inputs_from(&g, 700..800, 3);
        let mut cfg = tiny_cfg();
        cfg.hyper.learning_rate = 0.0;
        cfg.hyper.validate_every = 1;
        cfg.hyper.patience = 1;
        cfg.hyper.max_epochs = 1;
        let m = Model::new(Vocab::new(["movl", ",", ";"]), Vocab::new(["=", ";"]), cfg.hyper.clone());
        let out = run_loop(&inputs, &cfg, Some(m), None).expect("run completes");
        assert_eq!(out.stats[0].iteration, 0);
        assert_eq!(out.stats[0].epochs, 0);
        assert_eq!(out.stats[0].train_seconds, 0.0);
        assert_eq!(out.stop, LoopStop::Limit);
        assert_eq!(out.stats.len(), 2, "pre-pass plus the single allowed iteration");
    }

    #[test]
    fn runs_are_deterministic() {
        let g = tiny_grammar();
        let inputs = inputs_from(&g, 40..140, 4);
        let mut cfg = tiny_cfg();
        cfg.threads = 2;
        let run = || run_loop(&inputs, &cfg, None, None).expect("run completes");
        let (a, b) = (run(), run());
        let key = |o: &RunOutcome| {
            (
                o.stats
                    .iter()
                    .map(|s| (s.iteration, s.epochs, s.batches, s.solved, s.new_failures, s.pending))
                    .collect::<Vec<_>>(),
                o.successes.iter().map(|s| (s.index, s.program.to_string())).collect::<Vec<_>>(),
                o.stop,
            )
        };
        assert_eq!(key(&a), key(&b));
        let dir = tempfile::tempdir().expect("tempdir");
        a.model.save(&dir.path().join("a")).unwrap();
        b.model.save(&dir.path().join("b")).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("a")).unwrap(),
            std::fs::read(dir.path().join("b")).unwrap(),
            "identical seeds give identical weights"
        );
    }
}
