//! Layered configuration: preset first, then the `key=value` file, then
//! flags. The file format is exactly what `run` echoes into its run
//! directory, so a run's `config` can be fed back through `--config`.

use crate::{Failure, Knobs};
use relift::driver::LoopConfig;
use std::path::Path;

pub fn resolve(knobs: &Knobs) -> Result<LoopConfig, Failure> {
    let mut cfg = preset(&knobs.preset)?;
    if let Some(path) = &knobs.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        apply_file(&mut cfg, &text, path)?;
    }
    apply_flags(&mut cfg, knobs)?;
    Ok(cfg)
}

fn preset(name: &str) -> Result<LoopConfig, Failure> {
    match name {
        "paper" => Ok(LoopConfig::paper()),
        "desk" => Ok(LoopConfig::desk()),
        other => Err(Failure::Config(format!(
            "unknown preset `{other}`; expected `paper` or `desk`"
        ))),
    }
}

pub fn apply_file(cfg: &mut LoopConfig, text: &str, path: &Path) -> Result<(), Failure> {
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad_line(path, index, "expected key=value"))?;
        apply_kv(cfg, key.trim(), value.trim()).map_err(|m| bad_line(path, index, &m))?;
    }
    Ok(())
}

fn bad_line(path: &Path, index: usize, message: &str) -> Failure {
    Failure::Config(format!("{}:{}: {message}", path.display(), index + 1))
}

fn apply_kv(cfg: &mut LoopConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "initial_train" => cfg.initial_train = parse(key, value)?,
        "per_iter_train" => cfg.per_iter_train = parse(key, value)?,
        "val_target" => cfg.val_target = parse(key, value)?,
        "keep_fraction" => cfg.keep_fraction = parse(key, value)?,
        "success_threshold" => cfg.success_threshold = parse(key, value)?,
        "patience_iters" => cfg.patience_iters = parse(key, value)?,
        "iteration_limit" => cfg.iteration_limit = parse_limit(value)?,
        "beam" => cfg.beam = parse(key, value)?,
        "threads" => cfg.threads = parse(key, value)?,
        "optimize" => cfg.options.optimize = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "grammar.level" => cfg.grammar.level = parse(key, value)?,
        "grammar.max_statements" => cfg.grammar.max_statements = parse(key, value)?,
        "grammar.max_expr_depth" => cfg.grammar.max_expr_depth = parse(key, value)?,
        "grammar.num_variables" => cfg.grammar.num_variables = parse(key, value)?,
        "grammar.number_range_max" => cfg.grammar.number_range_max = parse(key, value)?,
        "hyper.hidden" => cfg.hyper.hidden = parse(key, value)?,
        "hyper.embedding" => cfg.hyper.embedding = parse(key, value)?,
        "hyper.batch" => cfg.hyper.batch = parse(key, value)?,
        "hyper.validate_every" => cfg.hyper.validate_every = parse(key, value)?,
        "hyper.patience" => cfg.hyper.patience = parse(key, value)?,
        "hyper.max_epochs" => cfg.hyper.max_epochs = parse(key, value)?,
        "hyper.learning_rate" => cfg.hyper.learning_rate = parse(key, value)?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("bad value `{value}` for `{key}`"))
}

pub fn parse_limit(value: &str) -> Result<Option<usize>, String> {
    if value == "none" {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| format!("bad value `{value}` for `iteration_limit`"))
}

fn apply_flags(cfg: &mut LoopConfig, k: &Knobs) -> Result<(), Failure> {
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(cfg.seed, k.seed);
    set!(cfg.initial_train, k.initial_train);
    set!(cfg.per_iter_train, k.per_iter_train);
    set!(cfg.val_target, k.val_target);
    set!(cfg.keep_fraction, k.keep_fraction);
    set!(cfg.success_threshold, k.success_threshold);
    set!(cfg.patience_iters, k.patience_iters);
    if let Some(v) = &k.iteration_limit {
        cfg.iteration_limit = parse_limit(v).map_err(Failure::Config)?;
    }
    set!(cfg.beam, k.beam);
    set!(cfg.threads, k.threads);
    set!(cfg.options.optimize, k.optimize);
    set!(cfg.grammar.level, k.level);
    set!(cfg.grammar.max_statements, k.max_statements);
    set!(cfg.grammar.max_expr_depth, k.max_expr_depth);
    set!(cfg.grammar.num_variables, k.num_variables);
    set!(cfg.grammar.number_range_max, k.number_range_max);
    set!(cfg.hyper.hidden, k.hidden);
    set!(cfg.hyper.embedding, k.embedding);
    set!(cfg.hyper.batch, k.batch);
    set!(cfg.hyper.validate_every, k.validate_every);
    set!(cfg.hyper.patience, k.patience);
    set!(cfg.hyper.max_epochs, k.max_epochs);
    set!(cfg.hyper.learning_rate, k.learning_rate);
    Ok(())
}
