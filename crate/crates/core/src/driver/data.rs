//! Dataset bookkeeping for the retraining loop.
//!
//! Training pairs are canonicalized token streams: the low side is the
//! cleaned, name-abstracted, digit-split assembly text; the high side is the
//! digit-split post-order source, renamed through the same name map so both
//! sides agree on variable identities. The invariant every pair satisfies is
//! that its low side equals the canonical compilation of its high side.

use crate::canonical::{abstract_names, split_digits, to_postorder, NameMap, TokenSeq};
use crate::lang::{sample_program, GrammarConfig, Program};
use crate::minicc::{clean, compile, AsmProgram, CompilerOptions};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Where a training pair came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Random,
    FailedTranslation,
}

/// One (source, assembly) training pair in canonical token form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "RawPair", try_from = "RawPair")]
pub struct SamplePair {
    pub high: TokenSeq,
    pub low: TokenSeq,
    pub provenance: Provenance,
}

/// Wire form: token streams as single space-separated strings.
#[derive(Serialize, Deserialize)]
struct RawPair {
    high: String,
    low: String,
    provenance: Provenance,
}

impl From<SamplePair> for RawPair {
    fn from(p: SamplePair) -> RawPair {
        RawPair { high: p.high.to_string(), low: p.low.to_string(), provenance: p.provenance }
    }
}

impl TryFrom<RawPair> for SamplePair {
    type Error = std::convert::Infallible;
    fn try_from(r: RawPair) -> Result<SamplePair, Self::Error> {
        Ok(SamplePair {
            high: TokenSeq::from_text(&r.high),
            low: TokenSeq::from_text(&r.low),
            provenance: r.provenance,
        })
    }
}

/// Canonicalizes an assembly listing for translation: strip metadata, replace
/// names with generic ones, split multi-digit numbers. Returns the name map
/// needed to restore the original names afterwards.
pub fn canonicalize_asm(a: &AsmProgram) -> (TokenSeq, NameMap) {
    let tokens = TokenSeq::from_text(&clean(a).to_string());
    let (generic, map) = abstract_names(&tokens);
    (split_digits(&generic), map)
}

/// Builds the canonical training pair for `p`: compile, canonicalize the
/// assembly, and carry the assembly-side renaming over to the source tokens.
pub fn pair_from_program(p: &Program, options: CompilerOptions, provenance: Provenance) -> SamplePair {
    let asm = compile(p, options);
    let (low, map) = canonicalize_asm(&asm);
    let post = to_postorder(p);
    let renamed: Vec<String> = post
        .iter()
        .map(|t| map.to_generic(t).unwrap_or(t).to_string())
        .collect();
    let high = split_digits(&TokenSeq::new(renamed));
    SamplePair { high, low, provenance }
}

type PairKey = (String, String);

fn key(p: &SamplePair) -> PairKey {
    (p.high.to_string(), p.low.to_string())
}

/// The mutable train/validation pool, with the test set's low sides pinned so
/// generated data can never collide with an evaluation input.
pub struct Datasets {
    pub train: Vec<SamplePair>,
    pub val: Vec<SamplePair>,
    train_keys: BTreeSet<PairKey>,
    val_keys: BTreeSet<PairKey>,
    test_lows: BTreeSet<String>,
}

impl Datasets {
    pub fn new(test_lows: impl IntoIterator<Item = String>) -> Datasets {
        Datasets {
            train: Vec::new(),
            val: Vec::new(),
            train_keys: BTreeSet::new(),
            val_keys: BTreeSet::new(),
            test_lows: test_lows.into_iter().collect(),
        }
    }

    fn admissible(&self, p: &SamplePair) -> bool {
        let k = key(p);
        !self.train_keys.contains(&k) && !self.val_keys.contains(&k) && !self.test_lows.contains(&k.1)
    }

    fn push_train(&mut self, p: SamplePair) -> bool {
        if !self.admissible(&p) {
            return false;
        }
        self.train_keys.insert(key(&p));
        self.train.push(p);
        true
    }

    /// One dataset-extension step: decay old random samples, keep failures at
    /// full weight, top up with freshly generated pairs, and refresh the
    /// validation pool to `val_target`.
    pub fn extend(
        &mut self,
        failures: &[SamplePair],
        fresh_train: usize,
        val_target: usize,
        keep_fraction: f64,
        grammar: &GrammarConfig,
        options: CompilerOptions,
        rng: &mut ChaCha8Rng,
    ) {
        // Random-provenance samples survive with probability keep_fraction;
        // failure-provenance pairs are never dropped.
        self.train.retain(|p| p.provenance == Provenance::FailedTranslation || rng.gen::<f64>() < keep_fraction);
        self.train_keys = self.train.iter().map(key).collect();
        for f in failures {
            let mut f = f.clone();
            f.provenance = Provenance::FailedTranslation;
            self.push_train(f);
        }
        self.sample_into(fresh_train, true, grammar, options, rng);
        // Validation: extend with fresh samples, shuffle, truncate to size.
        self.sample_into(val_target, false, grammar, options, rng);
        self.val.shuffle(rng);
        self.val.truncate(val_target);
        self.val_keys = self.val.iter().map(key).collect();
    }

    /// Generates `count` fresh random pairs into train or val, skipping
    /// duplicates and test collisions. Gives up after a bounded number of
    /// attempts so tiny grammars cannot loop forever.
    fn sample_into(
        &mut self,
        count: usize,
        into_train: bool,
        grammar: &GrammarConfig,
        options: CompilerOptions,
        rng: &mut ChaCha8Rng,
    ) {
        let mut added = 0;
        let mut attempts = 0usize;
        let limit = count.saturating_mul(200).max(1000);
        while added < count && attempts < limit {
            attempts += 1;
            let mut g = grammar.clone();
            g.seed = rng.gen();
            let p = sample_program(&g);
            let pair = pair_from_program(&p, options, Provenance::Random);
            if into_train {
                if self.push_train(pair) {
                    added += 1;
                }
            } else {
                if !self.admissible(&pair) {
                    continue;
                }
                self.val_keys.insert(key(&pair));
                self.val.push(pair);
                added += 1;
            }
        }
    }

    /// Training/validation pairs as plain token sequences for the translator:
    /// source side is the assembly, target side is the source program.
    pub fn token_pairs(set: &[SamplePair]) -> Vec<(Vec<String>, Vec<String>)> {
        set.iter().map(|p| (p.low.tokens().to_vec(), p.high.tokens().to_vec())).collect()
    }

    /// True when no train or val pair collides with the test inputs or each other.
    pub fn disjoint(&self) -> bool {
        self.train_keys.iter().all(|k| !self.val_keys.contains(k) && !self.test_lows.contains(&k.1))
            && self.val_keys.iter().all(|k| !self.test_lows.contains(&k.1))
    }
}
