//! Attentional encoder-decoder translation, written from scratch.
//!
//! The model reads a canonicalized assembly token stream and emits a
//! canonicalized source token stream. It is a single-layer LSTM
//! encoder-decoder with general (bilinear) attention, trained by Adam on
//! per-token cross entropy with greedy exact-match validation and patience
//! stopping. Inference is beam search with length-normalized scores.
//!
//! The struct is generic over the scalar type so the same code runs in `f32`
//! for training speed and in `f64` where finite-difference accuracy matters;
//! `crate::Model` and `crate::ModelF64` are the two instantiations.

mod beam;
mod net;
mod train;

pub use beam::Hypothesis;
pub use train::{StopReason, TokenPair, TrainReport};

use net::{s, Param};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

/// Padding id, reserved in every vocabulary.
pub const PAD: usize = 0;
/// Sequence-start id fed to the decoder before the first real token.
pub const BOS: usize = 1;
/// Sequence-end id; emitting it completes a hypothesis.
pub const EOS: usize = 2;
/// Id assigned to tokens missing from the vocabulary.
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// A token/id bijection with four fixed reserved entries.
///
/// Ids 0..4 are always `<pad>`, `<bos>`, `<eos>`, `<unk>` in that order, so
/// extending a vocabulary never moves the reserved ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from tokens in first-occurrence order; duplicates
    /// and the reserved markers themselves are ignored.
    pub fn new<I, T>(tokens: I) -> Vocab
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut v = Vocab { tokens: Vec::new(), index: BTreeMap::new() };
        for r in RESERVED {
            v.index.insert(r.to_string(), v.tokens.len());
            v.tokens.push(r.to_string());
        }
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved entries are always present
    }

    /// Id of `token`, or [`UNK`] if absent.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// All tokens including the reserved prefix, in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&k| self.tokens[k].clone()).collect()
    }

    /// True when every token of `old` is present here.
    pub fn covers(&self, old: &Vocab) -> bool {
        old.tokens.iter().all(|t| self.index.contains_key(t))
    }
}

/// Model and training-schedule settings.
///
/// Only single-layer encoders and decoders are implemented; the layer counts
/// are kept explicit so checkpoints record them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hidden: usize,
    pub embedding: usize,
    /// Beam width used by default when translating.
    pub beam: usize,
    pub batch: usize,
    /// Run validation every this many training batches.
    pub validate_every: usize,
    /// Stop after this many consecutive validations without improvement.
    pub patience: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Hyper {
    /// Full-size configuration: hidden 100, embedding 300.
    pub fn paper() -> Hyper {
        Hyper {
            encoder_layers: 1,
            decoder_layers: 1,
            hidden: 100,
            embedding: 300,
            beam: 5,
            batch: 32,
            validate_every: 1000,
            patience: 10,
            max_epochs: 2000,
            learning_rate: 1e-3,
            seed: 0,
        }
    }

    /// Scaled-down configuration for workstation runs and tests.
    pub fn desk() -> Hyper {
        Hyper {
            encoder_layers: 1,
            decoder_layers: 1,
            hidden: 64,
            embedding: 64,
            beam: 5,
            batch: 32,
            validate_every: 100,
            patience: 4,
            max_epochs: 2000,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Returned when a vocabulary extension drops tokens the model already knows.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabShrunk {
    #[error("source vocabulary no longer contains {0:?}")]
    Source(String),
    #[error("target vocabulary no longer contains {0:?}")]
    Target(String),
}

/// Checkpoint file problems.
#[derive(Debug, thiserror::Error)]
pub enum CorruptCheckpoint {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint (bad magic bytes)")]
    Magic,
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

const MAGIC: &[u8; 4] = b"RLNM";
const FORMAT_VERSION: u32 = 1;
/// Attention form recorded in every checkpoint header.
const ATTENTION: &str = "general";

/// The full parameter set, in checkpoint order.
pub(crate) struct Params<S> {
    pub src_emb: Param<S>,
    pub tgt_emb: Param<S>,
    pub enc_w: Param<S>,
    pub enc_u: Param<S>,
    pub enc_b: Param<S>,
    pub dec_w: Param<S>,
    pub dec_u: Param<S>,
    pub dec_b: Param<S>,
    pub att_w: Param<S>,
    pub comb_w: Param<S>,
    pub comb_b: Param<S>,
    pub out_w: Param<S>,
    pub out_b: Param<S>,
}

impl<S: Float> Params<S> {
    fn all(&self) -> [&Param<S>; 13] {
        [
            &self.src_emb, &self.tgt_emb, &self.enc_w, &self.enc_u, &self.enc_b, &self.dec_w,
            &self.dec_u, &self.dec_b, &self.att_w, &self.comb_w, &self.comb_b, &self.out_w,
            &self.out_b,
        ]
    }

    fn all_mut(&mut self) -> [&mut Param<S>; 13] {
        [
            &mut self.src_emb, &mut self.tgt_emb, &mut self.enc_w, &mut self.enc_u,
            &mut self.enc_b, &mut self.dec_w, &mut self.dec_u, &mut self.dec_b, &mut self.att_w,
            &mut self.comb_w, &mut self.comb_b, &mut self.out_w, &mut self.out_b,
        ]
    }
}

/// Attentional encoder-decoder translation model, generic over scalar type.
pub struct ModelOf<S> {
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    hyper: Hyper,
    params: Params<S>,
    /// Adam step counter, shared by all parameters.
    adam_t: u64,
}

impl<S: Float> ModelOf<S> {
    /// Creates a model with scaled-uniform initial weights drawn
    /// deterministically from `h.seed`.
    pub fn new(src_vocab: Vocab, tgt_vocab: Vocab, h: Hyper) -> ModelOf<S> {
        assert!(h.encoder_layers == 1 && h.decoder_layers == 1, "only single-layer models are implemented");
        assert!(h.hidden >= 1 && h.embedding >= 1 && h.beam >= 1 && h.batch >= 1);
        assert!(h.validate_every >= 1 && h.patience >= 1 && h.max_epochs >= 1);
        let params = Self::init_params(src_vocab.len(), tgt_vocab.len(), &h, h.seed);
        ModelOf { src_vocab, tgt_vocab, hyper: h, params, adam_t: 0 }
    }

    fn init_params(src_len: usize, tgt_len: usize, h: &Hyper, seed: u64) -> Params<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = h.embedding;
        let hd = h.hidden;
        let mut init = |name: &'static str, rows, cols| -> Param<S> {
            let mut p = Param::zeros(name, rows, cols);
            // Uniform in +-sqrt(6 / (rows + cols)); biases stay zero.
            if !name.ends_with("_b") {
                let r = (6.0 / (rows + cols) as f64).sqrt();
                for w in p.w.iter_mut() {
                    *w = s(rng.gen_range(-r..r));
                }
            }
            p
        };
        Params {
            src_emb: init("src_emb", src_len, e),
            tgt_emb: init("tgt_emb", tgt_len, e),
            enc_w: init("enc_w", 4 * hd, e),
            enc_u: init("enc_u", 4 * hd, hd),
            enc_b: init("enc_b", 4 * hd, 1),
            dec_w: init("dec_w", 4 * hd, e),
            dec_u: init("dec_u", 4 * hd, hd),
            dec_b: init("dec_b", 4 * hd, 1),
            att_w: init("att_w", hd, hd),
            comb_w: init("comb_w", hd, 2 * hd),
            comb_b: init("comb_b", hd, 1),
            out_w: init("out_w", tgt_len, hd),
            out_b: init("out_b", tgt_len, 1),
        }
    }

    pub fn src_vocab(&self) -> &Vocab {
        &self.src_vocab
    }

    pub fn tgt_vocab(&self) -> &Vocab {
        &self.tgt_vocab
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    /// Names and shapes of every parameter tensor, in checkpoint order.
    pub fn parameter_shapes(&self) -> Vec<(&'static str, usize, usize)> {
        self.params.all().iter().map(|p| (p.name, p.rows, p.cols)).collect()
    }

    /// Grows the vocabularies without losing what the model has learned.
    ///
    /// Rows for retained tokens (embeddings, output projection) are copied
    /// verbatim together with their optimizer moments; rows for new tokens
    /// get fresh random values drawn from `seed`. Every other parameter is
    /// copied unchanged. Passing the identical vocabularies therefore yields
    /// a parameter-identical model.
    pub fn extend_vocab(&self, src_vocab: Vocab, tgt_vocab: Vocab, seed: u64) -> Result<ModelOf<S>, VocabShrunk> {
        if let Some(t) = self.src_vocab.tokens().iter().find(|t| !src_vocab.contains(t)) {
            return Err(VocabShrunk::Source(t.clone()));
        }
        if let Some(t) = self.tgt_vocab.tokens().iter().find(|t| !tgt_vocab.contains(t)) {
            return Err(VocabShrunk::Target(t.clone()));
        }
        let mut params = Self::init_params(src_vocab.len(), tgt_vocab.len(), &self.hyper, seed);
        // Row-indexed parameters follow their token across any reindexing.
        let copy_rows = |next: &mut Param<S>, old: &Param<S>, new_v: &Vocab, old_v: &Vocab| {
            for (old_id, tok) in old_v.tokens().iter().enumerate() {
                let new_id = new_v.id(tok);
                for c in 0..old.cols {
                    next.w[new_id * next.cols + c] = old.w[old_id * old.cols + c];
                    next.m[new_id * next.cols + c] = old.m[old_id * old.cols + c];
                    next.v[new_id * next.cols + c] = old.v[old_id * old.cols + c];
                }
            }
        };
        copy_rows(&mut params.src_emb, &self.params.src_emb, &src_vocab, &self.src_vocab);
        copy_rows(&mut params.tgt_emb, &self.params.tgt_emb, &tgt_vocab, &self.tgt_vocab);
        copy_rows(&mut params.out_w, &self.params.out_w, &tgt_vocab, &self.tgt_vocab);
        copy_rows(&mut params.out_b, &self.params.out_b, &tgt_vocab, &self.tgt_vocab);
        for (next, old) in [
            (&mut params.enc_w, &self.params.enc_w),
            (&mut params.enc_u, &self.params.enc_u),
            (&mut params.enc_b, &self.params.enc_b),
            (&mut params.dec_w, &self.params.dec_w),
            (&mut params.dec_u, &self.params.dec_u),
            (&mut params.dec_b, &self.params.dec_b),
            (&mut params.att_w, &self.params.att_w),
            (&mut params.comb_w, &self.params.comb_w),
            (&mut params.comb_b, &self.params.comb_b),
        ] {
            next.w.copy_from_slice(&old.w);
            next.m.copy_from_slice(&old.m);
            next.v.copy_from_slice(&old.v);
        }
        Ok(ModelOf { src_vocab, tgt_vocab, hyper: self.hyper.clone(), params, adam_t: self.adam_t })
    }

    /// Serializes the model to `path`.
    ///
    /// Layout: magic, format version, attention form, hyperparameters, both
    /// vocabularies, the parameter tensors with their Adam moments as
    /// little-endian `f32`, and a trailing FNV-1a checksum of everything
    /// before it.
    pub fn save(&self, path: &Path) -> Result<(), CorruptCheckpoint> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_str(&mut out, ATTENTION);
        let h = &self.hyper;
        for n in [h.encoder_layers, h.decoder_layers, h.hidden, h.embedding, h.beam, h.batch, h.validate_every, h.patience, h.max_epochs] {
            put_u32(&mut out, n as u32);
        }
        out.extend_from_slice(&h.learning_rate.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        put_vocab(&mut out, &self.src_vocab);
        put_vocab(&mut out, &self.tgt_vocab);
        out.extend_from_slice(&self.adam_t.to_le_bytes());
        put_u32(&mut out, self.params.all().len() as u32);
        for p in self.params.all() {
            put_str(&mut out, p.name);
            put_u32(&mut out, p.rows as u32);
            put_u32(&mut out, p.cols as u32);
            for buf in [&p.w, &p.m, &p.v] {
                for &x in buf.iter() {
                    let x: f32 = num_traits::cast(x).expect("weight out of f32 range");
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a model back from [`Self::save`] output.
    pub fn load(path: &Path) -> Result<ModelOf<S>, CorruptCheckpoint> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < MAGIC.len() + 12 {
            return Err(CorruptCheckpoint::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let sum = u64::from_le_bytes(tail.try_into().expect("eight tail bytes"));
        if body.len() < 4 || &body[..4] != MAGIC {
            return Err(CorruptCheckpoint::Magic);
        }
        if fnv1a(body) != sum {
            return Err(CorruptCheckpoint::Checksum);
        }
        let mut cur = Cursor { bytes: &body[4..] };
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(CorruptCheckpoint::Version { found: version, expected: FORMAT_VERSION });
        }
        let attention = cur.str()?;
        if attention != ATTENTION {
            return Err(CorruptCheckpoint::Malformed(format!("unknown attention form {attention:?}")));
        }
        let mut counts = [0usize; 9];
        for c in counts.iter_mut() {
            *c = cur.u32()? as usize;
        }
        let learning_rate = f64::from_le_bytes(cur.take(8)?.try_into().expect("eight bytes"));
        let seed = u64::from_le_bytes(cur.take(8)?.try_into().expect("eight bytes"));
        let hyper = Hyper {
            encoder_layers: counts[0],
            decoder_layers: counts[1],
            hidden: counts[2],
            embedding: counts[3],
            beam: counts[4],
            batch: counts[5],
            validate_every: counts[6],
            patience: counts[7],
            max_epochs: counts[8],
            learning_rate,
            seed,
        };
        let src_vocab = cur.vocab()?;
        let tgt_vocab = cur.vocab()?;
        let adam_t = u64::from_le_bytes(cur.take(8)?.try_into().expect("eight bytes"));
        let mut params = Self::init_params(src_vocab.len(), tgt_vocab.len(), &hyper, hyper.seed);
        let count = cur.u32()? as usize;
        if count != params.all().len() {
            return Err(CorruptCheckpoint::Malformed(format!("expected {} tensors, found {count}", params.all().len())));
        }
        for p in params.all_mut() {
            let name = cur.str()?;
            if name != p.name {
                return Err(CorruptCheckpoint::Malformed(format!("tensor {name:?} where {:?} belongs", p.name)));
            }
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            if rows != p.rows || cols != p.cols {
                return Err(CorruptCheckpoint::Malformed(format!("tensor {name:?} is {rows}x{cols}, expected {}x{}", p.rows, p.cols)));
            }
            for buf in [&mut p.w, &mut p.m, &mut p.v] {
                for x in buf.iter_mut() {
                    let raw = f32::from_le_bytes(cur.take(4)?.try_into().expect("four bytes"));
                    *x = s(raw as f64);
                }
            }
            p.g.iter_mut().for_each(|g| *g = S::zero());
        }
        if !cur.bytes.is_empty() {
            return Err(CorruptCheckpoint::Malformed(format!("{} trailing bytes", cur.bytes.len())));
        }
        Ok(ModelOf { src_vocab, tgt_vocab, hyper, params, adam_t })
    }
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, t: &str) {
    put_u32(out, t.len() as u32);
    out.extend_from_slice(t.as_bytes());
}

fn put_vocab(out: &mut Vec<u8>, v: &Vocab) {
    put_u32(out, v.len() as u32);
    for t in v.tokens() {
        put_str(out, t);
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorruptCheckpoint> {
        if self.bytes.len() < n {
            return Err(CorruptCheckpoint::Truncated);
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CorruptCheckpoint> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn str(&mut self) -> Result<String, CorruptCheckpoint> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CorruptCheckpoint::Malformed("non-utf8 string".into()))
    }

    fn vocab(&mut self) -> Result<Vocab, CorruptCheckpoint> {
        let n = self.u32()? as usize;
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            tokens.push(self.str()?);
        }
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED.map(String::from) {
            return Err(CorruptCheckpoint::Malformed("vocabulary lacks reserved entries".into()));
        }
        Ok(Vocab::new(tokens.split_off(RESERVED.len())))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_vocabs() -> (Vocab, Vocab) {
        let src = Vocab::new(["movl", "addl", "eax", "X0", "X1", "1", "4", ","]);
        let tgt = Vocab::new(["X0", "X1", "=", "+", "1", "4", ";"]);
        (src, tgt)
    }

    fn tiny_hyper() -> Hyper {
        let mut h = Hyper::desk();
        h.hidden = 8;
        h.embedding = 6;
        h.seed = 11;
        h
    }

    #[test]
    fn reserved_ids_are_stable() {
        let v = Vocab::new(["alpha", "beta"]);
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.id("<bos>"), BOS);
        assert_eq!(v.id("</s>"), UNK); // not a token of this scheme
        assert_eq!(v.id("<eos>"), EOS);
        assert_eq!(v.id("<unk>"), UNK);
        assert_eq!(v.id("alpha"), 4);
        assert_eq!(v.id("beta"), 5);
        assert_eq!(v.id("gamma"), UNK);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn encode_decode_round_trip() {
        let v = Vocab::new(["x", "y", "z", "y"]);
        assert_eq!(v.len(), 7); // duplicate ignored
        let toks: Vec<String> = ["z", "x", "w"].iter().map(|s| s.to_string()).collect();
        let ids = v.encode(&toks);
        assert_eq!(ids, vec![6, 4, UNK]);
        assert_eq!(v.decode(&ids), vec!["z", "x", "<unk>"]);
    }

    #[test]
    fn initialization_is_deterministic() {
        let (src, tgt) = small_vocabs();
        let a = ModelOf::<f32>::new(src.clone(), tgt.clone(), tiny_hyper());
        let b = ModelOf::<f32>::new(src, tgt, tiny_hyper());
        for (pa, pb) in a.params.all().iter().zip(b.params.all().iter()) {
            assert_eq!(pa.w, pb.w, "{} differs across identically seeded builds", pa.name);
        }
    }

    #[test]
    fn parameter_shapes_follow_vocabularies_and_sizes() {
        let (src, tgt) = small_vocabs();
        let h = tiny_hyper();
        let m = ModelOf::<f32>::new(src.clone(), tgt.clone(), h.clone());
        let shapes: BTreeMap<_, _> = m.parameter_shapes().into_iter().map(|(n, r, c)| (n, (r, c))).collect();
        assert_eq!(shapes["src_emb"], (src.len(), h.embedding));
        assert_eq!(shapes["tgt_emb"], (tgt.len(), h.embedding));
        assert_eq!(shapes["enc_w"], (4 * h.hidden, h.embedding));
        assert_eq!(shapes["enc_u"], (4 * h.hidden, h.hidden));
        assert_eq!(shapes["att_w"], (h.hidden, h.hidden));
        assert_eq!(shapes["comb_w"], (h.hidden, 2 * h.hidden));
        assert_eq!(shapes["out_w"], (tgt.len(), h.hidden));
        assert_eq!(shapes["out_b"], (tgt.len(), 1));
    }

    #[test]
    fn extension_with_identical_vocabs_is_identity() {
        let (src, tgt) = small_vocabs();
        let m = ModelOf::<f32>::new(src.clone(), tgt.clone(), tiny_hyper());
        let m2 = m.extend_vocab(src, tgt, 999).expect("same vocabs");
        for (pa, pb) in m.params.all().iter().zip(m2.params.all().iter()) {
            assert_eq!(pa.w, pb.w, "{} changed under identity extension", pa.name);
            assert_eq!(pa.m, pb.m);
        }
    }

    #[test]
    fn extension_preserves_rows_and_moments_of_known_tokens() {
        let (src, tgt) = small_vocabs();
        let mut m = ModelOf::<f32>::new(src.clone(), tgt.clone(), tiny_hyper());
        // Fake some training history so moment preservation is observable.
        for p in m.params.all_mut() {
            for k in 0..p.w.len() {
                p.m[k] = 0.25 + k as f32;
                p.v[k] = 0.5 + k as f32;
            }
        }
        m.adam_t = 17;
        let mut src_plus: Vec<String> = src.tokens()[4..].to_vec();
        src_plus.push("imull".into());
        let mut tgt_plus: Vec<String> = tgt.tokens()[4..].to_vec();
        tgt_plus.push("*".into());
        let m2 = m.extend_vocab(Vocab::new(src_plus), Vocab::new(tgt_plus), 7).expect("superset");
        assert_eq!(m2.adam_t, 17);
        assert_eq!(m2.src_vocab.len(), src.len() + 1);
        for tok in src.tokens() {
            let (a, b) = (src.id(tok), m2.src_vocab.id(tok));
            assert_eq!(m.params.src_emb.row(a), m2.params.src_emb.row(b), "src row for {tok:?}");
        }
        for tok in tgt.tokens() {
            let (a, b) = (tgt.id(tok), m2.tgt_vocab.id(tok));
            assert_eq!(m.params.out_w.row(a), m2.params.out_w.row(b), "output row for {tok:?}");
            assert_eq!(m.params.out_w.m[a * m.params.out_w.cols..(a + 1) * m.params.out_w.cols],
                       m2.params.out_w.m[b * m2.params.out_w.cols..(b + 1) * m2.params.out_w.cols]);
        }
        assert_eq!(m.params.enc_u.w, m2.params.enc_u.w);
        assert_eq!(m.params.enc_u.m, m2.params.enc_u.m);
        // The new token's row exists and differs from every retained row.
        let new_id = m2.tgt_vocab.id("*");
        assert_eq!(new_id, m2.tgt_vocab.len() - 1);
    }

    #[test]
    fn extension_rejects_shrinking() {
        let (src, tgt) = small_vocabs();
        let m = ModelOf::<f32>::new(src.clone(), tgt.clone(), tiny_hyper());
        let less = Vocab::new(["movl"]);
        match m.extend_vocab(less, tgt.clone(), 0) {
            Err(VocabShrunk::Source(t)) => assert!(src.contains(&t)),
            other => panic!("expected source shrink error, got {:?}", other.err()),
        }
        let less_tgt = Vocab::new(["="]);
        assert!(matches!(m.extend_vocab(src, less_tgt, 0), Err(VocabShrunk::Target(_))));
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly() {
        let dir = tempdir().expect("tempdir");
        let path = dir.path().join("model.ckpt");
        let (src, tgt) = small_vocabs();
        let mut m = ModelOf::<f32>::new(src, tgt, tiny_hyper());
        m.adam_t = 3;
        m.save(&path).expect("save");
        let loaded = ModelOf::<f32>::load(&path).expect("load");
        assert_eq!(loaded.adam_t, 3);
        assert_eq!(loaded.hyper, m.hyper);
        assert_eq!(loaded.src_vocab, m.src_vocab);
        for (pa, pb) in m.params.all().iter().zip(loaded.params.all().iter()) {
            assert_eq!(pa.w, pb.w, "{} not restored", pa.name);
            assert_eq!(pa.m, pb.m);
            assert_eq!(pa.v, pb.v);
        }
        // A second save of the loaded model reproduces the same bytes.
        let path2 = dir.path().join("model2.ckpt");
        loaded.save(&path2).expect("resave");
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let dir = tempdir().expect("tempdir");
        let path = dir.path().join("model.ckpt");
        let (src, tgt) = small_vocabs();
        let m = ModelOf::<f32>::new(src, tgt, tiny_hyper());
        m.save(&path).expect("save");
        let good = std::fs::read(&path).unwrap();

        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, &good[..good.len() / 2]).unwrap();
        assert!(matches!(ModelOf::<f32>::load(&bad), Err(CorruptCheckpoint::Checksum | CorruptCheckpoint::Truncated)));

        let mut flipped = good.clone();
        flipped[0] ^= 0xff;
        std::fs::write(&bad, &flipped).unwrap();
        assert!(matches!(ModelOf::<f32>::load(&bad), Err(CorruptCheckpoint::Magic)));

        let mut versioned = good.clone();
        versioned[4] = 99; // version field follows the magic
        let body_len = versioned.len() - 8;
        let sum = fnv1a(&versioned[..body_len]);
        versioned[body_len..].copy_from_slice(&sum.to_le_bytes());
        std::fs::write(&bad, &versioned).unwrap();
        match ModelOf::<f32>::load(&bad) {
            Err(CorruptCheckpoint::Version { found: 99, expected }) => assert_eq!(expected, FORMAT_VERSION),
            other => panic!("expected version error, got {:?}", other.map(|_| ())),
        }

        let mut scribbled = good;
        let mid = scribbled.len() / 2;
        scribbled[mid] ^= 0x55;
        std::fs::write(&bad, &scribbled).unwrap();
        assert!(matches!(ModelOf::<f32>::load(&bad), Err(CorruptCheckpoint::Checksum)));
    }
}
