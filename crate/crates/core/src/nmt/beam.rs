//! Beam-search inference.
//!
//! Scores accumulate as sums of per-step log-probabilities; the final ranking
//! divides by the number of emitted steps so short hypotheses do not win by
//! length alone. A hypothesis is complete once it emits the end marker; beams
//! still alive at the length cap are returned flagged instead of dropped.

use super::net::{dot, mv_acc, softmax_in_place};
use super::{ModelOf, BOS, EOS};
use num_traits::Float;

/// One ranked translation candidate.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hypothesis {
    /// Emitted tokens, without the end marker.
    pub tokens: Vec<String>,
    /// Mean log-probability per emitted step (the end marker counts as a step).
    pub score: f64,
    /// False when the hypothesis hit the length cap before emitting the end marker.
    pub complete: bool,
}

/// Encoder outputs shared by every decode step of one translation.
pub(crate) struct EncState<S> {
    /// Hidden state per source position.
    pub hs: Vec<Vec<S>>,
    /// att_w * hs[j], precomputed for the bilinear attention scores.
    pub wa: Vec<Vec<S>>,
    pub h: Vec<S>,
    pub c: Vec<S>,
}

impl<S: Float> ModelOf<S> {
    /// Default decode length cap for a source of `src_len` tokens.
    pub fn max_len_for(src_len: usize) -> usize {
        2 * src_len + 10
    }

    /// Translates `src` with the model's configured beam width.
    pub fn translate(&self, src: &[String]) -> Vec<Hypothesis> {
        self.translate_with(src, self.hyper().beam, Self::max_len_for(src.len()))
    }

    /// Translates `src` with an explicit beam width and length cap.
    ///
    /// Returns up to `beam` hypotheses sorted by descending score; ties break
    /// deterministically (fewer steps first, then token ids).
    pub fn translate_with(&self, src: &[String], beam: usize, max_len: usize) -> Vec<Hypothesis> {
        assert!(beam >= 1, "beam width must be at least 1");
        let ids = self.src_vocab().encode(src);
        self.beam_search(&ids, beam, max_len)
            .into_iter()
            .map(|f| Hypothesis {
                tokens: self.tgt_vocab().decode(&f.tokens),
                score: f.norm(),
                complete: f.complete,
            })
            .collect()
    }

    /// Sum of per-step log-probabilities of emitting exactly `tgt` and then
    /// the end marker, given `src`. This is the raw (unnormalized) score beam
    /// search assigns the same sequence.
    pub fn score_sequence(&self, src: &[String], tgt: &[String]) -> f64 {
        let src_ids = self.src_vocab().encode(src);
        let tgt_ids = self.tgt_vocab().encode(tgt);
        let enc = self.encode_src(&src_ids);
        let mut h = enc.h.clone();
        let mut c = enc.c.clone();
        let mut prev = BOS;
        let mut total = 0.0;
        for &want in tgt_ids.iter().chain([EOS].iter()) {
            let (nh, nc, logp) = self.infer_step(prev, &h, &c, &enc);
            total += logp[want];
            h = nh;
            c = nc;
            prev = want;
        }
        total
    }

    /// Runs the encoder over `ids` without keeping training caches.
    pub(crate) fn encode_src(&self, ids: &[usize]) -> EncState<S> {
        let p = &self.params;
        let hidden = self.hyper().hidden;
        let mut h = vec![S::zero(); hidden];
        let mut c = vec![S::zero(); hidden];
        let mut hs = Vec::with_capacity(ids.len());
        for &tok in ids {
            let cache = super::net::lstm_step(&p.enc_w, &p.enc_u, &p.enc_b, p.src_emb.row(tok).to_vec(), h, c);
            h = cache.h.clone();
            c = cache.c.clone();
            hs.push(cache.h);
        }
        let wa = hs
            .iter()
            .map(|hj| {
                let mut v = vec![S::zero(); hidden];
                mv_acc(&mut v, &p.att_w.w, p.att_w.rows, p.att_w.cols, hj);
                v
            })
            .collect();
        EncState { hs, wa, h, c }
    }

    /// One decoder step without caches: returns the next state and the
    /// log-probability of every target token.
    pub(crate) fn infer_step(&self, prev: usize, h: &[S], c: &[S], enc: &EncState<S>) -> (Vec<S>, Vec<S>, Vec<f64>) {
        let p = &self.params;
        let hidden = self.hyper().hidden;
        let cache = super::net::lstm_step(&p.dec_w, &p.dec_u, &p.dec_b, p.tgt_emb.row(prev).to_vec(), h.to_vec(), c.to_vec());
        let hd = &cache.h;
        // Attention over the encoder states; empty sources get a zero context.
        let mut comb_in = vec![S::zero(); 2 * hidden];
        if !enc.hs.is_empty() {
            let mut scores: Vec<S> = enc.wa.iter().map(|wh| dot(hd, wh)).collect();
            softmax_in_place(&mut scores);
            for (j, hj) in enc.hs.iter().enumerate() {
                for k in 0..hidden {
                    comb_in[k] = comb_in[k] + scores[j] * hj[k];
                }
            }
        }
        comb_in[hidden..].copy_from_slice(hd);
        let mut ht = p.comb_b.w.clone();
        mv_acc(&mut ht, &p.comb_w.w, p.comb_w.rows, p.comb_w.cols, &comb_in);
        for x in ht.iter_mut() {
            *x = x.tanh();
        }
        let mut logits = p.out_b.w.clone();
        mv_acc(&mut logits, &p.out_w.w, p.out_w.rows, p.out_w.cols, &ht);
        // Log-softmax, in f64 so beam scores accumulate consistently.
        let mut max = f64::NEG_INFINITY;
        let logits: Vec<f64> = logits.iter().map(|&x| num_traits::cast::<S, f64>(x).expect("finite logit")).collect();
        for &x in &logits {
            max = max.max(x);
        }
        let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let logp = logits.iter().map(|x| x - lse).collect();
        (cache.h, cache.c, logp)
    }

    pub(crate) fn beam_search(&self, src_ids: &[usize], beam: usize, max_len: usize) -> Vec<Finished> {
        struct Live<S> {
            tokens: Vec<usize>,
            raw: f64,
            h: Vec<S>,
            c: Vec<S>,
        }
        let enc = self.encode_src(src_ids);
        let mut live = vec![Live { tokens: Vec::new(), raw: 0.0, h: enc.h.clone(), c: enc.c.clone() }];
        let mut done: Vec<Finished> = Vec::new();
        for _ in 0..max_len {
            // Expand every live beam over the whole target vocabulary.
            let mut states = Vec::with_capacity(live.len());
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for (bi, b) in live.iter().enumerate() {
                let prev = b.tokens.last().copied().unwrap_or(BOS);
                let (h, c, logp) = self.infer_step(prev, &b.h, &b.c, &enc);
                states.push((h, c));
                for (tok, lp) in logp.iter().enumerate() {
                    cands.push((b.raw + lp, bi, tok));
                }
            }
            cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            // Keep the best `beam` expansions; ending ones retire from the beam.
            let mut next = Vec::with_capacity(beam);
            for &(raw, bi, tok) in cands.iter().take(beam) {
                let mut tokens = live[bi].tokens.clone();
                if tok == EOS {
                    done.push(Finished { steps: tokens.len() + 1, tokens, raw, complete: true });
                } else {
                    tokens.push(tok);
                    next.push(Live { tokens, raw, h: states[bi].0.clone(), c: states[bi].1.clone() });
                }
            }
            live = next;
            if live.is_empty() || done.len() >= beam {
                break;
            }
        }
        for b in live {
            done.push(Finished { steps: b.tokens.len(), tokens: b.tokens, raw: b.raw, complete: false });
        }
        done.sort_by(|a, b| {
            b.norm()
                .partial_cmp(&a.norm())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.steps.cmp(&b.steps))
                .then(a.tokens.cmp(&b.tokens))
        });
        done.truncate(beam);
        done
    }
}

/// A candidate that left the beam, still in token-id form.
pub(crate) struct Finished {
    pub tokens: Vec<usize>,
    /// Sum of per-step log-probabilities over `steps` emissions.
    pub raw: f64,
    /// Emission count; includes the end marker for complete hypotheses.
    pub steps: usize,
    pub complete: bool,
}

impl Finished {
    pub fn norm(&self) -> f64 {
        self.raw / self.steps.max(1) as f64
    }
}
