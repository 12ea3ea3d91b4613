//! Teacher-forced training with full backpropagation through time.
//!
//! The loss is mean cross entropy per target token (the end marker counts as
//! a token). Batches accumulate per-sequence gradients in a fixed order, so a
//! fixed seed and data set reproduce training bit for bit. Validation decodes
//! greedily and counts exact sequence matches; training stops when validation
//! has not improved for `patience` checks in a row or when the epoch budget
//! runs out, and the best-scoring weights are restored at the end.

use super::net::{axpy, dot, lstm_back, lstm_step, mtv_acc, mv_acc, outer_acc, s, softmax_in_place, LstmCache};
use super::{Hyper, ModelOf, BOS, EOS};
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A source/target token sequence pair.
pub type TokenPair = (Vec<String>, Vec<String>);

/// Why training ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Validation stalled for `patience` consecutive checks.
    Patience,
    /// The epoch budget was exhausted.
    EpochLimit,
}

/// Summary of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Epochs started, including a final partial epoch.
    pub epochs: usize,
    /// Mini-batches processed.
    pub batches: usize,
    /// Exact-match validation rate after each check, in order.
    pub curve: Vec<f64>,
    /// Best validation rate seen; the returned weights correspond to it.
    pub best: f64,
    pub stop: StopReason,
}

/// Cached activations of one decoder step.
struct DecCache<S> {
    lstm: LstmCache<S>,
    alpha: Vec<S>,
    comb_in: Vec<S>,
    ht: Vec<S>,
    probs: Vec<S>,
}

/// Everything the backward pass needs from one teacher-forced pair.
struct PairForward<S> {
    enc: Vec<LstmCache<S>>,
    /// att_w * enc_h[j], shared by every decoder step.
    wa: Vec<Vec<S>>,
    dec: Vec<DecCache<S>>,
    /// Summed (not averaged) negative log-likelihood in f64.
    loss: f64,
}

impl<S: Float> ModelOf<S> {
    fn forward_pair(&self, src: &[usize], tgt: &[usize]) -> PairForward<S> {
        let p = &self.params;
        let hidden = self.hyper().hidden;
        let mut h = vec![S::zero(); hidden];
        let mut c = vec![S::zero(); hidden];
        let mut enc = Vec::with_capacity(src.len());
        for &tok in src {
            let cache = lstm_step(&p.enc_w, &p.enc_u, &p.enc_b, p.src_emb.row(tok).to_vec(), h, c);
            h = cache.h.clone();
            c = cache.c.clone();
            enc.push(cache);
        }
        let wa: Vec<Vec<S>> = enc
            .iter()
            .map(|step| {
                let mut v = vec![S::zero(); hidden];
                mv_acc(&mut v, &p.att_w.w, p.att_w.rows, p.att_w.cols, &step.h);
                v
            })
            .collect();
        let mut dec = Vec::with_capacity(tgt.len() + 1);
        let mut loss = 0.0;
        let mut prev = BOS;
        for step in 0..=tgt.len() {
            let target = if step < tgt.len() { tgt[step] } else { EOS };
            let lstm = lstm_step(&p.dec_w, &p.dec_u, &p.dec_b, p.tgt_emb.row(prev).to_vec(), h, c);
            let mut alpha: Vec<S> = wa.iter().map(|wh| dot(&lstm.h, wh)).collect();
            softmax_in_place(&mut alpha);
            let mut comb_in = vec![S::zero(); 2 * hidden];
            for (j, step_j) in enc.iter().enumerate() {
                axpy(&mut comb_in[..hidden], alpha[j], &step_j.h);
            }
            comb_in[hidden..].copy_from_slice(&lstm.h);
            let mut ht = p.comb_b.w.clone();
            mv_acc(&mut ht, &p.comb_w.w, p.comb_w.rows, p.comb_w.cols, &comb_in);
            for x in ht.iter_mut() {
                *x = x.tanh();
            }
            let mut probs = p.out_b.w.clone();
            mv_acc(&mut probs, &p.out_w.w, p.out_w.rows, p.out_w.cols, &ht);
            softmax_in_place(&mut probs);
            let py: f64 = num_traits::cast(probs[target]).expect("finite probability");
            loss -= py.max(f64::MIN_POSITIVE).ln();
            h = lstm.h.clone();
            c = lstm.c.clone();
            dec.push(DecCache { lstm, alpha, comb_in, ht, probs });
            prev = target;
        }
        PairForward { enc, wa, dec, loss }
    }

    /// Accumulates gradients for one pair; `scale` is the per-token weight
    /// (1 / total target tokens in the batch).
    fn backward_pair(&mut self, fwd: &PairForward<S>, src: &[usize], tgt: &[usize], scale: S) {
        let hidden = self.hyper().hidden;
        let n = fwd.enc.len();
        let p = &mut self.params;
        let mut dh_enc = vec![vec![S::zero(); hidden]; n];
        let mut dh_next = vec![S::zero(); hidden];
        let mut dc_next = vec![S::zero(); hidden];
        for step in (0..fwd.dec.len()).rev() {
            let cache = &fwd.dec[step];
            let target = if step < tgt.len() { tgt[step] } else { EOS };
            let input = if step == 0 { BOS } else { tgt[step - 1] };
            // Cross entropy through the softmax.
            let mut dlogits = cache.probs.clone();
            dlogits[target] = dlogits[target] - S::one();
            for d in dlogits.iter_mut() {
                *d = *d * scale;
            }
            outer_acc(&mut p.out_w.g, p.out_w.rows, p.out_w.cols, &dlogits, &cache.ht);
            for (g, d) in p.out_b.g.iter_mut().zip(&dlogits) {
                *g = *g + *d;
            }
            let mut dht = vec![S::zero(); hidden];
            mtv_acc(&mut dht, &p.out_w.w, p.out_w.rows, p.out_w.cols, &dlogits);
            // Combined-state tanh.
            let mut da = vec![S::zero(); hidden];
            for k in 0..hidden {
                da[k] = dht[k] * (S::one() - cache.ht[k] * cache.ht[k]);
            }
            outer_acc(&mut p.comb_w.g, p.comb_w.rows, p.comb_w.cols, &da, &cache.comb_in);
            for (g, d) in p.comb_b.g.iter_mut().zip(&da) {
                *g = *g + *d;
            }
            let mut dcomb = vec![S::zero(); 2 * hidden];
            mtv_acc(&mut dcomb, &p.comb_w.w, p.comb_w.rows, p.comb_w.cols, &da);
            let (dctx, dh_tail) = dcomb.split_at(hidden);
            let mut dh = dh_tail.to_vec();
            axpy(&mut dh, S::one(), &dh_next);
            // Attention: context mix, then softmax, then the bilinear scores.
            if n > 0 {
                let hd = &cache.lstm.h;
                let mut dalpha = vec![S::zero(); n];
                for j in 0..n {
                    dalpha[j] = dot(dctx, &fwd.enc[j].h);
                    axpy(&mut dh_enc[j], cache.alpha[j], dctx);
                }
                let mut mixed = S::zero();
                for j in 0..n {
                    mixed = mixed + cache.alpha[j] * dalpha[j];
                }
                let mut wat_hd = vec![S::zero(); hidden];
                mtv_acc(&mut wat_hd, &p.att_w.w, p.att_w.rows, p.att_w.cols, hd);
                let mut dscore_mix = vec![S::zero(); hidden];
                for j in 0..n {
                    let ds = cache.alpha[j] * (dalpha[j] - mixed);
                    axpy(&mut dh, ds, &fwd.wa[j]);
                    axpy(&mut dscore_mix, ds, &fwd.enc[j].h);
                    axpy(&mut dh_enc[j], ds, &wat_hd);
                }
                outer_acc(&mut p.att_w.g, p.att_w.rows, p.att_w.cols, hd, &dscore_mix);
            }
            let (dx, dh_prev, dc_prev) = lstm_back(&mut p.dec_w, &mut p.dec_u, &mut p.dec_b, &cache.lstm, &dh, &dc_next);
            p.tgt_emb.grad_row_add(input, &dx);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        // The decoder start state is the final encoder state.
        for t in (0..n).rev() {
            let mut dh = dh_next;
            axpy(&mut dh, S::one(), &dh_enc[t]);
            let (dx, dh_prev, dc_prev) = lstm_back(&mut p.enc_w, &mut p.enc_u, &mut p.enc_b, &fwd.enc[t], &dh, &dc_next);
            p.src_emb.grad_row_add(src[t], &dx);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
    }

    /// One optimizer update over `batch`; returns the mean per-token loss.
    fn batch_step(&mut self, batch: &[(Vec<usize>, Vec<usize>)], lr: f64) -> f64 {
        let total: usize = batch.iter().map(|(_, tgt)| tgt.len() + 1).sum();
        let scale = s::<S>(1.0 / total.max(1) as f64);
        let mut loss = 0.0;
        for (src, tgt) in batch {
            let fwd = self.forward_pair(src, tgt);
            loss += fwd.loss;
            self.backward_pair(&fwd, src, tgt, scale);
        }
        self.adam_t += 1;
        for p in self.params.all_mut() {
            p.adam_step(lr, self.adam_t);
        }
        loss / total.max(1) as f64
    }

    /// Forward-only mean per-token loss over `batch`.
    #[cfg(test)]
    fn batch_loss(&self, batch: &[(Vec<usize>, Vec<usize>)]) -> f64 {
        let total: usize = batch.iter().map(|(_, tgt)| tgt.len() + 1).sum();
        let sum: f64 = batch.iter().map(|(src, tgt)| self.forward_pair(src, tgt).loss).sum();
        sum / total.max(1) as f64
    }

    /// Fraction of `val` pairs whose greedy decode reproduces the target exactly.
    fn exact_match(&self, val: &[(Vec<usize>, Vec<usize>)]) -> f64 {
        if val.is_empty() {
            return 1.0;
        }
        let mut hits = 0usize;
        for (src, tgt) in val {
            let best = self.beam_search(src, 1, Self::max_len_for(src.len())).remove(0);
            if best.complete && best.tokens == *tgt {
                hits += 1;
            }
        }
        hits as f64 / val.len() as f64
    }

    /// Trains until validation stalls for `h.patience` checks or `h.max_epochs`
    /// epochs pass, then restores the best-validation weights.
    ///
    /// Schedule settings (batch size, learning rate, patience, seed) come from
    /// `h`; the model's own dimensions are fixed at construction.
    pub fn train(&mut self, train_pairs: &[TokenPair], val_pairs: &[TokenPair], h: &Hyper) -> TrainReport {
        assert!(h.batch >= 1 && h.validate_every >= 1 && h.patience >= 1 && h.max_epochs >= 1);
        let train_ids: Vec<(Vec<usize>, Vec<usize>)> = train_pairs
            .iter()
            .map(|(src, tgt)| (self.src_vocab.encode(src), self.tgt_vocab.encode(tgt)))
            .collect();
        let val_ids: Vec<(Vec<usize>, Vec<usize>)> = val_pairs
            .iter()
            .map(|(src, tgt)| (self.src_vocab.encode(src), self.tgt_vocab.encode(tgt)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
        let mut order: Vec<usize> = (0..train_ids.len()).collect();
        let mut report = TrainReport { epochs: 0, batches: 0, curve: Vec::new(), best: 0.0, stop: StopReason::EpochLimit };
        let mut best = f64::NEG_INFINITY;
        let mut stalled = 0usize;
        let mut snapshot: Option<Vec<Vec<S>>> = None;
        'epochs: for epoch in 0..h.max_epochs {
            report.epochs = epoch + 1;
            order.shuffle(&mut rng);
            let mut cursor = 0;
            while cursor < order.len() {
                let end = (cursor + h.batch).min(order.len());
                let batch: Vec<(Vec<usize>, Vec<usize>)> = order[cursor..end].iter().map(|&k| train_ids[k].clone()).collect();
                cursor = end;
                self.batch_step(&batch, h.learning_rate);
                report.batches += 1;
                if report.batches % h.validate_every == 0 {
                    let rate = self.exact_match(&val_ids);
                    report.curve.push(rate);
                    if rate > best {
                        best = rate;
                        stalled = 0;
                        snapshot = Some(self.params.all().iter().map(|p| p.w.clone()).collect());
                    } else {
                        stalled += 1;
                        if stalled >= h.patience {
                            report.stop = StopReason::Patience;
                            break 'epochs;
                        }
                    }
                }
            }
        }
        if let Some(weights) = snapshot {
            for (p, w) in self.params.all_mut().into_iter().zip(weights) {
                p.w = w;
            }
        }
        report.best = if best.is_finite() { best } else { 0.0 };
        report
    }
}

#[cfg(test)]
mod tests {
    use super::super::Vocab;
    use super::*;

    fn letters(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("t{k}")).collect()
    }

    fn tiny_model(seed: u64) -> ModelOf<f64> {
        let src = Vocab::new(letters(6));
        let tgt = Vocab::new(letters(5));
        let mut h = Hyper::desk();
        h.hidden = 7;
        h.embedding = 5;
        h.seed = seed;
        ModelOf::new(src, tgt, h)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut m = tiny_model(3);
        let batch = vec![(vec![4usize, 5, 6, 7], vec![4usize, 5, 6]), (vec![6, 4], vec![7, 8, 5, 4])];
        let total: usize = batch.iter().map(|(_, t)| t.len() + 1).sum();
        let scale = 1.0 / total as f64;
        for (src, tgt) in &batch {
            let fwd = m.forward_pair(src, tgt);
            m.backward_pair(&fwd, src, tgt, scale);
        }
        let analytic: Vec<(&'static str, Vec<f64>)> =
            m.params.all().iter().map(|p| (p.name, p.g.clone())).collect();
        let step = 1e-3;
        for (pi, (name, grads)) in analytic.iter().enumerate() {
            // Probe the largest-magnitude entries of each tensor.
            let mut idx: Vec<usize> = (0..grads.len()).collect();
            idx.sort_by(|&a, &b| grads[b].abs().partial_cmp(&grads[a].abs()).unwrap());
            assert!(grads[idx[0]].abs() > 0.0, "{name} received no gradient");
            for &k in idx.iter().take(6) {
                let keep = m.params.all()[pi].w[k];
                m.params.all_mut()[pi].w[k] = keep + step;
                let hi = m.batch_loss(&batch);
                m.params.all_mut()[pi].w[k] = keep - step;
                let lo = m.batch_loss(&batch);
                m.params.all_mut()[pi].w[k] = keep;
                let numeric = (hi - lo) / (2.0 * step);
                let a = grads[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "{name}[{k}]: analytic {a}, numeric {numeric}, rel {rel}");
            }
        }
    }

    #[test]
    fn loss_decreases_over_the_first_steps() {
        let mut m = tiny_model(9);
        let batch = vec![(vec![4usize, 6, 5], vec![5usize, 4]), (vec![7, 8], vec![6, 7, 8])];
        let mut last = m.batch_loss(&batch);
        for step in 0..5 {
            m.batch_step(&batch, 5e-3);
            let now = m.batch_loss(&batch);
            assert!(now < last, "loss rose from {last} to {now} at step {step}");
            last = now;
        }
    }

    #[test]
    fn training_overfits_a_single_pair() {
        let src_v = Vocab::new(letters(8));
        let tgt_v = Vocab::new(letters(8));
        let mut h = Hyper::desk();
        h.hidden = 20;
        h.embedding = 12;
        h.seed = 5;
        let mut m = ModelOf::<f32>::new(src_v, tgt_v, h);
        let pair = (vec![4usize, 9, 6, 5, 10], vec![7usize, 4, 11, 6]);
        let batch = vec![pair.clone()];
        for _ in 0..200 {
            m.batch_step(&batch, 1e-2);
        }
        let best = m.beam_search(&pair.0, 1, 20).remove(0);
        assert!(best.complete);
        assert_eq!(best.tokens, pair.1, "greedy decode should reproduce the memorized pair");
    }

    #[test]
    fn copy_task_reaches_high_exact_match() {
        use rand::Rng;
        let symbols = letters(10);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let pair = |rng: &mut ChaCha8Rng| -> TokenPair {
            let len = rng.gen_range(3..=8);
            let seq: Vec<String> = (0..len).map(|_| symbols[rng.gen_range(0..symbols.len())].clone()).collect();
            (seq.clone(), seq)
        };
        let train_set: Vec<TokenPair> = (0..500).map(|_| pair(&mut rng)).collect();
        let val_set: Vec<TokenPair> = (0..60).map(|_| pair(&mut rng)).collect();
        let v = Vocab::new(symbols.clone());
        let mut h = Hyper::desk();
        h.hidden = 40;
        h.embedding = 24;
        h.validate_every = 40;
        h.patience = 6;
        h.max_epochs = 80;
        h.learning_rate = 5e-3;
        h.seed = 17;
        let mut m = ModelOf::<f32>::new(v.clone(), v, h.clone());
        let report = m.train(&train_set, &val_set, &h);
        assert!(report.best >= 0.99, "copy task only reached {} (curve {:?})", report.best, report.curve);
    }

    #[test]
    fn patience_counts_stalled_validations() {
        let mut m = tiny_model(1);
        let train_set: Vec<TokenPair> = vec![(vec!["t0".into(), "t1".into()], vec!["t2".into()])];
        let val_set: Vec<TokenPair> = vec![(vec!["t0".into()], vec!["t3".into(), "t4".into(), "t1".into()])];
        let mut h = Hyper::desk();
        h.batch = 1;
        h.validate_every = 1;
        h.patience = 10;
        h.max_epochs = 1000;
        h.learning_rate = 0.0; // freeze the weights so validation never moves
        let report = m.train(&train_set, &val_set, &h);
        assert_eq!(report.stop, StopReason::Patience);
        assert_eq!(report.curve.len(), 1 + h.patience, "one improving check, then patience stalled ones");
        assert_eq!(report.batches, 1 + h.patience);
        assert!(report.curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn extension_preserves_translations_of_known_inputs() {
        use rand::Rng;
        let symbols = letters(8);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let data: Vec<TokenPair> = (0..80)
            .map(|_| {
                let len = rng.gen_range(2..=6);
                let seq: Vec<String> = (0..len).map(|_| symbols[rng.gen_range(0..symbols.len())].clone()).collect();
                (seq.clone(), seq)
            })
            .collect();
        let v = Vocab::new(symbols.clone());
        let mut h = Hyper::desk();
        h.hidden = 32;
        h.embedding = 16;
        h.validate_every = 10;
        h.patience = 8;
        h.max_epochs = 60;
        h.learning_rate = 5e-3;
        h.seed = 2;
        let mut m = ModelOf::<f32>::new(v.clone(), v, h.clone());
        m.train(&data[..60], &data[60..], &h);
        let before: Vec<Vec<String>> = data[60..].iter().map(|(src, _)| m.translate_with(src, 1, 30)[0].tokens.clone()).collect();
        let mut grown = symbols.clone();
        grown.push("u0".into());
        grown.push("u1".into());
        let m2 = m.extend_vocab(Vocab::new(grown.clone()), Vocab::new(grown), 93).expect("superset");
        for ((src, _), want) in data[60..].iter().zip(&before) {
            let got = &m2.translate_with(src, 1, 30)[0].tokens;
            assert_eq!(got, want, "extension changed the translation of {src:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        use rand::Rng;
        let symbols = letters(6);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let data: Vec<TokenPair> = (0..40)
            .map(|_| {
                let len = rng.gen_range(2..=5);
                let seq: Vec<String> = (0..len).map(|_| symbols[rng.gen_range(0..symbols.len())].clone()).collect();
                (seq.clone(), seq)
            })
            .collect();
        let v = Vocab::new(symbols);
        let mut h = Hyper::desk();
        h.hidden = 12;
        h.embedding = 8;
        h.validate_every = 5;
        h.max_epochs = 3;
        h.patience = 50;
        h.seed = 123;
        let mut a = ModelOf::<f32>::new(v.clone(), v.clone(), h.clone());
        let mut b = ModelOf::<f32>::new(v.clone(), v, h.clone());
        let ra = a.train(&data[..30], &data[30..], &h);
        let rb = b.train(&data[..30], &data[30..], &h);
        assert_eq!(ra, rb, "reports must match bit for bit");
        for (pa, pb) in a.params.all().iter().zip(b.params.all().iter()) {
            assert_eq!(pa.w, pb.w, "{} diverged across identical runs", pa.name);
        }
    }
}
