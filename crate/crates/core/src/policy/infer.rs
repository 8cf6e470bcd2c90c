use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{gelu, layer_norm, linear, Model};
use super::scalar::{gemm, Mat, Scalar};
use super::{PolicyError, SamplerConfig};
use crate::domains::{derive_rng, structural_hash};
use crate::pddl::{GroundedTask, ProblemDef};
use crate::tokenizer::{PlanDecodeError, PlanDecoder, Vocabulary};

/// Keys and values of every processed position, per layer, for one sequence.
#[derive(Debug, Clone)]
pub(crate) struct KvCache<T> {
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    len: usize,
}

impl<T: Scalar> KvCache<T> {
    pub fn new(layers: usize) -> Self {
        KvCache {
            k: vec![Vec::new(); layers],
            v: vec![Vec::new(); layers],
            len: 0,
        }
    }
}

/// Feeds `new[i]` after the positions already in `caches[i]` and returns the
/// logits of the last new token of each sequence (`caches.len() × vocab`).
pub(crate) fn advance<T: Scalar>(
    model: &Model<T>,
    caches: &mut [&mut KvCache<T>],
    new: &[&[u32]],
) -> Result<Vec<T>, PolicyError> {
    assert_eq!(caches.len(), new.len());
    let c = &model.config;
    let lay = &model.layout;
    let (d, f, v, heads) = (c.embed_dim, c.ff_dim, c.vocab_size, c.heads);
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut spans = Vec::with_capacity(new.len());
    let mut rows = 0;
    for (cache, toks) in caches.iter().zip(new) {
        let end = cache.len + toks.len();
        if end > c.context_length {
            return Err(PolicyError::ContextOverflow {
                len: end,
                context: c.context_length,
            });
        }
        if let Some(&t) = toks.iter().find(|&&t| t as usize >= v) {
            return Err(PolicyError::TokenOutOfRange(t));
        }
        spans.push((rows, toks.len()));
        rows += toks.len();
    }

    let mut x = vec![T::zero(); rows * d];
    let wte = model.p(lay.wte, v * d);
    let wpe = model.p(lay.wpe, c.context_length * d);
    for ((cache, toks), &(o, _)) in caches.iter().zip(new).zip(&spans) {
        for (i, &t) in toks.iter().enumerate() {
            let pos = cache.len + i;
            for j in 0..d {
                x[(o + i) * d + j] = wte[t as usize * d + j] + wpe[pos * d + j];
            }
        }
    }

    let mut h = vec![T::zero(); rows * d];
    let mut qkv = vec![T::zero(); rows * 3 * d];
    let mut y = vec![T::zero(); rows * d];
    let mut o = vec![T::zero(); rows * d];
    let mut u = vec![T::zero(); rows * f];
    let mut scores = Vec::new();
    for (l, bo) in lay.blocks.iter().enumerate() {
        layer_norm(&x, model.p(bo.ln1_g, d), model.p(bo.ln1_b, d), d, &mut h);
        linear(&h, model.p(bo.wqkv, d * 3 * d), model.p(bo.bqkv, 3 * d), rows, d, 3 * d, &mut qkv);
        for (cache, &(r0, n)) in caches.iter_mut().zip(&spans) {
            for i in 0..n {
                let row = &qkv[(r0 + i) * 3 * d..(r0 + i + 1) * 3 * d];
                cache.k[l].extend_from_slice(&row[d..2 * d]);
                cache.v[l].extend_from_slice(&row[2 * d..]);
            }
            let past = cache.len;
            let total = past + n;
            scores.resize(n * total, T::zero());
            for hh in 0..heads {
                let q = Mat::strided(&qkv[r0 * 3 * d + hh * dh..], 3 * d, 1);
                let kt = Mat::strided(&cache.k[l][hh * dh..], 1, d);
                gemm(n, dh, total, scale, q, kt, T::zero(), &mut scores, total);
                for i in 0..n {
                    let visible = past + i + 1;
                    let row = &mut scores[i * total..(i + 1) * total];
                    let mx = row[..visible].iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                    let mut z = T::zero();
                    for e in row[..visible].iter_mut() {
                        *e = (*e - mx).exp();
                        z += *e;
                    }
                    for e in row[..visible].iter_mut() {
                        *e /= z;
                    }
                    row[visible..].fill(T::zero());
                }
                let vv = Mat::strided(&cache.v[l][hh * dh..], d, 1);
                gemm(n, total, dh, T::one(), Mat::rm(&scores, total), vv, T::zero(), &mut y[r0 * d + hh * dh..], d);
            }
        }
        linear(&y, model.p(bo.wo, d * d), model.p(bo.bo, d), rows, d, d, &mut o);
        x.iter_mut().zip(&o).for_each(|(a, b)| *a += *b);
        layer_norm(&x, model.p(bo.ln2_g, d), model.p(bo.ln2_b, d), d, &mut h);
        linear(&h, model.p(bo.w1, d * f), model.p(bo.b1, f), rows, d, f, &mut u);
        u.iter_mut().for_each(|z| *z = gelu(*z));
        linear(&u, model.p(bo.w2, f * d), model.p(bo.b2, d), rows, f, d, &mut o);
        x.iter_mut().zip(&o).for_each(|(a, b)| *a += *b);
    }
    for (cache, &(_, n)) in caches.iter_mut().zip(&spans) {
        cache.len += n;
    }

    let mut last = Vec::with_capacity(spans.len() * d);
    for &(r0, n) in &spans {
        let r = r0 + n - 1;
        last.extend_from_slice(&x[r * d..(r + 1) * d]);
    }
    let m = spans.len();
    let mut hf = vec![T::zero(); m * d];
    layer_norm(&last, model.p(lay.lnf_g, d), model.p(lay.lnf_b, d), d, &mut hf);
    let mut logits = vec![T::zero(); m * v];
    linear(&hf, model.p(lay.head_w, d * v), model.p(lay.head_b, v), m, d, v, &mut logits);
    Ok(logits)
}

/// Probabilities of `softmax(logits / temperature)` in double precision.
pub fn softmax_with_temperature<T: Scalar>(logits: &[T], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|x| x.f64() / temperature).collect();
    let mx = scaled.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p: Vec<f64> = scaled.iter().map(|x| (x - mx).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Arg-max with ties going to the lowest id.
pub fn greedy_token<T: Scalar>(logits: &[T]) -> u32 {
    let mut best = 0;
    for (i, x) in logits.iter().enumerate() {
        if *x > logits[best] {
            best = i;
        }
    }
    best as u32
}

pub fn sample_token<T: Scalar>(logits: &[T], temperature: f64, rng: &mut ChaCha8Rng) -> u32 {
    let p = softmax_with_temperature(logits, temperature);
    let mut u: f64 = rng.random();
    for (i, &pi) in p.iter().enumerate() {
        if u < pi {
            return i as u32;
        }
        u -= pi;
    }
    // rounding left u just above the total mass
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0) as u32
}

/// Generated plan tokens; `finished` when `[endofplan]` was produced (and
/// is the last token).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledSeq {
    pub tokens: Vec<u32>,
    pub finished: bool,
}

/// Draws `n` continuations of `prompt`. Candidate `k` uses its own RNG
/// stream derived from `(sc.seed, key, k)` and candidates run in fixed chunks
/// of `sc.batch_size`, so the first `n` of a larger draw are the same
/// sequences.
pub fn sample_sequences<T: Scalar>(
    model: &Model<T>,
    prompt: &[u32],
    end_token: u32,
    sc: &SamplerConfig,
    key: u64,
    n: usize,
) -> Result<Vec<SampledSeq>, PolicyError> {
    sc.validate()?;
    if n == 0 {
        return Ok(Vec::new());
    }
    if prompt.is_empty() {
        return Err(PolicyError::NoTargets);
    }
    let ctx = model.config.context_length;
    let mut base = KvCache::new(model.config.layers);
    let first = advance(model, &mut [&mut base], &[prompt])?;
    let budget = sc.max_new_tokens.min(ctx - prompt.len());
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(sc.batch_size) {
        let b = sc.batch_size.min(n - start);
        let mut caches: Vec<KvCache<T>> = vec![base.clone(); b];
        let mut rngs: Vec<ChaCha8Rng> = (start..start + b).map(|k| derive_rng(sc.seed, &[key, k as u64])).collect();
        let mut seqs: Vec<SampledSeq> = vec![
            SampledSeq {
                tokens: Vec::new(),
                finished: false
            };
            b
        ];
        let pick = |logits: &[T], rng: &mut ChaCha8Rng| {
            if sc.greedy {
                greedy_token(logits)
            } else {
                sample_token(logits, sc.temperature, rng)
            }
        };
        let mut logits: Vec<Vec<T>> = vec![first.clone(); b];
        loop {
            let mut active = Vec::new();
            for i in 0..b {
                let s = &mut seqs[i];
                if s.finished || s.tokens.len() >= budget {
                    continue;
                }
                let t = pick(&logits[i], &mut rngs[i]);
                s.tokens.push(t);
                if t == end_token {
                    s.finished = true;
                } else if s.tokens.len() < budget {
                    active.push(i);
                }
            }
            if active.is_empty() {
                break;
            }
            let toks: Vec<[u32; 1]> = active.iter().map(|&i| [*seqs[i].tokens.last().expect("pushed")]).collect();
            let new: Vec<&[u32]> = toks.iter().map(|t| &t[..]).collect();
            let mut refs: Vec<&mut KvCache<T>> = caches
                .iter_mut()
                .enumerate()
                .filter(|(i, _)| active.contains(i))
                .map(|(_, c)| c)
                .collect();
            let step = advance(model, &mut refs, &new)?;
            let v = model.config.vocab_size;
            for (j, &i) in active.iter().enumerate() {
                logits[i] = step[j * v..(j + 1) * v].to_vec();
            }
        }
        out.extend(seqs);
    }
    Ok(out)
}

/// Why a sampled candidate is not an executable action list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum SampleFailure {
    /// The token budget ran out before `[endofplan]`.
    Truncated,
    Syntax(String),
    UnknownAction(String),
    /// The prompt alone fills the context.
    PromptTooLong,
}

/// Grounded action ids of a decoded candidate, or why decoding failed.
pub type Candidate = Result<Vec<u32>, SampleFailure>;

/// Samples `n` candidate plans for one problem and decodes them against its
/// grounded task. Decoding failures are returned as data.
pub fn sample_plans<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocabulary,
    problem: &ProblemDef,
    task: &GroundedTask,
    sc: &SamplerConfig,
    n: usize,
) -> Result<Vec<Candidate>, PolicyError> {
    sc.validate()?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let prompt = vocab.encode_problem(problem)?;
    if prompt.ids.len() >= model.config.context_length {
        return Ok(vec![Err(SampleFailure::PromptTooLong); n]);
    }
    let key = structural_hash(problem);
    let seqs = sample_sequences(model, &prompt.ids, vocab.specials().end_of_plan, sc, key, n)?;
    let decoder = PlanDecoder::new(vocab, task);
    Ok(seqs
        .into_iter()
        .map(|s| {
            if !s.finished {
                return Err(SampleFailure::Truncated);
            }
            decoder.decode(vocab, &s.tokens).map_err(|e| match e {
                PlanDecodeError::Syntax(e) => SampleFailure::Syntax(e.to_string()),
                PlanDecodeError::UnknownAction(a) => SampleFailure::UnknownAction(a),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ModelConfig;

    fn cfg(v: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: v,
            context_length: 40,
            layers: 2,
            heads: 2,
            embed_dim: 16,
            ff_dim: 24,
            dropout: 0.0,
        }
    }

    #[test]
    fn cached_logits_match_full_forward() {
        let m = Model::<f64>::new(cfg(11), &mut derive_rng(3, &[])).unwrap();
        let seq: Vec<u32> = (0..20).map(|i| (i * 7 % 11) as u32).collect();
        let full = m.forward(std::slice::from_ref(&seq), 0).unwrap();
        let mut cache = KvCache::new(2);
        let mut got = advance(&m, &mut [&mut cache], &[&seq[..5]]).unwrap();
        for t in 5..20 {
            let want = &full[(t - 1) * 11..t * 11];
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() < 1e-10);
            }
            got = advance(&m, &mut [&mut cache], &[&seq[t..t + 1]]).unwrap();
        }
        assert_eq!(cache.len, 20);
    }

    #[test]
    fn greedy_cached_agrees_with_uncached() {
        let m = Model::<f32>::new(cfg(9), &mut derive_rng(4, &[])).unwrap();
        let prompt = vec![1u32, 2, 3, 4];
        let sc = SamplerConfig {
            max_new_tokens: 30,
            ..SamplerConfig::greedy(0)
        };
        let got = sample_sequences(&m, &prompt, 8, &sc, 0, 1).unwrap().remove(0);
        let mut seq = prompt.clone();
        let mut naive = Vec::new();
        while naive.len() < 30 {
            let logits = m.forward(&[seq.clone()], 0).unwrap();
            let t = greedy_token(&logits[(seq.len() - 1) * 9..]);
            naive.push(t);
            seq.push(t);
            if t == 8 {
                break;
            }
        }
        assert_eq!(got.tokens, naive);
    }

    #[test]
    fn greedy_is_repeatable_and_prefix_stable() {
        let m = Model::<f32>::new(cfg(9), &mut derive_rng(5, &[])).unwrap();
        let sc = SamplerConfig {
            max_new_tokens: 12,
            ..SamplerConfig::new(2.0, 7)
        };
        let a = sample_sequences(&m, &[1, 2], 8, &sc, 42, 8).unwrap();
        let b = sample_sequences(&m, &[1, 2], 8, &sc, 42, 32).unwrap();
        assert_eq!(a[..], b[..8]);
        assert!(sample_sequences(&m, &[1, 2], 8, &sc, 42, 0).unwrap().is_empty());
        let g = SamplerConfig::greedy(0);
        assert_eq!(
            sample_sequences(&m, &[1, 2], 8, &g, 1, 3).unwrap(),
            sample_sequences(&m, &[1, 2], 8, &g, 9, 3).unwrap()
        );
    }

    #[test]
    fn softmax_sums_to_one_and_keeps_argmax() {
        let logits = [0.3f32, -2.0, 5.5, 5.4, 0.0];
        for t in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let p = softmax_with_temperature(&logits, t);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let am = p.iter().enumerate().fold(0, |b, (i, x)| if *x > p[b] { i } else { b });
            assert_eq!(am as u32, greedy_token(&logits));
        }
    }

    #[test]
    fn ties_go_to_lowest_id() {
        assert_eq!(greedy_token(&[1.0f32, 3.0, 3.0, 0.0]), 1);
    }

    #[test]
    fn temperature_must_be_positive() {
        let m = Model::<f32>::new(cfg(9), &mut derive_rng(5, &[])).unwrap();
        let sc = SamplerConfig::new(0.0, 0);
        assert!(sample_sequences(&m, &[1], 8, &sc, 0, 1).is_err());
    }

    #[test]
    fn budget_stops_generation() {
        let m = Model::<f32>::zeros(cfg(9)).unwrap();
        let sc = SamplerConfig {
            max_new_tokens: 5,
            ..SamplerConfig::greedy(0)
        };
        // zero weights: greedy always emits token 0, never the end token
        let s = sample_sequences(&m, &[1], 8, &sc, 0, 2).unwrap();
        assert_eq!(s[0].tokens, vec![0; 5]);
        assert!(!s[0].finished);
    }
}
