use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layout::Layout;
use crate::tokenizer::TokenSeq;
use super::scalar::{gemm, Mat, Scalar};
use super::{ModelConfig, PolicyError};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// A pre-norm GPT-style decoder with learned positions and an untied output
/// projection. All parameters live in one flat buffer described by `layout`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<T>,
}

/// Sequences laid end to end without padding; attention never crosses a
/// sequence boundary.
pub(crate) struct Packed {
    pub tokens: Vec<u32>,
    pub positions: Vec<usize>,
    /// (first row, length) of each sequence.
    pub seqs: Vec<(usize, usize)>,
}

impl Packed {
    pub fn new<S: AsRef<[u32]>>(seqs: &[S]) -> Self {
        let mut tokens = Vec::new();
        let mut positions = Vec::new();
        let mut spans = Vec::with_capacity(seqs.len());
        for s in seqs {
            let s = s.as_ref();
            spans.push((tokens.len(), s.len()));
            tokens.extend_from_slice(s);
            positions.extend(0..s.len());
        }
        Packed {
            tokens,
            positions,
            seqs: spans,
        }
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }
}

pub(super) struct NormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct BlockCache<T> {
    ln1: NormCache<T>,
    h1: Vec<T>,
    qkv: Vec<T>,
    att: Vec<T>,
    y: Vec<T>,
    drop1: Option<Vec<T>>,
    ln2: NormCache<T>,
    h2: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
    drop2: Option<Vec<T>>,
}

pub(crate) struct Cache<T> {
    drop0: Option<Vec<T>>,
    blocks: Vec<BlockCache<T>>,
    lnf: NormCache<T>,
    hf: Vec<T>,
}

pub(super) fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize, out: &mut [T]) -> NormCache<T> {
    let rows = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let dn = T::of(d as f64);
    for r in 0..rows {
        let xs = &x[r * d..(r + 1) * d];
        let mean = xs.iter().fold(T::zero(), |a, &v| a + v) / dn;
        let var = xs.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / dn;
        let rs = T::one() / (var + T::of(LN_EPS)).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (xs[i] - mean) * rs;
            xhat[r * d + i] = h;
            out[r * d + i] = h * g[i] + b[i];
        }
    }
    NormCache { xhat, rstd }
}

/// Accumulates dg, db and adds the input gradient into `dx`.
fn layer_norm_back<T: Scalar>(dy: &[T], c: &NormCache<T>, g: &[T], d: usize, dg: &mut [T], db: &mut [T], dx: &mut [T]) {
    let rows = dy.len() / d;
    let dn = T::of(d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &c.xhat[r * d..(r + 1) * d];
        let mut s1 = T::zero();
        let mut s2 = T::zero();
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
            s1 += dxhat[i];
            s2 += dxhat[i] * xh[i];
        }
        let (m1, m2) = (s1 / dn, s2 / dn);
        for i in 0..d {
            dx[r * d + i] += c.rstd[r] * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
}

#[inline]
pub(super) fn gelu<T: Scalar>(u: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(0.044715);
    let half = T::of(0.5);
    half * u * (T::one() + (c * (u + k * u * u * u)).tanh())
}

#[inline]
fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(0.044715);
    let half = T::of(0.5);
    let t = (c * (u + k * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::of(3.0) * k * u * u)
}

/// `out = x·W + b` for `rows` rows of width `k` into width `n`.
pub(super) fn linear<T: Scalar>(x: &[T], w: &[T], b: &[T], rows: usize, k: usize, n: usize, out: &mut [T]) {
    for r in 0..rows {
        out[r * n..(r + 1) * n].copy_from_slice(b);
    }
    gemm(rows, k, n, T::one(), Mat::rm(x, k), Mat::rm(w, n), T::one(), out, n);
}

/// Accumulates dW, db and writes (or adds, if `accumulate`) dx.
#[allow(clippy::too_many_arguments)]
fn linear_back<T: Scalar>(
    x: &[T],
    w: &[T],
    dout: &[T],
    rows: usize,
    k: usize,
    n: usize,
    dw: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    accumulate: bool,
) {
    gemm(k, rows, n, T::one(), Mat::tr(x, k), Mat::rm(dout, n), T::one(), dw, n);
    for r in 0..rows {
        for j in 0..n {
            db[j] += dout[r * n + j];
        }
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    gemm(rows, n, k, T::one(), Mat::rm(dout, n), Mat::tr(w, n), beta, dx, k);
}

fn dropout_mask<T: Scalar>(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..n)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

impl<T: Scalar> Model<T> {
    /// Random initialization: N(0, 0.02) matrices, residual projections
    /// scaled by 1/sqrt(2·layers), unit norm gains, zero biases.
    pub fn new(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![T::zero(); layout.len];
        let std = 0.02;
        let resid_std = std / ((2 * config.layers.max(1)) as f64).sqrt();
        for s in &layout.specs {
            let slot = &mut params[s.offset..s.offset + s.numel()];
            if s.name.ends_with(".g") {
                slot.fill(T::one());
            } else if s.shape.len() == 2 {
                let sd = if s.name.ends_with("attn.wo") || s.name.ends_with("mlp.w2") {
                    resid_std
                } else {
                    std
                };
                let dist = Normal::new(0.0, sd).expect("positive std");
                for v in slot.iter_mut() {
                    *v = T::of(dist.sample(rng));
                }
            }
        }
        Ok(Model { config, layout, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = vec![T::zero(); layout.len];
        Ok(Model { config, layout, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        let s = self.layout.spec(name)?;
        Some(&self.params[s.offset..s.offset + s.numel()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let s = self.layout.spec(name)?.clone();
        Some(&mut self.params[s.offset..s.offset + s.numel()])
    }

    pub(super) fn p(&self, off: usize, len: usize) -> &[T] {
        &self.params[off..off + len]
    }

    pub(crate) fn check_tokens(&self, batch: &Packed) -> Result<(), PolicyError> {
        for &(_, len) in &batch.seqs {
            if len > self.config.context_length {
                return Err(PolicyError::ContextOverflow {
                    len,
                    context: self.config.context_length,
                });
            }
        }
        if let Some(&t) = batch.tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(PolicyError::TokenOutOfRange(t));
        }
        Ok(())
    }

    /// Logits for every row of a packed batch, plus what backward needs.
    /// Dropout is applied when `rng` is given and the rate is positive.
    pub(crate) fn forward_packed(&self, batch: &Packed, mut rng: Option<&mut ChaCha8Rng>) -> (Vec<T>, Cache<T>) {
        let c = &self.config;
        let (d, f, v, h) = (c.embed_dim, c.ff_dim, c.vocab_size, c.heads);
        let rows = batch.rows();
        let drop_p = if rng.is_some() { c.dropout } else { 0.0 };

        let mut x = vec![T::zero(); rows * d];
        let wte = self.p(self.layout.wte, v * d);
        let wpe = self.p(self.layout.wpe, c.context_length * d);
        for r in 0..rows {
            let tk = batch.tokens[r] as usize;
            let ps = batch.positions[r];
            for i in 0..d {
                x[r * d + i] = wte[tk * d + i] + wpe[ps * d + i];
            }
        }
        let drop0 = match rng.as_deref_mut() {
            Some(g) if drop_p > 0.0 => {
                let m = dropout_mask::<T>(rows * d, drop_p, g);
                for (a, b) in x.iter_mut().zip(&m) {
                    *a *= *b;
                }
                Some(m)
            }
            _ => None,
        };

        let mut blocks = Vec::with_capacity(c.layers);
        for bo in &self.layout.blocks {
            let mut h1 = vec![T::zero(); rows * d];
            let ln1 = layer_norm(&x, self.p(bo.ln1_g, d), self.p(bo.ln1_b, d), d, &mut h1);
            let mut qkv = vec![T::zero(); rows * 3 * d];
            linear(&h1, self.p(bo.wqkv, d * 3 * d), self.p(bo.bqkv, 3 * d), rows, d, 3 * d, &mut qkv);
            let mut y = vec![T::zero(); rows * d];
            let att = attention_forward(&qkv, &batch.seqs, d, h, &mut y);
            let mut o = vec![T::zero(); rows * d];
            linear(&y, self.p(bo.wo, d * d), self.p(bo.bo, d), rows, d, d, &mut o);
            let drop1 = match rng.as_deref_mut() {
                Some(g) if drop_p > 0.0 => Some(dropout_mask::<T>(rows * d, drop_p, g)),
                _ => None,
            };
            match &drop1 {
                Some(m) => x.iter_mut().zip(&o).zip(m).for_each(|((a, b), k)| *a += *b * *k),
                None => x.iter_mut().zip(&o).for_each(|(a, b)| *a += *b),
            }

            let mut h2 = vec![T::zero(); rows * d];
            let ln2 = layer_norm(&x, self.p(bo.ln2_g, d), self.p(bo.ln2_b, d), d, &mut h2);
            let mut u = vec![T::zero(); rows * f];
            linear(&h2, self.p(bo.w1, d * f), self.p(bo.b1, f), rows, d, f, &mut u);
            let g: Vec<T> = u.iter().map(|&z| gelu(z)).collect();
            let mut m = vec![T::zero(); rows * d];
            linear(&g, self.p(bo.w2, f * d), self.p(bo.b2, d), rows, f, d, &mut m);
            let drop2 = match rng.as_deref_mut() {
                Some(gr) if drop_p > 0.0 => Some(dropout_mask::<T>(rows * d, drop_p, gr)),
                _ => None,
            };
            match &drop2 {
                Some(mk) => x.iter_mut().zip(&m).zip(mk).for_each(|((a, b), k)| *a += *b * *k),
                None => x.iter_mut().zip(&m).for_each(|(a, b)| *a += *b),
            }
            blocks.push(BlockCache {
                ln1,
                h1,
                qkv,
                att,
                y,
                drop1,
                ln2,
                h2,
                u,
                g,
                drop2,
            });
        }
        let mut hf = vec![T::zero(); rows * d];
        let lnf = layer_norm(&x, self.p(self.layout.lnf_g, d), self.p(self.layout.lnf_b, d), d, &mut hf);
        let mut logits = vec![T::zero(); rows * v];
        linear(&hf, self.p(self.layout.head_w, d * v), self.p(self.layout.head_b, v), rows, d, v, &mut logits);
        (
            logits,
            Cache {
                drop0,
                blocks,
                lnf,
                hf,
            },
        )
    }

    /// Gradient of the loss w.r.t. all parameters given dL/dlogits.
    pub(crate) fn backward_packed(&self, batch: &Packed, cache: &Cache<T>, dlogits: &[T]) -> Vec<T> {
        let c = &self.config;
        let (d, f, v, h) = (c.embed_dim, c.ff_dim, c.vocab_size, c.heads);
        let rows = batch.rows();
        let lay = &self.layout;
        let mut grad = vec![T::zero(); lay.len];

        let mut dhf = vec![T::zero(); rows * d];
        {
            let (gw, gb) = two_mut(&mut grad, lay.head_w, d * v, lay.head_b, v);
            linear_back(&cache.hf, self.p(lay.head_w, d * v), dlogits, rows, d, v, gw, gb, &mut dhf, false);
        }
        let mut dx = vec![T::zero(); rows * d];
        {
            let (gg, gb) = two_mut(&mut grad, lay.lnf_g, d, lay.lnf_b, d);
            layer_norm_back(&dhf, &cache.lnf, self.p(lay.lnf_g, d), d, gg, gb, &mut dx);
        }

        for (bo, bc) in lay.blocks.iter().zip(&cache.blocks).rev() {
            // MLP branch
            let dm: Vec<T> = match &bc.drop2 {
                Some(mk) => dx.iter().zip(mk).map(|(a, b)| *a * *b).collect(),
                None => dx.clone(),
            };
            let mut dg = vec![T::zero(); rows * f];
            {
                let (gw, gb) = two_mut(&mut grad, bo.w2, f * d, bo.b2, d);
                linear_back(&bc.g, self.p(bo.w2, f * d), &dm, rows, f, d, gw, gb, &mut dg, false);
            }
            for (gv, &uv) in dg.iter_mut().zip(&bc.u) {
                *gv *= gelu_grad(uv);
            }
            let mut dh2 = vec![T::zero(); rows * d];
            {
                let (gw, gb) = two_mut(&mut grad, bo.w1, d * f, bo.b1, f);
                linear_back(&bc.h2, self.p(bo.w1, d * f), &dg, rows, d, f, gw, gb, &mut dh2, false);
            }
            {
                let (gg, gb) = two_mut(&mut grad, bo.ln2_g, d, bo.ln2_b, d);
                layer_norm_back(&dh2, &bc.ln2, self.p(bo.ln2_g, d), d, gg, gb, &mut dx);
            }

            // attention branch
            let do_: Vec<T> = match &bc.drop1 {
                Some(mk) => dx.iter().zip(mk).map(|(a, b)| *a * *b).collect(),
                None => dx.clone(),
            };
            let mut dy = vec![T::zero(); rows * d];
            {
                let (gw, gb) = two_mut(&mut grad, bo.wo, d * d, bo.bo, d);
                linear_back(&bc.y, self.p(bo.wo, d * d), &do_, rows, d, d, gw, gb, &mut dy, false);
            }
            let mut dqkv = vec![T::zero(); rows * 3 * d];
            attention_backward(&bc.qkv, &bc.att, &dy, &batch.seqs, d, h, &mut dqkv);
            let mut dh1 = vec![T::zero(); rows * d];
            {
                let (gw, gb) = two_mut(&mut grad, bo.wqkv, d * 3 * d, bo.bqkv, 3 * d);
                linear_back(&bc.h1, self.p(bo.wqkv, d * 3 * d), &dqkv, rows, d, 3 * d, gw, gb, &mut dh1, false);
            }
            {
                let (gg, gb) = two_mut(&mut grad, bo.ln1_g, d, bo.ln1_b, d);
                layer_norm_back(&dh1, &bc.ln1, self.p(bo.ln1_g, d), d, gg, gb, &mut dx);
            }
        }

        if let Some(m) = &cache.drop0 {
            dx.iter_mut().zip(m).for_each(|(a, b)| *a *= *b);
        }
        for r in 0..rows {
            let tk = batch.tokens[r] as usize;
            let ps = batch.positions[r];
            for i in 0..d {
                grad[lay.wte + tk * d + i] += dx[r * d + i];
                grad[lay.wpe + ps * d + i] += dx[r * d + i];
            }
        }
        grad
    }

    /// Logits of shape (batch, length, vocab) for right-padded sequences.
    pub fn forward(&self, batch: &[Vec<u32>], pad: u32) -> Result<Vec<T>, PolicyError> {
        let len = batch.iter().map(Vec::len).max().unwrap_or(0);
        let padded: Vec<Vec<u32>> = batch
            .iter()
            .map(|s| {
                let mut p = s.clone();
                p.resize(len, pad);
                p
            })
            .collect();
        let packed = Packed::new(&padded);
        self.check_tokens(&packed)?;
        Ok(self.forward_packed(&packed, None).0)
    }

    /// Mean next-token cross-entropy over the positions flagged in
    /// `targets` (`targets[r]` is the id predicted from row `r`, if counted),
    /// with its gradient.
    pub(crate) fn packed_loss_and_grad(
        &self,
        batch: &Packed,
        targets: &[Option<u32>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<T>), PolicyError> {
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return Err(PolicyError::NoTargets);
        }
        let v = self.config.vocab_size;
        let (logits, cache) = self.forward_packed(batch, rng);
        let (loss, dlogits) = cross_entropy(&logits, targets, v, count);
        if !loss.is_finite() {
            return Err(PolicyError::NonFinite);
        }
        Ok((loss, self.backward_packed(batch, &cache, &dlogits)))
    }

    pub(crate) fn packed_loss(&self, batch: &Packed, targets: &[Option<u32>]) -> Result<(f64, usize), PolicyError> {
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return Err(PolicyError::NoTargets);
        }
        let (logits, _) = self.forward_packed(batch, None);
        let (loss, _) = cross_entropy(&logits, targets, self.config.vocab_size, count);
        Ok((loss, count))
    }

    /// Mean next-token cross-entropy over `seqs` and its gradient. With
    /// `mask_prompt` only the plan tokens (from the boundary through
    /// `[endofplan]`) are predicted; otherwise every token after the first.
    pub fn loss_and_grad(&self, seqs: &[TokenSeq], mask_prompt: bool) -> Result<(f64, Vec<T>), PolicyError> {
        let (batch, targets) = shift_targets(seqs, mask_prompt);
        self.check_tokens(&batch)?;
        self.packed_loss_and_grad(&batch, &targets, None)
    }

    pub fn loss(&self, seqs: &[TokenSeq], mask_prompt: bool) -> Result<f64, PolicyError> {
        let (batch, targets) = shift_targets(seqs, mask_prompt);
        self.check_tokens(&batch)?;
        Ok(self.packed_loss(&batch, &targets)?.0)
    }
}

/// Inputs are each sequence minus its last token; row `r` predicts the next
/// token when that token is counted.
pub(crate) fn shift_targets(seqs: &[TokenSeq], mask_prompt: bool) -> (Packed, Vec<Option<u32>>) {
    let inputs: Vec<&[u32]> = seqs.iter().map(|s| &s.ids[..s.ids.len().saturating_sub(1)]).collect();
    let batch = Packed::new(&inputs);
    let mut targets = Vec::with_capacity(batch.rows());
    for s in seqs {
        let first = if mask_prompt { s.boundary.max(1) } else { 1 };
        for (j, &t) in s.ids.iter().enumerate().skip(1) {
            targets.push((j >= first).then_some(t));
        }
    }
    (batch, targets)
}

/// Mean cross-entropy over counted rows and its gradient w.r.t. logits.
fn cross_entropy<T: Scalar>(logits: &[T], targets: &[Option<u32>], v: usize, count: usize) -> (f64, Vec<T>) {
    let mut d = vec![T::zero(); logits.len()];
    let mut total = 0.0f64;
    let inv = 1.0 / count as f64;
    for (r, t) in targets.iter().enumerate() {
        let Some(t) = t else { continue };
        let row = &logits[r * v..(r + 1) * v];
        let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b.f64()));
        let z: f64 = row.iter().map(|&x| (x.f64() - mx).exp()).sum();
        let lse = mx + z.ln();
        total += lse - row[*t as usize].f64();
        for j in 0..v {
            let p = (row[j].f64() - lse).exp();
            let y = if j == *t as usize { 1.0 } else { 0.0 };
            d[r * v + j] = T::of((p - y) * inv);
        }
    }
    (total * inv, d)
}

fn two_mut<T>(buf: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    assert!(a + alen <= b, "tensor order");
    let (lo, hi) = buf.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

/// Causal multi-head attention over each packed sequence. Returns the
/// attention probabilities, per sequence and head, as L×L blocks.
fn attention_forward<T: Scalar>(qkv: &[T], seqs: &[(usize, usize)], d: usize, heads: usize, y: &mut [T]) -> Vec<T> {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let total: usize = seqs.iter().map(|&(_, l)| l * l * heads).sum();
    let mut att = vec![T::zero(); total];
    let mut off = 0;
    for &(o, l) in seqs {
        for hh in 0..heads {
            let p = &mut att[off..off + l * l];
            let q = Mat::strided(&qkv[o * 3 * d + hh * dh..], 3 * d, 1);
            let kt = Mat::strided(&qkv[o * 3 * d + d + hh * dh..], 1, 3 * d);
            gemm(l, dh, l, scale, q, kt, T::zero(), p, l);
            for i in 0..l {
                let row = &mut p[i * l..(i + 1) * l];
                let mx = row[..=i].iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                let mut z = T::zero();
                for e in row[..=i].iter_mut() {
                    *e = (*e - mx).exp();
                    z += *e;
                }
                for e in row[..=i].iter_mut() {
                    *e /= z;
                }
                row[i + 1..].fill(T::zero());
            }
            let vv = Mat::strided(&qkv[o * 3 * d + 2 * d + hh * dh..], 3 * d, 1);
            gemm(l, l, dh, T::one(), Mat::rm(p, l), vv, T::zero(), &mut y[o * d + hh * dh..], d);
            off += l * l;
        }
    }
    att
}

fn attention_backward<T: Scalar>(
    qkv: &[T],
    att: &[T],
    dy: &[T],
    seqs: &[(usize, usize)],
    d: usize,
    heads: usize,
    dqkv: &mut [T],
) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut off = 0;
    let mut dp = Vec::new();
    for &(o, l) in seqs {
        dp.resize(l * l, T::zero());
        for hh in 0..heads {
            let p = &att[off..off + l * l];
            let dyh = Mat::strided(&dy[o * d + hh * dh..], d, 1);
            let vt = Mat::strided(&qkv[o * 3 * d + 2 * d + hh * dh..], 1, 3 * d);
            gemm(l, dh, l, T::one(), dyh, vt, T::zero(), &mut dp, l);
            gemm(l, l, dh, T::one(), Mat::tr(p, l), dyh, T::zero(), &mut dqkv[o * 3 * d + 2 * d + hh * dh..], 3 * d);
            for i in 0..l {
                let pr = &p[i * l..(i + 1) * l];
                let dr = &mut dp[i * l..(i + 1) * l];
                let s = (0..=i).fold(T::zero(), |a, j| a + pr[j] * dr[j]);
                for j in 0..=i {
                    dr[j] = pr[j] * (dr[j] - s);
                }
                dr[i + 1..].fill(T::zero());
            }
            let k = Mat::strided(&qkv[o * 3 * d + d + hh * dh..], 3 * d, 1);
            let q = Mat::strided(&qkv[o * 3 * d + hh * dh..], 3 * d, 1);
            gemm(l, l, dh, scale, Mat::rm(&dp, l), k, T::zero(), &mut dqkv[o * 3 * d + hh * dh..], 3 * d);
            gemm(l, l, dh, scale, Mat::tr(&dp, l), q, T::zero(), &mut dqkv[o * 3 * d + d + hh * dh..], 3 * d);
            off += l * l;
        }
    }
}
