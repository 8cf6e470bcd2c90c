use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::AdamState;
use super::model::{shift_targets, Model};
use super::PolicyError;
use crate::domains::derive_rng;
use crate::tokenizer::TokenSeq;

/// Optimization settings for one call of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainSchedule {
    pub lr: f64,
    pub warmup_steps: u64,
    /// Cosine decay from `lr` down to `lr * min_lr_ratio` after warmup.
    pub min_lr_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Predict only plan tokens.
    pub mask_prompt: bool,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            lr: 1e-3,
            warmup_steps: 100,
            min_lr_ratio: 0.1,
            epochs: 10,
            batch_size: 8,
            grad_clip: 1.0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mask_prompt: true,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidSchedule(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return bad("min-lr-ratio must lie in [0, 1]");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return bad("grad-clip must be positive");
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, examples: usize) -> u64 {
        examples.div_ceil(self.batch_size) as u64
    }

    /// Learning rate at local step `step` (0-based) of `total`.
    pub fn lr_at(&self, step: u64, total: u64) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let floor = self.lr * self.min_lr_ratio;
        floor + 0.5 * (self.lr - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// (global optimizer step, batch loss, learning rate)
    pub steps: Vec<(u64, f64, f64)>,
    /// (epoch, validation loss)
    pub valid: Vec<(usize, f64)>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,lr\n");
        for (step, loss, lr) in &self.steps {
            writeln!(s, "{step},{loss},{lr}").expect("string write");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: Model<f32>,
    /// Parameters at the epoch with the lowest validation loss, with that
    /// loss and epoch; `None` without a validation set.
    pub best: Option<(Model<f32>, f64, usize)>,
    pub optimizer: AdamState,
    pub log: TrainLog,
}

impl TrainOutcome {
    /// The best-validation model if there is one, else the last.
    pub fn selected(&self) -> &Model<f32> {
        self.best.as_ref().map(|b| &b.0).unwrap_or(&self.last)
    }
}

/// Token-weighted mean loss over a whole set.
pub fn mean_loss(model: &Model<f32>, data: &[TokenSeq], batch_size: usize, mask_prompt: bool) -> Result<f64, PolicyError> {
    let mut total = 0.0;
    let mut count = 0;
    for chunk in data.chunks(batch_size.max(1)) {
        let (batch, targets) = shift_targets(chunk, mask_prompt);
        model.check_tokens(&batch)?;
        let (l, n) = model.packed_loss(&batch, &targets)?;
        total += l * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(PolicyError::NoTargets);
    }
    Ok(total / count as f64)
}

/// AdamW with decoupled weight decay on matrices, global-norm clipping and
/// warmup followed by cosine decay. `optimizer` carries moments and the step
/// counter across calls.
pub fn train(
    model: Model<f32>,
    optimizer: Option<AdamState>,
    data: &[TokenSeq],
    valid: Option<&[TokenSeq]>,
    schedule: &TrainSchedule,
) -> Result<TrainOutcome, PolicyError> {
    schedule.validate()?;
    if data.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut model = model;
    let mut opt = match optimizer {
        Some(o) if o.m.len() == model.params.len() => o,
        Some(_) => return Err(PolicyError::Checkpoint("optimizer state does not match the model".into())),
        None => AdamState::new(model.params.len()),
    };
    let decay = model.layout.decay_mask();
    let total = schedule.steps_per_epoch(data.len()) * schedule.epochs as u64;
    let mut dropout_rng = derive_rng(schedule.seed, &[u64::MAX]);
    let mut log = TrainLog::default();
    let mut best: Option<(Model<f32>, f64, usize)> = None;
    let mut local = 0u64;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..schedule.epochs {
        order.sort_unstable();
        order.shuffle(&mut derive_rng(schedule.seed, &[epoch as u64]));
        for idx in order.chunks(schedule.batch_size) {
            let seqs: Vec<TokenSeq> = idx.iter().map(|&i| data[i].clone()).collect();
            let (batch, targets) = shift_targets(&seqs, schedule.mask_prompt);
            model.check_tokens(&batch)?;
            let (loss, mut grad) = model.packed_loss_and_grad(&batch, &targets, Some(&mut dropout_rng))?;
            let norm = grad.iter().map(|g| (*g as f64) * (*g as f64)).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(PolicyError::NonFinite);
            }
            if norm > schedule.grad_clip {
                let s = (schedule.grad_clip / norm) as f32;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            let lr = schedule.lr_at(local, total);
            opt.step(&mut model.params, &grad, &decay, lr, schedule);
            log.steps.push((opt.step, loss, lr));
            local += 1;
        }
        if let Some(v) = valid.filter(|v| !v.is_empty()) {
            let vl = mean_loss(&model, v, schedule.batch_size, schedule.mask_prompt)?;
            if !vl.is_finite() {
                return Err(PolicyError::NonFinite);
            }
            log.valid.push((epoch, vl));
            if best.as_ref().is_none_or(|b| vl < b.1) {
                best = Some((model.clone(), vl, epoch));
            }
        }
    }
    Ok(TrainOutcome {
        last: model,
        best,
        optimizer: opt,
        log,
    })
}

impl AdamState {
    fn step(&mut self, params: &mut [f32], grad: &[f32], decay: &[bool], lr: f64, s: &TrainSchedule) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (s.beta1, s.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let shrink = (1.0 - lr * s.weight_decay) as f32;
        for i in 0..params.len() {
            let g = grad[i] as f64;
            let m = b1 * self.m[i] as f64 + (1.0 - b1) * g;
            let v = b2 * self.v[i] as f64 + (1.0 - b2) * g * g;
            self.m[i] = m as f32;
            self.v[i] = v as f32;
            if decay[i] {
                params[i] *= shrink;
            }
            let upd = lr * (m / c1) / ((v / c2).sqrt() + s.eps);
            params[i] -= upd as f32;
        }
    }
}
