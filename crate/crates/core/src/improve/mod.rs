//! The self-improvement loop: pretrain a policy on baseline plans, then
//! repeatedly sample candidates on a subset of training problems, harvest
//! shorter plans and finetune on them.

mod eval;
mod rundir;

use std::collections::BTreeMap;
use std::thread;
use std::time::Instant;

use log::{info, warn};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{check_disjoint, evaluate, EvalConfig, EvalRecord, EvalRun, NResult};
pub use rundir::{PretrainReport, RunDir};

use crate::domains::{derive_rng, DatasetRecord, DomainError, DomainKind, DomainParams, Instance};
use crate::harvest::{harvest, HarvestError, SolutionCache};
use crate::pddl::GroundedTask;
use crate::policy::{
    sample_plans, train, Candidate, Checkpoint, Model, ModelConfig, PolicyError, SamplerConfig, TrainLog, TrainOutcome,
    TrainSchedule,
};
use crate::tokenizer::{build_vocab, TokenSeq, TokenizerError, Vocabulary};

#[derive(Debug, Error)]
pub enum ImproveError {
    #[error("invalid loop config: {0}")]
    InvalidConfig(String),
    #[error("record `{id}`: {reason}")]
    BadRecord { id: String, reason: String },
    #[error("run directory: {0}")]
    RunDir(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Harvest(#[from] HarvestError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Ground(#[from] crate::pddl::GroundError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// RNG stream labels below the iteration index.
mod phase {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const SUBSET: u64 = 3;
    pub const SAMPLE: u64 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LoopConfig {
    /// Generator parameters of the dataset; they fix the vocabulary.
    pub params: DomainParams,
    pub model: ModelConfig,
    pub pretrain: TrainSchedule,
    pub finetune: TrainSchedule,
    /// Sampler for candidate generation inside the loop; its seed is
    /// replaced per iteration.
    pub sampler: SamplerConfig,
    pub n_loop: usize,
    /// Problems per iteration.
    pub m: usize,
    /// Candidates per problem.
    pub n: usize,
    pub seed: u64,
    /// Sampling threads; 0 uses the available parallelism.
    #[serde(default)]
    pub workers: usize,
}

impl LoopConfig {
    /// Desk-scale defaults for `params`: 15 iterations of 200 problems with
    /// 32 candidates, pretraining for 50 epochs at 3e-3 and finetuning for
    /// 30 epochs at a tenth of that learning rate.
    pub fn new(params: DomainParams, seed: u64) -> Self {
        let kind = params.kind();
        let pretrain = TrainSchedule {
            lr: 3e-3,
            warmup_steps: 100,
            epochs: 50,
            ..TrainSchedule::default()
        };
        let finetune = TrainSchedule {
            lr: pretrain.lr / 10.0,
            warmup_steps: 0,
            epochs: 30,
            ..pretrain.clone()
        };
        LoopConfig {
            model: ModelConfig::with_vocab(0),
            params,
            pretrain,
            finetune,
            sampler: SamplerConfig::new(kind.default_temperature(), seed),
            n_loop: 15,
            m: 200,
            n: 32,
            seed,
            workers: 0,
        }
    }

    pub fn kind(&self) -> DomainKind {
        self.params.kind()
    }

    pub fn vocab(&self) -> Vocabulary {
        let limits: BTreeMap<String, usize> = self.kind().object_limits(&self.params).into_iter().collect();
        build_vocab(self.kind().domain_def(), &limits)
    }

    pub fn validate(&self) -> Result<(), ImproveError> {
        let bad = |m: &str| Err(ImproveError::InvalidConfig(m.to_string()));
        if self.m == 0 || self.n == 0 {
            return bad("m and n must be positive");
        }
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.sampler.validate()?;
        let mut model = self.model.clone();
        model.vocab_size = self.vocab().len();
        model.validate()?;
        Ok(())
    }

    fn workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// A dataset record resolved against its domain.
pub struct Resolved {
    pub record: DatasetRecord,
    pub instance: Instance,
    pub task: GroundedTask,
}

pub fn resolve(records: &[DatasetRecord]) -> Result<Vec<Resolved>, ImproveError> {
    records
        .iter()
        .map(|r| {
            let instance = r.instance()?;
            let task = instance.ground()?;
            Ok(Resolved {
                record: r.clone(),
                instance,
                task,
            })
        })
        .collect()
}

/// Token sequences of the records' (problem, plan) pairs.
pub fn encode_records(vocab: &Vocabulary, records: &[Resolved]) -> Result<Vec<TokenSeq>, ImproveError> {
    records
        .iter()
        .map(|r| {
            let bad = |reason: &str| ImproveError::BadRecord {
                id: r.record.id.clone(),
                reason: reason.to_string(),
            };
            let plan = r.record.plan_actions(&r.task).ok_or_else(|| bad("plan is missing or names unknown actions"))?;
            if !crate::world::validate_actions(&r.task, &plan).is_solution() {
                return Err(bad("plan does not solve the problem"));
            }
            Ok(vocab.encode_example(&r.instance.problem, &r.task, &plan)?)
        })
        .collect()
}

fn model_config(cfg: &LoopConfig, vocab: &Vocabulary, data: &[TokenSeq]) -> Result<ModelConfig, ImproveError> {
    let mut m = cfg.model.clone();
    m.vocab_size = vocab.len();
    let longest = data.iter().map(TokenSeq::len).max().unwrap_or(0);
    if longest > m.context_length {
        return Err(ImproveError::InvalidConfig(format!(
            "longest training sequence has {longest} tokens, context is {}",
            m.context_length
        )));
    }
    Ok(m)
}

/// Trains the initial policy on validated (problem, plan) pairs and selects
/// the parameters with the lowest validation loss when `valid` is non-empty.
pub fn pretrain(
    cfg: &LoopConfig,
    train_set: &[DatasetRecord],
    valid_set: &[DatasetRecord],
) -> Result<(Checkpoint, TrainOutcome), ImproveError> {
    cfg.validate()?;
    let vocab = cfg.vocab();
    let data = encode_records(&vocab, &resolve(train_set)?)?;
    let valid = encode_records(&vocab, &resolve(valid_set)?)?;
    if data.is_empty() {
        return Err(PolicyError::EmptyDataset.into());
    }
    let mc = model_config(cfg, &vocab, &data)?;
    let model = Model::<f32>::new(mc, &mut derive_rng(cfg.seed, &[0, phase::INIT]))?;
    let schedule = TrainSchedule {
        seed: seed_for(cfg.seed, 0, phase::TRAIN),
        ..cfg.pretrain.clone()
    };
    let outcome = train(model, None, &data, (!valid.is_empty()).then_some(&valid[..]), &schedule)?;
    let ckpt = Checkpoint {
        domain: cfg.kind(),
        vocab,
        model: outcome.selected().clone(),
        optimizer: Some(outcome.optimizer.clone()),
    };
    Ok((ckpt, outcome))
}

fn seed_for(seed: u64, iteration: usize, phase: u64) -> u64 {
    use rand::RngCore;
    derive_rng(seed, &[iteration as u64, phase]).next_u64()
}

/// Statistics of one loop iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct IterationReport {
    pub iteration: usize,
    pub problems_sampled: usize,
    pub candidates: usize,
    pub valid_candidates: usize,
    pub valid_candidate_rate: f64,
    pub problems_harvested: usize,
    pub cache_improvements: usize,
    pub mean_harvested_length: Option<f64>,
    /// Mean cache-best length over all cached problems after the iteration.
    pub mean_cache_best_length: Option<f64>,
    pub finetune_examples: usize,
    pub finetune_skipped: bool,
    /// Loss of every finetuning step.
    pub finetune_loss: Vec<f64>,
    pub sample_secs: f64,
    pub harvest_secs: f64,
    pub finetune_secs: f64,
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub(crate) fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// One iteration: sample `m` training problems, draw `n` candidates each,
/// harvest, and finetune from `ckpt`. The cache is updated in place.
pub fn iterate(
    cfg: &LoopConfig,
    iteration: usize,
    ckpt: &Checkpoint,
    train_set: &[Resolved],
    cache: &mut SolutionCache,
) -> Result<(Checkpoint, Vec<DatasetRecord>, IterationReport, TrainLog), ImproveError> {
    if cfg.m > train_set.len() {
        return Err(ImproveError::InvalidConfig(format!(
            "m = {} exceeds the {} training problems",
            cfg.m,
            train_set.len()
        )));
    }
    let mut rng = derive_rng(cfg.seed, &[iteration as u64, phase::SUBSET]);
    let chosen: Vec<&Resolved> = index::sample(&mut rng, train_set.len(), cfg.m)
        .into_iter()
        .map(|i| &train_set[i])
        .collect();

    let t0 = Instant::now();
    let sc = SamplerConfig {
        seed: seed_for(cfg.seed, iteration, phase::SAMPLE),
        ..cfg.sampler.clone()
    };
    let sampled: Vec<Result<Vec<Candidate>, PolicyError>> = parallel_map(&chosen, cfg.workers(), |r| {
        sample_plans(&ckpt.model, &ckpt.vocab, &r.instance.problem, &r.task, &sc, cfg.n)
    });
    let candidates: Vec<Vec<Candidate>> = sampled.into_iter().collect::<Result<_, _>>()?;
    let sample_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let inputs: Vec<(&Instance, &GroundedTask, &[Candidate])> = chosen
        .iter()
        .zip(&candidates)
        .map(|(r, c)| (&r.instance, &r.task, &c[..]))
        .collect();
    let outcome = harvest(&inputs, cache, iteration)?;
    let harvest_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let resolved = resolve(&outcome.records)?;
    let data = encode_records(&ckpt.vocab, &resolved)?;
    let mut next = ckpt.clone();
    let mut finetune_loss = Vec::new();
    let mut log = TrainLog::default();
    let skipped = data.is_empty();
    if skipped {
        warn!("iteration {iteration}: no problem harvested, finetuning skipped");
    } else {
        let schedule = TrainSchedule {
            seed: seed_for(cfg.seed, iteration, phase::TRAIN),
            ..cfg.finetune.clone()
        };
        let out = train(ckpt.model.clone(), ckpt.optimizer.clone(), &data, None, &schedule)?;
        finetune_loss = out.log.steps.iter().map(|s| s.1).collect();
        log = out.log;
        next.model = out.last;
        next.optimizer = Some(out.optimizer);
    }
    let finetune_secs = t2.elapsed().as_secs_f64();

    let report = IterationReport {
        iteration,
        problems_sampled: chosen.len(),
        candidates: outcome.candidates(),
        valid_candidates: outcome.valid_candidates(),
        valid_candidate_rate: outcome.valid_candidates() as f64 / outcome.candidates().max(1) as f64,
        problems_harvested: outcome.harvested(),
        cache_improvements: outcome.problems.iter().filter(|p| p.cache_improved).count(),
        mean_harvested_length: outcome.mean_harvested_length(),
        mean_cache_best_length: cache.mean_length(),
        finetune_examples: data.len(),
        finetune_skipped: skipped,
        finetune_loss,
        sample_secs,
        harvest_secs,
        finetune_secs,
    };
    info!(
        "iteration {iteration}: {}/{} valid candidates, {} harvested, cache mean {:.3}",
        report.valid_candidates,
        report.candidates,
        report.problems_harvested,
        report.mean_cache_best_length.unwrap_or(f64::NAN)
    );
    Ok((next, outcome.records, report, log))
}

/// Seeds a solution cache with the pretraining plans.
pub fn seed_cache(train_set: &[DatasetRecord]) -> SolutionCache {
    let mut cache = SolutionCache::new();
    for r in train_set {
        if let Some(p) = &r.plan {
            cache.offer(&r.id, p.clone(), 0);
        }
    }
    cache
}

#[cfg(test)]
mod tests;
