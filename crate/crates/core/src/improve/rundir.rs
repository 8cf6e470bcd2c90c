use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{iterate, pretrain, resolve, seed_cache, ImproveError, IterationReport, LoopConfig};
use crate::domains::{read_jsonl, write_jsonl, DatasetRecord};
use crate::harvest::SolutionCache;
use crate::policy::Checkpoint;

/// Summary of pretraining, stored as `iter-0/report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PretrainReport {
    pub examples: usize,
    pub valid_examples: usize,
    pub steps: u64,
    pub final_loss: Option<f64>,
    pub best_valid_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub mean_plan_length: f64,
    pub secs: f64,
}

/// On-disk state of one run:
///
/// ```text
/// config.json  train.jsonl  valid.jsonl  cache.jsonl
/// iter-0/{checkpoint, report.json, train-log.csv, cache.jsonl}
/// iter-k/{checkpoint, finetune.jsonl, report.json, train-log.csv, cache.jsonl}
/// ```
///
/// An iteration counts as complete once its `report.json` exists; it is
/// written last.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn iter_dir(&self, k: usize) -> PathBuf {
        self.root.join(format!("iter-{k}"))
    }

    pub fn checkpoint_path(&self, k: usize) -> PathBuf {
        self.iter_dir(k).join("checkpoint")
    }

    pub fn eval_path(&self, k: usize) -> PathBuf {
        self.root.join("eval").join(format!("iter-{k}.json"))
    }

    pub fn config(&self) -> Result<LoopConfig, ImproveError> {
        let p = self.root.join("config.json");
        let text = fs::read_to_string(&p).map_err(|e| ImproveError::RunDir(format!("{}: {e}", p.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn train_records(&self) -> Result<Vec<DatasetRecord>, ImproveError> {
        Ok(read_jsonl(self.root.join("train.jsonl"))?)
    }

    pub fn completed(&self, k: usize) -> bool {
        self.iter_dir(k).join("report.json").is_file()
    }

    /// Highest iteration whose report exists, if pretraining finished.
    pub fn last_completed(&self) -> Option<usize> {
        if !self.completed(0) {
            return None;
        }
        let mut k = 0;
        while self.completed(k + 1) {
            k += 1;
        }
        Some(k)
    }

    pub fn load_checkpoint(&self, k: usize) -> Result<Checkpoint, ImproveError> {
        if !self.completed(k) {
            return Err(ImproveError::RunDir(format!("iteration {k} is not complete")));
        }
        Ok(Checkpoint::load(&self.checkpoint_path(k))?)
    }

    pub fn load_cache(&self, k: usize) -> Result<SolutionCache, ImproveError> {
        Ok(SolutionCache::load(&self.iter_dir(k).join("cache.jsonl"))?)
    }

    pub fn pretrain_report(&self) -> Result<PretrainReport, ImproveError> {
        let text = fs::read_to_string(self.iter_dir(0).join("report.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn reports(&self) -> Result<Vec<IterationReport>, ImproveError> {
        let last = self.last_completed().unwrap_or(0);
        (1..=last)
            .map(|k| {
                let text = fs::read_to_string(self.iter_dir(k).join("report.json"))?;
                Ok(serde_json::from_str(&text)?)
            })
            .collect()
    }

    /// Creates the run and pretrains the initial policy. Fails if the
    /// directory already holds a pretrained run.
    pub fn init(
        &self,
        cfg: &LoopConfig,
        train_set: &[DatasetRecord],
        valid_set: &[DatasetRecord],
    ) -> Result<PretrainReport, ImproveError> {
        if self.completed(0) {
            return Err(ImproveError::RunDir(format!(
                "{} already contains a pretrained policy",
                self.root.display()
            )));
        }
        fs::create_dir_all(self.iter_dir(0))?;
        fs::write(self.root.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
        write_jsonl(self.root.join("train.jsonl"), train_set)?;
        write_jsonl(self.root.join("valid.jsonl"), valid_set)?;
        let t = Instant::now();
        let (ckpt, outcome) = pretrain(cfg, train_set, valid_set)?;
        let lens: Vec<f64> = train_set
            .iter()
            .filter_map(|r| r.plan.as_ref())
            .map(|p| p.len() as f64)
            .collect();
        let report = PretrainReport {
            examples: train_set.len(),
            valid_examples: valid_set.len(),
            steps: outcome.optimizer.step,
            final_loss: outcome.log.steps.last().map(|s| s.1),
            best_valid_loss: outcome.best.as_ref().map(|b| b.1),
            best_epoch: outcome.best.as_ref().map(|b| b.2),
            mean_plan_length: lens.iter().sum::<f64>() / lens.len().max(1) as f64,
            secs: t.elapsed().as_secs_f64(),
        };
        let dir = self.iter_dir(0);
        ckpt.save(&dir.join("checkpoint"))?;
        fs::write(dir.join("train-log.csv"), outcome.log.to_csv())?;
        let cache = seed_cache(train_set);
        cache.save(&dir.join("cache.jsonl"))?;
        cache.save(&self.root.join("cache.jsonl"))?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        Ok(report)
    }

    /// Runs iterations until `iterations` are complete. With `resume` the
    /// run continues after its last complete iteration; without it the run
    /// must not have any yet. Returns the reports of the iterations run now.
    pub fn improve(&self, iterations: usize, resume: bool) -> Result<Vec<IterationReport>, ImproveError> {
        let cfg = self.config()?;
        let last = self
            .last_completed()
            .ok_or_else(|| ImproveError::RunDir("no pretrained policy; run pretraining first".into()))?;
        if last > 0 && !resume {
            return Err(ImproveError::RunDir(format!(
                "{last} iterations already complete; pass resume to continue"
            )));
        }
        let train_set = resolve(&self.train_records()?)?;
        let mut ckpt = self.load_checkpoint(last)?;
        let mut cache = self.load_cache(last)?;
        let mut reports = Vec::new();
        for k in last + 1..=iterations {
            let dir = self.iter_dir(k);
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            fs::create_dir_all(&dir)?;
            let (next, records, report, log) = iterate(&cfg, k, &ckpt, &train_set, &mut cache)?;
            write_jsonl(dir.join("finetune.jsonl"), &records)?;
            next.save(&dir.join("checkpoint"))?;
            cache.save(&dir.join("cache.jsonl"))?;
            fs::write(dir.join("train-log.csv"), log.to_csv())?;
            fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            cache.save(&self.root.join("cache.jsonl"))?;
            ckpt = next;
            reports.push(report);
        }
        Ok(reports)
    }
}
