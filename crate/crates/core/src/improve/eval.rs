use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{parallel_map, resolve, ImproveError};
use crate::domains::{DatasetRecord, ProblemSet};
use crate::harvest::{best_through_graph, compile_and_filter};
use crate::policy::{sample_plans, Checkpoint, PolicyError, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalConfig {
    /// Candidate counts to report; one draw of the largest is shared, so a
    /// smaller count sees a prefix of the same candidates.
    pub ns: Vec<usize>,
    pub with_bfs: bool,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub workers: usize,
}

/// Best-of-N outcome for one N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NResult {
    pub n: usize,
    pub valid: usize,
    /// Shortest valid candidate.
    pub length: Option<usize>,
    /// Shortest plan through the graph of all valid candidates.
    pub bfs_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalRecord {
    pub id: String,
    pub optimal_length: Option<usize>,
    pub by_n: Vec<NResult>,
    /// Wall time of sampling, decoding and selection for the largest N.
    pub latency_secs: f64,
}

impl EvalRecord {
    pub fn at(&self, n: usize) -> Option<&NResult> {
        self.by_n.iter().find(|r| r.n == n)
    }
}

/// Evaluation of one checkpoint, stored as `eval/iter-<k>.json` in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalRun {
    pub iteration: usize,
    pub config: EvalConfig,
    pub records: Vec<EvalRecord>,
}

impl EvalRun {
    pub fn save(&self, path: &Path) -> Result<(), ImproveError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ImproveError> {
        let text = std::fs::read_to_string(path).map_err(|e| ImproveError::RunDir(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Samples candidates for every test problem and reports best-of-N lengths
/// (and graph-search lengths with `with_bfs`) for each requested N.
pub fn evaluate(ckpt: &Checkpoint, test: &[DatasetRecord], cfg: &EvalConfig) -> Result<Vec<EvalRecord>, ImproveError> {
    cfg.sampler.validate()?;
    let resolved = resolve(test)?;
    let nmax = cfg.ns.iter().copied().max().unwrap_or(0);
    let workers = if cfg.workers > 0 {
        cfg.workers
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    };
    let out: Vec<Result<EvalRecord, PolicyError>> = parallel_map(&resolved, workers, |r| {
        let t = Instant::now();
        let cands = sample_plans(&ckpt.model, &ckpt.vocab, &r.instance.problem, &r.task, &cfg.sampler, nmax)?;
        let decoded: Vec<Option<Vec<u32>>> = cands.into_iter().map(Result::ok).collect();
        let mut by_n = Vec::with_capacity(cfg.ns.len());
        for &n in &cfg.ns {
            let prefix: Vec<Vec<u32>> = decoded[..n].iter().flatten().cloned().collect();
            let valid = compile_and_filter(&r.task, &prefix);
            let length = valid.iter().map(|c| c.actions.len()).min();
            let bfs_length = if cfg.with_bfs {
                best_through_graph(&r.task, &prefix).map(|p| p.len())
            } else {
                None
            };
            by_n.push(NResult {
                n,
                valid: valid.len(),
                length,
                bfs_length,
            });
        }
        Ok(EvalRecord {
            id: r.record.id.clone(),
            optimal_length: r.record.optimal_length,
            by_n,
            latency_secs: t.elapsed().as_secs_f64(),
        })
    });
    Ok(out.into_iter().collect::<Result<_, _>>()?)
}

/// Fails unless no test problem shares (init, goal) with a training problem.
pub fn check_disjoint(train: &ProblemSet, test: &ProblemSet) -> Result<(), ImproveError> {
    if test.disjoint_from(train) {
        Ok(())
    } else {
        Err(ImproveError::InvalidConfig("test problems overlap the training set".into()))
    }
}
