use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{aggregate, normalized_length, regret, MetricRow, MetricsError, StatResult, Summary};
use super::{mcnemar, wilcoxon_signed_rank, McNemarMode, WilcoxonMode};
use crate::improve::{EvalRun, RunDir};

pub const METHODS_HEADER: &str = "method,problems,completed,completion_pct,mean_length,se_length,length_n,\
optimality_pct,mean_regret,mean_latency_secs,se_latency_secs";
pub const ROWS_HEADER: &str = "problem_id,method,completed,length,optimal_length,regret,normalized_length";
pub const STATS_HEADER: &str = "label,test,statistic,p_value,corrected_p,n,degenerate,note";
pub const CONVERGENCE_HEADER: &str = "iteration,problems_sampled,candidates,valid_candidate_rate,\
problems_harvested,cache_improvements,mean_harvested_length,mean_cache_best_length,finetune_examples,\
final_finetune_loss,eval_n,eval_completion_pct,eval_mean_length";

fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn count(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per problem and N (plus one per N for graph search when the
/// evaluation ran it). Methods are named `<label> N=<n>` and
/// `<label> N=<n>+BFS`.
pub fn rows_from_eval(run: &EvalRun, label: &str) -> Vec<MetricRow> {
    let mut out = Vec::new();
    for rec in &run.records {
        for r in &rec.by_n {
            let mut push = |method: String, length: Option<usize>| {
                out.push(MetricRow {
                    problem_id: rec.id.clone(),
                    method,
                    completed: length.is_some(),
                    length,
                    optimal_length: rec.optimal_length,
                    latency_secs: rec.latency_secs,
                })
            };
            push(format!("{label} N={}", r.n), r.length);
            if run.config.with_bfs {
                push(format!("{label} N={}+BFS", r.n), r.bfs_length);
            }
        }
    }
    out
}

pub fn methods_csv(summaries: &[Summary]) -> String {
    let mut s = format!("{METHODS_HEADER}\n");
    for m in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{},{},{},{},{},{},{}",
            quote(&m.method),
            m.problems,
            m.completed,
            m.completion_pct,
            num(m.mean_length),
            num(m.se_length),
            m.length_n,
            num(m.optimality_pct),
            num(m.mean_regret),
            num(m.mean_latency_secs),
            num(m.se_latency_secs)
        );
    }
    s
}

/// Per-problem rows without timing, so identical runs give identical files.
pub fn rows_csv(rows: &[MetricRow]) -> Result<String, MetricsError> {
    let mut s = format!("{ROWS_HEADER}\n");
    for r in rows {
        r.check()?;
        let (reg, norm) = match (r.length, r.optimal_length) {
            (Some(l), Some(o)) => (Some(regret(l, o)?), Some(normalized_length(l, o))),
            _ => (None, None),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            quote(&r.problem_id),
            quote(&r.method),
            r.completed,
            count(r.length),
            count(r.optimal_length),
            num(reg),
            num(norm)
        );
    }
    Ok(s)
}

pub fn stats_csv(results: &[StatResult]) -> String {
    let mut s = format!("{STATS_HEADER}\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6e},{:.6e},{},{},{}",
            quote(&r.label),
            r.test,
            r.statistic,
            r.p_value,
            r.corrected_p,
            r.n,
            r.degenerate,
            quote(r.note.as_deref().unwrap_or(""))
        );
    }
    s
}

/// Runs a signed-rank test on lengths (over problems both methods solved)
/// and a McNemar test on completion (over problems both methods attempted)
/// for each `(first, second)` method pair. Corrections use the number of
/// pairs as the comparison count within each test family.
pub fn compare(
    rows: &[MetricRow],
    pairs: &[(String, String)],
    wilcoxon: WilcoxonMode,
    mcnemar_mode: McNemarMode,
) -> Result<Vec<StatResult>, MetricsError> {
    let mut by: BTreeMap<(&str, &str), &MetricRow> = BTreeMap::new();
    for r in rows {
        r.check()?;
        by.insert((r.method.as_str(), r.problem_id.as_str()), r);
    }
    let mut lengths = Vec::new();
    let mut flags = Vec::new();
    for (a, b) in pairs {
        let label = format!("{a} vs {b}");
        let mut la = Vec::new();
        let mut lb = Vec::new();
        let mut fa = Vec::new();
        let mut fb = Vec::new();
        for ((m, p), ra) in &by {
            if m != a {
                continue;
            }
            let Some(rb) = by.get(&(b.as_str(), p)) else {
                continue;
            };
            fa.push(ra.completed);
            fb.push(rb.completed);
            if let (Some(x), Some(y)) = (ra.length, rb.length) {
                la.push(x as f64);
                lb.push(y as f64);
            }
        }
        if fa.is_empty() {
            return Err(MetricsError::Invalid(format!("no shared problems for {label}")));
        }
        lengths.push(wilcoxon_signed_rank(&la, &lb, wilcoxon, &label)?);
        flags.push(mcnemar(&fa, &fb, mcnemar_mode, &label)?);
    }
    super::bonferroni(&mut lengths, pairs.len());
    super::bonferroni(&mut flags, pairs.len());
    lengths.extend(flags);
    Ok(lengths)
}

/// Evaluation files present in a run, by iteration.
pub fn eval_files(run: &RunDir) -> Vec<(usize, PathBuf)> {
    let Ok(dir) = fs::read_dir(run.root().join("eval")) else {
        return Vec::new();
    };
    let mut out: Vec<(usize, PathBuf)> = dir
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let k = name.strip_prefix("iter-")?.strip_suffix(".json")?.parse().ok()?;
            Some((k, e.path()))
        })
        .collect();
    out.sort();
    out
}

/// Per-iteration loop statistics, with the smallest-N evaluation of each
/// iteration when one exists.
pub fn convergence_csv(run: &RunDir) -> Result<String, MetricsError> {
    let evals: BTreeMap<usize, PathBuf> = eval_files(run).into_iter().collect();
    let eval_cols = |k: usize| -> Result<String, MetricsError> {
        let Some(p) = evals.get(&k) else {
            return Ok(",,".into());
        };
        let ev = EvalRun::load(p)?;
        let Some(n) = ev.config.ns.iter().copied().min() else {
            return Ok(",,".into());
        };
        let rows: Vec<MetricRow> = rows_from_eval(&ev, "x")
            .into_iter()
            .filter(|r| r.method == format!("x N={n}"))
            .collect();
        let s = aggregate(&rows, false)?;
        Ok(match s.first() {
            Some(s) => format!("{n},{:.4},{}", s.completion_pct, num(s.mean_length)),
            None => format!("{n},,"),
        })
    };
    let mut s = format!("{CONVERGENCE_HEADER}\n");
    let cache0 = run.load_cache(0)?;
    let _ = writeln!(s, "0,,,,,,,{},,,{}", num(cache0.mean_length()), eval_cols(0)?);
    for r in run.reports()? {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{},{},{},{},{},{},{}",
            r.iteration,
            r.problems_sampled,
            r.candidates,
            r.valid_candidate_rate,
            r.problems_harvested,
            r.cache_improvements,
            num(r.mean_harvested_length),
            num(r.mean_cache_best_length),
            r.finetune_examples,
            num(r.finetune_loss.last().copied()),
            eval_cols(r.iteration)?
        );
    }
    Ok(s)
}

/// Writes `convergence.csv`, `methods.csv`, `methods-intersection.csv` and
/// `rows.csv` for a run into `out`. Evaluated iterations appear as methods
/// labelled `pi-<k>`.
pub fn report_run(run: &RunDir, out: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    let required = ["config.json", "train.jsonl", "cache.jsonl", "iter-0/checkpoint", "iter-0/report.json", "iter-0/cache.jsonl"];
    let missing: Vec<&str> = required.iter().copied().filter(|f| !run.root().join(f).is_file()).collect();
    if !missing.is_empty() {
        return Err(MetricsError::Missing(format!("{} (in {})", missing.join(", "), run.root().display())));
    }
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut write = |name: &str, text: String| -> Result<(), MetricsError> {
        let p = out.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    write("convergence.csv", convergence_csv(run)?)?;
    let mut rows = Vec::new();
    for (k, p) in eval_files(run) {
        rows.extend(rows_from_eval(&EvalRun::load(&p)?, &format!("pi-{k}")));
    }
    if !rows.is_empty() {
        write("methods.csv", methods_csv(&aggregate(&rows, false)?))?;
        write("methods-intersection.csv", methods_csv(&aggregate(&rows, true)?))?;
        write("rows.csv", rows_csv(&rows)?)?;
    }
    Ok(written)
}
