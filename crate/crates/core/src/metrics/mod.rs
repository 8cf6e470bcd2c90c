//! Plan-quality metrics, paired significance tests and CSV reports.

mod report;
mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    compare, convergence_csv, eval_files, methods_csv, report_run, rows_csv, rows_from_eval, stats_csv, CONVERGENCE_HEADER,
    METHODS_HEADER, ROWS_HEADER, STATS_HEADER,
};
pub use stats::{bonferroni, mcnemar, wilcoxon_signed_rank, McNemarMode, StatResult, WilcoxonMode};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("plan of length {cost} is shorter than the optimum {optimal}")]
    BelowOptimum { cost: usize, optimal: usize },
    #[error("paired samples differ in length ({0} vs {1})")]
    Unpaired(usize, usize),
    #[error("missing files: {0}")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Improve(Box<crate::improve::ImproveError>),
    #[error(transparent)]
    Domain(#[from] crate::domains::DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<crate::improve::ImproveError> for MetricsError {
    fn from(e: crate::improve::ImproveError) -> Self {
        MetricsError::Improve(Box::new(e))
    }
}

/// Percentage length increase over the optimum; 0 when the optimum is 0.
pub fn regret(cost: usize, optimal: usize) -> Result<f64, MetricsError> {
    if cost < optimal {
        return Err(MetricsError::BelowOptimum { cost, optimal });
    }
    if optimal == 0 {
        return Ok(0.0);
    }
    Ok((cost - optimal) as f64 / optimal as f64 * 100.0)
}

/// `(cost + 1) / (optimal + 1)` as a percentage.
pub fn normalized_length(cost: usize, optimal: usize) -> f64 {
    (cost + 1) as f64 / (optimal + 1) as f64 * 100.0
}

/// Outcome of one method on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricRow {
    pub problem_id: String,
    pub method: String,
    pub completed: bool,
    pub length: Option<usize>,
    pub optimal_length: Option<usize>,
    pub latency_secs: f64,
}

impl MetricRow {
    pub fn check(&self) -> Result<(), MetricsError> {
        if self.completed != self.length.is_some() {
            return Err(MetricsError::Invalid(format!(
                "{} / {}: length must be present exactly when completed",
                self.problem_id, self.method
            )));
        }
        if let (Some(l), Some(o)) = (self.length, self.optimal_length) {
            if l < o {
                return Err(MetricsError::BelowOptimum { cost: l, optimal: o });
            }
        }
        Ok(())
    }
}

/// Mean and standard error (sample standard deviation over √n).
pub fn mean_se(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Summary {
    pub method: String,
    pub problems: usize,
    pub completed: usize,
    pub completion_pct: f64,
    /// Over completed problems (the intersection in intersection mode).
    pub mean_length: Option<f64>,
    pub se_length: Option<f64>,
    pub length_n: usize,
    /// Share of problems with a known optimum solved optimally.
    pub optimality_pct: Option<f64>,
    pub mean_regret: Option<f64>,
    pub mean_latency_secs: Option<f64>,
    pub se_latency_secs: Option<f64>,
}

/// Per-method summaries, sorted by method name. With `intersection`, length
/// statistics only use problems every method completed.
pub fn aggregate(rows: &[MetricRow], intersection: bool) -> Result<Vec<Summary>, MetricsError> {
    let mut by: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        r.check()?;
        by.entry(&r.method).or_default().push(r);
    }
    let common: Option<BTreeSet<&str>> = intersection.then(|| {
        let mut sets = by.values().map(|rs| {
            rs.iter()
                .filter(|r| r.completed)
                .map(|r| r.problem_id.as_str())
                .collect::<BTreeSet<_>>()
        });
        let first = sets.next().unwrap_or_default();
        sets.fold(first, |a, b| a.intersection(&b).copied().collect())
    });
    let mut out = Vec::new();
    for (method, rs) in by {
        let completed = rs.iter().filter(|r| r.completed).count();
        let lens: Vec<f64> = rs
            .iter()
            .filter(|r| common.as_ref().is_none_or(|c| c.contains(r.problem_id.as_str())))
            .filter_map(|r| r.length)
            .map(|l| l as f64)
            .collect();
        let with_opt: Vec<&&MetricRow> = rs.iter().filter(|r| r.optimal_length.is_some()).collect();
        let optimal = with_opt.iter().filter(|r| r.length.is_some() && r.length == r.optimal_length).count();
        let regrets: Vec<f64> = with_opt
            .iter()
            .filter_map(|r| Some(regret(r.length?, r.optimal_length?)))
            .collect::<Result<_, _>>()?;
        let lat: Vec<f64> = rs.iter().map(|r| r.latency_secs).collect();
        let ms = mean_se(&lens);
        let lt = mean_se(&lat);
        out.push(Summary {
            method: method.to_string(),
            problems: rs.len(),
            completed,
            completion_pct: completed as f64 / rs.len() as f64 * 100.0,
            mean_length: ms.map(|m| m.0),
            se_length: ms.map(|m| m.1),
            length_n: lens.len(),
            optimality_pct: (!with_opt.is_empty()).then(|| optimal as f64 / with_opt.len() as f64 * 100.0),
            mean_regret: mean_se(&regrets).map(|m| m.0),
            mean_latency_secs: lt.map(|m| m.0),
            se_latency_secs: lt.map(|m| m.1),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: &str, m: &str, len: Option<usize>, opt: Option<usize>) -> MetricRow {
        MetricRow {
            problem_id: p.into(),
            method: m.into(),
            completed: len.is_some(),
            length: len,
            optimal_length: opt,
            latency_secs: 0.5,
        }
    }

    #[test]
    fn regret_cases() {
        assert_eq!(regret(17, 17).unwrap(), 0.0);
        assert_eq!(regret(0, 0).unwrap(), 0.0);
        assert_eq!(regret(5, 0).unwrap(), 0.0);
        assert_eq!(regret(33, 30).unwrap(), 10.0);
        assert!(matches!(regret(3, 4), Err(MetricsError::BelowOptimum { .. })));
    }

    #[test]
    fn normalized_length_cases() {
        assert_eq!(normalized_length(7, 7), 100.0);
        assert_eq!(normalized_length(0, 0), 100.0);
        assert_eq!(normalized_length(10, 0), 1100.0);
        assert_eq!(normalized_length(3, 1), 200.0);
    }

    #[test]
    fn four_row_fixture() {
        // lengths 4, 6, 6, 8: mean 6, sample variance 8/3, SE sqrt(8/3/4)
        let rows = vec![
            row("a", "m", Some(4), Some(4)),
            row("b", "m", Some(6), Some(5)),
            row("c", "m", Some(6), Some(6)),
            row("d", "m", Some(8), None),
        ];
        let s = &aggregate(&rows, false).unwrap()[0];
        assert_eq!(s.completion_pct, 100.0);
        assert!((s.mean_length.unwrap() - 6.0).abs() < 1e-12);
        assert!((s.se_length.unwrap() - (8.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert!((s.optimality_pct.unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert!((s.mean_regret.unwrap() - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn equal_lengths_have_zero_se() {
        let rows: Vec<MetricRow> = (0..5).map(|i| row(&i.to_string(), "m", Some(3), None)).collect();
        assert_eq!(aggregate(&rows, false).unwrap()[0].se_length, Some(0.0));
    }

    #[test]
    fn intersection_drops_and_is_order_free() {
        let rows = vec![
            row("p", "a", Some(4), None),
            row("q", "a", Some(10), None),
            row("p", "b", Some(6), None),
            row("q", "b", None, None),
        ];
        let s = aggregate(&rows, true).unwrap();
        assert_eq!(s[0].mean_length, Some(4.0));
        assert_eq!(s[1].mean_length, Some(6.0));
        assert_eq!(s[0].completion_pct, 100.0);
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(aggregate(&rev, true).unwrap(), s);
        assert_eq!(aggregate(&rows, false).unwrap()[0].mean_length, Some(7.0));
    }

    #[test]
    fn inconsistent_row_rejected() {
        let mut r = row("p", "a", Some(4), None);
        r.completed = false;
        assert!(aggregate(&[r], false).is_err());
        assert!(aggregate(&[row("p", "a", Some(2), Some(3))], false).is_err());
    }
}
