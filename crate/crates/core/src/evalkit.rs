//! Precision and recall against planted groups, and the Pearson baseline.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::column_correlation;
use crate::netweave::EdgeWeightMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: usize,
    /// `None` when nothing was predicted for this group.
    pub precision: Option<f64>,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method_tag: String,
    pub per_group: Vec<GroupScore>,
    pub seeds: Vec<u64>,
    pub config_digest: String,
}

/// Matches every truth group to the predicted cluster with the largest
/// overlap (lower index on ties) and counts hits. Several groups may match
/// the same cluster.
pub fn score(predicted: &[Vec<usize>], truth: &[Vec<usize>]) -> Vec<GroupScore> {
    let predicted: Vec<BTreeSet<usize>> = predicted.iter().map(|c| c.iter().copied().collect()).collect();
    truth
        .iter()
        .enumerate()
        .map(|(group, members)| {
            let members: BTreeSet<usize> = members.iter().copied().collect();
            let best = predicted
                .iter()
                .map(|c| c.intersection(&members).count())
                .enumerate()
                .fold(None, |acc: Option<(usize, usize)>, (k, hits)| match acc {
                    Some((_, h)) if h >= hits => acc,
                    _ => Some((k, hits)),
                });
            let (tp, predicted_size) = best.map_or((0, 0), |(k, hits)| (hits, predicted[k].len()));
            let fp = predicted_size - tp;
            let fn_ = members.len() - tp;
            GroupScore {
                group,
                precision: (predicted_size > 0).then(|| tp as f64 / predicted_size as f64),
                recall: if members.is_empty() { 0.0 } else { tp as f64 / members.len() as f64 },
                tp,
                fp,
                r#fn: fn_,
            }
        })
        .collect()
}

/// Mean over the defined values, and how many were undefined.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut count, mut missing) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                count += 1;
            }
            None => missing += 1,
        }
    }
    ((count > 0).then(|| sum / count as f64), missing)
}

/// `|cor(z_i, z_j)|` with a zero diagonal, max-normalized.
pub fn pearson_matrix(z_star: &DMatrix<f64>, gene_ids: Vec<String>) -> Result<EdgeWeightMatrix> {
    let r = column_correlation(z_star).abs();
    EdgeWeightMatrix::from_raw(r, gene_ids)
}

/// One averaged cell of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub group: usize,
    pub dependency: f64,
    pub precision: Option<f64>,
    pub recall: f64,
    pub datasets: usize,
    pub undefined_precision: usize,
}

/// Averages reports of one method and dependency level per group.
pub fn summarize(method: &str, dependency: f64, reports: &[Vec<GroupScore>]) -> Vec<SummaryRow> {
    let groups = reports.iter().map(Vec::len).max().unwrap_or(0);
    (0..groups)
        .map(|g| {
            let scores: Vec<&GroupScore> = reports.iter().filter_map(|r| r.get(g)).collect();
            let (precision, undefined_precision) = mean_defined(scores.iter().map(|s| s.precision));
            SummaryRow {
                method: method.to_string(),
                group: g,
                dependency,
                precision,
                recall: scores.iter().map(|s| s.recall).sum::<f64>() / scores.len().max(1) as f64,
                datasets: scores.len(),
                undefined_precision,
            }
        })
        .collect()
}

/// Writes rows as `pathway,method,` followed by a precision and recall
/// column per dependency level.
pub fn write_table(w: &mut impl Write, rows: &[SummaryRow]) -> Result<()> {
    let mut levels: Vec<f64> = rows.iter().map(|r| r.dependency).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.group, r.method.clone())) {
            keys.push((r.group, r.method.clone()));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0));

    let mut out = String::from("pathway,method");
    for l in &levels {
        let pct = (l * 100.0).round();
        out.push_str(&format!(",precision_{pct}pct,recall_{pct}pct"));
    }
    out.push('\n');
    for (group, method) in keys {
        out.push_str(&format!("{},{method}", group + 1));
        for l in &levels {
            match rows.iter().find(|r| r.group == group && r.method == method && r.dependency == *l) {
                Some(r) => {
                    let p = r.precision.map_or("NA".to_string(), |p| format!("{p:.3}"));
                    out.push_str(&format!(",{p},{:.3}", r.recall));
                }
                None => out.push_str(",NA,NA"),
            }
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io("writing summary table", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn formula_example() {
        // TP=10, FP=2, FN=5
        let truth = vec![(0..15).collect::<Vec<_>>()];
        let predicted = vec![(5..15).chain([20, 21]).collect::<Vec<_>>()];
        let s = &score(&predicted, &truth)[0];
        assert_eq!((s.tp, s.fp, s.r#fn), (10, 2, 5));
        assert_abs_diff_eq!(s.precision.unwrap(), 0.8333, epsilon = 1e-4);
        assert_abs_diff_eq!(s.recall, 0.6667, epsilon = 1e-4);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let truth = vec![vec![1, 2, 3], vec![7, 8]];
        let s = score(&truth, &truth);
        assert!(s.iter().all(|g| g.precision == Some(1.0) && g.recall == 1.0));
        let none = score(&[], &truth);
        assert!(none.iter().all(|g| g.precision.is_none() && g.recall == 0.0));
        assert_eq!(mean_defined([Some(0.5), None, Some(1.0)]), (Some(0.75), 1));
    }

    #[test]
    fn overlap_ties_go_to_the_lower_index() {
        let truth = vec![vec![0, 1, 2, 3]];
        let predicted = vec![vec![0, 1, 9], vec![2, 3]];
        let s = &score(&predicted, &truth)[0];
        assert_eq!((s.tp, s.fp), (2, 1));
    }

    #[test]
    fn pearson_examples() {
        let z = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
        let a = pearson_matrix(&z, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert!(a.get(0, 2).abs() < 1e-12);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn table_layout() {
        let rows = vec![
            SummaryRow {
                method: "scca.hc".into(),
                group: 0,
                dependency: 0.0,
                precision: Some(0.861),
                recall: 0.533,
                datasets: 10,
                undefined_precision: 0,
            },
            SummaryRow {
                method: "scca.hc".into(),
                group: 0,
                dependency: 0.33,
                precision: None,
                recall: 0.0,
                datasets: 10,
                undefined_precision: 10,
            },
        ];
        let mut buf = Vec::new();
        write_table(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "pathway,method,precision_0pct,recall_0pct,precision_33pct,recall_33pct\n1,scca.hc,0.861,0.533,NA,0.000\n"
        );
    }
}
