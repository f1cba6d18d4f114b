//! Retrieval evaluation: judged relevance tables, run files, normalized
//! discounted cumulative gain, and a paired significance test.
//!
//! File formats follow the usual ad-hoc retrieval conventions. A judgments
//! line is `{qid} 0 {docid} {grade}` and a run line is
//! `{qid} Q0 {docid} {rank} {score} {tag}`, whitespace-separated. Within a
//! query, ranks must be contiguous from 1 and scores must not increase with
//! rank; the writer emits scores with six decimal places so identical runs
//! serialize to identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::ioutil;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("ranks for query {0} are not contiguous from 1")]
    NonContiguousRanks(String),
    #[error("scores for query {0} increase with rank")]
    ScoresNotMonotone(String),
    #[error("cutoff must be at least 1")]
    InvalidK,
    #[error("metric tables cover different queries ({0} unpaired)")]
    MismatchedQids(usize),
    #[error("paired differences have (near-)zero variance")]
    DegenerateVariance,
    #[error("paired test needs at least two queries, got {0}")]
    TooFewQueries(usize),
}

/// How a relevance grade converts into gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    #[default]
    Linear,
    Exponential,
}

impl Gain {
    fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2.0f64.powi(grade as i32) - 1.0,
        }
    }
}

/// Relevance grades keyed by query, then document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QrelsTable(BTreeMap<String, BTreeMap<String, u32>>);

impl QrelsTable {
    pub fn new() -> Self {
        QrelsTable(BTreeMap::new())
    }

    pub fn insert(&mut self, qid: &str, docid: &str, grade: u32) {
        self.0
            .entry(qid.to_string())
            .or_default()
            .insert(docid.to_string(), grade);
    }

    pub fn grade(&self, qid: &str, docid: &str) -> Option<u32> {
        self.0.get(qid).and_then(|docs| docs.get(docid)).copied()
    }

    pub fn judged(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.0.get(qid)
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reads `{qid} 0 {docid} {grade}` lines; blank lines are skipped.
pub fn read_qrels(path: &Path) -> Result<QrelsTable, EvalError> {
    let content = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut table = QrelsTable::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(EvalError::Parse {
                line: i + 1,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let grade: u32 = fields[3].parse().map_err(|_| EvalError::Parse {
            line: i + 1,
            reason: format!("grade {:?} is not a non-negative integer", fields[3]),
        })?;
        table.insert(fields[0], fields[2], grade);
    }
    Ok(table)
}

/// One run line: a scored document at a rank for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub qid: String,
    pub docid: String,
    /// 1-based rank within the query.
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Reads `{qid} Q0 {docid} {rank} {score} {tag}` lines and checks per-query
/// invariants: contiguous ranks from 1, distinct docids, scores
/// non-increasing with rank.
pub fn read_run(path: &Path) -> Result<Vec<RunEntry>, EvalError> {
    let content = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(EvalError::Parse {
                line: i + 1,
                reason: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        if fields[1] != "Q0" {
            return Err(EvalError::Parse {
                line: i + 1,
                reason: format!("expected literal Q0, found {:?}", fields[1]),
            });
        }
        let rank: usize =
            fields[3]
                .parse()
                .ok()
                .filter(|&r| r >= 1)
                .ok_or_else(|| EvalError::Parse {
                    line: i + 1,
                    reason: format!("rank {:?} is not a positive integer", fields[3]),
                })?;
        let score: f64 = fields[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| EvalError::Parse {
                line: i + 1,
                reason: format!("score {:?} is not a finite number", fields[4]),
            })?;
        entries.push(RunEntry {
            qid: fields[0].to_string(),
            docid: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    validate_run(&entries)?;
    Ok(entries)
}

fn group_by_qid(entries: &[RunEntry]) -> BTreeMap<&str, Vec<&RunEntry>> {
    let mut groups: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
    for entry in entries {
        groups.entry(entry.qid.as_str()).or_default().push(entry);
    }
    for group in groups.values_mut() {
        group.sort_by_key(|e| e.rank);
    }
    groups
}

fn validate_run(entries: &[RunEntry]) -> Result<(), EvalError> {
    for (qid, group) in group_by_qid(entries) {
        let mut seen_docids = std::collections::HashSet::new();
        for (i, entry) in group.iter().enumerate() {
            if entry.rank != i + 1 {
                return Err(EvalError::NonContiguousRanks(qid.to_string()));
            }
            if !seen_docids.insert(entry.docid.as_str()) {
                return Err(EvalError::Parse {
                    line: 0,
                    reason: format!("docid {} repeats for query {}", entry.docid, qid),
                });
            }
            if i > 0 && group[i - 1].score < entry.score {
                return Err(EvalError::ScoresNotMonotone(qid.to_string()));
            }
        }
    }
    Ok(())
}

/// Validates and writes a run, sorted by query then rank, scores formatted
/// with six decimal places. The write is atomic.
pub fn write_run(path: &Path, entries: &[RunEntry]) -> Result<(), EvalError> {
    validate_run(entries)?;
    let mut out = String::new();
    for (_, group) in group_by_qid(entries) {
        for entry in group {
            writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                entry.qid, entry.docid, entry.rank, entry.score, entry.tag
            )
            .expect("string write");
        }
    }
    ioutil::atomic_write(path, out.as_bytes()).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-query gain at a cutoff, plus the queries that could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct NdcgReport {
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    /// Queries present in the run but absent from the judgments.
    pub missing_qids: Vec<String>,
}

/// Normalized discounted cumulative gain at `k` per query. Unjudged
/// retrieved documents contribute zero gain; the ideal ranking is taken
/// over all judged documents for the query. A query whose judged gains are
/// all zero scores 0. Queries with no judgments at all are reported in
/// `missing_qids` and skipped.
pub fn ndcg_at_k(
    run: &[RunEntry],
    qrels: &QrelsTable,
    k: usize,
    gain: Gain,
) -> Result<NdcgReport, EvalError> {
    if k < 1 {
        return Err(EvalError::InvalidK);
    }
    validate_run(run)?;
    let mut per_query = BTreeMap::new();
    let mut missing_qids = Vec::new();
    for (qid, group) in group_by_qid(run) {
        let Some(judged) = qrels.judged(qid) else {
            missing_qids.push(qid.to_string());
            continue;
        };
        let dcg: f64 = group
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, entry)| {
                let grade = judged.get(&entry.docid).copied().unwrap_or(0);
                gain.of(grade) / ((i + 2) as f64).log2()
            })
            .sum();
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &grade)| gain.of(grade) / ((i + 2) as f64).log2())
            .sum();
        let value = if idcg == 0.0 { 0.0 } else { dcg / idcg };
        per_query.insert(qid.to_string(), value);
    }
    Ok(NdcgReport {
        k,
        per_query,
        missing_qids,
    })
}

/// Mean of a per-query metric table; `None` when empty.
pub fn mean_metric(per_query: &BTreeMap<String, f64>) -> Option<f64> {
    if per_query.is_empty() {
        return None;
    }
    Some(per_query.values().sum::<f64>() / per_query.len() as f64)
}

/// Formats a metric in [0, 1] the way result tables print it: times 100,
/// one decimal place.
pub fn format_percent(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}

/// Two-sided paired significance test result.
#[derive(Debug, Clone, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub dof: usize,
}

/// Two-sided paired Student t-test over matching per-query metric tables.
/// Fails when the query sets differ, fewer than two pairs exist, or the
/// paired differences have (near-)zero variance.
pub fn paired_t_test(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<TTestResult, EvalError> {
    let unpaired = a.keys().filter(|q| !b.contains_key(*q)).count()
        + b.keys().filter(|q| !a.contains_key(*q)).count();
    if unpaired > 0 {
        return Err(EvalError::MismatchedQids(unpaired));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewQueries(n));
    }
    let diffs: Vec<f64> = a.keys().map(|q| a[q] - b[q]).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 || sd < mean.abs() * 1e-12 {
        return Err(EvalError::DegenerateVariance);
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dof = n - 1;
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 1");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult { t, p, dof })
}

/// Writes a metric report as pretty JSON: the metric label, the per-query
/// table, and a summary with the mean and query count.
pub fn write_metric_report(
    path: &Path,
    metric: &str,
    per_query: &BTreeMap<String, f64>,
) -> std::io::Result<()> {
    let report = serde_json::json!({
        "metric": metric,
        "per_query": per_query,
        "summary": {
            "mean": mean_metric(per_query),
            "n_queries": per_query.len(),
        },
    });
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    ioutil::atomic_write(path, body.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn entry(qid: &str, docid: &str, rank: usize, score: f64) -> RunEntry {
        RunEntry {
            qid: qid.to_string(),
            docid: docid.to_string(),
            rank,
            score,
            tag: "ract".to_string(),
        }
    }

    fn write_temp(dir: &TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn test_ndcg_matches_longhand_arithmetic() {
        let mut qrels = QrelsTable::new();
        qrels.insert("q1", "dA", 3);
        qrels.insert("q1", "dB", 2);
        qrels.insert("q1", "dC", 0);
        qrels.insert("q1", "dD", 1);
        let run = vec![
            entry("q1", "dB", 1, 3.0),
            entry("q1", "dA", 2, 2.0),
            entry("q1", "dC", 3, 1.0),
        ];
        let report = ndcg_at_k(&run, &qrels, 3, Gain::Linear).unwrap();
        // Retrieved grades by rank: 2, 3, 0. Ideal top-3 grades: 3, 2, 1.
        let dcg = 2.0 / 2.0f64.log2() + 3.0 / 3.0f64.log2() + 0.0 / 4.0f64.log2();
        let idcg = 3.0 / 2.0f64.log2() + 2.0 / 3.0f64.log2() + 1.0 / 4.0f64.log2();
        let expected = dcg / idcg;
        let got = report.per_query["q1"];
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
        assert!(report.missing_qids.is_empty());
    }

    #[test]
    fn test_ndcg_is_one_for_ideal_ordering() {
        let mut qrels = QrelsTable::new();
        qrels.insert("q1", "dA", 3);
        qrels.insert("q1", "dB", 2);
        qrels.insert("q1", "dC", 1);
        let run = vec![
            entry("q1", "dA", 1, 3.0),
            entry("q1", "dB", 2, 2.0),
            entry("q1", "dC", 3, 1.0),
        ];
        let report = ndcg_at_k(&run, &qrels, 3, Gain::Linear).unwrap();
        assert_eq!(report.per_query["q1"], 1.0);
    }

    #[test]
    fn test_ndcg_zero_ideal_gain_scores_zero() {
        let mut qrels = QrelsTable::new();
        qrels.insert("q1", "dA", 0);
        qrels.insert("q1", "dB", 0);
        let run = vec![entry("q1", "dA", 1, 2.0), entry("q1", "dB", 2, 1.0)];
        let report = ndcg_at_k(&run, &qrels, 10, Gain::Linear).unwrap();
        assert_eq!(report.per_query["q1"], 0.0);
    }

    #[test]
    fn test_ndcg_unjudged_document_gains_nothing() {
        let mut qrels = QrelsTable::new();
        qrels.insert("q1", "dA", 2);
        let run = vec![entry("q1", "dX", 1, 2.0), entry("q1", "dA", 2, 1.0)];
        let report = ndcg_at_k(&run, &qrels, 2, Gain::Linear).unwrap();
        let expected = (2.0 / 3.0f64.log2()) / (2.0 / 2.0f64.log2());
        assert!((report.per_query["q1"] - expected).abs() < 1e-12);
    }

    #[test]
    fn test_ndcg_exponential_gain() {
        assert_eq!(Gain::Exponential.of(3), 7.0);
        assert_eq!(Gain::Exponential.of(0), 0.0);
        assert_eq!(Gain::Linear.of(3), 3.0);
    }

    #[test]
    fn test_ndcg_missing_query_is_reported_not_scored() {
        let mut qrels = QrelsTable::new();
        qrels.insert("q1", "dA", 1);
        let run = vec![entry("q1", "dA", 1, 2.0), entry("q9", "dA", 1, 2.0)];
        let report = ndcg_at_k(&run, &qrels, 5, Gain::Linear).unwrap();
        assert!(report.per_query.contains_key("q1"));
        assert!(!report.per_query.contains_key("q9"));
        assert_eq!(report.missing_qids, vec!["q9".to_string()]);
    }

    #[test]
    fn test_ndcg_rejects_zero_cutoff() {
        let qrels = QrelsTable::new();
        assert!(matches!(
            ndcg_at_k(&[], &qrels, 0, Gain::Linear),
            Err(EvalError::InvalidK)
        ));
    }

    #[test]
    fn test_paired_t_test_fixture() {
        let qids = ["q1", "q2", "q3", "q4"];
        let a_vals = [0.50, 0.60, 0.70, 0.40];
        let b_vals = [0.45, 0.55, 0.75, 0.35];
        let a: BTreeMap<String, f64> = qids
            .iter()
            .zip(a_vals)
            .map(|(q, v)| (q.to_string(), v))
            .collect();
        let b: BTreeMap<String, f64> = qids
            .iter()
            .zip(b_vals)
            .map(|(q, v)| (q.to_string(), v))
            .collect();
        let result = paired_t_test(&a, &b).unwrap();
        // Diffs are [0.05, 0.05, -0.05, 0.05]: mean 0.025, sd 0.05, so
        // t = 0.025 / (0.05 / 2) = 1 with 3 degrees of freedom.
        assert!((result.t - 1.0).abs() < 1e-12, "t {}", result.t);
        assert_eq!(result.dof, 3);
        // Closed form for the t CDF at 3 degrees of freedom:
        // F(t) = 1/2 + (atan(t/sqrt(3)) + (t/sqrt(3)) / (1 + t^2/3)) / pi.
        let t = result.t;
        let u = t / 3.0f64.sqrt();
        let cdf = 0.5 + (u.atan() + u / (1.0 + t * t / 3.0)) / std::f64::consts::PI;
        let expected_p = 2.0 * (1.0 - cdf);
        assert!(
            (result.p - expected_p).abs() < 1e-9,
            "p {} vs {}",
            result.p,
            expected_p
        );
        assert!((result.p - 0.3910022189557705).abs() < 1e-9);
    }

    #[test]
    fn test_paired_t_test_antisymmetry() {
        let a: BTreeMap<String, f64> = [("q1", 0.9), ("q2", 0.4), ("q3", 0.6)]
            .iter()
            .map(|&(q, v)| (q.to_string(), v))
            .collect();
        let b: BTreeMap<String, f64> = [("q1", 0.3), ("q2", 0.5), ("q3", 0.55)]
            .iter()
            .map(|&(q, v)| (q.to_string(), v))
            .collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-12);
        assert!((ab.p - ba.p).abs() < 1e-12);
    }

    #[test]
    fn test_paired_t_test_degenerate_and_shape_errors() {
        let a: BTreeMap<String, f64> = [("q1", 0.6), ("q2", 0.7)]
            .iter()
            .map(|&(q, v)| (q.to_string(), v))
            .collect();
        let shifted: BTreeMap<String, f64> = a.iter().map(|(q, v)| (q.clone(), v - 0.1)).collect();
        assert!(matches!(
            paired_t_test(&a, &shifted),
            Err(EvalError::DegenerateVariance)
        ));

        let mut extra = a.clone();
        extra.insert("q3".to_string(), 0.5);
        assert!(matches!(
            paired_t_test(&a, &extra),
            Err(EvalError::MismatchedQids(1))
        ));

        let single: BTreeMap<String, f64> = [("q1".to_string(), 0.5)].into_iter().collect();
        let single_b: BTreeMap<String, f64> = [("q1".to_string(), 0.4)].into_iter().collect();
        assert!(matches!(
            paired_t_test(&single, &single_b),
            Err(EvalError::TooFewQueries(1))
        ));
    }

    #[test]
    fn test_run_write_format_and_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("out.run");
        let entries = vec![
            entry("q2", "dC", 1, 1.25),
            entry("q1", "dA", 1, 9.5),
            entry("q1", "dB", 2, 8.0),
        ];
        write_run(&path, &entries).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            content,
            "q1 Q0 dA 1 9.500000 ract\nq1 Q0 dB 2 8.000000 ract\nq2 Q0 dC 1 1.250000 ract\n"
        );
        let back = read_run(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].qid, "q1");
        assert_eq!(back[0].score, 9.5);
    }

    type ErrorCheck = fn(&EvalError) -> bool;

    #[test]
    fn test_run_parse_rejections() {
        let dir = TempDir::new().unwrap();
        let cases: Vec<(&str, ErrorCheck)> = vec![
            ("q1 Q0 dA 1 2.0\n", |e| {
                matches!(e, EvalError::Parse { line: 1, .. })
            }),
            ("q1 XX dA 1 2.0 tag\n", |e| {
                matches!(e, EvalError::Parse { line: 1, .. })
            }),
            ("q1 Q0 dA 0 2.0 tag\n", |e| {
                matches!(e, EvalError::Parse { line: 1, .. })
            }),
            ("q1 Q0 dA 1 nope tag\n", |e| {
                matches!(e, EvalError::Parse { line: 1, .. })
            }),
            (
                "q1 Q0 dA 1 2.0 tag\nq1 Q0 dB 3 1.0 tag\n",
                |e| matches!(e, EvalError::NonContiguousRanks(q) if q == "q1"),
            ),
            ("q1 Q0 dA 1 2.0 tag\nq1 Q0 dA 2 1.0 tag\n", |e| {
                matches!(e, EvalError::Parse { .. })
            }),
            (
                "q1 Q0 dA 1 1.0 tag\nq1 Q0 dB 2 2.0 tag\n",
                |e| matches!(e, EvalError::ScoresNotMonotone(q) if q == "q1"),
            ),
        ];
        for (i, (content, check)) in cases.iter().enumerate() {
            let path = write_temp(&dir, &format!("case{i}.run"), content);
            let err = read_run(&path).unwrap_err();
            assert!(check(&err), "case {i}: unexpected error {err:?}");
        }
    }

    #[test]
    fn test_qrels_parse_and_rejections() {
        let dir = TempDir::new().unwrap();
        let path = write_temp(&dir, "good.qrels", "q1 0 dA 2\nq1 0 dB 0\n\nq2 0 dA 1\n");
        let table = read_qrels(&path).unwrap();
        assert_eq!(table.grade("q1", "dA"), Some(2));
        assert_eq!(table.grade("q1", "dB"), Some(0));
        assert_eq!(table.grade("q2", "dA"), Some(1));
        assert_eq!(table.grade("q2", "dB"), None);

        let bad_fields = write_temp(&dir, "bad1.qrels", "q1 0 dA\n");
        assert!(matches!(
            read_qrels(&bad_fields).unwrap_err(),
            EvalError::Parse { line: 1, .. }
        ));
        let bad_grade = write_temp(&dir, "bad2.qrels", "q1 0 dA -1\n");
        assert!(matches!(
            read_qrels(&bad_grade).unwrap_err(),
            EvalError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn test_mean_and_percent_formatting() {
        let table: BTreeMap<String, f64> = [("q1".to_string(), 0.25), ("q2".to_string(), 0.75)]
            .into_iter()
            .collect();
        assert_eq!(mean_metric(&table), Some(0.5));
        assert_eq!(mean_metric(&BTreeMap::new()), None);
        assert_eq!(format_percent(0.5), "50.0");
        assert_eq!(format_percent(0.39099), "39.1");
        assert_eq!(format_percent(1.0), "100.0");
    }

    #[test]
    fn test_metric_report_is_stable_json() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("report.json");
        let table: BTreeMap<String, f64> = [("q1".to_string(), 1.0), ("q2".to_string(), 0.5)]
            .into_iter()
            .collect();
        write_metric_report(&path, "ndcg@10", &table).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&content).unwrap();
        assert_eq!(value["metric"], "ndcg@10");
        assert_eq!(value["per_query"]["q1"], 1.0);
        assert_eq!(value["summary"]["mean"], 0.75);
        assert_eq!(value["summary"]["n_queries"], 2);
        assert!(content.ends_with('\n'));
    }
}
