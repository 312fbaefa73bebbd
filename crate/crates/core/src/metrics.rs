//! Execution accuracy, pass@k and Maj@k, efficiency aggregates and report
//! assembly.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{stratify_by, Difficulty};
use crate::diagnoser::{error_distribution, ErrorDistribution, ErrorLabel};
use crate::pipeline::{plurality, EvalRecord, PoolEntry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    Empty,
    #[error("pass@{k} needs 1 <= k <= n (n = {n})")]
    BadK { n: usize, k: usize },
    #[error("{c} correct out of {n} is impossible")]
    BadCount { n: usize, c: usize },
    #[error("item {item_id} has {n} candidates, fewer than k = {k}")]
    PoolTooSmall { item_id: String, n: usize, k: usize },
}

/// A fraction in [0, 1] shown as a percentage with one decimal ("58.7").
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Percent(pub f64);

impl Percent {
    pub fn rounded(self) -> f64 {
        (self.0 * 1000.0).round() / 10.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.rounded())
    }
}

impl Serialize for Percent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.rounded())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Percent(f64::deserialize(d)? / 100.0))
    }
}

pub fn execution_accuracy(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64)
}

/// Unbiased pass@k estimate for a pool of `n` with `c` correct:
/// 1 - C(n-c, k) / C(n, k), evaluated as a running product.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, MetricsError> {
    if k == 0 || k > n {
        return Err(MetricsError::BadK { n, k });
    }
    if c > n {
        return Err(MetricsError::BadCount { n, c });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = (0..k).map(|i| (n - c - i) as f64 / (n - i) as f64).product();
    Ok(1.0 - miss)
}

/// Mean per-item pass@k over the records' pools.
pub fn pass_at_k_mean(records: &[EvalRecord], k: usize) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    for r in records {
        let n = r.pool.len();
        if n < k {
            return Err(MetricsError::PoolTooSmall {
                item_id: r.item_id.clone(),
                n,
                k,
            });
        }
        sum += pass_at_k(n, r.pool.iter().filter(|p| p.correct).count(), k)?;
    }
    Ok(sum / records.len() as f64)
}

/// The pool members with the `k` lowest trajectory ids.
pub fn pool_prefix(pool: &[PoolEntry], k: usize) -> Vec<&PoolEntry> {
    let mut sorted: Vec<&PoolEntry> = pool.iter().collect();
    sorted.sort_by_key(|p| p.trajectory_id);
    sorted.truncate(k);
    sorted
}

/// Whether plurality voting over the first `k` candidates picks a correct one.
pub fn majority_correct(record: &EvalRecord, k: usize) -> Result<bool, MetricsError> {
    if k == 0 || record.pool.len() < k {
        return Err(MetricsError::PoolTooSmall {
            item_id: record.item_id.clone(),
            n: record.pool.len(),
            k,
        });
    }
    let prefix = pool_prefix(&record.pool, k);
    let votes: Vec<_> = prefix.iter().map(|p| p.vote()).collect();
    Ok(plurality(&votes)
        .and_then(|t| prefix.iter().find(|p| p.trajectory_id == t))
        .is_some_and(|p| p.correct))
}

pub fn majority_accuracy(records: &[EvalRecord], k: usize) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut hits = 0usize;
    for r in records {
        hits += usize::from(majority_correct(r, k)?);
    }
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EfficiencyStats {
    pub mean_latency_seconds: f64,
    pub mean_tokens: f64,
    /// Mean latency of the first candidate alone.
    pub single_pass_latency_seconds: f64,
}

impl EfficiencyStats {
    /// "latency / tokens in thousands / EX", e.g. "0.18 / 2.2K / 53.0".
    pub fn row(&self, ex: Percent) -> String {
        format!(
            "{:.2} / {:.1}K / {}",
            self.mean_latency_seconds,
            self.mean_tokens / 1000.0,
            ex
        )
    }
}

pub fn efficiency_stats(records: &[EvalRecord]) -> EfficiencyStats {
    if records.is_empty() {
        return EfficiencyStats::default();
    }
    let n = records.len() as f64;
    EfficiencyStats {
        mean_latency_seconds: records.iter().map(|r| r.total_latency_seconds).sum::<f64>() / n,
        mean_tokens: records.iter().map(|r| r.total_tokens as f64).sum::<f64>() / n,
        single_pass_latency_seconds: records
            .iter()
            .map(|r| r.candidates.first().map_or(0.0, |c| c.latency_seconds))
            .sum::<f64>()
            / n,
    }
}

/// Key-value provenance block written before a run starts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest(pub BTreeMap<String, String>);

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.0).unwrap_or_default()
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text).map(Manifest)
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn round_to(x: f64, places: i32) -> f64 {
    let m = 10f64.powi(places);
    (x * m).round() / m
}

fn ser_3<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_to(*x, 3))
}

fn ser_1<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_to(*x, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub n_items: usize,
    pub n_correct: usize,
    pub ex_overall: Percent,
    pub ex_by_difficulty: BTreeMap<Difficulty, Percent>,
    pub items_by_difficulty: BTreeMap<Difficulty, usize>,
    pub pass_at_k_curve: BTreeMap<usize, Percent>,
    pub maj_at_k_curve: BTreeMap<usize, Percent>,
    #[serde(serialize_with = "ser_3")]
    pub mean_latency_seconds: f64,
    #[serde(serialize_with = "ser_3")]
    pub single_pass_latency_seconds: f64,
    #[serde(serialize_with = "ser_1")]
    pub mean_tokens: f64,
    /// True when any token count is a whitespace estimate.
    pub tokens_approximate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_distribution: Option<ErrorDistribution>,
    pub manifest_sha256: String,
    pub manifest: Manifest,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn efficiency_row(&self) -> String {
        EfficiencyStats {
            mean_latency_seconds: self.mean_latency_seconds,
            mean_tokens: self.mean_tokens,
            single_pass_latency_seconds: self.single_pass_latency_seconds,
        }
        .row(self.ex_overall)
    }
}

/// Largest k every record's pool supports.
fn common_pool_size(records: &[EvalRecord]) -> usize {
    records.iter().map(|r| r.pool.len()).min().unwrap_or(0)
}

/// Builds the report. `labels` holds one label per incorrect record when the
/// run has been classified.
pub fn assemble_report(
    records: &[EvalRecord],
    strategy: &str,
    manifest: &Manifest,
    labels: Option<&[ErrorLabel]>,
) -> EvalReport {
    let n_correct = records.iter().filter(|r| r.correct).count();
    let frac = |hit: usize, n: usize| if n == 0 { 0.0 } else { hit as f64 / n as f64 };
    let mut ex_by_difficulty = BTreeMap::new();
    let mut items_by_difficulty = BTreeMap::new();
    for (d, bucket) in stratify_by(records, |r| r.difficulty) {
        if bucket.is_empty() {
            continue;
        }
        let hit = bucket.iter().filter(|r| r.correct).count();
        ex_by_difficulty.insert(d, Percent(frac(hit, bucket.len())));
        items_by_difficulty.insert(d, bucket.len());
    }
    let kmax = common_pool_size(records);
    let mut pass_at_k_curve = BTreeMap::new();
    let mut maj_at_k_curve = BTreeMap::new();
    for k in 1..=kmax {
        if let Ok(p) = pass_at_k_mean(records, k) {
            pass_at_k_curve.insert(k, Percent(p));
        }
        if let Ok(m) = majority_accuracy(records, k) {
            maj_at_k_curve.insert(k, Percent(m));
        }
    }
    let eff = efficiency_stats(records);
    EvalReport {
        strategy: strategy.to_string(),
        n_items: records.len(),
        n_correct,
        ex_overall: Percent(frac(n_correct, records.len())),
        ex_by_difficulty,
        items_by_difficulty,
        pass_at_k_curve,
        maj_at_k_curve,
        mean_latency_seconds: eff.mean_latency_seconds,
        single_pass_latency_seconds: eff.single_pass_latency_seconds,
        mean_tokens: eff.mean_tokens,
        tokens_approximate: records
            .iter()
            .flat_map(|r| &r.candidates)
            .any(|c| c.tokens_approximate),
        error_distribution: labels.map(|l| error_distribution(l.iter())),
        manifest_sha256: manifest.sha256(),
        manifest: manifest.clone(),
    }
}

/// CSV text preceded by a `# manifest_sha256=` provenance line.
fn csv_bytes(manifest_sha256: &str, header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
    format!("# manifest_sha256={manifest_sha256}\n{body}")
}

/// One row per strategy and difficulty bucket, plus an `overall` row each.
pub fn report_csv(reports: &[&EvalReport], provenance: &str) -> String {
    let mut rows = Vec::new();
    for r in reports {
        let tail = |ex: Percent, n: usize| {
            vec![
                n.to_string(),
                ex.to_string(),
                format!("{:.3}", r.mean_latency_seconds),
                format!("{:.1}", r.mean_tokens),
            ]
        };
        let mut row = vec![r.strategy.clone(), "overall".to_string()];
        row.extend(tail(r.ex_overall, r.n_items));
        rows.push(row);
        for (d, ex) in &r.ex_by_difficulty {
            let mut row = vec![r.strategy.clone(), d.to_string()];
            row.extend(tail(*ex, r.items_by_difficulty.get(d).copied().unwrap_or(0)));
            rows.push(row);
        }
    }
    csv_bytes(
        provenance,
        &["strategy", "difficulty", "n_items", "ex", "mean_latency_seconds", "mean_tokens"],
        rows,
    )
}

fn curve_rows(reports: &[&EvalReport], metrics: &[&str], provenance: &str) -> String {
    let mut rows = Vec::new();
    for r in reports {
        for metric in metrics {
            let curve = if *metric == "maj@k" { &r.maj_at_k_curve } else { &r.pass_at_k_curve };
            for (k, v) in curve {
                rows.push(vec![r.strategy.clone(), k.to_string(), metric.to_string(), v.to_string()]);
            }
        }
    }
    csv_bytes(provenance, &["strategy", "k", "metric", "value"], rows)
}

/// Plot-ready long format: `strategy,k,metric,value`.
pub fn curves_csv(reports: &[&EvalReport], provenance: &str) -> String {
    curve_rows(reports, &["pass@k", "maj@k"], provenance)
}

/// Same layout restricted to one metric (`pass@k` or `maj@k`).
pub fn curve_csv(reports: &[&EvalReport], metric: &str, provenance: &str) -> String {
    curve_rows(reports, &[metric], provenance)
}

/// Latency against EX, one row per strategy.
pub fn scatter_csv(reports: &[&EvalReport], provenance: &str) -> String {
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.strategy.clone(),
                format!("{:.3}", r.mean_latency_seconds),
                format!("{:.3}", r.single_pass_latency_seconds),
                format!("{:.1}", r.mean_tokens),
                r.ex_overall.to_string(),
            ]
        })
        .collect();
    csv_bytes(
        provenance,
        &["strategy", "mean_latency_seconds", "single_pass_latency_seconds", "mean_tokens", "ex"],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_at_k_edges() {
        assert_eq!(pass_at_k(8, 8, 3).unwrap(), 1.0);
        assert_eq!(pass_at_k(8, 0, 8).unwrap(), 0.0);
        assert!((pass_at_k(8, 3, 2).unwrap() - 9.0 / 14.0).abs() < 1e-12);
        assert!(pass_at_k(3, 1, 4).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
        assert!(pass_at_k(3, 4, 1).is_err());
    }

    #[test]
    fn percent_display() {
        assert_eq!(Percent(0.587).to_string(), "58.7");
        assert_eq!(Percent(4.0 / 6.0).to_string(), "66.7");
        assert_eq!(Percent(0.25).to_string(), "25.0");
        assert_eq!(serde_json::to_string(&Percent(0.636)).unwrap(), "63.6");
    }

    #[test]
    fn efficiency_row_shape() {
        let e = EfficiencyStats {
            mean_latency_seconds: 0.18,
            mean_tokens: 2200.0,
            single_pass_latency_seconds: 0.18,
        };
        assert_eq!(e.row(Percent(0.53)), "0.18 / 2.2K / 53.0");
    }

    #[test]
    fn manifest_hash_stable() {
        let mut m = Manifest::default();
        m.set("track", "greedy");
        m.set("benchmark", "dev.json");
        let text = m.to_toml();
        assert_eq!(Manifest::from_toml(&text).unwrap(), m);
        assert_eq!(m.sha256(), m.clone().sha256());
    }
}
