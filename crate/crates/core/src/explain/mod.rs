//! Sensitivity-based importance: global, local and time-lag metrics built from
//! input gradients, plus categorical rollup and cumulative feature selection.
//!
//! Every report holds non-negative percentages that sum to 100. A model whose
//! sensitivities are all zero has no meaningful ranking and yields
//! [`ExplainError::Insensitive`] rather than a uniform report.
//!
//! Sensitivities are taken with respect to the inputs the network sees, which
//! are standardized by the data pipeline. [`crate::engine::InputJacobian::rescale_columns`]
//! converts them to raw units.

mod metrics;

pub use metrics::{
    global_importance, global_importance_iid, global_importance_many_to_many, global_importance_many_to_one,
    global_importance_many_to_one_all_lags, lag_importance_global, lag_importance_local, local_importance,
    numbered_names,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineError;

/// Tolerance on cumulative shares when testing a selection threshold.
pub const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("model output is insensitive to every input (normalizer is {normalizer}); no ranking exists")]
    Insensitive { normalizer: f64 },
    #[error("{metric} needs a {expected} model")]
    WrongMode {
        metric: &'static str,
        expected: &'static str,
    },
    #[error("no samples to average over")]
    Empty,
    #[error("{names} feature names for {features} features")]
    NameCount { names: usize, features: usize },
    #[error("group map is not a partition of the {features} features: {reason}")]
    NotPartition { features: usize, reason: String },
    #[error("threshold {0} is outside (0, 100]")]
    Threshold(f64),
    #[error("feature selection needs a global report, got {0}")]
    NotGlobal(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// What a report ranks and over which data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scope {
    Global,
    Local { sample: Option<usize> },
    LagGlobal,
    LagLocal { sequence: Option<usize> },
}

impl Scope {
    pub fn label(self) -> String {
        match self {
            Scope::Global => "global".into(),
            Scope::Local { sample: Some(i) } => format!("local (sample {i})"),
            Scope::Local { sample: None } => "local".into(),
            Scope::LagGlobal => "lag (global)".into(),
            Scope::LagLocal { sequence: Some(i) } => format!("lag (sequence {i})"),
            Scope::LagLocal { sequence: None } => "lag (local)".into(),
        }
    }
}

/// Which formula produced the raw sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// RMS over independent samples.
    Iid,
    /// Lag-0 derivative of the final output, RMS over sequences.
    ManyToOne,
    /// Sum over lags of the per-lag RMS. Not part of the lag-0 definition;
    /// offered because earlier steps also move the output.
    ManyToOneAllLags,
    /// Same-step RMS averaged over output positions.
    ManyToMany,
    /// Squared gradient at one point.
    Local,
    /// Per-lag RMS summed over features.
    Lag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    /// Feature index (or lag, or group index after rollup).
    pub id: usize,
    pub name: String,
    /// Share of total sensitivity, in percent.
    pub value: f64,
    /// Sensitivity before normalization.
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub scope: Scope,
    pub metric: Metric,
    /// Sorted by descending `value`; ties keep ascending `id`.
    pub entries: Vec<ImportanceEntry>,
    /// Sum of raw sensitivities, the divisor behind every percentage.
    pub normalizer: f64,
    /// Output the derivatives were taken of, when known.
    pub selector: Option<String>,
    /// Samples or sequences averaged over (1 for local reports).
    pub sample_count: usize,
    /// True once encoded columns have been rolled up into source groups.
    #[serde(default)]
    pub grouped: bool,
}

/// Time-lag reports share the layout; entry `id` is the lag behind the output.
pub type LagReport = ImportanceReport;

impl ImportanceReport {
    /// Normalizes `raw` (indexed by id) into percentages.
    pub fn from_raw(
        scope: Scope,
        metric: Metric,
        names: Vec<String>,
        raw: Vec<f64>,
        sample_count: usize,
    ) -> Result<Self, ExplainError> {
        if names.len() != raw.len() {
            return Err(ExplainError::NameCount {
                names: names.len(),
                features: raw.len(),
            });
        }
        let normalizer: f64 = raw.iter().sum();
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(ExplainError::Insensitive { normalizer });
        }
        let entries = names
            .into_iter()
            .zip(raw)
            .enumerate()
            .map(|(id, (name, raw))| ImportanceEntry {
                id,
                name,
                value: 100.0 * (raw / normalizer),
                raw,
            })
            .collect();
        let mut report = Self {
            scope,
            metric,
            entries,
            normalizer,
            selector: None,
            sample_count,
            grouped: false,
        };
        report.sort();
        Ok(report)
    }

    fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| b.value.total_cmp(&a.value).then(a.id.cmp(&b.id)));
    }

    pub fn with_selector(mut self, selector: impl ToString) -> Self {
        self.selector = Some(selector.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Percentages indexed by id.
    pub fn values_by_id(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.entries.len()];
        for e in &self.entries {
            out[e.id] = e.value;
        }
        out
    }

    /// Raw sensitivities indexed by id.
    pub fn raw_by_id(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.entries.len()];
        for e in &self.entries {
            out[e.id] = e.raw;
        }
        out
    }

    pub fn value_of(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    /// 1-based rank of the named entry.
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name).map(|r| r + 1)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.value).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Aligned columns for terminals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} importance ({:?}), {} sample(s){}",
            self.scope.label(),
            self.metric,
            self.sample_count,
            self.selector
                .as_deref()
                .map(|s| format!(", selector {s}"))
                .unwrap_or_default()
        );
        let width = self
            .entries
            .iter()
            .map(|e| e.name.chars().count())
            .max()
            .unwrap_or(4)
            .max(4);
        let _ = writeln!(
            out,
            "{:>4}  {:<width$}  {:>8}  {:>12}",
            "rank", "name", "percent", "raw"
        );
        for (rank, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>4}  {:<width$}  {:>8.2}  {:>12.6e}",
                rank + 1,
                e.name,
                e.value,
                e.raw
            );
        }
        out
    }

    /// `rank,id,name,value,raw` with full-precision numbers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,id,name,value,raw\n");
        for (rank, e) in self.entries.iter().enumerate() {
            let name = if e.name.contains([',', '"', '\n']) {
                format!("\"{}\"", e.name.replace('"', "\"\""))
            } else {
                e.name.clone()
            };
            let _ = writeln!(out, "{},{},{},{},{}", rank + 1, e.id, name, e.value, e.raw);
        }
        out
    }
}

/// Sums importance over groups of encoded columns.
///
/// `groups` holds `(name, member ids)` and must cover every id of `report`
/// exactly once. Raw values are summed the same way, so the normalizer is
/// unchanged.
pub fn group_importance(
    report: &ImportanceReport,
    groups: &[(String, Vec<usize>)],
) -> Result<ImportanceReport, ExplainError> {
    let p = report.entries.len();
    let not_partition = |reason: String| ExplainError::NotPartition { features: p, reason };
    let mut owner = vec![None; p];
    for (g, (name, members)) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(not_partition(format!("group `{name}` is empty")));
        }
        for &m in members {
            match owner.get(m) {
                None => return Err(not_partition(format!("group `{name}` names unknown id {m}"))),
                Some(Some(_)) => return Err(not_partition(format!("id {m} appears in more than one group"))),
                Some(None) => owner[m] = Some(g),
            }
        }
    }
    if let Some(m) = owner.iter().position(Option::is_none) {
        return Err(not_partition(format!("id {m} belongs to no group")));
    }
    let values = report.values_by_id();
    let raws = report.raw_by_id();
    let entries = groups
        .iter()
        .enumerate()
        .map(|(id, (name, members))| ImportanceEntry {
            id,
            name: name.clone(),
            value: members.iter().map(|&m| values[m]).sum(),
            raw: members.iter().map(|&m| raws[m]).sum(),
        })
        .collect();
    let mut out = ImportanceReport {
        entries,
        grouped: true,
        ..report.clone()
    };
    out.sort();
    Ok(out)
}

/// Smallest top-ranked prefix of a global report covering `threshold` percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubset {
    /// Selected ids in ranking order.
    pub features: Vec<usize>,
    pub names: Vec<String>,
    /// Share covered by the selection, in percent.
    pub cumulative: f64,
    pub threshold: f64,
    /// Size of the ranking the selection was taken from.
    pub out_of: usize,
    /// Whether ids refer to source-column groups rather than encoded columns.
    #[serde(default)]
    pub grouped: bool,
}

impl FeatureSubset {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Walks the ranking until the running total reaches `threshold`.
///
/// A shortfall of at most [`THRESHOLD_SLACK`] counts as reaching it, so a
/// threshold of 100 is met once every nonzero entry is in despite rounding.
pub fn select_features(report: &ImportanceReport, threshold: f64) -> Result<FeatureSubset, ExplainError> {
    if !(threshold > 0.0 && threshold <= 100.0) {
        return Err(ExplainError::Threshold(threshold));
    }
    if report.scope != Scope::Global {
        return Err(ExplainError::NotGlobal(report.scope.label()));
    }
    let mut subset = FeatureSubset {
        features: Vec::new(),
        names: Vec::new(),
        cumulative: 0.0,
        threshold,
        out_of: report.entries.len(),
        grouped: report.grouped,
    };
    for e in &report.entries {
        if subset.cumulative >= threshold - THRESHOLD_SLACK {
            break;
        }
        subset.features.push(e.id);
        subset.names.push(e.name.clone());
        subset.cumulative += e.value;
    }
    Ok(subset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(raw: &[f64]) -> ImportanceReport {
        let names = (1..=raw.len()).map(|i| format!("f{i}")).collect();
        ImportanceReport::from_raw(Scope::Global, Metric::Iid, names, raw.to_vec(), 10).unwrap()
    }

    #[test]
    fn normalizes_and_sorts() {
        let r = report(&[1.0, 3.0, 0.0]);
        assert_eq!(r.values_by_id(), vec![25.0, 75.0, 0.0]);
        assert_eq!(r.entries[0].name, "f2");
        assert_eq!(r.normalizer, 4.0);
        assert_eq!(r.rank_of("f3"), Some(3));
    }

    #[test]
    fn all_zero_is_an_error() {
        let err = ImportanceReport::from_raw(Scope::Global, Metric::Iid, vec!["a".into()], vec![0.0], 1).unwrap_err();
        assert!(matches!(err, ExplainError::Insensitive { .. }));
    }

    #[test]
    fn singleton_groups_change_nothing() {
        let r = report(&[1.0, 3.0, 0.5]);
        let groups: Vec<_> = (0..3).map(|i| (format!("f{}", i + 1), vec![i])).collect();
        let g = group_importance(&r, &groups).unwrap();
        assert_eq!(g.entries, r.entries);
        assert!(g.grouped);
    }

    #[test]
    fn merged_pair_takes_everything() {
        let r = report(&[3.0, 2.0]);
        let g = group_importance(&r, &[("both".into(), vec![0, 1])]).unwrap();
        assert_eq!(g.entries.len(), 1);
        assert!((g.entries[0].value - 100.0).abs() < 1e-12);
    }

    #[test]
    fn group_map_must_partition() {
        let r = report(&[1.0, 1.0, 1.0]);
        let missing = [("a".to_string(), vec![0, 1])];
        let overlap = [("a".to_string(), vec![0, 1]), ("b".to_string(), vec![1, 2])];
        let unknown = [("a".to_string(), vec![0, 1, 2, 3])];
        for g in [&missing[..], &overlap[..], &unknown[..]] {
            assert!(matches!(
                group_importance(&r, g),
                Err(ExplainError::NotPartition { .. })
            ));
        }
    }

    #[test]
    fn selection_examples() {
        let r = report(&[3.0, 1.0, 0.0]);
        let s = select_features(&r, 90.0).unwrap();
        assert_eq!(s.features, vec![0, 1]);
        assert_eq!(s.cumulative, 100.0);
        let s = select_features(&r, 100.0).unwrap();
        assert_eq!(s.features, vec![0, 1]);
        let s = select_features(&r, 75.0).unwrap();
        assert_eq!(s.features, vec![0]);
        assert!(matches!(select_features(&r, 0.0), Err(ExplainError::Threshold(_))));
        assert!(matches!(select_features(&r, 100.5), Err(ExplainError::Threshold(_))));
        let mut local = r.clone();
        local.scope = Scope::Local { sample: Some(0) };
        assert!(matches!(select_features(&local, 90.0), Err(ExplainError::NotGlobal(_))));
    }

    #[test]
    fn renderings() {
        let r = report(&[3.0, 1.0]).with_selector("output:0");
        let back = ImportanceReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let text = r.to_text();
        assert!(text.contains("75.00"), "{text}");
        assert_eq!(r.to_csv().lines().count(), 3);
        assert!(r.to_csv().starts_with("rank,id,name,value,raw\n1,0,f1,75,"));
    }
}
