//! Aggregated audit report and its renderings (structured JSON, CSV tables,
//! markdown).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{JobCategory, ModelProfile, TargetUnit};
use crate::error::{Error, Result};
use crate::lexical::PairSummary;
use crate::stats::{DeltaComparison, StatsRecord, ZeroPolicy};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Provenance of one command run against one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_id: String,
    pub command: String,
    pub corpus_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_version: Option<String>,
    pub backend_id: String,
    pub alpha: f64,
    pub zero_policy: ZeroPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Unix seconds; only recorded for non-deterministic backends or when
    /// `SOURCE_DATE_EPOCH` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub corpus_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_version: Option<String>,
    pub alpha: f64,
    pub zero_policy: ZeroPolicy,
    /// Model id → backend id.
    pub backend_ids: BTreeMap<String, String>,
    pub runs: Vec<RunRecord>,
}

/// Mono/multi comparison rows for one model pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub mono_model: String,
    pub multi_model: String,
    #[serde(flatten)]
    pub comparison: DeltaComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub format_version: u32,
    pub model_profiles: Vec<ModelProfile>,
    pub per_category_stats: Vec<StatsRecord>,
    pub delta_table: Vec<DeltaRow>,
    pub pair_summaries: Vec<PairSummary>,
    pub run_metadata: RunMetadata,
}

fn agree<T: PartialEq + std::fmt::Debug>(
    values: impl IntoIterator<Item = (String, T)>,
    what: &str,
) -> Result<Option<T>> {
    let mut first: Option<(String, T)> = None;
    for (source, value) in values {
        match &first {
            None => first = Some((source, value)),
            Some((_, expected)) if *expected == value => {}
            Some((_, expected)) => {
                return Err(Error::VersionMismatch {
                    context: format!("{what} of {source}"),
                    expected: format!("{expected:?}"),
                    found: format!("{value:?}"),
                })
            }
        }
    }
    Ok(first.map(|(_, v)| v))
}

/// Assembles a report, checking that every input comes from the same corpus
/// version (and lexicon version and alpha), that each (model, category)
/// appears once, and that delta rows reference a monolingual and a
/// multilingual profile.
pub fn build_report(
    model_profiles: Vec<ModelProfile>,
    per_category_stats: Vec<StatsRecord>,
    delta_table: Vec<DeltaRow>,
    pair_summaries: Vec<PairSummary>,
    runs: Vec<RunRecord>,
) -> Result<AuditReport> {
    let corpus_version = agree(
        runs.iter().map(|r| {
            (
                format!("{} {}", r.command, r.model_id),
                r.corpus_version.clone(),
            )
        }),
        "corpus version",
    )?
    .ok_or_else(|| Error::Validation("report needs at least one run record".into()))?;
    let lexicon_version = agree(
        runs.iter()
            .filter_map(|r| r.lexicon_version.clone().map(|v| (r.model_id.clone(), v))),
        "lexicon version",
    )?;
    let alpha = agree(
        runs.iter().map(|r| (r.model_id.clone(), r.alpha)).chain(
            per_category_stats
                .iter()
                .map(|s| (s.model_id.clone(), s.alpha)),
        ),
        "alpha",
    )?
    .expect("at least one run");

    let profiles: BTreeMap<&str, &ModelProfile> = model_profiles
        .iter()
        .map(|p| (p.model_id.as_str(), p))
        .collect();
    let mut seen = BTreeSet::new();
    for row in &per_category_stats {
        if !profiles.contains_key(row.model_id.as_str()) {
            return Err(Error::Validation(format!(
                "statistics reference unknown model {}",
                row.model_id
            )));
        }
        if !seen.insert((row.model_id.as_str(), row.stats.category)) {
            return Err(Error::Validation(format!(
                "duplicate statistics for {} / {}",
                row.model_id, row.stats.category
            )));
        }
    }
    let mut seen = BTreeSet::new();
    for row in &delta_table {
        let mono = profiles.get(row.mono_model.as_str());
        let multi = profiles.get(row.multi_model.as_str());
        match (mono, multi) {
            (Some(m), Some(x)) if !m.multilingual && x.multilingual => {}
            _ => return Err(Error::Validation(format!(
                "delta row {} vs {} does not reference a monolingual and a multilingual profile",
                row.mono_model, row.multi_model
            ))),
        }
        if !seen.insert((&row.mono_model, &row.multi_model, row.comparison.category)) {
            return Err(Error::Validation(format!(
                "duplicate delta row {} vs {} / {}",
                row.mono_model, row.multi_model, row.comparison.category
            )));
        }
    }
    let mut seen = BTreeSet::new();
    for summary in &pair_summaries {
        if !seen.insert(summary.model_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate pair summary for {}",
                summary.model_id
            )));
        }
    }

    let backend_ids = runs
        .iter()
        .map(|r| (r.model_id.clone(), r.backend_id.clone()))
        .collect();
    Ok(AuditReport {
        format_version: REPORT_FORMAT_VERSION,
        model_profiles,
        per_category_stats,
        delta_table,
        pair_summaries,
        run_metadata: RunMetadata {
            corpus_version,
            lexicon_version,
            alpha,
            zero_policy: ZeroPolicy::Wilcox,
            backend_ids,
            runs,
        },
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" | "json" => Ok(ReportFormat::Structured),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!(
                "unknown report format {other:?} (expected structured, csv or markdown)"
            ))),
        }
    }
}

/// A rendered output file: name relative to the output directory, and bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub const STATS_CSV_HEADER: [&str; 9] = [
    "model",
    "category",
    "n",
    "v",
    "p",
    "a",
    "magnitude",
    "direction",
    "classification",
];
pub const DELTA_CSV_HEADER: [&str; 5] = [
    "pair",
    "category",
    "delta_mono",
    "delta_multi",
    "difference",
];
pub const PAIRS_CSV_HEADER: [&str; 8] = [
    "model",
    "total_pairs",
    "verb",
    "adverb",
    "adjective",
    "verb_share",
    "adverb_share",
    "adjective_share",
];

pub fn render(report: &AuditReport, format: ReportFormat) -> Result<Vec<RenderedFile>> {
    Ok(match format {
        ReportFormat::Structured => vec![RenderedFile {
            name: "report.json".into(),
            bytes: render_structured(report)?,
        }],
        ReportFormat::Csv => render_csv(report)?,
        ReportFormat::Markdown => vec![RenderedFile {
            name: "report.md".into(),
            bytes: render_markdown(report).into_bytes(),
        }],
    })
}

pub fn render_structured(report: &AuditReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)
        .map_err(|e| Error::Validation(format!("cannot serialize report: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn parse_structured(bytes: &[u8]) -> Result<AuditReport> {
    let report: AuditReport =
        serde_json::from_slice(bytes).map_err(|e| Error::parse("report", e))?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported report format version {}",
            report.format_version
        )));
    }
    Ok(report)
}

/// Pair label used in the delta table.
pub fn pair_label(mono: &str, multi: &str) -> String {
    format!("{mono} vs {multi}")
}

fn csv_bytes<const N: usize>(header: [&str; N], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    writer.write_record(header).map_err(err)?;
    for row in rows {
        writer.write_record(row).map_err(err)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Validation(format!("csv: {e}")))
}

pub fn render_csv(report: &AuditReport) -> Result<Vec<RenderedFile>> {
    let stats_rows = report
        .per_category_stats
        .iter()
        .map(|r| {
            let s = &r.stats;
            vec![
                r.model_id.clone(),
                s.category.name().to_string(),
                s.n.to_string(),
                s.v_value.to_string(),
                s.p_value.to_string(),
                s.a_value.to_string(),
                s.magnitude.to_string(),
                s.direction.to_string(),
                s.classification.to_string(),
            ]
        })
        .collect();
    let delta_rows = report
        .delta_table
        .iter()
        .map(|r| {
            let c = &r.comparison;
            vec![
                pair_label(&r.mono_model, &r.multi_model),
                c.category.name().to_string(),
                c.delta_mono.to_string(),
                c.delta_multi.to_string(),
                c.difference.to_string(),
            ]
        })
        .collect();
    let pair_rows = report
        .pair_summaries
        .iter()
        .map(|s| {
            let mut row = vec![s.model_id.clone(), s.total_pairs.to_string()];
            for unit in TargetUnit::LINGUISTIC {
                row.push(
                    s.per_unit_counts
                        .get(&unit)
                        .copied()
                        .unwrap_or(0)
                        .to_string(),
                );
            }
            for unit in TargetUnit::LINGUISTIC {
                row.push(
                    s.per_unit_share
                        .get(&unit)
                        .map(f64::to_string)
                        .unwrap_or_default(),
                );
            }
            row
        })
        .collect();
    Ok(vec![
        RenderedFile {
            name: "statistics.csv".into(),
            bytes: csv_bytes(STATS_CSV_HEADER, stats_rows)?,
        },
        RenderedFile {
            name: "deltas.csv".into(),
            bytes: csv_bytes(DELTA_CSV_HEADER, delta_rows)?,
        },
        RenderedFile {
            name: "pairs.csv".into(),
            bytes: csv_bytes(PAIRS_CSV_HEADER, pair_rows)?,
        },
    ])
}

/// `p<0.01` below 0.01, otherwise two decimals.
pub fn format_p(p: f64) -> String {
    if p < 0.01 {
        "p<0.01".to_string()
    } else {
        format_2dp(p)
    }
}

/// Two decimals, without a negative sign on values that round to zero.
pub fn format_2dp(value: f64) -> String {
    let s = format!("{value:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn format_share(share: Option<&f64>) -> String {
    share
        .map(|s| format!("{:.1}%", s * 100.0))
        .unwrap_or_else(|| "–".into())
}

pub fn render_markdown(report: &AuditReport) -> String {
    let meta = &report.run_metadata;
    let mut out = String::new();
    let _ = writeln!(out, "# Audit report\n");
    let _ = writeln!(out, "- corpus version: {}", meta.corpus_version);
    if let Some(v) = &meta.lexicon_version {
        let _ = writeln!(out, "- POS lexicon version: {v}");
    }
    let _ = writeln!(out, "- alpha: {}", meta.alpha);
    for (model, backend) in &meta.backend_ids {
        let _ = writeln!(out, "- {model}: {backend}");
    }

    let mut models: Vec<&str> = Vec::new();
    for row in &report.per_category_stats {
        if !models.contains(&row.model_id.as_str()) {
            models.push(&row.model_id);
        }
    }
    if !models.is_empty() {
        let _ = writeln!(out, "\n## Pronoun statistics");
    }
    for model in models {
        let _ = writeln!(out, "\n### {model}\n");
        let _ = writeln!(out, "| Category | V | p | A | Magnitude | Classification |");
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        let rows = report
            .per_category_stats
            .iter()
            .filter(|r| r.model_id == model);
        for row in rows {
            let s = &row.stats;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                s.category.label(),
                s.v_value,
                format_p(s.p_value),
                format_2dp(s.a_value),
                s.magnitude,
                s.classification
            );
        }
    }

    if !report.delta_table.is_empty() {
        let _ = writeln!(out, "\n## Monolingual vs multilingual\n");
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for row in &report.delta_table {
            let key = (row.mono_model.as_str(), row.multi_model.as_str());
            if !pairs.contains(&key) {
                pairs.push(key);
            }
        }
        let _ = write!(out, "| Category |");
        for (mono, multi) in &pairs {
            let _ = write!(out, " {} |", pair_label(mono, multi));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "|---|{}", "---|".repeat(pairs.len()));
        for category in JobCategory::ALL {
            let cells: Vec<String> = pairs
                .iter()
                .map(|(mono, multi)| {
                    report
                        .delta_table
                        .iter()
                        .find(|r| {
                            r.mono_model == *mono
                                && r.multi_model == *multi
                                && r.comparison.category == category
                        })
                        .map(|r| format_2dp(r.comparison.difference))
                        .unwrap_or_else(|| "–".into())
                })
                .collect();
            if cells.iter().all(|c| c == "–") {
                continue;
            }
            let _ = writeln!(out, "| {} | {} |", category.label(), cells.join(" | "));
        }
    }

    let _ = writeln!(out, "\n## Parallel pairs\n");
    if report.pair_summaries.is_empty() {
        let _ = writeln!(out, "No token runs recorded.");
    } else {
        let _ = writeln!(
            out,
            "| Model | Pairs | Verb | Adverb | Adjective | Raw tokens | Validated tokens |"
        );
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for s in &report.pair_summaries {
            let cell = |u: TargetUnit| {
                format!(
                    "{} ({})",
                    s.per_unit_counts.get(&u).copied().unwrap_or(0),
                    format_share(s.per_unit_share.get(&u))
                )
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                s.model_id,
                s.total_pairs,
                cell(TargetUnit::Verb),
                cell(TargetUnit::Adverb),
                cell(TargetUnit::Adjective),
                s.raw_tokens.values().sum::<usize>(),
                s.validated_tokens.values().sum::<usize>()
            );
        }
    }
    out
}
