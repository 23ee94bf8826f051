//! End-to-end commands over a run configuration, and the on-disk layout of
//! their artifacts under the output directory:
//!
//! ```text
//! gtc/<model>.jsonl           one GTC record per job prompt
//! stats/<model>.jsonl         one statistics record per job category
//! predictions/<model>.jsonl   top-k predictions per linguistic prompt
//! pairs/<model>.jsonl         parallel pairs
//! summary/<model>.json        pair summary
//! compare/<mono>__<multi>.jsonl
//! runs/<model>.<command>.json run provenance
//! progress/<model>.<command>.jsonl  resumable probe manifest (removed on success)
//! ```

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::corpus::{Corpus, JobCategory, ModelProfile};
use crate::error::{Error, Result};
use crate::gtc::{compute_gtc_batch, GtcBatch};
use crate::io;
use crate::lexical::{
    extract_parallel_pairs, predict_linguistic_tokens, summarize_run, PairRecord, PairSummary,
    PosLexicon, TopKPrediction,
};
use crate::probe::{record_replay, ProbeBackend, RecordingBackend, ResumableBackend};
use crate::report::{
    build_report, render, AuditReport, DeltaRow, RenderedFile, ReportFormat, RunRecord,
};
use crate::stats::{
    category_statistics, compare_statistics, PairedSample, StatsRecord, ZeroPolicy,
};

pub const PRONOUNS_COMMAND: &str = "audit-pronouns";
pub const TOKENS_COMMAND: &str = "audit-tokens";

/// File-name-safe form of a model id.
pub fn artifact_stem(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct AuditOptions {
    /// Also write every response of this run to a replay file.
    pub record: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PronounOutcome {
    pub batch: GtcBatch,
    pub stats: Vec<StatsRecord>,
    pub resumed: usize,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TokenOutcome {
    pub predictions: Vec<TopKPrediction>,
    pub pairs: Vec<PairRecord>,
    pub summary: PairSummary,
    pub resumed: usize,
    pub files: Vec<PathBuf>,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub corpus: Corpus,
    pub pos_lexicon: PosLexicon,
    endpoint_override: Option<String>,
}

struct BackendInfo {
    backend_id: String,
    deterministic: bool,
    started_at: Option<u64>,
}

fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

fn timestamp(deterministic: bool) -> Option<u64> {
    source_date_epoch().or_else(|| {
        (!deterministic).then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Validation(format!("cannot serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    io::write_atomic(path, &bytes)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = io::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

impl Pipeline {
    /// Loads the corpus and POS lexicon named by the configuration.
    pub fn new(config: RunConfig, endpoint_override: Option<String>) -> Result<Self> {
        let corpus = config.load_corpus()?;
        let pos_lexicon = config.pos_lexicon()?;
        Ok(Pipeline {
            config,
            corpus,
            pos_lexicon,
            endpoint_override,
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn artifact(&self, kind: &str, model_id: &str, extension: &str) -> PathBuf {
        self.output_dir()
            .join(kind)
            .join(format!("{}.{extension}", artifact_stem(model_id)))
    }

    fn progress_path(&self, model_id: &str, command: &str) -> PathBuf {
        self.artifact("progress", model_id, &format!("{command}.jsonl"))
    }

    fn run_path(&self, model_id: &str, command: &str) -> PathBuf {
        self.artifact("runs", model_id, &format!("{command}.json"))
    }

    pub fn stats_path(&self, model_id: &str) -> PathBuf {
        self.artifact("stats", model_id, "jsonl")
    }

    pub fn compare_path(&self, mono: &str, multi: &str) -> PathBuf {
        self.output_dir().join("compare").join(format!(
            "{}__{}.jsonl",
            artifact_stem(mono),
            artifact_stem(multi)
        ))
    }

    fn profile(&self, model_id: &str) -> Result<ModelProfile> {
        self.config.model(model_id)?.profile()
    }

    fn backend(&self, model_id: &str) -> Result<Box<dyn ProbeBackend>> {
        self.config.model(model_id)?.build_backend(
            &self.corpus,
            &self.config.pronoun_lexicon(),
            self.endpoint_override.as_deref(),
        )
    }

    fn run_record(
        &self,
        model_id: &str,
        command: &str,
        backend: &BackendInfo,
        k: Option<usize>,
        lexicon_version: Option<String>,
    ) -> RunRecord {
        RunRecord {
            model_id: model_id.to_string(),
            command: command.to_string(),
            corpus_version: self.corpus.version.clone(),
            lexicon_version,
            backend_id: backend.backend_id.clone(),
            alpha: self.config.alpha,
            zero_policy: ZeroPolicy::Wilcox,
            k,
            started_at: backend.started_at,
            finished_at: backend.started_at.and(timestamp(backend.deterministic)),
        }
    }

    /// Runs `body` against the model's backend wrapped for resumption (and
    /// recording, if requested). The progress manifest is removed on success.
    fn with_backend<T>(
        &self,
        model_id: &str,
        command: &str,
        options: &AuditOptions,
        body: impl FnOnce(&dyn ProbeBackend) -> Result<T>,
    ) -> Result<(T, usize, BackendInfo)> {
        let backend = self.backend(model_id)?;
        let info = BackendInfo {
            backend_id: backend.backend_id().to_string(),
            deterministic: backend.is_deterministic(),
            started_at: timestamp(backend.is_deterministic()),
        };
        let progress = self.progress_path(model_id, command);
        let resumable = ResumableBackend::open(backend, &progress)?;
        let resumed = resumable.resumed();
        if resumed > 0 {
            log::info!("{model_id}: resuming with {resumed} completed probe(s)");
        }
        let recorder = RecordingBackend::new(resumable);
        let value = body(&recorder)?;
        let session = recorder.into_session();
        if let Some(path) = &options.record {
            let n = record_replay(&session, path)?;
            log::info!(
                "{model_id}: replay file {} now holds {n} response(s)",
                path.display()
            );
        }
        std::fs::remove_file(&progress).map_err(|e| Error::io(&progress, e))?;
        if let Some(dir) = progress.parent() {
            // Only succeeds once no other manifest remains.
            let _ = std::fs::remove_dir(dir);
        }
        Ok((value, resumed, info))
    }

    /// GTC for every job prompt, then per-category statistics.
    pub fn audit_pronouns(&self, model_id: &str, options: &AuditOptions) -> Result<PronounOutcome> {
        let profile = self.profile(model_id)?;
        let lexicon = self.config.pronoun_lexicon();
        let (batch, resumed, backend) =
            self.with_backend(model_id, PRONOUNS_COMMAND, options, |backend| {
                compute_gtc_batch(
                    &self.corpus,
                    &profile,
                    &lexicon,
                    backend,
                    self.config.concurrency,
                )
            })?;
        if !batch.oov_tokens.is_empty() {
            log::warn!(
                "{model_id}: out-of-vocabulary pronouns scored 0: {:?}",
                batch.oov_tokens
            );
        }

        let stats = batch
            .groups
            .iter()
            .map(|group| {
                let sample = PairedSample::new(
                    group.pairs.iter().map(|p| p.gtc_male).collect(),
                    group.pairs.iter().map(|p| p.gtc_female).collect(),
                )?;
                Ok(StatsRecord {
                    model_id: model_id.to_string(),
                    stats: category_statistics(group.category, &sample, self.config.alpha)?,
                    alpha: self.config.alpha,
                    zero_policy: ZeroPolicy::Wilcox,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let gtc_path = self.artifact("gtc", model_id, "jsonl");
        let stats_path = self.stats_path(model_id);
        let run_path = self.run_path(model_id, PRONOUNS_COMMAND);
        io::write_jsonl(&gtc_path, &batch.records())?;
        io::write_jsonl(&stats_path, &stats)?;
        let run = self.run_record(model_id, PRONOUNS_COMMAND, &backend, None, None);
        write_json(&run_path, &run)?;

        Ok(PronounOutcome {
            batch,
            stats,
            resumed,
            files: vec![gtc_path, stats_path, run_path],
        })
    }

    /// Top-k predictions, POS validation, parallel pairs and their summary.
    pub fn audit_tokens(&self, model_id: &str, options: &AuditOptions) -> Result<TokenOutcome> {
        let profile = self.profile(model_id)?;
        let k = self.config.k;
        let (predictions, resumed, backend) =
            self.with_backend(model_id, TOKENS_COMMAND, options, |backend| {
                predict_linguistic_tokens(
                    &self.corpus,
                    &profile,
                    &self.pos_lexicon,
                    backend,
                    k,
                    self.config.concurrency,
                )
            })?;
        let pairs = extract_parallel_pairs(&predictions);
        let summary = summarize_run(&predictions, &pairs, model_id);
        let records: Vec<PairRecord> = pairs.iter().map(|p| PairRecord::new(p, model_id)).collect();

        let predictions_path = self.artifact("predictions", model_id, "jsonl");
        let pairs_path = self.artifact("pairs", model_id, "jsonl");
        let summary_path = self.artifact("summary", model_id, "json");
        let run_path = self.run_path(model_id, TOKENS_COMMAND);
        io::write_jsonl(&predictions_path, &predictions)?;
        io::write_jsonl(&pairs_path, &records)?;
        write_json(&summary_path, &summary)?;
        let run = self.run_record(
            model_id,
            TOKENS_COMMAND,
            &backend,
            Some(k),
            self.pos_lexicon.version.clone(),
        );
        write_json(&run_path, &run)?;

        Ok(TokenOutcome {
            predictions,
            pairs: records,
            summary,
            resumed,
            files: vec![predictions_path, pairs_path, summary_path, run_path],
        })
    }

    pub fn load_stats(&self, model_id: &str) -> Result<Vec<StatsRecord>> {
        let path = self.stats_path(model_id);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path,
                what: format!("statistics for {model_id} (run audit-pronouns first)"),
            });
        }
        let records: Vec<StatsRecord> = io::read_jsonl(&path)?;
        if let Some(other) = records.iter().find(|r| r.model_id != model_id) {
            return Err(Error::Validation(format!(
                "{} holds statistics for {}",
                path.display(),
                other.model_id
            )));
        }
        Ok(records)
    }

    /// Mono/multi delta rows for one model pair, written to the compare
    /// directory.
    pub fn compare(&self, mono: &str, multi: &str) -> Result<Vec<DeltaRow>> {
        let (mono_profile, multi_profile) = (self.profile(mono)?, self.profile(multi)?);
        if mono_profile.multilingual || !multi_profile.multilingual {
            return Err(Error::Config(format!(
                "compare needs a monolingual and a multilingual model; got {mono} (multilingual = {}) and {multi} (multilingual = {})",
                mono_profile.multilingual, multi_profile.multilingual
            )));
        }
        let mono_stats: Vec<_> = self
            .load_stats(mono)?
            .into_iter()
            .map(|r| r.stats)
            .collect();
        let multi_stats: Vec<_> = self
            .load_stats(multi)?
            .into_iter()
            .map(|r| r.stats)
            .collect();
        let rows: Vec<DeltaRow> = compare_statistics(&mono_stats, &multi_stats)?
            .into_iter()
            .map(|comparison| DeltaRow {
                mono_model: mono.to_string(),
                multi_model: multi.to_string(),
                comparison,
            })
            .collect();
        io::write_jsonl(&self.compare_path(mono, multi), &rows)?;
        Ok(rows)
    }

    /// Collects every artifact present in the output directory into a report.
    pub fn build_report(&self) -> Result<AuditReport> {
        let profiles = self.config.profiles()?;
        let mut stats = Vec::new();
        let mut summaries = Vec::new();
        let mut runs = Vec::new();
        let mut deltas = Vec::new();
        for profile in &profiles {
            let id = &profile.model_id;
            if self.stats_path(id).exists() {
                stats.extend(self.load_stats(id)?);
            }
            let summary_path = self.artifact("summary", id, "json");
            if summary_path.exists() {
                summaries.push(read_json::<PairSummary>(&summary_path)?);
            }
            for command in [PRONOUNS_COMMAND, TOKENS_COMMAND] {
                let path = self.run_path(id, command);
                if path.exists() {
                    runs.push(read_json::<RunRecord>(&path)?);
                }
            }
        }
        for mono in profiles.iter().filter(|p| !p.multilingual) {
            for multi in profiles.iter().filter(|p| p.multilingual) {
                let path = self.compare_path(&mono.model_id, &multi.model_id);
                if path.exists() {
                    deltas.extend(io::read_jsonl::<DeltaRow>(&path)?);
                }
            }
        }
        if runs.is_empty() {
            return Err(Error::MissingArtifact {
                path: self.output_dir().join("runs"),
                what: "run records (run an audit command first)".into(),
            });
        }
        order_stats(&mut stats, &profiles);
        build_report(profiles, stats, deltas, summaries, runs)
    }

    /// Renders the report in each format into `out_dir`.
    pub fn write_report(&self, out_dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
        let report = self.build_report()?;
        let mut written = Vec::new();
        for format in formats {
            for RenderedFile { name, bytes } in render(&report, *format)? {
                let path = out_dir.join(name);
                io::write_atomic(&path, &bytes)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

fn order_stats(stats: &mut [StatsRecord], profiles: &[ModelProfile]) {
    let model_index = |id: &str| profiles.iter().position(|p| p.model_id == id);
    let category_index = |c: JobCategory| JobCategory::ALL.iter().position(|x| *x == c);
    stats.sort_by_key(|r| (model_index(&r.model_id), category_index(r.stats.category)));
}
