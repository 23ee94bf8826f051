//! Linguistic-token experiment: top-k completions per gender variant,
//! part-of-speech filtering against an offline lexicon, and parallel pairs
//! (tokens predicted for both variants of a prompt) with their rank offset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{render_prompt, Corpus, Gender, ModelProfile, TargetUnit};
use crate::error::{Error, Result};
use crate::io;
use crate::probe::{probe_all, Prediction, ProbabilityQuery, ProbeBackend};

pub const DEFAULT_K: usize = 5;

const BUNDLED_LEXICON: &str = include_str!("../data/pos_lexicon.tsv");

// ---------------------------------------------------------------------------
// POS lexicon
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PosTag {
    #[serde(rename = "VERB")]
    Verb,
    #[serde(rename = "ADV")]
    Adv,
    #[serde(rename = "ADJ")]
    Adj,
}

impl PosTag {
    pub fn for_unit(unit: TargetUnit) -> Option<PosTag> {
        match unit {
            TargetUnit::Verb => Some(PosTag::Verb),
            TargetUnit::Adverb => Some(PosTag::Adv),
            TargetUnit::Adjective => Some(PosTag::Adj),
            TargetUnit::Pronoun => None,
        }
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "VERB" => Ok(PosTag::Verb),
            "ADV" => Ok(PosTag::Adv),
            "ADJ" => Ok(PosTag::Adj),
            other => Err(Error::Validation(format!("unknown POS tag {other:?}"))),
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosTag::Verb => "VERB",
            PosTag::Adv => "ADV",
            PosTag::Adj => "ADJ",
        })
    }
}

/// Word → tag-set table. File format: one `word<TAB>TAG[,TAG...]` per line;
/// `#` starts a comment and `# version: <v>` names the lexicon version.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosLexicon {
    pub version: Option<String>,
    entries: BTreeMap<String, BTreeSet<PosTag>>,
}

impl PosLexicon {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lexicon = PosLexicon::default();
        for (idx, line) in text.lines().enumerate() {
            let at = || format!("{origin}:{}", idx + 1);
            let line = line.trim_end_matches('\r');
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(version) = comment.trim().strip_prefix("version:") {
                    lexicon.version = Some(version.trim().to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (word, tags) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(at(), "expected word<TAB>tags"))?;
            if normalize_token(word).as_deref() != Some(word) {
                return Err(Error::parse(
                    at(),
                    format!("{word:?} is not a normalized word"),
                ));
            }
            let tags = tags
                .split(',')
                .map(|t| t.trim().parse::<PosTag>())
                .collect::<Result<BTreeSet<_>>>()
                .map_err(|e| Error::parse(at(), e))?;
            if lexicon.entries.insert(word.to_string(), tags).is_some() {
                return Err(Error::parse(at(), format!("duplicate word {word:?}")));
            }
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_to_string(path)?, &path.display().to_string())
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON, "bundled pos_lexicon.tsv").expect("bundled lexicon is valid")
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a [PosTag])>) -> Self {
        PosLexicon {
            version: None,
            entries: entries
                .into_iter()
                .map(|(w, tags)| (w.to_string(), tags.iter().copied().collect()))
                .collect(),
        }
    }

    pub fn tags(&self, word: &str) -> Option<&BTreeSet<PosTag>> {
        self.entries.get(word)
    }

    pub fn words_with(&self, tag: PosTag) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(move |(_, tags)| tags.contains(&tag))
            .map(|(w, _)| w.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Strips tokenizer whitespace markers (`Ġ`, `▁`) and lowercases. Returns
/// `None` for subword continuations (`##…`), multi-word strings, and tokens
/// that are not words (punctuation, digits).
pub fn normalize_token(raw: &str) -> Option<String> {
    if raw.starts_with("##") {
        return None;
    }
    let token = raw.trim_start_matches(['Ġ', '▁']).trim();
    let first = token.chars().next()?;
    let last = token.chars().last()?;
    if !first.is_alphabetic() || !last.is_alphabetic() {
        return None;
    }
    if !token
        .chars()
        .all(|c| c.is_alphabetic() || c == '-' || c == '\'')
    {
        return None;
    }
    Some(token.to_lowercase())
}

/// True iff the normalized token carries the unit's tag. Unknown tokens are
/// excluded.
pub fn validate_category(prediction: &Prediction, unit: TargetUnit, lexicon: &PosLexicon) -> bool {
    let Some(tag) = PosTag::for_unit(unit) else {
        return false;
    };
    let Some(word) = normalize_token(&prediction.token) else {
        log::debug!("excluded non-word token {:?}", prediction.token);
        return false;
    };
    match lexicon.tags(&word) {
        Some(tags) => tags.contains(&tag),
        None => {
            log::debug!("excluded token {word:?}: not in POS lexicon");
            false
        }
    }
}

// ---------------------------------------------------------------------------
// Top-k predictions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKPrediction {
    pub prompt_pair_id: String,
    pub gender_variant: Gender,
    pub unit: TargetUnit,
    pub predictions: Vec<Prediction>,
    /// Predictions that pass the POS filter, in rank order, keeping their raw
    /// ranks. A token whose normalized form repeats an earlier one is dropped.
    pub validated: Vec<Prediction>,
}

impl TopKPrediction {
    pub fn new(
        prompt_pair_id: impl Into<String>,
        gender_variant: Gender,
        unit: TargetUnit,
        predictions: Vec<Prediction>,
        lexicon: &PosLexicon,
    ) -> Self {
        let mut seen = BTreeSet::new();
        let validated = predictions
            .iter()
            .filter(|p| validate_category(p, unit, lexicon))
            .filter(|p| seen.insert(normalize_token(&p.token)))
            .cloned()
            .collect();
        TopKPrediction {
            prompt_pair_id: prompt_pair_id.into(),
            gender_variant,
            unit,
            predictions,
            validated,
        }
    }
}

/// Probes every linguistic-token prompt for its top `k` completions, in
/// corpus order.
pub fn predict_linguistic_tokens<B: ProbeBackend + ?Sized>(
    corpus: &Corpus,
    profile: &ModelProfile,
    lexicon: &PosLexicon,
    backend: &B,
    k: usize,
    concurrency: usize,
) -> Result<Vec<TopKPrediction>> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let records = &corpus.linguistic_prompts;
    let queries: Vec<ProbabilityQuery> = records
        .iter()
        .map(|r| ProbabilityQuery::with_top_k(render_prompt(r, profile), k))
        .collect();
    let results = probe_all(backend, &queries, concurrency);

    let mut out = Vec::with_capacity(records.len());
    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut first_error = None;
    for (record, result) in records.iter().zip(results) {
        let checked = result.map(|r| {
            r.and_then(|response| {
                let distinct: BTreeSet<&str> = response
                    .predictions
                    .iter()
                    .map(|p| p.token.as_str())
                    .collect();
                if distinct.len() < k {
                    return Err(Error::Protocol(format!(
                        "backend returned {} distinct token(s), expected {k}",
                        distinct.len()
                    )));
                }
                Ok(response)
            })
        });
        match checked {
            Some(Ok(response)) => {
                let gender = record.gender_variant.ok_or_else(|| {
                    Error::Validation(format!("{} lacks a gender variant", record.id))
                })?;
                let pair_id = record.pair_id().unwrap_or(&record.id);
                out.push(TopKPrediction::new(
                    pair_id,
                    gender,
                    record.target_unit,
                    response.predictions,
                    lexicon,
                ));
                completed.push(record.id.clone());
            }
            Some(Err(e)) => {
                failed.push(record.id.clone());
                if first_error.is_none() {
                    first_error = Some(e.for_prompt(&record.id));
                }
            }
            None => {}
        }
    }
    match first_error {
        Some(source) => Err(Error::BatchAborted {
            completed,
            failed,
            source: Box::new(source),
        }),
        None => Ok(out),
    }
}

// ---------------------------------------------------------------------------
// Parallel pairs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub token: String,
    pub unit: TargetUnit,
    pub prompt_pair_id: String,
    /// Position within the male variant's validated list (1-based).
    pub male_rank: u32,
    pub female_rank: u32,
    pub male_prob: f64,
    pub female_prob: f64,
    /// `female_rank − male_rank`.
    pub offset_j: i64,
}

/// One line of the pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub model_id: String,
    pub prompt_pair_id: String,
    pub unit: TargetUnit,
    pub token: String,
    pub male_rank: u32,
    pub female_rank: u32,
    pub male_prob: f64,
    pub female_prob: f64,
    pub offset_j: i64,
}

impl PairRecord {
    pub fn new(pair: &ParallelPair, model_id: &str) -> Self {
        PairRecord {
            model_id: model_id.to_string(),
            prompt_pair_id: pair.prompt_pair_id.clone(),
            unit: pair.unit,
            token: pair.token.clone(),
            male_rank: pair.male_rank,
            female_rank: pair.female_rank,
            male_prob: pair.male_prob,
            female_prob: pair.female_prob,
            offset_j: pair.offset_j,
        }
    }
}

/// Normalized token → (validated-list position, probability).
fn validated_positions(prediction: &TopKPrediction) -> BTreeMap<String, (u32, f64)> {
    let mut positions = BTreeMap::new();
    let mut position = 0u32;
    for p in &prediction.validated {
        let Some(token) = normalize_token(&p.token) else {
            continue;
        };
        if let std::collections::btree_map::Entry::Vacant(slot) = positions.entry(token) {
            position += 1;
            slot.insert((position, p.score));
        }
    }
    positions
}

/// One pair per (prompt pair, token in both validated lists), sorted by
/// prompt pair id then token. Prompt pairs lacking either variant produce
/// nothing.
pub fn extract_parallel_pairs(predictions: &[TopKPrediction]) -> Vec<ParallelPair> {
    let mut by_pair: BTreeMap<&str, (Option<&TopKPrediction>, Option<&TopKPrediction>)> =
        BTreeMap::new();
    for p in predictions {
        let slot = by_pair.entry(p.prompt_pair_id.as_str()).or_default();
        match p.gender_variant {
            Gender::Male => slot.0 = Some(p),
            Gender::Female => slot.1 = Some(p),
        }
    }

    let mut pairs = Vec::new();
    for (pair_id, variants) in by_pair {
        let (Some(male), Some(female)) = variants else {
            log::warn!("prompt pair {pair_id} lacks a gender variant; skipped");
            continue;
        };
        let female_positions = validated_positions(female);
        for (token, (male_rank, male_prob)) in validated_positions(male) {
            if let Some(&(female_rank, female_prob)) = female_positions.get(&token) {
                pairs.push(ParallelPair {
                    token,
                    unit: male.unit,
                    prompt_pair_id: pair_id.to_string(),
                    male_rank,
                    female_rank,
                    male_prob,
                    female_prob,
                    offset_j: female_rank as i64 - male_rank as i64,
                });
            }
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub model_id: String,
    pub total_pairs: usize,
    pub per_unit_counts: BTreeMap<TargetUnit, usize>,
    /// Omitted when there are no pairs.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_unit_share: BTreeMap<TargetUnit, f64>,
    /// Raw top-k tokens per unit, before POS filtering.
    #[serde(default)]
    pub raw_tokens: BTreeMap<TargetUnit, usize>,
    /// Tokens per unit that passed POS filtering.
    #[serde(default)]
    pub validated_tokens: BTreeMap<TargetUnit, usize>,
}

pub fn summarize_pairs(pairs: &[ParallelPair], model_id: &str) -> PairSummary {
    let mut per_unit_counts: BTreeMap<TargetUnit, usize> =
        TargetUnit::LINGUISTIC.iter().map(|u| (*u, 0)).collect();
    for pair in pairs {
        *per_unit_counts.entry(pair.unit).or_default() += 1;
    }
    let total = pairs.len();
    let per_unit_share = if total == 0 {
        BTreeMap::new()
    } else {
        per_unit_counts
            .iter()
            .map(|(u, c)| (*u, *c as f64 / total as f64))
            .collect()
    };
    PairSummary {
        model_id: model_id.to_string(),
        total_pairs: total,
        per_unit_counts,
        per_unit_share,
        raw_tokens: BTreeMap::new(),
        validated_tokens: BTreeMap::new(),
    }
}

/// Summary including raw and validated token counts from the predictions.
pub fn summarize_run(
    predictions: &[TopKPrediction],
    pairs: &[ParallelPair],
    model_id: &str,
) -> PairSummary {
    let mut summary = summarize_pairs(pairs, model_id);
    for unit in TargetUnit::LINGUISTIC {
        summary.raw_tokens.insert(unit, 0);
        summary.validated_tokens.insert(unit, 0);
    }
    for p in predictions {
        *summary.raw_tokens.entry(p.unit).or_default() += p.predictions.len();
        *summary.validated_tokens.entry(p.unit).or_default() += p.validated.len();
    }
    summary
}
