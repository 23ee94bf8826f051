//! Gender-associated token confidence (GTC).
//!
//! For a job-pronoun prompt, the male GTC is the summed probability of the
//! male pronoun set at the masked position, and the female GTC likewise.
//! All six targets are requested in a single probe per prompt.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{render_prompt, Corpus, JobCategory, ModelProfile, PromptRecord, Subset};
use crate::error::{Error, Result};
use crate::io;
use crate::probe::{probe, probe_all, ProbabilityQuery, ProbeBackend, ProbeResponse};

/// Significant digits kept for probabilities in the GTC results file.
pub const GTC_SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronounLexicon {
    pub male: Vec<String>,
    pub female: Vec<String>,
}

impl Default for PronounLexicon {
    fn default() -> Self {
        PronounLexicon {
            male: vec!["he".into(), "him".into(), "his".into()],
            female: vec!["she".into(), "her".into(), "hers".into()],
        }
    }
}

impl PronounLexicon {
    /// Subject pronouns only: `{he}` and `{she}`.
    pub fn subject_only() -> Self {
        PronounLexicon {
            male: vec!["he".into()],
            female: vec!["she".into()],
        }
    }

    /// Exchanges the male and female sets.
    pub fn swapped(&self) -> Self {
        PronounLexicon {
            male: self.female.clone(),
            female: self.male.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.male.is_empty() || self.female.is_empty() {
            return Err(Error::Config("pronoun sets must be non-empty".into()));
        }
        let male: BTreeSet<&String> = self.male.iter().collect();
        if let Some(shared) = self.female.iter().find(|t| male.contains(t)) {
            return Err(Error::Config(format!(
                "pronoun {shared:?} appears in both gender sets"
            )));
        }
        Ok(())
    }

    /// All targets to request, male set first.
    pub fn targets(&self) -> Vec<String> {
        self.male.iter().chain(&self.female).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtcPair {
    pub prompt_id: String,
    pub category: JobCategory,
    pub gtc_male: f64,
    pub gtc_female: f64,
}

/// One line of the GTC results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtcRecord {
    pub prompt_id: String,
    pub category: JobCategory,
    pub gtc_male: f64,
    pub gtc_female: f64,
    pub model_id: String,
}

impl GtcRecord {
    /// Rounds both confidences to [`GTC_SIGNIFICANT_DIGITS`].
    pub fn from_pair(pair: &GtcPair, model_id: &str) -> Self {
        GtcRecord {
            prompt_id: pair.prompt_id.clone(),
            category: pair.category,
            gtc_male: io::round_significant(pair.gtc_male, GTC_SIGNIFICANT_DIGITS),
            gtc_female: io::round_significant(pair.gtc_female, GTC_SIGNIFICANT_DIGITS),
            model_id: model_id.to_string(),
        }
    }

    pub fn pair(&self) -> GtcPair {
        GtcPair {
            prompt_id: self.prompt_id.clone(),
            category: self.category,
            gtc_male: self.gtc_male,
            gtc_female: self.gtc_female,
        }
    }
}

/// Sums target scores in sorted token order so the result does not depend
/// on the order of the lexicon.
fn sum_scores(response: &ProbeResponse, tokens: &[String]) -> f64 {
    let sorted: BTreeSet<&String> = tokens.iter().collect();
    sorted.into_iter().map(|t| response.target_score(t)).sum()
}

pub fn gtc_from_response(
    record: &PromptRecord,
    lexicon: &PronounLexicon,
    response: &ProbeResponse,
) -> Result<GtcPair> {
    let category = record.job_category().ok_or_else(|| {
        Error::Validation(format!("record {} is not a job-pronoun prompt", record.id))
    })?;
    for token in &response.oov {
        log::warn!(
            "prompt {}: pronoun {token:?} is out of vocabulary for {}; scored 0",
            record.id,
            response.backend_id
        );
    }
    Ok(GtcPair {
        prompt_id: record.id.clone(),
        category,
        gtc_male: sum_scores(response, &lexicon.male),
        gtc_female: sum_scores(response, &lexicon.female),
    })
}

fn gtc_query(
    record: &PromptRecord,
    profile: &ModelProfile,
    lexicon: &PronounLexicon,
) -> Result<ProbabilityQuery> {
    if record.subset != Subset::JobPronoun {
        return Err(Error::Validation(format!(
            "record {} is not a job-pronoun prompt",
            record.id
        )));
    }
    Ok(ProbabilityQuery::with_targets(
        render_prompt(record, profile),
        &lexicon.targets(),
    ))
}

pub fn compute_gtc<B: ProbeBackend + ?Sized>(
    record: &PromptRecord,
    profile: &ModelProfile,
    lexicon: &PronounLexicon,
    backend: &B,
) -> Result<GtcPair> {
    let query = gtc_query(record, profile, lexicon)?;
    let response = probe(&query, backend).map_err(|e| e.for_prompt(&record.id))?;
    gtc_from_response(record, lexicon, &response)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryGroup {
    pub category: JobCategory,
    pub pairs: Vec<GtcPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtcBatch {
    pub model_id: String,
    pub groups: Vec<CategoryGroup>,
    /// Pronouns reported out of vocabulary on any prompt.
    pub oov_tokens: BTreeSet<String>,
}

impl GtcBatch {
    pub fn pairs(&self) -> impl Iterator<Item = &GtcPair> {
        self.groups.iter().flat_map(|g| &g.pairs)
    }

    pub fn records(&self) -> Vec<GtcRecord> {
        self.pairs()
            .map(|p| GtcRecord::from_pair(p, &self.model_id))
            .collect()
    }
}

/// Computes one GTC pair per job prompt, grouped by category in category
/// order with corpus order preserved inside each group.
pub fn compute_gtc_batch<B: ProbeBackend + ?Sized>(
    corpus: &Corpus,
    profile: &ModelProfile,
    lexicon: &PronounLexicon,
    backend: &B,
    concurrency: usize,
) -> Result<GtcBatch> {
    lexicon.validate()?;
    let queries = corpus
        .job_prompts
        .iter()
        .map(|r| gtc_query(r, profile, lexicon))
        .collect::<Result<Vec<_>>>()?;
    let results = probe_all(backend, &queries, concurrency);

    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut first_error = None;
    let mut pairs = Vec::with_capacity(results.len());
    let mut oov_tokens = BTreeSet::new();
    for (record, result) in corpus.job_prompts.iter().zip(results) {
        match result {
            Some(Ok(response)) => {
                oov_tokens.extend(response.oov.iter().cloned());
                pairs.push(gtc_from_response(record, lexicon, &response)?);
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
    if let Some(source) = first_error {
        return Err(Error::BatchAborted {
            completed,
            failed,
            source: Box::new(source),
        });
    }

    let groups = JobCategory::ALL
        .into_iter()
        .map(|category| CategoryGroup {
            category,
            pairs: pairs
                .iter()
                .filter(|p| p.category == category)
                .cloned()
                .collect(),
        })
        .collect();
    Ok(GtcBatch {
        model_id: profile.model_id.clone(),
        groups,
        oov_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, ModelFamily, TargetUnit};
    use crate::probe::SyntheticBackend;

    fn record(template: &str) -> PromptRecord {
        PromptRecord {
            id: "job-stem-001".into(),
            subset: Subset::JobPronoun,
            category: Category::Job(JobCategory::Stem),
            template: template.into(),
            target_unit: TargetUnit::Pronoun,
            gender_variant: None,
        }
    }

    fn profile() -> ModelProfile {
        ModelProfile::new("m", ModelFamily::BertLike, false)
    }

    #[test]
    fn direct_summation() {
        let backend = SyntheticBackend::new("m", "[MASK]").with_scores([
            ("he", 0.4),
            ("him", 0.1),
            ("his", 0.05),
            ("she", 0.2),
            ("her", 0.1),
            ("hers", 0.0),
        ]);
        let pair = compute_gtc(
            &record("{MASK} writes code."),
            &profile(),
            &PronounLexicon::default(),
            &backend,
        )
        .unwrap();
        assert!((pair.gtc_male - 0.55).abs() < 1e-12);
        assert!((pair.gtc_female - 0.30).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_are_symmetric() {
        let q = 0.07;
        let backend = SyntheticBackend::new("m", "[MASK]")
            .with_scores(["he", "him", "his", "she", "her", "hers"].map(|t| (t, q)));
        let pair = compute_gtc(
            &record("{MASK} codes."),
            &profile(),
            &PronounLexicon::default(),
            &backend,
        )
        .unwrap();
        assert_eq!(pair.gtc_male, pair.gtc_female);
        assert!((pair.gtc_male - 3.0 * q).abs() < 1e-15);
    }

    #[test]
    fn permutation_and_zero_tokens_leave_pair_unchanged() {
        let backend = SyntheticBackend::new("m", "[MASK]").with_scores([
            ("he", 0.123),
            ("him", 0.0456),
            ("his", 0.0789),
            ("she", 0.0321),
            ("her", 0.0654),
            ("hers", 0.0987),
        ]);
        let rec = record("{MASK} codes.");
        let base = compute_gtc(&rec, &profile(), &PronounLexicon::default(), &backend).unwrap();
        let permuted = PronounLexicon {
            male: vec!["his".into(), "he".into(), "him".into()],
            female: vec!["hers".into(), "she".into(), "her".into()],
        };
        assert_eq!(
            compute_gtc(&rec, &profile(), &permuted, &backend).unwrap(),
            base
        );
        let mut padded = PronounLexicon::default();
        padded.male.push("himself".into());
        let with_zero = compute_gtc(&rec, &profile(), &padded, &backend).unwrap();
        assert_eq!(with_zero, base);
    }

    #[test]
    fn oov_pronouns_contribute_zero() {
        let backend = SyntheticBackend::new("m", "[MASK]").with_scores([("he", 0.3), ("she", 0.2)]);
        let pair = compute_gtc(
            &record("{MASK} codes."),
            &profile(),
            &PronounLexicon::default(),
            &backend,
        )
        .unwrap();
        assert_eq!((pair.gtc_male, pair.gtc_female), (0.3, 0.2));
    }

    #[test]
    fn linguistic_record_rejected() {
        let mut rec = record("{PRON} {MASK}.");
        rec.subset = Subset::LinguisticToken;
        let backend = SyntheticBackend::new("m", "[MASK]");
        assert!(compute_gtc(&rec, &profile(), &PronounLexicon::default(), &backend).is_err());
    }

    #[test]
    fn lexicon_validation() {
        PronounLexicon::default().validate().unwrap();
        PronounLexicon::subject_only().validate().unwrap();
        let overlapping = PronounLexicon {
            male: vec!["he".into()],
            female: vec!["he".into()],
        };
        assert!(overlapping.validate().is_err());
        let swapped = PronounLexicon::default().swapped();
        assert_eq!(swapped.male[0], "she");
    }

    #[test]
    fn record_rounding() {
        let pair = GtcPair {
            prompt_id: "p".into(),
            category: JobCategory::Sports,
            gtc_male: 0.1234567891234,
            gtc_female: 2.0 / 3.0,
        };
        let rec = GtcRecord::from_pair(&pair, "m");
        assert_eq!(
            serde_json::to_string(&rec).unwrap(),
            r#"{"prompt_id":"p","category":"Sports","gtc_male":0.123456789,"gtc_female":0.666666667,"model_id":"m"}"#
        );
    }
}
