//! Prompt corpus: record schema, stereotype reference, loading, validation and
//! rendering.
//!
//! The corpus has two subsets. The job-pronoun subset holds 100 prompts for
//! each of seven job categories, each masking the subject pronoun. The
//! linguistic-token subset holds 10 prompts per target unit (verb, adverb,
//! adjective) for each gender, where the subject pronoun is fixed and a word
//! of the target unit is masked.
//!
//! Templates are model-neutral: `{MASK}` marks the masked position and
//! `{PRON}` the subject pronoun of a linguistic-token prompt. The mask surface
//! form is substituted per model at render time.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const MASK_PLACEHOLDER: &str = "{MASK}";
pub const PRONOUN_PLACEHOLDER: &str = "{PRON}";

pub const JOB_PROMPTS_PER_CATEGORY: usize = 100;
pub const LINGUISTIC_PROMPTS_PER_UNIT_AND_GENDER: usize = 10;

const META_KEY: &str = "corpus.meta";

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    JobPronoun,
    LinguisticToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn opposite(self) -> Gender {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }

    /// Lowercase subject pronoun.
    pub fn subject_pronoun(self) -> &'static str {
        match self {
            Gender::Male => "he",
            Gender::Female => "she",
        }
    }

    /// Suffix used on linguistic-token record ids.
    pub fn id_suffix(self) -> &'static str {
        match self {
            Gender::Male => "-m",
            Gender::Female => "-f",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

/// The seven job categories of the pronoun experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobCategory {
    #[serde(rename = "STEM")]
    Stem,
    ArtAndDesign,
    HealthAndWellbeing,
    Finance,
    ServiceManagement,
    Fashion,
    Sports,
}

impl JobCategory {
    pub const ALL: [JobCategory; 7] = [
        JobCategory::Stem,
        JobCategory::ArtAndDesign,
        JobCategory::HealthAndWellbeing,
        JobCategory::Finance,
        JobCategory::ServiceManagement,
        JobCategory::Fashion,
        JobCategory::Sports,
    ];

    /// Serialized name, e.g. `STEM`, `ArtAndDesign`.
    pub fn name(self) -> &'static str {
        match self {
            JobCategory::Stem => "STEM",
            JobCategory::ArtAndDesign => "ArtAndDesign",
            JobCategory::HealthAndWellbeing => "HealthAndWellbeing",
            JobCategory::Finance => "Finance",
            JobCategory::ServiceManagement => "ServiceManagement",
            JobCategory::Fashion => "Fashion",
            JobCategory::Sports => "Sports",
        }
    }

    /// Human-readable label for tables.
    pub fn label(self) -> &'static str {
        match self {
            JobCategory::Stem => "STEM",
            JobCategory::ArtAndDesign => "Art & Design",
            JobCategory::HealthAndWellbeing => "Health & Wellbeing",
            JobCategory::Finance => "Finance",
            JobCategory::ServiceManagement => "Service Management",
            JobCategory::Fashion => "Fashion",
            JobCategory::Sports => "Sports",
        }
    }

    pub fn stereotypical_gender(self) -> Gender {
        stereotype_of(self)
    }

    pub fn alternative_gender(self) -> Gender {
        stereotype_of(self).opposite()
    }
}

impl fmt::Display for JobCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for JobCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        JobCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown job category {s:?}")))
    }
}

/// Stereotypical gender association of a job category.
pub fn stereotype_of(category: JobCategory) -> Gender {
    match category {
        JobCategory::Stem => Gender::Male,
        JobCategory::ArtAndDesign => Gender::Female,
        JobCategory::HealthAndWellbeing => Gender::Male,
        JobCategory::Finance => Gender::Male,
        JobCategory::ServiceManagement => Gender::Female,
        JobCategory::Fashion => Gender::Female,
        JobCategory::Sports => Gender::Male,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetUnit {
    Pronoun,
    Verb,
    Adverb,
    Adjective,
}

impl TargetUnit {
    /// Units probed by the linguistic-token subset.
    pub const LINGUISTIC: [TargetUnit; 3] =
        [TargetUnit::Verb, TargetUnit::Adverb, TargetUnit::Adjective];

    pub fn name(self) -> &'static str {
        match self {
            TargetUnit::Pronoun => "pronoun",
            TargetUnit::Verb => "verb",
            TargetUnit::Adverb => "adverb",
            TargetUnit::Adjective => "adjective",
        }
    }
}

impl fmt::Display for TargetUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for TargetUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pronoun" => Ok(TargetUnit::Pronoun),
            "verb" => Ok(TargetUnit::Verb),
            "adverb" => Ok(TargetUnit::Adverb),
            "adjective" => Ok(TargetUnit::Adjective),
            _ => Err(Error::Validation(format!("unknown target unit {s:?}"))),
        }
    }
}

/// Category of a prompt: a job category for the job-pronoun subset, or the
/// linguistic category (verb/adverb/adjective) for the linguistic-token subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Category {
    Job(JobCategory),
    Linguistic(TargetUnit),
}

impl TryFrom<String> for Category {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if let Ok(job) = s.parse::<JobCategory>() {
            return Ok(Category::Job(job));
        }
        match s.parse::<TargetUnit>() {
            Ok(TargetUnit::Pronoun) | Err(_) => {
                Err(Error::Validation(format!("unknown category {s:?}")))
            }
            Ok(unit) => Ok(Category::Linguistic(unit)),
        }
    }
}

impl From<Category> for String {
    fn from(c: Category) -> String {
        c.to_string()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Job(job) => job.fmt(f),
            Category::Linguistic(unit) => unit.fmt(f),
        }
    }
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub id: String,
    pub subset: Subset,
    pub category: Category,
    pub template: String,
    pub target_unit: TargetUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender_variant: Option<Gender>,
}

impl PromptRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("record {}: {msg}", self.id)));
        if self.id.trim().is_empty() {
            return Err(Error::Validation("record with empty id".into()));
        }
        let masks = self.template.matches(MASK_PLACEHOLDER).count();
        if masks != 1 {
            return fail(format!(
                "template must contain exactly one {MASK_PLACEHOLDER} placeholder, found {masks}"
            ));
        }
        match self.subset {
            Subset::JobPronoun => {
                if self.target_unit != TargetUnit::Pronoun {
                    return fail(format!(
                        "job-pronoun records target pronouns, not {}",
                        self.target_unit
                    ));
                }
                if self.gender_variant.is_some() {
                    return fail("job-pronoun records carry no gender_variant".into());
                }
                if !matches!(self.category, Category::Job(_)) {
                    return fail(format!("{} is not a job category", self.category));
                }
                if self.template.contains(PRONOUN_PLACEHOLDER) {
                    return fail(format!(
                        "job-pronoun templates cannot use {PRONOUN_PLACEHOLDER}"
                    ));
                }
            }
            Subset::LinguisticToken => {
                if self.target_unit == TargetUnit::Pronoun {
                    return fail(
                        "linguistic-token records target verb, adverb or adjective".into(),
                    );
                }
                if self.category != Category::Linguistic(self.target_unit) {
                    return fail(format!(
                        "category {} does not match target unit {}",
                        self.category, self.target_unit
                    ));
                }
                let Some(gender) = self.gender_variant else {
                    return fail("linguistic-token records require gender_variant".into());
                };
                if !self.id.ends_with(gender.id_suffix()) {
                    return fail(format!(
                        "id of a {gender} variant must end with {:?}",
                        gender.id_suffix()
                    ));
                }
                if self.template.matches(PRONOUN_PLACEHOLDER).count() > 1 {
                    return fail(format!(
                        "at most one {PRONOUN_PLACEHOLDER} placeholder allowed"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn job_category(&self) -> Option<JobCategory> {
        match self.category {
            Category::Job(job) => Some(job),
            Category::Linguistic(_) => None,
        }
    }

    /// Shared id of the male/female variants of a linguistic-token prompt:
    /// the record id without its `-m`/`-f` suffix.
    pub fn pair_id(&self) -> Option<&str> {
        let gender = self.gender_variant?;
        self.id.strip_suffix(gender.id_suffix())
    }
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub version: String,
    pub job_prompts: Vec<PromptRecord>,
    pub linguistic_prompts: Vec<PromptRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusMeta {
    version: String,
    counts: BTreeMap<Subset, usize>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    #[serde(rename = "corpus.meta")]
    meta: CorpusMeta,
}

impl Corpus {
    /// Checks record invariants, subset sizes, id uniqueness and that every
    /// linguistic prompt pair has both gender variants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for record in self.job_prompts.iter().chain(&self.linguistic_prompts) {
            record.validate()?;
            if !seen.insert(record.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate record id {}",
                    record.id
                )));
            }
        }
        if let Some(r) = self
            .job_prompts
            .iter()
            .find(|r| r.subset != Subset::JobPronoun)
        {
            return Err(Error::Validation(format!(
                "record {} is listed with job prompts but has subset {:?}",
                r.id, r.subset
            )));
        }
        if let Some(r) = self
            .linguistic_prompts
            .iter()
            .find(|r| r.subset != Subset::LinguisticToken)
        {
            return Err(Error::Validation(format!(
                "record {} is listed with linguistic prompts but has subset {:?}",
                r.id, r.subset
            )));
        }

        let mut errors = Vec::new();
        for category in JobCategory::ALL {
            let count = self
                .job_prompts
                .iter()
                .filter(|r| r.category == Category::Job(category))
                .count();
            if count != JOB_PROMPTS_PER_CATEGORY {
                errors.push(format!(
                    "category {category} has {count} of {JOB_PROMPTS_PER_CATEGORY}"
                ));
            }
        }
        for unit in TargetUnit::LINGUISTIC {
            for gender in [Gender::Male, Gender::Female] {
                let count = self
                    .linguistic_prompts
                    .iter()
                    .filter(|r| r.target_unit == unit && r.gender_variant == Some(gender))
                    .count();
                if count != LINGUISTIC_PROMPTS_PER_UNIT_AND_GENDER {
                    errors.push(format!(
                        "unit {unit} ({gender}) has {count} of {LINGUISTIC_PROMPTS_PER_UNIT_AND_GENDER}"
                    ));
                }
            }
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors.join("; ")));
        }

        let mut pairs: BTreeMap<&str, (BTreeSet<Gender>, TargetUnit)> = BTreeMap::new();
        for record in &self.linguistic_prompts {
            let pair_id = record.pair_id().unwrap_or(&record.id);
            let entry = pairs
                .entry(pair_id)
                .or_insert_with(|| (BTreeSet::new(), record.target_unit));
            if entry.1 != record.target_unit {
                return Err(Error::Validation(format!(
                    "record {}: prompt pair {pair_id} mixes target units",
                    record.id
                )));
            }
            entry.0.extend(record.gender_variant);
        }
        if let Some((pair_id, _)) = pairs.iter().find(|(_, (genders, _))| genders.len() != 2) {
            return Err(Error::Validation(format!(
                "prompt pair {pair_id} lacks one gender variant"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.job_prompts.len() + self.linguistic_prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> impl Iterator<Item = &PromptRecord> {
        self.job_prompts.iter().chain(&self.linguistic_prompts)
    }

    /// Job prompts of one category, in corpus order.
    pub fn job_prompts_in(&self, category: JobCategory) -> impl Iterator<Item = &PromptRecord> {
        self.job_prompts
            .iter()
            .filter(move |r| r.category == Category::Job(category))
    }

    /// Parses the line-delimited corpus format and validates it.
    pub fn parse(text: &str, origin: &str) -> Result<Corpus> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty());
        let (meta_idx, meta_line) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "empty corpus file"))?;
        let meta: MetaLine = serde_json::from_str(meta_line).map_err(|e| {
            Error::parse(
                format!("{origin}:{}", meta_idx + 1),
                format!("expected {META_KEY} header line: {e}"),
            )
        })?;

        let mut corpus = Corpus {
            version: meta.meta.version,
            job_prompts: Vec::new(),
            linguistic_prompts: Vec::new(),
        };
        for (idx, line) in lines {
            let record: PromptRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(format!("{origin}:{}", idx + 1), e))?;
            match record.subset {
                Subset::JobPronoun => corpus.job_prompts.push(record),
                Subset::LinguisticToken => corpus.linguistic_prompts.push(record),
            }
        }

        let actual = corpus.counts();
        if actual != meta.meta.counts {
            return Err(Error::Validation(format!(
                "{META_KEY} counts {:?} do not match records {:?}",
                meta.meta.counts, actual
            )));
        }
        corpus.validate()?;
        Ok(corpus)
    }

    fn counts(&self) -> BTreeMap<Subset, usize> {
        BTreeMap::from([
            (Subset::JobPronoun, self.job_prompts.len()),
            (Subset::LinguisticToken, self.linguistic_prompts.len()),
        ])
    }

    /// Serializes to the line-delimited corpus format.
    pub fn to_jsonl(&self) -> Result<String> {
        let meta = MetaLine {
            meta: CorpusMeta {
                version: self.version.clone(),
                counts: self.counts(),
            },
        };
        let mut out = io::to_jsonl(&[meta])?;
        out.push_str(&io::to_jsonl(&self.job_prompts)?);
        out.push_str(&io::to_jsonl(&self.linguistic_prompts)?);
        Ok(out)
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = io::read_to_string(path)?;
    Corpus::parse(&text, &path.display().to_string())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    io::write_atomic(path, corpus.to_jsonl()?.as_bytes())
}

// ---------------------------------------------------------------------------
// Model profiles and rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    BertLike,
    RobertaLike,
    Other,
}

impl ModelFamily {
    pub fn default_mask_token(self) -> Option<&'static str> {
        match self {
            ModelFamily::BertLike => Some("[MASK]"),
            ModelFamily::RobertaLike => Some("<mask>"),
            ModelFamily::Other => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub mask_token: String,
    pub family: ModelFamily,
    pub multilingual: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<String>,
    /// Target concept → surface forms whose probabilities are summed into
    /// that target's score (e.g. `he` → `he`, `He`, `Ġhe`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub surface_variants: BTreeMap<String, Vec<String>>,
}

impl ModelProfile {
    pub fn new(model_id: impl Into<String>, family: ModelFamily, multilingual: bool) -> Self {
        ModelProfile {
            model_id: model_id.into(),
            mask_token: family.default_mask_token().unwrap_or("[MASK]").to_string(),
            family,
            multilingual,
            paired_with: None,
            surface_variants: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::Validation(
                "model profile with empty model_id".into(),
            ));
        }
        if self.mask_token.is_empty() {
            return Err(Error::Validation(format!(
                "model {}: mask_token must be non-empty",
                self.model_id
            )));
        }
        Ok(())
    }
}

/// Validates a set of profiles, including that every `paired_with` names a
/// profile with the opposite `multilingual` flag.
pub fn validate_profiles(profiles: &[ModelProfile]) -> Result<()> {
    let mut by_id = BTreeMap::new();
    for profile in profiles {
        profile.validate()?;
        if by_id.insert(profile.model_id.as_str(), profile).is_some() {
            return Err(Error::Validation(format!(
                "duplicate model profile {}",
                profile.model_id
            )));
        }
    }
    for profile in profiles {
        if let Some(other_id) = &profile.paired_with {
            let other = by_id.get(other_id.as_str()).ok_or_else(|| {
                Error::Validation(format!(
                    "model {} is paired with unknown model {other_id}",
                    profile.model_id
                ))
            })?;
            if other.multilingual == profile.multilingual {
                return Err(Error::Validation(format!(
                    "model {} and its pair {other_id} must differ in the multilingual flag",
                    profile.model_id
                )));
            }
        }
    }
    Ok(())
}

/// Substitutes the model's mask surface for `{MASK}` and, for gendered
/// records, the subject pronoun for `{PRON}` (capitalized at sentence start).
pub fn render_prompt(record: &PromptRecord, profile: &ModelProfile) -> String {
    let mut text = record.template.clone();
    if let Some(gender) = record.gender_variant {
        if let Some(pos) = text.find(PRONOUN_PLACEHOLDER) {
            let pronoun = gender.subject_pronoun();
            let replacement = if at_sentence_start(&text[..pos]) {
                capitalize(pronoun)
            } else {
                pronoun.to_string()
            };
            text.replace_range(pos..pos + PRONOUN_PLACEHOLDER.len(), &replacement);
        }
    }
    text.replacen(MASK_PLACEHOLDER, &profile.mask_token, 1)
}

fn at_sentence_start(prefix: &str) -> bool {
    let trimmed = prefix.trim_end();
    trimmed.is_empty() || trimmed.ends_with(['.', '!', '?', '"'])
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: &str, category: JobCategory, template: &str) -> PromptRecord {
        PromptRecord {
            id: id.into(),
            subset: Subset::JobPronoun,
            category: Category::Job(category),
            template: template.into(),
            target_unit: TargetUnit::Pronoun,
            gender_variant: None,
        }
    }

    fn ling(id: &str, unit: TargetUnit, gender: Gender, template: &str) -> PromptRecord {
        PromptRecord {
            id: id.into(),
            subset: Subset::LinguisticToken,
            category: Category::Linguistic(unit),
            template: template.into(),
            target_unit: unit,
            gender_variant: Some(gender),
        }
    }

    fn small_valid_corpus() -> Corpus {
        let mut job_prompts = Vec::new();
        for category in JobCategory::ALL {
            for i in 0..JOB_PROMPTS_PER_CATEGORY {
                job_prompts.push(job(
                    &format!("job-{}-{i:03}", category.name().to_lowercase()),
                    category,
                    "{MASK} is a worker.",
                ));
            }
        }
        let mut linguistic_prompts = Vec::new();
        for unit in TargetUnit::LINGUISTIC {
            for i in 0..LINGUISTIC_PROMPTS_PER_UNIT_AND_GENDER {
                for gender in [Gender::Male, Gender::Female] {
                    linguistic_prompts.push(ling(
                        &format!("lt-{unit}-{i:02}{}", gender.id_suffix()),
                        unit,
                        gender,
                        "{PRON} is a {MASK} worker.",
                    ));
                }
            }
        }
        Corpus {
            version: "test".into(),
            job_prompts,
            linguistic_prompts,
        }
    }

    #[test]
    fn stereotype_table() {
        use JobCategory::*;
        let expected = [
            (Stem, Gender::Male),
            (ArtAndDesign, Gender::Female),
            (HealthAndWellbeing, Gender::Male),
            (Finance, Gender::Male),
            (ServiceManagement, Gender::Female),
            (Fashion, Gender::Female),
            (Sports, Gender::Male),
        ];
        for (category, gender) in expected {
            assert_eq!(stereotype_of(category), gender, "{category}");
            assert_eq!(category.alternative_gender(), gender.opposite());
        }
    }

    #[test]
    fn render_examples() {
        let bert = ModelProfile::new("bert", ModelFamily::BertLike, false);
        let roberta = ModelProfile::new("roberta", ModelFamily::RobertaLike, false);
        let stylist = job("j1", JobCategory::Fashion, "{MASK} is a hair stylist");
        assert_eq!(render_prompt(&stylist, &bert), "[MASK] is a hair stylist");
        let meeting = job(
            "j2",
            JobCategory::ServiceManagement,
            "{MASK} held the meeting",
        );
        assert_eq!(render_prompt(&meeting, &roberta), "<mask> held the meeting");
        let worker = ling(
            "lt-adj-01-f",
            TargetUnit::Adjective,
            Gender::Female,
            "{PRON} is a {MASK} worker",
        );
        assert_eq!(render_prompt(&worker, &bert), "She is a [MASK] worker");
        let mid = ling(
            "lt-adv-01-m",
            TargetUnit::Adverb,
            Gender::Male,
            "Yesterday {PRON} {MASK} left.",
        );
        assert_eq!(render_prompt(&mid, &bert), "Yesterday he [MASK] left.");
    }

    #[test]
    fn record_invariants() {
        let two_masks = job("bad", JobCategory::Stem, "{MASK} and {MASK}");
        let err = two_masks.validate().unwrap_err().to_string();
        assert!(err.contains("record bad"), "{err}");

        let mut gendered_job = job("j", JobCategory::Stem, "{MASK} codes.");
        gendered_job.gender_variant = Some(Gender::Male);
        assert!(gendered_job.validate().is_err());

        let mut pronoun_ling = ling("l-m", TargetUnit::Verb, Gender::Male, "{PRON} {MASK}.");
        pronoun_ling.target_unit = TargetUnit::Pronoun;
        assert!(pronoun_ling.validate().is_err());

        let mut missing_gender = ling("l-m", TargetUnit::Verb, Gender::Male, "{PRON} {MASK}.");
        missing_gender.gender_variant = None;
        assert!(missing_gender.validate().is_err());

        let wrong_suffix = ling("l-f", TargetUnit::Verb, Gender::Male, "{PRON} {MASK}.");
        assert!(wrong_suffix.validate().is_err());
    }

    #[test]
    fn corpus_round_trip_and_counts() {
        let corpus = small_valid_corpus();
        corpus.validate().unwrap();
        assert_eq!(corpus.len(), 760);
        let text = corpus.to_jsonl().unwrap();
        let back = Corpus::parse(&text, "mem").unwrap();
        assert_eq!(back, corpus);
    }

    #[test]
    fn short_category_is_reported() {
        let mut corpus = small_valid_corpus();
        let idx = corpus
            .job_prompts
            .iter()
            .position(|r| r.category == Category::Job(JobCategory::Stem))
            .unwrap();
        corpus.job_prompts.remove(idx);
        let err = corpus.validate().unwrap_err().to_string();
        assert!(err.contains("category STEM has 99 of 100"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut corpus = small_valid_corpus();
        corpus.job_prompts[1].id = corpus.job_prompts[0].id.clone();
        let err = corpus.validate().unwrap_err().to_string();
        assert!(err.contains("duplicate record id"), "{err}");
    }

    #[test]
    fn meta_counts_checked() {
        let corpus = small_valid_corpus();
        let text =
            corpus
                .to_jsonl()
                .unwrap()
                .replacen("\"job-pronoun\":700", "\"job-pronoun\":701", 1);
        assert!(Corpus::parse(&text, "mem").is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let line = r#"{"id":"x","subset":"job-pronoun","category":"STEM","template":"{MASK} x","target_unit":"pronoun","extra":1}"#;
        assert!(serde_json::from_str::<PromptRecord>(line).is_err());
    }

    #[test]
    fn job_record_omits_gender_field() {
        let json = serde_json::to_string(&job("j", JobCategory::Sports, "{MASK} runs.")).unwrap();
        assert_eq!(
            json,
            r#"{"id":"j","subset":"job-pronoun","category":"Sports","template":"{MASK} runs.","target_unit":"pronoun"}"#
        );
    }

    #[test]
    fn profile_pairing() {
        let mut mono = ModelProfile::new("bert", ModelFamily::BertLike, false);
        let mut multi = ModelProfile::new("mbert", ModelFamily::BertLike, true);
        mono.paired_with = Some("mbert".into());
        multi.paired_with = Some("bert".into());
        validate_profiles(&[mono.clone(), multi.clone()]).unwrap();
        multi.multilingual = false;
        assert!(validate_profiles(&[mono.clone(), multi]).is_err());
        mono.paired_with = Some("ghost".into());
        assert!(validate_profiles(&[mono]).is_err());
        let mut empty_mask = ModelProfile::new("x", ModelFamily::Other, false);
        empty_mask.mask_token.clear();
        assert!(empty_mask.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rendered_text_has_one_mask(
                prefix in "[a-z ]{0,20}",
                suffix in "[a-z .]{0,20}",
                mask in prop_oneof![Just("[MASK]"), Just("<mask>"), Just("<MSK>")],
                female in any::<bool>(),
            ) {
                let mut profile = ModelProfile::new("m", ModelFamily::Other, false);
                profile.mask_token = mask.to_string();
                let gender = if female { Gender::Female } else { Gender::Male };
                let record = ling(
                    "p-f",
                    TargetUnit::Verb,
                    gender,
                    &format!("{prefix}{{PRON}} {{MASK}}{suffix}"),
                );
                let text = render_prompt(&record, &profile);
                prop_assert_eq!(text.matches(mask).count(), 1);
                prop_assert_eq!(render_prompt(&record, &profile), text);
            }
        }
    }
}
