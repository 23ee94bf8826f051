//! Versioned TOML run configuration.
//!
//! ```toml
//! config_version = 1
//! corpus = "corpus.jsonl"          # relative paths resolve against this file
//! output_dir = "out"
//! k = 5
//! alpha = 0.05
//! concurrency = 8
//!
//! [[models]]
//! model_id = "bert-base-uncased"
//! family = "bert-like"
//! multilingual = false
//! paired_with = "bert-base-multilingual-uncased"
//! backend = { kind = "remote", endpoint = "http://127.0.0.1:8000" }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_corpus, render_prompt, validate_profiles, Corpus, Gender, JobCategory, ModelFamily,
    ModelProfile, TargetUnit,
};
use crate::error::{Error, Result};
use crate::gtc::PronounLexicon;
use crate::io;
use crate::lexical::{PosLexicon, DEFAULT_K};
use crate::probe::{
    Matcher, ProbeBackend, RemoteBackend, ReplayBackend, Rule, RuleMode, SyntheticBackend,
    DEFAULT_CONCURRENCY,
};
use crate::stats::DEFAULT_ALPHA;

pub const CONFIG_VERSION: u32 = 1;

/// Overrides the endpoint of every remote backend.
pub const ENDPOINT_ENV: &str = "MLM_AUDIT_ENDPOINT";

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub corpus: PathBuf,
    /// POS lexicon file; the bundled lexicon is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_lexicon: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Restricts each pronoun set to its first token (the subject form).
    #[serde(default)]
    pub subject_only: bool,
    #[serde(default)]
    pub pronouns: PronounLexicon,
    pub models: Vec<ModelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    pub family: ModelFamily,
    /// Defaults to the family's mask token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<String>,
    pub multilingual: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub surface_variants: BTreeMap<String, Vec<String>>,
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Remote { endpoint: String },
    Replay { path: PathBuf },
    Synthetic(SyntheticSpec),
}

/// Synthetic model description. Rules are keyed on the corpus: pronoun
/// weights apply to every job prompt, category scales to that category's
/// prompts, and token vocabularies to the linguistic prompts of a unit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mass_jitter: f64,
    #[serde(default)]
    pub token_jitter: f64,
    /// Surface token → probability on job prompts.
    #[serde(default)]
    pub pronouns: BTreeMap<String, f64>,
    /// Category name → multipliers for the male and female pronoun sets.
    #[serde(default)]
    pub category_scale: BTreeMap<String, GenderScale>,
    /// Unit name (`verb`, `adverb`, `adjective`) → completion vocabulary.
    #[serde(default)]
    pub tokens: BTreeMap<String, UnitVocabulary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenderScale {
    pub male: f64,
    pub female: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitVocabulary {
    #[serde(default)]
    pub shared: BTreeMap<String, f64>,
    #[serde(default)]
    pub male: BTreeMap<String, f64>,
    #[serde(default)]
    pub female: BTreeMap<String, f64>,
}

impl RunConfig {
    /// Parses a configuration; relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, origin: &str) -> Result<Self> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.corpus);
        resolve(&mut self.output_dir);
        if let Some(p) = self.pos_lexicon.as_mut() {
            resolve(p);
        }
        for model in &mut self.models {
            if let BackendSpec::Replay { path } = &mut model.backend {
                resolve(path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config_version {} (expected {CONFIG_VERSION})",
                self.config_version
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        self.pronoun_lexicon().validate()?;
        for model in &self.models {
            model.validate()?;
        }
        validate_profiles(&self.profiles()?)
    }

    pub fn profiles(&self) -> Result<Vec<ModelProfile>> {
        self.models.iter().map(ModelConfig::profile).collect()
    }

    pub fn model(&self, model_id: &str) -> Result<&ModelConfig> {
        self.models
            .iter()
            .find(|m| m.model_id == model_id)
            .ok_or_else(|| Error::Config(format!("model {model_id:?} is not configured")))
    }

    pub fn pronoun_lexicon(&self) -> PronounLexicon {
        if self.subject_only {
            PronounLexicon {
                male: self.pronouns.male.iter().take(1).cloned().collect(),
                female: self.pronouns.female.iter().take(1).cloned().collect(),
            }
        } else {
            self.pronouns.clone()
        }
    }

    pub fn pos_lexicon(&self) -> Result<PosLexicon> {
        match &self.pos_lexicon {
            Some(path) => PosLexicon::load(path),
            None => Ok(PosLexicon::bundled()),
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        load_corpus(&self.corpus)
    }
}

impl ModelConfig {
    pub fn profile(&self) -> Result<ModelProfile> {
        let mask_token = match (&self.mask_token, self.family.default_mask_token()) {
            (Some(m), _) => m.clone(),
            (None, Some(m)) => m.to_string(),
            (None, None) => {
                return Err(Error::Config(format!(
                    "model {}: family {:?} needs an explicit mask_token",
                    self.model_id, self.family
                )))
            }
        };
        Ok(ModelProfile {
            model_id: self.model_id.clone(),
            mask_token,
            family: self.family,
            multilingual: self.multilingual,
            paired_with: self.paired_with.clone(),
            surface_variants: self.surface_variants.clone(),
        })
    }

    fn validate(&self) -> Result<()> {
        self.profile()?.validate()?;
        if let BackendSpec::Synthetic(spec) = &self.backend {
            for name in spec.category_scale.keys() {
                name.parse::<JobCategory>()
                    .map_err(|_| self.config_error(format!("unknown category {name:?}")))?;
            }
            for name in spec.tokens.keys() {
                let unit = name
                    .parse::<TargetUnit>()
                    .map_err(|_| self.config_error(format!("unknown unit {name:?}")))?;
                if unit == TargetUnit::Pronoun {
                    return Err(self.config_error(
                        "token vocabularies are for verb, adverb or adjective".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn config_error(&self, message: String) -> Error {
        Error::Config(format!("model {}: {message}", self.model_id))
    }

    /// Instantiates the configured backend. `endpoint_override` replaces the
    /// endpoint of a remote backend.
    pub fn build_backend(
        &self,
        corpus: &Corpus,
        pronouns: &PronounLexicon,
        endpoint_override: Option<&str>,
    ) -> Result<Box<dyn ProbeBackend>> {
        let profile = self.profile()?;
        Ok(match &self.backend {
            BackendSpec::Remote { endpoint } => Box::new(RemoteBackend::new(
                endpoint_override.unwrap_or(endpoint),
                &profile.model_id,
                &profile.mask_token,
            )?),
            BackendSpec::Replay { path } => {
                if !path.exists() {
                    return Err(Error::MissingArtifact {
                        path: path.clone(),
                        what: format!("replay file for {}", profile.model_id),
                    });
                }
                Box::new(ReplayBackend::from_file(
                    path,
                    &profile.model_id,
                    &profile.mask_token,
                )?)
            }
            BackendSpec::Synthetic(spec) => {
                let backend = build_synthetic(spec, &profile, corpus, pronouns)?;
                backend.validate()?;
                Box::new(backend)
            }
        })
    }
}

/// Reads [`ENDPOINT_ENV`], ignoring empty values.
pub fn endpoint_override() -> Option<String> {
    std::env::var(ENDPOINT_ENV)
        .ok()
        .filter(|v| !v.trim().is_empty())
}

fn texts<'a>(
    records: impl Iterator<Item = &'a crate::corpus::PromptRecord>,
    profile: &ModelProfile,
) -> BTreeSet<String> {
    records.map(|r| render_prompt(r, profile)).collect()
}

pub fn build_synthetic(
    spec: &SyntheticSpec,
    profile: &ModelProfile,
    corpus: &Corpus,
    pronouns: &PronounLexicon,
) -> Result<SyntheticBackend> {
    let mut backend = SyntheticBackend::new(&profile.model_id, &profile.mask_token)
        .with_surface_variants(profile.surface_variants.clone());

    let surfaces = |tokens: &[String]| -> Vec<String> {
        tokens
            .iter()
            .flat_map(|t| {
                profile
                    .surface_variants
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| vec![t.clone()])
            })
            .collect()
    };

    if !spec.pronouns.is_empty() {
        backend = backend.with_rule(Rule {
            matcher: Matcher::Texts(texts(corpus.job_prompts.iter(), profile)),
            mode: RuleMode::Set,
            weights: spec.pronouns.clone(),
        });
    }
    for (name, scale) in &spec.category_scale {
        let category: JobCategory = name.parse()?;
        let mut weights = BTreeMap::new();
        for token in surfaces(&pronouns.male) {
            weights.insert(token, scale.male);
        }
        for token in surfaces(&pronouns.female) {
            weights.insert(token, scale.female);
        }
        backend = backend.with_rule(Rule {
            matcher: Matcher::Texts(texts(corpus.job_prompts_in(category), profile)),
            mode: RuleMode::Scale,
            weights,
        });
    }
    for (name, vocabulary) in &spec.tokens {
        let unit: TargetUnit = name.parse()?;
        let of_unit = || {
            corpus
                .linguistic_prompts
                .iter()
                .filter(move |r| r.target_unit == unit)
        };
        let groups = [
            (None, &vocabulary.shared),
            (Some(Gender::Male), &vocabulary.male),
            (Some(Gender::Female), &vocabulary.female),
        ];
        for (gender, weights) in groups {
            if weights.is_empty() {
                continue;
            }
            let records = of_unit().filter(|r| gender.is_none() || r.gender_variant == gender);
            backend = backend.with_rule(Rule {
                matcher: Matcher::Texts(texts(records, profile)),
                mode: RuleMode::Set,
                weights: weights.clone(),
            });
        }
    }
    if spec.mass_jitter > 0.0 {
        backend = backend.with_mass_jitter(spec.mass_jitter, spec.seed);
    }
    if spec.token_jitter > 0.0 {
        backend = backend.with_token_jitter(spec.token_jitter, spec.seed);
    }
    Ok(backend)
}
