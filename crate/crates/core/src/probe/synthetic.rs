//! Deterministic synthetic backend.
//!
//! Scores come from a base token → probability table, adjusted by rules that
//! match the rendered text. Optional jitter perturbs scores per text (and per
//! token) from a seeded hash, so different prompts get different but
//! reproducible values.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use super::{Prediction, ProbabilityQuery, ProbeBackend, ProbeResponse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Matcher {
    Any,
    Contains(String),
    Texts(BTreeSet<String>),
}

impl Matcher {
    fn matches(&self, text: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Contains(needle) => text.contains(needle.as_str()),
            Matcher::Texts(texts) => texts.contains(text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleMode {
    /// Assigns the listed weights, leaving other tokens untouched.
    Set,
    /// Multiplies the listed tokens' weights.
    Scale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub matcher: Matcher,
    pub mode: RuleMode,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    model_id: String,
    mask_token: String,
    backend_id: String,
    base: BTreeMap<String, f64>,
    rules: Vec<Rule>,
    surface_variants: BTreeMap<String, Vec<String>>,
    mass_jitter: f64,
    token_jitter: f64,
    seed: u64,
}

impl SyntheticBackend {
    pub fn new(model_id: impl Into<String>, mask_token: impl Into<String>) -> Self {
        let model_id = model_id.into();
        SyntheticBackend {
            backend_id: format!("synthetic:{model_id}"),
            model_id,
            mask_token: mask_token.into(),
            base: BTreeMap::new(),
            rules: Vec::new(),
            surface_variants: BTreeMap::new(),
            mass_jitter: 0.0,
            token_jitter: 0.0,
            seed: 0,
        }
    }

    /// Sets the probability of a surface token on every text.
    pub fn with_score(mut self, token: impl Into<String>, score: f64) -> Self {
        self.base.insert(token.into(), score);
        self
    }

    pub fn with_scores<'a>(mut self, scores: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        for (token, score) in scores {
            self.base.insert(token.to_string(), score);
        }
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_surface_variants(mut self, variants: BTreeMap<String, Vec<String>>) -> Self {
        self.surface_variants = variants;
        self
    }

    /// Scales every score of a text by `1 - amplitude * u`, `u ∈ [0,1)` drawn
    /// per text. Ratios between tokens are preserved.
    pub fn with_mass_jitter(mut self, amplitude: f64, seed: u64) -> Self {
        self.mass_jitter = amplitude;
        self.seed = seed;
        self
    }

    /// Scales each token's weight by `1 + amplitude * v`, `v ∈ [-1,1)` drawn
    /// per (text, token).
    pub fn with_token_jitter(mut self, amplitude: f64, seed: u64) -> Self {
        self.token_jitter = amplitude;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::Config(format!(
                "synthetic backend {}: {what}",
                self.model_id
            )))
        };
        if self.mask_token.is_empty() {
            return bad("mask token is empty");
        }
        let weights = self
            .base
            .values()
            .chain(self.rules.iter().flat_map(|r| r.weights.values()));
        for w in weights {
            if !w.is_finite() || *w < 0.0 {
                return bad("weights must be finite and non-negative");
            }
        }
        if !(0.0..=1.0).contains(&self.mass_jitter) || !(0.0..=1.0).contains(&self.token_jitter) {
            return bad("jitter amplitudes must lie in [0,1]");
        }
        Ok(())
    }

    /// Probability table for a rendered text.
    pub fn distribution(&self, text: &str) -> BTreeMap<String, f64> {
        let mut weights = self.base.clone();
        for rule in self.rules.iter().filter(|r| r.matcher.matches(text)) {
            for (token, w) in &rule.weights {
                match rule.mode {
                    RuleMode::Set => {
                        weights.insert(token.clone(), *w);
                    }
                    RuleMode::Scale => {
                        if let Some(current) = weights.get_mut(token) {
                            *current *= w;
                        }
                    }
                }
            }
        }
        if self.token_jitter > 0.0 {
            for (token, w) in weights.iter_mut() {
                let v = 2.0 * self.unit_hash(text, token) - 1.0;
                *w *= 1.0 + self.token_jitter * v;
            }
        }
        if self.mass_jitter > 0.0 {
            let factor = 1.0 - self.mass_jitter * self.unit_hash(text, "");
            for w in weights.values_mut() {
                *w *= factor;
            }
        }
        let total: f64 = weights.values().sum();
        if total > 1.0 {
            for w in weights.values_mut() {
                *w /= total;
            }
        }
        weights
    }

    fn unit_hash(&self, text: &str, token: &str) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(text.as_bytes());
        hasher.update([0u8]);
        hasher.update(token.as_bytes());
        let bytes = hasher.finalize();
        let word = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        (word >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl ProbeBackend for SyntheticBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn probe(&self, query: &ProbabilityQuery) -> Result<ProbeResponse> {
        let dist = self.distribution(&query.text);

        let mut oov = Vec::new();
        let target_scores = query.targets.as_ref().map(|targets| {
            let mut scores = BTreeMap::new();
            for target in targets {
                let variants = self
                    .surface_variants
                    .get(target)
                    .cloned()
                    .unwrap_or_else(|| vec![target.clone()]);
                let present: Vec<f64> = variants
                    .iter()
                    .filter_map(|v| dist.get(v).copied())
                    .collect();
                if present.is_empty() && !oov.contains(target) {
                    oov.push(target.clone());
                }
                scores.insert(target.clone(), present.iter().sum::<f64>().min(1.0));
            }
            scores
        });

        let predictions = match query.top_k {
            Some(k) => {
                let mut ranked: Vec<(&String, f64)> = dist.iter().map(|(t, s)| (t, *s)).collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                ranked
                    .into_iter()
                    .take(k)
                    .enumerate()
                    .map(|(idx, (token, score))| Prediction {
                        token: token.clone(),
                        score,
                        rank: idx as u32 + 1,
                    })
                    .collect()
            }
            None => Vec::new(),
        };

        Ok(ProbeResponse {
            query_digest: query.digest(&self.model_id),
            predictions,
            target_scores,
            oov,
            backend_id: self.backend_id.clone(),
        })
    }
}
