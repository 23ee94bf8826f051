//! Backend contract for masked-position probability lookups.
//!
//! A [`ProbeBackend`] answers [`ProbabilityQuery`]s for one model: target
//! scores (summed over each target's surface variants) and/or the top-k
//! predictions at the masked position. Three implementations are provided:
//! [`RemoteBackend`] speaks the fill-mask wire protocol, [`ReplayBackend`]
//! answers from a recorded cache, and [`SyntheticBackend`] computes scores
//! from a deterministic configuration.

mod remote;
mod replay;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use remote::{FillMaskRequest, FillMaskResponse, RemoteBackend, RetryPolicy};
pub use replay::{load_replay, record_replay, ReplayBackend, ReplayEntry, ResumableBackend};
pub use synthetic::{Matcher, Rule, RuleMode, SyntheticBackend};

/// Default bound on concurrent in-flight probes.
pub const DEFAULT_CONCURRENCY: usize = 8;

/// Tolerance for probability-sum checks.
pub const PROBABILITY_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityQuery {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

impl ProbabilityQuery {
    pub fn with_targets(text: impl Into<String>, targets: &[String]) -> Self {
        ProbabilityQuery {
            text: text.into(),
            targets: Some(targets.to_vec()),
            top_k: None,
        }
    }

    pub fn with_top_k(text: impl Into<String>, k: usize) -> Self {
        ProbabilityQuery {
            text: text.into(),
            targets: None,
            top_k: Some(k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.targets, self.top_k) {
            (None, None) => Err(Error::Validation(
                "query must request targets, top_k, or both".into(),
            )),
            (_, Some(0)) => Err(Error::Validation("top_k must be at least 1".into())),
            (Some(targets), _) if targets.is_empty() => {
                Err(Error::Validation("targets list is empty".into()))
            }
            _ => Ok(()),
        }
    }

    /// Requested targets, sorted and deduplicated.
    pub fn canonical_targets(&self) -> Option<Vec<String>> {
        self.targets.as_ref().map(|t| {
            let mut t = t.clone();
            t.sort();
            t.dedup();
            t
        })
    }

    /// Stable digest over (model, text, sorted targets, top_k).
    ///
    /// The digest is the lowercase hex SHA-256 of the compact JSON object
    /// `{"model":…,"text":…,"targets":[…]|null,"top_k":n|null}` with keys in
    /// that order.
    pub fn digest(&self, model_id: &str) -> QueryDigest {
        #[derive(Serialize)]
        struct Canonical<'a> {
            model: &'a str,
            text: &'a str,
            targets: Option<Vec<String>>,
            top_k: Option<usize>,
        }
        let canonical = Canonical {
            model: model_id,
            text: &self.text,
            targets: self.canonical_targets(),
            top_k: self.top_k,
        };
        let bytes = serde_json::to_vec(&canonical).expect("canonical query serializes");
        QueryDigest(hex::encode(Sha256::digest(bytes)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryDigest(pub String);

impl fmt::Display for QueryDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub token: String,
    pub score: f64,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub query_digest: QueryDigest,
    #[serde(default)]
    pub predictions: Vec<Prediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_scores: Option<BTreeMap<String, f64>>,
    /// Requested targets absent from the model vocabulary; scored 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oov: Vec<String>,
    pub backend_id: String,
}

impl ProbeResponse {
    /// Checks the response invariants against the query it answers.
    pub fn check(&self, query: &ProbabilityQuery) -> Result<()> {
        let protocol = |msg: String| Err(Error::Protocol(msg));
        for (idx, p) in self.predictions.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.score) || !p.score.is_finite() {
                return protocol(format!(
                    "prediction {:?} has score {} outside [0,1]",
                    p.token, p.score
                ));
            }
            if p.rank as usize != idx + 1 {
                return protocol(format!(
                    "prediction {:?} has rank {}, expected {}",
                    p.token,
                    p.rank,
                    idx + 1
                ));
            }
        }
        if self.predictions.windows(2).any(|w| w[1].score > w[0].score) {
            return protocol("prediction scores are not non-increasing by rank".into());
        }
        match query.top_k {
            Some(k) if self.predictions.len() > k => {
                return protocol(format!(
                    "{} predictions returned for top_k={k}",
                    self.predictions.len()
                ))
            }
            None if !self.predictions.is_empty() => {
                return protocol("predictions returned for a targets-only query".into())
            }
            _ => {}
        }
        match (&query.targets, &self.target_scores) {
            (Some(targets), Some(scores)) => {
                for target in targets {
                    match scores.get(target) {
                        None => {
                            return protocol(format!(
                                "target {target:?} missing from target_scores"
                            ))
                        }
                        Some(s) if !(0.0..=1.0).contains(s) || !s.is_finite() => {
                            return protocol(format!(
                                "target {target:?} has score {s} outside [0,1]"
                            ))
                        }
                        _ => {}
                    }
                }
            }
            (Some(_), None) => return protocol("target_scores missing".into()),
            (None, Some(_)) => {
                return protocol("target_scores present for a top-k-only query".into())
            }
            (None, None) => {}
        }
        Ok(())
    }

    pub fn target_score(&self, token: &str) -> f64 {
        self.target_scores
            .as_ref()
            .and_then(|s| s.get(token))
            .copied()
            .unwrap_or(0.0)
    }
}

/// A handle to one model's masked-position probabilities.
pub trait ProbeBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn mask_token(&self) -> &str;

    /// Answers a query. Callers should go through [`probe`], which enforces
    /// the pre- and postconditions.
    fn probe(&self, query: &ProbabilityQuery) -> Result<ProbeResponse>;

    /// Whether identical queries always produce identical responses without
    /// touching external systems.
    fn is_deterministic(&self) -> bool {
        true
    }
}

impl<B: ProbeBackend + ?Sized> ProbeBackend for &B {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn mask_token(&self) -> &str {
        (**self).mask_token()
    }
    fn probe(&self, query: &ProbabilityQuery) -> Result<ProbeResponse> {
        (**self).probe(query)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

impl<B: ProbeBackend + ?Sized> ProbeBackend for Box<B> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn mask_token(&self) -> &str {
        (**self).mask_token()
    }
    fn probe(&self, query: &ProbabilityQuery) -> Result<ProbeResponse> {
        (**self).probe(query)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

pub fn check_mask_count(text: &str, mask: &str) -> Result<()> {
    let found = text.matches(mask).count();
    if found == 1 {
        Ok(())
    } else {
        Err(Error::MaskCount {
            text: text.to_string(),
            mask: mask.to_string(),
            found,
        })
    }
}

/// Validates the query, checks the mask count, probes and checks the response.
pub fn probe<B: ProbeBackend + ?Sized>(
    query: &ProbabilityQuery,
    backend: &B,
) -> Result<ProbeResponse> {
    query.validate()?;
    check_mask_count(&query.text, backend.mask_token())?;
    let response = backend.probe(query)?;
    let expected = query.digest(backend.model_id());
    if response.query_digest != expected {
        return Err(Error::Protocol(format!(
            "response digest {} does not match query digest {expected}",
            response.query_digest
        )));
    }
    response.check(query)?;
    Ok(response)
}

/// Top-k probe; the response carries at most `k` rank-ordered predictions.
pub fn probe_top_k<B: ProbeBackend + ?Sized>(
    text: &str,
    k: usize,
    backend: &B,
) -> Result<ProbeResponse> {
    probe(&ProbabilityQuery::with_top_k(text, k), backend)
}

/// Probes every query with up to `concurrency` requests in flight. Results
/// are returned in query order. After the first failure no new queries are
/// started; unstarted queries are reported as `None`.
pub fn probe_all<B: ProbeBackend + ?Sized>(
    backend: &B,
    queries: &[ProbabilityQuery],
    concurrency: usize,
) -> Vec<Option<Result<ProbeResponse>>> {
    let workers = concurrency.clamp(1, queries.len().max(1));
    let slots: Vec<Mutex<Option<Result<ProbeResponse>>>> =
        queries.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(query) = queries.get(idx) else { break };
                let result = probe(query, backend);
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *slots[idx].lock().expect("slot lock") = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock"))
        .collect()
}

/// Wraps a backend and keeps every successful response, for recording a
/// replay file.
pub struct RecordingBackend<B> {
    inner: B,
    session: Mutex<Vec<ProbeResponse>>,
}

impl<B: ProbeBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            session: Mutex::new(Vec::new()),
        }
    }

    pub fn into_session(self) -> Vec<ProbeResponse> {
        self.session.into_inner().expect("session lock")
    }
}

impl<B: ProbeBackend> ProbeBackend for RecordingBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn mask_token(&self) -> &str {
        self.inner.mask_token()
    }
    fn probe(&self, query: &ProbabilityQuery) -> Result<ProbeResponse> {
        let response = self.inner.probe(query)?;
        self.session
            .lock()
            .expect("session lock")
            .push(response.clone());
        Ok(response)
    }
    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
}
