//! Replay cache: line-delimited `{"digest", "response"}` records.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ProbabilityQuery, ProbeBackend, ProbeResponse, QueryDigest};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub digest: QueryDigest,
    pub response: ProbeResponse,
}

fn insert_entry(
    map: &mut BTreeMap<QueryDigest, ProbeResponse>,
    response: ProbeResponse,
) -> Result<()> {
    match map.get(&response.query_digest) {
        Some(existing) if *existing != response => {
            Err(Error::ConflictingDigest(response.query_digest.0.clone()))
        }
        Some(_) => Ok(()),
        None => {
            map.insert(response.query_digest.clone(), response);
            Ok(())
        }
    }
}

fn parse_entries(text: &str, origin: &str) -> Result<BTreeMap<QueryDigest, ProbeResponse>> {
    let mut map = BTreeMap::new();
    for entry in io::from_jsonl::<ReplayEntry>(text, origin)? {
        if entry.digest != entry.response.query_digest {
            return Err(Error::parse(
                origin,
                format!("entry digest {} disagrees with its response", entry.digest),
            ));
        }
        insert_entry(&mut map, entry.response)?;
    }
    Ok(map)
}

/// Loads a replay file into a digest-keyed map.
pub fn load_replay(path: &Path) -> Result<BTreeMap<QueryDigest, ProbeResponse>> {
    let text = io::read_to_string(path)?;
    parse_entries(&text, &path.display().to_string())
}

/// Writes a session as a replay file, merged with any entries already at
/// `path`. Entries are sorted by digest. The same digest with two different
/// payloads is an error.
pub fn record_replay(session: &[ProbeResponse], path: &Path) -> Result<usize> {
    let mut map = if path.exists() {
        load_replay(path)?
    } else {
        BTreeMap::new()
    };
    for response in session {
        insert_entry(&mut map, response.clone())?;
    }
    let entries: Vec<ReplayEntry> = map
        .into_iter()
        .map(|(digest, response)| ReplayEntry { digest, response })
        .collect();
    io::write_jsonl(path, &entries)?;
    Ok(entries.len())
}

pub struct ReplayBackend {
    model_id: String,
    mask_token: String,
    backend_id: String,
    responses: BTreeMap<QueryDigest, ProbeResponse>,
}

impl ReplayBackend {
    pub fn new(
        model_id: impl Into<String>,
        mask_token: impl Into<String>,
        responses: BTreeMap<QueryDigest, ProbeResponse>,
    ) -> Self {
        ReplayBackend {
            model_id: model_id.into(),
            mask_token: mask_token.into(),
            backend_id: "replay".into(),
            responses,
        }
    }

    pub fn from_file(
        path: &Path,
        model_id: impl Into<String>,
        mask_token: impl Into<String>,
    ) -> Result<Self> {
        let responses = load_replay(path)?;
        let mut backend = ReplayBackend::new(model_id, mask_token, responses);
        backend.backend_id = format!(
            "replay:{}",
            path.file_name()
                .map(|n| n.to_string_lossy())
                .unwrap_or_default()
        );
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ProbeBackend for ReplayBackend {
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
        let digest = query.digest(&self.model_id);
        self.responses
            .get(&digest)
            .cloned()
            .ok_or(Error::CacheMiss(digest.0))
    }
}

/// Answers from a partial-progress manifest when possible and appends every
/// newly obtained response to it, so an interrupted run can resume without
/// repeating completed probes.
pub struct ResumableBackend<B> {
    inner: B,
    done: BTreeMap<QueryDigest, ProbeResponse>,
    manifest: Mutex<File>,
    path: PathBuf,
}

impl<B: ProbeBackend> ResumableBackend<B> {
    pub fn open(inner: B, path: &Path) -> Result<Self> {
        let done = if path.exists() {
            // A run killed mid-write can leave a truncated last line.
            let text = io::read_to_string(path)?;
            let complete = match text.rfind('\n') {
                Some(end) => &text[..=end],
                None => "",
            };
            let done = parse_entries(complete, &path.display().to_string())?;
            if complete.len() != text.len() {
                io::write_atomic(path, complete.as_bytes())?;
            }
            done
        } else {
            BTreeMap::new()
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ResumableBackend {
            inner,
            done,
            manifest: Mutex::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn resumed(&self) -> usize {
        self.done.len()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<B: ProbeBackend> ProbeBackend for ResumableBackend<B> {
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
        let digest = query.digest(self.inner.model_id());
        if let Some(response) = self.done.get(&digest) {
            return Ok(response.clone());
        }
        let response = self.inner.probe(query)?;
        let line = serde_json::to_string(&ReplayEntry {
            digest,
            response: response.clone(),
        })
        .map_err(|e| Error::Protocol(e.to_string()))?;
        let mut file = self.manifest.lock().expect("manifest lock");
        writeln!(file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        Ok(response)
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
}
