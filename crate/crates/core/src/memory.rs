//! Per-profile memory of resolved personalized elements, and retrieval
//! completion against it.
//!
//! Keys are normalized element phrases; the latest write wins. Memory files
//! are JSON documents written atomically (temp file, then rename).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{find_phrase, normalize};

pub const DEFAULT_PROFILE: &str = "default";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("element phrase is empty")]
    EmptyElement,
    #[error("value for {0:?} is empty")]
    EmptyValue(String),
    #[error("retrieval needs at least one element")]
    NoElements,
    #[error("duplicate element {0:?}")]
    DuplicateElement(String),
    #[error("substitution target {0:?} does not occur in the instruction")]
    SubstitutionTargetMissing(String),
    #[error("cannot access memory file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed memory file {path}: {message}")]
    Malformed { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStore {
    profile_id: String,
    entries: BTreeMap<String, String>,
    #[serde(skip)]
    dirty: bool,
}

impl Default for MemoryStore {
    fn default() -> Self {
        MemoryStore::new(DEFAULT_PROFILE)
    }
}

impl MemoryStore {
    pub fn new(profile_id: impl Into<String>) -> Self {
        MemoryStore {
            profile_id: profile_id.into(),
            entries: BTreeMap::new(),
            dirty: false,
        }
    }

    pub fn profile_id(&self) -> &str {
        &self.profile_id
    }

    pub fn get(&self, element: &str) -> Option<&str> {
        self.entries.get(&normalize(element)).map(String::as_str)
    }

    pub fn contains(&self, element: &str) -> bool {
        self.get(element).is_some()
    }

    /// Records `value` for `element`, returning the value it replaced.
    pub fn store(&mut self, element: &str, value: &str) -> Result<Option<String>, MemoryError> {
        let key = normalize(element);
        if key.is_empty() {
            return Err(MemoryError::EmptyElement);
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(MemoryError::EmptyValue(element.to_string()));
        }
        let previous = self.entries.insert(key, value.to_string());
        if previous.as_deref() != Some(value) {
            self.dirty = true;
        }
        Ok(previous)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        if !self.entries.is_empty() {
            self.dirty = true;
        }
        self.entries.clear();
    }

    /// Whether the store changed since it was loaded or last persisted.
    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    /// Writes the store to `path` atomically.
    pub fn persist(&mut self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let path = path.as_ref();
        let io = |source| MemoryError::Io {
            path: path.display().to_string(),
            source,
        };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let json = serde_json::to_string_pretty(self).expect("memory serializes");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(json.as_bytes()).map_err(io)?;
        tmp.write_all(b"\n").map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        self.dirty = false;
        Ok(())
    }

    /// Loads a profile; a missing file yields an empty store named after the
    /// file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref();
        let source = match fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let profile = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or(DEFAULT_PROFILE);
                return Ok(MemoryStore::new(profile));
            }
            Err(source) => {
                return Err(MemoryError::Io {
                    path: path.display().to_string(),
                    source,
                })
            }
        };
        let malformed = |message: String| MemoryError::Malformed {
            path: path.display().to_string(),
            message,
        };
        let raw: MemoryStore = serde_json::from_str(&source).map_err(|e| malformed(e.to_string()))?;
        // re-key through store() so hand-edited files obey the key invariants
        let mut store = MemoryStore::new(raw.profile_id);
        for (k, v) in &raw.entries {
            store.store(k, v).map_err(|e| malformed(e.to_string()))?;
        }
        store.dirty = false;
        Ok(store)
    }
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<MemoryStore, MemoryError> {
    MemoryStore::load(path)
}

/// Result of completing an instruction from memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum RetrievalOutcome {
    /// Every element was found; the instruction is fully explicit.
    Completed { instruction: String },
    /// Some elements were substituted; `remaining` still need resolving.
    Partial {
        instruction: String,
        remaining: Vec<String>,
    },
    /// Nothing was found.
    Missing { elements: Vec<String> },
}

impl RetrievalOutcome {
    /// The instruction text after whatever substitution happened.
    pub fn instruction<'a>(&'a self, original: &'a str) -> &'a str {
        match self {
            RetrievalOutcome::Completed { instruction }
            | RetrievalOutcome::Partial { instruction, .. } => instruction,
            RetrievalOutcome::Missing { .. } => original,
        }
    }

    pub fn remaining(&self) -> &[String] {
        match self {
            RetrievalOutcome::Completed { .. } => &[],
            RetrievalOutcome::Partial { remaining, .. } => remaining,
            RetrievalOutcome::Missing { elements } => elements,
        }
    }

    pub fn case_label(&self) -> &'static str {
        match self {
            RetrievalOutcome::Completed { .. } => "Y",
            RetrievalOutcome::Partial { .. } => "Part",
            RetrievalOutcome::Missing { .. } => "N",
        }
    }
}

/// Substitutes every stored element into `instruction`.
///
/// Occurrences are claimed longest phrase first, for found and unfound
/// elements alike, so a shorter stored phrase never rewrites the inside of a
/// longer one. Text outside claimed occurrences is copied byte for byte.
pub fn retrieve_complete(
    instruction: &str,
    elements: &[String],
    store: &MemoryStore,
) -> Result<RetrievalOutcome, MemoryError> {
    if elements.is_empty() {
        return Err(MemoryError::NoElements);
    }
    let mut seen = std::collections::HashSet::new();
    for element in elements {
        let key = normalize(element);
        if key.is_empty() {
            return Err(MemoryError::EmptyElement);
        }
        if !seen.insert(key) {
            return Err(MemoryError::DuplicateElement(element.clone()));
        }
    }

    let mut by_length: Vec<&String> = elements.iter().collect();
    by_length.sort_by_key(|e| std::cmp::Reverse(normalize(e).chars().count()));

    let mut claimed: Vec<(Range<usize>, Option<&str>)> = Vec::new();
    for element in by_length {
        let occurrences = find_phrase(instruction, element);
        if occurrences.is_empty() {
            return Err(MemoryError::SubstitutionTargetMissing(element.clone()));
        }
        let value = store.get(element);
        for range in occurrences {
            let overlaps = claimed
                .iter()
                .any(|(r, _)| r.start < range.end && range.start < r.end);
            if !overlaps {
                claimed.push((range, value));
            }
        }
    }
    claimed.sort_by_key(|(r, _)| r.start);

    let remaining: Vec<String> = elements
        .iter()
        .filter(|e| !store.contains(e))
        .cloned()
        .collect();
    if remaining.len() == elements.len() {
        return Ok(RetrievalOutcome::Missing {
            elements: elements.to_vec(),
        });
    }

    let mut completed = String::with_capacity(instruction.len());
    let mut cursor = 0;
    for (range, value) in &claimed {
        if let Some(value) = value {
            completed.push_str(&instruction[cursor..range.start]);
            completed.push_str(value);
            cursor = range.end;
        }
    }
    completed.push_str(&instruction[cursor..]);

    Ok(if remaining.is_empty() {
        RetrievalOutcome::Completed {
            instruction: completed,
        }
    } else {
        RetrievalOutcome::Partial {
            instruction: completed,
            remaining,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TIKTOK: &str = "Open TikTok, search for a video about my school, and share it with my friend.";

    fn elems(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn completes_when_all_found() {
        let mut t = MemoryStore::new("u");
        t.store("my school", "test school").unwrap();
        t.store("my friend", "jack").unwrap();
        let out = retrieve_complete(TIKTOK, &elems(&["my school", "my friend"]), &t).unwrap();
        assert_eq!(
            out,
            RetrievalOutcome::Completed {
                instruction: "Open TikTok, search for a video about test school, and share it with jack."
                    .into()
            }
        );
    }

    #[test]
    fn partial_reports_remaining() {
        let mut t = MemoryStore::new("u");
        t.store("my school", "test school").unwrap();
        let out = retrieve_complete(TIKTOK, &elems(&["my school", "my friend"]), &t).unwrap();
        assert_eq!(
            out,
            RetrievalOutcome::Partial {
                instruction: "Open TikTok, search for a video about test school, and share it with my friend."
                    .into(),
                remaining: elems(&["my friend"]),
            }
        );
        assert_eq!(out.case_label(), "Part");
    }

    #[test]
    fn empty_memory_is_missing() {
        let out = retrieve_complete(TIKTOK, &elems(&["my school", "my friend"]), &MemoryStore::default()).unwrap();
        assert_eq!(out.remaining(), elems(&["my school", "my friend"]).as_slice());
        assert_eq!(out.instruction(TIKTOK), TIKTOK);
    }

    #[test]
    fn longest_phrase_wins() {
        let mut t = MemoryStore::new("u");
        t.store("friend", "Jack").unwrap();
        t.store("my friend", "Lily").unwrap();
        let out = retrieve_complete("tell my friend and friend", &elems(&["friend", "my friend"]), &t).unwrap();
        assert_eq!(out.instruction(""), "tell Lily and Jack");

        // an unresolved longer phrase shields its inner words
        let mut t = MemoryStore::new("u");
        t.store("friend", "Jack").unwrap();
        let text = "fill in the friend, fill in the Friend's phone number";
        let out = retrieve_complete(text, &elems(&["Friend's phone number", "friend"]), &t).unwrap();
        assert_eq!(
            out,
            RetrievalOutcome::Partial {
                instruction: "fill in the Jack, fill in the Friend's phone number".into(),
                remaining: elems(&["Friend's phone number"]),
            }
        );
    }

    #[test]
    fn replaces_every_occurrence_case_insensitively() {
        let mut t = MemoryStore::new("u");
        t.store("My City", "Xi'an").unwrap();
        let out = retrieve_complete("to my city, near MY CITY.", &elems(&["my city"]), &t).unwrap();
        assert_eq!(out.instruction(""), "to Xi'an, near Xi'an.");
    }

    #[test]
    fn retrieval_errors() {
        let t = MemoryStore::default();
        assert!(matches!(retrieve_complete(TIKTOK, &[], &t), Err(MemoryError::NoElements)));
        assert!(matches!(
            retrieve_complete(TIKTOK, &elems(&["my home"]), &t),
            Err(MemoryError::SubstitutionTargetMissing(p)) if p == "my home"
        ));
        assert!(matches!(
            retrieve_complete(TIKTOK, &elems(&["my friend", "My Friend"]), &t),
            Err(MemoryError::DuplicateElement(_))
        ));
    }

    #[test]
    fn store_semantics() {
        let mut t = MemoryStore::new("u");
        assert!(!t.is_dirty());
        t.store("my friend", "jack").unwrap();
        assert_eq!(t.get("  My Friend "), Some("jack"));
        assert_eq!(t.store("my friend", "rose").unwrap().as_deref(), Some("jack"));
        assert_eq!(t.get("my friend"), Some("rose"));
        assert!(t.is_dirty());
        assert!(matches!(t.store("", "x"), Err(MemoryError::EmptyElement)));
        assert!(matches!(t.store("my home", "  "), Err(MemoryError::EmptyValue(_))));
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alice.json");
        let fresh = MemoryStore::load(&path).unwrap();
        assert!(fresh.is_empty());
        assert_eq!(fresh.profile_id(), "alice");

        let mut t = fresh;
        t.store("my friend", "jack").unwrap();
        t.store("my home", "xi'an road 5").unwrap();
        t.persist(&path).unwrap();
        assert!(!t.is_dirty());
        assert_eq!(MemoryStore::load(&path).unwrap(), t);
    }

    #[test]
    fn corrupted_file_fails_and_is_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{ not json").unwrap();
        assert!(matches!(MemoryStore::load(&path), Err(MemoryError::Malformed { .. })));
        assert_eq!(fs::read_to_string(&path).unwrap(), "{ not json");
    }
}
