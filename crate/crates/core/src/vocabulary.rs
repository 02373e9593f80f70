//! Closed class vocabulary and the canonical name form used for every
//! equality test in the system.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("name {0:?} is empty after normalization")]
    EmptyName(String),
    #[error("duplicate class {normalized:?} (from {raw:?})")]
    Duplicate { raw: String, normalized: String },
    #[error("vocabulary has no classes")]
    Empty,
    #[error("failed to read vocabulary: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed vocabulary JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Canonical form of a class name: lowercase, tokens separated by single
/// spaces, each token stripped of leading and trailing punctuation.
/// Internal punctuation ("ping-pong", "baby's") is kept.
pub fn normalize(name: &str) -> Result<String, VocabularyError> {
    let lowered = name.to_lowercase();
    let tokens: Vec<&str> = lowered
        .split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|tok| !tok.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(VocabularyError::EmptyName(name.to_string()));
    }
    Ok(tokens.join(" "))
}

/// A class name together with its canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassName {
    raw: String,
    normalized: String,
}

impl ClassName {
    pub fn new(raw: &str) -> Result<Self, VocabularyError> {
        Ok(Self {
            raw: raw.to_string(),
            normalized: normalize(raw)?,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.normalized.split(' ')
    }
}

impl Serialize for ClassName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.normalized)
    }
}

impl<'de> Deserialize<'de> for ClassName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        ClassName::new(&raw).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.normalized)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_uri: Option<String>,
}

/// On-disk vocabulary document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabularyFile {
    pub name: String,
    pub classes: Vec<VocabularyEntry>,
}

/// Ordered, immutable set of annotatable classes.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    id: String,
    classes: Vec<ClassName>,
    symbols: Vec<Option<String>>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<S: AsRef<str>>(id: &str, names: &[S]) -> Result<Self, VocabularyError> {
        let entries = names
            .iter()
            .map(|n| VocabularyEntry {
                name: n.as_ref().to_string(),
                symbol_uri: None,
            })
            .collect::<Vec<_>>();
        Self::from_file(VocabularyFile {
            name: id.to_string(),
            classes: entries,
        })
    }

    pub fn from_file(file: VocabularyFile) -> Result<Self, VocabularyError> {
        if file.classes.is_empty() {
            return Err(VocabularyError::Empty);
        }
        let mut classes = Vec::with_capacity(file.classes.len());
        let mut symbols = Vec::with_capacity(file.classes.len());
        let mut index = HashMap::with_capacity(file.classes.len());
        for entry in file.classes {
            let class = ClassName::new(&entry.name)?;
            if index.insert(class.normalized.clone(), classes.len()).is_some() {
                return Err(VocabularyError::Duplicate {
                    raw: entry.name,
                    normalized: class.normalized,
                });
            }
            classes.push(class);
            symbols.push(entry.symbol_uri);
        }
        Ok(Self {
            id: file.name,
            classes,
            symbols,
            index,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, VocabularyError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabularyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> VocabularyFile {
        VocabularyFile {
            name: self.id.clone(),
            classes: self
                .classes
                .iter()
                .zip(&self.symbols)
                .map(|(c, s)| VocabularyEntry {
                    name: c.raw.clone(),
                    symbol_uri: s.clone(),
                })
                .collect(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassName] {
        &self.classes
    }

    pub fn symbol_uri(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).and_then(|s| s.as_deref())
    }

    /// Looks `name` up by canonical form.
    pub fn contains(&self, name: &str) -> Option<&ClassName> {
        let key = normalize(name).ok()?;
        self.index.get(&key).map(|&i| &self.classes[i])
    }

    /// Position of a class in vocabulary order.
    pub fn position(&self, name: &str) -> Option<usize> {
        let key = normalize(name).ok()?;
        self.index.get(&key).copied()
    }

    /// All canonical class names in vocabulary order, for ASR biasing.
    pub fn phrase_hints(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.normalized.clone()).collect()
    }
}
