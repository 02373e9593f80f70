//! Maps ranked transcription alternatives onto the closed vocabulary.
//!
//! The best-ranked alternative that exactly matches a class wins. When no
//! alternative matches, every alternative is compared against every class by
//! cosine similarity of averaged token embeddings and the global maximum is
//! taken (ties: lower alternative rank, then vocabulary order).

use crate::alignment::AudioSegment;
use crate::asr::TranscriptionResult;
use crate::pipeline::{AnnotationFlag, ObjectAnnotation};
use crate::session::Click;
use crate::vocabulary::{normalize, ClassName, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("failed to read embeddings: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

fn format_err(line: usize, reason: impl Into<String>) -> EmbeddingError {
    EmbeddingError::Format {
        line,
        reason: reason.into(),
    }
}

/// Token embedding table; tokens are stored lowercased.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: HashMap::new(),
        }
    }

    /// Adds or replaces a token vector. Panics on a dimension mismatch.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dimension, "embedding dimension mismatch for {token:?}");
        self.entries.insert(token.to_lowercase(), vector);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    /// Parses the text format: a `V D` header followed by `V` lines of
    /// `token f1 ... fD`.
    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| format_err(1, "missing header"))?;
        let mut fields = header.split_whitespace();
        let parse_usize = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
        let (Some(count), Some(dimension), None) =
            (parse_usize(fields.next()), parse_usize(fields.next()), fields.next())
        else {
            return Err(format_err(1, "header must be \"V D\""));
        };
        if dimension == 0 {
            return Err(format_err(1, "dimension must be positive"));
        }
        let mut table = Self::new(dimension);
        for (i, line) in lines {
            let lineno = i + 1;
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line").to_lowercase();
            let vector = fields
                .map(|f| f.parse::<f64>().map_err(|e| format_err(lineno, format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if vector.len() != dimension {
                return Err(format_err(
                    lineno,
                    format!("expected {dimension} components, found {}", vector.len()),
                ));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(format_err(lineno, "non-finite component"));
            }
            if table.entries.insert(token.clone(), vector).is_some() {
                return Err(format_err(lineno, format!("duplicate token {token:?}")));
            }
        }
        if table.entries.len() != count {
            return Err(format_err(
                1,
                format!("header declares {count} tokens, found {}", table.entries.len()),
            ));
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Renders the table in the text format with tokens sorted.
    pub fn to_text(&self) -> String {
        let mut tokens: Vec<&String> = self.entries.keys().collect();
        tokens.sort();
        let mut out = format!("{} {}\n", tokens.len(), self.dimension);
        for token in tokens {
            out.push_str(token);
            for v in &self.entries[token] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Unweighted mean of the phrase's in-table token vectors. Absent when no
/// token is known or the mean is the zero vector.
pub fn embed_phrase(phrase: &str, table: &EmbeddingTable) -> Option<Vec<f64>> {
    let normalized = normalize(phrase).ok()?;
    let mut sum = vec![0.0; table.dimension()];
    let mut found = 0usize;
    for token in normalized.split(' ') {
        if let Some(v) = table.get(token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            found += 1;
        }
    }
    if found == 0 {
        return None;
    }
    let n = found as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    if sum.iter().all(|&s| s == 0.0) {
        return None;
    }
    Some(sum)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionMethod {
    Exact,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResolution {
    pub class: ClassName,
    pub method: ResolutionMethod,
    pub matched_alternative_rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// Resolver bound to one vocabulary and embedding table, with class
/// embeddings computed once.
#[derive(Debug, Clone)]
pub struct LabelMatcher<'a> {
    vocab: &'a Vocabulary,
    table: &'a EmbeddingTable,
    class_vectors: Vec<Option<Vec<f64>>>,
    similarity_floor: Option<f64>,
}

impl<'a> LabelMatcher<'a> {
    pub fn new(vocab: &'a Vocabulary, table: &'a EmbeddingTable) -> Self {
        let class_vectors = vocab
            .classes()
            .iter()
            .map(|c| embed_phrase(c.normalized(), table))
            .collect();
        Self {
            vocab,
            table,
            class_vectors,
            similarity_floor: None,
        }
    }

    /// Fallback matches scoring below `floor` resolve to nothing.
    pub fn with_similarity_floor(mut self, floor: Option<f64>) -> Self {
        self.similarity_floor = floor;
        self
    }

    pub fn vocabulary(&self) -> &'a Vocabulary {
        self.vocab
    }

    pub fn resolve(&self, result: &TranscriptionResult) -> Option<LabelResolution> {
        let mut ranked: Vec<_> = result.alternatives.iter().collect();
        ranked.sort_by_key(|a| a.rank);

        if let Some((alt, class)) = ranked
            .iter()
            .find_map(|a| self.vocab.contains(&a.text).map(|c| (a, c)))
        {
            return Some(LabelResolution {
                class: class.clone(),
                method: ResolutionMethod::Exact,
                matched_alternative_rank: alt.rank,
                similarity: None,
            });
        }

        let mut best: Option<(f64, u32, usize)> = None;
        for alt in &ranked {
            let Some(alt_vec) = embed_phrase(&alt.text, self.table) else {
                continue;
            };
            for (ci, class_vec) in self.class_vectors.iter().enumerate() {
                let Some(class_vec) = class_vec else { continue };
                let sim = cosine_similarity(&alt_vec, class_vec);
                // strict comparison keeps the earlier (better-ranked, then
                // earlier-listed) pair on ties
                if best.is_none_or(|(b, _, _)| sim > b) {
                    best = Some((sim, alt.rank, ci));
                }
            }
        }
        let (sim, rank, ci) = best?;
        if self.similarity_floor.is_some_and(|floor| sim < floor) {
            return None;
        }
        Some(LabelResolution {
            class: self.vocab.classes()[ci].clone(),
            method: ResolutionMethod::Embedding,
            matched_alternative_rank: rank,
            similarity: Some(sim),
        })
    }
}

/// Free-function form of [`LabelMatcher::resolve`].
pub fn resolve(
    result: &TranscriptionResult,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
) -> Option<LabelResolution> {
    LabelMatcher::new(vocab, table).resolve(result)
}

/// Builds one annotation per click. The earliest click resolving to a class
/// represents it; later clicks on the same class are flagged duplicate and
/// unresolvable clicks are flagged unlabeled.
pub fn resolve_session(
    clicks: &[Click],
    segments: &[AudioSegment],
    results: &[TranscriptionResult],
    matcher: &LabelMatcher<'_>,
) -> Vec<ObjectAnnotation> {
    assert!(
        clicks.len() == segments.len() && segments.len() == results.len(),
        "one segment and one transcription per click"
    );
    let mut seen: HashSet<String> = HashSet::new();
    clicks
        .iter()
        .zip(segments)
        .zip(results)
        .enumerate()
        .map(|(i, ((click, segment), result))| {
            let resolution = matcher.resolve(result);
            let mut flags = BTreeSet::new();
            match &resolution {
                None => {
                    flags.insert(AnnotationFlag::Unlabeled);
                }
                Some(r) => {
                    if !seen.insert(r.class.normalized().to_string()) {
                        flags.insert(AnnotationFlag::Duplicate);
                    }
                }
            }
            ObjectAnnotation {
                object_index: i,
                x: click.x,
                y: click.y,
                t: click.t,
                segment: *segment,
                transcription: result.clone(),
                resolution,
                flags,
            }
        })
        .collect()
}
