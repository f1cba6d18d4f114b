//! Core data model: queries, passages, candidate lists, and rankings.
//!
//! A [`Ranking`] is a permutation of the 1-based candidate indices of one
//! [`CandidateList`]. Indices are 1-based everywhere a user or a model sees
//! them; docids, not positions, are the stable identity of a passage across
//! windows. All values are validated on construction and immutable after.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ioutil::{self, JsonlError};

/// Validation errors for the core model.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoreError {
    /// Index value appears more than once; carries the first repeated value.
    #[error("duplicate index {0} in ranking")]
    DuplicateIndex(usize),
    /// An index in 1..=n never appears; carries the smallest missing value.
    #[error("missing index {0} in ranking")]
    MissingIndex(usize),
    /// Index value outside 1..=n; carries the first offending value.
    #[error("index {0} out of range in ranking")]
    OutOfRange(usize),
    #[error("ranking covers {got} candidates but the list holds {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("query id must be non-empty and contain no whitespace")]
    BadQueryId,
    #[error("query text must be non-empty")]
    EmptyQueryText,
    #[error("docid must be non-empty and contain no whitespace")]
    BadDocid,
    #[error("duplicate docid {0} in candidate list")]
    DuplicateDocid(String),
    #[error("candidate list must hold at least one passage")]
    EmptyCandidates,
    #[error("{got} scores for {expected} passages")]
    ScoresLengthMismatch { expected: usize, got: usize },
}

/// A search query with a stable identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    qid: String,
    text: String,
}

impl Query {
    /// The qid must be non-empty and whitespace-free (it is written into
    /// whitespace-delimited run files); the text must be non-empty.
    pub fn new(qid: impl Into<String>, text: impl Into<String>) -> Result<Self, CoreError> {
        let qid = qid.into();
        let text = text.into();
        if qid.is_empty() || qid.chars().any(|c| c.is_whitespace()) {
            return Err(CoreError::BadQueryId);
        }
        if text.is_empty() {
            return Err(CoreError::EmptyQueryText);
        }
        Ok(Query { qid, text })
    }

    pub fn qid(&self) -> &str {
        &self.qid
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// A retrieved passage. The docid is the stable cross-window key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    docid: String,
    text: String,
}

impl Passage {
    /// The docid must be non-empty and whitespace-free; passage text may be
    /// empty (an empty passage is rankable, just unhelpful).
    pub fn new(docid: impl Into<String>, text: impl Into<String>) -> Result<Self, CoreError> {
        let docid = docid.into();
        if docid.is_empty() || docid.chars().any(|c| c.is_whitespace()) {
            return Err(CoreError::BadDocid);
        }
        Ok(Passage {
            docid,
            text: text.into(),
        })
    }

    pub fn docid(&self) -> &str {
        &self.docid
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// One query plus its retrieved passages, optionally with first-stage
/// retrieval scores aligned to the passages.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    query: Query,
    passages: Vec<Passage>,
    source_scores: Option<Vec<f64>>,
}

impl CandidateList {
    /// At least one passage; docids pairwise distinct; scores, when present,
    /// aligned one-to-one with the passages.
    pub fn new(
        query: Query,
        passages: Vec<Passage>,
        source_scores: Option<Vec<f64>>,
    ) -> Result<Self, CoreError> {
        if passages.is_empty() {
            return Err(CoreError::EmptyCandidates);
        }
        let mut seen = HashSet::new();
        for p in &passages {
            if !seen.insert(p.docid.as_str()) {
                return Err(CoreError::DuplicateDocid(p.docid.clone()));
            }
        }
        if let Some(scores) = &source_scores {
            if scores.len() != passages.len() {
                return Err(CoreError::ScoresLengthMismatch {
                    expected: passages.len(),
                    got: scores.len(),
                });
            }
        }
        Ok(CandidateList {
            query,
            passages,
            source_scores,
        })
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn source_scores(&self) -> Option<&[f64]> {
        self.source_scores.as_deref()
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    /// Builds a sub-list holding the passages at `positions` (0-based, in the
    /// given order). Valid by construction: a subset of distinct docids stays
    /// distinct. Panics on an out-of-bounds position; callers pass positions
    /// they derived from this list.
    pub fn select(&self, positions: &[usize]) -> CandidateList {
        assert!(!positions.is_empty(), "cannot select an empty sub-list");
        let passages = positions
            .iter()
            .map(|&p| self.passages[p].clone())
            .collect();
        let source_scores = self
            .source_scores
            .as_ref()
            .map(|s| positions.iter().map(|&p| s[p]).collect());
        CandidateList {
            query: self.query.clone(),
            passages,
            source_scores,
        }
    }
}

/// A permutation of the 1-based indices of an n-candidate list. Position 0
/// holds the index of the most relevant candidate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking {
    order: Vec<usize>,
}

impl Ranking {
    /// Validates that `order` is a permutation of 1..=n. Errors name the
    /// first offending index found in a left-to-right scan: a repeated value
    /// is [`CoreError::DuplicateIndex`], a value outside 1..=n is
    /// [`CoreError::OutOfRange`], and if the scan ends early the smallest
    /// absent value is [`CoreError::MissingIndex`].
    pub fn new(order: Vec<usize>, n: usize) -> Result<Self, CoreError> {
        let mut seen = vec![false; n];
        for &idx in &order {
            if idx < 1 || idx > n {
                return Err(CoreError::OutOfRange(idx));
            }
            if seen[idx - 1] {
                return Err(CoreError::DuplicateIndex(idx));
            }
            seen[idx - 1] = true;
        }
        if order.len() < n {
            let first_missing = seen.iter().position(|&s| !s).expect("some index unseen") + 1;
            return Err(CoreError::MissingIndex(first_missing));
        }
        Ok(Ranking { order })
    }

    /// The ranking that keeps candidates in their original order.
    pub fn identity(n: usize) -> Self {
        Ranking {
            order: (1..=n).collect(),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Reorders `candidates` so position i holds the passage at original index
/// `r.order()[i]`. The query and per-passage score alignment are preserved.
pub fn apply_ranking(candidates: &CandidateList, r: &Ranking) -> Result<CandidateList, CoreError> {
    if r.len() != candidates.len() {
        return Err(CoreError::LengthMismatch {
            expected: candidates.len(),
            got: r.len(),
        });
    }
    let positions: Vec<usize> = r.order().iter().map(|&idx| idx - 1).collect();
    Ok(candidates.select(&positions))
}

/// One line of a candidate file: a query, its passages, and optional
/// first-stage scores, teacher ordering, and teacher provenance tag.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateRecord {
    pub qid: String,
    pub query: String,
    pub passages: Vec<PassageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PassageRecord {
    pub docid: String,
    pub text: String,
}

/// A validated candidate list plus whatever labels its record carried.
#[derive(Debug, Clone)]
pub struct LabeledCandidates {
    pub candidates: CandidateList,
    pub teacher: Option<Ranking>,
    pub provenance: Option<String>,
}

/// Errors raised while ingesting candidate files.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: CoreError,
    },
}

impl CandidateRecord {
    pub fn validate(self) -> Result<LabeledCandidates, CoreError> {
        let query = Query::new(self.qid, self.query)?;
        let passages = self
            .passages
            .into_iter()
            .map(|p| Passage::new(p.docid, p.text))
            .collect::<Result<Vec<_>, _>>()?;
        let candidates = CandidateList::new(query, passages, self.scores)?;
        let teacher = self
            .teacher_order
            .map(|order| Ranking::new(order, candidates.len()))
            .transpose()?;
        Ok(LabeledCandidates {
            candidates,
            teacher,
            provenance: self.provenance,
        })
    }
}

/// Reads and validates a line-delimited candidate file. Errors carry the
/// 1-based line number of the first bad record.
pub fn read_candidates(path: &Path) -> Result<Vec<LabeledCandidates>, IngestError> {
    let records: Vec<CandidateRecord> = ioutil::read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.validate().map_err(|source| IngestError::Invalid {
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Writes candidate records as line-delimited JSON (atomic).
pub fn write_candidates(path: &Path, records: &[CandidateRecord]) -> std::io::Result<()> {
    ioutil::write_jsonl(path, records)
}
