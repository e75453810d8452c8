//! Case records, vocabulary construction, and record encoding.
//!
//! Records arrive pre-tokenized: segmentation and dependency extraction are
//! upstream concerns. Numerals and collocations are consumed as annotations
//! over token positions. Number+unit composites ("10kg") are single tokens.

mod generator;
mod jsonl;

pub use generator::{generate_corpus, CorpusBundle, CorpusSpec, ItemSpec, UnitSpec};
pub use jsonl::{load_jsonl, save_jsonl};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TaskGraph;

/// A numeral annotation: the token at `pos` is the unit-bearing composite
/// token whose numeric part is `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Numeral {
    pub pos: usize,
    pub value: i64,
    pub unit: String,
}

/// A tokenized fact description with annotations and one gold label per task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub tokens: Vec<String>,
    pub numerals: Vec<Numeral>,
    pub collocations: Vec<(usize, usize)>,
    pub labels: BTreeMap<String, usize>,
}

impl CaseRecord {
    /// Structural checks that do not need a task graph: every annotated
    /// position must reference an existing token and values are non-negative.
    pub fn validate(&self) -> Result<()> {
        let len = self.tokens.len();
        for num in &self.numerals {
            if num.pos >= len {
                return Err(Error::Annotation(format!(
                    "numeral position {} out of range for {} tokens",
                    num.pos, len
                )));
            }
            if num.value < 0 {
                return Err(Error::Annotation(format!(
                    "numeral value {} is negative",
                    num.value
                )));
            }
        }
        for &(a, b) in &self.collocations {
            if a >= len || b >= len {
                return Err(Error::Annotation(format!(
                    "collocation ({a}, {b}) out of range for {len} tokens"
                )));
            }
        }
        Ok(())
    }
}

pub const PAD: usize = 0;
pub const UNK: usize = 1;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token/index bijection with reserved PAD and UNK entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    threshold: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    threshold: usize,
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            tokens: v.tokens,
            threshold: v.threshold,
        }
    }
}

impl TryFrom<VocabRepr> for Vocabulary {
    type Error = Error;
    fn try_from(r: VocabRepr) -> Result<Self> {
        if r.tokens.len() < 2 || r.tokens[PAD] != PAD_TOKEN || r.tokens[UNK] != UNK_TOKEN {
            return Err(Error::Checkpoint(
                "vocabulary must start with the PAD and UNK tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(r.tokens.len());
        for (i, t) in r.tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Vocabulary {
            tokens: r.tokens,
            threshold: r.threshold,
            index,
        })
    }
}

impl Vocabulary {
    /// Count token frequencies over `records` and retain tokens whose count
    /// reaches `threshold`. Retained tokens get indices ≥ 2 in first-seen
    /// order; everything else maps to UNK.
    pub fn build(records: &[CaseRecord], threshold: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput { op: "build_vocab" });
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for rec in records {
            for tok in &rec.tokens {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut index = HashMap::new();
        index.insert(PAD_TOKEN.to_string(), PAD);
        index.insert(UNK_TOKEN.to_string(), UNK);
        for rec in records {
            for tok in &rec.tokens {
                if counts[tok.as_str()] >= threshold && !index.contains_key(tok.as_str()) {
                    index.insert(tok.clone(), tokens.len());
                    tokens.push(tok.clone());
                }
            }
        }
        Ok(Vocabulary {
            tokens,
            threshold,
            index,
        })
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // PAD and UNK are always present
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }
}

/// A record mapped to vocabulary indices, padded/truncated to a fixed length,
/// with labels aligned to task-graph order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedCase {
    pub token_ids: Vec<usize>,
    pub numerals: Vec<Numeral>,
    pub collocations: Vec<(usize, usize)>,
    /// One gold class per task, in task-graph order.
    pub labels: Vec<usize>,
}

/// Map a record onto vocabulary indices. Tokens are padded/truncated to
/// `max_doc_len` (prefix kept); numerals and collocations that reference
/// truncated positions are dropped, and collocations beyond
/// `max_collocations` are dropped in record order.
pub fn encode_record(
    rec: &CaseRecord,
    vocab: &Vocabulary,
    graph: &TaskGraph,
    max_doc_len: usize,
    max_collocations: usize,
) -> Result<IndexedCase> {
    rec.validate().map_err(|e| match e {
        Error::Annotation(msg) => Error::Annotation(msg),
        other => other,
    })?;

    let mut token_ids: Vec<usize> = rec
        .tokens
        .iter()
        .take(max_doc_len)
        .map(|t| vocab.id(t))
        .collect();
    token_ids.resize(max_doc_len, PAD);

    let numerals: Vec<Numeral> = rec
        .numerals
        .iter()
        .filter(|n| n.pos < max_doc_len)
        .cloned()
        .collect();
    let collocations: Vec<(usize, usize)> = rec
        .collocations
        .iter()
        .filter(|&&(a, b)| a < max_doc_len && b < max_doc_len)
        .take(max_collocations)
        .copied()
        .collect();

    let mut labels = Vec::with_capacity(graph.task_count());
    for task in graph.tasks() {
        let &idx = rec
            .labels
            .get(&task.id)
            .ok_or_else(|| Error::MissingLabel(task.id.clone()))?;
        if idx >= task.classes {
            return Err(Error::Label {
                task: task.id.clone(),
                index: idx,
                classes: task.classes,
            });
        }
        labels.push(idx);
    }

    Ok(IndexedCase {
        token_ids,
        numerals,
        collocations,
        labels,
    })
}
