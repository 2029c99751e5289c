//! Labeled sentence/aspect examples in JSONL form.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conllu::{parse_conllu, validate_tree, DepTree};
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 3;

/// Polarity classes in their fixed report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl Polarity {
    pub const ALL: [Polarity; NUM_CLASSES] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label {
            "negative" => Some(Polarity::Negative),
            "neutral" => Some(Polarity::Neutral),
            "positive" => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Positive => "positive",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub tree: DepTree,
    /// Half-open token interval `[start, end)`, 0-based.
    pub aspect: (usize, usize),
    pub label: Polarity,
}

impl Example {
    pub fn aspect_len(&self) -> usize {
        self.aspect.1 - self.aspect.0
    }
}

/// One JSONL line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetRow {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deprels: Option<Vec<String>>,
    pub aspect_span: [usize; 2],
    pub label: String,
}

impl DatasetRow {
    pub fn from_example(ex: &Example) -> Self {
        DatasetRow {
            tokens: ex.tree.forms().map(str::to_string).collect(),
            heads: Some(ex.tree.tokens.iter().map(|t| t.head).collect()),
            deprels: Some(ex.tree.tokens.iter().map(|t| t.deprel.clone()).collect()),
            aspect_span: [ex.aspect.0, ex.aspect.1],
            label: ex.label.name().to_string(),
        }
    }
}

/// Reads a JSONL dataset, optionally aligned row-by-row with the sentences of
/// a companion CoNLL-U file.
pub fn load_dataset(path: &Path, conllu: Option<&Path>) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let trees = match conllu {
        Some(p) => {
            let doc = fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
            Some(parse_conllu(&doc)?)
        }
        None => None,
    };
    parse_dataset(&text, trees.as_deref())
}

pub fn parse_dataset(text: &str, trees: Option<&[DepTree]>) -> Result<Vec<Example>> {
    let rows: Vec<(usize, &str)> =
        text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| (i + 1, l)).collect();
    if let Some(trees) = trees {
        if trees.len() != rows.len() {
            return Err(Error::Dataset {
                row: rows.len().min(trees.len()) + 1,
                msg: format!("{} dataset rows but {} CoNLL-U sentences", rows.len(), trees.len()),
            });
        }
    }
    rows.iter()
        .enumerate()
        .map(|(k, &(lineno, line))| {
            let row: DatasetRow = serde_json::from_str(line)
                .map_err(|e| Error::Dataset { row: lineno, msg: format!("invalid JSON: {e}") })?;
            example_from_row(&row, trees.map(|t| &t[k]), lineno)
        })
        .collect()
}

fn example_from_row(row: &DatasetRow, companion: Option<&DepTree>, lineno: usize) -> Result<Example> {
    let err = |msg: String| Error::Dataset { row: lineno, msg };
    let n = row.tokens.len();

    let inline = match (&row.heads, &row.deprels) {
        (Some(h), Some(d)) => {
            if h.len() != n || d.len() != n {
                return Err(err(format!("token count mismatch: {n} tokens, {} heads, {} deprels", h.len(), d.len())));
            }
            Some(DepTree::from_columns(&row.tokens, h, d))
        }
        (None, None) => None,
        _ => return Err(err("heads and deprels must be given together".into())),
    };

    let tree = match (inline, companion) {
        (Some(inline), Some(tree)) => {
            if inline != *tree {
                return Err(err("inline heads/deprels disagree with CoNLL-U sentence".into()));
            }
            inline
        }
        (Some(inline), None) => inline,
        (None, Some(tree)) => {
            if tree.len() != n {
                return Err(err(format!("token count mismatch: row has {n}, tree has {}", tree.len())));
            }
            if !tree.forms().eq(row.tokens.iter().map(String::as_str)) {
                return Err(err("tokens differ from CoNLL-U forms".into()));
            }
            tree.clone()
        }
        (None, None) => return Err(err("no heads/deprels and no CoNLL-U companion".into())),
    };
    validate_tree(&tree).map_err(|v| err(format!("invalid tree: {v}")))?;

    let [start, end] = row.aspect_span;
    if start >= end || end > n {
        return Err(err(format!("aspect span [{start}, {end}) out of bounds for {n} tokens")));
    }
    let label = Polarity::parse(&row.label).ok_or_else(|| err(format!("unknown label {:?}", row.label)))?;
    Ok(Example { tree, aspect: (start, end), label })
}

/// Serializes examples as JSONL with inline heads and deprels.
pub fn to_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(&DatasetRow::from_example(ex)).expect("row serializes"));
        out.push('\n');
    }
    out
}
