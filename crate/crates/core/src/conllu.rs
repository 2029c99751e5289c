//! CoNLL-U reading and dependency tree validation.
//!
//! Only the ID, FORM, HEAD and DEPREL columns are retained. Multiword token
//! ranges (`3-4`) and empty nodes (`5.1`) are skipped, so a [`DepTree`] holds
//! exactly the single-ID rows of a sentence block.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    /// Index of the governor, 0 for the virtual root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepTree {
    pub tokens: Vec<Token>,
}

impl DepTree {
    /// Builds a tree from parallel columns. Indices are assigned 1..=N.
    /// The result is not validated; see [`validate_tree`].
    pub fn from_columns<S: AsRef<str>, R: AsRef<str>>(forms: &[S], heads: &[usize], deprels: &[R]) -> Self {
        let tokens = forms
            .iter()
            .zip(heads)
            .zip(deprels)
            .enumerate()
            .map(|(i, ((form, &head), deprel))| Token {
                index: i + 1,
                form: form.as_ref().to_string(),
                head,
                deprel: deprel.as_ref().to_string(),
            })
            .collect();
        DepTree { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }

    /// 0-based position of the token attached to the virtual root.
    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t.head == 0)
    }

    /// Undirected edges between real tokens as 0-based `(child, head)` pairs,
    /// with the label of the child. The edge to the virtual root is dropped.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &str)> {
        self.tokens.iter().enumerate().filter(|(_, t)| t.head != 0).map(|(i, t)| (i, t.head - 1, t.deprel.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeViolation {
    Empty,
    IndexMismatch { position: usize, index: usize },
    HeadOutOfRange { token: usize, head: usize },
    SelfLoop { token: usize },
    Cycle { token: usize },
    NoRoot,
    MultipleRoots { count: usize },
    Disconnected,
}

impl TreeViolation {
    /// Short stable name of the violation kind.
    pub fn kind(&self) -> &'static str {
        match self {
            TreeViolation::Empty => "empty",
            TreeViolation::IndexMismatch { .. } => "index mismatch",
            TreeViolation::HeadOutOfRange { .. } => "head out of range",
            TreeViolation::SelfLoop { .. } => "self loop",
            TreeViolation::Cycle { .. } => "cycle",
            TreeViolation::NoRoot => "no root",
            TreeViolation::MultipleRoots { .. } => "multiple roots",
            TreeViolation::Disconnected => "disconnected",
        }
    }
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeViolation::Empty | TreeViolation::NoRoot | TreeViolation::Disconnected => f.write_str(self.kind()),
            TreeViolation::IndexMismatch { position, index } => {
                write!(f, "index mismatch: row {position} has ID {index}")
            }
            TreeViolation::HeadOutOfRange { token, head } => {
                write!(f, "head out of range: token {token} has head {head}")
            }
            TreeViolation::SelfLoop { token } => write!(f, "self loop at token {token}"),
            TreeViolation::Cycle { token } => write!(f, "cycle through token {token}"),
            TreeViolation::MultipleRoots { count } => write!(f, "multiple roots ({count})"),
        }
    }
}

impl std::error::Error for TreeViolation {}

/// Checks that the head column describes a single-rooted tree over the
/// tokens. Returns the first violation found.
///
/// Cycles are reported before root counting, so a head column like `[2, 1]`
/// reports a cycle rather than a missing root.
pub fn validate_tree(tree: &DepTree) -> Result<(), TreeViolation> {
    let n = tree.len();
    if n == 0 {
        return Err(TreeViolation::Empty);
    }
    for (pos, tok) in tree.tokens.iter().enumerate() {
        if tok.index != pos + 1 {
            return Err(TreeViolation::IndexMismatch { position: pos + 1, index: tok.index });
        }
        if tok.head > n {
            return Err(TreeViolation::HeadOutOfRange { token: tok.index, head: tok.head });
        }
        if tok.head == tok.index {
            return Err(TreeViolation::SelfLoop { token: tok.index });
        }
    }

    // Walk up from every token; a walk longer than N steps revisits a node.
    for start in 0..n {
        let mut cur = start;
        let mut steps = 0;
        while tree.tokens[cur].head != 0 {
            cur = tree.tokens[cur].head - 1;
            steps += 1;
            if steps > n {
                return Err(TreeViolation::Cycle { token: start + 1 });
            }
        }
    }

    let roots = tree.tokens.iter().filter(|t| t.head == 0).count();
    match roots {
        0 => return Err(TreeViolation::NoRoot),
        1 => {}
        count => return Err(TreeViolation::MultipleRoots { count }),
    }

    let mut sets = DisjointSets::new(n);
    let mut edges = 0;
    for (a, b, _) in tree.edges() {
        sets.union(a, b);
        edges += 1;
    }
    if edges != n - 1 || sets.components() != 1 {
        return Err(TreeViolation::Disconnected);
    }
    Ok(())
}

pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    count: usize,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), count: n }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        self.count -= 1;
        true
    }

    pub(crate) fn components(&self) -> usize {
        self.count
    }
}

/// Parses a CoNLL-U document into validated dependency trees, one per
/// sentence block.
pub fn parse_conllu(text: &str) -> Result<Vec<DepTree>> {
    let mut trees = Vec::new();
    let mut current: Vec<Token> = Vec::new();

    let finish = |tokens: &mut Vec<Token>, trees: &mut Vec<DepTree>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let tree = DepTree { tokens: std::mem::take(tokens) };
        validate_tree(&tree).map_err(|violation| Error::InvalidTree { sentence: trees.len() + 1, violation })?;
        trees.push(tree);
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            finish(&mut current, &mut trees)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse { line: lineno, msg: format!("expected 10 columns, found {}", cols.len()) });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id.parse().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid ID {id:?}") })?;
        let head: usize =
            cols[6].parse().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid HEAD {:?}", cols[6]) })?;
        current.push(Token { index, form: cols[1].to_string(), head, deprel: cols[7].to_string() });
    }
    finish(&mut current, &mut trees)?;
    Ok(trees)
}

/// Writes trees as CoNLL-U with only the retained columns filled; all other
/// columns are `_`.
pub fn serialize_conllu(trees: &[DepTree]) -> String {
    let mut out = String::new();
    for tree in trees {
        for t in &tree.tokens {
            let _ = writeln!(out, "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_", t.index, t.form, t.head, t.deprel);
        }
        out.push('\n');
    }
    out
}
