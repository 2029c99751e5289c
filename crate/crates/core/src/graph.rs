//! Syntactic views of a dependency tree: tree distances, edge types and the
//! topology mask.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::conllu::DepTree;
use crate::error::{Error, Result};

/// Type id used on the diagonal.
pub const ROOT_TYPE_ID: usize = 0;
/// Type id for token pairs without a dependency, and for unseen labels.
pub const NONE_TYPE_ID: usize = 1;

pub const DEFAULT_DISTANCE_CAP: u32 = 10;

/// Dependency label vocabulary. Built once from training trees, then frozen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeVocab {
    labels: BTreeMap<String, usize>,
}

impl TypeVocab {
    pub fn build<'a>(trees: impl IntoIterator<Item = &'a DepTree>) -> Self {
        let set: BTreeSet<&str> = trees.into_iter().flat_map(|t| t.edges().map(|(_, _, rel)| rel)).collect();
        let labels = set.into_iter().enumerate().map(|(i, l)| (l.to_string(), i + 2)).collect();
        TypeVocab { labels }
    }

    /// Total number of type ids, including root and none.
    pub fn size(&self) -> usize {
        self.labels.len() + 2
    }

    pub fn id(&self, label: &str) -> usize {
        self.labels.get(label).copied().unwrap_or(NONE_TYPE_ID)
    }

    /// Full id map including the two reserved entries.
    pub fn to_map(&self) -> BTreeMap<String, usize> {
        let mut map = self.labels.clone();
        map.insert("<root>".into(), ROOT_TYPE_ID);
        map.insert("<none>".into(), NONE_TYPE_ID);
        map
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntacticViews {
    pub dist: Vec<Vec<u32>>,
    pub type_ids: Vec<Vec<usize>>,
    pub topo: Vec<Vec<u8>>,
}

impl SyntacticViews {
    pub fn build(tree: &DepTree, vocab: &TypeVocab, cap: u32) -> Result<Self> {
        Ok(SyntacticViews {
            dist: min_tree_distances(tree, cap)?,
            type_ids: build_type_matrix(tree, vocab),
            topo: build_topology_mask(tree),
        })
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }
}

pub(crate) fn adjacency_lists(tree: &DepTree) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); tree.len()];
    for (a, b, _) in tree.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

/// Unclipped all-pairs hop counts by breadth-first search from every token.
pub fn bfs_distances(tree: &DepTree) -> Result<Vec<Vec<u32>>> {
    let n = tree.len();
    let adj = adjacency_lists(tree);
    let mut out = vec![vec![u32::MAX; n]; n];
    let mut queue = VecDeque::with_capacity(n);
    for (src, row) in out.iter_mut().enumerate() {
        row[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if row[v] == u32::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if row.contains(&u32::MAX) {
            return Err(Error::Internal(format!("tree is disconnected from token {}", src + 1)));
        }
    }
    Ok(out)
}

/// Minimum undirected tree distances, clipped to `cap`.
pub fn min_tree_distances(tree: &DepTree, cap: u32) -> Result<Vec<Vec<u32>>> {
    if cap == 0 {
        return Err(Error::Config("distance cap must be at least 1".into()));
    }
    let mut d = bfs_distances(tree)?;
    for v in d.iter_mut().flatten() {
        *v = (*v).min(cap);
    }
    Ok(d)
}

/// Edge type ids, mirrored across the diagonal; root on the diagonal and none
/// everywhere else.
pub fn build_type_matrix(tree: &DepTree, vocab: &TypeVocab) -> Vec<Vec<usize>> {
    let n = tree.len();
    let mut m = vec![vec![NONE_TYPE_ID; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ROOT_TYPE_ID;
    }
    for (a, b, rel) in tree.edges() {
        let id = vocab.id(rel);
        m[a][b] = id;
        m[b][a] = id;
    }
    m
}

pub fn build_topology_mask(tree: &DepTree) -> Vec<Vec<u8>> {
    let n = tree.len();
    let mut m = vec![vec![0u8; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1;
    }
    for (a, b, _) in tree.edges() {
        m[a][b] = 1;
        m[b][a] = 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> DepTree {
        let forms: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let heads: Vec<usize> = (0..n).collect();
        let rels = vec!["dep"; n];
        DepTree::from_columns(&forms, &heads, &rels)
    }

    #[test]
    fn path_distances() {
        let d = min_tree_distances(&path(4), 10).unwrap();
        assert_eq!(d[0][3], 3);
        assert_eq!(d[3][0], 3);
        for i in 0..4 {
            assert_eq!(d[i][i], 0);
        }
    }

    #[test]
    fn clipping_at_cap() {
        let d = min_tree_distances(&path(12), 10).unwrap();
        assert_eq!(bfs_distances(&path(12)).unwrap()[0][11], 11);
        assert_eq!(d[0][11], 10);
        assert_eq!(d[0][10], 10);
        assert_eq!(d[0][9], 9);
        assert!(min_tree_distances(&path(3), 0).is_err());
    }

    #[test]
    fn disconnected_is_internal_error() {
        let t = DepTree::from_columns(&["a", "b"], &[0, 0], &["root", "root"]);
        assert!(matches!(bfs_distances(&t), Err(Error::Internal(_))));
    }

    #[test]
    fn type_matrix_two_tokens() {
        let t = DepTree::from_columns(&["a", "b"], &[0, 1], &["root", "det"]);
        let vocab = TypeVocab::build([&t]);
        let m = build_type_matrix(&t, &vocab);
        let det = vocab.id("det");
        assert!(det >= 2);
        assert_eq!(m[0][1], det);
        assert_eq!(m[1][0], det);
        assert_eq!(m[0][0], ROOT_TYPE_ID);
        assert_eq!(m[1][1], ROOT_TYPE_ID);
        // root label never forms an edge
        assert_eq!(vocab.size(), 3);
    }

    #[test]
    fn type_matrix_none_and_unseen() {
        let t = path(4);
        let vocab = TypeVocab::build([&t]);
        let m = build_type_matrix(&t, &vocab);
        assert_eq!(m[0][2], NONE_TYPE_ID);
        assert_eq!(m[3][0], NONE_TYPE_ID);

        let other = DepTree::from_columns(&["a", "b"], &[0, 1], &["root", "never-seen"]);
        let m = build_type_matrix(&other, &vocab);
        assert_eq!(m[0][1], NONE_TYPE_ID);
    }

    #[test]
    fn topology_mask() {
        let t = DepTree::from_columns(&["a", "b"], &[0, 1], &["root", "det"]);
        assert_eq!(build_topology_mask(&t), vec![vec![1, 1], vec![1, 1]]);

        let m = build_topology_mask(&path(4));
        for i in 0..4usize {
            for j in 0..4 {
                let expected = u8::from(i.abs_diff(j) <= 1);
                assert_eq!(m[i][j], expected, "({i},{j})");
            }
        }
        let row_sums: Vec<u32> = m.iter().map(|r| r.iter().map(|&x| x as u32).sum()).collect();
        assert_eq!(row_sums, vec![2, 3, 3, 2]);
    }
}
