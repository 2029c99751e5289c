//! Cross-check of breadth-first tree distances against Floyd-Warshall.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{validate_tree, DepTree};
use crate::error::Result;
use crate::graph::bfs_distances;

/// All-pairs shortest paths over the undirected head edges, computed with
/// the cubic dynamic program directly from the head column.
pub fn floyd_warshall(heads: &[usize]) -> Vec<Vec<u32>> {
    let n = heads.len();
    let inf = u32::MAX / 2;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (i, &h) in heads.iter().enumerate() {
        if h > 0 {
            d[i][h - 1] = 1;
            d[h - 1][i] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Uniform random head column that passes tree validation, found by
/// rejection.
pub fn random_valid_heads<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let rels = vec!["dep"; n];
    let forms = vec!["w"; n];
    loop {
        let heads: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=n)).collect();
        if validate_tree(&DepTree::from_columns(&forms, &heads, &rels)).is_ok() {
            return heads;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub heads: Vec<usize>,
    pub i: usize,
    pub j: usize,
    pub bfs: u32,
    pub floyd_warshall: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub max_tokens: usize,
    pub trials: usize,
    pub seed: u64,
    pub compared_entries: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<Mismatch>,
}

/// Compares both algorithms on `trials` random valid trees with 1 to
/// `max_tokens` tokens. `off_by_one` adds one to a single BFS distance per
/// tree to exercise the failure path.
pub fn run_distance_oracle(max_tokens: usize, trials: usize, seed: u64, off_by_one: bool) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        OracleReport { max_tokens, trials, seed, compared_entries: 0, mismatches: 0, first_mismatch: None };
    let max_tokens = max_tokens.max(1);
    for _ in 0..trials {
        let n = rng.gen_range(1..=max_tokens);
        let heads = random_valid_heads(n, &mut rng);
        let tree = DepTree::from_columns(&vec!["w"; n], &heads, &vec!["dep"; n]);
        let mut bfs = bfs_distances(&tree)?;
        if off_by_one && n > 1 {
            bfs[0][n - 1] += 1;
        }
        let fw = floyd_warshall(&heads);
        for i in 0..n {
            for j in 0..n {
                report.compared_entries += 1;
                if bfs[i][j] != fw[i][j] {
                    report.mismatches += 1;
                    if report.first_mismatch.is_none() {
                        report.first_mismatch =
                            Some(Mismatch { heads: heads.clone(), i, j, bfs: bfs[i][j], floyd_warshall: fw[i][j] });
                    }
                }
            }
        }
    }
    Ok(report)
}
