//! Seeded synthetic corpus where tree distance decides the label.
//!
//! Every sentence has one aspect word, one opinion word adjacent to it in the
//! tree and a distractor opinion of a different polarity at tree distance of
//! at least four. A model that weights close tokens more heavily than far
//! ones can recover the label; one that treats all tokens alike cannot.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::DepTree;
use crate::dataset::{Example, Polarity};
use crate::graph::bfs_distances;

const ASPECTS: &[&str] =
    &["food", "service", "staff", "battery", "screen", "price", "menu", "keyboard", "wine", "decor"];
const POSITIVE: &[&str] = &["great", "excellent", "delicious", "friendly", "amazing", "superb"];
const NEGATIVE: &[&str] = &["dreadful", "terrible", "awful", "rude", "bland", "slow"];
const NEUTRAL: &[&str] = &["average", "ordinary", "standard", "typical", "usual", "plain"];
const FILLERS: &[&str] = &[
    "the", "a", "was", "but", "and", "is", "it", "very", "of", "to", "we", "our", "there", "this", "that", "with",
    "for", "on", "in", "at",
];
const FILLER_RELS: &[&str] = &["det", "case", "nmod", "obj", "advmod", "conj", "cc", "punct", "obl", "mark"];

pub const MIN_DISTRACTOR_DISTANCE: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub train: usize,
    pub test: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { train: 2000, test: 500, min_tokens: 5, max_tokens: 12, seed: 0 }
    }
}

/// Head column (1-based, 0 for the root) of a uniformly attached random
/// tree over `n` positions.
pub fn random_tree_heads<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        heads[order[k]] = parent + 1;
    }
    heads
}

fn words(p: Polarity) -> &'static [&'static str] {
    match p {
        Polarity::Negative => NEGATIVE,
        Polarity::Neutral => NEUTRAL,
        Polarity::Positive => POSITIVE,
    }
}

/// One sentence with the planted aspect/opinion/distractor structure.
pub fn generate_example<R: Rng + ?Sized>(cfg: &SyntheticConfig, rng: &mut R) -> Example {
    let min = cfg.min_tokens.max(5);
    let max = cfg.max_tokens.max(min);
    loop {
        let n = rng.gen_range(min..=max);
        let heads = random_tree_heads(n, rng);
        let tree = DepTree::from_columns(&vec![""; n], &heads, &vec![""; n]);
        let dist = bfs_distances(&tree).expect("generated tree is connected");

        let mut triples = Vec::new();
        for a in 0..n {
            for o in 0..n {
                if dist[a][o] != 1 {
                    continue;
                }
                for d in 0..n {
                    if dist[a][d] >= MIN_DISTRACTOR_DISTANCE {
                        triples.push((a, o, d));
                    }
                }
            }
        }
        let Some(&(aspect, opinion, distractor)) = triples.choose(rng) else {
            continue;
        };

        let label = Polarity::ALL[rng.gen_range(0..3)];
        let other = match label {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
            Polarity::Neutral => *[Polarity::Negative, Polarity::Positive].choose(rng).unwrap(),
        };

        let mut forms: Vec<&str> = (0..n).map(|_| *FILLERS.choose(rng).unwrap()).collect();
        forms[aspect] = ASPECTS.choose(rng).unwrap();
        forms[opinion] = words(label).choose(rng).unwrap();
        forms[distractor] = words(other).choose(rng).unwrap();

        let mut rels: Vec<&str> = (0..n).map(|_| *FILLER_RELS.choose(rng).unwrap()).collect();
        for (i, rel) in rels.iter_mut().enumerate() {
            if heads[i] == 0 {
                *rel = "root";
            }
        }
        for w in [opinion, distractor] {
            if heads[w] != 0 {
                rels[w] = "amod";
            }
        }
        if heads[aspect] == opinion + 1 {
            rels[aspect] = "nsubj";
        }

        return Example { tree: DepTree::from_columns(&forms, &heads, &rels), aspect: (aspect, aspect + 1), label };
    }
}

/// Train and test splits drawn from one seeded stream.
pub fn generate_corpus(cfg: &SyntheticConfig) -> (Vec<Example>, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = (0..cfg.train).map(|_| generate_example(cfg, &mut rng)).collect();
    let test = (0..cfg.test).map(|_| generate_example(cfg, &mut rng)).collect();
    (train, test)
}
