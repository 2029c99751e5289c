use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rdgcn::checkpoint::Checkpoint;
use rdgcn::conllu::DepTree;
use rdgcn::graph::{SyntacticViews, TypeVocab};
use rdgcn::importance::{distance_adjacency, DistanceFnConfig, DistanceVariant};
use rdgcn::model::{infer, ForwardOptions, GraphInput, ModelDims, ModelParams};
use rdgcn::synthetic::{generate_corpus, SyntheticConfig};
use rdgcn::tensor::Matrix;
use rdgcn::training::{TrainConfig, Trainer};

fn permute_square<T: Copy>(m: &[Vec<T>], perm: &[usize]) -> Vec<Vec<T>> {
    perm.iter().map(|&i| perm.iter().map(|&j| m[i][j]).collect()).collect()
}

#[test]
fn logits_ignore_order_of_context_tokens() {
    //        0      1      2       3      4
    // heads: 2      0      2       5      2
    let forms = ["the", "food", "was", "really", "great"];
    let tree = DepTree::from_columns(&forms, &[2, 0, 2, 5, 2], &["det", "root", "cop", "advmod", "amod"]);
    let vocab = TypeVocab::build([&tree]);
    let views = SyntacticViews::build(&tree, &vocab, 10).unwrap();
    let dcfg = DistanceFnConfig::new(DistanceVariant::Combined, 0.5, 10).unwrap();
    let a_dis = distance_adjacency(&views.dist, &dcfg).unwrap();
    let ids = vec![3, 1, 4, 2, 5];

    let dims = ModelDims { vocab: 6, embed_dim: 4, hidden: 5, layers: 2, types: vocab.size(), classes: 3 };
    let params = ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let opts = ForwardOptions::default().without_dropout();
    let input = GraphInput {
        token_ids: &ids,
        a_dis: &a_dis,
        type_ids: &views.type_ids,
        topo: &views.topo,
        aspect: (1, 2),
        label: 2,
    };
    let base = infer(&input, &params, &opts).unwrap().logits;

    // aspect stays at position 1, every other token moves
    let perm = [4, 1, 3, 0, 2];
    let p_ids: Vec<usize> = perm.iter().map(|&i| ids[i]).collect();
    let rows: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| a_dis[(i, j)]).collect()).collect();
    let p_dis = Matrix::from_rows(&rows).unwrap();
    let p_types = permute_square(&views.type_ids, &perm);
    let p_topo = permute_square(&views.topo, &perm);
    let permuted =
        GraphInput { token_ids: &p_ids, a_dis: &p_dis, type_ids: &p_types, topo: &p_topo, aspect: (1, 2), label: 2 };
    let moved = infer(&permuted, &params, &opts).unwrap().logits;
    for (a, b) in base.iter().zip(&moved) {
        assert!((a - b).abs() < 1e-12, "{base:?} vs {moved:?}");
    }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (train, test) = generate_corpus(&SyntheticConfig { train: 150, test: 40, seed: 5, ..Default::default() });
    let cfg = TrainConfig { epochs: 4, hidden: 8, embed_dim: 8, batch_size: 16, seed: 2, ..TrainConfig::default() };

    let mut straight = Trainer::new(&train, &test, &cfg).unwrap();
    straight.run().unwrap();

    let mut first = Trainer::new(&train, &test, &TrainConfig { epochs: 2, ..cfg.clone() }).unwrap();
    first.run().unwrap();
    let text = Checkpoint::new(first.state).to_json();
    let mut state = Checkpoint::from_json(&text).unwrap().state;
    state.config.epochs = 4;
    let mut resumed = Trainer::with_state(state, &train, &test).unwrap();
    resumed.run().unwrap();

    let mut expected = straight.state.clone();
    expected.config.epochs = 4;
    assert_eq!(resumed.state, expected);
    assert_eq!(Checkpoint::new(resumed.state).to_json(), Checkpoint::new(straight.state).to_json());
}

#[test]
fn reports_are_internally_consistent() {
    let (train, test) = generate_corpus(&SyntheticConfig { train: 120, test: 60, seed: 8, ..Default::default() });
    let cfg = TrainConfig { epochs: 1, hidden: 8, embed_dim: 8, ..TrainConfig::default() };
    let t = Trainer::new(&train, &test, &cfg).unwrap();
    let r = t.evaluate_test().unwrap();
    assert_eq!(r.total(), test.len());
    assert!((r.accuracy - r.confusion_accuracy()).abs() < 1e-12);
}
