use bart_bmm::dataset::Point;
use bart_bmm::trees::{self, CutGrid, ProposalOutcome, Tree, TreePriorConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_grid(dims: usize, per_dim: usize) -> CutGrid {
    CutGrid::new(
        (0..dims)
            .map(|_| {
                (1..=per_dim)
                    .map(|i| i as f64 / (per_dim + 1) as f64)
                    .collect()
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn prior_draws_are_small_trees() {
    let cfg = TreePriorConfig::default();
    let grid = unit_grid(1, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20_000;
    let mut leaves = 0usize;
    let mut deep = 0usize;
    for _ in 0..n {
        let t = trees::sample_prior_tree(&cfg, &grid, &[0.0], &mut rng);
        leaves += t.n_leaves();
        if t.max_depth() > 3 {
            deep += 1;
        }
    }
    let mean = leaves as f64 / n as f64;
    assert!((2.0..=4.0).contains(&mean), "mean leaves {mean}");
    assert!((deep as f64 / n as f64) < 0.05);
}

#[test]
fn prior_density_matches_sampling_frequency() {
    // Root-only trees occur with probability 1 - α.
    let cfg = TreePriorConfig::default();
    let grid = unit_grid(2, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 50_000;
    let roots = (0..n)
        .filter(|_| trees::sample_prior_tree(&cfg, &grid, &[0.0], &mut rng).n_leaves() == 1)
        .count();
    let f = roots as f64 / n as f64;
    assert!((f - 0.05).abs() < 0.005, "{f}");
    let root = Tree::root(vec![0.0]);
    assert!((trees::log_tree_prior(&root, &cfg, &grid).exp() - 0.05).abs() < 1e-15);
}

#[test]
fn every_point_lands_in_exactly_one_leaf() {
    let cfg = TreePriorConfig {
        split_base: 0.99,
        split_power: 0.5,
        ..TreePriorConfig::default()
    };
    let grid = unit_grid(3, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let t = trees::sample_prior_tree(&cfg, &grid, &[1.0, 2.0], &mut rng);
        let leaves = t.leaves();
        for _ in 0..50 {
            let x: Point = (0..3).map(|_| rng.random::<f64>()).collect();
            let leaf = t.assign_leaf(&x);
            assert_eq!(leaves.iter().filter(|&&l| l == leaf).count(), 1);
        }
    }
}

#[test]
fn encoding_round_trips() {
    let cfg = TreePriorConfig::default();
    let grid = unit_grid(2, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let t = trees::sample_prior_tree(&cfg, &grid, &[0.125, -3.5], &mut rng);
        let back = Tree::decode(&t.encode()).unwrap();
        assert!(back.same_structure(&t));
        let x = vec![rng.random::<f64>(), rng.random::<f64>()];
        assert_eq!(back.evaluate(&x), t.evaluate(&x));
    }
}

proptest! {
    #[test]
    fn birth_then_death_restores_structure(seed in 0u64..500) {
        let cfg = TreePriorConfig::default();
        let grid = unit_grid(1, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Point> = (0..30).map(|_| vec![rng.random::<f64>()]).collect();
        let tree = trees::sample_prior_tree(&cfg, &grid, &[0.0], &mut rng);
        let assignment: Vec<_> = inputs.iter().map(|x| tree.assign_leaf(x)).collect();
        if let ProposalOutcome::Valid(b) = trees::propose_birth(&tree, &grid, &cfg, &inputs, &assignment, 1, &mut rng) {
            // The reverse of this birth is the death of the node just split.
            let mut back = b.tree.clone();
            back.prune(b.node, vec![0.0]);
            prop_assert!(back.same_structure(&tree));
            prop_assert!((b.log_prior_ratio - (trees::log_tree_prior(&b.tree, &cfg, &grid) - trees::log_tree_prior(&tree, &cfg, &grid))).abs() < 1e-12);
            for (x, &a) in inputs.iter().zip(&assignment) {
                let leaf = b.tree.assign_leaf(x);
                if a != b.node {
                    prop_assert_eq!(leaf, a);
                }
            }
        }
    }

    #[test]
    fn births_respect_min_leaf_size(seed in 0u64..300, min_leaf in 1usize..6) {
        let cfg = TreePriorConfig::default();
        let grid = unit_grid(1, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Point> = (0..25).map(|_| vec![rng.random::<f64>()]).collect();
        let tree = Tree::root(vec![0.0]);
        let assignment: Vec<_> = inputs.iter().map(|x| tree.assign_leaf(x)).collect();
        if let ProposalOutcome::Valid(b) = trees::propose_birth(&tree, &grid, &cfg, &inputs, &assignment, min_leaf, &mut rng) {
            for leaf in b.tree.leaves() {
                let count = inputs.iter().filter(|x| b.tree.assign_leaf(x) == leaf).count();
                prop_assert!(count >= min_leaf);
            }
        }
    }
}
