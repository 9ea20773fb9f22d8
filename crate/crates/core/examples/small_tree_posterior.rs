//! Runs the sampler with a single tree on two points and compares how often
//! each structure is visited with its exact posterior probability.
use std::collections::BTreeMap;

use bart_bmm::node_model::{self, LeafPrior, NodeStats, NoisePrior};
use bart_bmm::sampler::{
    BackfitState, Ensemble, LeafPriorMode, MixPriors, PredictionSet, SamplerConfig,
};
use bart_bmm::trees::{self, CutGrid, NodeKind, SplitRule, Tree, TreePriorConfig};
use nalgebra::DVector;

fn main() -> bart_bmm::Result<()> {
    let inputs = vec![vec![0.2], vec![0.8]];
    let y = vec![0.3, 1.1];
    let f = vec![vec![1.0, 0.5], vec![0.8, 1.5]];
    let sigma2 = 0.25;
    let leaf = LeafPrior::new(DVector::from_vec(vec![0.5, 0.5]), 0.6)?;
    let tree_prior = TreePriorConfig::default();
    let grid = CutGrid::new(vec![vec![0.4, 0.6]])?;

    // Exact: every reachable structure, scored by prior times integrated likelihood.
    let mut candidates = vec![Tree::root(vec![0.0, 0.0])];
    for index in 0..2 {
        let mut t = Tree::root(vec![0.0, 0.0]);
        t.grow(
            0,
            SplitRule {
                var: 0,
                index,
                cut: grid.cut(0, index),
            },
        );
        candidates.push(t);
    }
    let mut exact = BTreeMap::new();
    for t in &candidates {
        let mut lp = trees::log_tree_prior(t, &tree_prior, &grid);
        for l in t.leaves() {
            let mut stats = NodeStats::zeros(2);
            for i in 0..2 {
                if t.assign_leaf(&inputs[i]) == l {
                    stats.push(&f[i], y[i]);
                }
            }
            lp += node_model::log_marginal_from_stats(&stats, &leaf, sigma2)?;
        }
        exact.insert(t.structure_key(), lp.exp());
    }
    let z: f64 = exact.values().sum();

    let ps = PredictionSet::new(f.clone(), None)?;
    let priors = MixPriors {
        leaf: LeafPriorMode::Fixed(leaf),
        noise: NoisePrior::new(3.0, 1.0)?,
        tree: tree_prior,
    };
    let cfg = SamplerConfig {
        seed: 1,
        fixed_sigma2: Some(sigma2),
        ..SamplerConfig::default()
    };
    let ens = Ensemble {
        trees: vec![Tree::root(vec![0.5, 0.5])],
        sigma2,
    };
    let mut state = BackfitState::new(&inputs, &y, &ps, grid, priors, ens, &cfg)?;
    let sweeps = 200_000;
    let mut visits: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..sweeps {
        state.gibbs_sweep()?;
        *visits
            .entry(state.ensemble.trees[0].structure_key())
            .or_default() += 1;
    }
    for (key, w) in &exact {
        let freq = *visits.get(key).unwrap_or(&0) as f64 / sweeps as f64;
        println!("{key:>8}: exact {:.4}  visited {freq:.4}", w / z);
    }
    let split = state.ensemble.trees[0].node(0);
    if let NodeKind::Internal { rule, .. } = &split.kind {
        println!("final root split at x < {}", rule.cut);
    }
    Ok(())
}
