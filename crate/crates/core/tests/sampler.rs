use bart_bmm::calibration::MixPriorConfig;
use bart_bmm::dataset::{Dataset, Point};
use bart_bmm::node_model::{LeafPosterior, LeafPrior, NodeStats, NoisePrior};
use bart_bmm::sampler::{
    self, BackfitState, Ensemble, LeafPriorMode, MixPriors, MoveStats, PosteriorDraws,
    PredictionSet, SamplerConfig,
};
use bart_bmm::trees::{CutGrid, Tree, TreePriorConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn draws_from(ensembles: Vec<Vec<Tree>>, models: usize) -> PosteriorDraws {
    let n = ensembles.len();
    PosteriorDraws {
        ensembles,
        sigma2: vec![1.0; n],
        models,
        stats: MoveStats::default(),
        seed: 0,
        chains: 1,
        n_burn: 0,
        n_keep: n,
        thin: 1,
        lambda: 1.0,
        sigma2_hat: 1.0,
    }
}

fn toy_problem(n: usize, seed: u64) -> (Dataset, PredictionSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Point> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
    let means: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| vec![1.0 + x[0], 2.0 - x[0]])
        .collect();
    let y: Vec<f64> = means
        .iter()
        .map(|f| 0.3 * f[0] + 0.6 * f[1] + 0.05 * rng.random::<f64>())
        .collect();
    (
        Dataset::new(inputs, y, 0.05, seed).unwrap(),
        PredictionSet::new(means, None).unwrap(),
    )
}

#[test]
fn fixed_structure_leaf_matches_conjugate_posterior() {
    let (ds, ps) = toy_problem(15, 1);
    let beta = DVector::from_vec(vec![0.5, 0.5]);
    let prior = LeafPrior::new(beta.clone(), 0.4).unwrap();
    let sigma2 = 0.02;
    let priors = MixPriors {
        leaf: LeafPriorMode::Fixed(prior.clone()),
        noise: NoisePrior::new(3.0, 0.01).unwrap(),
        tree: TreePriorConfig::default(),
    };
    let cfg = SamplerConfig {
        structure_moves: false,
        fixed_sigma2: Some(sigma2),
        seed: 9,
        ..SamplerConfig::default()
    };
    let ens = Ensemble {
        trees: vec![Tree::root(vec![0.5, 0.5])],
        sigma2,
    };
    let grid = CutGrid::from_inputs(&ds.inputs, 100).unwrap();
    let mut state =
        BackfitState::new(&ds.inputs, &ds.outputs, &ps, grid, priors, ens, &cfg).unwrap();

    let mut stats = NodeStats::zeros(2);
    for (f, y) in ps.means.iter().zip(&ds.outputs) {
        stats.push(f, *y);
    }
    let exact = LeafPosterior::from_stats(&stats, &prior, sigma2).unwrap();

    let sweeps = 20_000;
    let mut sum = [0.0; 2];
    for _ in 0..sweeps {
        state.gibbs_sweep().unwrap();
        let v = state.ensemble.trees[0].evaluate(&[0.0]);
        sum[0] += v[0];
        sum[1] += v[1];
    }
    for c in 0..2 {
        let mean = sum[c] / sweeps as f64;
        let se = (exact.cov[(c, c)] / sweeps as f64).sqrt();
        assert!(
            (mean - exact.mean[c]).abs() < 3.0 * se,
            "component {c}: {mean} vs {}",
            exact.mean[c]
        );
    }
}

#[test]
fn unit_weight_single_model_returns_its_prediction() {
    let draws = draws_from(vec![vec![Tree::root(vec![1.0])]; 4], 1);
    let grid: Vec<Point> = (0..5).map(|i| vec![i as f64]).collect();
    let preds: Vec<Vec<f64>> = (0..5).map(|i| vec![3.0 * i as f64 - 1.0]).collect();
    let s = sampler::predict_mixed(&draws, &grid, &preds).unwrap();
    for (b, p) in s.mean.iter().zip(&preds) {
        assert_eq!(b.mean, p[0]);
        assert_eq!(b.lo, p[0]);
        assert_eq!(b.hi, p[0]);
    }
}

#[test]
fn identical_models_are_insensitive_to_the_split() {
    let ensembles = [0.0, 0.2, 0.7, 1.0]
        .iter()
        .map(|&a| vec![Tree::root(vec![a, 1.0 - a])])
        .collect();
    let draws = draws_from(ensembles, 2);
    let grid: Vec<Point> = vec![vec![0.0], vec![1.0]];
    let preds = vec![vec![2.5, 2.5], vec![-0.75, -0.75]];
    let s = sampler::predict_mixed(&draws, &grid, &preds).unwrap();
    for (b, p) in s.mean.iter().zip(&preds) {
        assert!((b.mean - p[0]).abs() < 1e-15);
        assert!(b.width() < 1e-15);
    }
    for b in &s.weight_sum {
        assert!((b.mean - 1.0).abs() < 1e-15);
    }
}

#[test]
fn quantiles_match_sorted_order_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [1usize, 2, 7, 101, 1000] {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for p in [0.0, 0.025, 0.5, 0.975, 1.0] {
            // Linear interpolation between order statistics at position p(n-1).
            let h = p * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            let want = v[lo] + (h - lo as f64) * (v[hi] - v[lo]);
            assert!((sampler::quantile_sorted(&v, p) - want).abs() < 1e-15);
        }
    }
}

#[test]
fn misaligned_predictions_are_rejected() {
    let (ds, _) = toy_problem(10, 2);
    let short = PredictionSet::new(vec![vec![1.0, 1.0]; 9], None).unwrap();
    assert!(sampler::fit_bmm(&ds, &short, &SamplerConfig::default()).is_err());
    assert!(PredictionSet::new(vec![vec![1.0, 1.0], vec![1.0]], None).is_err());
}

#[test]
fn chains_are_reproducible_and_distinct() {
    let (ds, ps) = toy_problem(20, 3);
    let cfg = SamplerConfig {
        n_burn: 50,
        n_keep: 40,
        seed: 77,
        prior: MixPriorConfig {
            trees: 5,
            ..MixPriorConfig::default()
        },
        ..SamplerConfig::default()
    };
    let a = sampler::fit_bmm_chains(&ds, &ps, &cfg, 2).unwrap();
    let b = sampler::fit_bmm_chains(&ds, &ps, &cfg, 2).unwrap();
    assert_eq!(a.sigma2, b.sigma2);
    assert_eq!(a.len(), 80);
    assert_ne!(a.sigma2[..40], a.sigma2[40..]);
    let single = sampler::fit_bmm(&ds, &ps, &cfg).unwrap();
    assert_eq!(single.sigma2[..], a.sigma2[..40]);
}

#[test]
fn recovers_a_global_mixture() {
    let (ds, ps) = toy_problem(40, 5);
    let cfg = SamplerConfig {
        n_burn: 500,
        n_keep: 1000,
        seed: 1,
        ..SamplerConfig::default()
    };
    let draws = sampler::fit_bmm(&ds, &ps, &cfg).unwrap();
    let grid: Vec<Point> = ds.inputs.clone();
    let s = sampler::predict_mixed(&draws, &grid, &ps.means).unwrap();
    let mean: Vec<f64> = s.mean.iter().map(|b| b.mean).collect();
    assert!(sampler::rmse(&mean, &ds.outputs) < 0.05);
}

#[test]
fn informative_prior_downweights_uncertain_models() {
    // Model 0 is accurate with small variance on the left, model 1 on the right.
    let n = 30;
    let inputs: Vec<Point> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    let truth = |x: f64| (3.0 * x).sin();
    let y: Vec<f64> = inputs.iter().map(|x| truth(x[0])).collect();
    let means: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| {
            vec![
                truth(x[0]) + 2.0 * x[0] * x[0],
                truth(x[0]) + 2.0 * (1.0 - x[0]).powi(2),
            ]
        })
        .collect();
    let vars: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| vec![0.01 + 4.0 * x[0].powi(4), 0.01 + 4.0 * (1.0 - x[0]).powi(4)])
        .collect();
    let ds = Dataset::new(inputs, y, 0.0, 0).unwrap();
    let ps = PredictionSet::new(means, Some(vars)).unwrap();
    let cfg = SamplerConfig {
        prior: MixPriorConfig {
            informative: true,
            ..MixPriorConfig::default()
        },
        n_burn: 500,
        n_keep: 1000,
        seed: 3,
        ..SamplerConfig::default()
    };
    let draws = sampler::fit_bmm(&ds, &ps, &cfg).unwrap();
    let s = sampler::predict_mixed(&draws, &ds.inputs, &ps.means).unwrap();
    assert!(s.weights[0][0].mean > s.weights[1][0].mean);
    assert!(s.weights[1][n - 1].mean > s.weights[0][n - 1].mean);
    let without = PredictionSet::new(ps.means.clone(), None).unwrap();
    assert!(sampler::fit_bmm(&ds, &without, &cfg).is_err());
}
