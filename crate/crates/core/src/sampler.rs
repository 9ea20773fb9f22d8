//! Backfitting MCMC for sum-of-trees model mixing.
//!
//! The observation model is `y_i ~ N(f̂(x_i)ᵀ w(x_i), σ²)` where
//! `w(x) = Σ_j g(x; T_j, M_j)` and each tree contributes a K-vector per
//! leaf. One sweep visits every tree: it forms the partial residuals against
//! the other trees, makes a birth/death Metropolis–Hastings step on the tree
//! structure using the leaf-integrated likelihood, redraws every leaf vector
//! from its Gaussian full conditional, and finally redraws `σ²`.

use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::calibration::{self, MixPriorConfig};
use crate::dataset::{Dataset, Point};
use crate::error::{Error, Result};
use crate::node_model::{self, LeafPosterior, LeafPrior, NodeStats, NoisePrior};
use crate::trees::{
    self, CutGrid, MoveKind, NodeId, NodeKind, Proposal, ProposalOutcome, Tree, TreePriorConfig,
};

/// Simulator predictions `f̂_l(x_i)` (and optionally `v_l(x_i)`) at the training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Row `i` is `f̂(x_i)`, length K.
    pub means: Vec<Vec<f64>>,
    /// Row `i` is `(v_1(x_i), ..., v_K(x_i))`; needed only by the informative prior.
    pub variances: Option<Vec<Vec<f64>>>,
}

impl PredictionSet {
    pub fn new(means: Vec<Vec<f64>>, variances: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let k = means.first().map(Vec::len).unwrap_or(0);
        if means.is_empty() || k == 0 {
            return Err(Error::InvalidArgument(
                "prediction set needs at least one point and one model".into(),
            ));
        }
        if means.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension("prediction rows differ in length".into()));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "simulator predictions must be finite".into(),
            ));
        }
        if let Some(v) = &variances {
            if v.len() != means.len() || v.iter().any(|r| r.len() != k) {
                return Err(Error::Dimension(
                    "variance table does not match the mean table".into(),
                ));
            }
        }
        Ok(PredictionSet { means, variances })
    }

    /// Builds rows from per-model columns `columns[l][i]`.
    pub fn from_columns(columns: &[Vec<f64>], variances: Option<&[Vec<f64>]>) -> Result<Self> {
        let transpose = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let n = cols.first().map(Vec::len).unwrap_or(0);
            (0..n)
                .map(|i| cols.iter().map(|c| c[i]).collect())
                .collect()
        };
        if columns.iter().any(|c| c.len() != columns[0].len()) {
            return Err(Error::Dimension("model columns differ in length".into()));
        }
        PredictionSet::new(transpose(columns), variances.map(transpose))
    }

    pub fn n(&self) -> usize {
        self.means.len()
    }

    pub fn k(&self) -> usize {
        self.means[0].len()
    }

    /// Per-model columns `[l][i]`.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.k())
            .map(|l| self.means.iter().map(|r| r[l]).collect())
            .collect()
    }
}

/// The current sum-of-trees state.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub sigma2: f64,
}

/// `w(x) = Σ_j g(x; T_j, M_j)`.
pub fn evaluate_weights(trees: &[Tree], x: &[f64]) -> Vec<f64> {
    let k = trees[0].leaf_dim();
    let mut w = vec![0.0; k];
    for t in trees {
        for (acc, v) in w.iter_mut().zip(t.evaluate(x)) {
            *acc += v;
        }
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `r_i = y_i - Σ_{q≠j} f̂(x_i)ᵀ g(x_i; T_q, M_q)`, computed directly from the trees.
pub fn tree_residuals(
    j: usize,
    ens: &Ensemble,
    ps: &PredictionSet,
    inputs: &[Point],
    y: &[f64],
) -> Vec<f64> {
    inputs
        .iter()
        .zip(y)
        .zip(&ps.means)
        .map(|((x, yi), f)| {
            let others: f64 = ens
                .trees
                .iter()
                .enumerate()
                .filter(|(q, _)| *q != j)
                .map(|(_, t)| dot(f, t.evaluate(x)))
                .sum();
            yi - others
        })
        .collect()
}

/// How leaf prior means are chosen.
#[derive(Debug, Clone)]
pub enum LeafPriorMode {
    /// Same `N(β, τ²I)` in every leaf.
    Fixed(LeafPrior),
    /// `β` is the average precision weight of the leaf's members over `m`.
    Informative {
        tau: f64,
        trees: usize,
        /// Precision weights per training point.
        weights: Vec<Vec<f64>>,
    },
}

impl LeafPriorMode {
    pub fn for_members(&self, members: &[usize]) -> Result<LeafPrior> {
        match self {
            LeafPriorMode::Fixed(p) => Ok(p.clone()),
            LeafPriorMode::Informative {
                tau,
                trees,
                weights,
            } => LeafPrior::new(
                calibration::informative_leaf_mean(members, weights, *trees)?,
                *tau,
            ),
        }
    }
}

/// Everything the sampler needs beyond the data.
#[derive(Debug, Clone)]
pub struct MixPriors {
    pub leaf: LeafPriorMode,
    pub noise: NoisePrior,
    pub tree: TreePriorConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub prior: MixPriorConfig,
    pub tree_prior: TreePriorConfig,
    pub min_leaf_n: usize,
    pub n_burn: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub seed: u64,
    /// When false, trees stay fixed and only leaves and `σ²` are updated.
    pub structure_moves: bool,
    /// Holds `σ²` at this value instead of sampling it.
    pub fixed_sigma2: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            prior: MixPriorConfig::default(),
            tree_prior: TreePriorConfig::default(),
            min_leaf_n: 1,
            n_burn: 2000,
            n_keep: 5000,
            thin: 1,
            seed: 0,
            structure_moves: true,
            fixed_sigma2: None,
        }
    }
}

/// Birth/death proposal and acceptance counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub birth_proposed: u64,
    pub birth_accepted: u64,
    pub death_proposed: u64,
    pub death_accepted: u64,
    /// Proposals rejected before evaluation (e.g. an empty child).
    pub invalid: u64,
}

impl MoveStats {
    pub fn acceptance_rate(&self) -> f64 {
        let proposed = self.birth_proposed + self.death_proposed + self.invalid;
        if proposed == 0 {
            0.0
        } else {
            (self.birth_accepted + self.death_accepted) as f64 / proposed as f64
        }
    }

    fn merge(&mut self, other: &MoveStats) {
        self.birth_proposed += other.birth_proposed;
        self.birth_accepted += other.birth_accepted;
        self.death_proposed += other.death_proposed;
        self.death_accepted += other.death_accepted;
        self.invalid += other.invalid;
    }
}

/// Mutable chain state with cached leaf assignments and per-tree fits.
pub struct BackfitState<'a> {
    inputs: &'a [Point],
    y: &'a [f64],
    ps: &'a PredictionSet,
    grid: CutGrid,
    priors: MixPriors,
    min_leaf_n: usize,
    structure_moves: bool,
    fixed_sigma2: Option<f64>,
    pub ensemble: Ensemble,
    /// `assignment[j][i]` is the leaf of tree `j` holding point `i`.
    assignment: Vec<Vec<NodeId>>,
    /// `fits[j][i] = f̂(x_i)ᵀ g(x_i; T_j, M_j)`.
    fits: Vec<Vec<f64>>,
    total: Vec<f64>,
    pub stats: MoveStats,
    rng: ChaCha20Rng,
}

impl<'a> BackfitState<'a> {
    pub fn new(
        inputs: &'a [Point],
        y: &'a [f64],
        ps: &'a PredictionSet,
        grid: CutGrid,
        priors: MixPriors,
        ensemble: Ensemble,
        cfg: &SamplerConfig,
    ) -> Result<Self> {
        let n = y.len();
        if inputs.len() != n || ps.n() != n {
            return Err(Error::Dimension(format!(
                "{} inputs, {} outputs and {} prediction rows",
                inputs.len(),
                n,
                ps.n()
            )));
        }
        if ensemble.trees.is_empty() {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one tree".into(),
            ));
        }
        let mut state = BackfitState {
            inputs,
            y,
            ps,
            grid,
            priors,
            min_leaf_n: cfg.min_leaf_n,
            structure_moves: cfg.structure_moves,
            fixed_sigma2: cfg.fixed_sigma2,
            assignment: Vec::new(),
            fits: Vec::new(),
            total: vec![0.0; n],
            ensemble,
            stats: MoveStats::default(),
            rng: ChaCha20Rng::seed_from_u64(cfg.seed),
        };
        if let Some(s2) = cfg.fixed_sigma2 {
            state.ensemble.sigma2 = s2;
        }
        for j in 0..state.ensemble.trees.len() {
            let a = state.assign(&state.ensemble.trees[j]);
            state.assignment.push(a);
            let f = state.tree_fit(j);
            state.fits.push(f);
        }
        state.recompute_total();
        Ok(state)
    }

    fn assign(&self, tree: &Tree) -> Vec<NodeId> {
        self.inputs.iter().map(|x| tree.assign_leaf(x)).collect()
    }

    fn tree_fit(&self, j: usize) -> Vec<f64> {
        let tree = &self.ensemble.trees[j];
        self.assignment[j]
            .iter()
            .zip(&self.ps.means)
            .map(|(&leaf, f)| dot(f, tree.leaf_value(leaf)))
            .collect()
    }

    fn recompute_total(&mut self) {
        self.total.iter_mut().for_each(|t| *t = 0.0);
        for fit in &self.fits {
            for (t, f) in self.total.iter_mut().zip(fit) {
                *t += f;
            }
        }
    }

    pub fn grid(&self) -> &CutGrid {
        &self.grid
    }

    /// Partial residuals for tree `j` from the cached fits.
    pub fn residuals(&self, j: usize) -> Vec<f64> {
        self.y
            .iter()
            .zip(&self.total)
            .zip(&self.fits[j])
            .map(|((y, t), f)| y - (t - f))
            .collect()
    }

    fn stats_for(&self, members: &[usize], resid: &[f64]) -> NodeStats {
        let mut s = NodeStats::zeros(self.ps.k());
        for &i in members {
            s.push(&self.ps.means[i], resid[i]);
        }
        s
    }

    fn leaf_log_ml(&self, members: &[usize], resid: &[f64]) -> Result<f64> {
        let prior = self.priors.leaf.for_members(members)?;
        node_model::log_marginal_from_stats(
            &self.stats_for(members, resid),
            &prior,
            self.ensemble.sigma2,
        )
    }

    /// Log Metropolis–Hastings ratio for replacing tree `j` by `proposal.tree`.
    pub fn log_acceptance(&self, j: usize, proposal: &Proposal, resid: &[f64]) -> Result<f64> {
        let tree = &self.ensemble.trees[j];
        let assign = &self.assignment[j];
        let (before, after) = match proposal.kind {
            MoveKind::Birth => {
                let members: Vec<usize> = (0..assign.len())
                    .filter(|&i| assign[i] == proposal.node)
                    .collect();
                let (left, right) = match proposal.tree.node(proposal.node).kind {
                    NodeKind::Internal { left, right, .. } => (left, right),
                    NodeKind::Leaf(_) => unreachable!("birth turns the leaf into a split"),
                };
                let (ml, mr): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| proposal.tree.assign_leaf(&self.inputs[i]) == left);
                debug_assert!(mr
                    .iter()
                    .all(|&i| proposal.tree.assign_leaf(&self.inputs[i]) == right));
                (
                    self.leaf_log_ml(&members, resid)?,
                    self.leaf_log_ml(&ml, resid)? + self.leaf_log_ml(&mr, resid)?,
                )
            }
            MoveKind::Death => {
                let (left, right) = match tree.node(proposal.node).kind {
                    NodeKind::Internal { left, right, .. } => (left, right),
                    NodeKind::Leaf(_) => unreachable!("death collapses a split"),
                };
                let ml: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] == left).collect();
                let mr: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] == right).collect();
                let all: Vec<usize> = (0..assign.len())
                    .filter(|&i| assign[i] == left || assign[i] == right)
                    .collect();
                (
                    self.leaf_log_ml(&ml, resid)? + self.leaf_log_ml(&mr, resid)?,
                    self.leaf_log_ml(&all, resid)?,
                )
            }
        };
        Ok(after - before + proposal.log_prior_ratio + proposal.log_reverse - proposal.log_forward)
    }

    /// One structural MH step on tree `j` followed by a redraw of all its leaves.
    /// Returns whether a structural change was accepted.
    pub fn mh_tree_update(&mut self, j: usize) -> Result<bool> {
        let resid = self.residuals(j);
        let mut accepted = false;
        if self.structure_moves {
            let outcome = trees::propose(
                &self.ensemble.trees[j],
                &self.grid,
                &self.priors.tree,
                self.inputs,
                &self.assignment[j],
                self.min_leaf_n,
                &mut self.rng,
            );
            match outcome {
                ProposalOutcome::Invalid(_) => self.stats.invalid += 1,
                ProposalOutcome::Valid(p) => {
                    let log_ratio = self.log_acceptance(j, &p, &resid)?;
                    let is_birth = p.kind == MoveKind::Birth;
                    if is_birth {
                        self.stats.birth_proposed += 1;
                    } else {
                        self.stats.death_proposed += 1;
                    }
                    if self.rng.random::<f64>().ln() < log_ratio {
                        accepted = true;
                        if is_birth {
                            self.stats.birth_accepted += 1;
                        } else {
                            self.stats.death_accepted += 1;
                        }
                        self.ensemble.trees[j] = p.tree;
                        self.assignment[j] = self.assign(&self.ensemble.trees[j]);
                    }
                }
            }
        }
        self.redraw_leaves(j, &resid)?;
        Ok(accepted)
    }

    fn redraw_leaves(&mut self, j: usize, resid: &[f64]) -> Result<()> {
        let leaves = self.ensemble.trees[j].leaves();
        for leaf in leaves {
            let members: Vec<usize> = (0..resid.len())
                .filter(|&i| self.assignment[j][i] == leaf)
                .collect();
            let prior = if members.is_empty() {
                // Unreachable with min_leaf_n >= 1; draw from the root prior otherwise.
                match &self.priors.leaf {
                    LeafPriorMode::Fixed(p) => p.clone(),
                    LeafPriorMode::Informative { .. } => self
                        .priors
                        .leaf
                        .for_members(&(0..resid.len()).collect::<Vec<_>>())?,
                }
            } else {
                self.priors.leaf.for_members(&members)?
            };
            let stats = self.stats_for(&members, resid);
            let post = LeafPosterior::from_stats(&stats, &prior, self.ensemble.sigma2)?;
            let draw = post.sample(&mut self.rng);
            self.ensemble.trees[j].set_leaf_value(leaf, draw.as_slice().to_vec());
        }
        let new_fit = self.tree_fit(j);
        for ((t, old), new) in self.total.iter_mut().zip(&self.fits[j]).zip(&new_fit) {
            *t += new - old;
        }
        self.fits[j] = new_fit;
        Ok(())
    }

    /// `Σ (y_i - f̂(x_i)ᵀ w(x_i))²` from the cache.
    pub fn sse(&self) -> f64 {
        self.y
            .iter()
            .zip(&self.total)
            .map(|(y, t)| (y - t).powi(2))
            .sum()
    }

    /// Same quantity recomputed by traversing every tree.
    pub fn sse_from_trees(&self) -> f64 {
        self.inputs
            .iter()
            .zip(self.y)
            .zip(&self.ps.means)
            .map(|((x, y), f)| (y - dot(f, &evaluate_weights(&self.ensemble.trees, x))).powi(2))
            .sum()
    }

    /// Updates every tree in turn, then `σ²`.
    pub fn gibbs_sweep(&mut self) -> Result<()> {
        for j in 0..self.ensemble.trees.len() {
            self.mh_tree_update(j)?;
        }
        self.recompute_total();
        if self.fixed_sigma2.is_none() {
            let sse = self.sse();
            self.ensemble.sigma2 =
                node_model::sample_sigma2(sse, self.y.len(), &self.priors.noise, &mut self.rng)?;
        }
        Ok(())
    }
}

/// Kept draws from one or more chains.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub ensembles: Vec<Vec<Tree>>,
    pub sigma2: Vec<f64>,
    pub models: usize,
    pub stats: MoveStats,
    pub seed: u64,
    pub chains: usize,
    pub n_burn: usize,
    pub n_keep: usize,
    pub thin: usize,
    /// `λ` of the variance prior actually used.
    pub lambda: f64,
    pub sigma2_hat: f64,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.ensembles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensembles.is_empty()
    }

    /// `w(x)` for every kept draw.
    pub fn weight_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.ensembles
            .iter()
            .map(|trees| evaluate_weights(trees, x))
            .collect()
    }
}

/// Builds the priors for a dataset and prediction set.
pub fn build_priors(ps: &PredictionSet, cfg: &SamplerConfig, lambda: f64) -> Result<MixPriors> {
    let m = cfg.prior.trees;
    let leaf = if cfg.prior.informative {
        let variances = ps.variances.as_ref().ok_or_else(|| {
            Error::InvalidArgument("informative prior needs simulator variances".into())
        })?;
        let weights = variances
            .iter()
            .map(|v| calibration::precision_weights(v))
            .collect::<Result<Vec<_>>>()?;
        LeafPriorMode::Informative {
            tau: calibration::informative_tau(m, cfg.prior.k)?,
            trees: m,
            weights,
        }
    } else {
        LeafPriorMode::Fixed(calibration::noninformative_leaf_prior(
            ps.k(),
            m,
            cfg.prior.k,
        )?)
    };
    Ok(MixPriors {
        leaf,
        noise: NoisePrior::new(cfg.prior.nu, lambda)?,
        tree: cfg.tree_prior,
    })
}

fn run_chain(
    ds: &Dataset,
    ps: &PredictionSet,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<PosteriorDraws> {
    let columns = ps.columns();
    let calib = calibration::calibrate_sigma2_prior(
        &columns,
        &ds.outputs,
        cfg.prior.nu,
        cfg.prior.matching,
    )?;
    let lambda = cfg.prior.lambda.unwrap_or(calib.lambda);
    let priors = build_priors(ps, cfg, lambda)?;
    let grid = CutGrid::from_inputs(&ds.inputs, cfg.tree_prior.cutpoints_per_dim)?;

    let sigma2 = if calib.degenerate {
        lambda
    } else {
        calib.sigma2_hat
    };
    let root_value = initial_root_value(ps, &ds.outputs, &priors, cfg.prior.trees, sigma2)?;
    let ensemble = Ensemble {
        trees: (0..cfg.prior.trees)
            .map(|_| Tree::root(root_value.clone()))
            .collect(),
        sigma2,
    };
    let chain_cfg = SamplerConfig {
        seed,
        ..cfg.clone()
    };
    let mut state = BackfitState::new(
        &ds.inputs,
        &ds.outputs,
        ps,
        grid,
        priors,
        ensemble,
        &chain_cfg,
    )?;

    for _ in 0..cfg.n_burn {
        state.gibbs_sweep()?;
    }
    let mut ensembles = Vec::with_capacity(cfg.n_keep);
    let mut sigma2 = Vec::with_capacity(cfg.n_keep);
    for _ in 0..cfg.n_keep {
        for _ in 0..cfg.thin {
            state.gibbs_sweep()?;
        }
        ensembles.push(state.ensemble.trees.clone());
        sigma2.push(state.ensemble.sigma2);
    }
    Ok(PosteriorDraws {
        ensembles,
        sigma2,
        models: ps.k(),
        stats: state.stats,
        seed,
        chains: 1,
        n_burn: cfg.n_burn,
        n_keep: cfg.n_keep,
        thin: cfg.thin,
        lambda,
        sigma2_hat: calib.sigma2_hat,
    })
}

/// Starting leaf value shared by all `m` root-only trees: `1/m` of the
/// posterior mean of a single global weight vector under the prior that the
/// ensemble induces on `w(x)`, i.e. `N(mβ, mτ²I)`.
///
/// Starting every tree at the prior mean instead lets the first tree absorb the
/// whole correction wherever a simulator is huge, and single-tree updates
/// cannot spread it back out because the sum is pinned by the likelihood.
pub fn initial_root_value(
    ps: &PredictionSet,
    y: &[f64],
    priors: &MixPriors,
    m: usize,
    sigma2: f64,
) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..y.len()).collect();
    let leaf = priors.leaf.for_members(&all)?;
    let mf = m as f64;
    let induced = LeafPrior::new(&leaf.mean * mf, leaf.sd * mf.sqrt())?;
    let mut stats = NodeStats::zeros(ps.k());
    for (f, yi) in ps.means.iter().zip(y) {
        stats.push(f, *yi);
    }
    let post = LeafPosterior::from_stats(&stats, &induced, sigma2)?;
    Ok(post.mean.iter().map(|w| w / mf).collect())
}

/// Seed for chain `c` derived from the run seed.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    seed.wrapping_add((chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs the sampler on `(dataset, predictions)` and returns the kept draws.
pub fn fit_bmm(ds: &Dataset, ps: &PredictionSet, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    fit_bmm_chains(ds, ps, cfg, 1)
}

/// Runs `chains` independent chains in parallel and concatenates their draws in chain order.
pub fn fit_bmm_chains(
    ds: &Dataset,
    ps: &PredictionSet,
    cfg: &SamplerConfig,
    chains: usize,
) -> Result<PosteriorDraws> {
    if ps.n() != ds.len() {
        return Err(Error::Dimension(format!(
            "{} prediction rows for {} observations",
            ps.n(),
            ds.len()
        )));
    }
    cfg.prior.validate()?;
    cfg.tree_prior.validate()?;
    if cfg.n_keep == 0 || cfg.thin == 0 {
        return Err(Error::InvalidArgument(
            "n_keep and thin must be positive".into(),
        ));
    }
    if cfg.min_leaf_n == 0 {
        return Err(Error::InvalidArgument(
            "min_leaf_n must be at least 1".into(),
        ));
    }
    let chains = chains.max(1);
    let results: Vec<Result<PosteriorDraws>> = if chains == 1 {
        vec![run_chain(ds, ps, cfg, cfg.seed)]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = (0..chains)
                .map(|c| s.spawn(move || run_chain(ds, ps, cfg, chain_seed(cfg.seed, c))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        })
    };
    let mut iter = results.into_iter();
    let mut merged = iter.next().expect("at least one chain")?;
    merged.seed = cfg.seed;
    for r in iter {
        let d = r?;
        merged.ensembles.extend(d.ensembles);
        merged.sigma2.extend(d.sigma2);
        merged.stats.merge(&d.stats);
        merged.chains += 1;
    }
    Ok(merged)
}

/// Linear-interpolation quantile of sorted data (`p` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior mean and central 95% interval of a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn from_samples(mut samples: Vec<f64>) -> Band {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        samples.sort_by(f64::total_cmp);
        Band {
            mean,
            lo: quantile_sorted(&samples, 0.025),
            hi: quantile_sorted(&samples, 0.975),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Pointwise summaries over a prediction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSummary {
    pub grid: Vec<Point>,
    /// `f̂(x)ᵀ w(x)`
    pub mean: Vec<Band>,
    /// `weights[l][p]` summarizes `w_l` at grid point `p`.
    pub weights: Vec<Vec<Band>>,
    /// `Σ_l w_l(x)`
    pub weight_sum: Vec<Band>,
}

fn summarize_point(draws: &PosteriorDraws, x: &[f64], f: &[f64]) -> (Band, Vec<Band>, Band) {
    let k = draws.models;
    let trace = draws.weight_trace(x);
    let mixed: Vec<f64> = trace.iter().map(|w| dot(f, w)).collect();
    let sums: Vec<f64> = trace.iter().map(|w| w.iter().sum()).collect();
    let per_model = (0..k)
        .map(|l| Band::from_samples(trace.iter().map(|w| w[l]).collect()))
        .collect();
    (
        Band::from_samples(mixed),
        per_model,
        Band::from_samples(sums),
    )
}

/// Posterior summaries of the mixed mean, each weight and the weight sum on `grid`.
///
/// `grid_means[p]` is `f̂(x_p)` at `grid[p]`.
pub fn predict_mixed(
    draws: &PosteriorDraws,
    grid: &[Point],
    grid_means: &[Vec<f64>],
) -> Result<MixedSummary> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument(
            "no posterior draws to summarize".into(),
        ));
    }
    if grid.len() != grid_means.len() {
        return Err(Error::Dimension(format!(
            "{} grid points but {} prediction rows",
            grid.len(),
            grid_means.len()
        )));
    }
    if grid_means.iter().any(|r| r.len() != draws.models) {
        return Err(Error::Dimension(format!(
            "grid predictions must have {} models",
            draws.models
        )));
    }
    let workers = thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(grid.len().max(1));
    let chunk = grid.len().div_ceil(workers);
    let points: Vec<(Band, Vec<Band>, Band)> = thread::scope(|s| {
        let handles: Vec<_> = grid
            .chunks(chunk)
            .zip(grid_means.chunks(chunk))
            .map(|(xs, fs)| {
                s.spawn(move || {
                    xs.iter()
                        .zip(fs)
                        .map(|(x, f)| summarize_point(draws, x, f))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("summary thread panicked"))
            .collect()
    });

    let mut mean = Vec::with_capacity(grid.len());
    let mut weights = vec![Vec::with_capacity(grid.len()); draws.models];
    let mut weight_sum = Vec::with_capacity(grid.len());
    for (m, w, s) in points {
        mean.push(m);
        for (l, b) in w.into_iter().enumerate() {
            weights[l].push(b);
        }
        weight_sum.push(s);
    }
    Ok(MixedSummary {
        grid: grid.to_vec(),
        mean,
        weights,
        weight_sum,
    })
}

/// Root-mean-square difference between two curves.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
