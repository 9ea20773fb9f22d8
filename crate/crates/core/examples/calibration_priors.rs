//! Prior calibration for Example 1a: leaf priors and the σ² prior scale.
use std::path::Path;

use bart_bmm::calibration::{self, MatchMoment};
use bart_bmm::config::ExperimentConfig;
use bart_bmm::experiment;

fn main() -> bart_bmm::Result<()> {
    let cfg = ExperimentConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example1a.toml"),
    )?;
    let m = cfg.mix.trees;
    let k = cfg.mix.k;

    let leaf = calibration::noninformative_leaf_prior(2, m, k)?;
    println!(
        "non-informative: beta = {:?}, tau = {:.5}",
        leaf.mean.as_slice(),
        leaf.sd
    );
    println!(
        "  induced w(x) ~ N(0.5, {:.4}^2)",
        leaf.sd * (m as f64).sqrt()
    );
    println!(
        "informative: tau = {:.5}",
        calibration::informative_tau(m, k)?
    );

    let ds = experiment::build_dataset(&cfg)?;
    let grid = experiment::eval_grid(&cfg)?;
    let models = experiment::fit_models(&cfg, &ds, &grid)?;
    let preds: Vec<Vec<f64>> = models.train.iter().map(|p| p.mean.clone()).collect();
    for nu in [3.0, 10.0] {
        for matching in [MatchMoment::Mean, MatchMoment::Mode] {
            let c = calibration::calibrate_sigma2_prior(&preds, &ds.outputs, nu, matching)?;
            println!(
                "nu={nu:>4}, {matching:?}: sigma2_hat = {:.3e}, lambda = {:.3e}",
                c.sigma2_hat, c.lambda
            );
        }
    }

    let ps = models.training_set()?;
    if let Some(vars) = &ps.variances {
        for i in [0, ds.len() / 2, ds.len() - 1] {
            let w = calibration::precision_weights(&vars[i])?;
            println!("x = {:.3}: precision weights {:?}", ds.inputs[i][0], w);
        }
    }
    Ok(())
}
