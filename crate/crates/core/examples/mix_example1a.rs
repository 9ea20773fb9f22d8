//! Mixes the 2nd-order weak and 4th-order strong expansions (Example 1a).
//!
//! Pass a different config path as the first argument to reuse this driver.
use std::path::{Path, PathBuf};

use bart_bmm::config::ExperimentConfig;
use bart_bmm::experiment;

fn main() -> bart_bmm::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example1a.toml"));
    let cfg = ExperimentConfig::load(&path)?;
    let run = experiment::run_mix(&cfg, cfg.mix.chains)?;
    let names = run.models.names();
    println!(
        "{}: rmse {:.4}, sigma2 mean {:.3e}",
        cfg.name, run.metrics.rmse, run.metrics.sigma2_mean
    );
    println!(
        "{:>6} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "x", "mean", "truth", names[0], names[1], "w_sum"
    );
    for p in (0..run.grid.len()).step_by(25) {
        println!(
            "{:>6.3} {:>9.4} {:>9.4} {:>9.3} {:>9.3} {:>9.3}",
            run.grid[p][0],
            run.summary.mean[p].mean,
            run.truth[p],
            run.summary.weights[0][p].mean,
            run.summary.weights[1][p].mean,
            run.summary.weight_sum[p].mean
        );
    }
    Ok(())
}
