//! Example 1b: both expansions overshoot in the middle, so the weights stop summing to one there.
use std::path::Path;

use bart_bmm::config::ExperimentConfig;
use bart_bmm::experiment;

fn main() -> bart_bmm::Result<()> {
    let cfg = ExperimentConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example1b.toml"),
    )?;
    let run = experiment::run_mix(&cfg, cfg.mix.chains)?;
    println!("rmse {:.4}", run.metrics.rmse);
    for p in (0..run.grid.len()).step_by(20) {
        let s = &run.summary.weight_sum[p];
        let bar = "#".repeat((s.mean * 40.0).max(0.0) as usize);
        println!(
            "{:.3} w_sum {:.3} [{:.3}, {:.3}] {bar}",
            run.grid[p][0], s.mean, s.lo, s.hi
        );
    }
    Ok(())
}
