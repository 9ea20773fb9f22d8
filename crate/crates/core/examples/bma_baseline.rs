//! Global Bayesian model averaging on the Example 1a data: the weak
//! expansion takes essentially all the weight.
use std::path::Path;

use bart_bmm::config::ExperimentConfig;
use bart_bmm::experiment;

fn main() -> bart_bmm::Result<()> {
    let cfg = ExperimentConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/bma-fig2.toml"),
    )?;
    let bma = experiment::run_bma(&cfg)?;
    for (i, name) in bma.names.iter().enumerate() {
        println!(
            "{name:>8}: log evidence {:>12.3}, weight {:.3e}",
            bma.result.log_evidences[i], bma.result.posterior_probs[i]
        );
    }
    println!("rmse of the averaged curve: {:.4}", bma.rmse);
    Ok(())
}
