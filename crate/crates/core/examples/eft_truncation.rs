//! Fits the truncation-error model of each Example 1a expansion and prints
//! predictive means with one-sd bands.
use std::path::Path;

use bart_bmm::config::ExperimentConfig;
use bart_bmm::dataset::{points_1d, true_system_phi4};
use bart_bmm::experiment;

fn main() -> bart_bmm::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example1a.toml");
    let cfg = ExperimentConfig::load(&path)?;
    let train = experiment::training_inputs(&cfg)?;
    let grid = points_1d(&[0.05, 0.1, 0.2, 0.3, 0.4, 0.5]);
    for model in &cfg.models {
        let sim = experiment::build_simulator(model, &train)?;
        if let Some(gp) = &sim.gp {
            println!("{}: cbar2 = {:.4}, ell = {:.3}", sim.name, gp.cbar2, gp.ell);
        }
        let pred = sim.predict(&grid)?;
        for (p, x) in grid.iter().enumerate() {
            println!(
                "  x={:.2}  mean={:>10.4}  sd={:>10.4}  truth={:.4}{}",
                x[0],
                pred.mean[p],
                pred.variance[p].sqrt(),
                true_system_phi4(x[0]),
                if pred.capped[p] { "  (Q capped)" } else { "" }
            );
        }
    }
    Ok(())
}
