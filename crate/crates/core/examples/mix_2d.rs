//! Two-dimensional mixing of Taylor-series simulators of sin(x1) + cos(x2).
//! Prints the posterior mean of w_2 as a character map (top row is x2 = π).
use std::path::Path;

use bart_bmm::config::ExperimentConfig;
use bart_bmm::experiment;

fn main() -> bart_bmm::Result<()> {
    let cfg = ExperimentConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example2.toml"),
    )?;
    let run = experiment::run_mix(&cfg, cfg.mix.chains)?;
    println!("rmse {:.4}", run.metrics.rmse);
    let n1 = cfg.eval.n[0];
    let n2 = cfg.eval.n[1];
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for j in (0..n2).rev() {
        let row: String = (0..n1)
            .map(|i| {
                // The first coordinate varies slowest in the grid.
                let w = run.summary.weights[1][i * n2 + j].mean.clamp(0.0, 0.999);
                shades[(w * shades.len() as f64) as usize]
            })
            .collect();
        println!("|{row}|");
    }
    Ok(())
}
