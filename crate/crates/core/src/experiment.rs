//! Experiment driver: config → data → simulator fits → mixing or averaging → tables.
//!
//! Every command recomputes its inputs from the config, so each one can run on
//! its own. All tables start with `# key=value` lines carrying the config hash
//! and seed, and numbers are printed with 17 significant digits so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::baselines::{self, BmaResult};
use crate::config::{derive_seed, Design, ExperimentConfig, MapChoice, ModelConfig, ModelKind};
use crate::dataset::{self, fmt_f64, Dataset, Point};
use crate::eft::{self, EftPrediction, Expansion, GpFitSettings, InputMap, Simulator};
use crate::error::{Error, Result};
use crate::node_model::NoisePrior;
use crate::sampler::{self, MixedSummary, PosteriorDraws, PredictionSet};

/// Cartesian product of evenly spaced axes; the first coordinate varies slowest.
pub fn product_grid(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Vec<Point>> {
    let axes = lo
        .iter()
        .zip(hi)
        .zip(n)
        .map(|((&a, &b), &k)| dataset::linspace_grid(a, b, k))
        .collect::<Result<Vec<_>>>()?;
    let mut points: Vec<Point> = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Training inputs implied by the data section.
pub fn training_inputs(cfg: &ExperimentConfig) -> Result<Vec<Point>> {
    let data = &cfg.data;
    match data.design {
        Design::Linspace => product_grid(&data.lo, &data.hi, &vec![data.n; data.lo.len()]),
        Design::Uniform => {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 2));
            Ok((0..data.n)
                .map(|_| {
                    data.lo
                        .iter()
                        .zip(&data.hi)
                        .map(|(&a, &b)| rng.random_range(a..b))
                        .collect()
                })
                .collect())
        }
    }
}

/// Simulated observations, or the table named by `data.file`.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    if let Some(file) = &cfg.data.file {
        let ds = dataset::read_table(file)?;
        if ds.dim() != cfg.dim() {
            return Err(Error::Config(format!(
                "{} has {} input columns but the system is {}-dimensional",
                file.display(),
                ds.dim(),
                cfg.dim()
            )));
        }
        return Ok(ds);
    }
    let system = cfg.data.system.system();
    let inputs = training_inputs(cfg)?;
    dataset::generate_observations(
        |x| system.eval(x),
        &inputs,
        cfg.data.noise_sd,
        derive_seed(cfg.seed, 0),
    )
}

pub fn eval_grid(cfg: &ExperimentConfig) -> Result<Vec<Point>> {
    product_grid(&cfg.eval.lo, &cfg.eval.hi, &cfg.eval.n)
}

fn input_map(choice: &Option<MapChoice>, default: InputMap) -> InputMap {
    match choice {
        None => default,
        Some(MapChoice::Constant(c)) => InputMap::Constant(*c),
        Some(MapChoice::Named(s)) if s == "reciprocal" => InputMap::Reciprocal,
        Some(MapChoice::Named(s)) if s == "inverse-sqrt" => InputMap::InverseSqrt,
        Some(MapChoice::Named(_)) => InputMap::Identity,
    }
}

/// Builds one simulator, fitting its truncation model on `n_c` points spanning the training inputs.
pub fn build_simulator(model: &ModelConfig, train: &[Point]) -> Result<Simulator> {
    let (expansion, q_default, yref_default) = match model.kind {
        ModelKind::Weak => (
            Expansion::weak(model.order),
            InputMap::Identity,
            InputMap::Constant(1.0),
        ),
        ModelKind::Strong => (
            Expansion::strong(model.order),
            InputMap::Reciprocal,
            InputMap::InverseSqrt,
        ),
        ModelKind::SincosTaylor => (
            Expansion::SinCosTaylor {
                sin_center: model.sin_center,
                sin_order: model.sin_order,
                cos_center: model.cos_center,
                cos_order: model.cos_order,
            },
            InputMap::Identity,
            InputMap::Constant(1.0),
        ),
    };
    let gp = if model.n_c >= 2 {
        let lo = train.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min);
        let hi = train.iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(Error::Config(format!(
                "model {}: training inputs span no interval for the design",
                model.name
            )));
        }
        let design = dataset::points_1d(&dataset::linspace_grid(lo, hi, model.n_c)?);
        Some(eft::fit_eft(
            &expansion,
            &design,
            input_map(&model.q, q_default),
            input_map(&model.yref, yref_default),
            &GpFitSettings::default(),
        )?)
    } else {
        None
    };
    Ok(Simulator {
        name: model.name.clone(),
        expansion,
        gp,
    })
}

/// Simulators with their predictions at the training inputs and on the evaluation grid.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub simulators: Vec<Simulator>,
    pub train: Vec<EftPrediction>,
    pub grid: Vec<EftPrediction>,
}

impl FittedModels {
    pub fn names(&self) -> Vec<String> {
        self.simulators.iter().map(|s| s.name.clone()).collect()
    }

    pub fn training_set(&self) -> Result<PredictionSet> {
        let means: Vec<Vec<f64>> = self.train.iter().map(|p| p.mean.clone()).collect();
        let vars: Vec<Vec<f64>> = self.train.iter().map(|p| p.variance.clone()).collect();
        let has_var = self
            .train
            .iter()
            .all(|p| p.variance.iter().all(|&v| v > 0.0));
        PredictionSet::from_columns(&means, has_var.then_some(&vars[..]))
    }

    /// Row `p` is `f̂(x_p)` on the evaluation grid.
    pub fn grid_rows(&self) -> Vec<Vec<f64>> {
        let n = self.grid[0].mean.len();
        (0..n)
            .map(|p| self.grid.iter().map(|g| g.mean[p]).collect())
            .collect()
    }
}

pub fn fit_models(cfg: &ExperimentConfig, ds: &Dataset, grid: &[Point]) -> Result<FittedModels> {
    let mut simulators = Vec::new();
    let mut train = Vec::new();
    let mut on_grid = Vec::new();
    for m in &cfg.models {
        let sim = build_simulator(m, &ds.inputs)?;
        train.push(sim.predict(&ds.inputs)?);
        on_grid.push(sim.predict(grid)?);
        simulators.push(sim);
    }
    Ok(FittedModels {
        simulators,
        train,
        grid: on_grid,
    })
}

/// Scalar diagnostics of a mixing run.
#[derive(Debug, Clone, PartialEq)]
pub struct MixMetrics {
    pub rmse: f64,
    pub coverage: f64,
    pub mean_band_width: f64,
    pub acceptance_rate: f64,
    pub sigma2_mean: f64,
    pub sigma2_lo: f64,
    pub sigma2_hi: f64,
    pub weight_sum_min: f64,
    pub weight_sum_max: f64,
}

#[derive(Debug, Clone)]
pub struct MixRun {
    pub dataset: Dataset,
    pub grid: Vec<Point>,
    pub models: FittedModels,
    pub draws: PosteriorDraws,
    pub summary: MixedSummary,
    /// True system on the grid; used only for diagnostics.
    pub truth: Vec<f64>,
    pub metrics: MixMetrics,
}

/// Runs the full mixing pipeline with `chains` parallel chains.
pub fn run_mix(cfg: &ExperimentConfig, chains: usize) -> Result<MixRun> {
    let ds = build_dataset(cfg)?;
    let grid = eval_grid(cfg)?;
    let models = fit_models(cfg, &ds, &grid)?;
    let ps = models.training_set()?;
    let draws = sampler::fit_bmm_chains(&ds, &ps, &cfg.sampler_config(), chains)?;
    let summary = sampler::predict_mixed(&draws, &grid, &models.grid_rows())?;

    let system = cfg.data.system.system();
    let truth: Vec<f64> = grid.iter().map(|x| system.eval(x)).collect();
    let mean: Vec<f64> = summary.mean.iter().map(|b| b.mean).collect();
    let covered = summary
        .mean
        .iter()
        .zip(&truth)
        .filter(|(b, t)| b.lo <= **t && **t <= b.hi)
        .count();
    let s2 = sampler::Band::from_samples(draws.sigma2.clone());
    let sums: Vec<f64> = summary.weight_sum.iter().map(|b| b.mean).collect();
    let metrics = MixMetrics {
        rmse: sampler::rmse(&mean, &truth),
        coverage: covered as f64 / grid.len() as f64,
        mean_band_width: summary.mean.iter().map(|b| b.width()).sum::<f64>() / grid.len() as f64,
        acceptance_rate: draws.stats.acceptance_rate(),
        sigma2_mean: s2.mean,
        sigma2_lo: s2.lo,
        sigma2_hi: s2.hi,
        weight_sum_min: sums.iter().copied().fold(f64::INFINITY, f64::min),
        weight_sum_max: sums.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(MixRun {
        dataset: ds,
        grid,
        models,
        draws,
        summary,
        truth,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct BmaRun {
    pub result: BmaResult,
    pub names: Vec<String>,
    pub grid: Vec<Point>,
    pub truth: Vec<f64>,
    pub rmse: f64,
}

/// Global-weight averaging of the configured models, with the variance prior calibrated as for mixing.
pub fn run_bma(cfg: &ExperimentConfig) -> Result<BmaRun> {
    let ds = build_dataset(cfg)?;
    let grid = eval_grid(cfg)?;
    let models = fit_models(cfg, &ds, &grid)?;
    let train: Vec<Vec<f64>> = models.train.iter().map(|p| p.mean.clone()).collect();
    let on_grid: Vec<Vec<f64>> = models.grid.iter().map(|p| p.mean.clone()).collect();
    let sc = cfg.sampler_config();
    let lambda = match sc.prior.lambda {
        Some(l) => l,
        None => {
            crate::calibration::calibrate_sigma2_prior(
                &train,
                &ds.outputs,
                sc.prior.nu,
                sc.prior.matching,
            )?
            .lambda
        }
    };
    let result = baselines::fit_bma(
        &ds.outputs,
        &train,
        &on_grid,
        &NoisePrior::new(sc.prior.nu, lambda)?,
    )?;
    let system = cfg.data.system.system();
    let truth: Vec<f64> = grid.iter().map(|x| system.eval(x)).collect();
    let rmse = sampler::rmse(&result.mean, &truth);
    Ok(BmaRun {
        result,
        names: models.names(),
        grid,
        truth,
        rmse,
    })
}

/// A table being assembled in memory.
struct Table {
    text: String,
}

impl Table {
    fn new(cfg: &ExperimentConfig) -> Self {
        let mut text = String::new();
        writeln!(text, "# experiment={}", cfg.name).unwrap();
        writeln!(text, "# config_hash={}", cfg.hash()).unwrap();
        writeln!(text, "# seed={}", cfg.seed).unwrap();
        Table { text }
    }

    fn meta(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        writeln!(self.text, "# {key}={value}").unwrap();
        self
    }

    fn header<S: AsRef<str>>(mut self, cols: &[S]) -> Self {
        let cols: Vec<&str> = cols.iter().map(AsRef::as_ref).collect();
        writeln!(self.text, "{}", cols.join(",")).unwrap();
        self
    }

    fn row(&mut self, cells: &[String]) {
        writeln!(self.text, "{}", cells.join(",")).unwrap();
    }

    fn nums(&mut self, values: impl IntoIterator<Item = f64>) {
        let cells: Vec<String> = values.into_iter().map(fmt_f64).collect();
        self.row(&cells);
    }

    fn save(self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.text).map_err(|e| Error::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn x_cols(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

/// Writes `data.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let ds = build_dataset(cfg)?;
    let path = out.join("data.csv");
    let header = vec![
        ("experiment".to_string(), cfg.name.clone()),
        ("config_hash".to_string(), cfg.hash()),
        (
            "system".to_string(),
            format!("{:?}", cfg.data.system).to_lowercase(),
        ),
    ];
    dataset::write_table(&ds, &path, &header)?;
    Ok(vec![path])
}

/// Writes `eft_<model>.csv` on the evaluation grid and `eft_params.csv`.
pub fn cmd_fit_eft(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let ds = build_dataset(cfg)?;
    let grid = eval_grid(cfg)?;
    let models = fit_models(cfg, &ds, &grid)?;
    let mut written = Vec::new();
    for (sim, pred) in models.simulators.iter().zip(&models.grid) {
        let mut cols = x_cols(cfg.dim());
        cols.extend(["mean", "variance", "capped"].map(String::from));
        let mut t = Table::new(cfg).meta("model", &sim.name).header(&cols);
        for ((x, m), (v, c)) in pred
            .grid
            .iter()
            .zip(&pred.mean)
            .zip(pred.variance.iter().zip(&pred.capped))
        {
            let mut cells: Vec<String> = x.iter().chain([m, v]).map(|v| fmt_f64(*v)).collect();
            cells.push(u8::from(*c).to_string());
            t.row(&cells);
        }
        written.push(t.save(&out.join(format!("eft_{}.csv", sim.name)))?);
    }
    let mut t = Table::new(cfg).header(&["model", "order", "truncation_model", "cbar2", "ell"]);
    for sim in &models.simulators {
        let (flag, cbar2, ell) = match &sim.gp {
            Some(gp) => ("1", fmt_f64(gp.cbar2), fmt_f64(gp.ell)),
            None => ("0", String::new(), String::new()),
        };
        t.row(&[
            sim.name.clone(),
            sim.expansion.order().to_string(),
            flag.into(),
            cbar2,
            ell,
        ]);
    }
    written.push(t.save(&out.join("eft_params.csv"))?);
    Ok(written)
}

/// Writes `mix_summary.csv`, `sigma2_trace.csv`, `draws.txt`, `metrics.csv`.
pub fn cmd_mix(cfg: &ExperimentConfig, out: &Path, chains: usize) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let run = run_mix(cfg, chains)?;
    write_mix(cfg, out, &run)
}

pub fn write_mix(cfg: &ExperimentConfig, out: &Path, run: &MixRun) -> Result<Vec<PathBuf>> {
    let names = run.models.names();
    let chains = run.draws.chains;
    let mut written = Vec::new();

    let mut cols = x_cols(cfg.dim());
    cols.extend(["mean", "lo95", "hi95"].map(String::from));
    for n in &names {
        cols.extend([
            format!("w_{n}"),
            format!("w_{n}_lo95"),
            format!("w_{n}_hi95"),
        ]);
    }
    cols.extend(["w_sum", "w_sum_lo95", "w_sum_hi95", "truth"].map(String::from));
    for n in &names {
        cols.push(format!("f_{n}"));
    }
    let mut t = Table::new(cfg).meta("chains", chains).header(&cols);
    for (p, x) in run.grid.iter().enumerate() {
        let mut v: Vec<f64> = x.clone();
        let b = run.summary.mean[p];
        v.extend([b.mean, b.lo, b.hi]);
        for w in &run.summary.weights {
            v.extend([w[p].mean, w[p].lo, w[p].hi]);
        }
        let s = run.summary.weight_sum[p];
        v.extend([s.mean, s.lo, s.hi, run.truth[p]]);
        v.extend(run.models.grid.iter().map(|g| g.mean[p]));
        t.nums(v);
    }
    written.push(t.save(&out.join("mix_summary.csv"))?);

    let mut t = Table::new(cfg)
        .meta("chains", chains)
        .header(&["draw", "sigma2"]);
    for (i, s) in run.draws.sigma2.iter().enumerate() {
        t.row(&[i.to_string(), fmt_f64(*s)]);
    }
    written.push(t.save(&out.join("sigma2_trace.csv"))?);

    let mut t = Table::new(cfg)
        .meta("chains", chains)
        .meta("trees", cfg.mix.trees)
        .meta("models", names.join(" "))
        .meta("format", "one line per tree: draw tree encoding");
    for (d, trees) in run.draws.ensembles.iter().enumerate() {
        for (j, tree) in trees.iter().enumerate() {
            writeln!(t.text, "{d} {j} {}", tree.encode()).unwrap();
        }
    }
    written.push(t.save(&out.join("draws.txt"))?);

    let m = &run.metrics;
    let s = &run.draws.stats;
    let mut t = Table::new(cfg)
        .meta("chains", chains)
        .header(&["key", "value"]);
    let rows: Vec<(&str, String)> = vec![
        ("n_train", run.dataset.len().to_string()),
        ("n_grid", run.grid.len().to_string()),
        ("draws", run.draws.len().to_string()),
        ("rmse", fmt_f64(m.rmse)),
        ("coverage95", fmt_f64(m.coverage)),
        ("mean_band_width", fmt_f64(m.mean_band_width)),
        ("acceptance_rate", fmt_f64(m.acceptance_rate)),
        ("birth_proposed", s.birth_proposed.to_string()),
        ("birth_accepted", s.birth_accepted.to_string()),
        ("death_proposed", s.death_proposed.to_string()),
        ("death_accepted", s.death_accepted.to_string()),
        ("invalid_proposals", s.invalid.to_string()),
        ("sigma2_mean", fmt_f64(m.sigma2_mean)),
        ("sigma2_lo95", fmt_f64(m.sigma2_lo)),
        ("sigma2_hi95", fmt_f64(m.sigma2_hi)),
        ("sigma2_hat", fmt_f64(run.draws.sigma2_hat)),
        ("lambda", fmt_f64(run.draws.lambda)),
        ("w_sum_min", fmt_f64(m.weight_sum_min)),
        ("w_sum_max", fmt_f64(m.weight_sum_max)),
    ];
    for (k, v) in rows {
        t.row(&[k.to_string(), v]);
    }
    written.push(t.save(&out.join("metrics.csv"))?);
    Ok(written)
}

/// Writes `bma_weights.csv` and `bma_curve.csv`.
pub fn cmd_bma(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let run = run_bma(cfg)?;
    let mut t = Table::new(cfg).meta("rmse", fmt_f64(run.rmse)).header(&[
        "model",
        "log_evidence",
        "weight",
    ]);
    for ((n, e), w) in run
        .names
        .iter()
        .zip(&run.result.log_evidences)
        .zip(&run.result.posterior_probs)
    {
        t.row(&[n.clone(), fmt_f64(*e), fmt_f64(*w)]);
    }
    let mut written = vec![t.save(&out.join("bma_weights.csv"))?];
    let mut cols = x_cols(cfg.dim());
    cols.extend(["mean", "truth"].map(String::from));
    let mut t = Table::new(cfg).header(&cols);
    for ((x, m), tr) in run.grid.iter().zip(&run.result.mean).zip(&run.truth) {
        t.nums(x.iter().copied().chain([*m, *tr]));
    }
    written.push(t.save(&out.join("bma_curve.csv"))?);
    Ok(written)
}

fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn read_meta(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn pretty(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains('e') || v.contains('.') => format!("{x:.6}"),
        _ => v.to_string(),
    }
}

/// Human-readable summary of a run directory; also written to `report.txt`.
pub fn cmd_report(run_dir: &Path) -> Result<String> {
    if !run_dir.is_dir() {
        return Err(Error::Config(format!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    let metrics = run_dir.join("metrics.csv");
    let bma = run_dir.join("bma_weights.csv");
    if !metrics.exists() && !bma.exists() {
        return Err(Error::Config(format!(
            "{} has neither metrics.csv nor bma_weights.csv",
            run_dir.display()
        )));
    }
    let mut out = String::new();
    let src = if metrics.exists() { &metrics } else { &bma };
    for (k, v) in read_meta(src)? {
        if matches!(k.as_str(), "experiment" | "config_hash" | "seed" | "chains") {
            writeln!(out, "{k:<20} {v}").unwrap();
        }
    }
    if metrics.exists() {
        writeln!(out, "\nmixing").unwrap();
        for (k, v) in read_key_values(&metrics)? {
            writeln!(out, "  {k:<18} {}", pretty(&v)).unwrap();
        }
    }
    if bma.exists() {
        writeln!(out, "\nmodel averaging").unwrap();
        for (k, v) in read_meta(&bma)? {
            if k == "rmse" {
                writeln!(out, "  {:<18} {}", "rmse", pretty(&v)).unwrap();
            }
        }
        let text = fs::read_to_string(&bma).map_err(|e| Error::io(&bma, e))?;
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() == 3 {
                writeln!(
                    out,
                    "  weight[{}] {:>12} (log evidence {})",
                    cells[0],
                    pretty(cells[2]),
                    pretty(cells[1])
                )
                .unwrap();
            }
        }
    }
    let path = run_dir.join("report.txt");
    fs::write(&path, &out).map_err(|e| Error::io(&path, e))?;
    Ok(out)
}
