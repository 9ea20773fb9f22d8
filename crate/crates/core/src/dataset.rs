//! Observations, the synthetic true systems used in the examples, and the
//! delimited table format for reading and writing data.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::quadrature;

/// A point in the d-dimensional input space.
pub type Point = Vec<f64>;

/// Absolute tolerance used for the φ⁴ partition-function integral.
pub const PHI4_TOLERANCE: f64 = 1e-10;

// exp(-u²/2) < 1e-21 beyond this, so the tails are below the tolerance.
const PHI4_CUTOFF: f64 = 10.0;

/// Observations `(x_i, y_i)` together with the provenance used to generate them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Point>,
    pub outputs: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn new(inputs: Vec<Point>, outputs: Vec<f64>, noise_sd: f64, seed: u64) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument(
                "dataset needs at least one observation".into(),
            ));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let d = inputs[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument(
                "inputs must have at least one coordinate".into(),
            ));
        }
        if let Some(i) = inputs.iter().position(|p| p.len() != d) {
            return Err(Error::Dimension(format!(
                "input {i} has {} coordinates, expected {d}",
                inputs[i].len()
            )));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "input coordinates must be finite".into(),
            ));
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_sd must be >= 0, got {noise_sd}"
            )));
        }
        Ok(Dataset {
            inputs,
            outputs,
            noise_sd,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }
}

/// Partition function of zero-dimensional φ⁴ theory,
/// `∫ exp(-u²/2 - x²u⁴) du` over the real line.
pub fn true_system_phi4(x: f64) -> f64 {
    let g = x * x;
    // Even integrand: integrate the half line and double.
    let half = quadrature::integrate(
        |u| {
            let u2 = u * u;
            (-0.5 * u2 - g * u2 * u2).exp()
        },
        0.0,
        PHI4_CUTOFF,
        0.5 * PHI4_TOLERANCE,
    )
    .expect("integrand is bounded on a finite interval");
    2.0 * half
}

/// `sin(x1) + cos(x2)`.
pub fn true_system_2d(x1: f64, x2: f64) -> f64 {
    x1.sin() + x2.cos()
}

/// Named true systems available to experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrueSystem {
    Phi4,
    SinCos2d,
}

impl TrueSystem {
    pub fn dim(self) -> usize {
        match self {
            TrueSystem::Phi4 => 1,
            TrueSystem::SinCos2d => 2,
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TrueSystem::Phi4 => true_system_phi4(x[0]),
            TrueSystem::SinCos2d => true_system_2d(x[0], x[1]),
        }
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "linspace needs n >= 2, got {n}"
        )));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "linspace needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    out[n - 1] = hi;
    Ok(out)
}

/// Lifts a 1-D grid into a list of one-coordinate points.
pub fn points_1d(values: &[f64]) -> Vec<Point> {
    values.iter().map(|&v| vec![v]).collect()
}

/// Cartesian product of two 1-D grids, `x1` varying slowest.
pub fn grid_2d(x1: &[f64], x2: &[f64]) -> Vec<Point> {
    x1.iter()
        .flat_map(|&a| x2.iter().map(move |&b| vec![a, b]))
        .collect()
}

/// Evaluates `system` on `inputs` and adds independent `N(0, noise_sd²)` noise.
pub fn generate_observations<F>(
    system: F,
    inputs: &[Point],
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset>
where
    F: Fn(&[f64]) -> f64,
{
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no inputs to simulate".into()));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise_sd must be >= 0, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut outputs = Vec::with_capacity(inputs.len());
    for (i, x) in inputs.iter().enumerate() {
        let f = system(x);
        if !f.is_finite() {
            return Err(Error::Numeric(format!(
                "system is not finite at input {i} ({x:?})"
            )));
        }
        let e = noise.sample(&mut rng);
        outputs.push(if noise_sd == 0.0 { f } else { f + e });
    }
    Dataset::new(inputs.to_vec(), outputs, noise_sd, seed)
}

/// Writes `# key=value` provenance lines followed by a `x1,...,xd,y` table.
pub fn write_table(ds: &Dataset, path: &Path, header: &[(String, String)]) -> Result<()> {
    let mut buf = Vec::new();
    for (k, v) in header {
        writeln!(buf, "# {k}={v}").unwrap();
    }
    writeln!(buf, "# noise_sd={}", fmt_f64(ds.noise_sd)).unwrap();
    writeln!(buf, "# seed={}", ds.seed).unwrap();
    let names: Vec<String> = (1..=ds.dim()).map(|j| format!("x{j}")).collect();
    writeln!(buf, "{},y", names.join(",")).unwrap();
    for (x, y) in ds.inputs.iter().zip(&ds.outputs) {
        let cells: Vec<String> = x
            .iter()
            .chain(std::iter::once(y))
            .map(|v| fmt_f64(*v))
            .collect();
        writeln!(buf, "{}", cells.join(",")).unwrap();
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a table written by [`write_table`] (or any `x1,...,xd,y` table).
pub fn read_table(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut noise_sd = 0.0;
    let mut seed = 0u64;
    let mut width: Option<usize> = None;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                match k.trim() {
                    "noise_sd" => {
                        noise_sd = v
                            .trim()
                            .parse()
                            .map_err(|_| parse_err(line_no, format!("bad noise_sd value {v:?}")))?
                    }
                    "seed" => {
                        seed = v
                            .trim()
                            .parse()
                            .map_err(|_| parse_err(line_no, format!("bad seed value {v:?}")))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => {
                if cells.len() < 2 || cells.last() != Some(&"y") {
                    return Err(parse_err(line_no, "header must be x1,...,xd,y".to_string()));
                }
                width = Some(cells.len());
            }
            Some(w) => {
                if cells.len() != w {
                    return Err(parse_err(
                        line_no,
                        format!("expected {w} columns, found {}", cells.len()),
                    ));
                }
                let mut values = Vec::with_capacity(w);
                for (c, cell) in cells.iter().enumerate() {
                    let v: f64 = cell.parse().map_err(|_| {
                        parse_err(
                            line_no,
                            format!("non-numeric cell {cell:?} in column {}", c + 1),
                        )
                    })?;
                    values.push(v);
                }
                let y = values.pop().unwrap();
                inputs.push(values);
                outputs.push(y);
            }
        }
    }
    if outputs.is_empty() {
        return Err(Error::NoObservations {
            path: path.to_path_buf(),
        });
    }
    Dataset::new(inputs, outputs, noise_sd, seed)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
