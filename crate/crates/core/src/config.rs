//! Experiment configuration files.
//!
//! One experiment per TOML file, with a section per stage:
//!
//! ```toml
//! name = "example1a"
//! seed = 20
//!
//! [data]
//! system = "phi4"
//! design = "linspace"
//! lo = [0.03]
//! hi = [0.50]
//! n = 20
//! noise_sd = 0.005
//!
//! [[models]]
//! name = "weak2"
//! kind = "weak"
//! order = 2
//! n_c = 4
//!
//! [mix]
//! trees = 10
//! k = 5.0
//!
//! [eval]
//! lo = [0.03]
//! hi = [0.50]
//! n = [300]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{MatchMoment, MixPriorConfig};
use crate::dataset::TrueSystem;
use crate::error::{Error, Result};
use crate::sampler::SamplerConfig;
use crate::trees::TreePriorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemName {
    Phi4,
    Sincos2d,
}

impl SystemName {
    pub fn system(self) -> TrueSystem {
        match self {
            SystemName::Phi4 => TrueSystem::Phi4,
            SystemName::Sincos2d => TrueSystem::SinCos2d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Evenly spaced points (a product grid when `d > 1`).
    Linspace,
    /// Independent uniform draws in the box.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub system: SystemName,
    #[serde(default = "default_design")]
    pub design: Design,
    #[serde(default)]
    pub lo: Vec<f64>,
    #[serde(default)]
    pub hi: Vec<f64>,
    /// Points per dimension for `linspace`, total points for `uniform`.
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub noise_sd: f64,
    /// Read observations from this table instead of simulating them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

fn default_design() -> Design {
    Design::Linspace
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Weak,
    Strong,
    SincosTaylor,
}

/// `Q(x)` or `y_ref(x)` choice: `"identity"`, `"reciprocal"`, `"inverse-sqrt"` or a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapChoice {
    Named(String),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub kind: ModelKind,
    #[serde(default)]
    pub order: usize,
    /// Design points for the truncation model; 0 treats the expansion as exact.
    #[serde(default)]
    pub n_c: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MapChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yref: Option<MapChoice>,
    #[serde(default)]
    pub sin_center: f64,
    #[serde(default)]
    pub sin_order: usize,
    #[serde(default)]
    pub cos_center: f64,
    #[serde(default)]
    pub cos_order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Matching {
    Mean,
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    #[serde(default = "d_trees")]
    pub trees: usize,
    #[serde(default = "d_k")]
    pub k: f64,
    #[serde(default)]
    pub informative: bool,
    #[serde(default = "d_nu")]
    pub nu: f64,
    /// Omit to calibrate from the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "d_matching")]
    pub matching: Matching,
    #[serde(default = "d_burn")]
    pub burn: usize,
    #[serde(default = "d_keep")]
    pub keep: usize,
    #[serde(default = "d_one")]
    pub thin: usize,
    #[serde(default = "d_one")]
    pub min_leaf_n: usize,
    #[serde(default = "d_base")]
    pub split_base: f64,
    #[serde(default = "d_power")]
    pub split_power: f64,
    #[serde(default = "d_cuts")]
    pub cutpoints: usize,
    #[serde(default = "d_one")]
    pub chains: usize,
}

fn d_trees() -> usize {
    10
}
fn d_k() -> f64 {
    2.0
}
fn d_nu() -> f64 {
    10.0
}
fn d_matching() -> Matching {
    Matching::Mode
}
fn d_burn() -> usize {
    2000
}
fn d_keep() -> usize {
    5000
}
fn d_one() -> usize {
    1
}
fn d_base() -> f64 {
    0.95
}
fn d_power() -> f64 {
    2.0
}
fn d_cuts() -> usize {
    100
}

impl Default for MixConfig {
    fn default() -> Self {
        toml::from_str("").expect("all mix fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per dimension.
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub mix: MixConfig,
    pub eval: EvalConfig,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file; a relative `data.file` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => cfg_err(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(file) = &cfg.data.file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.file = Some(base.join(file));
            }
            let file = cfg.data.file.as_ref().unwrap();
            if !file.exists() {
                return Err(cfg_err(format!(
                    "data file {} does not exist",
                    file.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.data.system.system().dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.name.trim().is_empty() {
            return Err(cfg_err("name must not be empty"));
        }
        let data = &self.data;
        if !(data.noise_sd >= 0.0) || !data.noise_sd.is_finite() {
            return Err(cfg_err(format!(
                "data.noise_sd must be finite and >= 0, got {}",
                data.noise_sd
            )));
        }
        if data.file.is_none() {
            check_box("data", &data.lo, &data.hi, d)?;
            let min_n = if data.design == Design::Linspace {
                2
            } else {
                1
            };
            if data.n < min_n {
                return Err(cfg_err(format!("data.n must be at least {min_n}")));
            }
        }
        if self.models.is_empty() {
            return Err(cfg_err("at least one [[models]] entry is required"));
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.name.is_empty()
                || m.name
                    .contains(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_'))
            {
                return Err(cfg_err(format!(
                    "models[{i}].name must be non-empty and use only letters, digits, '-' and '_'"
                )));
            }
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(cfg_err(format!("duplicate model name {}", m.name)));
            }
            match m.kind {
                ModelKind::Weak | ModelKind::Strong => {
                    if d != 1 {
                        return Err(cfg_err(format!(
                            "model {} is one-dimensional but the system has d = {d}",
                            m.name
                        )));
                    }
                    if m.n_c == 1 {
                        return Err(cfg_err(format!(
                            "model {}: n_c must be 0 or at least 2",
                            m.name
                        )));
                    }
                }
                ModelKind::SincosTaylor => {
                    if d != 2 {
                        return Err(cfg_err(format!(
                            "model {} needs a two-dimensional system",
                            m.name
                        )));
                    }
                    if m.n_c != 0 {
                        return Err(cfg_err(format!(
                            "model {} has no truncation model; set n_c = 0",
                            m.name
                        )));
                    }
                }
            }
            for (what, choice) in [("q", &m.q), ("yref", &m.yref)] {
                if let Some(MapChoice::Named(s)) = choice {
                    if !matches!(s.as_str(), "identity" | "reciprocal" | "inverse-sqrt") {
                        return Err(cfg_err(format!(
                            "models[{i}].{what} must be \"identity\", \"reciprocal\", \"inverse-sqrt\" or a number, got {s:?}"
                        )));
                    }
                }
            }
        }
        self.sampler_config().prior.validate().map_err(to_cfg)?;
        self.sampler_config()
            .tree_prior
            .validate()
            .map_err(to_cfg)?;
        let mix = &self.mix;
        if mix.keep == 0 || mix.thin == 0 || mix.min_leaf_n == 0 || mix.chains == 0 {
            return Err(cfg_err(
                "mix.keep, mix.thin, mix.min_leaf_n and mix.chains must be positive",
            ));
        }
        check_box("eval", &self.eval.lo, &self.eval.hi, d)?;
        if self.eval.n.len() != d || self.eval.n.iter().any(|&n| n < 2) {
            return Err(cfg_err(format!(
                "eval.n needs {d} entries, each at least 2"
            )));
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let m = &self.mix;
        SamplerConfig {
            prior: MixPriorConfig {
                trees: m.trees,
                k: m.k,
                informative: m.informative,
                nu: m.nu,
                lambda: m.lambda,
                matching: match m.matching {
                    Matching::Mean => MatchMoment::Mean,
                    Matching::Mode => MatchMoment::Mode,
                },
            },
            tree_prior: TreePriorConfig {
                split_base: m.split_base,
                split_power: m.split_power,
                cutpoints_per_dim: m.cutpoints,
            },
            min_leaf_n: m.min_leaf_n,
            n_burn: m.burn,
            n_keep: m.keep,
            thin: m.thin,
            seed: derive_seed(self.seed, 1),
            structure_moves: true,
            fixed_sigma2: None,
        }
    }

    /// TOML rendering of the parsed config; insensitive to formatting and comments.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn to_cfg(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

fn check_box(section: &str, lo: &[f64], hi: &[f64], d: usize) -> Result<()> {
    if lo.len() != d || hi.len() != d {
        return Err(cfg_err(format!(
            "{section}.lo and {section}.hi need {d} entries"
        )));
    }
    for (a, b) in lo.iter().zip(hi) {
        if !a.is_finite() || !b.is_finite() || a >= b {
            return Err(cfg_err(format!(
                "{section}: need finite lo < hi, got {a} and {b}"
            )));
        }
    }
    Ok(())
}

/// Independent seed for stream `stream` of a run (0 is data, 1 is the sampler).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
name = "t"
seed = 3
[data]
system = "phi4"
lo = [0.03]
hi = [0.5]
n = 20
noise_sd = 0.005
[[models]]
name = "weak2"
kind = "weak"
order = 2
n_c = 4
[eval]
lo = [0.03]
hi = [0.5]
n = [300]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(c.mix.trees, 10);
        assert_eq!(c.mix.keep, 5000);
        assert_eq!(c.data.design, Design::Linspace);
        assert_eq!(c.mix.lambda, None);
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::from_toml(BASIC).unwrap();
        let b = ExperimentConfig::from_toml(&BASIC.replace("n = 20", "n = 20   # twenty")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml(&BASIC.replace("seed = 3", "seed = 4")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("noise_sd = 0.005", "noise_sd = -1.0"),
            (
                "lo = [0.03]\nhi = [0.5]\nn = 20",
                "lo = [0.5]\nhi = [0.03]\nn = 20",
            ),
            ("kind = \"weak\"", "kind = \"medium\""),
            ("n = [300]", "n = [1]"),
            ("n_c = 4", "n_c = 1"),
            ("order = 2", "order = 2\nbogus = 1"),
        ] {
            let text = BASIC.replacen(from, to, 1);
            assert_ne!(text, BASIC, "{from}");
            assert!(
                matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))),
                "{to}"
            );
        }
        let bad_mix = format!("{BASIC}\n[mix]\ntrees = 0\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad_mix),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(5, 0), derive_seed(5, 1));
        assert_eq!(derive_seed(5, 1), derive_seed(5, 1));
    }
}
