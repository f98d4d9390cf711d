//! Experiment configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cbrw_core::engine::{Caps, LambdaHorizon};
use cbrw_core::{ModelSpec, OffspringLaw, StepLaw};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Params,
    Lln,
    Fluctuation,
    Verify,
    Multicat,
    Expectation,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Params => "params",
            Kind::Lln => "lln",
            Kind::Fluctuation => "fluctuation",
            Kind::Verify => "verify",
            Kind::Multicat => "multicat",
            Kind::Expectation => "expectation",
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum OffspringCfg {
    Deterministic(u64),
    Poisson(f64),
    Binomial {
        n: u64,
        p: f64,
    },
    Geometric(f64),
    /// `pmf[k] = P(N = k)`.
    Empirical(Vec<f64>),
}

impl From<&OffspringCfg> for OffspringLaw {
    fn from(c: &OffspringCfg) -> Self {
        match c {
            OffspringCfg::Deterministic(k) => OffspringLaw::Deterministic(*k),
            OffspringCfg::Poisson(mu) => OffspringLaw::Poisson(*mu),
            OffspringCfg::Binomial { n, p } => OffspringLaw::Binomial { n: *n, p: *p },
            OffspringCfg::Geometric(p) => OffspringLaw::Geometric(*p),
            OffspringCfg::Empirical(pmf) => OffspringLaw::Empirical(pmf.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCfg {
    /// `[displacement, probability]` pairs.
    pub walk: Vec<(i64, f64)>,
    /// `[site, offspring-law]` pairs.
    #[serde(default = "default_catalysts")]
    pub catalysts: Vec<(i64, OffspringCfg)>,
    #[serde(default)]
    pub initial: i64,
}

fn default_catalysts() -> Vec<(i64, OffspringCfg)> {
    vec![(0, OffspringCfg::Deterministic(2))]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum HorizonCfg {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunCfg {
    /// Must match the subcommand when present.
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub population_cap: Option<f64>,
    /// Emit every `runs_stride`-th generation in `runs.csv`.
    #[serde(default = "one")]
    pub runs_stride: usize,
}

impl Default for RunCfg {
    fn default() -> Self {
        RunCfg {
            experiment: None,
            seed: None,
            replicas: default_replicas(),
            n_max: default_n_max(),
            threads: None,
            output_dir: None,
            population_cap: None,
            runs_stride: 1,
        }
    }
}

fn default_replicas() -> usize {
    1000
}
fn default_n_max() -> usize {
    200
}
fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsCfg {
    pub ladder_samples: usize,
}

impl Default for ParamsCfg {
    fn default() -> Self {
        ParamsCfg {
            ladder_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlnCfg {
    pub speed_tolerance: f64,
    pub checkpoints: Vec<usize>,
    pub z_tolerance: f64,
}

impl Default for LlnCfg {
    fn default() -> Self {
        LlnCfg {
            speed_tolerance: 0.02,
            checkpoints: vec![10, 50, 100],
            z_tolerance: 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsequenceCfg {
    /// Target fractional part of `alpha n`.
    pub s: f64,
    pub tol: f64,
    pub lo: usize,
    pub hi: usize,
    pub y_grid: Vec<i64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluctuationCfg {
    pub ns: Vec<usize>,
    pub y_grid: Vec<f64>,
    pub k_lambda: HorizonCfg,
    pub z_tolerance: f64,
    pub subsequence: Option<SubsequenceCfg>,
}

impl Default for FluctuationCfg {
    fn default() -> Self {
        FluctuationCfg {
            ns: vec![150, 200],
            y_grid: vec![0.0, 1.0, 2.0, 3.0],
            k_lambda: HorizonCfg::Named("half".into()),
            z_tolerance: 3.0,
            subsequence: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyCfg {
    /// Exact many-to-one identities for `n = 0..=n_exact`.
    pub n_exact: usize,
    pub indicator_range: i64,
    pub exp_thetas: Vec<f64>,
    pub second_moment_ns: Vec<usize>,
    pub decoupling_k: usize,
    pub martingale_ns: Vec<usize>,
}

impl Default for VerifyCfg {
    fn default() -> Self {
        VerifyCfg {
            n_exact: 10,
            indicator_range: 3,
            exp_thetas: vec![0.3, -0.7],
            second_moment_ns: vec![2, 5, 10],
            decoupling_k: 10,
            martingale_ns: vec![2, 5, 10],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MulticatCfg {
    pub ns: Vec<usize>,
    pub lln_n: usize,
    pub speed_tolerance: f64,
    pub eigen_tolerance: f64,
}

impl Default for MulticatCfg {
    fn default() -> Self {
        MulticatCfg {
            ns: vec![10, 50, 100],
            lln_n: 400,
            speed_tolerance: 0.03,
            eigen_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectationCfg {
    /// Relative tolerance of the `d/m` comparison.
    pub tolerance: f64,
    pub profile_x_max: i64,
    pub slope_tolerance: f64,
}

impl Default for ExpectationCfg {
    fn default() -> Self {
        ExpectationCfg {
            tolerance: 0.01,
            profile_x_max: 20,
            slope_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelCfg,
    #[serde(default)]
    pub run: RunCfg,
    #[serde(default)]
    pub params: ParamsCfg,
    #[serde(default)]
    pub lln: LlnCfg,
    #[serde(default)]
    pub fluctuation: FluctuationCfg,
    #[serde(default)]
    pub verify: VerifyCfg,
    #[serde(default)]
    pub multicat: MulticatCfg,
    #[serde(default)]
    pub expectation: ExpectationCfg,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// A validated configuration with every override applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kind: Kind,
    pub cfg: ExperimentConfig,
    pub model: ModelSpec,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub caps: Caps,
    /// SHA-256 of the config bytes and the effective seed.
    pub hash: String,
}

impl Resolved {
    pub fn horizon(&self) -> LambdaHorizon {
        match &self.cfg.fluctuation.k_lambda {
            HorizonCfg::Fixed(k) => LambdaHorizon::Fixed(*k),
            HorizonCfg::Named(_) => LambdaHorizon::Half,
        }
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).context("config is not valid")
}

pub fn load(path: &Path, kind: Kind, ov: &Overrides) -> Result<Resolved> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    resolve(&text, kind, ov)
}

pub fn resolve(text: &str, kind: Kind, ov: &Overrides) -> Result<Resolved> {
    let cfg = parse(text)?;
    let seed = ov
        .seed
        .or(cfg.run.seed)
        .context("a seed is required: set `run.seed` in the config or pass --seed")?;
    validate(&cfg, kind)?;
    let walk = StepLaw::new(&cfg.model.walk)?;
    let catalysts = cfg
        .model
        .catalysts
        .iter()
        .map(|(x, c)| (*x, OffspringLaw::from(c)))
        .collect();
    let model = ModelSpec::new(walk, catalysts, cfg.model.initial)?;
    let threads = ov
        .threads
        .or(cfg.run.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        bail!("threads must be at least 1");
    }
    let out = ov
        .out
        .clone()
        .or_else(|| cfg.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let caps = match cfg.run.population_cap {
        None => Caps::default(),
        Some(c) => Caps {
            population: c as u128,
        },
    };
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update(format!("\nseed={seed}\n").as_bytes());
    let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(Resolved {
        kind,
        cfg,
        model,
        seed,
        threads,
        out,
        caps,
        hash,
    })
}

fn validate(cfg: &ExperimentConfig, kind: Kind) -> Result<()> {
    if let Some(e) = &cfg.run.experiment {
        if e != kind.name() {
            bail!(
                "config declares experiment `{e}` but the `{}` command was run",
                kind.name()
            );
        }
    }
    if cfg.run.replicas == 0 {
        bail!("run.replicas must be positive");
    }
    if cfg.run.n_max == 0 {
        bail!("run.n_max must be positive");
    }
    if cfg.run.runs_stride == 0 {
        bail!("run.runs_stride must be positive");
    }
    if let Some(c) = cfg.run.population_cap {
        if !(c.is_finite() && c >= 1.0) {
            bail!("run.population_cap must be a finite number >= 1, got {c}");
        }
    }
    if cfg.model.catalysts.is_empty() {
        bail!("model.catalysts must list at least one `[site, offspring-law]` entry");
    }
    let positive = |name: &str, v: f64| -> Result<()> {
        if !(v.is_finite() && v > 0.0) {
            bail!("{name} must be positive, got {v}");
        }
        Ok(())
    };
    positive("lln.speed_tolerance", cfg.lln.speed_tolerance)?;
    positive("lln.z_tolerance", cfg.lln.z_tolerance)?;
    positive("fluctuation.z_tolerance", cfg.fluctuation.z_tolerance)?;
    positive("multicat.speed_tolerance", cfg.multicat.speed_tolerance)?;
    positive("multicat.eigen_tolerance", cfg.multicat.eigen_tolerance)?;
    positive("expectation.tolerance", cfg.expectation.tolerance)?;
    positive(
        "expectation.slope_tolerance",
        cfg.expectation.slope_tolerance,
    )?;
    if let HorizonCfg::Named(s) = &cfg.fluctuation.k_lambda {
        if s != "half" {
            bail!("fluctuation.k_lambda must be \"half\" or a generation number, got `{s}`");
        }
    }
    match kind {
        Kind::Fluctuation => {
            if cfg.fluctuation.ns.is_empty() || cfg.fluctuation.y_grid.is_empty() {
                bail!("fluctuation.ns and fluctuation.y_grid must be non-empty");
            }
            if cfg.run.replicas < 2 {
                bail!("fluctuation needs at least 2 replicas");
            }
            if let Some(s) = &cfg.fluctuation.subsequence {
                if !(0.0..1.0).contains(&s.s) || s.lo > s.hi || s.y_grid.is_empty() {
                    bail!("fluctuation.subsequence needs s in [0, 1), lo <= hi and a non-empty y_grid");
                }
            }
        }
        Kind::Multicat => {
            if cfg.multicat.ns.is_empty() {
                bail!("multicat.ns must be non-empty");
            }
            if cfg.multicat.lln_n == 0 {
                bail!("multicat.lln_n must be positive");
            }
        }
        Kind::Params if cfg.params.ladder_samples == 0 => {
            bail!("params.ladder_samples must be positive");
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAZY: &str = r#"
[model]
walk = [[-1, 0.4], [0, 0.2], [1, 0.4]]
catalysts = [[0, { poisson = 2.0 }]]

[run]
seed = 11
replicas = 10
n_max = 20
"#;

    #[test]
    fn parses_laws_and_catalysts() {
        let cfg = parse(
            r#"
[model]
walk = [[-1, 0.5], [1, 0.5]]
catalysts = [[-1, { binomial = { n = 3, p = 0.5 } }], [2, { empirical = [0.0, 0.17, 0.83] }], [4, { geometric = 0.4 }], [5, { deterministic = 2 }]]
initial = -1
"#,
        )
        .unwrap();
        assert_eq!(cfg.model.walk, vec![(-1, 0.5), (1, 0.5)]);
        assert_eq!(
            cfg.model.catalysts[0].1,
            OffspringCfg::Binomial { n: 3, p: 0.5 }
        );
        assert_eq!(
            cfg.model.catalysts[1].1,
            OffspringCfg::Empirical(vec![0.0, 0.17, 0.83])
        );
        assert_eq!(cfg.model.initial, -1);
        assert_eq!(cfg.run.replicas, 1000);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = LAZY.replace("seed = 11\n", "");
        let err = resolve(&text, Kind::Lln, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let ok = resolve(
            &text,
            Kind::Lln,
            &Overrides {
                seed: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ok.seed, 3);
    }

    #[test]
    fn zero_replicas_rejected() {
        let text = LAZY.replace("replicas = 10", "replicas = 0");
        let err = resolve(&text, Kind::Lln, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("replicas"), "{err}");
    }

    #[test]
    fn invalid_law_rejected() {
        let text = LAZY.replace("[0, 0.2]", "[0, 0.3]");
        assert!(resolve(&text, Kind::Params, &Overrides::default()).is_err());
        let text = LAZY.replace("poisson = 2.0", "poisson = -1.0");
        assert!(resolve(&text, Kind::Params, &Overrides::default()).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = LAZY.replace("n_max = 20", "n_max = 20\nnmax = 3");
        assert!(resolve(&text, Kind::Lln, &Overrides::default()).is_err());
    }

    #[test]
    fn experiment_mismatch_rejected() {
        let text = LAZY.replace("[run]", "[run]\nexperiment = \"verify\"");
        assert!(resolve(&text, Kind::Lln, &Overrides::default()).is_err());
        assert!(resolve(&text, Kind::Verify, &Overrides::default()).is_ok());
    }

    #[test]
    fn hash_is_stable_and_seed_sensitive() {
        let a = resolve(LAZY, Kind::Params, &Overrides::default()).unwrap();
        let b = resolve(LAZY, Kind::Params, &Overrides::default()).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
        let c = resolve(
            LAZY,
            Kind::Params,
            &Overrides {
                seed: Some(12),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn horizon_forms() {
        let text = format!("{LAZY}\n[fluctuation]\nk_lambda = 40\n");
        let r = resolve(&text, Kind::Fluctuation, &Overrides::default()).unwrap();
        assert_eq!(r.horizon(), LambdaHorizon::Fixed(40));
        let text = format!("{LAZY}\n[fluctuation]\nk_lambda = \"third\"\n");
        assert!(resolve(&text, Kind::Fluctuation, &Overrides::default()).is_err());
    }
}
