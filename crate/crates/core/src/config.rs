//! TOML run configuration.
//!
//! ```toml
//! [model]
//! family = "gaussian"
//! sigma2 = 1.0
//! prior_mean = 0.0
//! prior_var = 0.1
//!
//! [data]
//! values = [0.3, -1.2, 0.8]   # or: pairs, path, [data.simulate]
//!
//! [engine]
//! S = 2000
//! seed = 1
//!
//! [output]
//! path = "result.csv"
//! ```

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{OpessProblem, DEFAULT_QUADRATURE_NODES, DEFAULT_REALIZATIONS};
use crate::error::{Error, Result};
use crate::harness::StudyConfig;
use crate::io::read_dataset;
use crate::models::{
    BetaBernoulliModelSpec, Dataset, GaussianModelSpec, ModelSpec, PriorVariance,
    RegressionModelSpec,
};
use crate::streams::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Gaussian {
        sigma2: f64,
        prior_mean: f64,
        prior_var: f64,
    },
    BetaBernoulli {
        alpha: f64,
        beta: f64,
    },
    Regression {
        sigma2: f64,
        eta0: [f64; 2],
        tau2: [f64; 2],
    },
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        match *self {
            ModelConfig::Gaussian {
                sigma2,
                prior_mean,
                prior_var,
            } => ModelSpec::Gaussian(GaussianModelSpec::new(sigma2, prior_mean, prior_var)),
            ModelConfig::BetaBernoulli { alpha, beta } => {
                ModelSpec::BetaBernoulli(BetaBernoulliModelSpec { alpha, beta })
            }
            ModelConfig::Regression { sigma2, eta0, tau2 } => {
                ModelSpec::Regression(RegressionModelSpec {
                    sigma2,
                    eta0,
                    tau2: tau2.map(PriorVariance::Finite),
                })
            }
        }
    }
}

/// Simulated data: Gaussian draws with mean `mean`, Bernoulli draws with
/// success probability `p`, or regression pairs with `x ~ N(0, 1)` and
/// coefficients `beta`. Noise variance comes from the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
}

impl DataConfig {
    fn sources(&self) -> usize {
        [
            self.values.is_some(),
            self.pairs.is_some(),
            self.path.is_some(),
            self.simulate.is_some(),
        ]
        .into_iter()
        .filter(|&b| b)
        .count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(rename = "S", default = "default_s")]
    pub s: usize,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_s() -> usize {
    DEFAULT_REALIZATIONS
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            s: DEFAULT_REALIZATIONS,
            l: None,
            seed: 0,
            workers: None,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Maps a TOML error to a config error naming the offending key.
fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .split_once("unknown field `")
        .and_then(|(_, rest)| rest.split_once('`'))
        .map(|(k, _)| k.to_string())
        .or_else(|| {
            msg.split_once("missing field `")
                .and_then(|(_, rest)| rest.split_once('`'))
                .map(|(k, _)| k.to_string())
        })
        .unwrap_or_else(|| "<document>".to_string());
    Error::config(key, msg.trim().to_string())
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(toml_error)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a study configuration.
pub fn parse_study_config(text: &str) -> Result<StudyConfig> {
    let cfg: StudyConfig = toml::from_str(text).map_err(toml_error)?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.spec().validate()?;
        if self.data.sources() != 1 {
            return Err(Error::config(
                "data",
                "exactly one of values, pairs, path or simulate must be given",
            ));
        }
        let regression = matches!(self.model, ModelConfig::Regression { .. });
        if regression && self.data.values.is_some() {
            return Err(Error::config(
                "data.values",
                "regression data must be given as pairs",
            ));
        }
        if !regression && self.data.pairs.is_some() {
            return Err(Error::config(
                "data.pairs",
                "pairs apply only to regression",
            ));
        }
        if let Some(values) = &self.data.values {
            self.model
                .spec()
                .check_dataset(&Dataset::Scalar(values.clone()))
                .map_err(|e| Error::config("data.values", e.to_string()))?;
        }
        if let Some(sim) = &self.data.simulate {
            self.validate_simulate(sim)?;
        }
        if self.engine.s == 0 {
            return Err(Error::config("engine.S", "S must be >= 1"));
        }
        if self.engine.quadrature_nodes == 0 {
            return Err(Error::config(
                "engine.quadrature_nodes",
                "quadrature_nodes must be >= 1",
            ));
        }
        if self.engine.workers == Some(0) {
            return Err(Error::config("engine.workers", "workers must be >= 1"));
        }
        Ok(())
    }

    fn validate_simulate(&self, sim: &SimulateConfig) -> Result<()> {
        if sim.n == 0 {
            return Err(Error::config("data.simulate.n", "n must be >= 1"));
        }
        let (mean_ok, p_ok, beta_ok) = match self.model {
            ModelConfig::Gaussian { .. } => (true, false, false),
            ModelConfig::BetaBernoulli { .. } => (false, true, false),
            ModelConfig::Regression { .. } => (false, false, true),
        };
        let family = self.model.spec().family();
        for (key, given, ok) in [
            ("mean", sim.mean.is_some(), mean_ok),
            ("p", sim.p.is_some(), p_ok),
            ("beta", sim.beta.is_some(), beta_ok),
        ] {
            if given && !ok {
                return Err(Error::config(
                    format!("data.simulate.{key}"),
                    format!("{key} does not apply to the {family} family"),
                ));
            }
        }
        if let Some(p) = sim.p {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("data.simulate.p", "p must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Loads or simulates the dataset; relative paths resolve against `base_dir`.
    pub fn dataset(&self, base_dir: &Path) -> Result<Dataset> {
        let spec = self.model.spec();
        let data = if let Some(v) = &self.data.values {
            Dataset::Scalar(v.clone())
        } else if let Some(p) = &self.data.pairs {
            Dataset::Pairs(p.iter().map(|&[x, y]| (x, y)).collect())
        } else if let Some(path) = &self.data.path {
            read_dataset(&base_dir.join(path), &spec)?
        } else if let Some(sim) = &self.data.simulate {
            simulate(&spec, sim)
        } else {
            return Err(Error::config("data", "no data source"));
        };
        spec.check_dataset(&data)?;
        Ok(data)
    }

    pub fn problem(&self, base_dir: &Path) -> Result<OpessProblem> {
        let mut p = OpessProblem::new(self.model.spec(), self.dataset(base_dir)?)
            .with_s(self.engine.s)
            .with_seed(self.engine.seed);
        p.quadrature_nodes = self.engine.quadrature_nodes;
        if let Some(l) = self.engine.l {
            p = p.with_l(l);
        }
        Ok(p)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// Serialization of everything that determines the results: the output
    /// block and the worker count are left out.
    pub fn canonical(&self) -> Result<String> {
        let mut c = self.clone();
        c.engine.workers = None;
        c.output = OutputConfig::default();
        serde_json::to_string(&c).map_err(|e| Error::config("<document>", e.to_string()))
    }
}

fn simulate(spec: &ModelSpec, sim: &SimulateConfig) -> Dataset {
    let mut rng = substream(sim.seed, &[]);
    match spec {
        ModelSpec::Gaussian(g) => {
            let (mean, sd) = (sim.mean.unwrap_or(0.0), g.sigma2.sqrt());
            Dataset::Scalar(
                (0..sim.n)
                    .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        }
        ModelSpec::BetaBernoulli(_) => {
            let p = sim.p.unwrap_or(0.5);
            Dataset::Scalar(
                (0..sim.n)
                    .map(|_| f64::from(u8::from(rng.random::<f64>() < p)))
                    .collect(),
            )
        }
        ModelSpec::Regression(r) => {
            let b = sim.beta.unwrap_or([0.0, 0.0]);
            let sd = r.sigma2.sqrt();
            Dataset::Pairs(
                (0..sim.n)
                    .map(|_| {
                        let x: f64 = rng.sample(StandardNormal);
                        let e: f64 = rng.sample(StandardNormal);
                        (x, b[0] + b[1] * x + sd * e)
                    })
                    .collect(),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
[model]
family = "gaussian"
sigma2 = 1.0
prior_mean = 0.0
prior_var = 0.1

[data]
values = [0.1, -0.4, 1.3]
"#;

    #[test]
    fn minimal_config() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.engine, EngineConfig::default());
        assert_eq!(cfg.dataset(Path::new(".")).unwrap().len(), 3);
        assert_eq!(cfg.problem(Path::new(".")).unwrap().l, 103);
    }

    #[test]
    fn negative_prior_variance_rejected() {
        let err =
            parse_config(&MINIMAL.replace("prior_var = 0.1", "prior_var = -1.0")).unwrap_err();
        assert!(err.to_string().contains("prior_var must be > 0"), "{err}");
    }

    #[test]
    fn ambiguous_data_rejected() {
        let text = MINIMAL.replace("[data]\n", "[data]\npath = \"y.txt\"\n");
        match parse_config(&text).unwrap_err() {
            Error::Config { key, .. } => assert_eq!(key, "data"),
            e => panic!("{e}"),
        }
        let empty = MINIMAL.replace("values = [0.1, -0.4, 1.3]", "");
        assert!(parse_config(&empty).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        for (from, to, key) in [
            ("prior_var", "prior_varr", "prior_varr"),
            ("[data]\n", "[data]\nvalue = [1.0]\n", "value"),
        ] {
            match parse_config(&MINIMAL.replace(from, to)).unwrap_err() {
                Error::Config { key: k, .. } => assert_eq!(k, key),
                e => panic!("{e}"),
            }
        }
        let engine = format!("{MINIMAL}\n[engine]\nsamples = 10\n");
        assert!(
            matches!(parse_config(&engine), Err(Error::Config { key, .. }) if key == "samples")
        );
    }

    #[test]
    fn family_checks() {
        let bern = "[model]\nfamily = \"beta_bernoulli\"\nalpha = 5.0\nbeta = 5.0\n[data]\nvalues = [1.0, 0.5]\n";
        assert!(parse_config(bern).is_err());
        let sim = "[model]\nfamily = \"beta_bernoulli\"\nalpha = 5.0\nbeta = 5.0\n[data.simulate]\nn = 20\nseed = 3\np = 0.4\n";
        let cfg = parse_config(sim).unwrap();
        let d = cfg.dataset(Path::new(".")).unwrap();
        assert_eq!(d.len(), 20);
        assert_eq!(d, cfg.dataset(Path::new(".")).unwrap());
        let bad = sim.replace("p = 0.4", "mean = 0.4");
        assert!(parse_config(&bad).is_err());
        let reg = "[model]\nfamily = \"regression\"\nsigma2 = 1.0\neta0 = [0.0, 0.0]\ntau2 = [0.1, 0.1]\n[data]\npairs = [[0.0, 1.0], [1.0, 2.0], [2.0, 2.5]]\n";
        assert_eq!(
            parse_config(reg)
                .unwrap()
                .dataset(Path::new("."))
                .unwrap()
                .len(),
            3
        );
    }

    #[test]
    fn canonical_form_ignores_workers_and_output() {
        let a = parse_config(MINIMAL).unwrap();
        let mut b = a.clone();
        b.engine.workers = Some(4);
        b.output.path = Some("x.csv".into());
        assert_eq!(a.canonical().unwrap(), b.canonical().unwrap());
        b.engine.seed = 9;
        assert_ne!(a.canonical().unwrap(), b.canonical().unwrap());
    }

    #[test]
    fn study_config_parsing() {
        let cfg = parse_study_config("study_id = \"beta_fig4\"\nn_datasets = 10\nS = 100\nseed = 4\n[overrides]\nalpha = 2.0\n")
            .unwrap();
        assert_eq!(cfg.overrides.alpha, Some(2.0));
        assert!(parse_study_config(
            "study_id = \"beta_fig4\"\nn_datasets = 0\nS = 100\nseed = 4\n"
        )
        .is_err());
        assert!(
            parse_study_config("study_id = \"fig9\"\nn_datasets = 1\nS = 100\nseed = 4\n").is_err()
        );
    }

    fn finite() -> impl Strategy<Value = f64> {
        -1e6f64..1e6
    }

    fn positive() -> impl Strategy<Value = f64> {
        1e-3f64..1e3
    }

    fn model() -> impl Strategy<Value = ModelConfig> {
        prop_oneof![
            (positive(), finite(), positive()).prop_map(|(sigma2, prior_mean, prior_var)| {
                ModelConfig::Gaussian {
                    sigma2,
                    prior_mean,
                    prior_var,
                }
            }),
            (positive(), positive())
                .prop_map(|(alpha, beta)| ModelConfig::BetaBernoulli { alpha, beta }),
            (positive(), finite(), finite(), positive(), positive()).prop_map(
                |(sigma2, a, b, t1, t2)| {
                    ModelConfig::Regression {
                        sigma2,
                        eta0: [a, b],
                        tau2: [t1, t2],
                    }
                }
            ),
        ]
    }

    fn config() -> impl Strategy<Value = RunConfig> {
        (
            model(),
            1usize..50,
            0..=i64::MAX as u64,
            prop::collection::vec(0u8..2, 1..30),
            prop::option::of(1usize..500),
            prop::option::of(1usize..16),
            1usize..100_000,
            prop::option::of("[a-z]{1,8}\\.csv"),
        )
            .prop_map(|(model, n, seed, bits, l, workers, s, out)| {
                let data = match model {
                    ModelConfig::Regression { .. } => DataConfig {
                        pairs: Some(
                            bits.iter()
                                .enumerate()
                                .map(|(i, &b)| [i as f64, f64::from(b)])
                                .collect(),
                        ),
                        ..Default::default()
                    },
                    _ if seed % 2 == 0 => DataConfig {
                        values: Some(bits.iter().map(|&b| f64::from(b)).collect()),
                        ..Default::default()
                    },
                    _ => DataConfig {
                        simulate: Some(SimulateConfig {
                            n,
                            seed,
                            mean: None,
                            p: None,
                            beta: None,
                        }),
                        ..Default::default()
                    },
                };
                RunConfig {
                    model,
                    data,
                    engine: EngineConfig {
                        s,
                        l,
                        seed,
                        workers,
                        quadrature_nodes: 256,
                    },
                    output: OutputConfig {
                        path: out.map(PathBuf::from),
                        format: OutputFormat::Csv,
                    },
                }
            })
    }

    proptest! {
        #[test]
        fn round_trip(cfg in config()) {
            prop_assert!(cfg.validate().is_ok());
            let text = cfg.to_toml().unwrap();
            prop_assert_eq!(parse_config(&text).unwrap(), cfg);
        }
    }
}
