//! Experiment configuration: a `key = value` file plus overrides.
//!
//! ```text
//! # coverage study on the change-point model
//! model = changepoint
//! rho = 0.01
//! xi = 1
//! T = 200
//! m = 2000
//! policy = 2
//! gb = true
//! replications = 300
//! seed = 1
//! csv = out/coverage.csv
//! json = out/coverage.json
//! ```
//!
//! Keys (aliases in parentheses):
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `model` | `changepoint`, `bearings`, `generic-from-file`, `oracle-discrete` | required |
//! | `model_file` | JSON table file for `generic-from-file` | – |
//! | `data` | series CSV (`t,x…,y`) holding a fixed `Y`; fresh `Y` per replication otherwise | – |
//! | `rho`, `xi` | change-point parameters | 0.01, 1 |
//! | `proposal` | `exact`/`prior` (change-point), `informed`/`prior` (bearings) | `exact` / `informed` |
//! | `T` (`horizon`) | number of stages | 200 / 24 / 4 |
//! | `m` (`particles`) | initial population size | 1000 |
//! | `scheme` | `bootstrap` or `residual` | `bootstrap` |
//! | `policy` | `always`, `never`, or a cv² threshold `c` | `always` |
//! | `split` | sample-splitting groups, 0 = off | 0 |
//! | `gb` | Gilks–Berzuini estimator on/off | false |
//! | `replications` (`R`) | number of replications | 1 |
//! | `seed` | master seed | 1 |
//! | `truth` | `auto` (oracle when one exists), `none`, or `v1[,v2]` | `auto` |
//! | `csv`, `json` | output paths; CSV to stdout when `csv` is unset | – |
//! | `threads` | worker threads (else `SMCVAR_THREADS`, else all cores) | – |
//! | `record_timing` | fill the `runtime_ms` column | false |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use smcvar::benchmarks::{read_series, IndicatorProposal, InitialProposal};
use smcvar::oracle::discrete::MAX_HORIZON;
use smcvar::oracle::{two_state_example, DiscreteHmm, DiscreteHmmSpec};
use smcvar::{FilterConfig, ResamplePolicy, Scheme};

/// Environment variable holding the default number of worker threads.
pub const THREADS_ENV: &str = "SMCVAR_THREADS";

const KEYS: &[(&str, &[&str])] = &[
    ("model", &[]),
    ("model_file", &["model-file"]),
    ("data", &[]),
    ("rho", &[]),
    ("xi", &[]),
    ("proposal", &[]),
    ("T", &["horizon"]),
    ("m", &["particles"]),
    ("scheme", &[]),
    ("policy", &["c"]),
    ("split", &["k"]),
    ("gb", &[]),
    ("replications", &["R"]),
    ("seed", &[]),
    ("truth", &[]),
    ("csv", &[]),
    ("json", &[]),
    ("threads", &[]),
    ("record_timing", &["record-timing"]),
];

/// Keys that do not change the numbers an experiment produces.
const OUTPUT_KEYS: &[&str] = &["csv", "json", "threads", "record_timing"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

fn canonical_key(key: &str) -> Result<&'static str, ConfigError> {
    KEYS.iter()
        .find(|(k, aliases)| *k == key || aliases.contains(&key))
        .map(|(k, _)| *k)
        .ok_or_else(|| ConfigError(format!("unknown config key `{key}`")))
}

/// Raw key/value settings, canonical keys only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<&'static str, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`, got `{line}`", n + 1));
            };
            let key = canonical_key(k.trim()).map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
            if out.0.insert(key, v.trim().to_string()).is_some() {
                return err(format!("line {}: `{key}` set twice", n + 1));
            }
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets `key`, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        self.0.insert(canonical_key(key)?, value.into());
        Ok(())
    }

    /// Parses `key=value` and sets it.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        match pair.split_once('=') {
            Some((k, v)) => self.set(k.trim(), v.trim()),
            None => err(format!("expected key=value, got `{pair}`")),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError(format!("`{key}` = `{v}`: {e}"))))
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get(key).map(str::to_ascii_lowercase).as_deref() {
            None | Some("false" | "off" | "no" | "0") => Ok(false),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some(other) => err(format!("`{key}` must be true or false, got `{other}`")),
        }
    }

    /// The settings that determine the numbers, for echoing into the aggregate.
    pub fn study_settings(&self) -> BTreeMap<String, String> {
        self.0
            .iter()
            .filter(|(k, _)| !OUTPUT_KEYS.contains(k))
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }
}

/// Which model a run uses.
#[derive(Debug, Clone)]
pub enum ModelChoice {
    ChangePoint { rho: f64, xi: f64, proposal: IndicatorProposal },
    Bearings { initial: InitialProposal },
    /// `generic-from-file` or the built-in `oracle-discrete` two-state chain.
    Discrete(DiscreteHmm),
}

impl ModelChoice {
    pub fn label(&self) -> &'static str {
        match self {
            ModelChoice::ChangePoint { .. } => "changepoint",
            ModelChoice::Bearings { .. } => "bearings",
            ModelChoice::Discrete(_) => "discrete",
        }
    }

    pub fn components(&self) -> usize {
        match self {
            ModelChoice::Bearings { .. } => 2,
            _ => 1,
        }
    }
}

/// Reference value for coverage.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    /// Exact value from an oracle where the model has one.
    Auto,
    None,
    Fixed(Vec<f64>),
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    /// Fixed observations; `None` simulates fresh data per replication.
    pub data: Option<Vec<f64>>,
    pub horizon: usize,
    pub filter: FilterConfig,
    pub replications: usize,
    pub seed: u64,
    pub truth: Truth,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub threads: Option<usize>,
    pub record_timing: bool,
    pub settings: Settings,
}

fn check_writable(path: &Path) -> Result<(), ConfigError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| ConfigError(format!("{}: {e}", parent.display())))?;
    }
    fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map(|_| ())
        .map_err(|e| ConfigError(format!("{} is not writable: {e}", path.display())))
}

impl ExperimentConfig {
    /// Validates every setting before anything runs.
    pub fn from_settings(settings: Settings) -> Result<Self, ConfigError> {
        let s = &settings;
        let model_name = s.get("model").ok_or_else(|| ConfigError("`model` is required".into()))?;
        let proposal = s.get("proposal").map(str::to_ascii_lowercase);
        let model = match model_name {
            "changepoint" | "change-point" => {
                let rho = s.parsed("rho")?.unwrap_or(0.01);
                let xi = s.parsed("xi")?.unwrap_or(1.0);
                if !(rho > 0.0 && rho <= 1.0) {
                    return err(format!("rho must lie in (0, 1], got {rho}"));
                }
                if !(xi > 0.0 && f64::is_finite(xi)) {
                    return err(format!("xi must be positive, got {xi}"));
                }
                let proposal = match proposal.as_deref() {
                    None | Some("exact") => IndicatorProposal::ExactConditional,
                    Some("prior") => IndicatorProposal::Prior,
                    Some(other) => return err(format!("change-point proposal must be exact or prior, got `{other}`")),
                };
                ModelChoice::ChangePoint { rho, xi, proposal }
            }
            "bearings" => {
                let initial = match proposal.as_deref() {
                    None | Some("informed") => InitialProposal::Informed,
                    Some("prior") => InitialProposal::Prior,
                    Some(other) => return err(format!("bearings proposal must be informed or prior, got `{other}`")),
                };
                ModelChoice::Bearings { initial }
            }
            "generic-from-file" => {
                let path = s.get("model_file").ok_or_else(|| ConfigError("generic-from-file needs `model_file`".into()))?;
                let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{path}: {e}")))?;
                let spec: DiscreteHmmSpec =
                    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{path}: {e}")))?;
                ModelChoice::Discrete(spec.build().map_err(|e| ConfigError(format!("{path}: {e}")))?)
            }
            "oracle-discrete" => {
                let horizon = s.parsed("T")?.unwrap_or(4);
                if !(1..=MAX_HORIZON).contains(&horizon) {
                    return err(format!("oracle-discrete needs 1 <= T <= {MAX_HORIZON}, got {horizon}"));
                }
                ModelChoice::Discrete(two_state_example(horizon))
            }
            other => {
                return err(format!(
                    "unknown model `{other}` (expected changepoint, bearings, generic-from-file or oracle-discrete)"
                ))
            }
        };
        if !matches!(model, ModelChoice::ChangePoint { .. } | ModelChoice::Bearings { .. }) && s.get("data").is_some() {
            return err("`data` applies only to the changepoint and bearings models");
        }

        let data = match s.get("data") {
            Some(path) => {
                let file = fs::File::open(path).map_err(|e| ConfigError(format!("{path}: {e}")))?;
                Some(read_series(file).map_err(|e| ConfigError(format!("{path}: {e}")))?.y)
            }
            None => None,
        };
        let requested: Option<usize> = s.parsed("T")?;
        let horizon = match (&model, &data) {
            (ModelChoice::Discrete(hmm), _) => {
                use smcvar::StateSpaceModel;
                if requested.is_some_and(|t| t != hmm.horizon()) {
                    return err(format!("T = {} but the model has {} stages", requested.unwrap(), hmm.horizon()));
                }
                hmm.horizon()
            }
            (_, Some(y)) => {
                let t = requested.unwrap_or(y.len());
                if t > y.len() {
                    return err(format!("T = {t} exceeds the {} observations in `data`", y.len()));
                }
                t
            }
            (ModelChoice::ChangePoint { .. }, None) => requested.unwrap_or(200),
            (ModelChoice::Bearings { .. }, None) => requested.unwrap_or(24),
        };
        if horizon == 0 {
            return err("T must be at least 1");
        }

        let scheme: Scheme = s.parsed("scheme")?.unwrap_or(Scheme::MultinomialBootstrap);
        let policy: ResamplePolicy = s.parsed("policy")?.unwrap_or(ResamplePolicy::Always);
        let filter = FilterConfig::new(s.parsed("m")?.unwrap_or(1000), policy, scheme)
            .with_split(s.parsed("split")?.unwrap_or(0))
            .with_gilks_berzuini(s.flag("gb")?);
        filter.validate().map_err(|e| ConfigError(e.to_string()))?;

        let replications = s.parsed("replications")?.unwrap_or(1);
        if replications == 0 {
            return err("replications must be at least 1");
        }

        let truth = match s.get("truth").map(str::trim) {
            None | Some("auto") => Truth::Auto,
            Some("none") => Truth::None,
            Some(list) => {
                let values = list
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ConfigError(format!("`truth` = `{list}`: {e}")))?;
                if values.len() != model.components() {
                    return err(format!("`truth` needs {} value(s) for this model", model.components()));
                }
                Truth::Fixed(values)
            }
        };

        let csv = s.get("csv").map(PathBuf::from);
        let json = s.get("json").map(PathBuf::from);
        for path in csv.iter().chain(&json) {
            check_writable(path)?;
        }

        let threads = match s.parsed::<usize>("threads")? {
            Some(t) => Some(t),
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => Some(v.trim().parse().map_err(|e| ConfigError(format!("{THREADS_ENV} = `{v}`: {e}")))?),
                Err(_) => None,
            },
        };
        if threads == Some(0) {
            return err("threads must be at least 1");
        }

        Ok(ExperimentConfig {
            model,
            data,
            horizon,
            filter,
            replications,
            seed: s.parsed("seed")?.unwrap_or(1),
            truth,
            csv,
            json,
            threads,
            record_timing: s.flag("record_timing")?,
            settings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Settings {
        Settings::parse(text).unwrap()
    }

    #[test]
    fn parses_comments_aliases_and_overrides() {
        let mut s = settings("model = changepoint # inline\n\n# full line\nhorizon = 50\nR=3\n");
        assert_eq!(s.get("T"), Some("50"));
        assert_eq!(s.get("replications"), Some("3"));
        s.set("T", "20").unwrap();
        let config = ExperimentConfig::from_settings(s).unwrap();
        assert_eq!(config.horizon, 20);
        assert_eq!(config.replications, 3);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Settings::parse("model changepoint").is_err());
        assert!(Settings::parse("colour = blue").is_err());
        assert!(Settings::parse("m = 1\nparticles = 2").is_err());
    }

    #[test]
    fn validation_failures() {
        for text in [
            "m = 10",
            "model = nope",
            "model = changepoint\nreplications = 0",
            "model = changepoint\nm = 0",
            "model = changepoint\npolicy = -1",
            "model = changepoint\nrho = 0",
            "model = changepoint\nxi = -2",
            "model = changepoint\nsplit = 1",
            "model = changepoint\nm = 4\nsplit = 5",
            "model = changepoint\ngb = maybe",
            "model = changepoint\nT = 0",
            "model = changepoint\ntruth = 1,2",
            "model = bearings\nproposal = exact",
            "model = oracle-discrete\nT = 9",
            "model = oracle-discrete\ndata = x.csv",
            "model = generic-from-file",
            "model = changepoint\nthreads = 0",
        ] {
            assert!(ExperimentConfig::from_settings(settings(text)).is_err(), "{text}");
        }
    }

    #[test]
    fn defaults_per_model() {
        let c = ExperimentConfig::from_settings(settings("model = bearings")).unwrap();
        assert_eq!((c.horizon, c.model.components()), (24, 2));
        let c = ExperimentConfig::from_settings(settings("model = oracle-discrete")).unwrap();
        assert_eq!(c.horizon, 4);
        assert_eq!(c.truth, Truth::Auto);
    }

    #[test]
    fn study_settings_leave_out_output_keys() {
        let s = settings("model = changepoint\ncsv = a.csv\nthreads = 2\nm = 5");
        let study = s.study_settings();
        assert_eq!(study.keys().collect::<Vec<_>>(), ["m", "model"]);
    }
}
