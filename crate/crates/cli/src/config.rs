//! `key = value` run configs and fault schedule files.

use std::collections::BTreeMap;
use std::path::PathBuf;

use codedc_core::cluster::{FaultSchedule, FaultSpec, Step};
use codedc_core::code::Substitution;
use codedc_core::decoder::DecodeMode;
use codedc_core::dnn::protocol::TrainConfig;
use codedc_core::dnn::Objective;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub const TRAIN_KEYS: &[&str] = &[
    "alpha",
    "batch",
    "beta",
    "beta_kl",
    "checkpoint_dir",
    "checkpoint_interval",
    "d1",
    "d2",
    "dims",
    "eta",
    "fault_sigma",
    "iterations",
    "lambda",
    "m",
    "max_rollbacks",
    "mode",
    "n",
    "random_c1",
    "random_c2",
    "random_o1",
    "random_o2",
    "random_o3",
    "rho",
    "seed",
    "substitution",
    "workers",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, allowed: &[&str]) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if !allowed.contains(&k) {
            return Err(ConfigError::UnknownKey(k.into()));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                msg: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| ConfigError::Value {
                key: key.into(),
                msg: e.to_string(),
            })
        })
        .transpose()
}

/// A training run: config, the random-fault settings, and the resolved
/// key/value view written into output headers.
#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub config: TrainConfig,
    pub random: Vec<(Step, usize)>,
    pub fault_sigma: f64,
}

impl TrainSpec {
    pub fn from_map(
        map: &BTreeMap<String, String>,
        autoencoder: bool,
    ) -> Result<Self, ConfigError> {
        let dims: Vec<usize> = match map.get("dims") {
            Some(s) => s
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| ConfigError::Value {
                    key: "dims".into(),
                    msg: e.to_string(),
                })?,
            None => return Err(ConfigError::Missing("dims".into())),
        };
        let m = value(map, "m")?.unwrap_or(1);
        let n = value(map, "n")?.unwrap_or(1);
        let workers =
            value(map, "workers")?.ok_or_else(|| ConfigError::Missing("workers".into()))?;
        let mut c = TrainConfig::new(dims, m, n, workers);
        if let Some(v) = value(map, "batch")? {
            c.batch = v;
        }
        if let Some(v) = value(map, "eta")? {
            c.eta = v;
        }
        if let Some(v) = value(map, "lambda")? {
            c.lambda = v;
        }
        if let Some(v) = value(map, "iterations")? {
            c.iterations = v;
        }
        if let Some(v) = value(map, "seed")? {
            c.seed = v;
        }
        if let Some(v) = value(map, "d1")? {
            c.d1 = v;
        }
        if let Some(v) = value(map, "d2")? {
            c.d2 = v;
        }
        if let Some(v) = value(map, "checkpoint_interval")? {
            c.checkpoint_interval = v;
        }
        if let Some(v) = value(map, "alpha")? {
            c.alpha = v;
        }
        if let Some(v) = value(map, "beta")? {
            c.beta = v;
        }
        if let Some(v) = value(map, "max_rollbacks")? {
            c.max_rollbacks = v;
        }
        if let Some(v) = map.get("checkpoint_dir") {
            c.checkpoint_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("substitution") {
            c.substitution = Substitution::parse(v).ok_or_else(|| ConfigError::Value {
                key: "substitution".into(),
                msg: format!("`{v}` is not uvn or vum"),
            })?;
        }
        if let Some(v) = map.get("mode") {
            c.mode = DecodeMode::parse(v).ok_or_else(|| ConfigError::Value {
                key: "mode".into(),
                msg: format!("`{v}` is not adversarial or probabilistic"),
            })?;
        }
        let beta_kl: Option<f64> = value(map, "beta_kl")?;
        let rho: Option<f64> = value(map, "rho")?;
        if autoencoder {
            c.objective = Objective::SparseAutoencoder {
                beta_kl: beta_kl.unwrap_or(0.1),
                rho: rho.unwrap_or(0.1),
            };
        } else if beta_kl.is_some() || rho.is_some() {
            return Err(ConfigError::Value {
                key: "beta_kl".into(),
                msg: "sparsity settings only apply to the autoencoder command".into(),
            });
        }
        let mut random = Vec::new();
        for (key, step) in [
            ("random_o1", Step::O1),
            ("random_o2", Step::O2),
            ("random_o3", Step::O3),
            ("random_c1", Step::C1),
            ("random_c2", Step::C2),
        ] {
            if let Some(count) = value::<usize>(map, key)? {
                if count > 0 {
                    random.push((step, count));
                }
            }
        }
        let fault_sigma = value(map, "fault_sigma")?.unwrap_or(1.0);
        Ok(Self {
            config: c,
            random,
            fault_sigma,
        })
    }

    /// Every setting after defaults and overrides, sorted by key.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let c = &self.config;
        let mut v: Vec<(String, String)> = vec![
            ("alpha".into(), c.alpha.to_string()),
            ("batch".into(), c.batch.to_string()),
            ("beta".into(), c.beta.to_string()),
            (
                "checkpoint_interval".into(),
                c.checkpoint_interval.to_string(),
            ),
            ("d1".into(), c.d1.to_string()),
            ("d2".into(), c.d2.to_string()),
            (
                "dims".into(),
                c.dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eta".into(), c.eta.to_string()),
            ("fault_sigma".into(), self.fault_sigma.to_string()),
            ("iterations".into(), c.iterations.to_string()),
            ("lambda".into(), c.lambda.to_string()),
            ("m".into(), c.m.to_string()),
            ("max_rollbacks".into(), c.max_rollbacks.to_string()),
            ("mode".into(), c.mode.name().into()),
            ("n".into(), c.n.to_string()),
            ("seed".into(), c.seed.to_string()),
            ("substitution".into(), c.substitution.name().into()),
            ("workers".into(), c.workers.to_string()),
        ];
        for (step, count) in &self.random {
            v.push((
                format!("random_{}", step.name().to_ascii_lowercase()),
                count.to_string(),
            ));
        }
        if let Objective::SparseAutoencoder { beta_kl, rho } = c.objective {
            v.push(("beta_kl".into(), beta_kl.to_string()));
            v.push(("rho".into(), rho.to_string()));
        }
        v.sort();
        v
    }

    /// Random faults from the config merged with an explicit schedule.
    pub fn schedule(&self, explicit: Option<FaultSchedule>) -> FaultSchedule {
        let c = &self.config;
        let mut s = FaultSchedule::random(
            c.iterations,
            c.dims.len() - 1,
            c.workers,
            &self.random,
            self.fault_sigma,
            c.seed ^ 0x5eed,
        );
        if let Some(e) = explicit {
            s.merge(e);
        }
        s
    }
}

/// Parses a fault file: one `iteration layer step worker kind [param]` per
/// line, where `kind` is `erase`, `gaussian <sigma>` or `adversarial <seed>`.
pub fn parse_faults(text: &str) -> Result<FaultSchedule, ConfigError> {
    let mut s = FaultSchedule::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError::Syntax { line: i + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 5 {
            return Err(err(format!(
                "expected `iteration layer step worker kind [param]`, got `{line}`"
            )));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| err(format!("`{s}`: {e}")));
        let (k, l, w) = (num(f[0])?, num(f[1])?, num(f[3])?);
        let step = Step::parse(f[2]).ok_or_else(|| err(format!("unknown step `{}`", f[2])))?;
        let spec = match (f[4].to_ascii_lowercase().as_str(), f.get(5)) {
            ("erase", None) => FaultSpec::Erase,
            ("gaussian", Some(p)) => FaultSpec::Gaussian {
                sigma: p.parse().map_err(|e| err(format!("sigma `{p}`: {e}")))?,
            },
            ("adversarial", Some(p)) => FaultSpec::AdversarialValue {
                seed: p.parse().map_err(|e| err(format!("seed `{p}`: {e}")))?,
            },
            _ => return Err(err(format!("bad fault kind in `{line}`"))),
        };
        s.add(k, l, step, w, spec);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing() {
        let m = parse_kv("# c\nm = 2\n n=3 # trailing\n\n", TRAIN_KEYS).unwrap();
        assert_eq!(m["m"], "2");
        assert_eq!(m["n"], "3");
        assert!(matches!(
            parse_kv("bogus = 1", TRAIN_KEYS),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            parse_kv("m 2", TRAIN_KEYS),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(parse_kv("m=1\nm=2", TRAIN_KEYS).is_err());
    }

    #[test]
    fn train_spec_defaults_and_errors() {
        let m = parse_kv("dims = 4,4\nworkers = 5\nm = 2\nn = 2", TRAIN_KEYS).unwrap();
        let s = TrainSpec::from_map(&m, false).unwrap();
        assert_eq!(s.config.dims, vec![4, 4]);
        assert!(s
            .resolved()
            .iter()
            .any(|(k, v)| k == "mode" && v == "probabilistic"));
        let m = parse_kv("dims = 4,x\nworkers = 5", TRAIN_KEYS).unwrap();
        assert!(TrainSpec::from_map(&m, false).is_err());
        let m = parse_kv("dims = 4,4", TRAIN_KEYS).unwrap();
        assert!(matches!(
            TrainSpec::from_map(&m, false),
            Err(ConfigError::Missing(_))
        ));
    }

    #[test]
    fn fault_file() {
        let s =
            parse_faults("7 2 O1 3 gaussian 1.5\n1 1 o3 0 erase # x\n2 1 DECODE 4 adversarial 9")
                .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(
            s.plan(7, 2).for_worker(Step::O1, 3),
            Some(FaultSpec::Gaussian { sigma: 1.5 })
        );
        assert!(parse_faults("1 1 O9 0 erase").is_err());
        assert!(parse_faults("1 1 O1 0 gaussian").is_err());
    }
}
