//! Line-oriented scenario files.
//!
//! ```text
//! # stress profile, one timed corruption on replica 0
//! replicas=5
//! loss_prob=0.15
//! delay_ms=1-20
//! inject point=NET_MSG_RECEIVED mode=timed delay_ms=10000 replicas=0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use thiserror::Error;

use super::{InjectionPoint, InjectionSpec, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub replicas: usize,
    pub window: u64,
    pub loss_prob: f64,
    pub dup_prob: f64,
    pub delay_ms: (u64, u64),
    pub ops_per_replica: u64,
    pub batch: usize,
    pub seed: Option<u64>,
    /// Client operations per second arriving at each replica.
    pub rate: f64,
    /// Transitions between checkpoints; `None` keeps the replica default.
    pub checkpoint_every: Option<u64>,
    pub injections: Vec<InjectionSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            replicas: 5,
            window: 100,
            loss_prob: 0.15,
            dup_prob: 0.02,
            delay_ms: (1, 20),
            ops_per_replica: 5000,
            batch: 10,
            seed: None,
            rate: 250.0,
            checkpoint_every: None,
            injections: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: malformed directive `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: `{key}` = {value} out of range")]
    OutOfRange {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: missing `{key}`")]
    Missing { line: usize, key: String },
}

fn num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn prob(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let p: f64 = num(line, key, value)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(ConfigError::OutOfRange {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(p)
}

fn split_kv(line: usize, tok: &str) -> Result<(&str, &str), ConfigError> {
    tok.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| ConfigError::Malformed {
            line,
            text: tok.to_string(),
        })
}

fn out_of_range(line: usize, key: &str, value: &str) -> ConfigError {
    ConfigError::OutOfRange {
        line,
        key: key.to_string(),
        value: value.to_string(),
    }
}

fn parse_inject(line: usize, rest: &str) -> Result<InjectionSpec, ConfigError> {
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = split_kv(line, tok)?;
        if !matches!(k, "point" | "mode" | "delay_ms" | "p" | "replicas" | "action") {
            return Err(ConfigError::UnknownKey {
                line,
                key: k.to_string(),
            });
        }
        kv.insert(k, v);
    }
    let need = |k: &str| {
        kv.get(k).copied().ok_or_else(|| ConfigError::Missing {
            line,
            key: k.to_string(),
        })
    };
    let point_s = need("point")?;
    let point: InjectionPoint = point_s.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: "point".into(),
        value: point_s.into(),
    })?;
    let mode = match need("mode")? {
        "timed" => Mode::SingleTimed {
            delay_ms: num(line, "delay_ms", need("delay_ms")?)?,
        },
        "prob" => Mode::Probability {
            p: prob(line, "p", need("p")?)?,
        },
        other => {
            return Err(ConfigError::BadValue {
                line,
                key: "mode".into(),
                value: other.into(),
            })
        }
    };
    let replicas = match kv.get("replicas").copied().unwrap_or("all") {
        "all" => None,
        list => {
            let mut set = BTreeSet::new();
            for id in list.split(',') {
                set.insert(num(line, "replicas", id)?);
            }
            Some(set)
        }
    };
    let mut params = BTreeMap::new();
    if let Some(a) = kv.get("action") {
        if point != InjectionPoint::AppAddElement {
            return Err(ConfigError::UnknownKey {
                line,
                key: "action".into(),
            });
        }
        if !matches!(*a, "skip" | "replace") {
            return Err(ConfigError::BadValue {
                line,
                key: "action".into(),
                value: a.to_string(),
            });
        }
        params.insert("action".to_string(), a.to_string());
    }
    Ok(InjectionSpec {
        point,
        mode,
        replicas,
        params,
    })
}

/// Parses a scenario file. Keys not given keep their [`Scenario::default`]
/// value; an empty file is a fault-free run with the stress profile.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let mut sc = Scenario::default();
    let mut inject_lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("inject ") {
            sc.injections.push(parse_inject(line, rest)?);
            inject_lines.push(line);
            continue;
        }
        let (k, v) = split_kv(line, body)?;
        match k {
            "replicas" => {
                sc.replicas = num(line, k, v)?;
                if sc.replicas == 0 {
                    return Err(out_of_range(line, k, v));
                }
            }
            "window" => {
                sc.window = num(line, k, v)?;
                if sc.window == 0 {
                    return Err(out_of_range(line, k, v));
                }
            }
            "loss_prob" => sc.loss_prob = prob(line, k, v)?,
            "dup_prob" => sc.dup_prob = prob(line, k, v)?,
            "delay_ms" => {
                let (a, b) = v.split_once('-').ok_or_else(|| ConfigError::BadValue {
                    line,
                    key: k.into(),
                    value: v.into(),
                })?;
                let (a, b): (u64, u64) = (num(line, k, a.trim())?, num(line, k, b.trim())?);
                if a > b {
                    return Err(out_of_range(line, k, v));
                }
                sc.delay_ms = (a, b);
            }
            "ops_per_replica" => sc.ops_per_replica = num(line, k, v)?,
            "batch" => {
                sc.batch = num(line, k, v)?;
                if sc.batch == 0 {
                    return Err(out_of_range(line, k, v));
                }
            }
            "seed" => sc.seed = Some(num(line, k, v)?),
            "checkpoint_every" => {
                let c: u64 = num(line, k, v)?;
                if c == 0 {
                    return Err(out_of_range(line, k, v));
                }
                sc.checkpoint_every = Some(c);
            }
            "rate" => {
                sc.rate = num(line, k, v)?;
                if !(sc.rate > 0.0 && sc.rate.is_finite()) {
                    return Err(out_of_range(line, k, v));
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: k.to_string(),
                })
            }
        }
    }
    for (spec, &line) in sc.injections.iter().zip(&inject_lines) {
        if let Some(ids) = &spec.replicas {
            if let Some(bad) = ids.iter().find(|&&r| r as usize >= sc.replicas) {
                return Err(out_of_range(line, "replicas", &bad.to_string()));
            }
        }
    }
    Ok(sc)
}
