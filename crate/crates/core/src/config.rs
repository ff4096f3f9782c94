//! Flat `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Unknown keys and repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::plasticity::PlasticityConfig;
use crate::pong::RacketParams;
use crate::synthetic::SyntheticConfig;

/// Parses `key = value` lines into a map.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

/// A configuration that can be read from and written as key/value pairs.
pub trait KeyValue: Sized {
    /// Applies one assignment. Returns `Ok(false)` for an unknown key.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;
    fn pairs(&self) -> Vec<(&'static str, String)>;
    fn check(&self) -> Result<()>;

    fn dump(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Overrides fields of `self` with the assignments in `text`.
    fn apply_text(mut self, text: &str) -> Result<Self> {
        for (k, v) in parse_pairs(text)? {
            if !self.set(&k, &v)? {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        self.check()?;
        Ok(self)
    }
}

impl KeyValue for PlasticityConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "d_bar" | "d_h_bar" | "d_d_bar" => self.set_d_bar(parse_value(key, value)?),
            "w_min" => self.w_min = parse_value(key, value)?,
            "w_max" => self.w_max = parse_value(key, value)?,
            "d_s" => self.d_s = parse_value(key, value)?,
            "t_p" => self.t_p = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_bar", self.d_h_bar().to_string()),
            ("w_min", self.w_min.to_string()),
            ("w_max", self.w_max.to_string()),
            ("d_s", self.d_s.to_string()),
            ("t_p", self.t_p.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl KeyValue for GaConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "population_size" => self.population_size = parse_value(key, value)?,
            "elitism_fraction" => self.elitism_fraction = parse_value(key, value)?,
            "mutation_prob" => self.mutation_prob = parse_value(key, value)?,
            "stagnation_generations" => self.stagnation_generations = parse_value(key, value)?,
            "max_generations" => {
                self.max_generations = match value {
                    "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "eval_window_steps" => self.eval_window_steps = parse_value(key, value)?,
            "t_p" => self.t_p = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "range_d_h_bar" => self.ranges.d_h_bar = parse_range(key, value)?,
            "range_neg_w_min" => self.ranges.neg_w_min = parse_range(key, value)?,
            "range_w_max" => self.ranges.w_max = parse_range(key, value)?,
            "range_d_s" => self.ranges.d_s = parse_range(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let range = |(lo, hi): (f64, f64)| format!("{lo},{hi}");
        vec![
            ("population_size", self.population_size.to_string()),
            ("elitism_fraction", self.elitism_fraction.to_string()),
            ("mutation_prob", self.mutation_prob.to_string()),
            ("stagnation_generations", self.stagnation_generations.to_string()),
            (
                "max_generations",
                self.max_generations.map_or("none".into(), |m| m.to_string()),
            ),
            ("eval_window_steps", self.eval_window_steps.to_string()),
            ("t_p", self.t_p.to_string()),
            ("seed", self.seed.to_string()),
            ("range_d_h_bar", range(self.ranges.d_h_bar)),
            ("range_neg_w_min", range(self.ranges.neg_w_min)),
            ("range_w_max", range(self.ranges.w_max)),
            ("range_d_s", range(self.ranges.d_s)),
        ]
    }

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

fn parse_range(key: &str, value: &str) -> Result<(f64, f64)> {
    let (lo, hi) = value
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("`{key}` expects `lo,hi`")))?;
    Ok((parse_value(key, lo.trim())?, parse_value(key, hi.trim())?))
}

impl KeyValue for SyntheticConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "channels" => self.channels = parse_value(key, value)?,
            "cause_channels" => {
                self.cause_channels = value
                    .split(',')
                    .map(|c| parse_value(key, c.trim()))
                    .collect::<Result<_>>()?
            }
            "lag" => self.lag = parse_value(key, value)?,
            "noise_prob" => self.noise_prob = parse_value(key, value)?,
            "min_gap" => self.min_gap = parse_value(key, value)?,
            "max_gap" => self.max_gap = parse_value(key, value)?,
            "duration_steps" => self.duration_steps = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let causes: Vec<String> = self.cause_channels.iter().map(|c| c.to_string()).collect();
        vec![
            ("channels", self.channels.to_string()),
            ("cause_channels", causes.join(",")),
            ("lag", self.lag.to_string()),
            ("noise_prob", self.noise_prob.to_string()),
            ("min_gap", self.min_gap.to_string()),
            ("max_gap", self.max_gap.to_string()),
            ("duration_steps", self.duration_steps.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl KeyValue for RacketParams {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "racket_speed" => self.speed = parse_value(key, value)?,
            "policy_period" => self.policy_period = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("racket_speed", self.speed.to_string()),
            ("policy_period", self.policy_period.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.speed >= 0.0) || self.policy_period == 0 {
            return Err(Error::Config(format!(
                "bad racket parameters: speed {}, period {}",
                self.speed, self.policy_period
            )));
        }
        Ok(())
    }
}
